#include "iepg/gec.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace iepg {

namespace {
constexpr double kSlope = 0.2;
constexpr int k2K = 2 * kNumKeypoints;
}

GecModel::GecModel(Rng& rng, const GecConfig& cfg_) : cfg(cfg_) {
  enc1 = Linear(rng, k2K, cfg.feat);
  enc2 = Linear(rng, cfg.feat, cfg.feat);
  enc3 = Linear(rng, cfg.feat, cfg.feat);
  mix1 = Linear(rng, 2 * cfg.feat, cfg.feat);
  mix2 = Linear(rng, cfg.feat, cfg.feat);
  starter = Linear(rng, 3 * cfg.feat, cfg.feat);
  for (int l = 0; l < 3; ++l) {
    const int in = l == 0 ? cfg.feat : 2 * cfg.dh;
    fwd.emplace_back(rng, cfg.cell, in, cfg.dh);
    bwd.emplace_back(rng, cfg.cell, in, cfg.dh);
  }
  dec1 = Linear(rng, 2 * cfg.dh, cfg.dec_h1);
  dec2 = Linear(rng, cfg.dec_h1, cfg.dec_h2);
  dec3 = Linear(rng, cfg.dec_h2, k2K + kNumKeypoints);
  ds1 = Conv1dLayer(rng, k2K, cfg.disc_ch, 3, 1);
  ds2 = Conv1dLayer(rng, cfg.disc_ch, cfg.disc_ch, 3, 1);
  ds_out = Linear(rng, cfg.disc_ch, 1);
}

ParamList GecModel::gen_params() const {
  ParamList p;
  enc1.collect(p, "gec.enc1");
  enc2.collect(p, "gec.enc2");
  enc3.collect(p, "gec.enc3");
  mix1.collect(p, "gec.mix1");
  mix2.collect(p, "gec.mix2");
  starter.collect(p, "gec.starter");
  for (int l = 0; l < 3; ++l) {
    fwd[static_cast<std::size_t>(l)].collect(p, "gec.fwd" + std::to_string(l));
    bwd[static_cast<std::size_t>(l)].collect(p, "gec.bwd" + std::to_string(l));
  }
  dec1.collect(p, "gec.dec1");
  dec2.collect(p, "gec.dec2");
  dec3.collect(p, "gec.dec3");
  return p;
}

ParamList GecModel::disc_params() const {
  ParamList p;
  ds1.collect(p, "gec.ds1");
  ds2.collect(p, "gec.ds2");
  ds_out.collect(p, "gec.ds_out");
  return p;
}

ParamList GecModel::params() const {
  ParamList p = gen_params();
  ParamList d = disc_params();
  p.insert(p.end(), d.begin(), d.end());
  return p;
}

Tensor GecModel::encode_row(const Tensor& row) const {
  Tensor h = leaky_relu(enc1.forward(row), kSlope);
  h = leaky_relu(enc2.forward(h), kSlope);
  return enc3.forward(h);
}

Tensor GecModel::encode(const PoseSkeleton& p) const { return encode_row(p.to_row()); }

std::vector<Tensor> GecModel::bidir_layer(const std::vector<Tensor>& xs, int layer) const {
  const int T = static_cast<int>(xs.size());
  const RnnCell& cf = fwd[static_cast<std::size_t>(layer)];
  const RnnCell& cb = bwd[static_cast<std::size_t>(layer)];
  std::vector<Tensor> f(static_cast<std::size_t>(T)), b(static_cast<std::size_t>(T));
  Tensor h(Shape{1, cfg.dh}, 0.0);
  for (int t = 0; t < T; ++t) {
    h = cf.forward(xs[static_cast<std::size_t>(t)], h);
    f[static_cast<std::size_t>(t)] = h;
  }
  h = Tensor(Shape{1, cfg.dh}, 0.0);
  for (int t = T - 1; t >= 0; --t) {
    h = cb.forward(xs[static_cast<std::size_t>(t)], h);
    b[static_cast<std::size_t>(t)] = h;
  }
  std::vector<Tensor> out(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t)
    out[static_cast<std::size_t>(t)] =
        concat_cols({f[static_cast<std::size_t>(t)], b[static_cast<std::size_t>(t)]});
  return out;
}

std::vector<Tensor> GecModel::run_layers(std::vector<Tensor> xs) const {
  for (int l = 0; l < 3; ++l) xs = bidir_layer(xs, l);
  return xs;
}

std::vector<Tensor> GecModel::evolve(const Tensor& f_s, const Tensor& f_t, const Tensor& z,
                                     int T) const {
  if (T < 2) throw std::invalid_argument("evolve: sequence length must be >= 2, got " + std::to_string(T));
  Tensor mixed = mix2.forward(leaky_relu(mix1.forward(concat_cols({f_s, f_t})), kSlope));
  Tensor x0 = starter.forward(concat_cols({f_s, z, mixed}));
  std::vector<Tensor> xs(static_cast<std::size_t>(T), x0);  // tiled starter input
  return run_layers(std::move(xs));
}

Tensor GecModel::decode_coords(const Tensor& feat) const {
  Tensor h = leaky_relu(dec1.forward(feat), kSlope);
  h = leaky_relu(dec2.forward(h), kSlope);
  return slice_cols(dec3.forward(h), 0, k2K);
}

Tensor GecModel::decode_vis_logits(const Tensor& feat) const {
  Tensor h = leaky_relu(dec1.forward(feat), kSlope);
  h = leaky_relu(dec2.forward(h), kSlope);
  return slice_cols(dec3.forward(h), k2K, kNumKeypoints);
}

PoseSkeleton GecModel::decode_skeleton(const Tensor& feat) const {
  NoTape off;
  Tensor coords = decode_coords(feat);
  for (auto& v : coords.data()) v = std::clamp(v, 0.0, 1.0);  // image-unit range
  Tensor logits = decode_vis_logits(feat);
  std::array<std::uint8_t, kNumKeypoints> vis{};
  for (int k = 0; k < kNumKeypoints; ++k) vis[static_cast<std::size_t>(k)] = logits[k] > 0.0 ? 1 : 0;
  return PoseSkeleton::from_row(coords, vis);
}

Tensor GecModel::discriminate_rows(const Tensor& rows) const {
  if (rows.rank() != 2 || rows.dim(1) != k2K || rows.dim(0) < 1)
    throw std::invalid_argument("discriminate_rows: expected (T," + std::to_string(k2K) +
                                "), got " + shape_str(rows.shape()));
  Tensor x = transpose(rows);  // (2K, T)
  x = leaky_relu(ds1.forward(x), kSlope);
  x = leaky_relu(ds2.forward(x), kSlope);
  Tensor pooled = transpose(row_mean(x));  // (1, ch)
  return sigmoid(ds_out.forward(pooled));
}

double GecModel::seq_discriminate(const std::vector<PoseSkeleton>& seq) const {
  if (seq.empty()) throw std::invalid_argument("seq_discriminate: empty sequence");
  NoTape off;
  std::vector<Tensor> rows;
  rows.reserve(seq.size());
  for (const auto& s : seq) rows.push_back(s.to_row());
  return discriminate_rows(concat0(rows)).value();
}

std::vector<double> GecModel::seq_discriminate_batch(
    const std::vector<std::vector<PoseSkeleton>>& seqs) const {
  std::vector<double> out;
  out.reserve(seqs.size());
  for (const auto& s : seqs) out.push_back(seq_discriminate(s));
  return out;
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

namespace {

void check_scores(const char* op, const Tensor& s) {
  for (std::int64_t i = 0; i < s.size(); ++i)
    if (!(s[i] > 0.0 && s[i] < 1.0))
      throw std::invalid_argument(std::string(op) + ": score " + std::to_string(s[i]) +
                                  " outside (0,1)");
}

}  // namespace

Tensor loss_sadv(const Tensor& fake_scores, const Tensor& real_scores) {
  check_scores("loss_sadv", fake_scores);
  check_scores("loss_sadv", real_scores);
  Tensor fake_term = mean_all(log_t(add_scalar(neg(fake_scores), 1.0)));
  Tensor real_term = mean_all(log_t(real_scores));
  return add(fake_term, real_term);
}

Tensor loss_sadv_gen(const Tensor& fake_scores) {
  check_scores("loss_sadv_gen", fake_scores);
  return neg(mean_all(log_t(fake_scores)));
}

Tensor loss_ncons(const Tensor& coords_rows) {
  if (coords_rows.rank() != 2 || coords_rows.dim(0) < 2)
    throw std::invalid_argument("loss_ncons: need at least 2 frames, got " +
                                shape_str(coords_rows.shape()));
  const int T = coords_rows.dim(0);
  Tensor head = slice0(coords_rows, 0, T - 1);
  Tensor tail = slice0(coords_rows, 1, T - 1);
  return mean_all(square(sub(tail, head)));
}

Tensor loss_pose(const Tensor& pred_row, const PoseSkeleton& gt) {
  if (pred_row.size() != k2K)
    throw std::invalid_argument("loss_pose: keypoint count mismatch, got " +
                                shape_str(pred_row.shape()) + " expected 2K=" + std::to_string(k2K));
  std::vector<double> mask(static_cast<std::size_t>(k2K), 0.0);
  std::vector<double> gtv(static_cast<std::size_t>(k2K), 0.0);
  int visible = 0;
  for (int k = 0; k < kNumKeypoints; ++k) {
    if (!gt.visible(k)) continue;
    mask[static_cast<std::size_t>(2 * k)] = mask[static_cast<std::size_t>(2 * k + 1)] = 1.0;
    gtv[static_cast<std::size_t>(2 * k)] = gt.pts[static_cast<std::size_t>(k)].x;
    gtv[static_cast<std::size_t>(2 * k + 1)] = gt.pts[static_cast<std::size_t>(k)].y;
    ++visible;
  }
  Tensor m(Shape{1, k2K}, std::move(mask));
  Tensor g(Shape{1, k2K}, std::move(gtv));
  Tensor flat = reshape(pred_row, Shape{1, k2K});
  Tensor masked = mul(sub(flat, g), m);
  const double denom = std::max(1, 2 * visible);
  return mul_scalar(sum_all(square(masked)), 1.0 / denom);
}

Tensor loss_gec(const Tensor& sadv, const Tensor& ncons, const Tensor& pose, const GecWeights& w) {
  return add(add(mul_scalar(sadv, w.sadv), mul_scalar(ncons, w.ncons)), mul_scalar(pose, w.pose));
}

double loss_gec(double sadv, double ncons, double pose, const GecWeights& w) {
  return w.sadv * sadv + w.ncons * ncons + w.pose * pose;
}

std::vector<SemanticMap> gen_semantic_sequence(const Person& person,
                                               const std::vector<PoseSkeleton>& skeletons,
                                               int size) {
  std::vector<SemanticMap> out;
  out.reserve(skeletons.size());
  for (const auto& s : skeletons) out.push_back(render_semantics(person, s, size));
  return out;
}

double estimate_yaw_cos(const PoseSkeleton& s, double shoulder_hw) {
  if (!s.visible(kLShoulder) || !s.visible(kRShoulder)) return 0.0;
  const double sep = s.pts[kLShoulder].x - s.pts[kRShoulder].x;
  return std::clamp(sep / (2.0 * shoulder_hw), -1.0, 1.0);
}

}  // namespace iepg
