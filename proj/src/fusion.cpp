#include "iepg/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace iepg {

namespace {
constexpr double kSlope = 0.2;
}

SourceBundle make_source_bundle(const Person& person, const PoseSkeleton& skel, int size) {
  return make_source_bundle(render_image(person, skel, size), person, skel, size);
}

SourceBundle make_source_bundle(const Tensor& image, const Person& person,
                                const PoseSkeleton& skel, int size) {
  SourceBundle b;
  b.image = image;
  b.heatmaps = render_heatmaps(skel, size);
  b.semantics = render_semantics(person, skel, size).one_hot();
  return b;
}

TargetBundle make_target_bundle(const Person& person, const PoseSkeleton& skel, int size) {
  TargetBundle b;
  b.heatmaps = render_heatmaps(skel, size);
  b.semantics = render_semantics(person, skel, size).one_hot();
  return b;
}

// ---------------------------------------------------------------------------
// blocks
// ---------------------------------------------------------------------------

SfeBlock::SfeBlock(Rng& rng, int d, int heads_) {
  q = Linear(rng, d, d);
  k = Linear(rng, d, d);
  v = Linear(rng, d, d);
  o = Linear(rng, d, d);
  fcn1 = Linear(rng, d, 4 * d);
  fcn2 = Linear(rng, 4 * d, d);
  heads = heads_;
}

Tensor SfeBlock::forward(const Tensor& x) const {
  Tensor attn = o.forward(attention(q.forward(x), k.forward(x), v.forward(x), heads));
  Tensor f_hat = instance_norm_cols(add(x, attn));
  Tensor fc = fcn2.forward(leaky_relu(fcn1.forward(f_hat), kSlope));
  return instance_norm_cols(add(fc, f_hat));
}

void SfeBlock::collect(ParamList& out, const std::string& prefix) const {
  q.collect(out, prefix + ".q");
  k.collect(out, prefix + ".k");
  v.collect(out, prefix + ".v");
  o.collect(out, prefix + ".o");
  fcn1.collect(out, prefix + ".fcn1");
  fcn2.collect(out, prefix + ".fcn2");
}

TpkfBlock::TpkfBlock(Rng& rng, int d, int heads_, bool no_eada_) {
  sq = Linear(rng, d, d);
  sk = Linear(rng, d, d);
  sv = Linear(rng, d, d);
  so = Linear(rng, d, d);
  cq = Linear(rng, d, d);
  ck = Linear(rng, d, d);
  cv = Linear(rng, d, d);
  co = Linear(rng, d, d);
  fcn1 = Linear(rng, d, 4 * d);
  fcn2 = Linear(rng, 4 * d, d);
  heads = heads_;
  no_eada = no_eada_;
}

Tensor TpkfBlock::forward(const Tensor& f_prev, const Tensor& f_s,
                          const Tensor& value_tokens) const {
  if (f_s.dim(0) != f_prev.dim(0))
    throw std::invalid_argument("tpkf: token count mismatch, fused " + shape_str(f_prev.shape()) +
                                " vs source " + shape_str(f_s.shape()));
  Tensor self_attn = so.forward(attention(sq.forward(f_prev), sk.forward(f_prev),
                                          sv.forward(f_prev), heads));
  Tensor f_hat = instance_norm_cols(add(f_prev, self_attn));
  // values from the evolution-tendency path, queries from the fused path,
  // keys from the source path
  Tensor cross = co.forward(attention(cq.forward(f_hat), ck.forward(f_s),
                                      cv.forward(value_tokens), heads));
  Tensor f_bar = add(cross, f_hat);
  Tensor mixed = no_eada ? f_bar : adain(f_bar, f_hat);
  Tensor fc = fcn2.forward(leaky_relu(fcn1.forward(mixed), kSlope));
  return instance_norm_cols(add(fc, mixed));
}

void TpkfBlock::collect(ParamList& out, const std::string& prefix) const {
  sq.collect(out, prefix + ".sq");
  sk.collect(out, prefix + ".sk");
  sv.collect(out, prefix + ".sv");
  so.collect(out, prefix + ".so");
  cq.collect(out, prefix + ".cq");
  ck.collect(out, prefix + ".ck");
  cv.collect(out, prefix + ".cv");
  co.collect(out, prefix + ".co");
  fcn1.collect(out, prefix + ".fcn1");
  fcn2.collect(out, prefix + ".fcn2");
}

// ---------------------------------------------------------------------------
// encoder / decoder / discriminator
// ---------------------------------------------------------------------------

TokenEncoder::TokenEncoder(Rng& rng, int in_ch, int c1_ch, int d_, int image_size) {
  c1 = Conv2dLayer(rng, in_ch, c1_ch, 3, 1, 1);
  c2 = Conv2dLayer(rng, c1_ch, d_, 3, 1, 1);
  d = d_;
  grid = image_size / 4;
}

Tensor TokenEncoder::forward(const Tensor& x) const {
  Tensor h = avg_pool2(leaky_relu(instance_norm(c1.forward(x)), kSlope));
  h = avg_pool2(leaky_relu(instance_norm(c2.forward(h)), kSlope));  // (d, H/4, W/4)
  return transpose(reshape(h, Shape{d, grid * grid}));              // (tokens, d)
}

void TokenEncoder::collect(ParamList& out, const std::string& prefix) const {
  c1.collect(out, prefix + ".c1");
  c2.collect(out, prefix + ".c2");
}

ImageDecoder::ImageDecoder(Rng& rng, int d_, int c1, int c2, int image_size) {
  d1 = Conv2dLayer(rng, d_, c1, 3, 1, 1);
  d2 = Conv2dLayer(rng, c1, c2, 3, 1, 1);
  out = Conv2dLayer(rng, c2, 3, 3, 1, 1);
  d = d_;
  grid = image_size / 4;
}

Tensor ImageDecoder::forward(const Tensor& tokens) const {
  Tensor h = reshape(transpose(tokens), Shape{d, grid, grid});
  h = leaky_relu(instance_norm(d1.forward(upsample2(h))), kSlope);
  h = leaky_relu(instance_norm(d2.forward(upsample2(h))), kSlope);
  return sigmoid(out.forward(h));
}

void ImageDecoder::collect(ParamList& out_list, const std::string& prefix) const {
  d1.collect(out_list, prefix + ".d1");
  d2.collect(out_list, prefix + ".d2");
  out.collect(out_list, prefix + ".out");
}

PatchDiscriminator::PatchDiscriminator(Rng& rng, int in_ch, int c) {
  c1 = Conv2dLayer(rng, in_ch, c, 3, 1, 1);
  c2 = Conv2dLayer(rng, c, 2 * c, 3, 1, 1);
  c3 = Conv2dLayer(rng, 2 * c, 1, 3, 1, 1);
}

Tensor PatchDiscriminator::score_map(const Tensor& img, const TargetBundle& cond) const {
  Tensor x = concat0({img, cond.heatmaps, cond.semantics});
  x = avg_pool2(leaky_relu(c1.forward(x), kSlope));
  x = avg_pool2(leaky_relu(c2.forward(x), kSlope));
  return sigmoid(c3.forward(x));
}

Tensor PatchDiscriminator::score(const Tensor& img, const TargetBundle& cond) const {
  return mean_all(score_map(img, cond));
}

void PatchDiscriminator::collect(ParamList& out, const std::string& prefix) const {
  c1.collect(out, prefix + ".c1");
  c2.collect(out, prefix + ".c2");
  c3.collect(out, prefix + ".c3");
}

// ---------------------------------------------------------------------------
// model
// ---------------------------------------------------------------------------

FusionModel::FusionModel(Rng& rng, const FusionConfig& cfg_) : cfg(cfg_) {
  if (cfg.image_size % 4 != 0)
    throw std::invalid_argument("FusionModel: image size must be divisible by 4");
  const int in_ch = 3 + kNumKeypoints + kNumLabels;
  src_enc = TokenEncoder(rng, in_ch, cfg.enc_c1, cfg.d, cfg.image_size);
  fus_enc = TokenEncoder(rng, in_ch, cfg.enc_c1, cfg.d, cfg.image_size);
  pos_src = Tensor::randu(rng, Shape{cfg.tokens(), cfg.d}, -0.02, 0.02);
  pos_src.set_requires_grad(true);
  pos_fus = Tensor::randu(rng, Shape{cfg.tokens(), cfg.d}, -0.02, 0.02);
  pos_fus.set_requires_grad(true);
  for (int i = 0; i < cfg.depth; ++i) sfe.emplace_back(rng, cfg.d, cfg.n_heads);
  if (cfg.no_tpkf) {
    for (int i = 0; i < cfg.depth; ++i) tpkf_self_only.emplace_back(rng, cfg.d, cfg.n_heads);
  } else {
    for (int i = 0; i < cfg.depth; ++i) tpkf.emplace_back(rng, cfg.d, cfg.n_heads, cfg.no_eada);
  }
  IecConfig ic;
  ic.in_channels = 3 * cfg.queue_capacity;
  ic.base = cfg.iec_base;
  ic.depth = cfg.iec_depth;
  ic.image_size = cfg.image_size;
  ic.multi_scale = !cfg.no_msc;
  iec = IecStack(rng, ic);
  iec_proj = Conv2dLayer(rng, iec.out_channels(), cfg.d, 1, 1, 0);
  dec = ImageDecoder(rng, cfg.d, cfg.dec_c1, cfg.dec_c2, cfg.image_size);
  disc = PatchDiscriminator(rng, in_ch, cfg.disc_c);
}

ParamList FusionModel::gen_params() const {
  ParamList p;
  src_enc.collect(p, "fusion.src_enc");
  fus_enc.collect(p, "fusion.fus_enc");
  p.emplace_back("fusion.pos_src", pos_src);
  p.emplace_back("fusion.pos_fus", pos_fus);
  for (std::size_t i = 0; i < sfe.size(); ++i) sfe[i].collect(p, "fusion.sfe" + std::to_string(i));
  for (std::size_t i = 0; i < tpkf.size(); ++i) tpkf[i].collect(p, "fusion.tpkf" + std::to_string(i));
  for (std::size_t i = 0; i < tpkf_self_only.size(); ++i)
    tpkf_self_only[i].collect(p, "fusion.tpkf_self" + std::to_string(i));
  if (!cfg.no_iec) {
    iec.collect(p, "fusion.iec");
    iec_proj.collect(p, "fusion.iec_proj");
  }
  dec.collect(p, "fusion.dec");
  return p;
}

ParamList FusionModel::disc_params() const {
  ParamList p;
  disc.collect(p, "fusion.disc");
  return p;
}

ParamList FusionModel::params() const {
  ParamList p = gen_params();
  ParamList d = disc_params();
  p.insert(p.end(), d.begin(), d.end());
  return p;
}

std::int64_t FusionModel::gen_param_count() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : gen_params()) n += t.size();
  return n;
}

Tensor FusionModel::source_path(const SourceBundle& src) const {
  Tensor x = concat0({src.image, src.heatmaps, src.semantics});
  Tensor tokens = add(src_enc.forward(x), pos_src);
  for (const auto& b : sfe) tokens = b.forward(tokens);
  return tokens;
}

Tensor FusionModel::iec_tokens(const Tensor& iec_features) const {
  Tensor h = iec_proj.forward(iec_features);  // (d, s, s)
  int s = h.dim(1);
  while (s < cfg.grid()) {  // deep stacks downsample past /4; restore alignment
    h = upsample2(h);
    s *= 2;
  }
  if (s != cfg.grid())
    throw std::invalid_argument("iec_tokens: cannot align IEC grid " + std::to_string(s) +
                                " with token grid " + std::to_string(cfg.grid()));
  // normalized to the same per-channel scale as the attention-path tokens,
  // otherwise the value path starts orders of magnitude below the fused path
  return instance_norm_cols(transpose(reshape(h, Shape{cfg.d, cfg.tokens()})));
}

Tensor FusionModel::synthesize_step(const SourceBundle& src, const TargetBundle& tgt,
                                    const Tensor& iec_feat, const Tensor& f_s) const {
  Tensor x = concat0({src.image, tgt.heatmaps, tgt.semantics});
  Tensor f = add(fus_enc.forward(x), pos_fus);
  if (cfg.no_tpkf) {
    for (const auto& b : tpkf_self_only) f = b.forward(f);
  } else {
    Tensor values = cfg.no_iec ? f_s : iec_tokens(iec_feat);
    for (const auto& b : tpkf) f = b.forward(f, f_s, values);
  }
  return dec.forward(f);
}

Tensor FusionModel::synthesize_step(const SourceBundle& src, const TargetBundle& tgt,
                                    const Tensor& iec_feat) const {
  return synthesize_step(src, tgt, iec_feat, source_path(src));
}

double FusionModel::image_discriminate(const Tensor& img, const TargetBundle& cond) const {
  NoTape off;
  return disc.score(img, cond).value();
}

// ---------------------------------------------------------------------------
// full incremental synthesis
// ---------------------------------------------------------------------------

SynthResult synthesize_full(const Person& person, const SourceBundle& src,
                            const PoseSkeleton& src_skel, const PoseSkeleton& tgt_skel,
                            const GecModel& gec, const FusionModel& model,
                            const SynthOptions& opt) {
  if (opt.frames < 2)
    throw std::invalid_argument("synthesize_full: need at least 2 evolution frames");
  NoTape off;
  const int T = opt.frames;
  const int size = model.cfg.image_size;

  // guiding skeletons: given endpoints, recurrent evolution for the interior
  std::vector<PoseSkeleton> guide(static_cast<std::size_t>(T));
  guide.front() = src_skel;
  guide.back() = tgt_skel;
  if (T > 2) {
    Rng zrng(opt.z_seed);
    Tensor z = Tensor::randn(zrng, Shape{1, gec.cfg.feat});
    std::vector<Tensor> feats = gec.evolve(gec.encode(src_skel), gec.encode(tgt_skel), z, T);
    for (int t = 1; t < T - 1; ++t)
      guide[static_cast<std::size_t>(t)] = gec.decode_skeleton(feats[static_cast<std::size_t>(t)]);
  }

  SynthResult res;
  res.seq.push_back(EvoFrame{src_skel, render_semantics(person, src_skel, size), src.image});

  IntermediateQueue queue;
  queue.capacity = model.cfg.queue_capacity;
  queue = update_queue(queue, src.image);

  Tensor f_s = model.source_path(src);
  for (int t = 1; t < T; ++t) {
    if (t < T - 1 &&
        std::find(opt.skip.begin(), opt.skip.end(), t) != opt.skip.end())
      continue;
    const PoseSkeleton& gskel = guide[static_cast<std::size_t>(t)];
    SemanticMap gsem = render_semantics(person, gskel, size);
    TargetBundle tgt;
    tgt.heatmaps = render_heatmaps(gskel, size);
    tgt.semantics = gsem.one_hot();
    Tensor iec_feat;
    if (!model.cfg.no_tpkf && !model.cfg.no_iec) iec_feat = iec_forward(queue, model.iec);
    Tensor img = model.synthesize_step(src, tgt, iec_feat, f_s);
    queue = update_queue(queue, img);
    res.seq.push_back(EvoFrame{gskel, std::move(gsem), img});
  }
  res.final_image = res.seq.back().image;
  return res;
}

}  // namespace iepg
