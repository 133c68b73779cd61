#include "iepg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "json.hpp"

namespace iepg {

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kK1 = 0.01, kK2 = 0.03, kL = 1.0;

std::vector<double> gaussian_window() {
  std::vector<double> w(kWin * kWin);
  const int c = kWin / 2;
  double sum = 0.0;
  for (int i = 0; i < kWin; ++i)
    for (int j = 0; j < kWin; ++j) {
      const double dy = i - c, dx = j - c;
      w[static_cast<std::size_t>(i) * kWin + j] = std::exp(-(dx * dx + dy * dy) / (2.0 * kSigma * kSigma));
      sum += w[static_cast<std::size_t>(i) * kWin + j];
    }
  for (auto& v : w) v /= sum;
  return w;
}

std::vector<double> to_gray(const Tensor& img) {
  const int h = img.dim(1), w = img.dim(2);
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  std::vector<double> g(static_cast<std::size_t>(plane));
  for (std::int64_t i = 0; i < plane; ++i)
    g[static_cast<std::size_t>(i)] = (img[i] + img[plane + i] + img[2 * plane + i]) / 3.0;
  return g;
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || a.dim(0) != 3 || a.shape() != b.shape())
    throw std::invalid_argument("ssim: expected matching (3,H,W) images, got " +
                                shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const int h = a.dim(1), w = a.dim(2);
  if (h < kWin || w < kWin)
    throw std::invalid_argument("ssim: image " + shape_str(a.shape()) +
                                " smaller than the 11x11 window");
  static const std::vector<double> win = gaussian_window();
  const std::vector<double> x = to_gray(a);
  const std::vector<double> y = to_gray(b);
  const double c1 = (kK1 * kL) * (kK1 * kL);
  const double c2 = (kK2 * kL) * (kK2 * kL);

  double total = 0.0;
  std::int64_t count = 0;
  for (int i = 0; i + kWin <= h; ++i)
    for (int j = 0; j + kWin <= w; ++j) {
      double mx = 0.0, my = 0.0, mxx = 0.0, myy = 0.0, mxy = 0.0;
      for (int u = 0; u < kWin; ++u)
        for (int v = 0; v < kWin; ++v) {
          const double wt = win[static_cast<std::size_t>(u) * kWin + v];
          const double xv = x[static_cast<std::size_t>(i + u) * w + (j + v)];
          const double yv = y[static_cast<std::size_t>(i + u) * w + (j + v)];
          mx += wt * xv;
          my += wt * yv;
          mxx += wt * xv * xv;
          myy += wt * yv * yv;
          mxy += wt * xv * yv;
        }
      const double vx = mxx - mx * mx;
      const double vy = myy - my * my;
      const double cxy = mxy - mx * my;
      const double num = (2.0 * mx * my + c1) * (2.0 * cxy + c2);
      const double den = (mx * mx + my * my + c1) * (vx + vy + c2);
      total += num / den;
      ++count;
    }
  return total / static_cast<double>(count);
}

double psnr(const Tensor& a, const Tensor& b, double peak, double cap_db) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("psnr: shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  double mse = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.size());
  if (mse == 0.0) return cap_db;
  return std::min(cap_db, 10.0 * std::log10(peak * peak / mse));
}

void MetricReport::finalize() {
  mean_ssim = 0.0;
  mean_psnr = 0.0;
  if (pairs.empty()) return;
  for (const auto& p : pairs) {
    mean_ssim += p.ssim;
    mean_psnr += p.psnr;
  }
  mean_ssim /= static_cast<double>(pairs.size());
  mean_psnr /= static_cast<double>(pairs.size());
}

std::string MetricReport::to_json() const {
  nlohmann::json j;
  j["config"] = {{"frames", frames}, {"variant", variant}, {"seed", seed}};
  j["mean"] = {{"ssim", mean_ssim}, {"psnr", mean_psnr},
               {"fid", nullptr}, {"lpips", nullptr}};  // reserved, out of scope
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : pairs)
    arr.push_back({{"person", p.person},
                   {"source_yaw", p.source_yaw},
                   {"target_yaw", p.target_yaw},
                   {"ssim", p.ssim},
                   {"psnr", p.psnr}});
  j["pairs"] = arr;
  return j.dump(1);
}

std::string MetricReport::to_table() const {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-8s %-10s %-10s %-10s %-10s\n", "person", "src_yaw",
                "tgt_yaw", "ssim", "psnr");
  out += line;
  for (const auto& p : pairs) {
    std::snprintf(line, sizeof(line), "%-8d %-10.1f %-10.1f %-10.4f %-10.3f\n", p.person,
                  p.source_yaw, p.target_yaw, p.ssim, p.psnr);
    out += line;
  }
  std::snprintf(line, sizeof(line), "%-8s %-10s %-10s %-10.4f %-10.3f\n", "mean", "-", "-",
                mean_ssim, mean_psnr);
  out += line;
  return out;
}

MetricReport eval_report(const Dataset& ds, const GecModel& gec, const FusionModel& model,
                         const EvalOptions& opt) {
  MetricReport rep;
  rep.frames = opt.frames;
  rep.seed = ds.seed;

  struct PairId {
    int person, src, tgt;
  };
  std::vector<PairId> all;
  for (int pid : ds.test_ids()) {
    const auto& frames = ds.persons[static_cast<std::size_t>(pid)].frames;
    for (int i = 0; i < static_cast<int>(frames.size()); ++i)
      for (int j = 0; j < static_cast<int>(frames.size()); ++j)
        if (i != j) all.push_back({pid, i, j});
  }
  std::vector<PairId> chosen;
  if (opt.exhaustive || static_cast<int>(all.size()) <= opt.sampled) {
    chosen = all;
  } else {
    Rng rng(opt.pair_seed);
    std::vector<int> order(all.size());
    for (std::size_t i = 0; i < all.size(); ++i) order[i] = static_cast<int>(i);
    for (int i = static_cast<int>(all.size()) - 1; i > 0; --i)
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(rng.randint(i + 1))]);
    for (int i = 0; i < opt.sampled; ++i) chosen.push_back(all[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
  }

  for (const PairId& pr : chosen) {
    const DatasetPerson& dp = ds.persons[static_cast<std::size_t>(pr.person)];
    const DatasetFrame& sf = dp.frames[static_cast<std::size_t>(pr.src)];
    const DatasetFrame& tf = dp.frames[static_cast<std::size_t>(pr.tgt)];
    SourceBundle src = make_source_bundle(dp.person, sf.skel, ds.image_size);
    SynthOptions so;
    so.frames = opt.frames;
    so.skip = opt.skip;
    SynthResult r = synthesize_full(dp.person, src, sf.skel, tf.skel, gec, model, so);
    Tensor gt = render_image(dp.person, tf.skel, ds.image_size);
    PairRecord rec;
    rec.person = pr.person;
    rec.source_yaw = sf.yaw;
    rec.target_yaw = tf.yaw;
    rec.ssim = ssim(r.final_image, gt);
    rec.psnr = psnr(r.final_image, gt);
    rep.pairs.push_back(rec);
  }
  rep.finalize();
  return rep;
}

}  // namespace iepg
