#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "iepg/metrics.hpp"

using namespace iepg;

namespace {

Tensor rand_img(Rng& rng, int size, double lo = 0.0, double hi = 1.0) {
  return Tensor::randu(rng, Shape{3, size, size}, lo, hi);
}

// independent SSIM: two-pass weighted statistics per window
double ssim_oracle(const Tensor& a, const Tensor& b) {
  const int h = a.dim(1), w = a.dim(2);
  const int win = 11;
  const double sigma = 1.5;
  std::vector<double> wt(win * win);
  double wsum = 0.0;
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) {
      const double dy = i - 5, dx = j - 5;
      wt[static_cast<std::size_t>(i) * win + j] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
      wsum += wt[static_cast<std::size_t>(i) * win + j];
    }
  for (auto& v : wt) v /= wsum;
  auto gray = [&](const Tensor& t, int i, int j) {
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    const std::int64_t idx = static_cast<std::int64_t>(i) * w + j;
    return (t[idx] + t[plane + idx] + t[2 * plane + idx]) / 3.0;
  };
  const double c1 = 0.0001, c2 = 0.0009;
  double total = 0.0;
  int count = 0;
  for (int i = 0; i + win <= h; ++i)
    for (int j = 0; j + win <= w; ++j) {
      double mx = 0.0, my = 0.0;
      for (int u = 0; u < win; ++u)
        for (int v = 0; v < win; ++v) {
          mx += wt[static_cast<std::size_t>(u) * win + v] * gray(a, i + u, j + v);
          my += wt[static_cast<std::size_t>(u) * win + v] * gray(b, i + u, j + v);
        }
      double vx = 0.0, vy = 0.0, cxy = 0.0;
      for (int u = 0; u < win; ++u)
        for (int v = 0; v < win; ++v) {
          const double dx = gray(a, i + u, j + v) - mx;
          const double dy = gray(b, i + u, j + v) - my;
          const double ww = wt[static_cast<std::size_t>(u) * win + v];
          vx += ww * dx * dx;
          vy += ww * dy * dy;
          cxy += ww * dx * dy;
        }
      total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  return total / count;
}

}  // namespace

TEST_CASE("ssim identity, anti-correlation, oracle agreement") {
  Rng rng(1);
  Tensor x = rand_img(rng, 16, 0.2, 0.8);
  CHECK(std::fabs(ssim(x, x) - 1.0) <= 1e-12);

  Tensor inv(Shape{3, 16, 16}, 0.0);
  for (std::int64_t i = 0; i < x.size(); ++i) inv.mut(i) = 1.0 - x[i];
  CHECK(ssim(x, inv) < 0.5);

  for (int seed = 0; seed < 5; ++seed) {
    Rng r2(50 + static_cast<std::uint64_t>(seed));
    Tensor a = rand_img(r2, 16);
    Tensor b = rand_img(r2, 16);
    CHECK(std::fabs(ssim(a, b) - ssim_oracle(a, b)) < 1e-10);
  }

  Tensor small(Shape{3, 8, 8}, 0.5);
  CHECK_THROWS_AS(ssim(small, small), std::invalid_argument);
  CHECK(ssim(x, inv) >= -1.0);
  CHECK(ssim(x, inv) <= 1.0);
}

TEST_CASE("psnr cap, log arithmetic, symmetry, monotonicity") {
  Rng rng(2);
  Tensor x = rand_img(rng, 12);
  CHECK(psnr(x, x) == 100.0);

  // uniform squared error of 0.01
  Tensor y = detach(x);
  for (std::int64_t i = 0; i < y.size(); ++i) y.mut(i) = x[i] + 0.1;
  CHECK(psnr(x, y) == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(psnr(y, x) == psnr(x, y));

  double prev = 1e9;
  for (double amp : {0.02, 0.05, 0.1, 0.2, 0.4}) {
    Rng nr(77);
    Tensor noisy = detach(x);
    for (std::int64_t i = 0; i < noisy.size(); ++i) noisy.mut(i) = x[i] + amp * nr.normal();
    const double v = psnr(x, noisy);
    CHECK(v < prev);
    prev = v;
  }

  Tensor other(Shape{3, 8, 8}, 0.0);
  CHECK_THROWS_AS(psnr(x, other), std::invalid_argument);
}

TEST_CASE("metric determinism") {
  Rng rng(3);
  Tensor a = rand_img(rng, 16);
  Tensor b = rand_img(rng, 16);
  CHECK(ssim(a, b) == ssim(a, b));
  CHECK(psnr(a, b) == psnr(a, b));
}

TEST_CASE("eval_report enumerates pairs and aggregates exactly") {
  Dataset ds = gen_dataset(3, 90.0, 16, 11);
  GecConfig gc;
  gc.feat = 16;
  gc.dh = 8;
  gc.dec_h1 = 12;
  gc.dec_h2 = 8;
  gc.disc_ch = 8;
  Rng gr(4);
  GecModel gec(gr, gc);
  FusionConfig fc;
  fc.image_size = 16;
  fc.d = 8;
  fc.n_heads = 1;
  fc.depth = 1;
  fc.enc_c1 = 4;
  fc.dec_c1 = 4;
  fc.dec_c2 = 4;
  fc.disc_c = 4;
  fc.iec_base = 4;
  fc.queue_capacity = 2;
  Rng fr(5);
  FusionModel model(fr, fc);

  EvalOptions opt;
  opt.exhaustive = true;
  opt.frames = 3;
  MetricReport rep = eval_report(ds, gec, model, opt);
  const int n_test = static_cast<int>(ds.test_ids().size());
  CHECK(static_cast<int>(rep.pairs.size()) == n_test * 4 * 3);  // yaws * (yaws - 1)
  for (const auto& p : rep.pairs) CHECK(p.source_yaw != p.target_yaw);

  double mean = 0.0;
  for (const auto& p : rep.pairs) mean += p.ssim;
  mean /= static_cast<double>(rep.pairs.size());
  CHECK(std::fabs(mean - rep.mean_ssim) < 1e-12);

  EvalOptions sampled;
  sampled.sampled = 5;
  sampled.frames = 3;
  MetricReport rep2 = eval_report(ds, gec, model, sampled);
  CHECK(rep2.pairs.size() == 5);
  MetricReport rep3 = eval_report(ds, gec, model, sampled);
  CHECK(rep2.mean_ssim == rep3.mean_ssim);  // deterministic sampling and synthesis

  const std::string js = rep2.to_json();
  CHECK(js.find("\"fid\": null") != std::string::npos);
  CHECK(rep2.to_table().find("mean") != std::string::npos);
}
