#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "iepg/losses.hpp"

using namespace iepg;

namespace {

Tensor rand_img(Rng& rng, int size) { return Tensor::randu(rng, Shape{3, size, size}, 0.0, 1.0); }

}  // namespace

TEST_CASE("loss_img endpoints and direct-mean oracle") {
  Rng rng(1);
  Tensor a = rand_img(rng, 8);
  CHECK(loss_img(a, a).value() == 0.0);

  Tensor zeros(Shape{3, 8, 8}, 0.0);
  Tensor ones(Shape{3, 8, 8}, 1.0);
  CHECK(loss_img(zeros, ones).value() == 1.0);

  Tensor b = rand_img(rng, 8);
  double want = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) want += std::fabs(a[i] - b[i]);
  want /= static_cast<double>(a.size());
  CHECK(loss_img(a, b).value() == doctest::Approx(want).epsilon(1e-12));

  Tensor small(Shape{3, 4, 4}, 0.0);
  CHECK_THROWS_AS(loss_img(a, small), std::invalid_argument);
}

TEST_CASE("feature pyramid is frozen and seed-reproducible") {
  FeaturePyramid p1(0), p2(0);
  Rng rng(2);
  Tensor img = rand_img(rng, 8);
  const double v1 = loss_per(img, rand_img(rng, 8), p1).value();
  Rng rng2(2);
  Tensor img2 = rand_img(rng2, 8);
  const double v2 = loss_per(img2, rand_img(rng2, 8), p2).value();
  CHECK(v1 == v2);
  CHECK_FALSE(p1.c1.k.requires_grad());
}

TEST_CASE("loss_per matches a per-tap recomputation") {
  FeaturePyramid pyr(0);
  Rng rng(3);
  Tensor a = rand_img(rng, 8);
  Tensor b = rand_img(rng, 8);
  CHECK(loss_per(a, a, pyr).value() == 0.0);

  const auto ta = pyr.taps(a);
  const auto tb = pyr.taps(b);
  double want = 0.0;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    double tap = 0.0;
    for (std::int64_t j = 0; j < ta[i].size(); ++j) tap += std::fabs(ta[i][j] - tb[i][j]);
    want += tap / static_cast<double>(ta[i].size());
  }
  want /= 3.0;
  CHECK(loss_per(a, b, pyr).value() == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("gram matrix of a single channel is the mean of squares") {
  Rng rng(4);
  Tensor tap = Tensor::randu(rng, Shape{1, 3, 3}, -1.0, 1.0);
  Tensor g = gram_matrix(tap);
  REQUIRE(g.size() == 1);
  double want = 0.0;
  for (std::int64_t i = 0; i < tap.size(); ++i) want += tap[i] * tap[i];
  CHECK(g.value() == doctest::Approx(want / 9.0).epsilon(1e-14));
}

TEST_CASE("loss_style matches the explicit gram oracle") {
  FeaturePyramid pyr(0);
  Rng rng(5);
  Tensor a = rand_img(rng, 8);
  Tensor b = rand_img(rng, 8);
  CHECK(loss_style(a, a, pyr).value() == 0.0);

  const auto ta = pyr.taps(a);
  const auto tb = pyr.taps(b);
  double want = 0.0;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    const int c = ta[i].dim(0);
    const int n = static_cast<int>(ta[i].size() / c);
    std::vector<double> ga(static_cast<std::size_t>(c) * c, 0.0), gb(static_cast<std::size_t>(c) * c, 0.0);
    for (int x = 0; x < c; ++x)
      for (int y = 0; y < c; ++y) {
        double sa = 0.0, sb = 0.0;
        for (int j = 0; j < n; ++j) {
          sa += ta[i][static_cast<std::int64_t>(x) * n + j] * ta[i][static_cast<std::int64_t>(y) * n + j];
          sb += tb[i][static_cast<std::int64_t>(x) * n + j] * tb[i][static_cast<std::int64_t>(y) * n + j];
        }
        ga[static_cast<std::size_t>(x) * c + y] = sa / n;
        gb[static_cast<std::size_t>(x) * c + y] = sb / n;
      }
    double msd = 0.0;
    for (std::size_t j = 0; j < ga.size(); ++j) msd += (ga[j] - gb[j]) * (ga[j] - gb[j]);
    want += msd / static_cast<double>(ga.size());
  }
  want /= 3.0;
  CHECK(loss_style(a, b, pyr).value() == doctest::Approx(want).epsilon(1e-10));
}

TEST_CASE("loss_siadv closed forms and oracle") {
  Tensor chance(Shape{1, 1}, {0.5});
  AdvPair p = loss_siadv(chance, chance);
  CHECK(p.d_loss.value() == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-14));

  Tensor near_one(Shape{1, 1}, {1.0 - 1e-9});
  CHECK(loss_siadv(near_one, chance).g_loss.value() == doctest::Approx(0.0).epsilon(1e-8));
  CHECK(loss_siadv(near_one, chance).g_loss.value() > 0.0);

  Rng rng(6);
  Tensor f = Tensor::randu(rng, Shape{4, 1}, 0.1, 0.9);
  Tensor r = Tensor::randu(rng, Shape{4, 1}, 0.1, 0.9);
  AdvPair q = loss_siadv(f, r);
  double dw = 0.0, gw = 0.0;
  for (int i = 0; i < 4; ++i) {
    dw -= (std::log(r[i]) + std::log(1.0 - f[i])) / 4.0;
    gw -= std::log(f[i]) / 4.0;
  }
  CHECK(q.d_loss.value() == doctest::Approx(dw).epsilon(1e-12));
  CHECK(q.g_loss.value() == doctest::Approx(gw).epsilon(1e-12));

  Tensor bad(Shape{1, 1}, {0.0});
  CHECK_THROWS_AS(loss_siadv(bad, r), std::invalid_argument);
}

TEST_CASE("loss_sr recombination") {
  FeaturePyramid pyr(0);
  Rng rng(7);
  Tensor src = rand_img(rng, 8);
  CHECK(loss_sr(src, src, pyr, 0.5).value() == 0.0);

  Tensor rec = rand_img(rng, 8);
  const double v = loss_sr(rec, src, pyr, 0.5).value();
  CHECK(v >= 0.0);
  CHECK(v == doctest::Approx(loss_img(rec, src).value() + 0.5 * loss_per(rec, src, pyr).value())
                 .epsilon(1e-12));
}

TEST_CASE("integrated objective arithmetic under the published weights") {
  LossWeights w;
  IterationLosses unit{Tensor::scalar(1.0), Tensor::scalar(1.0), Tensor::scalar(1.0),
                       Tensor::scalar(1.0)};
  CHECK(std::fabs(loss_es_step(unit, w).value() - 507.5) < 1e-12);

  IterationLosses zero{Tensor::scalar(0.0), Tensor::scalar(0.0), Tensor::scalar(0.0),
                       Tensor::scalar(0.0)};
  CHECK(loss_pis({zero}, Tensor::scalar(0.0), w).value() == 0.0);
  CHECK(loss_pis({unit, unit}, Tensor::scalar(3.0), w).value() ==
        doctest::Approx(2.0 * 507.5 + 3.0).epsilon(1e-12));

  // scaling one lambda scales only its own contribution
  LossWeights w2 = w;
  w2.style *= 2.0;
  CHECK(loss_es_step(unit, w2).value() - loss_es_step(unit, w).value() ==
        doctest::Approx(w.style).epsilon(1e-12));
  LossWeights w3 = w;
  w3.img = 0.0;
  CHECK(loss_es_step(unit, w3).value() == doctest::Approx(507.5 - 5.0).epsilon(1e-12));
}

TEST_CASE("loss gradients pass finite differences on miniature inputs") {
  FeaturePyramid pyr(0);
  Rng rng(8);
  Tensor gt = rand_img(rng, 8);
  Tensor gen = rand_img(rng, 8);

  CHECK(grad_check([&](std::vector<Tensor>& in) { return loss_img(in[0], gt); }, {gen}, 1e-5) < 1e-4);
  CHECK(grad_check([&](std::vector<Tensor>& in) { return loss_per(in[0], gt, pyr); }, {gen}, 1e-5) < 1e-4);
  CHECK(grad_check([&](std::vector<Tensor>& in) { return loss_style(in[0], gt, pyr); }, {gen}, 1e-5) < 1e-4);
  CHECK(grad_check([&](std::vector<Tensor>& in) { return loss_sr(in[0], gt, pyr, 0.5); }, {gen}, 1e-5) < 1e-4);

  Tensor scores = Tensor::randu(rng, Shape{3, 1}, 0.2, 0.8);
  Tensor ref = Tensor::randu(rng, Shape{3, 1}, 0.2, 0.8);
  CHECK(grad_check([&](std::vector<Tensor>& in) { return loss_siadv(in[0], ref).g_loss; }, {scores}, 1e-5) < 1e-4);
  CHECK(grad_check([&](std::vector<Tensor>& in) { return loss_siadv(in[0], ref).d_loss; }, {scores}, 1e-5) < 1e-4);
}
