#include "iepg/losses.hpp"

#include <stdexcept>

namespace iepg {

namespace {
constexpr double kSlope = 0.2;

void check_score(const char* op, const Tensor& s) {
  for (std::int64_t i = 0; i < s.size(); ++i)
    if (!(s[i] > 0.0 && s[i] < 1.0))
      throw std::invalid_argument(std::string(op) + ": score " + std::to_string(s[i]) +
                                  " outside (0,1)");
}
}  // namespace

FeaturePyramid::FeaturePyramid(std::uint64_t seed) {
  Rng rng(seed);
  c1 = Conv2dLayer(rng, 3, 8, 3, 1, 1);
  c2 = Conv2dLayer(rng, 8, 16, 3, 1, 1);
  c3 = Conv2dLayer(rng, 16, 32, 3, 1, 1);
  // frozen: taps are a fixed deterministic function of the input
  for (Tensor* t : {&c1.k, &c1.b, &c2.k, &c2.b, &c3.k, &c3.b}) t->set_requires_grad(false);
}

std::vector<Tensor> FeaturePyramid::taps(const Tensor& image) const {
  std::vector<Tensor> out;
  Tensor h = leaky_relu(c1.forward(image), kSlope);
  out.push_back(h);
  h = leaky_relu(c2.forward(avg_pool2(h)), kSlope);
  out.push_back(h);
  h = leaky_relu(c3.forward(avg_pool2(h)), kSlope);
  out.push_back(h);
  return out;
}

Tensor loss_img(const Tensor& gen, const Tensor& gt) {
  if (gen.shape() != gt.shape())
    throw std::invalid_argument("loss_img: shape mismatch " + shape_str(gen.shape()) + " vs " +
                                shape_str(gt.shape()));
  return mean_all(abs_t(sub(gen, gt)));
}

Tensor loss_per(const Tensor& gen, const Tensor& gt, const FeaturePyramid& pyr) {
  std::vector<Tensor> tg = pyr.taps(gen);
  std::vector<Tensor> tt = pyr.taps(gt);
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t i = 0; i < tg.size(); ++i)
    total = add(total, mean_all(abs_t(sub(tg[i], tt[i]))));
  return mul_scalar(total, 1.0 / static_cast<double>(tg.size()));
}

Tensor gram_matrix(const Tensor& tap) {
  const int c = tap.dim(0);
  const int n = static_cast<int>(tap.size() / c);
  Tensor flat = reshape(tap, Shape{c, n});
  return mul_scalar(matmul_nt(flat, flat), 1.0 / static_cast<double>(n));
}

Tensor loss_style(const Tensor& gen, const Tensor& gt, const FeaturePyramid& pyr) {
  std::vector<Tensor> tg = pyr.taps(gen);
  std::vector<Tensor> tt = pyr.taps(gt);
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t i = 0; i < tg.size(); ++i)
    total = add(total, mean_all(square(sub(gram_matrix(tg[i]), gram_matrix(tt[i])))));
  return mul_scalar(total, 1.0 / static_cast<double>(tg.size()));
}

AdvPair loss_siadv(const Tensor& fake_score, const Tensor& real_score) {
  check_score("loss_siadv", fake_score);
  check_score("loss_siadv", real_score);
  AdvPair out;
  Tensor dr = mean_all(log_t(real_score));
  Tensor df = mean_all(log_t(add_scalar(neg(fake_score), 1.0)));
  out.d_loss = neg(add(dr, df));
  out.g_loss = neg(mean_all(log_t(fake_score)));
  return out;
}

Tensor loss_sr(const Tensor& reconstruction, const Tensor& src_image, const FeaturePyramid& pyr,
               double lambda_per) {
  return add(loss_img(reconstruction, src_image),
             mul_scalar(loss_per(reconstruction, src_image, pyr), lambda_per));
}

Tensor loss_es_step(const IterationLosses& it, const LossWeights& w) {
  Tensor t = mul_scalar(it.siadv, w.siadv);
  t = add(t, mul_scalar(it.style, w.style));
  t = add(t, mul_scalar(it.per, w.per));
  t = add(t, mul_scalar(it.img, w.img));
  return t;
}

Tensor loss_pis(const std::vector<IterationLosses>& iters, const Tensor& sr,
                const LossWeights& w) {
  Tensor total = Tensor::scalar(0.0);
  for (const auto& it : iters) total = add(total, loss_es_step(it, w));
  return add(total, sr);
}

}  // namespace iepg
