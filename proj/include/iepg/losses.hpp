#pragma once

#include <vector>

#include "iepg/nn.hpp"
#include "iepg/tensor.hpp"

namespace iepg {

struct LossWeights {
  double siadv = 2.0;
  double style = 500.0;
  double per = 0.5;
  double img = 5.0;
  double sadv = 1.0;
  double ncons = 0.01;
  double pose = 10.0;
};

// three fixed convolution stages with seeded random weights; the taps stand
// in for a pretrained perceptual network
struct FeaturePyramid {
  Conv2dLayer c1, c2, c3;

  explicit FeaturePyramid(std::uint64_t seed = 0);
  std::vector<Tensor> taps(const Tensor& image) const;  // 3 activation maps
};

Tensor loss_img(const Tensor& gen, const Tensor& gt);
Tensor loss_per(const Tensor& gen, const Tensor& gt, const FeaturePyramid& pyr);
Tensor loss_style(const Tensor& gen, const Tensor& gt, const FeaturePyramid& pyr);

// channel covariance of a (C,...) activation map, normalized by token count
Tensor gram_matrix(const Tensor& tap);

struct AdvPair {
  Tensor d_loss;  // -[log(real) + log(1-fake)], minimized by the discriminator
  Tensor g_loss;  // -log(fake), non-saturating generator form
};
AdvPair loss_siadv(const Tensor& fake_score, const Tensor& real_score);

Tensor loss_sr(const Tensor& reconstruction, const Tensor& src_image, const FeaturePyramid& pyr,
               double lambda_per);

struct IterationLosses {
  Tensor siadv;  // generator-side adversarial term
  Tensor style;
  Tensor per;
  Tensor img;
};

// L_es summed over evolution iterations plus the self-reconstruction term
Tensor loss_pis(const std::vector<IterationLosses>& iters, const Tensor& sr,
                const LossWeights& w);
// single-iteration weighted sum, the L_es contribution of one step
Tensor loss_es_step(const IterationLosses& it, const LossWeights& w);

}  // namespace iepg
