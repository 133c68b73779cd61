#pragma once

#include <vector>

#include "iepg/nn.hpp"
#include "iepg/pose.hpp"
#include "iepg/tensor.hpp"

namespace iepg {

struct GecConfig {
  int feat = 512;   // pose feature width
  int dh = 256;     // hidden width per direction
  CellType cell = CellType::Gru;
  int dec_h1 = 256;
  int dec_h2 = 128;
  int disc_ch = 64;
};

// pose encoder, starter mixer, 3 bidirectional recurrent layers, pose
// decoder, and the pose-sequence discriminator
struct GecModel {
  GecConfig cfg;
  Linear enc1, enc2, enc3;
  Linear mix1, mix2;
  Linear starter;
  std::vector<RnnCell> fwd, bwd;  // 3 layers each
  Linear dec1, dec2, dec3;        // final layer emits 2K coords + K visibility logits
  Conv1dLayer ds1, ds2;
  Linear ds_out;

  GecModel(Rng& rng, const GecConfig& cfg);

  ParamList gen_params() const;
  ParamList disc_params() const;
  ParamList params() const;  // generator + discriminator

  Tensor encode_row(const Tensor& row) const;     // (1,2K) -> (1,feat)
  Tensor encode(const PoseSkeleton& p) const;

  // one bidirectional layer pass given per-step inputs; out[t] is the
  // concatenation of the forward and backward cell outputs
  std::vector<Tensor> bidir_layer(const std::vector<Tensor>& xs, int layer) const;
  // all 3 layers over per-step inputs
  std::vector<Tensor> run_layers(std::vector<Tensor> xs) const;
  // starter = projection of [f_s, z, mix(f_s,f_t)], tiled over T steps
  std::vector<Tensor> evolve(const Tensor& f_s, const Tensor& f_t, const Tensor& z, int T) const;

  Tensor decode_coords(const Tensor& feat) const;      // (1,2K), sigmoid squashed
  Tensor decode_vis_logits(const Tensor& feat) const;  // (1,K)
  PoseSkeleton decode_skeleton(const Tensor& feat) const;

  Tensor discriminate_rows(const Tensor& rows) const;  // (T,2K) -> (1,1) score
  double seq_discriminate(const std::vector<PoseSkeleton>& seq) const;
  std::vector<double> seq_discriminate_batch(const std::vector<std::vector<PoseSkeleton>>& seqs) const;
};

struct GecWeights {
  double sadv = 1.0;
  double ncons = 0.01;
  double pose = 10.0;
};

// Value of the sequence-adversarial objective,
// E[log(1 - D(fake))] + E[log D(real)]; the discriminator maximizes it.
Tensor loss_sadv(const Tensor& fake_scores, const Tensor& real_scores);
// non-saturating generator form, -E[log D(fake)]
Tensor loss_sadv_gen(const Tensor& fake_scores);

// mean over consecutive pairs and coordinates of squared differences
Tensor loss_ncons(const Tensor& coords_rows);  // (T,2K), T >= 2

// mean squared coordinate error over keypoints visible in the ground truth
Tensor loss_pose(const Tensor& pred_row, const PoseSkeleton& gt);

// lambda_sadv * sadv + lambda_ncons * ncons + lambda_pose * pose
Tensor loss_gec(const Tensor& sadv, const Tensor& ncons, const Tensor& pose, const GecWeights& w);
double loss_gec(double sadv, double ncons, double pose, const GecWeights& w);

std::vector<SemanticMap> gen_semantic_sequence(const Person& person,
                                               const std::vector<PoseSkeleton>& skeletons,
                                               int size);

// cos(yaw) estimate from shoulder x separation, used by evaluation probes
double estimate_yaw_cos(const PoseSkeleton& s, double shoulder_hw);

}  // namespace iepg
