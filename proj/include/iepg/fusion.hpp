#pragma once

#include <optional>
#include <vector>

#include "iepg/gec.hpp"
#include "iepg/iec.hpp"
#include "iepg/nn.hpp"
#include "iepg/pose.hpp"
#include "iepg/tensor.hpp"

namespace iepg {

struct SourceBundle {
  Tensor image;      // (3,H,W)
  Tensor heatmaps;   // (K,H,W)
  Tensor semantics;  // (7,H,W) one-hot
};

struct TargetBundle {
  Tensor heatmaps;
  Tensor semantics;
};

SourceBundle make_source_bundle(const Person& person, const PoseSkeleton& skel, int size);
SourceBundle make_source_bundle(const Tensor& image, const Person& person,
                                const PoseSkeleton& skel, int size);
TargetBundle make_target_bundle(const Person& person, const PoseSkeleton& skel, int size);

struct FusionConfig {
  int image_size = 64;
  int d = 128;      // token width
  int n_heads = 2;
  int depth = 2;    // stacked SFE and TPKF blocks: 2/4/6 for variants S/B/L
  int enc_c1 = 32;
  int dec_c1 = 32;
  int dec_c2 = 16;
  int disc_c = 32;
  int iec_base = 16;
  int iec_depth = 3;
  int queue_capacity = 4;
  bool no_tpkf = false;
  bool no_iec = false;
  bool no_msc = false;
  bool no_eada = false;

  int grid() const { return image_size / 4; }
  int tokens() const { return grid() * grid(); }
};

// residual self-attention + token-wise network, both closed by instance norm
struct SfeBlock {
  Linear q, k, v, o;
  Linear fcn1, fcn2;
  int heads = 1;

  SfeBlock() = default;
  SfeBlock(Rng& rng, int d, int heads);
  Tensor forward(const Tensor& x) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

// self-attention, cross-attention with values from the evolution-tendency
// path and keys from the source path, an extra AdaIN link, then the
// token-wise closure
struct TpkfBlock {
  Linear sq, sk, sv, so;
  Linear cq, ck, cv, co;
  Linear fcn1, fcn2;
  int heads = 1;
  bool no_eada = false;

  TpkfBlock() = default;
  TpkfBlock(Rng& rng, int d, int heads, bool no_eada);
  Tensor forward(const Tensor& f_prev, const Tensor& f_s, const Tensor& value_tokens) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

struct TokenEncoder {
  Conv2dLayer c1, c2;
  int d = 0, grid = 0;

  TokenEncoder() = default;
  TokenEncoder(Rng& rng, int in_ch, int c1_ch, int d, int image_size);
  Tensor forward(const Tensor& x) const;  // (C,H,W) -> (tokens, d)
  void collect(ParamList& out, const std::string& prefix) const;
};

struct ImageDecoder {
  Conv2dLayer d1, d2, out;
  int d = 0, grid = 0;

  ImageDecoder() = default;
  ImageDecoder(Rng& rng, int d, int c1, int c2, int image_size);
  Tensor forward(const Tensor& tokens) const;  // (tokens,d) -> (3,H,W) in [0,1]
  void collect(ParamList& out, const std::string& prefix) const;
};

struct PatchDiscriminator {
  Conv2dLayer c1, c2, c3;

  PatchDiscriminator() = default;
  PatchDiscriminator(Rng& rng, int in_ch, int c);
  Tensor score_map(const Tensor& img, const TargetBundle& cond) const;  // (1,H/4,W/4)
  Tensor score(const Tensor& img, const TargetBundle& cond) const;      // mean patch score
  void collect(ParamList& out, const std::string& prefix) const;
};

struct FusionModel {
  FusionConfig cfg;
  TokenEncoder src_enc, fus_enc;
  Tensor pos_src, pos_fus;  // learned position embeddings (tokens, d)
  std::vector<SfeBlock> sfe;
  std::vector<TpkfBlock> tpkf;   // replaced by SfeBlocks when no_tpkf is set
  std::vector<SfeBlock> tpkf_self_only;
  IecStack iec;
  Conv2dLayer iec_proj;  // 1x1 projection of IEC features to token width
  ImageDecoder dec;
  PatchDiscriminator disc;

  FusionModel(Rng& rng, const FusionConfig& cfg);

  ParamList gen_params() const;
  ParamList disc_params() const;
  ParamList params() const;
  std::int64_t gen_param_count() const;

  Tensor source_path(const SourceBundle& src) const;  // f_S tokens
  Tensor iec_tokens(const Tensor& iec_features) const;
  Tensor synthesize_step(const SourceBundle& src, const TargetBundle& tgt, const Tensor& iec_feat,
                         const Tensor& f_s) const;
  Tensor synthesize_step(const SourceBundle& src, const TargetBundle& tgt,
                         const Tensor& iec_feat) const;
  double image_discriminate(const Tensor& img, const TargetBundle& cond) const;
};

struct SynthOptions {
  int frames = 7;             // evolution sequence length incl. source and target
  std::vector<int> skip;      // interior frame indices (1..frames-2) removed at inference
  std::uint64_t z_seed = 17;
};

struct SynthResult {
  Tensor final_image;
  EvolutionSequence seq;  // index 0 is the source frame, then generated frames
};

// builds the guiding sequence from the recurrent evolution model (endpoints
// conditioned on the given skeletons), then runs the incremental synthesis
// loop with queue feedback
SynthResult synthesize_full(const Person& person, const SourceBundle& src,
                            const PoseSkeleton& src_skel, const PoseSkeleton& tgt_skel,
                            const GecModel& gec, const FusionModel& model,
                            const SynthOptions& opt);

}  // namespace iepg
