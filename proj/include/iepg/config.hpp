#pragma once

#include <cstdint>
#include <string>

#include "iepg/fusion.hpp"
#include "iepg/gec.hpp"
#include "iepg/losses.hpp"

namespace iepg {

// run configuration; parsed from a flat JSON document, unknown keys rejected
struct RunConfig {
  std::uint64_t seed = 1;
  std::string dataset;
  std::string out_dir;  // empty disables periodic checkpoint writes
  int image_size = 64;

  double lr = 2e-4;
  int batch_size = 1;
  int gec_steps = 1500;
  int pis_steps = 300;
  int frames = 7;             // evolution sequence length incl. source and target
  std::string variant = "S";  // S|B|L -> 2|4|6 stacked blocks
  int queue_capacity = 4;
  bool determinism = true;
  bool teacher_gt = true;     // guiding frames from ground truth during training
  int log_every = 25;
  int ckpt_every = 200;

  int d_model = 128;
  int n_heads = 2;
  int gec_dh = 256;
  std::string gec_cell = "gru";
  int enc_c1 = 32;
  int dec_c1 = 32;
  int dec_c2 = 16;
  int disc_c = 32;
  int iec_base = 16;
  int ie_depth = 3;

  bool no_tpkf = false;
  bool no_iec = false;
  bool no_msc = false;
  bool no_eada = false;

  LossWeights weights;

  int depth() const;
  FusionConfig fusion_config() const;
  GecConfig gec_config() const;
  std::string to_json() const;

  static RunConfig from_json(const std::string& text);
  static RunConfig from_json_file(const std::string& path);  // applies IEPG_SEED override
};

}  // namespace iepg
