#pragma once

#include <string>
#include <vector>

#include "iepg/fusion.hpp"
#include "iepg/pose.hpp"
#include "iepg/tensor.hpp"

namespace iepg {

// mean local SSIM over valid 11x11 Gaussian windows (sigma 1.5), grayscale by
// channel mean, K1=0.01 K2=0.03, dynamic range 1
double ssim(const Tensor& a, const Tensor& b);
// 10*log10(peak^2/MSE), capped (identical images return the cap)
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0, double cap_db = 100.0);

struct PairRecord {
  int person = 0;
  double source_yaw = 0.0;
  double target_yaw = 0.0;
  double ssim = 0.0;
  double psnr = 0.0;
};

struct MetricReport {
  std::vector<PairRecord> pairs;
  double mean_ssim = 0.0;
  double mean_psnr = 0.0;
  // config echo
  int frames = 7;
  std::string variant = "S";
  std::uint64_t seed = 0;

  void finalize();  // recomputes the aggregate means
  std::string to_json() const;
  std::string to_table() const;
};

struct EvalOptions {
  bool exhaustive = false;
  int sampled = 48;
  std::uint64_t pair_seed = 99;
  int frames = 7;
  std::vector<int> skip;  // removed interior steps, forwarded to synthesis
};

// synthesizes every configured ordered test pair and scores it against the
// rendered ground-truth target
MetricReport eval_report(const Dataset& ds, const GecModel& gec, const FusionModel& model,
                         const EvalOptions& opt);

}  // namespace iepg
