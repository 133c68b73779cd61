#pragma once

#include <string>

#include "iepg/checkpoint.hpp"
#include "iepg/config.hpp"
#include "iepg/fusion.hpp"
#include "iepg/gec.hpp"
#include "iepg/pose.hpp"

namespace iepg {

std::uint64_t params_digest(const ParamList& params);

// appends "step <n> <loss_name> <value>" lines when a log path is given
class LossLog {
 public:
  explicit LossLog(std::string path) : path_(std::move(path)) {}
  void append(int step, const std::string& name, double value) const;

 private:
  std::string path_;
};

// ground-truth evolution frames at shortest-arc interpolated yaws
std::vector<PoseSkeleton> gt_skeleton_track(const Person& person, double yaw_s, double yaw_t,
                                            int frames);

GecModel gec_from_checkpoint(const Checkpoint& ck);
FusionModel fusion_from_checkpoint(const Checkpoint& ck);

Checkpoint train_gec(const Dataset& ds, const RunConfig& cfg, const std::string& log_path = "");
Checkpoint train_pis(const Dataset& ds, const Checkpoint& gec_ckpt, const RunConfig& cfg,
                     const std::string& log_path = "");

struct GecEvalStats {
  double first_frame_err = 0.0;  // mean keypoint error of the decoded first frame vs P_s
  double last_frame_err = 0.0;
  double pose_loss = 0.0;        // mean frame-wise pose loss over evaluated pairs
};

// endpoint anchoring and pose loss on held-out persons, decoded coordinates
// scored against ground-truth-visible keypoints
GecEvalStats eval_gec(const Dataset& ds, const GecModel& gec, int frames, int n_pairs,
                      std::uint64_t seed);

// SSIM of one deterministic held-out pair, a cheap training progress probe
double validation_ssim(const Dataset& ds, const GecModel& gec, const FusionModel& model,
                       int frames, std::uint64_t pair_seed = 7);

}  // namespace iepg
