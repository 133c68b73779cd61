#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "iepg/tensor.hpp"

namespace iepg {

// OpenPose body-18 keypoint order
enum Keypoint18 {
  kNose = 0,
  kNeck = 1,
  kRShoulder = 2,
  kRElbow = 3,
  kRWrist = 4,
  kLShoulder = 5,
  kLElbow = 6,
  kLWrist = 7,
  kRHip = 8,
  kRKnee = 9,
  kRAnkle = 10,
  kLHip = 11,
  kLKnee = 12,
  kLAnkle = 13,
  kREye = 14,
  kLEye = 15,
  kREar = 16,
  kLEar = 17,
};

constexpr int kNumKeypoints = 18;
constexpr int kNumLabels = 7;  // 0 bg, 1 head, 2 torso, 3 l-arm, 4 r-arm, 5 l-leg, 6 r-leg

// index of the opposite-side keypoint (nose/neck map to themselves)
int mirror_partner(int k);

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

struct PoseSkeleton {
  std::array<Vec2, kNumKeypoints> pts{};
  std::array<std::uint8_t, kNumKeypoints> vis{};

  bool visible(int k) const { return vis[static_cast<std::size_t>(k)] != 0; }
  // coordinates flattened to (1, 2K), invisible as sentinel (-1,-1)
  Tensor to_row() const;
  static PoseSkeleton from_row(const Tensor& row, const std::array<std::uint8_t, kNumKeypoints>& vis);
  // horizontal flip: mirrors x about the image center and swaps side labels
  PoseSkeleton flipped() const;
};

// mean distance between keypoints visible in both skeletons
double mean_keypoint_error(const PoseSkeleton& a, const PoseSkeleton& b);

enum class TexturePattern { Solid = 0, Stripe = 1, Checker = 2 };

struct Person {
  int id = 0;
  double torso_len = 0.25;
  double head_len = 0.10;
  double upper_arm = 0.12;
  double lower_arm = 0.11;
  double upper_leg = 0.14;
  double lower_leg = 0.13;
  double shoulder_hw = 0.095;  // half-widths
  double hip_hw = 0.06;
  TexturePattern pattern = TexturePattern::Stripe;
  std::array<double, 3> color_a{0.8, 0.3, 0.3};
  std::array<double, 3> color_b{0.9, 0.8, 0.2};
  std::array<double, 3> color_leg{0.25, 0.3, 0.7};
  std::uint64_t seed = 0;

  double limb_sum() const {
    return torso_len + head_len + upper_arm + lower_arm + upper_leg + lower_leg;
  }
};

Person random_person(int id, Rng& rng);

struct SemanticMap {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> labels;

  std::uint8_t at(int y, int x) const { return labels[static_cast<std::size_t>(y) * w + x]; }
  Tensor one_hot() const;  // (7,H,W)
  std::array<std::int64_t, kNumLabels> histogram() const;
};

// capsule in image coordinates; geometry shared by image and semantics passes
struct Capsule {
  Vec2 a;
  Vec2 b;
  double radius = 0.0;
  int label = 0;  // semantic label
};

// assembled in draw order: legs, torso, arms, head
std::vector<Capsule> body_capsules(const Person& person, const PoseSkeleton& skel);

PoseSkeleton skeleton_at_yaw(const Person& person, double yaw_deg);

Tensor render_image(const Person& person, const PoseSkeleton& skel, int size);
SemanticMap render_semantics(const Person& person, const PoseSkeleton& skel, int size);
Tensor render_heatmaps(const PoseSkeleton& skel, int size, double sigma = 1.5);

// shortest-arc yaw interpolation; ties on 180 degrees resolve to +180
double yaw_lerp(double from_deg, double to_deg, double alpha);

struct EvoFrame {
  PoseSkeleton skel;
  SemanticMap sem;
  Tensor image;  // (3,H,W)
};

using EvolutionSequence = std::vector<EvoFrame>;

// ---------------------------------------------------------------------------
// dataset
// ---------------------------------------------------------------------------

struct DatasetFrame {
  double yaw = 0.0;
  PoseSkeleton skel;
  std::string image_path;  // relative to the dataset root, set when on disk
  std::string sem_path;
};

struct DatasetPerson {
  Person person;
  bool is_test = false;
  std::vector<DatasetFrame> frames;
};

struct Dataset {
  int image_size = 64;
  double yaw_step = 15.0;
  std::uint64_t seed = 0;
  std::string root;  // directory, empty for in-memory sets
  std::vector<DatasetPerson> persons;

  std::vector<int> train_ids() const;
  std::vector<int> test_ids() const;
  std::int64_t frame_count() const;
};

Dataset gen_dataset(int n_persons, double yaw_step_deg, int image_size, std::uint64_t seed);
void write_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

// P6 portable pixmap I/O; values clamped to [0,1] on both boundaries
void write_ppm(const std::string& path, const Tensor& image);
Tensor read_ppm(const std::string& path);
void write_semantics_ppm(const std::string& path, const SemanticMap& sem);
SemanticMap read_semantics_ppm(const std::string& path);

std::uint64_t dataset_digest(const std::string& dir);

}  // namespace iepg
