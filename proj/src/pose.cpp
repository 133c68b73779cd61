#include "iepg/pose.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>

#include "iepg/checkpoint.hpp"
#include "json.hpp"

namespace iepg {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kAPoseRad = 14.0 * kPi / 180.0;
constexpr double kArmRadius = 0.016;
constexpr double kLegRadius = 0.020;
constexpr double kSkin[3] = {0.87, 0.72, 0.60};

struct Vec3 {
  double x, y, z;
};

Vec3 rot_yaw(const Vec3& p, double yaw_deg) {
  const double t = yaw_deg * kPi / 180.0;
  const double c = std::cos(t), s = std::sin(t);
  return {p.x * c + p.z * s, p.y, -p.x * s + p.z * c};
}

double dist_to_segment(double px, double py, const Vec2& a, const Vec2& b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((px - a.x) * vx + (py - a.y) * vy) / len2, 0.0, 1.0);
  const double dx = px - (a.x + t * vx), dy = py - (a.y + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

}  // namespace

int mirror_partner(int k) {
  static const int partner[kNumKeypoints] = {0, 1, 5, 6, 7, 2, 3, 4, 11, 12, 13, 8, 9, 10, 15, 14, 17, 16};
  return partner[k];
}

Tensor PoseSkeleton::to_row() const {
  std::vector<double> v(2 * kNumKeypoints);
  for (int k = 0; k < kNumKeypoints; ++k) {
    v[static_cast<std::size_t>(2 * k)] = visible(k) ? pts[static_cast<std::size_t>(k)].x : -1.0;
    v[static_cast<std::size_t>(2 * k + 1)] = visible(k) ? pts[static_cast<std::size_t>(k)].y : -1.0;
  }
  return Tensor(Shape{1, 2 * kNumKeypoints}, std::move(v));
}

PoseSkeleton PoseSkeleton::from_row(const Tensor& row,
                                    const std::array<std::uint8_t, kNumKeypoints>& vis_in) {
  if (row.size() != 2 * kNumKeypoints)
    throw std::invalid_argument("PoseSkeleton::from_row: expected " +
                                std::to_string(2 * kNumKeypoints) + " values");
  PoseSkeleton s;
  s.vis = vis_in;
  for (int k = 0; k < kNumKeypoints; ++k) {
    if (s.visible(k))
      s.pts[static_cast<std::size_t>(k)] = {row[2 * k], row[2 * k + 1]};
    else
      s.pts[static_cast<std::size_t>(k)] = {-1.0, -1.0};
  }
  return s;
}

PoseSkeleton PoseSkeleton::flipped() const {
  PoseSkeleton out;
  for (int k = 0; k < kNumKeypoints; ++k) {
    const int p = mirror_partner(k);
    out.vis[static_cast<std::size_t>(k)] = vis[static_cast<std::size_t>(p)];
    if (out.vis[static_cast<std::size_t>(k)])
      out.pts[static_cast<std::size_t>(k)] = {1.0 - pts[static_cast<std::size_t>(p)].x,
                                              pts[static_cast<std::size_t>(p)].y};
    else
      out.pts[static_cast<std::size_t>(k)] = {-1.0, -1.0};
  }
  return out;
}

double mean_keypoint_error(const PoseSkeleton& pred, const PoseSkeleton& gt) {
  double sum = 0.0;
  int count = 0;
  for (int k = 0; k < kNumKeypoints; ++k) {
    if (!gt.visible(k)) continue;
    const double dx = pred.pts[static_cast<std::size_t>(k)].x - gt.pts[static_cast<std::size_t>(k)].x;
    const double dy = pred.pts[static_cast<std::size_t>(k)].y - gt.pts[static_cast<std::size_t>(k)].y;
    sum += std::sqrt(dx * dx + dy * dy);
    ++count;
  }
  return count ? sum / count : 0.0;
}

Person random_person(int id, Rng& rng) {
  Person p;
  p.id = id;
  p.seed = rng.next_u64();
  p.torso_len = rng.uniform(0.22, 0.28);
  p.head_len = rng.uniform(0.09, 0.12);
  p.upper_arm = rng.uniform(0.11, 0.14);
  p.lower_arm = rng.uniform(0.10, 0.13);
  p.upper_leg = rng.uniform(0.12, 0.16);
  p.lower_leg = rng.uniform(0.11, 0.15);
  p.shoulder_hw = rng.uniform(0.08, 0.11);
  p.hip_hw = rng.uniform(0.05, 0.07);
  p.pattern = static_cast<TexturePattern>(rng.randint(3));
  for (int c = 0; c < 3; ++c) {
    p.color_a[static_cast<std::size_t>(c)] = rng.uniform(0.25, 1.0);
    p.color_b[static_cast<std::size_t>(c)] = rng.uniform(0.25, 1.0);
    p.color_leg[static_cast<std::size_t>(c)] = rng.uniform(0.2, 0.85);
  }
  return p;
}

// ---------------------------------------------------------------------------
// canonical figure and projection
// ---------------------------------------------------------------------------

namespace {

struct Figure {
  std::array<Vec3, kNumKeypoints> local;
  double shoulder_y, hip_y, head_r;
};

Figure canonical_figure(const Person& p) {
  Figure f{};
  const double margin = 0.08;
  const double head_c = margin + 0.5 * p.head_len;
  const double neck_y = margin + p.head_len;
  const double shoulder_y = neck_y + 0.02;
  const double hip_y = neck_y + p.torso_len;
  const double hr = 0.45 * p.head_len;
  f.shoulder_y = shoulder_y;
  f.hip_y = hip_y;
  f.head_r = hr;

  auto& L = f.local;
  L[kNose] = {0.0, head_c + 0.15 * hr, 0.85 * hr};
  L[kNeck] = {0.0, neck_y, 0.0};
  // the person's right side projects to viewer-left (negative x) at yaw 0
  L[kRShoulder] = {-p.shoulder_hw, shoulder_y, 0.0};
  L[kLShoulder] = {+p.shoulder_hw, shoulder_y, 0.0};
  const double ax = std::sin(kAPoseRad), ay = std::cos(kAPoseRad);
  L[kRElbow] = {-(p.shoulder_hw + ax * p.upper_arm), shoulder_y + ay * p.upper_arm, 0.0};
  L[kLElbow] = {+(p.shoulder_hw + ax * p.upper_arm), shoulder_y + ay * p.upper_arm, 0.0};
  L[kRWrist] = {-(p.shoulder_hw + ax * (p.upper_arm + p.lower_arm)),
                shoulder_y + ay * (p.upper_arm + p.lower_arm), 0.0};
  L[kLWrist] = {+(p.shoulder_hw + ax * (p.upper_arm + p.lower_arm)),
                shoulder_y + ay * (p.upper_arm + p.lower_arm), 0.0};
  L[kRHip] = {-p.hip_hw, hip_y, 0.0};
  L[kLHip] = {+p.hip_hw, hip_y, 0.0};
  L[kRKnee] = {-p.hip_hw, hip_y + p.upper_leg, 0.0};
  L[kLKnee] = {+p.hip_hw, hip_y + p.upper_leg, 0.0};
  L[kRAnkle] = {-p.hip_hw, hip_y + p.upper_leg + p.lower_leg, 0.0};
  L[kLAnkle] = {+p.hip_hw, hip_y + p.upper_leg + p.lower_leg, 0.0};
  L[kREye] = {-0.35 * hr, head_c - 0.20 * hr, 0.75 * hr};
  L[kLEye] = {+0.35 * hr, head_c - 0.20 * hr, 0.75 * hr};
  L[kREar] = {-0.85 * hr, head_c, 0.0};
  L[kLEar] = {+0.85 * hr, head_c, 0.0};
  return f;
}

// max z of the rotated torso cross-section boundary along the viewing line
// x = x0; returns false when the line misses the section
bool torso_front_depth(double half_w, double tz, double yaw_deg, double x0, double* z_front) {
  const double t = yaw_deg * kPi / 180.0;
  const double c = std::cos(t), s = std::sin(t);
  // rect corners (+-w, +-tz) under x' = x c + z s, z' = -x s + z c
  const double cx[4] = {half_w * c + tz * s, half_w * c - tz * s, -half_w * c - tz * s,
                        -half_w * c + tz * s};
  const double cz[4] = {-half_w * s + tz * c, -half_w * s - tz * c, half_w * s - tz * c,
                        half_w * s + tz * c};
  bool hit = false;
  double best = 0.0;
  for (int e = 0; e < 4; ++e) {
    const double x1 = cx[e], z1 = cz[e];
    const double x2 = cx[(e + 1) % 4], z2 = cz[(e + 1) % 4];
    const double lo = std::min(x1, x2), hi = std::max(x1, x2);
    if (x0 < lo || x0 > hi) continue;
    double z;
    if (hi - lo < 1e-12)
      z = std::max(z1, z2);
    else
      z = z1 + (z2 - z1) * (x0 - x1) / (x2 - x1);
    if (!hit || z > best) best = z;
    hit = true;
  }
  if (hit) *z_front = best;
  return hit;
}

}  // namespace

PoseSkeleton skeleton_at_yaw(const Person& person, double yaw_deg) {
  if (yaw_deg < 0.0 || yaw_deg >= 360.0) {
    yaw_deg = std::fmod(yaw_deg, 360.0);
    if (yaw_deg < 0.0) yaw_deg += 360.0;
  }
  const Figure fig = canonical_figure(person);
  const double tz = 0.5 * person.hip_hw;

  PoseSkeleton out;
  std::array<Vec3, kNumKeypoints> rot;
  for (int k = 0; k < kNumKeypoints; ++k)
    rot[static_cast<std::size_t>(k)] = rot_yaw(fig.local[static_cast<std::size_t>(k)], yaw_deg);

  for (int k = 0; k < kNumKeypoints; ++k) {
    const Vec3& r = rot[static_cast<std::size_t>(k)];
    bool vis = true;
    if (k == kNose || k == kREye || k == kLEye || k == kREar || k == kLEar) {
      vis = r.z >= -0.15 * fig.head_r;
    } else if (k == kRElbow || k == kLElbow || k == kRWrist || k == kLWrist) {
      // depth test against a slightly shrunk torso slab
      if (r.y >= fig.shoulder_y && r.y <= fig.hip_y) {
        const double u = (r.y - fig.shoulder_y) / (fig.hip_y - fig.shoulder_y);
        const double w = (1.0 - u) * person.shoulder_hw + u * person.hip_hw;
        double zf;
        if (torso_front_depth(0.8 * w, 0.8 * tz, yaw_deg, r.x, &zf) && r.z < zf - 0.25 * tz)
          vis = false;
      }
    }
    out.vis[static_cast<std::size_t>(k)] = vis ? 1 : 0;
    out.pts[static_cast<std::size_t>(k)] = vis ? Vec2{0.5 + r.x, r.y} : Vec2{-1.0, -1.0};
  }
  return out;
}

// ---------------------------------------------------------------------------
// rendering
// ---------------------------------------------------------------------------

std::vector<Capsule> body_capsules(const Person& person, const PoseSkeleton& s) {
  std::vector<Capsule> caps;
  auto seg = [&](int a, int b, double r, int label) {
    if (s.visible(a) && s.visible(b))
      caps.push_back({s.pts[static_cast<std::size_t>(a)], s.pts[static_cast<std::size_t>(b)], r, label});
  };
  // draw order: legs, torso, arms, head
  seg(kLHip, kLKnee, kLegRadius, 5);
  seg(kLKnee, kLAnkle, kLegRadius, 5);
  seg(kRHip, kRKnee, kLegRadius, 6);
  seg(kRKnee, kRAnkle, kLegRadius, 6);
  if (s.visible(kNeck) && s.visible(kLHip) && s.visible(kRHip)) {
    Vec2 pelvis{0.5 * (s.pts[kLHip].x + s.pts[kRHip].x), 0.5 * (s.pts[kLHip].y + s.pts[kRHip].y)};
    double tr = 0.024;
    if (s.visible(kLShoulder) && s.visible(kRShoulder)) {
      const double sep = std::fabs(s.pts[kLShoulder].x - s.pts[kRShoulder].x);
      tr = std::max(0.024, 0.46 * sep);
    }
    caps.push_back({s.pts[kNeck], pelvis, tr, 2});
  }
  seg(kLShoulder, kLElbow, kArmRadius, 3);
  seg(kLElbow, kLWrist, kArmRadius, 3);
  seg(kRShoulder, kRElbow, kArmRadius, 4);
  seg(kRElbow, kRWrist, kArmRadius, 4);
  if (s.visible(kNeck)) {
    const double hr = 0.45 * person.head_len;
    Vec2 hc{s.pts[kNeck].x, s.pts[kNeck].y - (0.5 * person.head_len + 0.02)};
    caps.push_back({hc, hc, hr, 1});
  }
  return caps;
}

namespace {

// cos(yaw) estimate from the signed shoulder separation; drives texture phase
double facing_cos(const Person& p, const PoseSkeleton& s) {
  if (!s.visible(kLShoulder) || !s.visible(kRShoulder)) return 1.0;
  const double sep = s.pts[kLShoulder].x - s.pts[kRShoulder].x;
  return std::clamp(sep / (2.0 * p.shoulder_hw), -1.0, 1.0);
}

void texture_color(const Person& p, int label, double x, double y, double cx, double phase,
                   double* rgb) {
  if (label == 5 || label == 6) {
    for (int c = 0; c < 3; ++c) rgb[c] = p.color_leg[static_cast<std::size_t>(c)];
    return;
  }
  if (label == 1) {
    for (int c = 0; c < 3; ++c) rgb[c] = kSkin[c];
    return;
  }
  bool alt = false;
  const double u = (x - cx) * 10.0 + phase * 2.0;
  switch (p.pattern) {
    case TexturePattern::Solid: alt = false; break;
    case TexturePattern::Stripe: alt = (static_cast<long long>(std::floor(u)) & 1) != 0; break;
    case TexturePattern::Checker:
      alt = ((static_cast<long long>(std::floor(u)) + static_cast<long long>(std::floor(y * 10.0))) & 1) != 0;
      break;
  }
  const auto& col = alt ? p.color_b : p.color_a;
  for (int c = 0; c < 3; ++c) rgb[c] = col[static_cast<std::size_t>(c)];
}

void splat(Tensor& img, int size, const Vec2& a, const Vec2& b, double radius,
           const std::function<void(double, double, double*)>& color_at) {
  const double px = 1.0 / size;
  const int x0 = std::max(0, static_cast<int>(std::floor((std::min(a.x, b.x) - radius) * size - 1)));
  const int x1 = std::min(size - 1, static_cast<int>(std::ceil((std::max(a.x, b.x) + radius) * size + 1)));
  const int y0 = std::max(0, static_cast<int>(std::floor((std::min(a.y, b.y) - radius) * size - 1)));
  const int y1 = std::min(size - 1, static_cast<int>(std::ceil((std::max(a.y, b.y) + radius) * size + 1)));
  const std::int64_t plane = static_cast<std::int64_t>(size) * size;
  for (int i = y0; i <= y1; ++i)
    for (int j = x0; j <= x1; ++j) {
      const double pxc = (j + 0.5) * px, pyc = (i + 0.5) * px;
      const double d = dist_to_segment(pxc, pyc, a, b);
      const double cov = std::clamp((radius - d) / px + 0.5, 0.0, 1.0);
      if (cov <= 0.0) continue;
      double rgb[3];
      color_at(pxc, pyc, rgb);
      const std::int64_t idx = static_cast<std::int64_t>(i) * size + j;
      for (int c = 0; c < 3; ++c) {
        double& v = img.mut(c * plane + idx);
        v = v * (1.0 - cov) + rgb[c] * cov;
      }
    }
}

}  // namespace

Tensor render_image(const Person& person, const PoseSkeleton& skel, int size) {
  Tensor img(Shape{3, size, size}, 0.0);
  const double phase = facing_cos(person, skel);
  const double cx = skel.visible(kNeck) ? skel.pts[kNeck].x : 0.5;
  for (const Capsule& cap : body_capsules(person, skel)) {
    splat(img, size, cap.a, cap.b, cap.radius,
          [&](double x, double y, double* rgb) { texture_color(person, cap.label, x, y, cx, phase, rgb); });
  }
  // face dots give the front view a distinct appearance
  if (skel.visible(kNeck)) {
    const double hr = 0.45 * person.head_len;
    const Vec2 hc{skel.pts[kNeck].x, skel.pts[kNeck].y - (0.5 * person.head_len + 0.02)};
    auto dot = [&](int k, double r, double dark) {
      if (!skel.visible(k)) return;
      const Vec2 p = skel.pts[static_cast<std::size_t>(k)];
      const Vec2 q{hc.x + 0.72 * (p.x - hc.x), hc.y + 0.72 * (p.y - hc.y)};
      if (std::hypot(q.x - hc.x, q.y - hc.y) + r > hr) return;
      splat(img, size, q, q, r, [dark](double, double, double* rgb) {
        rgb[0] = rgb[1] = rgb[2] = dark;
      });
    };
    dot(kREye, 0.008, 0.08);
    dot(kLEye, 0.008, 0.08);
    dot(kNose, 0.007, 0.35);
  }
  for (auto& v : img.data()) v = std::clamp(v, 0.0, 1.0);
  return img;
}

SemanticMap render_semantics(const Person& person, const PoseSkeleton& skel, int size) {
  SemanticMap sem;
  sem.h = sem.w = size;
  sem.labels.assign(static_cast<std::size_t>(size) * size, 0);
  const double px = 1.0 / size;
  for (const Capsule& cap : body_capsules(person, skel)) {
    const int x0 = std::max(0, static_cast<int>(std::floor((std::min(cap.a.x, cap.b.x) - cap.radius) * size - 1)));
    const int x1 = std::min(size - 1, static_cast<int>(std::ceil((std::max(cap.a.x, cap.b.x) + cap.radius) * size + 1)));
    const int y0 = std::max(0, static_cast<int>(std::floor((std::min(cap.a.y, cap.b.y) - cap.radius) * size - 1)));
    const int y1 = std::min(size - 1, static_cast<int>(std::ceil((std::max(cap.a.y, cap.b.y) + cap.radius) * size + 1)));
    for (int i = y0; i <= y1; ++i)
      for (int j = x0; j <= x1; ++j) {
        const double d = dist_to_segment((j + 0.5) * px, (i + 0.5) * px, cap.a, cap.b);
        if (d <= cap.radius)  // coverage >= 0.5 under the image blend rule
          sem.labels[static_cast<std::size_t>(i) * size + j] = static_cast<std::uint8_t>(cap.label);
      }
  }
  return sem;
}

Tensor SemanticMap::one_hot() const {
  Tensor t(Shape{kNumLabels, h, w}, 0.0);
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  for (std::int64_t i = 0; i < plane; ++i)
    t.mut(labels[static_cast<std::size_t>(i)] * plane + i) = 1.0;
  return t;
}

std::array<std::int64_t, kNumLabels> SemanticMap::histogram() const {
  std::array<std::int64_t, kNumLabels> h{};
  for (std::uint8_t l : labels) h[l] += 1;
  return h;
}

Tensor render_heatmaps(const PoseSkeleton& skel, int size, double sigma) {
  if (sigma <= 0.0) throw std::invalid_argument("render_heatmaps: sigma must be positive");
  Tensor t(Shape{kNumKeypoints, size, size}, 0.0);
  const std::int64_t plane = static_cast<std::int64_t>(size) * size;
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int k = 0; k < kNumKeypoints; ++k) {
    if (!skel.visible(k)) continue;
    const double cx = skel.pts[static_cast<std::size_t>(k)].x * size - 0.5;
    const double cy = skel.pts[static_cast<std::size_t>(k)].y * size - 0.5;
    // windowed to 4 sigma; the tail is below 3e-4
    const int r = static_cast<int>(std::ceil(4.0 * sigma));
    const int i0 = std::max(0, static_cast<int>(std::floor(cy)) - r);
    const int i1 = std::min(size - 1, static_cast<int>(std::ceil(cy)) + r);
    const int j0 = std::max(0, static_cast<int>(std::floor(cx)) - r);
    const int j1 = std::min(size - 1, static_cast<int>(std::ceil(cx)) + r);
    for (int i = i0; i <= i1; ++i)
      for (int j = j0; j <= j1; ++j) {
        const double dx = j - cx, dy = i - cy;
        t.mut(k * plane + static_cast<std::int64_t>(i) * size + j) = std::exp(-(dx * dx + dy * dy) * inv);
      }
  }
  return t;
}

double yaw_lerp(double from_deg, double to_deg, double alpha) {
  double d = std::fmod(to_deg - from_deg, 360.0);
  if (d > 180.0) d -= 360.0;
  if (d <= -180.0) d += 360.0;
  double y = std::fmod(from_deg + alpha * d, 360.0);
  if (y < 0.0) y += 360.0;
  return y;
}

// ---------------------------------------------------------------------------
// dataset
// ---------------------------------------------------------------------------

std::vector<int> Dataset::train_ids() const {
  std::vector<int> ids;
  for (std::size_t i = 0; i < persons.size(); ++i)
    if (!persons[i].is_test) ids.push_back(static_cast<int>(i));
  return ids;
}

std::vector<int> Dataset::test_ids() const {
  std::vector<int> ids;
  for (std::size_t i = 0; i < persons.size(); ++i)
    if (persons[i].is_test) ids.push_back(static_cast<int>(i));
  return ids;
}

std::int64_t Dataset::frame_count() const {
  std::int64_t n = 0;
  for (const auto& p : persons) n += static_cast<std::int64_t>(p.frames.size());
  return n;
}

Dataset gen_dataset(int n_persons, double yaw_step_deg, int image_size, std::uint64_t seed) {
  if (n_persons < 2) throw std::invalid_argument("gen_dataset: need at least 2 persons");
  const double ratio = 360.0 / yaw_step_deg;
  if (yaw_step_deg <= 0.0 || std::fabs(ratio - std::llround(ratio)) > 1e-9)
    throw std::invalid_argument("gen_dataset: 360 must be divisible by yaw step " +
                                std::to_string(yaw_step_deg));
  const int n_yaws = static_cast<int>(std::llround(ratio));

  Dataset ds;
  ds.image_size = image_size;
  ds.yaw_step = yaw_step_deg;
  ds.seed = seed;
  Rng rng(seed);

  for (int i = 0; i < n_persons; ++i) {
    Rng prng = rng.child(0x706572ULL + static_cast<std::uint64_t>(i));
    DatasetPerson dp;
    dp.person = random_person(i, prng);
    for (int y = 0; y < n_yaws; ++y) {
      DatasetFrame fr;
      fr.yaw = y * yaw_step_deg;
      fr.skel = skeleton_at_yaw(dp.person, fr.yaw);
      dp.frames.push_back(std::move(fr));
    }
    ds.persons.push_back(std::move(dp));
  }

  // split by person, roughly 4.6:1 like 23/5 of 28
  const int n_test = std::max(1, static_cast<int>(std::llround(n_persons / 5.6)));
  std::vector<int> order(static_cast<std::size_t>(n_persons));
  for (int i = 0; i < n_persons; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng srng = rng.child(0x73706c6974ULL);
  for (int i = n_persons - 1; i > 0; --i)
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(srng.randint(i + 1))]);
  for (int i = 0; i < n_test; ++i) ds.persons[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])].is_test = true;
  return ds;
}

void write_ppm(const std::string& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw std::invalid_argument("write_ppm: expected (3,H,W), got " + shape_str(image.shape()));
  const int h = image.dim(1), w = image.dim(2);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("write_ppm: cannot open '" + path + "'");
  f << "P6\n" << w << " " << h << "\n255\n";
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j)
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(image[c * plane + static_cast<std::int64_t>(i) * w + j], 0.0, 1.0);
        row[static_cast<std::size_t>(j) * 3 + static_cast<std::size_t>(c)] =
            static_cast<unsigned char>(std::lround(v * 255.0));
      }
    f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!f) throw std::runtime_error("write_ppm: write failed for '" + path + "'");
}

Tensor read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_ppm: cannot open '" + path + "'");
  std::string magic;
  int w = 0, h = 0, maxv = 0;
  f >> magic >> w >> h >> maxv;
  if (magic != "P6" || w <= 0 || h <= 0 || maxv != 255)
    throw std::runtime_error("read_ppm: unsupported header in '" + path + "'");
  f.get();  // single whitespace after maxval
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
  f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!f) throw std::runtime_error("read_ppm: truncated pixel data in '" + path + "'");
  Tensor img(Shape{3, h, w}, 0.0);
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      for (int c = 0; c < 3; ++c)
        img.mut(c * plane + static_cast<std::int64_t>(i) * w + j) =
            raw[(static_cast<std::size_t>(i) * w + j) * 3 + static_cast<std::size_t>(c)] / 255.0;
  return img;
}

void write_semantics_ppm(const std::string& path, const SemanticMap& sem) {
  Tensor img(Shape{3, sem.h, sem.w}, 0.0);
  const std::int64_t plane = static_cast<std::int64_t>(sem.h) * sem.w;
  for (std::int64_t i = 0; i < plane; ++i) {
    const double v = sem.labels[static_cast<std::size_t>(i)] * 36.0 / 255.0;
    img.mut(i) = v;
    img.mut(plane + i) = v;
    img.mut(2 * plane + i) = v;
  }
  write_ppm(path, img);
}

SemanticMap read_semantics_ppm(const std::string& path) {
  Tensor img = read_ppm(path);
  SemanticMap sem;
  sem.h = img.dim(1);
  sem.w = img.dim(2);
  sem.labels.resize(static_cast<std::size_t>(sem.h) * sem.w);
  for (std::size_t i = 0; i < sem.labels.size(); ++i) {
    const int label = static_cast<int>(std::lround(img[static_cast<std::int64_t>(i)] * 255.0 / 36.0));
    if (label < 0 || label >= kNumLabels)
      throw std::runtime_error("read_semantics_ppm: label out of range in '" + path + "'");
    sem.labels[i] = static_cast<std::uint8_t>(label);
  }
  return sem;
}

namespace {

using nlohmann::json;

json person_to_json(const Person& p) {
  return json{{"torso_len", p.torso_len},
              {"head_len", p.head_len},
              {"upper_arm", p.upper_arm},
              {"lower_arm", p.lower_arm},
              {"upper_leg", p.upper_leg},
              {"lower_leg", p.lower_leg},
              {"shoulder_hw", p.shoulder_hw},
              {"hip_hw", p.hip_hw},
              {"pattern", static_cast<int>(p.pattern)},
              {"color_a", p.color_a},
              {"color_b", p.color_b},
              {"color_leg", p.color_leg},
              {"seed", p.seed}};
}

Person person_from_json(int id, const json& j) {
  Person p;
  p.id = id;
  p.torso_len = j.at("torso_len");
  p.head_len = j.at("head_len");
  p.upper_arm = j.at("upper_arm");
  p.lower_arm = j.at("lower_arm");
  p.upper_leg = j.at("upper_leg");
  p.lower_leg = j.at("lower_leg");
  p.shoulder_hw = j.at("shoulder_hw");
  p.hip_hw = j.at("hip_hw");
  p.pattern = static_cast<TexturePattern>(j.at("pattern").get<int>());
  p.color_a = j.at("color_a");
  p.color_b = j.at("color_b");
  p.color_leg = j.at("color_leg");
  p.seed = j.at("seed");
  return p;
}

std::string frame_stub(int idx) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03d", idx);
  return buf;
}

std::string person_dir(int idx) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "person_%02d", idx);
  return buf;
}

}  // namespace

void write_dataset(const Dataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  json root;
  root["image_size"] = ds.image_size;
  root["yaw_step"] = ds.yaw_step;
  root["seed"] = ds.seed;
  root["n_persons"] = ds.persons.size();
  json jpersons = json::array();
  for (std::size_t pi = 0; pi < ds.persons.size(); ++pi) {
    const DatasetPerson& dp = ds.persons[pi];
    const std::string pdir = person_dir(static_cast<int>(pi));
    fs::create_directories(fs::path(dir) / pdir);
    json jp;
    jp["id"] = pi;
    jp["split"] = dp.is_test ? "test" : "train";
    jp["person"] = person_to_json(dp.person);
    json jframes = json::array();
    for (std::size_t fi = 0; fi < dp.frames.size(); ++fi) {
      const DatasetFrame& fr = dp.frames[fi];
      const std::string img_rel = pdir + "/frame_" + frame_stub(static_cast<int>(fi)) + ".ppm";
      const std::string sem_rel = pdir + "/sem_" + frame_stub(static_cast<int>(fi)) + ".ppm";
      write_ppm((fs::path(dir) / img_rel).string(),
                render_image(dp.person, fr.skel, ds.image_size));
      write_semantics_ppm((fs::path(dir) / sem_rel).string(),
                          render_semantics(dp.person, fr.skel, ds.image_size));
      json jf;
      jf["yaw"] = fr.yaw;
      jf["image"] = img_rel;
      jf["sem"] = sem_rel;
      json kps = json::array();
      json vis = json::array();
      for (int k = 0; k < kNumKeypoints; ++k) {
        kps.push_back({fr.skel.pts[static_cast<std::size_t>(k)].x, fr.skel.pts[static_cast<std::size_t>(k)].y});
        vis.push_back(fr.skel.visible(k));
      }
      jf["keypoints"] = kps;
      jf["visibility"] = vis;
      jframes.push_back(std::move(jf));
    }
    jp["frames"] = std::move(jframes);
    jpersons.push_back(std::move(jp));
  }
  root["persons"] = std::move(jpersons);
  std::ofstream f((fs::path(dir) / "index.json").string(), std::ios::trunc);
  if (!f) throw std::runtime_error("write_dataset: cannot write index in '" + dir + "'");
  f << root.dump(1) << "\n";
}

Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream f((fs::path(dir) / "index.json").string());
  if (!f) throw std::runtime_error("load_dataset: cannot open index in '" + dir + "'");
  json root = json::parse(f);
  Dataset ds;
  ds.image_size = root.at("image_size");
  ds.yaw_step = root.at("yaw_step");
  ds.seed = root.at("seed");
  ds.root = dir;
  for (const auto& jp : root.at("persons")) {
    DatasetPerson dp;
    dp.person = person_from_json(jp.at("id").get<int>(), jp.at("person"));
    dp.is_test = jp.at("split").get<std::string>() == "test";
    for (const auto& jf : jp.at("frames")) {
      DatasetFrame fr;
      fr.yaw = jf.at("yaw");
      fr.image_path = jf.at("image");
      fr.sem_path = jf.at("sem");
      const auto& kps = jf.at("keypoints");
      const auto& vis = jf.at("visibility");
      for (int k = 0; k < kNumKeypoints; ++k) {
        fr.skel.pts[static_cast<std::size_t>(k)] = {kps[static_cast<std::size_t>(k)][0], kps[static_cast<std::size_t>(k)][1]};
        fr.skel.vis[static_cast<std::size_t>(k)] = vis[static_cast<std::size_t>(k)].get<bool>() ? 1 : 0;
      }
      dp.frames.push_back(std::move(fr));
    }
    ds.persons.push_back(std::move(dp));
  }
  return ds;
}

std::uint64_t dataset_digest(const std::string& dir) {
  namespace fs = std::filesystem;
  std::uint64_t h = file_digest((fs::path(dir) / "index.json").string());
  const Dataset ds = load_dataset(dir);
  for (const auto& dp : ds.persons)
    for (const auto& fr : dp.frames) {
      const std::uint64_t hi = file_digest((fs::path(dir) / fr.image_path).string());
      const std::uint64_t hs = file_digest((fs::path(dir) / fr.sem_path).string());
      h = fnv1a64(reinterpret_cast<const std::uint8_t*>(&hi), 8) ^ (h * 0x100000001b3ULL);
      h = fnv1a64(reinterpret_cast<const std::uint8_t*>(&hs), 8) ^ (h * 0x100000001b3ULL);
    }
  return h;
}

}  // namespace iepg
