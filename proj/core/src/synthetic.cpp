#include "tween/synthetic.hpp"

#include <array>
#include <cmath>
#include <sstream>

namespace tween {

Skeleton compact_skeleton() {
  static const char* kTable = R"(# tween joint limit table v1
hip - xzy -360 360 -360 360 -360 360
spine hip xzy -45 68 -30 30 -45 45
chest spine xzy -45 45 -30 30 -45 45
head chest xzy -37 22 -30 30 -45 45
lArm chest xzy -90 135 -110 30 -70 60
lElbow lArm yxz 0 0 0 150 -30 120
lElbow_Nub lElbow xzy nub
rArm chest xzy -90 135 -30 110 -70 60
rElbow rArm yxz 0 0 0 150 -30 120
rElbow_Nub rElbow xzy nub
lThigh hip xzy -180 100 -180 90 -60 70
lShin lThigh xzy 0 170 0 0 0 0
lShin_Nub lShin xzy nub
rThigh hip xzy -180 100 -180 90 -60 70
rShin rThigh xzy 0 170 0 0 0 0
rShin_Nub rShin xzy nub
)";
  Skeleton sk;
  std::istringstream in(kTable);
  sk.limits = JointLimitTable::load(in);
  sk.rest_offsets = {
      {0, 0, 0},    {0, 12, 0},  {0, 15, 0},   {0, 20, 0},
      {15, 12, 0},  {25, 0, 0},  {22, 0, 0},   {-15, 12, 0},
      {-25, 0, 0},  {-22, 0, 0}, {9, -4, 0},   {0, -40, 0},
      {0, -40, 6},  {-9, -4, 0}, {0, -40, 0},  {0, -40, 6},
  };
  sk.validate();
  return sk;
}

MotionClip make_synthetic_clip(const Skeleton& skeleton, int length, uint64_t seed,
                               const std::string& class_label) {
  Rng rng(seed);
  const int m = skeleton.joint_count();

  // Oscillator frequencies come from a per-class pool so clips of one class
  // share a pose manifold; amplitudes and phases vary per clip.
  uint64_t class_hash = 0xcbf29ce484222325ull;
  for (unsigned char c : class_label) {
    class_hash ^= c;
    class_hash *= 0x100000001b3ull;
  }
  Rng class_rng(class_hash);
  struct Osc {
    double a1, w1, p1, a2, w2, p2;
  };
  std::vector<std::array<Osc, 3>> osc(m);
  for (int j = 1; j < m; ++j)
    for (int a = 0; a < 3; ++a) {
      Osc& o = osc[j][a];
      o.w1 = 2.0 * kPi / class_rng.uniform(60.0, 220.0);
      o.w2 = 2.0 * kPi / class_rng.uniform(50.0, 320.0);
      o.a1 = rng.uniform(0.4, 1.0);
      o.a2 = rng.uniform(0.1, 0.5);
      o.p1 = rng.uniform(0.0, 2.0 * kPi);
      o.p2 = rng.uniform(0.0, 2.0 * kPi);
    }
  const double yaw_amp = rng.uniform(0.2, 1.2);
  const double yaw_w = 2.0 * kPi / rng.uniform(200.0, 600.0);
  const double yaw_p = rng.uniform(0.0, 2.0 * kPi);
  const double base_height = rng.uniform(85.0, 95.0);

  // Feet indices for the velocity coupling; fall back to the last two joints.
  int lfoot = skeleton.limits.index_of("lShin_Nub");
  int rfoot = skeleton.limits.index_of("rShin_Nub");
  if (lfoot < 0) lfoot = m - 1;
  if (rfoot < 0) rfoot = std::max(1, m - 4);
  // Global coupling: root velocity is the same function of the pose for
  // every clip, so it is learnable across the corpus.
  const double cx = 0.05;
  const double cz = 0.05;

  MotionClip clip;
  clip.class_label = class_label;
  clip.source_id = "synthetic-" + std::to_string(seed);
  clip.fps = 60;
  clip.frames.resize(length);
  clip.root_positions.resize(length);
  clip.clamp_flags.assign(length, 0);
  clip.violation_deg.assign(length, 0.0);

  Vec3 root(0.0, base_height, 0.0);
  for (int t = 0; t < length; ++t) {
    LocalPoseFrame& f = clip.frames[t];
    f.joint_rotations.assign(m, Mat3::Identity());
    for (int j = 1; j < m; ++j) {
      const auto& lim = skeleton.limits.joints[j];
      Vec3 u;
      for (int a = 0; a < 3; ++a) {
        const Osc& o = osc[j][a];
        const double mix =
            (o.a1 * std::sin(o.w1 * t + o.p1) + o.a2 * std::sin(o.w2 * t + o.p2)) /
            (o.a1 + o.a2);
        u[a] = lim.range[a].mid() + 0.32 * lim.range[a].width() * mix;
      }
      f.joint_rotations[j] = euler_to_matrix(u, lim.order);
    }
    f.root_rotation = rotation_y(yaw_amp * std::sin(yaw_w * t + yaw_p));
    auto pos = forward_kinematics(f.joint_rotations, skeleton);
    f.joint_positions.resize(m);
    for (int j = 0; j < m; ++j) f.joint_positions[j] = f.root_rotation * pos[j];

    const Vec3 d = f.joint_positions[lfoot] - f.joint_positions[rfoot];
    root.x() += cx * d.x();
    root.z() += cz * d.z();
    root.y() = base_height + 2.0 * std::sin(2.0 * kPi * t / 150.0);
    clip.root_positions[t] = root;
  }
  return clip;
}

std::vector<MotionClip> make_synthetic_clips(const Skeleton& skeleton, int count,
                                             int length, uint64_t seed,
                                             int n_classes) {
  std::vector<MotionClip> clips;
  clips.reserve(count);
  for (int i = 0; i < count; ++i)
    clips.push_back(make_synthetic_clip(skeleton, length, seed + i,
                                        "class" + std::to_string(i % n_classes)));
  return clips;
}

}  // namespace tween
