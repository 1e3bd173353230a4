#pragma once

#include <sstream>

#include "tween/rng.hpp"
#include "tween/skeleton.hpp"

namespace tween::test {

// root -> link1 -> link2 chain with wide (but gimbal-safe) ranges.
inline Skeleton two_bone_skeleton() {
  static const char* kTable = R"(# tween joint limit table v1
root - xzy -360 360 -360 360 -360 360
link1 root xzy -170 170 -170 170 -85 85
link2 link1 xzy -170 170 -170 170 -85 85
)";
  Skeleton sk;
  std::istringstream in(kTable);
  sk.limits = JointLimitTable::load(in);
  sk.rest_offsets = {{0, 0, 0}, {0, 10, 0}, {0, 7, 0}};
  sk.validate();
  return sk;
}

// Unconstrained network-style raw vector with a well-conditioned 6D root.
inline std::vector<double> random_raw(const Skeleton& sk, Rng& rng,
                                      double span = 2.0) {
  std::vector<double> raw(size_t(sk.raw_dim()));
  for (int i = 0; i < 6; ++i) raw[size_t(i)] = rng.uniform(-1.0, 1.0);
  raw[0] += 2.0;  // keep the first 6D vector away from zero
  raw[4] += 2.0;
  for (int i = 6; i < sk.raw_dim(); ++i) raw[size_t(i)] = rng.uniform(-span, span);
  return raw;
}

// Random rotations built from in-range Euler angles, one per joint.
inline std::vector<Mat3> random_joint_rotations(const Skeleton& sk, Rng& rng,
                                                double margin = 0.9) {
  std::vector<Mat3> rot(size_t(sk.joint_count()), Mat3::Identity());
  for (int j = 1; j < sk.joint_count(); ++j) {
    const auto& lim = sk.limits.joints[j];
    Vec3 u;
    for (int a = 0; a < 3; ++a) {
      const auto& r = lim.range[a];
      u[a] = r.mid() + 0.5 * margin * r.width() * (2.0 * rng.uniform() - 1.0);
    }
    rot[size_t(j)] = euler_to_matrix(u, lim.order);
  }
  return rot;
}

}  // namespace tween::test
