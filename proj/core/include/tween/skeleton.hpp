#pragma once

#include <span>
#include <vector>

#include "tween/rotmath.hpp"

namespace tween {

// Joint hierarchy with rest offsets (T-pose, centimeters) and the limit
// table. Joints are stored in topological order (parent[j] < j), root at 0.
struct Skeleton {
  JointLimitTable limits;
  std::vector<Vec3> rest_offsets;  // offset from parent, cm; root entry is zero

  int joint_count() const { return limits.joint_count(); }
  int parent(int j) const { return limits.joints[j].parent; }

  // Network channel layout constants.
  int pose_dim() const { return 3 * joint_count(); }            // 3M
  int local_dim() const { return 3 * (joint_count() - 1); }     // 3(M-1)
  int raw_dim() const { return 6 + 3 * (joint_count() - 1); }   // 6+3(M-1)

  void validate() const;  // throws on structural problems
  uint64_t hash() const;

  void serialize(std::ostream& out) const;
  static Skeleton deserialize(std::istream& in);
};

// The appendix-table skeleton with default T-pose offsets.
Skeleton default_skeleton();

// One frame of local pose: root orientation plus per-joint local rotations
// and root-relative joint positions (world-oriented, root row zero).
struct LocalPoseFrame {
  Mat3 root_rotation = Mat3::Identity();
  std::vector<Mat3> joint_rotations;   // size M; index 0 (root) kept identity
  std::vector<Vec3> joint_positions;   // size M; root-relative, cm
};

// Positions from local rotations with an identity root: position[root] = 0,
// every bone keeps its rest length. rotations[0] is ignored.
std::vector<Vec3> forward_kinematics(std::span<const Mat3> rotations,
                                     const Skeleton& skeleton);

// Range-constrained decode of one frame of network output:
// raw = [root 6D | per non-root joint 3 unconstrained Euler channels].
// Root rotation from the 6D decode, non-root rotations through map_to_range
// and euler_to_matrix, positions = root_rotation * FK(rotations).
LocalPoseFrame rc_fk_decode(std::span<const double> raw, const Skeleton& skeleton);

// Lambda: strips the root orientation from the positions.
std::vector<Vec3> remove_root_rotation(const LocalPoseFrame& pose);

// Differentiable kernel behind rc_fk_decode, shared with the tape op in the
// network module. Forward caches everything backward needs; gradients are
// gated by grad_check (see network.hpp).
struct RcfkCache {
  std::vector<double> tanh_v;   // 3(M-1)
  std::vector<Mat3> rot;        // M local rotations (root identity)
  std::vector<Mat3> world;      // M identity-root world rotations
  std::vector<Vec3> pos;        // M identity-root positions
  Mat3 root_rotation;
  Vec3 gs_a, gs_b, gs_x, gs_w, gs_y;  // Gram-Schmidt intermediates
  double gs_an = 0.0, gs_wn = 0.0;
};

// out_local: 3(M-1) non-root positions (joint-major x,y,z). When
// apply_root_rotation is false the output is the derotated local pose
// (identical to remove_root_rotation of the rotated decode).
void rcfk_frame_forward(std::span<const double> raw, const Skeleton& skeleton,
                        bool apply_root_rotation, RcfkCache* cache,
                        std::span<double> out_local);

// grad_local: dL/d(out_local); grad_raw accumulated (+=), length raw_dim().
void rcfk_frame_backward(const RcfkCache& cache, const Skeleton& skeleton,
                         bool apply_root_rotation,
                         std::span<const double> grad_local,
                         std::span<double> grad_raw);

}  // namespace tween
