#include "tween/skeleton.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace tween {

void Skeleton::validate() const {
  limits.validate();
  if (int(rest_offsets.size()) != joint_count())
    throw std::runtime_error("skeleton: offsets/limits size mismatch");
  if (!limits.joints[0].is_root)
    throw std::runtime_error("skeleton: root must be joint 0");
  for (int j = 1; j < joint_count(); ++j) {
    if (parent(j) >= j) throw std::runtime_error("skeleton: not topologically ordered");
    if (rest_offsets[j].norm() <= 0.0)
      throw std::runtime_error("skeleton: zero-length bone at " + limits.joints[j].name);
  }
}

namespace {

uint64_t fnv1a(const void* data, size_t n, uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

uint64_t Skeleton::hash() const {
  uint64_t h = limits.hash();
  for (const auto& o : rest_offsets) {
    double v[3] = {o.x(), o.y(), o.z()};
    h = fnv1a(v, sizeof(v), h);
  }
  return h;
}

void Skeleton::serialize(std::ostream& out) const {
  limits.save(out);
  out << "offsets\n";
  for (int j = 0; j < joint_count(); ++j) {
    std::ostringstream row;
    row.precision(17);
    row << rest_offsets[j].x() << ' ' << rest_offsets[j].y() << ' '
        << rest_offsets[j].z();
    out << row.str() << '\n';
  }
}

Skeleton Skeleton::deserialize(std::istream& in) {
  std::ostringstream table_text;
  std::string line;
  while (std::getline(in, line)) {
    if (line == "offsets") break;
    table_text << line << '\n';
  }
  std::istringstream table_in(table_text.str());
  Skeleton sk;
  sk.limits = JointLimitTable::load(table_in);
  sk.rest_offsets.resize(sk.joint_count());
  for (int j = 0; j < sk.joint_count(); ++j) {
    if (!std::getline(in, line))
      throw std::runtime_error("skeleton: truncated offsets");
    std::istringstream row(line);
    if (!(row >> sk.rest_offsets[j].x() >> sk.rest_offsets[j].y() >>
          sk.rest_offsets[j].z()))
      throw std::runtime_error("skeleton: bad offset row");
  }
  sk.validate();
  return sk;
}

Skeleton default_skeleton() {
  Skeleton sk;
  sk.limits = builtin_limit_table();
  // T-pose offsets, cm, y up, z forward, arms along x. Proportions are
  // plausible for the appendix hierarchy; real corpora replace them with the
  // offsets parsed from BVH.
  static const std::map<std::string, Vec3> kOffsets = {
      {"hip", {0, 0, 0}},
      {"abdomen", {0, 10, 0}},
      {"chest", {0, 12, 0}},
      {"neck", {0, 22, 0}},
      {"head", {0, 8, 0}},
      {"leftEye", {3, 4, 8}},
      {"leftEye_Nub", {0, 0, 3}},
      {"rightEye", {-3, 4, 8}},
      {"rightEye_Nub", {0, 0, 3}},
      {"rCollar", {-4, 16, 0}},
      {"rShldr", {-12, 0, 0}},
      {"rForeArm", {-28, 0, 0}},
      {"rHand", {-26, 0, 0}},
      {"rThumb1", {-3, 0, 3}},
      {"rThumb2", {-3, 0, 1}},
      {"rThumb_Nub", {-2, 0, 1}},
      {"rIndex1", {-9, 0, 3}},
      {"rIndex2", {-3.5, 0, 0}},
      {"rIndex2_Nub", {-2.5, 0, 0}},
      {"rMid1", {-9, 0, 1}},
      {"rMid2", {-4, 0, 0}},
      {"rMid_Nub", {-3, 0, 0}},
      {"rRing1", {-9, 0, -1}},
      {"rRing2", {-3.5, 0, 0}},
      {"rRing_Nub", {-2.5, 0, 0}},
      {"rPinky1", {-8, 0, -3}},
      {"rPinky2", {-3, 0, 0}},
      {"rPinky_Nub", {-2, 0, 0}},
      {"lCollar", {4, 16, 0}},
      {"lShldr", {12, 0, 0}},
      {"lForeArm", {28, 0, 0}},
      {"lHand", {26, 0, 0}},
      {"lThumb1", {3, 0, 3}},
      {"lThumb2", {3, 0, 1}},
      {"lThumb_Nub", {2, 0, 1}},
      {"lIndex1", {9, 0, 3}},
      {"lIndex2", {3.5, 0, 0}},
      {"lIndex2_Nub", {2.5, 0, 0}},
      {"lMid1", {9, 0, 1}},
      {"lMid2", {4, 0, 0}},
      {"lMid_Nub", {3, 0, 0}},
      {"lRing1", {9, 0, -1}},
      {"lRing2", {3.5, 0, 0}},
      {"lRing_Nub", {2.5, 0, 0}},
      {"lPinky1", {8, 0, -3}},
      {"lPinky2", {3, 0, 0}},
      {"lPinky_Nub", {2, 0, 0}},
      {"rButtock", {-9, -5, 0}},
      {"rThigh", {0, -5, 0}},
      {"rShin", {0, -42, 0}},
      {"rFoot", {0, -40, 0}},
      {"rFoot_Nub", {0, -7, 14}},
      {"lButtock", {9, -5, 0}},
      {"lThigh", {0, -5, 0}},
      {"lShin", {0, -42, 0}},
      {"lFoot", {0, -40, 0}},
      {"lFoot_Nub", {0, -7, 14}},
  };
  sk.rest_offsets.resize(sk.joint_count());
  for (int j = 0; j < sk.joint_count(); ++j) {
    auto it = kOffsets.find(sk.limits.joints[j].name);
    if (it == kOffsets.end())
      throw std::runtime_error("default_skeleton: missing offset for " +
                               sk.limits.joints[j].name);
    sk.rest_offsets[j] = it->second;
  }
  sk.validate();
  return sk;
}

std::vector<Vec3> forward_kinematics(std::span<const Mat3> rotations,
                                     const Skeleton& skeleton) {
  const int m = skeleton.joint_count();
  if (int(rotations.size()) != m)
    throw std::invalid_argument("forward_kinematics: need one rotation per joint");
  std::vector<Mat3> world(m);
  std::vector<Vec3> pos(m);
  world[0] = Mat3::Identity();
  pos[0] = Vec3::Zero();
  for (int j = 1; j < m; ++j) {
    const int p = skeleton.parent(j);
    world[j] = world[p] * rotations[j];
    pos[j] = pos[p] + world[p] * skeleton.rest_offsets[j];
  }
  return pos;
}

LocalPoseFrame rc_fk_decode(std::span<const double> raw, const Skeleton& skeleton) {
  const int m = skeleton.joint_count();
  if (int(raw.size()) != skeleton.raw_dim())
    throw std::invalid_argument("rc_fk_decode: raw length mismatch");
  LocalPoseFrame frame;
  Vec6 r6;
  for (int i = 0; i < 6; ++i) r6[i] = raw[i];
  frame.root_rotation = sixd_to_matrix(r6);
  frame.joint_rotations.assign(m, Mat3::Identity());
  for (int j = 1; j < m; ++j) {
    const auto& lim = skeleton.limits.joints[j];
    const Vec3 v(raw[6 + 3 * (j - 1)], raw[6 + 3 * (j - 1) + 1],
                 raw[6 + 3 * (j - 1) + 2]);
    frame.joint_rotations[j] = euler_to_matrix(map_to_range(v, lim.range), lim.order);
  }
  auto pos = forward_kinematics(frame.joint_rotations, skeleton);
  frame.joint_positions.resize(m);
  for (int j = 0; j < m; ++j) frame.joint_positions[j] = frame.root_rotation * pos[j];
  return frame;
}

std::vector<Vec3> remove_root_rotation(const LocalPoseFrame& pose) {
  std::vector<Vec3> out(pose.joint_positions.size());
  const Mat3 rt = pose.root_rotation.transpose();
  for (size_t j = 0; j < out.size(); ++j) out[j] = rt * pose.joint_positions[j];
  return out;
}

namespace {

// d/da of the single-axis rotation matrices.
Mat3 rotation_x_deriv(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << 0, 0, 0, 0, -s, -c, 0, c, -s;
  return r;
}
Mat3 rotation_y_deriv(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << -s, 0, c, 0, 0, 0, -c, 0, -s;
  return r;
}
Mat3 rotation_z_deriv(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << -s, -c, 0, c, -s, 0, 0, 0, 0;
  return r;
}

}  // namespace

void rcfk_frame_forward(std::span<const double> raw, const Skeleton& skeleton,
                        bool apply_root_rotation, RcfkCache* cache,
                        std::span<double> out_local) {
  const int m = skeleton.joint_count();
  if (int(raw.size()) != skeleton.raw_dim())
    throw std::invalid_argument("rcfk_frame_forward: raw length mismatch");
  if (int(out_local.size()) != skeleton.local_dim())
    throw std::invalid_argument("rcfk_frame_forward: output length mismatch");

  RcfkCache local_cache;
  RcfkCache& c = cache ? *cache : local_cache;
  c.tanh_v.resize(3 * (m - 1));
  c.rot.assign(m, Mat3::Identity());
  c.world.assign(m, Mat3::Identity());
  c.pos.assign(m, Vec3::Zero());

  // Root: Gram-Schmidt of the two 6D vectors.
  c.gs_a = Vec3(raw[0], raw[1], raw[2]);
  c.gs_b = Vec3(raw[3], raw[4], raw[5]);
  c.gs_an = c.gs_a.norm();
  if (c.gs_an < 1e-12)
    throw std::invalid_argument("rcfk: degenerate 6D root (zero first vector)");
  c.gs_x = c.gs_a / c.gs_an;
  c.gs_w = c.gs_b - c.gs_x.dot(c.gs_b) * c.gs_x;
  c.gs_wn = c.gs_w.norm();
  if (c.gs_wn < 1e-12 * std::max(1.0, c.gs_b.norm()))
    throw std::invalid_argument("rcfk: degenerate 6D root (parallel vectors)");
  c.gs_y = c.gs_w / c.gs_wn;
  c.root_rotation.col(0) = c.gs_x;
  c.root_rotation.col(1) = c.gs_y;
  c.root_rotation.col(2) = c.gs_x.cross(c.gs_y);

  for (int j = 1; j < m; ++j) {
    const auto& lim = skeleton.limits.joints[j];
    Vec3 u;
    for (int a = 0; a < 3; ++a) {
      const double t = std::tanh(raw[6 + 3 * (j - 1) + a]);
      c.tanh_v[3 * (j - 1) + a] = t;
      u[a] = 0.5 * lim.range[a].width() * t + lim.range[a].mid();
    }
    c.rot[j] = euler_to_matrix(u, lim.order);
  }

  for (int j = 1; j < m; ++j) {
    const int p = skeleton.parent(j);
    c.world[j] = c.world[p] * c.rot[j];
    c.pos[j] = c.pos[p] + c.world[p] * skeleton.rest_offsets[j];
  }

  for (int j = 1; j < m; ++j) {
    const Vec3 out = apply_root_rotation ? Vec3(c.root_rotation * c.pos[j]) : c.pos[j];
    out_local[3 * (j - 1) + 0] = out.x();
    out_local[3 * (j - 1) + 1] = out.y();
    out_local[3 * (j - 1) + 2] = out.z();
  }
}

void rcfk_frame_backward(const RcfkCache& c, const Skeleton& skeleton,
                         bool apply_root_rotation,
                         std::span<const double> grad_local,
                         std::span<double> grad_raw) {
  const int m = skeleton.joint_count();
  std::vector<Vec3> g_pos(m, Vec3::Zero());
  std::vector<Mat3> g_world(m, Mat3::Zero());
  Mat3 g_root = Mat3::Zero();

  for (int j = 1; j < m; ++j) {
    const Vec3 g(grad_local[3 * (j - 1)], grad_local[3 * (j - 1) + 1],
                 grad_local[3 * (j - 1) + 2]);
    if (apply_root_rotation) {
      g_root += g * c.pos[j].transpose();
      g_pos[j] = c.root_rotation.transpose() * g;
    } else {
      g_pos[j] = g;
    }
  }

  // FK adjoint in reverse topological order.
  for (int j = m - 1; j >= 1; --j) {
    const int p = skeleton.parent(j);
    g_pos[p] += g_pos[j];
    g_world[p] += g_pos[j] * skeleton.rest_offsets[j].transpose();
    g_world[p] += g_world[j] * c.rot[j].transpose();
    const Mat3 g_rot = c.world[p].transpose() * g_world[j];

    // Euler chain: R = P1(t1) P2(t2) P3(t3) in the joint's order.
    const auto& lim = skeleton.limits.joints[j];
    const double* tv = &c.tanh_v[3 * (j - 1)];
    Vec3 u;
    for (int a = 0; a < 3; ++a)
      u[a] = 0.5 * lim.range[a].width() * tv[a] + lim.range[a].mid();
    int axes[3];
    if (lim.order == EulerOrder::XZY) {
      axes[0] = 0; axes[1] = 2; axes[2] = 1;
    } else {
      axes[0] = 1; axes[1] = 0; axes[2] = 2;
    }
    Mat3 p1, p2, p3, d1, d2, d3;
    auto fill = [&](int axis, double ang, Mat3& rot, Mat3& der) {
      switch (axis) {
        case 0: rot = rotation_x(ang); der = rotation_x_deriv(ang); break;
        case 1: rot = rotation_y(ang); der = rotation_y_deriv(ang); break;
        default: rot = rotation_z(ang); der = rotation_z_deriv(ang); break;
      }
    };
    fill(axes[0], u[axes[0]], p1, d1);
    fill(axes[1], u[axes[1]], p2, d2);
    fill(axes[2], u[axes[2]], p3, d3);

    Vec3 g_u = Vec3::Zero();
    g_u[axes[0]] = (g_rot.cwiseProduct(d1 * p2 * p3)).sum();
    g_u[axes[1]] = (g_rot.cwiseProduct(p1 * d2 * p3)).sum();
    g_u[axes[2]] = (g_rot.cwiseProduct(p1 * p2 * d3)).sum();

    for (int a = 0; a < 3; ++a) {
      const double du_dv = 0.5 * lim.range[a].width() * (1.0 - tv[a] * tv[a]);
      grad_raw[6 + 3 * (j - 1) + a] += g_u[a] * du_dv;
    }
  }

  if (apply_root_rotation) {
    // Gram-Schmidt adjoint.
    const Vec3 g_z = g_root.col(2);
    Vec3 g_x = g_root.col(0) + c.gs_y.cross(g_z);
    Vec3 g_y = g_root.col(1) + g_z.cross(c.gs_x);
    const Vec3 g_w = (g_y - c.gs_y * c.gs_y.dot(g_y)) / c.gs_wn;
    const Vec3 g_b = g_w - c.gs_x * c.gs_x.dot(g_w);
    g_x += -c.gs_b * c.gs_x.dot(g_w) - c.gs_x.dot(c.gs_b) * g_w;
    const Vec3 g_a = (g_x - c.gs_x * c.gs_x.dot(g_x)) / c.gs_an;
    for (int i = 0; i < 3; ++i) {
      grad_raw[i] += g_a[i];
      grad_raw[3 + i] += g_b[i];
    }
  }
}

}  // namespace tween
