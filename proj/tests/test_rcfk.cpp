#include <doctest.h>

#include <Eigen/Geometry>
#include <cmath>

#include "support.hpp"
#include "tween/network.hpp"
#include "tween/skeleton.hpp"

using namespace tween;

TEST_CASE("forward kinematics reproduces the T-pose under identity rotations") {
  const Skeleton sk = default_skeleton();
  std::vector<Mat3> rot(size_t(sk.joint_count()), Mat3::Identity());
  const auto pos = forward_kinematics(rot, sk);
  CHECK(pos[0].norm() == 0.0);
  for (int j = 1; j < sk.joint_count(); ++j) {
    Vec3 acc = Vec3::Zero();
    for (int k = j; k != 0; k = sk.parent(k)) acc += sk.rest_offsets[size_t(k)];
    CHECK((pos[size_t(j)] - acc).norm() < 1e-12);
  }
}

TEST_CASE("two-bone chain matches a homogeneous-transform oracle") {
  const Skeleton sk = test::two_bone_skeleton();
  std::vector<Mat3> rot(3, Mat3::Identity());
  rot[1] = rotation_z(kPi / 2);

  // Oracle: explicit 4x4 chains via Eigen::Affine3d.
  Eigen::Affine3d t1 = Eigen::Translation3d(sk.rest_offsets[1]) * rot[1];
  Eigen::Affine3d t2 = t1 * (Eigen::Translation3d(sk.rest_offsets[2]) * rot[2]);

  const auto pos = forward_kinematics(rot, sk);
  CHECK((pos[1] - t1.translation()).norm() < 1e-14);
  CHECK((pos[2] - t2.translation()).norm() < 1e-14);
  // 90 deg about z swings the +y bone onto -x.
  CHECK(pos[2].x() == doctest::Approx(-7.0));
  CHECK(pos[2].y() == doctest::Approx(10.0));

  Rng rng(3);
  for (int it = 0; it < 100; ++it) {
    const auto rr = test::random_joint_rotations(sk, rng);
    Eigen::Affine3d a1 = Eigen::Translation3d(sk.rest_offsets[1]) * rr[1];
    Eigen::Affine3d a2 = a1 * (Eigen::Translation3d(sk.rest_offsets[2]) * rr[2]);
    const auto p = forward_kinematics(rr, sk);
    CHECK((p[1] - a1.translation()).norm() < 1e-12);
    CHECK((p[2] - a2.translation()).norm() < 1e-12);
  }
}

TEST_CASE("bone lengths survive random rotations on the full skeleton") {
  const Skeleton sk = default_skeleton();
  Rng rng(5);
  for (int it = 0; it < 50; ++it) {
    const auto rot = test::random_joint_rotations(sk, rng);
    const auto pos = forward_kinematics(rot, sk);
    for (int j = 1; j < sk.joint_count(); ++j) {
      const double rest = sk.rest_offsets[size_t(j)].norm();
      const double got = (pos[size_t(j)] - pos[size_t(sk.parent(j))]).norm();
      CHECK(std::abs(got - rest) / rest < 1e-6);
    }
  }
}

TEST_CASE("rc_fk_decode of the neutral raw vector is an identity-rooted T-pose") {
  const Skeleton sk = default_skeleton();
  std::vector<double> raw(size_t(sk.raw_dim()), 0.0);
  raw[0] = 1.0;
  raw[4] = 1.0;
  const auto frame = rc_fk_decode(raw, sk);
  CHECK((frame.root_rotation - Mat3::Identity()).norm() < 1e-14);
  CHECK(frame.joint_positions[0].norm() == 0.0);
  // Fixed joints decode to their mid-range constant; zero-range means identity.
  const int eye = sk.limits.index_of("leftEye");
  CHECK((frame.joint_rotations[size_t(eye)] - Mat3::Identity()).norm() < 1e-14);
}

TEST_CASE("decoded rotations always respect the joint limits") {
  const Skeleton sk = default_skeleton();
  Rng rng(9);
  for (int it = 0; it < 300; ++it) {
    const auto raw = test::random_raw(sk, rng, 4.0);
    const auto frame = rc_fk_decode(raw, sk);
    for (int j = 1; j < sk.joint_count(); ++j) {
      const auto& lim = sk.limits.joints[size_t(j)];
      const auto ex = matrix_to_euler(frame.joint_rotations[size_t(j)], lim.order);
      for (int a = 0; a < 3; ++a) {
        const auto& r = lim.range[a];
        if (r.fixed()) {
          CHECK(std::abs(ex.angles[a] - r.mid()) < 1e-9);
        } else {
          CHECK(ex.angles[a] > r.min_rad - 1e-9);
          CHECK(ex.angles[a] < r.max_rad + 1e-9);
        }
      }
    }
  }
}

TEST_CASE("rc_fk_decode validates input") {
  const Skeleton sk = test::two_bone_skeleton();
  std::vector<double> short_raw(size_t(sk.raw_dim()) - 1, 0.0);
  CHECK_THROWS(rc_fk_decode(short_raw, sk));
  std::vector<double> degenerate(size_t(sk.raw_dim()), 0.0);
  CHECK_THROWS_AS(rc_fk_decode(degenerate, sk), std::invalid_argument);
}

TEST_CASE("remove_root_rotation inverts the applied orientation") {
  const Skeleton sk = default_skeleton();
  std::vector<double> raw(size_t(sk.raw_dim()), 0.0);
  raw[0] = 1.0;
  raw[4] = 1.0;
  auto frame = rc_fk_decode(raw, sk);
  const auto tpose = frame.joint_positions;

  frame.root_rotation = rotation_y(kPi / 2);
  for (auto& p : frame.joint_positions) p = frame.root_rotation * p;
  const auto dero = remove_root_rotation(frame);
  for (size_t j = 0; j < dero.size(); ++j) CHECK((dero[j] - tpose[j]).norm() < 1e-12);

  Rng rng(21);
  for (int it = 0; it < 50; ++it) {
    const auto raw2 = test::random_raw(sk, rng);
    auto f = rc_fk_decode(raw2, sk);
    const auto base = remove_root_rotation(f);
    const Mat3 extra = euler_to_matrix(
        Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)),
        EulerOrder::XZY);
    LocalPoseFrame g = f;
    g.root_rotation = extra * f.root_rotation;
    for (size_t j = 0; j < g.joint_positions.size(); ++j)
      g.joint_positions[j] = extra * f.joint_positions[j];
    const auto dero2 = remove_root_rotation(g);
    for (size_t j = 0; j < dero2.size(); ++j)
      CHECK((dero2[j] - base[j]).norm() < 1e-10);
  }
}

TEST_CASE("lambda path of the decode ignores the root channels") {
  const Skeleton sk = test::two_bone_skeleton();
  Rng rng(33);
  for (int it = 0; it < 50; ++it) {
    auto raw = test::random_raw(sk, rng);
    std::vector<double> lam1(size_t(sk.local_dim()));
    rcfk_frame_forward(raw, sk, false, nullptr, lam1);
    for (int i = 0; i < 6; ++i) raw[size_t(i)] = rng.uniform(-1.0, 1.0);
    raw[0] += 2.0;
    raw[4] += 2.0;
    std::vector<double> lam2(size_t(sk.local_dim()));
    rcfk_frame_forward(raw, sk, false, nullptr, lam2);
    for (int c = 0; c < sk.local_dim(); ++c)
      CHECK(lam1[size_t(c)] == doctest::Approx(lam2[size_t(c)]).epsilon(1e-12));
  }
}

TEST_CASE("rc_fk_decode gradients match central differences") {
  const Skeleton sk = test::two_bone_skeleton();
  Rng rng(41);
  const auto raw0 = test::random_raw(sk, rng);
  std::vector<double> probe(size_t(sk.local_dim()));
  for (auto& v : probe) v = rng.uniform(-1.0, 1.0);

  for (const bool rotated : {true, false}) {
    auto fn = [&](std::span<const double> params,
                  std::span<double> grad_out) -> double {
      std::vector<double> out(size_t(sk.local_dim()));
      RcfkCache cache;
      rcfk_frame_forward(params, sk, rotated, &cache, out);
      double loss = 0.0;
      for (size_t i = 0; i < out.size(); ++i) loss += probe[i] * out[i];
      if (!grad_out.empty()) {
        std::fill(grad_out.begin(), grad_out.end(), 0.0);
        rcfk_frame_backward(cache, sk, rotated, probe, grad_out);
      }
      return loss;
    };
    const auto res = nn::grad_check(fn, raw0, 1e-5);
    CHECK(res.max_rel_err < 1e-4);
  }
}
