#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "tween/globalpath.hpp"
#include "tween/synthetic.hpp"

using namespace tween;

TEST_CASE("integrate_path: constant and zero velocities") {
  std::vector<Eigen::Vector2d> constant(100, Eigen::Vector2d(1.0, 0.0));
  const auto path = integrate_path(constant, {0.0, 0.0});
  CHECK(path.front() == Eigen::Vector2d(0.0, 0.0));
  CHECK((path.back() - Eigen::Vector2d(99.0, 0.0)).norm() == 0.0);
  // Displacement over the full window including the last step:
  CHECK((path.back() + constant.back() - Eigen::Vector2d(100.0, 0.0)).norm() == 0.0);

  std::vector<Eigen::Vector2d> zeros(64, Eigen::Vector2d::Zero());
  const auto still = integrate_path(zeros, {5.0, -3.0});
  for (const auto& p : still) CHECK((p - Eigen::Vector2d(5.0, -3.0)).norm() == 0.0);
}

TEST_CASE("window displacements match brute-force re-summation at every scale") {
  Rng rng(11);
  std::vector<Eigen::Vector2d> vel(300);
  for (auto& v : vel) v = {rng.uniform(-2, 2), rng.uniform(-2, 2)};
  const auto path = integrate_path(vel, {1.0, 2.0});
  for (int q = 0; q <= 7; ++q) {
    const int n = 1 << q;
    for (int t = 0; t + n < int(vel.size()); t += 17) {
      Eigen::Vector2d acc = Eigen::Vector2d::Zero();
      for (int i = t; i < t + n; ++i) acc += vel[size_t(i)];
      CHECK((path[size_t(t + n)] - path[size_t(t)] - acc).norm() < 1e-9);
    }
  }
}

TEST_CASE("integration then differencing is the identity") {
  Rng rng(12);
  std::vector<Eigen::Vector2d> vel(128);
  for (auto& v : vel) v = {rng.uniform(-3, 3), rng.uniform(-3, 3)};
  const auto path = integrate_path(vel, {0.0, 0.0});
  for (size_t t = 0; t + 1 < path.size(); ++t)
    CHECK((path[t + 1] - path[t] - vel[t]).norm() < 1e-9);
}

TEST_CASE("predict_root_motion shapes and divisibility contract") {
  const Skeleton sk = compact_skeleton();
  nn::NetWeights path;
  path.spec = nn::make_path_predictor_spec(sk.joint_count(), 0.05);
  Rng rng(13);
  path.init(rng);

  nn::Tensor local(1, sk.local_dim(), 160);
  for (auto& v : local.v) v = rng.uniform(-1, 1);
  const auto pred = predict_root_motion(local, path, 0.01);
  CHECK(pred.ch == 3);
  CHECK(pred.len == 160);  // fully convolutional: output length = input length

  nn::Tensor bad(1, sk.local_dim(), 150);
  CHECK_THROWS(predict_root_motion(bad, path, 0.01));

  // Zero local motion through zero weights stays zero.
  nn::NetWeights zero = path;
  for (auto& lw : zero.layers) {
    lw.kernel.fill(0.0);
    std::fill(lw.bias.begin(), lw.bias.end(), 0.0);
  }
  nn::Tensor quiet(1, sk.local_dim(), 64);
  const auto silent = predict_root_motion(quiet, zero, 0.01);
  for (double v : silent.v) CHECK(v == 0.0);
}

TEST_CASE("path targets differentiate the root track") {
  const Skeleton sk = compact_skeleton();
  const MotionClip clip = make_synthetic_clip(sk, 256, 14);
  const auto t = path_targets_from_clip(clip, 16, 128);
  for (int i = 0; i < 127; ++i) {
    CHECK(t.at(0, 0, i) == doctest::Approx(clip.root_positions[size_t(16 + i + 1)].x() -
                                           clip.root_positions[size_t(16 + i)].x()));
    CHECK(t.at(0, 2, i) == clip.root_positions[size_t(16 + i)].y());
  }
}

TEST_CASE("root track from prediction integrates planar velocity and copies height") {
  nn::Tensor pred(1, 3, 8);
  Rng rng(15);
  for (auto& v : pred.v) v = rng.uniform(-1, 1);
  const auto track = root_track_from_prediction(pred, 0, {2.0, 3.0});
  CHECK(track.positions.size() == 8);
  CHECK(track.positions[0].x() == 2.0);
  CHECK(track.positions[0].z() == 3.0);
  for (int t = 0; t < 8; ++t) CHECK(track.positions[size_t(t)].y() == pred.at(0, 2, t));
  for (int t = 0; t + 1 < 8; ++t) {
    CHECK(track.positions[size_t(t) + 1].x() - track.positions[size_t(t)].x() ==
          doctest::Approx(pred.at(0, 0, t)));
    CHECK(track.positions[size_t(t) + 1].z() - track.positions[size_t(t)].z() ==
          doctest::Approx(pred.at(0, 1, t)));
  }
}

TEST_CASE("predictor input is invariant to world translation of the clip") {
  const Skeleton sk = compact_skeleton();
  MotionClip clip = make_synthetic_clip(sk, 128, 16);
  MotionClip moved = clip;
  for (auto& p : moved.root_positions) p += Vec3(1000.0, -50.0, 77.0);
  for (int t = 0; t < clip.length(); ++t) {
    const auto a = clip.local_vector(t);
    const auto b = moved.local_vector(t);
    CHECK(a == b);  // bit-identical: locals are root-relative
  }
}
