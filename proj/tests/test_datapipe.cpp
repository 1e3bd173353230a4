#include <doctest.h>

#include <cmath>
#include <sstream>

#include "support.hpp"
#include "tween/bvh.hpp"
#include "tween/datapipe.hpp"
#include "tween/synthetic.hpp"

using namespace tween;

namespace {

const char* kTinyTable = R"(# tween joint limit table v1
root - xzy -360 360 -360 360 -360 360
arm root xzy -60 60 -60 60 -60 60
arm_Nub arm xzy nub
)";

JointLimitTable tiny_table() {
  std::istringstream in(kTinyTable);
  return JointLimitTable::load(in);
}

std::string tiny_bvh(int frames, double dt, const std::string& motion) {
  std::ostringstream out;
  out << "HIERARCHY\nROOT root\n{\n  OFFSET 0 0 0\n"
      << "  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation\n"
      << "  JOINT arm\n  {\n    OFFSET 0 10 0\n"
      << "    CHANNELS 3 Zrotation Xrotation Yrotation\n"
      << "    End Site\n    {\n      OFFSET 0 5 0\n    }\n  }\n}\n"
      << "MOTION\nFrames: " << frames << "\nFrame Time: " << dt << "\n"
      << motion;
  return out.str();
}

}  // namespace

TEST_CASE("parse_bvh recovers offsets and rotations of a synthetic file") {
  // Frame 0: rest. Frame 1: root at (1,2,3), arm bent 30 deg about x.
  std::ostringstream motion;
  motion << "0 0 0 0 0 0 0 0 0\n";
  motion << "1 2 3 0 0 0 0 30 0\n";
  std::istringstream in(tiny_bvh(2, 1.0 / 60.0, motion.str()));
  const auto res = parse_bvh(in, tiny_table());

  CHECK(res.skeleton.joint_count() == 3);
  CHECK((res.skeleton.rest_offsets[1] - Vec3(0, 10, 0)).norm() == 0.0);
  CHECK((res.skeleton.rest_offsets[2] - Vec3(0, 5, 0)).norm() == 0.0);
  REQUIRE(res.clip.length() == 2);
  CHECK(res.clip.fps == 60);
  CHECK((res.clip.root_positions[1] - Vec3(1, 2, 3)).norm() < 1e-12);
  const Mat3 expected = rotation_x(30.0 * kDegToRad);
  CHECK((res.clip.frames[1].joint_rotations[1] - expected).norm() < 1e-9);
  // FK positions: arm tip at 10 + 5 rotated.
  const Vec3 tip = res.clip.frames[1].joint_positions[2];
  CHECK(tip.y() == doctest::Approx(10 + 5 * std::cos(30 * kDegToRad)));
  CHECK(tip.z() == doctest::Approx(5 * std::sin(30 * kDegToRad)));
}

TEST_CASE("parse_bvh resamples 120 fps to 60 fps") {
  // Linear ramp on root x so interpolation is exact.
  std::ostringstream motion;
  const int n = 21;
  for (int t = 0; t < n; ++t)
    motion << t << " 0 0 0 0 0 0 0 0\n";
  std::istringstream in(tiny_bvh(n, 1.0 / 120.0, motion.str()));
  const auto res = parse_bvh(in, tiny_table());
  CHECK(res.clip.length() == (n - 1) / 2 + 1);
  for (int t = 0; t < res.clip.length(); ++t)
    CHECK(res.clip.root_positions[size_t(t)].x() == doctest::Approx(2.0 * t));
}

TEST_CASE("parse_bvh error paths carry context") {
  std::istringstream no_motion(
      "HIERARCHY\nROOT root\n{\n  OFFSET 0 0 0\n  CHANNELS 3 Xrotation Yrotation "
      "Zrotation\n}\n");
  CHECK_THROWS_WITH_AS(parse_bvh(no_motion, tiny_table()),
                       doctest::Contains("MOTION"), std::runtime_error);

  std::istringstream unknown(tiny_bvh(1, 1.0 / 60, "0 0 0 0 0 0 0 0 0\n"));
  JointLimitTable other = tiny_table();
  other.joints[1].name = "leg";
  CHECK_THROWS_WITH_AS(parse_bvh(unknown, other), doctest::Contains("arm"),
                       std::runtime_error);

  std::istringstream bad_number(tiny_bvh(1, 1.0 / 60, "0 0 0 x 0 0 0 0 0\n"));
  CHECK_THROWS_WITH_AS(parse_bvh(bad_number, tiny_table()),
                       doctest::Contains("line"), std::runtime_error);

  // Out-of-range angles are clamped and flagged.
  std::istringstream hot(tiny_bvh(1, 1.0 / 60, "0 0 0 0 0 0 120 0 0\n"));
  const auto res = parse_bvh(hot, tiny_table());
  CHECK(res.clip.clamp_flags[0] == 1);
  CHECK(res.clip.violation_deg[0] > 30.0);
}

TEST_CASE("ground-plane filter keeps flat clips and drops sunken or climbing ones") {
  const Skeleton sk = compact_skeleton();
  MotionClip flat = make_synthetic_clip(sk, 300, 21);
  // Freeze the legs so support height is steady, then plant the minimum at 0.
  for (int t = 0; t < flat.length(); ++t) {
    auto& f = flat.frames[size_t(t)];
    for (const char* name : {"lThigh", "lShin", "rThigh", "rShin"})
      f.joint_rotations[size_t(sk.limits.index_of(name))] = Mat3::Identity();
    auto pos = forward_kinematics(f.joint_rotations, sk);
    for (int j = 0; j < sk.joint_count(); ++j)
      f.joint_positions[size_t(j)] = f.root_rotation * pos[size_t(j)];
  }
  double min_y = 1e300;
  for (int t = 0; t < flat.length(); ++t) {
    for (size_t j = 1; j < flat.frames[size_t(t)].joint_positions.size(); ++j)
      min_y = std::min(min_y, flat.root_positions[size_t(t)].y() +
                                  flat.frames[size_t(t)].joint_positions[j].y());
  }
  for (auto& p : flat.root_positions) p.y() -= min_y;
  CHECK(filter_ground_plane(flat).keep);

  MotionClip sunken = flat;
  for (auto& p : sunken.root_positions) p.y() -= 10.0;
  CHECK(!filter_ground_plane(sunken).keep);

  MotionClip stairs = flat;
  for (int t = 0; t < stairs.length(); ++t)
    stairs.root_positions[size_t(t)].y() += 50.0 * t / stairs.length();
  CHECK(!filter_ground_plane(stairs).keep);
}

TEST_CASE("noise filter splits exactly at an injected teleport") {
  const Skeleton sk = compact_skeleton();
  MotionClip clip = make_synthetic_clip(sk, 600, 22);
  const int spike_at = 301;
  clip.root_positions[spike_at] += Vec3(50.0, 0.0, 0.0);

  const auto parts = filter_noise(clip);
  REQUIRE(parts.size() == 2);
  CHECK(parts[0].length() == spike_at);
  CHECK(parts[1].length() == clip.length() - spike_at - 1);
  // The good frames are untouched.
  CHECK((parts[1].root_positions[0] - clip.root_positions[spike_at + 1]).norm() == 0.0);

  // Clean clips come through unchanged.
  const MotionClip clean = make_synthetic_clip(sk, 400, 23);
  const auto same = filter_noise(clean);
  REQUIRE(same.size() == 1);
  CHECK(same[0].length() == clean.length());
  CHECK(same[0].source_id == clean.source_id);

  // Sub-clips under the minimum length are dropped.
  MotionClip early = make_synthetic_clip(sk, 400, 24);
  early.root_positions[100] += Vec3(0.0, 0.0, 80.0);
  const auto tail_only = filter_noise(early);
  REQUIRE(tail_only.size() == 1);
  CHECK(tail_only[0].length() == 299);
}

TEST_CASE("noise filter flags out-of-range poses via the violation channel") {
  const Skeleton sk = compact_skeleton();
  MotionClip clip = make_synthetic_clip(sk, 500, 25);
  clip.violation_deg[250] = 45.0;  // as recorded by parse-time range audit
  const auto parts = filter_noise(clip);
  REQUIRE(parts.size() == 2);
  CHECK(parts[0].length() == 250);
}

TEST_CASE("corpus split is deterministic and at the published ratio") {
  const Skeleton sk = compact_skeleton();
  std::vector<MotionClip> clips;
  const int per_class[3] = {40, 13, 7};
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < per_class[c]; ++i) {
      MotionClip clip = make_synthetic_clip(sk, kMinClipFrames, uint64_t(100 * c + i),
                                            "class" + std::to_string(c));
      clips.push_back(std::move(clip));
    }

  const Corpus a = split_corpus(sk, clips, 99);
  const Corpus b = split_corpus(sk, clips, 99);
  REQUIRE(a.train.size() == b.train.size());
  for (size_t i = 0; i < a.train.size(); ++i)
    CHECK(a.train[i].source_id == b.train[i].source_id);

  for (int c = 0; c < 3; ++c) {
    const std::string label = "class" + std::to_string(c);
    int train_n = 0;
    for (const auto& clip : a.train) train_n += clip.class_label == label;
    CHECK(std::abs(train_n - per_class[c] * kTrainFraction) <= 1.0);
  }
  CHECK(a.train.size() + a.test.size() == clips.size());
}

TEST_CASE("clip store round-trips byte-stably and checks integrity") {
  const Skeleton sk = compact_skeleton();
  std::vector<MotionClip> clips = make_synthetic_clips(sk, 3, 260, 31);
  clips[1].clamp_flags[10] = 1;
  clips[1].violation_deg[10] = 3.5;

  std::ostringstream s1;
  save_clip_store(s1, sk, clips);
  std::istringstream in1(s1.str());
  const ClipStore store = load_clip_store(in1);
  REQUIRE(store.clips.size() == 3);
  CHECK(store.skeleton.hash() == sk.hash());

  std::ostringstream s2;
  save_clip_store(s2, store.skeleton, store.clips);
  CHECK(s1.str() == s2.str());  // byte-stable round trip

  // Reconstructed poses match the originals.
  for (int t = 0; t < clips[0].length(); t += 50) {
    const auto& a = clips[0].frames[size_t(t)];
    const auto& b = store.clips[0].frames[size_t(t)];
    for (size_t j = 0; j < a.joint_positions.size(); ++j)
      CHECK((a.joint_positions[j] - b.joint_positions[j]).norm() < 1e-9);
  }

  // Flip one payload byte: checksum failure.
  std::string corrupt = s1.str();
  corrupt[corrupt.size() - 8] ^= 0x40;
  std::istringstream in2(corrupt);
  CHECK_THROWS_WITH_AS(load_clip_store(in2), doctest::Contains("checksum"),
                       std::runtime_error);
}

TEST_CASE("position-authoritative clips survive the store") {
  const Skeleton sk = compact_skeleton();
  MotionClip clip = make_synthetic_clip(sk, 250, 33);
  clip.positions_authoritative = true;
  clip.frames[5].joint_positions[2] += Vec3(0.5, 0.25, -0.75);

  std::ostringstream out;
  save_clip_store(out, sk, {clip});
  std::istringstream in(out.str());
  const ClipStore store = load_clip_store(in);
  CHECK((store.clips[0].frames[5].joint_positions[2] -
         clip.frames[5].joint_positions[2])
            .norm() < 1e-12);
}

TEST_CASE("export then parse reproduces poses") {
  const Skeleton sk = compact_skeleton();
  const MotionClip clip = make_synthetic_clip(sk, 120, 34);
  std::ostringstream out;
  export_bvh(out, clip, sk);
  CHECK(out.str().find("Frame Time: 0.0166666") != std::string::npos);

  std::istringstream in(out.str());
  const auto res = parse_bvh(in, sk.limits);
  REQUIRE(res.clip.length() == clip.length());
  CHECK(res.clip.fps == 60);
  double worst = 0.0;
  for (int t = 0; t < clip.length(); t += 7) {
    worst = std::max(worst, (res.clip.root_positions[size_t(t)] -
                             clip.root_positions[size_t(t)]).norm());
    for (size_t j = 1; j < clip.frames[size_t(t)].joint_positions.size(); ++j)
      worst = std::max(worst, (res.clip.frames[size_t(t)].joint_positions[j] -
                               clip.frames[size_t(t)].joint_positions[j])
                                  .norm());
  }
  CHECK(worst < 1e-3);  // cm
}
