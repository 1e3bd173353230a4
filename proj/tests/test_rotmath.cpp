#include <doctest.h>

#include <Eigen/Geometry>
#include <cmath>
#include <sstream>

#include "tween/rng.hpp"
#include "tween/rotmath.hpp"

using namespace tween;

namespace {

AxisRange deg_range(double lo, double hi) {
  return {lo * kDegToRad, hi * kDegToRad};
}

double frobenius_to_identity(const Mat3& r) {
  return (r.transpose() * r - Mat3::Identity()).norm();
}

}  // namespace

TEST_CASE("map_to_range midpoint and saturation") {
  const AxisRange r = deg_range(0.0, 170.0);
  CHECK(map_to_range(0.0, r) == doctest::Approx(85.0 * kDegToRad).epsilon(1e-12));
  // Large inputs approach the supremum without attaining it (v = 7 is the
  // largest convenient argument before tanh rounds to 1.0 in double).
  const double near_sup = map_to_range(7.0, r);
  CHECK(near_sup < 170.0 * kDegToRad);
  CHECK(near_sup > 169.999 * kDegToRad);
}

TEST_CASE("map_to_range matches the closed form on (-31, 63)") {
  const AxisRange r = deg_range(-31.0, 63.0);
  const double expected_deg = 47.0 * std::tanh(1.0) + 16.0;  // = 51.79492532...
  CHECK(map_to_range(1.0, r) ==
        doctest::Approx(expected_deg * kDegToRad).epsilon(1e-14));
  CHECK(expected_deg == doctest::Approx(51.795).epsilon(1e-4));
}

TEST_CASE("map_to_range is strictly monotone and strictly interior") {
  Rng rng(7);
  for (int it = 0; it < 200; ++it) {
    const double lo = rng.uniform(-3.0, 1.0);
    const AxisRange r{lo, lo + rng.uniform(0.01, 3.0)};
    double prev = -1e300;
    for (double v = -6.0; v <= 6.0; v += 0.37) {
      const double u = map_to_range(v, r);
      CHECK(u > r.min_rad);
      CHECK(u < r.max_rad);
      CHECK(u > prev);
      prev = u;
    }
  }
}

TEST_CASE("map_to_range fixed axis returns the constant") {
  const AxisRange r{0.25, 0.25};
  CHECK(map_to_range(-3.0, r) == 0.25);
  CHECK(map_to_range(100.0, r) == 0.25);
}

TEST_CASE("map_to_range rejects non-finite input") {
  CHECK_THROWS(map_to_range(std::nan(""), deg_range(0, 10)));
  CHECK_THROWS(map_to_range(std::numeric_limits<double>::infinity(), deg_range(0, 10)));
}

TEST_CASE("euler_to_matrix identity and single-axis cases") {
  CHECK((euler_to_matrix(Vec3::Zero(), EulerOrder::XZY) - Mat3::Identity()).norm() ==
        doctest::Approx(0.0));
  const Mat3 rx = euler_to_matrix(Vec3(kPi / 2, 0, 0), EulerOrder::XZY);
  Mat3 expected;
  expected << 1, 0, 0, 0, 0, -1, 0, 1, 0;
  CHECK((rx - expected).norm() < 1e-12);
}

TEST_CASE("euler_to_matrix matches Eigen AngleAxis products") {
  Rng rng(11);
  for (int it = 0; it < 500; ++it) {
    const Vec3 u(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
    const Mat3 xzy_oracle =
        (Eigen::AngleAxisd(u.x(), Vec3::UnitX()) *
         Eigen::AngleAxisd(u.z(), Vec3::UnitZ()) *
         Eigen::AngleAxisd(u.y(), Vec3::UnitY()))
            .toRotationMatrix();
    CHECK((euler_to_matrix(u, EulerOrder::XZY) - xzy_oracle).norm() < 1e-12);
    const Mat3 yxz_oracle =
        (Eigen::AngleAxisd(u.y(), Vec3::UnitY()) *
         Eigen::AngleAxisd(u.x(), Vec3::UnitX()) *
         Eigen::AngleAxisd(u.z(), Vec3::UnitZ()))
            .toRotationMatrix();
    CHECK((euler_to_matrix(u, EulerOrder::YXZ) - yxz_oracle).norm() < 1e-12);
  }
}

TEST_CASE("rotation outputs stay orthonormal with unit determinant") {
  Rng rng(13);
  for (int it = 0; it < 500; ++it) {
    const Vec3 u(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
    const Mat3 r = euler_to_matrix(u, it % 2 ? EulerOrder::XZY : EulerOrder::YXZ);
    CHECK(frobenius_to_identity(r) < 1e-10);
    CHECK(std::abs(r.determinant() - 1.0) < 1e-10);

    Vec6 r6;
    for (int i = 0; i < 6; ++i) r6[i] = rng.uniform(-2, 2);
    if (r6.head<3>().norm() < 0.3) continue;
    const Mat3 s = sixd_to_matrix(r6);
    CHECK(frobenius_to_identity(s) < 1e-10);
    CHECK(std::abs(s.determinant() - 1.0) < 1e-10);
  }
}

TEST_CASE("sixd_to_matrix basics") {
  Vec6 id;
  id << 1, 0, 0, 0, 1, 0;
  CHECK((sixd_to_matrix(id) - Mat3::Identity()).norm() < 1e-15);
  Vec6 scaled;
  scaled << 2, 0, 0, 0, 3, 0;
  CHECK((sixd_to_matrix(scaled) - Mat3::Identity()).norm() < 1e-15);

  Vec6 zero = Vec6::Zero();
  CHECK_THROWS_AS(sixd_to_matrix(zero), std::invalid_argument);
  Vec6 parallel;
  parallel << 1, 2, 3, 2, 4, 6;
  CHECK_THROWS_AS(sixd_to_matrix(parallel), std::invalid_argument);
}

TEST_CASE("sixd_to_matrix matches a standalone Gram-Schmidt oracle") {
  Rng rng(17);
  for (int it = 0; it < 500; ++it) {
    Vec6 r6;
    for (int i = 0; i < 6; ++i) r6[i] = rng.uniform(-2, 2);
    const Vec3 a = r6.head<3>(), b = r6.tail<3>();
    if (a.norm() < 0.2 || a.cross(b).norm() < 0.1) continue;
    // Oracle written from the definition, independent of the implementation.
    const Vec3 x = a.normalized();
    const Vec3 y = (b - b.dot(x) * x).normalized();
    const Vec3 z = x.cross(y);
    Mat3 oracle;
    oracle.col(0) = x;
    oracle.col(1) = y;
    oracle.col(2) = z;
    CHECK((sixd_to_matrix(r6) - oracle).norm() < 1e-10);
  }
}

TEST_CASE("sixd round trip through the first two columns") {
  Rng rng(19);
  for (int it = 0; it < 200; ++it) {
    const Vec3 u(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
    const Mat3 r = euler_to_matrix(u, EulerOrder::XZY);
    CHECK((sixd_to_matrix(matrix_to_sixd(r)) - r).norm() < 1e-12);
  }
}

TEST_CASE("matrix_to_euler identity and fixed round trip") {
  const auto ex0 = matrix_to_euler(Mat3::Identity(), EulerOrder::XZY);
  CHECK(ex0.angles.norm() < 1e-15);
  CHECK(!ex0.gimbal_flag);

  const Vec3 u(10 * kDegToRad, 20 * kDegToRad, 30 * kDegToRad);
  const auto ex = matrix_to_euler(euler_to_matrix(u, EulerOrder::XZY), EulerOrder::XZY);
  CHECK((ex.angles - u).norm() < 1e-12);
}

TEST_CASE("matrix_to_euler round trip over 1000 random in-range triples") {
  Rng rng(23);
  double worst_deg = 0.0;
  for (int it = 0; it < 1000; ++it) {
    const EulerOrder order = it % 2 ? EulerOrder::XZY : EulerOrder::YXZ;
    Vec3 u(rng.uniform(-2.5, 2.5), rng.uniform(-2.5, 2.5), rng.uniform(-2.5, 2.5));
    u[size_t(second_axis(order))] = rng.uniform(-1.3, 1.3);  // stay off gimbal
    const auto ex = matrix_to_euler(euler_to_matrix(u, order), order);
    const Mat3 rebuilt = euler_to_matrix(ex.angles, order);
    CHECK((rebuilt - euler_to_matrix(u, order)).norm() < 1e-8);
    worst_deg = std::max(worst_deg, (ex.angles - u).cwiseAbs().maxCoeff() * kRadToDeg);
  }
  CHECK(worst_deg < 1e-6);
}

TEST_CASE("matrix_to_euler flags gimbal proximity and clamps to ranges") {
  const Vec3 u(0.3, 0.2, kPi / 2);  // second axis of XZY at +90 deg
  const auto ex = matrix_to_euler(euler_to_matrix(u, EulerOrder::XZY), EulerOrder::XZY);
  CHECK(ex.gimbal_flag);

  JointRanges tight = {deg_range(-5, 5), deg_range(-5, 5), deg_range(-5, 5)};
  const Vec3 big(20 * kDegToRad, 0, 0);
  const auto clamped =
      matrix_to_euler(euler_to_matrix(big, EulerOrder::XZY), EulerOrder::XZY, &tight);
  CHECK(clamped.clamp_flag);
  CHECK(clamped.angles.x() == doctest::Approx(5 * kDegToRad));
  CHECK(clamped.max_violation_rad == doctest::Approx(15 * kDegToRad).epsilon(1e-9));
}

TEST_CASE("gimbal audit passes the shipped table and catches violations") {
  const auto table = builtin_limit_table();
  const auto report = audit_gimbal_safety(table);
  CHECK(report.all_safe());
  CHECK(report.joints_checked > 10);

  // abdomen: order xzy, z range (-45, 45) -> safe second axis.
  const auto& abdomen = table.joints[size_t(table.index_of("abdomen"))];
  CHECK(abdomen.order == EulerOrder::XZY);
  CHECK(abdomen.range[2].min_rad == doctest::Approx(-45 * kDegToRad));
  // lForeArm: order yxz with fixed x -> safe by fixedness.
  const auto& forearm = table.joints[size_t(table.index_of("lForeArm"))];
  CHECK(forearm.order == EulerOrder::YXZ);
  CHECK(forearm.range[0].fixed());

  JointLimitTable bad = table;
  JointLimits synth;
  synth.name = "synthetic";
  synth.parent = 0;
  synth.order = EulerOrder::XZY;
  synth.range[2] = deg_range(-100, 100);
  bad.joints.push_back(synth);
  const auto bad_report = audit_gimbal_safety(bad);
  REQUIRE(bad_report.violations.size() == 1);
  CHECK(bad_report.violations[0].name == "synthetic");
  CHECK(bad_report.violations[0].second_axis == 'z');
}

TEST_CASE("limit table text format round trips and validates") {
  const auto table = builtin_limit_table();
  std::ostringstream out;
  table.save(out);
  std::istringstream in(out.str());
  const auto again = JointLimitTable::load(in);
  CHECK(again.hash() == table.hash());
  CHECK(again.joint_count() == 57);

  std::istringstream no_version("hip - xzy 0 0 0 0 0 0\n");
  CHECK_THROWS(JointLimitTable::load(no_version));
}

TEST_CASE("shipped data asset matches the builtin table") {
  const auto table = JointLimitTable::load_file(std::string(TWEEN_DATA_DIR) +
                                                "/joint_limits.txt");
  CHECK(table.hash() == builtin_limit_table().hash());
}
