#pragma once

#include <Eigen/Dense>
#include <array>
#include <iosfwd>
#include <string>
#include <vector>

namespace tween {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

constexpr double kPi = 3.14159265358979323846;
constexpr double kDegToRad = kPi / 180.0;
constexpr double kRadToDeg = 180.0 / kPi;

// Proximity of the second Euler angle to +-90deg below which extraction is
// considered gimbal-degenerate.
constexpr double kGimbalTolRad = 1e-4;

// Intrinsic Tait-Bryan orders used by the limit table. XZY applies the x
// rotation first, then z, then y (R = Rx * Rz * Ry); YXZ is R = Ry * Rx * Rz.
enum class EulerOrder { XZY, YXZ };

const char* to_string(EulerOrder order);
EulerOrder euler_order_from_string(const std::string& s);

// Feasible rotation interval about one axis, radians. min == max marks a
// fixed axis.
struct AxisRange {
  double min_rad = 0.0;
  double max_rad = 0.0;
  bool fixed() const { return min_rad == max_rad; }
  double width() const { return max_rad - min_rad; }
  double mid() const { return 0.5 * (min_rad + max_rad); }
};

using JointRanges = std::array<AxisRange, 3>;  // indexed x, y, z

struct JointLimits {
  std::string name;
  int parent = -1;  // -1 for the root
  EulerOrder order = EulerOrder::XZY;
  JointRanges range;
  bool is_root = false;
  bool is_end_site = false;

  bool fixed_joint() const {
    return range[0].fixed() && range[1].fixed() && range[2].fixed();
  }
};

// Per-joint rotation limits and Euler orders for one skeleton. Loaded from
// the versioned text asset (see data/joint_limits.txt); one row per joint.
struct JointLimitTable {
  std::vector<JointLimits> joints;

  int joint_count() const { return int(joints.size()); }
  int root_index() const;
  int index_of(const std::string& name) const;  // -1 if absent

  // Throws std::runtime_error on structural problems (no/multiple roots,
  // inverted ranges, unknown parents, parent listed after child).
  void validate() const;

  static JointLimitTable load(std::istream& in);
  static JointLimitTable load_file(const std::string& path);
  void save(std::ostream& out) const;

  uint64_t hash() const;
};

// The limit table from the appendix (authored in degrees inside).
JointLimitTable builtin_limit_table();

// Eq-style range map: u = (width/2) tanh(v) + mid, componentwise. Maps all of
// R strictly into (min, max); fixed axes return the constant. Rejects
// non-finite input.
Vec3 map_to_range(const Vec3& v, const JointRanges& ranges);
double map_to_range(double v, const AxisRange& range);

Mat3 rotation_x(double a);
Mat3 rotation_y(double a);
Mat3 rotation_z(double a);

// u holds per-axis angles (x, y, z), radians; the order decides composition.
Mat3 euler_to_matrix(const Vec3& u, EulerOrder order);

// First two columns from the 6 values, Gram-Schmidt orthogonalized, third
// column by cross product. Throws std::invalid_argument on degenerate
// (parallel or near-zero) input.
Mat3 sixd_to_matrix(const Vec6& r6);

// Inverse convention of sixd_to_matrix: first two columns of R.
Vec6 matrix_to_sixd(const Mat3& r);

struct EulerExtraction {
  Vec3 angles = Vec3::Zero();   // radians, (x, y, z)
  bool gimbal_flag = false;     // second angle within kGimbalTolRad of +-90deg
  bool clamp_flag = false;      // a recovered angle fell outside its range
  double max_violation_rad = 0.0;  // largest pre-clamp excursion beyond range
};

// Analytic arcsin/atan2 extraction for the two supported orders. When
// `ranges` is given, out-of-range angles are clamped into [min, max] and
// flagged.
EulerExtraction matrix_to_euler(const Mat3& r, EulerOrder order,
                                const JointRanges* ranges = nullptr);

struct GimbalViolation {
  int joint = -1;
  std::string name;
  char second_axis = '?';
  double min_deg = 0.0;
  double max_deg = 0.0;
};

struct GimbalAuditReport {
  std::vector<GimbalViolation> violations;
  int joints_checked = 0;
  bool all_safe() const { return violations.empty(); }
};

// For every non-root, non-fixed joint, checks that the second axis of its
// order has range strictly inside (-90deg, +90deg).
GimbalAuditReport audit_gimbal_safety(const JointLimitTable& table);

// Second rotation axis of an order (the gimbal-critical one): XZY -> z,
// YXZ -> x. Returns 0, 1 or 2 (x, y, z).
int second_axis(EulerOrder order);

}  // namespace tween
