#include "tween/rotmath.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tween {

const char* to_string(EulerOrder order) {
  return order == EulerOrder::XZY ? "xzy" : "yxz";
}

EulerOrder euler_order_from_string(const std::string& s) {
  if (s == "xzy" || s == "XZY") return EulerOrder::XZY;
  if (s == "yxz" || s == "YXZ") return EulerOrder::YXZ;
  throw std::runtime_error("unsupported Euler order: " + s);
}

int second_axis(EulerOrder order) {
  return order == EulerOrder::XZY ? 2 : 0;
}

int JointLimitTable::root_index() const {
  for (size_t i = 0; i < joints.size(); ++i)
    if (joints[i].is_root) return int(i);
  return -1;
}

int JointLimitTable::index_of(const std::string& name) const {
  for (size_t i = 0; i < joints.size(); ++i)
    if (joints[i].name == name) return int(i);
  return -1;
}

void JointLimitTable::validate() const {
  if (joints.empty()) throw std::runtime_error("limit table: empty");
  int roots = 0;
  for (size_t i = 0; i < joints.size(); ++i) {
    const auto& j = joints[i];
    if (j.is_root) {
      ++roots;
      if (j.parent != -1) throw std::runtime_error("limit table: root with parent");
    } else {
      if (j.parent < 0 || j.parent >= int(joints.size()))
        throw std::runtime_error("limit table: bad parent for " + j.name);
      if (j.parent >= int(i))
        throw std::runtime_error("limit table: parent after child: " + j.name);
    }
    for (const auto& r : j.range)
      if (r.min_rad > r.max_rad)
        throw std::runtime_error("limit table: inverted range on " + j.name);
  }
  if (roots != 1) throw std::runtime_error("limit table: need exactly one root");
}

namespace {

uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

uint64_t JointLimitTable::hash() const {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& j : joints) {
    h = fnv1a(j.name.data(), j.name.size(), h);
    const int32_t meta[3] = {j.parent, int32_t(j.order),
                             (j.is_root ? 1 : 0) | (j.is_end_site ? 2 : 0)};
    h = fnv1a(meta, sizeof(meta), h);
    double r[6];
    for (int a = 0; a < 3; ++a) {
      r[2 * a] = j.range[a].min_rad;
      r[2 * a + 1] = j.range[a].max_rad;
    }
    h = fnv1a(r, sizeof(r), h);
  }
  return h;
}

JointLimitTable JointLimitTable::load(std::istream& in) {
  JointLimitTable table;
  std::string line;
  bool version_seen = false;
  int lineno = 0;
  std::vector<std::string> names;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) {
      if (!version_seen && line.find("tween joint limit table v1") != std::string::npos)
        version_seen = true;
      line.erase(hash_pos);
    }
    std::istringstream ls(line);
    std::string name, parent, order;
    if (!(ls >> name)) continue;
    if (!(ls >> parent >> order))
      throw std::runtime_error("limit table line " + std::to_string(lineno) + ": short row");

    JointLimits j;
    j.name = name;
    j.order = euler_order_from_string(order);
    if (parent == "-") {
      j.is_root = true;
      j.parent = -1;
    } else {
      j.parent = int(std::find(names.begin(), names.end(), parent) - names.begin());
      if (j.parent == int(names.size()))
        throw std::runtime_error("limit table line " + std::to_string(lineno) +
                                 ": unknown parent " + parent);
    }

    std::string first;
    if (!(ls >> first))
      throw std::runtime_error("limit table line " + std::to_string(lineno) + ": missing ranges");
    if (first == "nub") {
      j.is_end_site = true;  // zero ranges
    } else {
      double vals[6];
      vals[0] = std::stod(first);
      for (int k = 1; k < 6; ++k)
        if (!(ls >> vals[k]))
          throw std::runtime_error("limit table line " + std::to_string(lineno) +
                                   ": expected 6 range values");
      for (int a = 0; a < 3; ++a) {
        j.range[a].min_rad = vals[2 * a] * kDegToRad;
        j.range[a].max_rad = vals[2 * a + 1] * kDegToRad;
      }
    }
    names.push_back(name);
    table.joints.push_back(std::move(j));
  }
  if (!version_seen) throw std::runtime_error("limit table: missing version header");
  table.validate();
  return table;
}

JointLimitTable JointLimitTable::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open limit table: " + path);
  return load(in);
}

void JointLimitTable::save(std::ostream& out) const {
  out << "# tween joint limit table v1\n";
  out << "# name parent order xmin xmax ymin ymax zmin zmax (degrees) | nub\n";
  for (const auto& j : joints) {
    out << j.name << ' ' << (j.is_root ? std::string("-") : joints[j.parent].name)
        << ' ' << to_string(j.order);
    if (j.is_end_site) {
      out << " nub\n";
      continue;
    }
    for (int a = 0; a < 3; ++a)
      out << ' ' << j.range[a].min_rad * kRadToDeg << ' ' << j.range[a].max_rad * kRadToDeg;
    out << '\n';
  }
}

double map_to_range(double v, const AxisRange& range) {
  if (!std::isfinite(v)) throw std::invalid_argument("map_to_range: non-finite input");
  return 0.5 * range.width() * std::tanh(v) + range.mid();
}

Vec3 map_to_range(const Vec3& v, const JointRanges& ranges) {
  return Vec3(map_to_range(v.x(), ranges[0]), map_to_range(v.y(), ranges[1]),
              map_to_range(v.z(), ranges[2]));
}

Mat3 rotation_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << 1, 0, 0, 0, c, -s, 0, s, c;
  return r;
}

Mat3 rotation_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << c, 0, s, 0, 1, 0, -s, 0, c;
  return r;
}

Mat3 rotation_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << c, -s, 0, s, c, 0, 0, 0, 1;
  return r;
}

Mat3 euler_to_matrix(const Vec3& u, EulerOrder order) {
  if (!u.allFinite()) throw std::invalid_argument("euler_to_matrix: non-finite input");
  if (order == EulerOrder::XZY)
    return rotation_x(u.x()) * rotation_z(u.z()) * rotation_y(u.y());
  return rotation_y(u.y()) * rotation_x(u.x()) * rotation_z(u.z());
}

Mat3 sixd_to_matrix(const Vec6& r6) {
  if (!r6.allFinite()) throw std::invalid_argument("sixd_to_matrix: non-finite input");
  const Vec3 a = r6.head<3>();
  const Vec3 b = r6.tail<3>();
  const double an = a.norm();
  if (an < 1e-12)
    throw std::invalid_argument("sixd_to_matrix: first vector is numerically zero");
  const Vec3 x = a / an;
  const Vec3 w = b - x.dot(b) * x;
  const double wn = w.norm();
  if (wn < 1e-12 * std::max(1.0, b.norm()))
    throw std::invalid_argument("sixd_to_matrix: vectors are numerically parallel");
  const Vec3 y = w / wn;
  const Vec3 z = x.cross(y);
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return r;
}

Vec6 matrix_to_sixd(const Mat3& r) {
  Vec6 out;
  out.head<3>() = r.col(0);
  out.tail<3>() = r.col(1);
  return out;
}

namespace {

double clamp_flagging(double a, const AxisRange& range, EulerExtraction& ex) {
  const double lo = range.min_rad, hi = range.max_rad;
  if (a < lo || a > hi) {
    ex.clamp_flag = true;
    ex.max_violation_rad =
        std::max(ex.max_violation_rad, a < lo ? lo - a : a - hi);
    return std::clamp(a, lo, hi);
  }
  return a;
}

}  // namespace

EulerExtraction matrix_to_euler(const Mat3& r, EulerOrder order,
                                const JointRanges* ranges) {
  EulerExtraction ex;
  double sin2;
  if (order == EulerOrder::XZY) {
    // R = Rx(x) Rz(z) Ry(y); R(0,1) = -sin z.
    sin2 = -r(0, 1);
    const double z = std::asin(std::clamp(sin2, -1.0, 1.0));
    ex.angles = Vec3(std::atan2(r(2, 1), r(1, 1)), std::atan2(r(0, 2), r(0, 0)), z);
  } else {
    // R = Ry(y) Rx(x) Rz(z); R(1,2) = -sin x.
    sin2 = -r(1, 2);
    const double x = std::asin(std::clamp(sin2, -1.0, 1.0));
    ex.angles = Vec3(x, std::atan2(r(0, 2), r(2, 2)), std::atan2(r(1, 0), r(1, 1)));
  }
  if (std::acos(std::clamp(std::abs(sin2), 0.0, 1.0)) < kGimbalTolRad)
    ex.gimbal_flag = true;
  if (ranges)
    for (int a = 0; a < 3; ++a)
      ex.angles[a] = clamp_flagging(ex.angles[a], (*ranges)[a], ex);
  return ex;
}

namespace {

// Mirror of data/joint_limits.txt so library users do not need a data path.
constexpr const char* kBuiltinLimitTable = R"(# tween joint limit table v1
hip - xzy -360 360 -360 360 -360 360
abdomen hip xzy -45 68 -30 30 -45 45
chest abdomen xzy -45 45 -30 30 -45 45
neck chest xzy -37 22 -30 30 -45 45
head neck xzy -37 22 -30 30 -45 45
leftEye head xzy 0 0 0 0 0 0
leftEye_Nub leftEye xzy nub
rightEye head xzy 0 0 0 0 0 0
rightEye_Nub rightEye xzy nub
rCollar chest xzy -30 30 -30 30 -10 10
rShldr rCollar xzy -90 135 -30 110 -70 60
rForeArm rShldr yxz 0 0 0 150 -30 120
rHand rForeArm xzy -90 90 -30 20 0 0
rThumb1 rHand xzy 0 0 0 0 0 0
rThumb2 rThumb1 xzy 0 0 0 0 0 0
rThumb_Nub rThumb2 xzy nub
rIndex1 rHand xzy 0 0 0 0 0 0
rIndex2 rIndex1 xzy 0 0 0 0 0 0
rIndex2_Nub rIndex2 xzy nub
rMid1 rHand xzy 0 0 0 0 0 0
rMid2 rMid1 xzy 0 0 0 0 0 0
rMid_Nub rMid2 xzy nub
rRing1 rHand xzy 0 0 0 0 0 0
rRing2 rRing1 xzy 0 0 0 0 0 0
rRing_Nub rRing2 xzy nub
rPinky1 rHand xzy 0 0 0 0 0 0
rPinky2 rPinky1 xzy 0 0 0 0 0 0
rPinky_Nub rPinky2 xzy nub
lCollar chest xzy -30 30 -30 30 -10 10
lShldr lCollar xzy -90 135 -110 30 -70 60
lForeArm lShldr yxz 0 0 0 150 -30 120
lHand lForeArm xzy -90 90 -20 30 0 0
lThumb1 lHand xzy 0 0 0 0 0 0
lThumb2 lThumb1 xzy 0 0 0 0 0 0
lThumb_Nub lThumb2 xzy nub
lIndex1 lHand xzy 0 0 0 0 0 0
lIndex2 lIndex1 xzy 0 0 0 0 0 0
lIndex2_Nub lIndex2 xzy nub
lMid1 lHand xzy 0 0 0 0 0 0
lMid2 lMid1 yxz 0 0 0 0 0 0
lMid_Nub lMid2 xzy nub
lRing1 lHand xzy 0 0 0 0 0 0
lRing2 lRing1 xzy 0 0 0 0 0 0
lRing_Nub lRing2 xzy nub
lPinky1 lHand xzy 0 0 0 0 0 0
lPinky2 lPinky1 xzy 0 0 0 0 0 0
lPinky_Nub lPinky2 xzy nub
rButtock hip xzy -20 20 -20 20 -10 10
rThigh rButtock xzy -180 100 -180 90 -60 70
rShin rThigh xzy 0 170 0 0 0 0
rFoot rShin xzy -31 63 -30 30 -20 20
rFoot_Nub rFoot xzy nub
lButtock hip xzy -20 20 -20 20 -10 10
lThigh lButtock xzy -180 100 -180 90 -60 70
lShin lThigh xzy 0 170 0 0 0 0
lFoot lShin xzy -31 63 -30 30 -20 20
lFoot_Nub lFoot xzy nub
)";

}  // namespace

JointLimitTable builtin_limit_table() {
  std::istringstream in(kBuiltinLimitTable);
  return JointLimitTable::load(in);
}

GimbalAuditReport audit_gimbal_safety(const JointLimitTable& table) {
  GimbalAuditReport report;
  constexpr double kHalfPi = kPi / 2.0;
  for (size_t i = 0; i < table.joints.size(); ++i) {
    const auto& j = table.joints[i];
    if (j.is_root || j.fixed_joint()) continue;
    ++report.joints_checked;
    const int axis = second_axis(j.order);
    const auto& r = j.range[axis];
    const bool safe = r.fixed() || (r.min_rad > -kHalfPi && r.max_rad < kHalfPi);
    if (!safe) {
      GimbalViolation v;
      v.joint = int(i);
      v.name = j.name;
      v.second_axis = "xyz"[axis];
      v.min_deg = r.min_rad * kRadToDeg;
      v.max_deg = r.max_rad * kRadToDeg;
      report.violations.push_back(std::move(v));
    }
  }
  return report;
}

}  // namespace tween
