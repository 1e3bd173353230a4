#include "tween/bvh.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace tween {

namespace {

struct Token {
  std::string text;
  int line = 0;
};

class Lexer {
 public:
  explicit Lexer(std::istream& in) {
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::istringstream ls(line);
      std::string tok;
      while (ls >> tok) tokens_.push_back({tok, lineno});
    }
  }
  bool done() const { return pos_ >= tokens_.size(); }
  const Token& peek() const {
    if (done()) throw std::runtime_error("bvh: unexpected end of file");
    return tokens_[pos_];
  }
  Token next() {
    Token t = peek();
    ++pos_;
    return t;
  }
  void expect(const std::string& s) {
    if (done())
      throw std::runtime_error("bvh: unexpected end of file, expected '" + s + "'");
    Token t = next();
    if (t.text != s)
      throw std::runtime_error("bvh line " + std::to_string(t.line) + ": expected '" +
                               s + "', got '" + t.text + "'");
  }
  double number() {
    Token t = next();
    try {
      size_t used = 0;
      const double v = std::stod(t.text, &used);
      if (used != t.text.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      throw std::runtime_error("bvh line " + std::to_string(t.line) +
                               ": expected a number, got '" + t.text + "'");
    }
  }

 private:
  std::vector<Token> tokens_;
  size_t pos_ = 0;
};

enum class Channel { Xpos, Ypos, Zpos, Xrot, Yrot, Zrot };

Channel channel_from(const std::string& s, int line) {
  if (s == "Xposition") return Channel::Xpos;
  if (s == "Yposition") return Channel::Ypos;
  if (s == "Zposition") return Channel::Zpos;
  if (s == "Xrotation") return Channel::Xrot;
  if (s == "Yrotation") return Channel::Yrot;
  if (s == "Zrotation") return Channel::Zrot;
  throw std::runtime_error("bvh line " + std::to_string(line) + ": bad channel " + s);
}

struct BvhJoint {
  std::string name;
  int table_index = -1;
  int parent = -1;
  Vec3 offset = Vec3::Zero();
  std::vector<Channel> channels;
  int channel_offset = 0;
};

struct Hierarchy {
  std::vector<BvhJoint> joints;
  int total_channels = 0;
};

void parse_joint_body(Lexer& lex, Hierarchy& h, int self,
                      const JointLimitTable& table) {
  lex.expect("{");
  lex.expect("OFFSET");
  for (int a = 0; a < 3; ++a) h.joints[self].offset[a] = lex.number();
  if (lex.peek().text == "CHANNELS") {
    lex.next();
    const int n = int(lex.number());
    h.joints[self].channel_offset = h.total_channels;
    for (int i = 0; i < n; ++i) {
      Token t = lex.next();
      h.joints[self].channels.push_back(channel_from(t.text, t.line));
    }
    h.total_channels += n;
  }
  while (true) {
    Token t = lex.next();
    if (t.text == "}") return;
    if (t.text == "JOINT" || t.text == "End") {
      BvhJoint child;
      child.parent = self;
      if (t.text == "End") {
        lex.expect("Site");
        // End sites are unnamed; match the table's end-site child.
        const int parent_table = h.joints[self].table_index;
        for (size_t ti = 0; ti < table.joints.size(); ++ti)
          if (table.joints[ti].parent == parent_table && table.joints[ti].is_end_site) {
            child.table_index = int(ti);
            child.name = table.joints[ti].name;
            break;
          }
        if (child.table_index < 0)
          throw std::runtime_error("bvh: no end-site child in limit table under " +
                                   h.joints[self].name);
      } else {
        child.name = lex.next().text;
        child.table_index = table.index_of(child.name);
        if (child.table_index < 0)
          throw std::runtime_error("bvh: joint name not in limit table: " + child.name);
      }
      const int id = int(h.joints.size());
      h.joints.push_back(std::move(child));
      parse_joint_body(lex, h, id, table);
    } else {
      throw std::runtime_error("bvh line " + std::to_string(t.line) +
                               ": unexpected token '" + t.text + "'");
    }
  }
}

Mat3 channels_to_rotation(const std::vector<Channel>& channels,
                          const double* values) {
  Mat3 r = Mat3::Identity();
  for (size_t i = 0; i < channels.size(); ++i) {
    const double a = values[i] * kDegToRad;
    switch (channels[i]) {
      case Channel::Xrot: r = r * rotation_x(a); break;
      case Channel::Yrot: r = r * rotation_y(a); break;
      case Channel::Zrot: r = r * rotation_z(a); break;
      default: break;
    }
  }
  return r;
}

Vec3 channels_to_position(const std::vector<Channel>& channels,
                          const double* values) {
  Vec3 p = Vec3::Zero();
  for (size_t i = 0; i < channels.size(); ++i) {
    switch (channels[i]) {
      case Channel::Xpos: p.x() = values[i]; break;
      case Channel::Ypos: p.y() = values[i]; break;
      case Channel::Zpos: p.z() = values[i]; break;
      default: break;
    }
  }
  return p;
}

}  // namespace

BvhParseResult parse_bvh(std::istream& in, const JointLimitTable& table) {
  Lexer lex(in);
  lex.expect("HIERARCHY");
  lex.expect("ROOT");
  Hierarchy h;
  {
    BvhJoint root;
    root.name = lex.next().text;
    root.table_index = table.index_of(root.name);
    if (root.table_index < 0)
      throw std::runtime_error("bvh: joint name not in limit table: " + root.name);
    if (!table.joints[root.table_index].is_root)
      throw std::runtime_error("bvh: " + root.name + " is not the table root");
    h.joints.push_back(std::move(root));
  }
  parse_joint_body(lex, h, 0, table);

  lex.expect("MOTION");
  {
    Token t = lex.next();
    if (t.text != "Frames:")
      throw std::runtime_error("bvh line " + std::to_string(t.line) +
                               ": missing MOTION Frames header");
  }
  const int n_src = int(lex.number());
  lex.expect("Frame");
  lex.expect("Time:");
  const double dt = lex.number();
  if (dt <= 0.0) throw std::runtime_error("bvh: non-positive frame time");
  double src_fps = 1.0 / dt;
  if (std::abs(src_fps - std::round(src_fps)) < 0.05) src_fps = std::round(src_fps);

  std::vector<std::vector<double>> rows(n_src, std::vector<double>(h.total_channels));
  for (int t = 0; t < n_src; ++t)
    for (int c = 0; c < h.total_channels; ++c) rows[t][c] = lex.number();

  // Build the skeleton in table order; joints absent from the file keep a
  // tiny placeholder offset so the table contract stays intact.
  BvhParseResult res;
  res.skeleton.limits = table;
  res.skeleton.rest_offsets.assign(table.joint_count(), Vec3(0, 1e-3, 0));
  res.skeleton.rest_offsets[0] = Vec3::Zero();
  std::vector<int> bvh_of_table(table.joint_count(), -1);
  for (size_t i = 0; i < h.joints.size(); ++i) {
    bvh_of_table[h.joints[i].table_index] = int(i);
    if (h.joints[i].parent >= 0)
      res.skeleton.rest_offsets[h.joints[i].table_index] = h.joints[i].offset;
  }
  res.skeleton.validate();

  // Decode at source rate, then resample to 60 fps (linear positions,
  // nearest-frame rotations).
  const int m = table.joint_count();
  auto decode_frame = [&](int t, LocalPoseFrame& f, Vec3& root_pos,
                          double& violation, uint8_t& clamped) {
    f.joint_rotations.assign(m, Mat3::Identity());
    violation = 0.0;
    clamped = 0;
    for (size_t i = 0; i < h.joints.size(); ++i) {
      const auto& bj = h.joints[i];
      const double* vals = rows[t].data() + bj.channel_offset;
      if (bj.table_index == 0) {
        root_pos = channels_to_position(bj.channels, vals);
        f.root_rotation = channels_to_rotation(bj.channels, vals);
        continue;
      }
      if (bj.channels.empty()) continue;  // end sites
      const auto& lim = table.joints[bj.table_index];
      const Mat3 r = channels_to_rotation(bj.channels, vals);
      const auto ex = matrix_to_euler(r, lim.order, &lim.range);
      if (ex.clamp_flag) {
        clamped = 1;
        violation = std::max(violation, ex.max_violation_rad * kRadToDeg);
      }
      f.joint_rotations[bj.table_index] = euler_to_matrix(ex.angles, lim.order);
    }
  };

  std::vector<LocalPoseFrame> src_frames(n_src);
  std::vector<Vec3> src_roots(n_src);
  std::vector<double> src_violation(n_src);
  std::vector<uint8_t> src_clamped(n_src);
  for (int t = 0; t < n_src; ++t)
    decode_frame(t, src_frames[t], src_roots[t], src_violation[t], src_clamped[t]);

  MotionClip& clip = res.clip;
  clip.fps = 60;
  const bool native = std::abs(src_fps - 60.0) < 0.5;
  const int n_dst =
      native ? n_src : int(std::floor(double(n_src - 1) * 60.0 / src_fps)) + 1;
  clip.frames.resize(n_dst);
  clip.root_positions.resize(n_dst);
  clip.violation_deg.resize(n_dst);
  clip.clamp_flags.resize(n_dst);
  for (int t = 0; t < n_dst; ++t) {
    const double s = native ? double(t) : double(t) * src_fps / 60.0;
    const int lo = std::min(n_src - 1, int(std::floor(s)));
    const int hi = std::min(n_src - 1, lo + 1);
    const double a = s - lo;
    const int nearest = a < 0.5 ? lo : hi;
    clip.frames[t] = src_frames[nearest];
    clip.root_positions[t] = (1.0 - a) * src_roots[lo] + a * src_roots[hi];
    clip.violation_deg[t] = src_violation[nearest];
    clip.clamp_flags[t] = src_clamped[nearest];
    auto pos = forward_kinematics(clip.frames[t].joint_rotations, res.skeleton);
    clip.frames[t].joint_positions.resize(m);
    for (int j = 0; j < m; ++j)
      clip.frames[t].joint_positions[j] = clip.frames[t].root_rotation * pos[j];
  }
  return res;
}

BvhParseResult parse_bvh_file(const std::string& path, const JointLimitTable& table) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open bvh: " + path);
  return parse_bvh(in, table);
}

BvhParseResult parse_bvh_file(const std::string& path) {
  return parse_bvh_file(path, builtin_limit_table());
}

// --- export ------------------------------------------------------------------

namespace {

const char* rotation_channels(EulerOrder order) {
  return order == EulerOrder::XZY ? "Xrotation Zrotation Yrotation"
                                  : "Yrotation Xrotation Zrotation";
}

void write_angles(std::ostream& out, const Vec3& u, EulerOrder order) {
  const double x = u.x() * kRadToDeg, y = u.y() * kRadToDeg, z = u.z() * kRadToDeg;
  if (order == EulerOrder::XZY)
    out << ' ' << x << ' ' << z << ' ' << y;
  else
    out << ' ' << y << ' ' << x << ' ' << z;
}

}  // namespace

void export_bvh(std::ostream& out, const MotionClip& clip, const Skeleton& skeleton) {
  const int m = skeleton.joint_count();
  std::vector<std::vector<int>> children(m);
  for (int j = 1; j < m; ++j) children[skeleton.parent(j)].push_back(j);

  out.precision(10);
  out << "HIERARCHY\n";
  std::function<void(int, int)> write_joint = [&](int j, int depth) {
    const std::string ind(size_t(depth) * 2, ' ');
    const auto& lim = skeleton.limits.joints[j];
    if (lim.is_end_site) {
      out << ind << "End Site\n" << ind << "{\n";
      out << ind << "  OFFSET " << skeleton.rest_offsets[j].x() << ' '
          << skeleton.rest_offsets[j].y() << ' ' << skeleton.rest_offsets[j].z()
          << '\n';
      out << ind << "}\n";
      return;
    }
    out << ind << (j == 0 ? "ROOT " : "JOINT ") << lim.name << '\n' << ind << "{\n";
    out << ind << "  OFFSET " << skeleton.rest_offsets[j].x() << ' '
        << skeleton.rest_offsets[j].y() << ' ' << skeleton.rest_offsets[j].z() << '\n';
    if (j == 0)
      out << ind << "  CHANNELS 6 Xposition Yposition Zposition "
          << rotation_channels(lim.order) << '\n';
    else
      out << ind << "  CHANNELS 3 " << rotation_channels(lim.order) << '\n';
    for (int c : children[j]) write_joint(c, depth + 1);
    out << ind << "}\n";
  };
  write_joint(0, 0);

  out << "MOTION\n";
  out << "Frames: " << clip.length() << '\n';
  out << "Frame Time: " << 1.0 / 60.0 << '\n';
  for (int t = 0; t < clip.length(); ++t) {
    const auto& f = clip.frames[t];
    out << clip.root_positions[t].x() << ' ' << clip.root_positions[t].y() << ' '
        << clip.root_positions[t].z();
    const auto root_ex = matrix_to_euler(f.root_rotation, skeleton.limits.joints[0].order);
    write_angles(out, root_ex.angles, skeleton.limits.joints[0].order);
    for (int j = 1; j < m; ++j) {
      if (skeleton.limits.joints[j].is_end_site) continue;
      const auto ex = matrix_to_euler(f.joint_rotations[j], skeleton.limits.joints[j].order);
      write_angles(out, ex.angles, skeleton.limits.joints[j].order);
    }
    out << '\n';
  }
}

void export_bvh_file(const std::string& path, const MotionClip& clip,
                     const Skeleton& skeleton) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write bvh: " + path);
  export_bvh(out, clip, skeleton);
}

}  // namespace tween
