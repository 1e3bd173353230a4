#include "tween/datapipe.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace tween {

std::vector<double> MotionClip::pose_vector(int t) const {
  const auto& f = frames[t];
  std::vector<double> out;
  out.reserve(3 * f.joint_positions.size());
  out.push_back(root_positions[t].x());
  out.push_back(root_positions[t].y());
  out.push_back(root_positions[t].z());
  for (size_t j = 1; j < f.joint_positions.size(); ++j) {
    out.push_back(f.joint_positions[j].x());
    out.push_back(f.joint_positions[j].y());
    out.push_back(f.joint_positions[j].z());
  }
  return out;
}

std::vector<double> MotionClip::local_vector(int t) const {
  const auto& f = frames[t];
  std::vector<double> out;
  out.reserve(3 * (f.joint_positions.size() - 1));
  for (size_t j = 1; j < f.joint_positions.size(); ++j) {
    out.push_back(f.joint_positions[j].x());
    out.push_back(f.joint_positions[j].y());
    out.push_back(f.joint_positions[j].z());
  }
  return out;
}

std::vector<double> MotionClip::lambda_vector(int t) const {
  const auto& f = frames[t];
  const Mat3 rt = f.root_rotation.transpose();
  std::vector<double> out;
  out.reserve(3 * (f.joint_positions.size() - 1));
  for (size_t j = 1; j < f.joint_positions.size(); ++j) {
    const Vec3 p = rt * f.joint_positions[j];
    out.push_back(p.x());
    out.push_back(p.y());
    out.push_back(p.z());
  }
  return out;
}

std::vector<std::string> Corpus::class_labels() const {
  std::vector<std::string> out;
  for (const auto* set : {&train, &test})
    for (const auto& c : *set)
      if (std::find(out.begin(), out.end(), c.class_label) == out.end())
        out.push_back(c.class_label);
  return out;
}

GroundFilterResult filter_ground_plane(const MotionClip& clip,
                                       const GroundFilterConfig& cfg) {
  GroundFilterResult res;
  const int n = clip.length();
  if (n == 0) {
    res.keep = false;
    return res;
  }
  std::vector<double> frame_min(n);
  for (int t = 0; t < n; ++t) {
    double lo = clip.root_positions[t].y();
    for (size_t j = 1; j < clip.frames[t].joint_positions.size(); ++j)
      lo = std::min(lo, clip.root_positions[t].y() + clip.frames[t].joint_positions[j].y());
    frame_min[t] = lo;
  }
  res.min_window_cm = 1e300;
  res.max_window_cm = -1e300;
  for (int start = 0; start < n; start += cfg.window_frames) {
    const int end = std::min(n, start + cfg.window_frames);
    double w = 1e300;
    for (int t = start; t < end; ++t) w = std::min(w, frame_min[t]);
    res.min_window_cm = std::min(res.min_window_cm, w);
    res.max_window_cm = std::max(res.max_window_cm, w);
  }
  res.keep = res.min_window_cm >= -cfg.below_tolerance_cm &&
             res.max_window_cm <= cfg.flatness_tolerance_cm;
  return res;
}

namespace {

MotionClip subclip(const MotionClip& clip, int start, int end, int part) {
  MotionClip out;
  out.class_label = clip.class_label;
  out.source_id = clip.source_id + "#" + std::to_string(part);
  out.fps = clip.fps;
  out.root_positions.assign(clip.root_positions.begin() + start,
                            clip.root_positions.begin() + end);
  out.frames.assign(clip.frames.begin() + start, clip.frames.begin() + end);
  out.clamp_flags.assign(clip.clamp_flags.begin() + start,
                         clip.clamp_flags.begin() + end);
  out.violation_deg.assign(clip.violation_deg.begin() + start,
                           clip.violation_deg.begin() + end);
  out.positions_authoritative = clip.positions_authoritative;
  return out;
}

}  // namespace

std::vector<MotionClip> filter_noise(const MotionClip& clip,
                                     const NoiseFilterConfig& cfg) {
  const int n = clip.length();
  // Worst per-joint world displacement into each frame.
  std::vector<double> vel(n, 0.0);
  for (int t = 1; t < n; ++t) {
    double worst = (clip.root_positions[t] - clip.root_positions[t - 1]).norm();
    const auto& a = clip.frames[t - 1].joint_positions;
    const auto& b = clip.frames[t].joint_positions;
    for (size_t j = 1; j < b.size(); ++j) {
      const Vec3 pa = clip.root_positions[t - 1] + a[j];
      const Vec3 pb = clip.root_positions[t] + b[j];
      worst = std::max(worst, (pb - pa).norm());
    }
    vel[t] = worst;
  }
  // A displaced frame spikes both its incoming and outgoing velocity; taking
  // the min isolates exactly the bad frame.
  std::vector<double> spike(n, 0.0);
  for (int t = 0; t < n; ++t) {
    const double in = t >= 1 ? vel[t] : -1.0;
    const double out = t + 1 < n ? vel[t + 1] : -1.0;
    if (in < 0.0)
      spike[t] = out < 0.0 ? 0.0 : out;
    else
      spike[t] = out < 0.0 ? in : std::min(in, out);
  }
  double mean = 0.0;
  for (double s : spike) mean += s;
  mean /= std::max(1, n);
  double var = 0.0;
  for (double s : spike) var += (s - mean) * (s - mean);
  var /= std::max(1, n);
  const double threshold =
      std::max(cfg.spike_floor_cm, mean + cfg.spike_sigma * std::sqrt(var));

  std::vector<uint8_t> bad(n, 0);
  for (int t = 0; t < n; ++t)
    if (spike[t] > threshold || clip.violation_deg[t] > cfg.max_violation_deg)
      bad[t] = 1;

  std::vector<MotionClip> out;
  int start = 0, part = 0;
  for (int t = 0; t <= n; ++t) {
    if (t == n || bad[t]) {
      if (t - start >= cfg.min_subclip_frames)
        out.push_back(subclip(clip, start, t, part++));
      start = t + 1;
    }
  }
  if (out.size() == 1 && out[0].length() == n) out[0].source_id = clip.source_id;
  return out;
}

Corpus split_corpus(const Skeleton& skeleton, std::vector<MotionClip> clips,
                    uint64_t seed) {
  Corpus corpus;
  corpus.skeleton = skeleton;
  std::map<std::string, std::vector<size_t>> by_class;
  for (size_t i = 0; i < clips.size(); ++i)
    by_class[clips[i].class_label].push_back(i);

  uint64_t class_idx = 0;
  for (auto& [label, members] : by_class) {
    Rng rng = Rng::substream(seed, class_idx++);
    for (size_t i = members.size(); i > 1; --i)
      std::swap(members[i - 1], members[size_t(rng.uniform_int(0, int64_t(i) - 1))]);
    const size_t n_train =
        size_t(std::llround(double(members.size()) * kTrainFraction));
    for (size_t i = 0; i < members.size(); ++i) {
      auto& dst = i < n_train ? corpus.train : corpus.test;
      dst.push_back(std::move(clips[members[i]]));
    }
  }
  return corpus;
}

// --- clip store -----------------------------------------------------------------

uint32_t crc32(const void* data, size_t n) {
  static uint32_t table[256];
  static bool built = false;
  if (!built) {
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      table[i] = c;
    }
    built = true;
  }
  uint32_t c = 0xffffffffu;
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) c = table[(c ^ p[i]) & 0xffu] ^ (c >> 8);
  return c ^ 0xffffffffu;
}

namespace {

constexpr char kStoreMagic[4] = {'T', 'W', 'C', 'S'};
constexpr uint32_t kStoreVersion = 1;

template <class T>
void put(std::string& buf, const T& v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}
void put_str(std::string& buf, const std::string& s) {
  put(buf, uint32_t(s.size()));
  buf.append(s);
}

struct Reader {
  const char* p;
  const char* end;
  template <class T>
  void get(T& v) {
    if (p + sizeof(T) > end) throw std::runtime_error("clip store: truncated record");
    std::memcpy(&v, p, sizeof(T));
    p += sizeof(T);
  }
  std::string get_str() {
    uint32_t n = 0;
    get(n);
    if (p + n > end) throw std::runtime_error("clip store: truncated string");
    std::string s(p, p + n);
    p += n;
    return s;
  }
};

std::string encode_clip(const MotionClip& clip, const Skeleton& sk) {
  std::string buf;
  put_str(buf, clip.class_label);
  put_str(buf, clip.source_id);
  put(buf, int32_t(clip.fps));
  put(buf, int32_t(clip.length()));
  put(buf, uint8_t(clip.positions_authoritative ? 1 : 0));
  const int m = sk.joint_count();
  for (int t = 0; t < clip.length(); ++t) {
    const auto& f = clip.frames[t];
    for (int a = 0; a < 3; ++a) put(buf, clip.root_positions[t][a]);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) put(buf, f.root_rotation(r, c));
    // Non-root rotations stored raw; positions are rebuilt on load, so the
    // record round-trips byte-stably.
    for (int j = 1; j < m; ++j)
      for (int rr = 0; rr < 3; ++rr)
        for (int cc = 0; cc < 3; ++cc) put(buf, f.joint_rotations[j](rr, cc));
    put(buf, uint8_t(clip.clamp_flags[t]));
    put(buf, clip.violation_deg[t]);
    if (clip.positions_authoritative)
      for (int j = 1; j < m; ++j)
        for (int a = 0; a < 3; ++a) put(buf, f.joint_positions[j][a]);
  }
  return buf;
}

MotionClip decode_clip(Reader& r, const Skeleton& sk) {
  MotionClip clip;
  clip.class_label = r.get_str();
  clip.source_id = r.get_str();
  int32_t fps = 0, n = 0;
  r.get(fps);
  r.get(n);
  clip.fps = fps;
  uint8_t pos_auth = 0;
  r.get(pos_auth);
  clip.positions_authoritative = pos_auth != 0;
  const int m = sk.joint_count();
  clip.root_positions.resize(n);
  clip.frames.resize(n);
  clip.clamp_flags.resize(n);
  clip.violation_deg.resize(n);
  for (int t = 0; t < n; ++t) {
    auto& f = clip.frames[t];
    for (int a = 0; a < 3; ++a) r.get(clip.root_positions[t][a]);
    for (int rr = 0; rr < 3; ++rr)
      for (int c = 0; c < 3; ++c) r.get(f.root_rotation(rr, c));
    f.joint_rotations.assign(m, Mat3::Identity());
    for (int j = 1; j < m; ++j)
      for (int rr = 0; rr < 3; ++rr)
        for (int cc = 0; cc < 3; ++cc) r.get(f.joint_rotations[j](rr, cc));
    uint8_t flag = 0;
    r.get(flag);
    clip.clamp_flags[t] = flag;
    r.get(clip.violation_deg[t]);
    f.joint_positions.assign(m, Vec3::Zero());
    if (clip.positions_authoritative) {
      for (int j = 1; j < m; ++j)
        for (int a = 0; a < 3; ++a) r.get(f.joint_positions[j][a]);
    } else {
      auto pos = forward_kinematics(f.joint_rotations, sk);
      for (int j = 0; j < m; ++j) f.joint_positions[j] = f.root_rotation * pos[j];
    }
  }
  return clip;
}

}  // namespace

void save_clip_store(std::ostream& out, const Skeleton& skeleton,
                     const std::vector<MotionClip>& clips) {
  std::ostringstream sk_blob_s;
  skeleton.serialize(sk_blob_s);
  const std::string sk_blob = sk_blob_s.str();

  std::vector<std::string> records;
  records.reserve(clips.size());
  for (const auto& c : clips) records.push_back(encode_clip(c, skeleton));

  std::string head;
  head.append(kStoreMagic, 4);
  put(head, kStoreVersion);
  put(head, skeleton.hash());
  put_str(head, sk_blob);
  put(head, uint32_t(records.size()));
  uint64_t offset = 0;
  for (const auto& r : records) {
    put(head, offset);
    put(head, uint64_t(r.size()));
    put(head, crc32(r.data(), r.size()));
    offset += r.size();
  }
  out.write(head.data(), std::streamsize(head.size()));
  for (const auto& r : records) out.write(r.data(), std::streamsize(r.size()));
}

void save_clip_store_file(const std::string& path, const Skeleton& skeleton,
                          const std::vector<MotionClip>& clips) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write clip store: " + path);
  save_clip_store(out, skeleton, clips);
}

ClipStore load_clip_store(std::istream& in) {
  std::string all((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  Reader r{all.data(), all.data() + all.size()};
  char magic[4];
  r.get(magic);
  if (std::memcmp(magic, kStoreMagic, 4) != 0)
    throw std::runtime_error("clip store: bad magic");
  uint32_t version = 0;
  r.get(version);
  if (version != kStoreVersion) throw std::runtime_error("clip store: bad version");
  uint64_t sk_hash = 0;
  r.get(sk_hash);
  const std::string sk_blob = r.get_str();
  std::istringstream sk_in(sk_blob);
  ClipStore store;
  store.skeleton = Skeleton::deserialize(sk_in);
  if (store.skeleton.hash() != sk_hash)
    throw std::runtime_error("clip store: skeleton hash mismatch");
  uint32_t count = 0;
  r.get(count);
  struct Entry {
    uint64_t offset, size;
    uint32_t crc;
  };
  std::vector<Entry> index(count);
  for (auto& e : index) {
    r.get(e.offset);
    r.get(e.size);
    r.get(e.crc);
  }
  const char* payload = r.p;
  for (const auto& e : index) {
    if (payload + e.offset + e.size > all.data() + all.size())
      throw std::runtime_error("clip store: truncated payload");
    if (crc32(payload + e.offset, e.size) != e.crc)
      throw std::runtime_error("clip store: checksum failure");
    Reader rec{payload + e.offset, payload + e.offset + e.size};
    store.clips.push_back(decode_clip(rec, store.skeleton));
  }
  return store;
}

ClipStore load_clip_store_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open clip store: " + path);
  return load_clip_store(in);
}

}  // namespace tween
