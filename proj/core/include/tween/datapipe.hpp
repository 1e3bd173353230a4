#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "tween/rng.hpp"
#include "tween/skeleton.hpp"

namespace tween {

// One mocap clip at 60 fps: world root track plus local pose per frame.
struct MotionClip {
  std::string class_label;
  std::string source_id;
  int fps = 60;
  std::vector<Vec3> root_positions;    // world, cm
  std::vector<LocalPoseFrame> frames;  // root-relative positions, world-oriented
  std::vector<uint8_t> clamp_flags;    // a joint angle was clamped into range
  std::vector<double> violation_deg;   // pre-clamp excursion beyond limits
  // Post-processing edits positions directly; when set, stored positions are
  // authoritative instead of FK of the rotations.
  bool positions_authoritative = false;

  int length() const { return int(frames.size()); }

  // 3M: root world position followed by non-root root-relative positions.
  std::vector<double> pose_vector(int t) const;
  // 3(M-1): non-root root-relative positions (world-oriented).
  std::vector<double> local_vector(int t) const;
  // 3(M-1): non-root positions with the root rotation removed.
  std::vector<double> lambda_vector(int t) const;
};

struct Corpus {
  Skeleton skeleton;
  std::vector<MotionClip> train;
  std::vector<MotionClip> test;

  std::vector<std::string> class_labels() const;
};

// Minimum clip length kept anywhere in the pipeline (4 s at 60 fps).
constexpr int kMinClipFrames = 240;

struct GroundFilterConfig {
  int window_frames = 60;        // 1 s
  double below_tolerance_cm = 2.0;
  double flatness_tolerance_cm = 25.0;
};

struct GroundFilterResult {
  bool keep = true;
  double min_window_cm = 0.0;
  double max_window_cm = 0.0;
};

// Windowed minimum joint height; drops clips sinking below the plane or
// whose support height drifts (stairs, platforms).
GroundFilterResult filter_ground_plane(const MotionClip& clip,
                                       const GroundFilterConfig& cfg = {});

struct NoiseFilterConfig {
  double spike_sigma = 6.0;          // threshold over the clip's own stats
  double spike_floor_cm = 10.0;      // absolute per-frame floor
  double max_violation_deg = 30.0;   // pre-clamp joint-limit excursion
  int min_subclip_frames = kMinClipFrames;
};

// Two-part badness score (limit violations + teleport-style velocity
// spikes); bad frames are deleted and the clip is split there. Sub-clips
// shorter than the minimum are dropped.
std::vector<MotionClip> filter_noise(const MotionClip& clip,
                                     const NoiseFilterConfig& cfg = {});

// Deterministic stratified split at the 1220/242 corpus ratio.
Corpus split_corpus(const Skeleton& skeleton, std::vector<MotionClip> clips,
                    uint64_t seed);
constexpr double kTrainFraction = 1220.0 / (1220.0 + 242.0);

// --- clip store ---------------------------------------------------------------

// Versioned binary container: header with skeleton hash and per-clip index,
// CRC32 per record. Round-trips byte-stably.
void save_clip_store(std::ostream& out, const Skeleton& skeleton,
                     const std::vector<MotionClip>& clips);
void save_clip_store_file(const std::string& path, const Skeleton& skeleton,
                          const std::vector<MotionClip>& clips);

struct ClipStore {
  Skeleton skeleton;
  std::vector<MotionClip> clips;
};

ClipStore load_clip_store(std::istream& in);
ClipStore load_clip_store_file(const std::string& path);

uint32_t crc32(const void* data, size_t n);

}  // namespace tween
