#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tween/datapipe.hpp"
#include "tween/rng.hpp"
#include "tween/tensor.hpp"

namespace tween {

// Sparse time-indexed pose constraints. Poses are 3M vectors (root world
// position, cm, then root-relative joint positions); the mask marks which
// coordinates the user actually specified (partial-body input).
struct KeyframeSet {
  std::vector<int> indices;                  // strictly increasing
  std::vector<std::vector<double>> poses;    // per keyframe, 3M
  std::vector<std::vector<uint8_t>> mask;    // per keyframe, 3M

  int count() const { return int(indices.size()); }
  void validate(int n_frames, int pose_dim) const;

  static KeyframeSet full_pose(std::vector<int> indices,
                               std::vector<std::vector<double>> poses);
};

// Generator conditioning: values and weight channels, each (1, 3M, N).
// Sparse mode: values are the poses at keyframes (zero elsewhere), weight is
// the 0/1 presence mask. Dense mode: every frame copies its nearest
// keyframe's pose and weight carries the normalized distance transform
// (zero exactly at keyframes).
struct ConditioningTensor {
  nn::Tensor values;
  nn::Tensor weight;
};

constexpr double kDistanceNorm = 300.0;  // half the maximum sampled interval

ConditioningTensor build_sparse_input(const KeyframeSet& keys, int n_frames,
                                      int pose_dim);
ConditioningTensor build_dense_input(const KeyframeSet& keys, int n_frames,
                                     int pose_dim,
                                     double dist_norm = kDistanceNorm);

// --- training-time sampling ----------------------------------------------------

struct KeyframeSampleConfig {
  int max_interval = 600;        // frames
  int short_interval = 180;      // 3 s: below this, both ends from one clip
  double switch_ramp = 420.0;    // p(L) = min(1, (L-180)/ramp)
  double root_speed_cap = 1.5;   // cm per frame of interval when switching
};

struct SampledKeyframes {
  KeyframeSet keys;
  std::vector<int> interval_lengths;  // between consecutive keyframes
};

// Appendix-style sampler: interval lengths uniform in [1, 600]; short
// intervals keep both endpoints from one clip with the same in-clip gap;
// long intervals switch clips with probability p(L) and a root distance
// scaled with L.
SampledKeyframes sample_keyframes(std::span<const MotionClip> corpus, int n_frames,
                                  Rng& rng, const KeyframeSampleConfig& cfg = {});

// --- representative frames / Motion DNA -----------------------------------------

struct RepresentativeFrames {
  std::vector<int> frame_indices;
  std::vector<std::vector<double>> poses;  // 3(M-1), root rotation removed
  bool fallback = false;                   // static clip, uniform sampling
};

constexpr int kRepFrameSpacing = 30;  // non-adjacency window, frames

// The `count` frames with the largest summed adjacent joint-rotation change
// (geodesic angle), canonical facing via root-rotation removal.
RepresentativeFrames extract_representative_frames(const MotionClip& clip, int count);

// 1 representative frame per 3 s of interval length; frames drawn from one
// motion class. Returns an empty set when every interval is short.
struct DnaSample {
  std::vector<std::vector<double>> poses;  // N-hat x 3(M-1)
  std::string class_label;
};

DnaSample sample_dna(std::span<const int> interval_lengths,
                     std::span<const MotionClip> corpus, Rng& rng);

int dna_frame_budget(std::span<const int> interval_lengths,
                     int short_interval = 180);

}  // namespace tween
