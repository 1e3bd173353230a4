#pragma once

#include <array>
#include <iosfwd>

#include "tween/trainer.hpp"

namespace tween {

// Longest keyframe gap the dense format can service (see the receptive-field
// tests); larger gaps synthesize but warn.
constexpr int kMaxKeyframeGap = 636;

struct SynthesisRequest {
  KeyframeSet keys;
  std::vector<std::vector<double>> dna_poses;  // 3(M-1) each, derotated; may be empty
  int n_frames = 0;                            // must divide by 64
  double input_scale = 0.01;                   // must match training
};

struct SynthesisResult {
  MotionClip clip;  // world space
  bool gap_warning = false;
  double local_generation_s = 0.0;
  double path_prediction_s = 0.0;
};

// Dense conditioning -> generator -> RC-FK -> path predictor -> integration,
// anchored to the user keyframe roots by the recentering fit.
SynthesisResult synthesize(const SynthesisRequest& request, const Skeleton& skeleton,
                           const GeneratorWeights& gen, const nn::NetWeights& path);

// Exact keyframe matching: cosine-falloff corrections solved so overlapping
// windows stay exact; frames beyond every window are untouched.
constexpr int kEnforceWindow = 30;
void enforce_keyframes(MotionClip& clip, const KeyframeSet& keys,
                       int window = kEnforceWindow);

struct AlignmentError {
  double root_cm = 0.0;   // recentered, per the root-loss convention
  double local_cm = 0.0;  // mean per-joint Euclidean over masked joints
};

AlignmentError eval_alignment(const MotionClip& clip, const KeyframeSet& keys);

struct DnaError {
  double dna1_cm = 0.0;
  double dna2_cm = 0.0;
};

DnaError eval_dna(const MotionClip& clip,
                  std::span<const std::vector<double>> representative,
                  std::span<const int> keyframe_indices);

// --- timing harness -----------------------------------------------------------

struct TimingRow {
  int frames = 0;
  double local_generation_s = 0.0;
  double path_prediction_s = 0.0;
  double post_processing_s = 0.0;
  double total_s = 0.0;  // sum of the stages
};

struct TimingTable {
  std::vector<TimingRow> rows;
};

// Paper-reported references for the same sequence lengths, for side-by-side
// printing (not enforced).
struct TimingReference {
  int frames;
  double local_s, path_s, post_s, total_s;
};
std::span<const TimingReference> paper_timing_reference();

TimingTable benchmark_timing(const Skeleton& skeleton, const GeneratorWeights& gen,
                             const nn::NetWeights& path,
                             std::span<const int> lengths, uint64_t seed);
void print_timing(std::ostream& out, const TimingTable& table);

}  // namespace tween
