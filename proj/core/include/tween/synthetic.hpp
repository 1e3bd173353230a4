#pragma once

#include "tween/datapipe.hpp"
#include "tween/rng.hpp"

namespace tween {

// Compact 16-joint humanoid used by examples, benchmarks and desk-scale
// training runs.
Skeleton compact_skeleton();

// Smooth, in-range procedural motion. Joint angles are sinusoid mixtures
// inside their limits; the planar root velocity is a fixed linear function
// of the foot separation, so a path predictor can represent it exactly.
MotionClip make_synthetic_clip(const Skeleton& skeleton, int length, uint64_t seed,
                               const std::string& class_label = "synthetic");

std::vector<MotionClip> make_synthetic_clips(const Skeleton& skeleton, int count,
                                             int length, uint64_t seed,
                                             int n_classes = 2);

}  // namespace tween
