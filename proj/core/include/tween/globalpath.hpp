#pragma once

#include "tween/datapipe.hpp"
#include "tween/network.hpp"

namespace tween {

// Root trajectory: planar velocities plus directly-predicted height.
struct RootTrack {
  std::vector<Eigen::Vector2d> velocities;  // (dx, dz) cm/frame
  std::vector<double> heights;              // y, cm
  std::vector<Vec3> positions;              // integrated world positions
};

// Path-predictor inference: local motion (B, 3(M-1), T) -> (B, 3, T) with
// channels (dx, dz, y). T must divide by 16 (the predictor's stride product).
nn::Tensor predict_root_motion(const nn::Tensor& local_motion,
                               const nn::NetWeights& path_weights,
                               double input_scale = 1.0);

// Prefix-sum integration of planar velocities from an initial position.
std::vector<Eigen::Vector2d> integrate_path(std::span<const Eigen::Vector2d> velocities,
                                            const Eigen::Vector2d& initial);

// Full track from predictor output (batch element b).
RootTrack root_track_from_prediction(const nn::Tensor& prediction, int b,
                                     const Eigen::Vector2d& initial_planar);

// Ground-truth targets for path training: (B,3,T) channels (dx, dz, y);
// dx/dz are root_positions[t+1]-root_positions[t] (last frame repeats).
nn::Tensor path_targets_from_clip(const MotionClip& clip, int start, int frames);

}  // namespace tween
