#pragma once

#include <span>
#include <vector>

#include "tween/graph.hpp"

namespace tween {

// Training objective weights; the path weight ramps +1 per 1000 iterations.
struct LossWeights {
  double gan = 1.0;
  double batch_reg = 5.0;
  double local_joint = 300.0;
  double dna1 = 50.0;
  double dna2 = 50.0;
  double path_start = 10.0;
  double path_max = 80.0;
  int path_step_iters = 1000;

  double path_weight(int64_t iteration) const {
    return std::min(path_max, path_start + double(iteration / path_step_iters));
  }
};

constexpr double kLsganGeneratorTarget = 0.2361;
constexpr double kBatchRegStdFloor = 1e-5;
constexpr int kDnaIntervalFrames = 180;  // 3 s at 60 fps

// --- plain (non-tape) losses ---------------------------------------------------

double lsgan_d_loss(std::span<const double> y_real, std::span<const double> y_fake);
double lsgan_g_loss(std::span<const double> y_fake);

// features: residual-block conv outputs; statistics per channel over
// batch x time; D = total channel count.
double batch_reg_loss(std::span<const nn::Tensor> features);

// Keyframe root positions (3 x N'), recentered by their keyframe means.
double root_alignment_loss(std::span<const Vec3> pred_root,
                           std::span<const Vec3> target_root);

// MSE over masked non-root coordinates at keyframes.
double local_joint_loss(std::span<const std::vector<double>> pred,
                        std::span<const std::vector<double>> target,
                        std::span<const std::vector<uint8_t>> mask);

// poses are root-rotation-removed 3(M-1) vectors.
double dna_loss_1(std::span<const std::vector<double>> synthesized,
                  std::span<const std::vector<double>> representative);

double dna_loss_2(std::span<const std::vector<double>> synthesized,
                  std::span<const std::vector<double>> representative,
                  std::span<const int> keyframe_indices,
                  int interval_frames = kDnaIntervalFrames);

struct PathDispResult {
  double loss = 0.0;
  bool scales_skipped = false;  // N too short for the largest 2^q windows
};

// Multi-scale displacement error over windows n = 1,2,4,...,128 of planar
// velocities (2 x T each).
PathDispResult path_displacement_loss(const nn::Tensor& pred_velocity,
                                      const nn::Tensor& true_velocity);

// --- tape losses -----------------------------------------------------------------

namespace tape {

int lsgan_d_loss(nn::Graph& g, int y_real, int y_fake);
int lsgan_g_loss(nn::Graph& g, int y_fake);

// One layer's contribution sum_c (mu_c^2 + log(std_c)^2); callers scale by
// 1/D over all layers.
int batch_reg_term(nn::Graph& g, int features);

// pred planar positions (B,2,T) + height (B,1,T) sampled at per-batch
// keyframe columns vs target roots; Eq-10 recentering inside.
int root_alignment_loss(nn::Graph& g, int planar_pos, int height,
                        const std::vector<std::vector<int>>& cols,
                        const std::vector<std::vector<Vec3>>& targets);

// positions (B,C,T) at keyframe columns vs masked targets; mean over masked
// coordinates, averaged over batch.
int masked_keyframe_mse(nn::Graph& g, int positions,
                        const std::vector<std::vector<int>>& cols,
                        const std::vector<std::vector<std::vector<double>>>& targets,
                        const std::vector<std::vector<std::vector<uint8_t>>>& masks);

int dna_loss_1(nn::Graph& g, int lambda_positions,
               const std::vector<std::vector<std::vector<double>>>& representative);

int dna_loss_2(nn::Graph& g, int lambda_positions,
               const std::vector<std::vector<std::vector<double>>>& representative,
               const std::vector<std::vector<int>>& keyframe_indices,
               int interval_frames = kDnaIntervalFrames);

// velocities (B,2,T) vs constant truth.
int path_displacement_loss(nn::Graph& g, int pred_velocity,
                           std::shared_ptr<const nn::Tensor> true_velocity);

}  // namespace tape

}  // namespace tween
