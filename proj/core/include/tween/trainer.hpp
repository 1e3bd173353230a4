#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>

#include "tween/globalpath.hpp"
#include "tween/keyframe.hpp"
#include "tween/losses.hpp"
#include "tween/network.hpp"

namespace tween {

struct TrainConfig {
  // Optimization (paper-scale defaults; desk configs override via file).
  double lr = 1e-5;             // both G and D
  double rmsprop_alpha = 0.99;  // "default parameters" pinned explicitly
  double rmsprop_eps = 1e-8;

  // Batch shapes.
  int gen_batch = 4;
  int gen_frames = 2048;
  int disc_batch = 16;
  int disc_min_len = 256;
  int disc_max_len = 1024;

  LossWeights weights;
  uint64_t seed = 1;
  int64_t iterations = 1000;
  int checkpoint_every = 1000;
  int validate_every = 500;

  double width_scale = 1.0;
  double input_scale = 0.01;

  // Path-predictor pretraining.
  double path_lr = -1.0;  // < 0: use lr
  int path_frames = 512;
  int path_batch = 4;
  int64_t path_iterations = 2000;
  double height_weight = 1.0;

  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
  static TrainConfig from_json_file(const std::string& path);
  uint64_t hash() const;
  void validate() const;
};

// RMSprop with square-average state; all state is kept on the float32 grid
// so that checkpoint save/load resumes bit-exactly.
struct RmsProp {
  double lr = 1e-5, alpha = 0.99, eps = 1e-8;
  std::vector<double> sq;

  void step(std::span<double> params, std::span<const double> grads);
};

// Parameter/gradient plumbing between NetWeights and graphs.
void flatten_params(const nn::NetWeights& w, std::vector<double>& out);
void assign_params(nn::NetWeights& w, std::span<const double> in);
void collect_grads(nn::Graph& g, const std::vector<nn::LayerNodes>& nodes,
                   int extra_node, std::vector<double>& out);

// --- path predictor ---------------------------------------------------------------

struct PathTrainResult {
  nn::NetWeights weights;  // best-validation checkpoint
  bool aborted_nan = false;
  int64_t iterations_run = 0;
  double best_velocity_err_cm = 1e300;  // per-frame planar
  double best_disp128_err_cm = 1e300;   // 128-frame displacement
};

PathTrainResult train_path_predictor(const Corpus& corpus, const TrainConfig& cfg,
                                     std::ostream* metrics);

// Untrained path-predictor weights with the height-offset slot (extra[0]).
nn::NetWeights init_path_predictor(const Skeleton& skeleton, const TrainConfig& cfg,
                                   uint64_t seed);

// Mean planar velocity / n-frame displacement error of a predictor over
// whole clips.
double path_velocity_error(const nn::NetWeights& path,
                           std::span<const MotionClip> clips, double input_scale);
double path_displacement_error(const nn::NetWeights& path,
                               std::span<const MotionClip> clips, int horizon,
                               double input_scale);

// --- inbetweener ------------------------------------------------------------------

struct GeneratorWeights {
  nn::NetWeights encoder;
  nn::NetWeights dna_encoder;  // extra = empty-pool constant (latent dim)
  nn::NetWeights decoder;
};

GeneratorWeights init_generator(const Skeleton& skeleton, const TrainConfig& cfg,
                                uint64_t seed);

struct TrainState {
  GeneratorWeights gen;
  nn::NetWeights disc;
  nn::NetWeights path;  // frozen
  uint64_t path_hash = 0;
  int64_t iteration = 0;
  uint64_t seed = 0;
  uint64_t config_hash = 0;
  RmsProp opt_encoder, opt_dna, opt_decoder, opt_disc;
};

void save_train_state(std::ostream& out, const TrainState& state);
void save_train_state_file(const std::string& path, const TrainState& state);
TrainState load_train_state(std::istream& in, const Skeleton& skeleton,
                            const TrainConfig& cfg);
TrainState load_train_state_file(const std::string& path, const Skeleton& skeleton,
                                 const TrainConfig& cfg);

struct IterationStats {
  double d_loss = 0, g_adv = 0, br_g = 0, br_d = 0, local = 0;
  double dna1 = 0, dna2 = 0, root = 0, w_path = 0, g_total = 0;
};

struct TrainHooks {
  // Called with the substituted discriminator input; lets tests verify that
  // keyframe rows byte-equal the user poses.
  std::function<void(const nn::Tensor& disc_input,
                     const std::vector<std::vector<int>>& keyframe_cols,
                     const std::vector<std::vector<std::vector<double>>>& scaled_targets)>
      on_disc_input;
  std::function<void(int64_t iter, const IterationStats&)> on_iteration;
};

struct TweenTrainResult {
  TrainState state;
  bool aborted_nan = false;
};

// Two-stage contract: refuses to run unless the path predictor is trained
// and marked frozen (non-empty weights).
TweenTrainResult train_inbetweener(const Corpus& corpus, const nn::NetWeights& path,
                                   const TrainConfig& cfg, std::ostream* metrics,
                                   const TrainHooks& hooks = {},
                                   std::optional<TrainState> resume = std::nullopt);

}  // namespace tween
