#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tween/graph.hpp"
#include "tween/rng.hpp"

namespace tween::nn {

enum class LayerKind { ResConv, ResConvT, Conv, Affine, PRelu, AvgPool };

const char* to_string(LayerKind k);

struct LayerSpec {
  LayerKind kind = LayerKind::Conv;
  int in_ch = 0, out_ch = 0;
  int kernel = 1, stride = 1, pad = 0;
  double ratio = 1.0;  // residual ratio sigma in [0,1]
};

struct NetworkSpec {
  std::string name;
  std::vector<LayerSpec> layers;

  int input_ch() const { return layers.front().in_ch; }
  int output_ch() const;
  uint64_t hash() const;
  void validate() const;  // channel chaining, sigma range, kernel/stride
  std::string manifest() const;  // one line per layer
};

// The five stacks from the architecture table, channel constants derived
// from the joint count m. width_scale shrinks interior channels for
// desk-scale runs; data-determined channel counts are never scaled.
NetworkSpec make_encoder_spec(int m, double width_scale = 1.0);
NetworkSpec make_decoder_spec(int m, double width_scale = 1.0);
NetworkSpec make_dna_encoder_spec(int m, double width_scale = 1.0);
NetworkSpec make_discriminator_spec(int m, double width_scale = 1.0);
NetworkSpec make_path_predictor_spec(int m, double width_scale = 1.0);

// Latent width (1024 at full scale) after width scaling.
int scaled_latent_dim(double width_scale);

struct LayerWeights {
  Tensor kernel;               // (out_ch, in_ch, k); empty for Affine/PRelu/AvgPool
  std::vector<double> scale;   // affine scale, per channel
  std::vector<double> bias;    // affine bias
  std::vector<double> slope;   // PReLU slope
};

struct NetWeights {
  NetworkSpec spec;
  std::vector<LayerWeights> layers;
  std::vector<double> extra;  // e.g. the DNA empty-pool constant

  void init(Rng& rng);        // variance-scaled uniform, PReLU slope 0.25
  size_t param_count() const;
  void flatten(std::vector<float>& out) const;
  void unflatten(const std::vector<float>& in);
  // Rounds every parameter through float32 (keeps checkpoints bit-exact).
  void quantize_f32();
};

// Node ids of one layer's parameters inside a Graph.
struct LayerNodes {
  int kernel = -1, scale = -1, bias = -1, slope = -1;
};

// Pushes all parameters of a network into the graph as leaves.
std::vector<LayerNodes> push_weights(Graph& g, const NetWeights& w,
                                     bool requires_grad);

struct ForwardHooks {
  // Residual-block conv outputs (pre-affine), for the batch regularizer.
  std::vector<int>* conv_outputs = nullptr;
  // Stop after this many layers and return that activation (bottleneck taps).
  int stop_after_layer = -1;
};

int network_forward(Graph& g, const NetworkSpec& spec,
                    const std::vector<LayerNodes>& nodes, int x,
                    const ForwardHooks& hooks = {});

// One residual block (kinds ResConv / ResConvT) standing alone.
int residual_block_forward(Graph& g, int x, const LayerSpec& layer,
                           const LayerNodes& nodes, int* conv_out = nullptr);

// Motion-DNA encoder: frames (1, 3(M-1), n) -> (1, latent, 1); n = 0 uses the
// learned empty-pool constant (w.extra). Permutation-invariant in the frames.
int dna_encode(Graph& g, const NetWeights& w, const std::vector<LayerNodes>& nodes,
               int frames_or_neg, int latent_dim, int empty_const_node);

// --- receptive fields -------------------------------------------------------

// Analytic receptive field (input frames seen by one interior output) of
// layers [first, last) of the spec; defaults to the whole stack. AvgPool and
// other global ops make the result input-length dependent; pass probe_len.
int receptive_field(const NetworkSpec& spec, int first = 0, int last = -1,
                    int probe_len = 0);

// Empirical receptive field: bisects for the input-frame influence interval
// of one interior output unit under random weights.
int impulse_probe(const NetworkSpec& spec, int probe_len, uint64_t seed,
                  int first = 0, int last = -1);

// Encoder followed by the first two decoder layers (the bottleneck stack the
// 318-frame figure refers to).
NetworkSpec bottleneck_stack(const NetworkSpec& encoder, const NetworkSpec& decoder);

// --- gradient checking ------------------------------------------------------

struct GradCheckResult {
  double max_rel_err = 0.0;
  size_t worst_index = 0;
  double analytic = 0.0, numeric = 0.0;
};

// fn(params, grad_out): returns the scalar; when grad_out is non-empty it
// must be filled with the analytic gradient. Central differences at +-eps,
// relative error |a-n| / max(|a|,|n|,1e-3).
GradCheckResult grad_check(
    const std::function<double(std::span<const double>, std::span<double>)>& fn,
    std::vector<double> params, double eps);

// --- checkpoints -------------------------------------------------------------

// Versioned binary container. Header: magic, version, per-section spec hash
// and layer manifest; body: little-endian float32 in spec layer order.
struct WeightSection {
  std::string name;
  std::string manifest;
  uint64_t spec_hash = 0;
  std::vector<float> data;
};

void write_checkpoint(std::ostream& out, const std::vector<WeightSection>& sections);
std::vector<WeightSection> read_checkpoint(std::istream& in);

void save_net(std::ostream& out, const NetWeights& w, const std::string& name);
// Throws on spec-hash mismatch.
void load_net(std::istream& in, NetWeights& w, const std::string& name);

WeightSection section_from_net(const NetWeights& w, const std::string& name);
void net_from_section(const WeightSection& s, NetWeights& w);

}  // namespace tween::nn
