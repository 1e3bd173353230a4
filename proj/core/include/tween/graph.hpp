#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "tween/skeleton.hpp"
#include "tween/tensor.hpp"

namespace tween::nn {

// Reverse-mode tape over whole-tensor operations. A Graph is built per
// forward pass; node values stay alive for the backward sweep. Nodes are
// appended in topological order, so backward() is a single reverse walk.
// All ops have hand-derived adjoints, gated by grad_check.
class Graph {
 public:
  // Called with the node's own id; reads grad(self), accumulates into parents.
  using BackwardFn = std::function<void(Graph&, int self)>;

  int leaf(Tensor value, bool requires_grad = false);
  int add(Tensor value, std::initializer_list<int> parents, BackwardFn bw);
  int add(Tensor value, const std::vector<int>& parents, BackwardFn bw);

  const Tensor& val(int id) const { return nodes_[id].value; }
  Tensor& grad(int id);
  bool has_grad(int id) const { return !nodes_[id].grad.v.empty(); }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  // Seeds d(root)/d(root) = 1 (root must be scalar) and sweeps the tape.
  void backward(int root);

  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily, zero-initialized
    bool requires_grad = false;
    BackwardFn bw;
  };
  std::vector<Node> nodes_;
};

// --- generic ops -----------------------------------------------------------

int conv1d(Graph& g, int x, int kernel, int stride, int pad);
int tconv1d(Graph& g, int x, int kernel, int stride, int pad);
int affine(Graph& g, int x, int scale, int bias);   // per-channel
int prelu(Graph& g, int x, int slope);              // per-channel slope
int tanh_op(Graph& g, int x);
int add_scaled(Graph& g, int a, double alpha, int b, double beta);
int scale_op(Graph& g, int x, double c);
int concat_ch(Graph& g, int a, int b);
int broadcast_time(Graph& g, int x, int t);         // (B,C,1) -> (B,C,t)
int avgpool_time(Graph& g, int x);                  // (B,C,T) -> (B,C,1)
int slice_ch(Graph& g, int x, int first, int count);
int stack_batch(Graph& g, std::span<const int> ids);  // k x (1,C,T) -> (k,C,T)

enum class SkipTime { None, Sub2, Rep2 };
// Parameter-free skip-path shape adapter: optional x2 subsample / repeat in
// time, zero-pad or truncate channels to out_ch.
int skip_adapt(Graph& g, int x, int out_ch, SkipTime mode);

// y = x*(1-mask) + repl*mask; gradient passes only where mask == 0.
// mask is (B,1,T) (broadcast over channels) or (B,C,T).
int masked_mix(Graph& g, int x, std::shared_ptr<const Tensor> repl,
               std::shared_ptr<const Tensor> mask);

// Exclusive running sum along time: y(t) = sum_{i<t} x(i).
int prefix_sum_time(Graph& g, int x);

// mean over all elements of (x - target)^2.
int mean_sq_dev(Graph& g, int x, double target);

// sum_i probe_i * x_i (probe constant, same shape).
int inner_product(Graph& g, int x, std::shared_ptr<const Tensor> probe);

// sum_i coeff_i * scalar_i.
int weighted_sum(Graph& g, std::span<const int> ids, std::span<const double> coeffs);

// --- RC-FK tape op ---------------------------------------------------------

// raw (B, 6+3(M-1), T) -> non-root joint positions (B, 3(M-1), T).
// apply_root_rotation=false yields the derotated pose Lambda(S).
int rcfk_positions(Graph& g, int raw, const Skeleton& skeleton,
                   bool apply_root_rotation);

}  // namespace tween::nn
