#pragma once

#include <cstddef>
#include <vector>

namespace tween::nn {

// Dense (batch, channel, time) tensor of doubles, time contiguous.
// Convolution kernels reuse the same layout as (out_ch, in_ch, kernel).
struct Tensor {
  int batch = 0, ch = 0, len = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int b, int c, int t, double fill = 0.0)
      : batch(b), ch(c), len(t), v(size_t(b) * c * t, fill) {}

  static Tensor scalar(double x) {
    Tensor t(1, 1, 1);
    t.v[0] = x;
    return t;
  }

  double& at(int b, int c, int t) { return v[(size_t(b) * ch + c) * len + t]; }
  const double& at(int b, int c, int t) const {
    return v[(size_t(b) * ch + c) * len + t];
  }
  double* row(int b, int c) { return v.data() + (size_t(b) * ch + c) * len; }
  const double* row(int b, int c) const {
    return v.data() + (size_t(b) * ch + c) * len;
  }

  size_t size() const { return v.size(); }
  bool same_shape(const Tensor& o) const {
    return batch == o.batch && ch == o.ch && len == o.len;
  }
  bool is_scalar() const { return batch == 1 && ch == 1 && len == 1; }
  double item() const { return v[0]; }

  void fill(double x) {
    for (auto& e : v) e = x;
  }
};

}  // namespace tween::nn
