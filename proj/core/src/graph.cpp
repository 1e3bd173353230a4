#include "tween/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tween::nn {

int Graph::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return int(nodes_.size()) - 1;
}

int Graph::add(Tensor value, std::initializer_list<int> parents, BackwardFn bw) {
  return add(std::move(value), std::vector<int>(parents), std::move(bw));
}

int Graph::add(Tensor value, const std::vector<int>& parents, BackwardFn bw) {
  Node n;
  n.value = std::move(value);
  for (int p : parents)
    if (nodes_[p].requires_grad) n.requires_grad = true;
  if (n.requires_grad) n.bw = std::move(bw);
  nodes_.push_back(std::move(n));
  return int(nodes_.size()) - 1;
}

Tensor& Graph::grad(int id) {
  Node& n = nodes_[id];
  if (n.grad.v.empty()) n.grad = Tensor(n.value.batch, n.value.ch, n.value.len);
  return n.grad;
}

void Graph::backward(int root) {
  if (!nodes_[root].value.is_scalar())
    throw std::invalid_argument("backward: root must be scalar");
  grad(root).v[0] = 1.0;
  for (int id = root; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.requires_grad && n.bw && !n.grad.v.empty()) n.bw(*this, id);
  }
}

namespace {

void check(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

// Floor division for possibly-negative numerators (conv index bounds).
inline int floordiv_i(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

}  // namespace

int conv1d(Graph& g, int x, int kernel, int stride, int pad) {
  const Tensor& X = g.val(x);
  const Tensor& W = g.val(kernel);
  check(X.ch == W.ch, "conv1d: channel mismatch");
  const int k = W.len, oc = W.batch, tin = X.len;
  check((tin + 2 * pad - k) % stride == 0 && tin + 2 * pad >= k,
        "conv1d: length does not divide");
  const int t_out = (tin + 2 * pad - k) / stride + 1;
  Tensor Y(X.batch, oc, t_out);
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < X.batch; ++b)
    for (int o = 0; o < oc; ++o) {
      double* yr = Y.row(b, o);
      for (int ic = 0; ic < X.ch; ++ic) {
        const double* xr = X.row(b, ic);
        const double* wr = W.row(o, ic);
        for (int kk = 0; kk < k; ++kk) {
          const double wv = wr[kk];
          const int off = kk - pad;
          const int t0 = off < 0 ? (-off + stride - 1) / stride : 0;
          const int t1 = std::min(t_out - 1, floordiv_i(tin - 1 - off, stride));
          for (int t = t0; t <= t1; ++t) yr[t] += wv * xr[t * stride + off];
        }
      }
    }
  return g.add(std::move(Y), {x, kernel}, [=](Graph& gg, int self) {
    const Tensor& Xv = gg.val(x);
    const Tensor& Wv = gg.val(kernel);
    const Tensor& dY = gg.grad(self);
    const int t_o = dY.len;
    if (gg.requires_grad(x)) {
      Tensor& dX = gg.grad(x);
#pragma omp parallel for collapse(2) schedule(static)
      for (int b = 0; b < Xv.batch; ++b)
        for (int ic = 0; ic < Xv.ch; ++ic) {
          double* dxr = dX.row(b, ic);
          for (int o = 0; o < Wv.batch; ++o) {
            const double* dyr = dY.row(b, o);
            const double* wr = Wv.row(o, ic);
            for (int kk = 0; kk < k; ++kk) {
              const double wv = wr[kk];
              const int off = kk - pad;
              const int t0 = off < 0 ? (-off + stride - 1) / stride : 0;
              const int t1 = std::min(t_o - 1, floordiv_i(tin - 1 - off, stride));
              for (int t = t0; t <= t1; ++t) dxr[t * stride + off] += wv * dyr[t];
            }
          }
        }
    }
    if (gg.requires_grad(kernel)) {
      Tensor& dW = gg.grad(kernel);
#pragma omp parallel for schedule(static)
      for (int o = 0; o < Wv.batch; ++o)
        for (int ic = 0; ic < Xv.ch; ++ic) {
          double* dwr = dW.row(o, ic);
          for (int kk = 0; kk < k; ++kk) {
            const int off = kk - pad;
            const int t0 = off < 0 ? (-off + stride - 1) / stride : 0;
            const int t1 = std::min(t_o - 1, floordiv_i(tin - 1 - off, stride));
            double acc = 0.0;
            for (int b = 0; b < Xv.batch; ++b) {
              const double* xr = Xv.row(b, ic);
              const double* dyr = dY.row(b, o);
              for (int t = t0; t <= t1; ++t) acc += xr[t * stride + off] * dyr[t];
            }
            dwr[kk] += acc;
          }
        }
    }
  });
}

int tconv1d(Graph& g, int x, int kernel, int stride, int pad) {
  const Tensor& X = g.val(x);
  const Tensor& W = g.val(kernel);
  check(X.ch == W.ch, "tconv1d: channel mismatch");
  const int k = W.len, oc = W.batch, tin = X.len;
  const int t_out = (tin - 1) * stride - 2 * pad + k;
  check(t_out > 0, "tconv1d: empty output");
  Tensor Y(X.batch, oc, t_out);
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < X.batch; ++b)
    for (int o = 0; o < oc; ++o) {
      double* yr = Y.row(b, o);
      for (int ic = 0; ic < X.ch; ++ic) {
        const double* xr = X.row(b, ic);
        const double* wr = W.row(o, ic);
        for (int kk = 0; kk < k; ++kk) {
          const double wv = wr[kk];
          const int off = kk - pad;
          for (int t = 0; t < tin; ++t) {
            const int to = t * stride + off;
            if (to >= 0 && to < t_out) yr[to] += wv * xr[t];
          }
        }
      }
    }
  return g.add(std::move(Y), {x, kernel}, [=](Graph& gg, int self) {
    const Tensor& Xv = gg.val(x);
    const Tensor& Wv = gg.val(kernel);
    const Tensor& dY = gg.grad(self);
    const int t_o = dY.len;
    if (gg.requires_grad(x)) {
      Tensor& dX = gg.grad(x);
#pragma omp parallel for collapse(2) schedule(static)
      for (int b = 0; b < Xv.batch; ++b)
        for (int ic = 0; ic < Xv.ch; ++ic) {
          double* dxr = dX.row(b, ic);
          for (int o = 0; o < Wv.batch; ++o) {
            const double* dyr = dY.row(b, o);
            const double* wr = Wv.row(o, ic);
            for (int kk = 0; kk < k; ++kk) {
              const double wv = wr[kk];
              const int off = kk - pad;
              for (int t = 0; t < tin; ++t) {
                const int to = t * stride + off;
                if (to >= 0 && to < t_o) dxr[t] += wv * dyr[to];
              }
            }
          }
        }
    }
    if (gg.requires_grad(kernel)) {
      Tensor& dW = gg.grad(kernel);
#pragma omp parallel for schedule(static)
      for (int o = 0; o < Wv.batch; ++o)
        for (int ic = 0; ic < Xv.ch; ++ic) {
          double* dwr = dW.row(o, ic);
          for (int kk = 0; kk < k; ++kk) {
            const int off = kk - pad;
            double acc = 0.0;
            for (int b = 0; b < Xv.batch; ++b) {
              const double* xr = Xv.row(b, ic);
              const double* dyr = dY.row(b, o);
              for (int t = 0; t < tin; ++t) {
                const int to = t * stride + off;
                if (to >= 0 && to < t_o) acc += xr[t] * dyr[to];
              }
            }
            dwr[kk] += acc;
          }
        }
    }
  });
}

int affine(Graph& g, int x, int scale, int bias) {
  const Tensor& X = g.val(x);
  const Tensor& S = g.val(scale);
  const Tensor& B = g.val(bias);
  check(S.ch == X.ch && B.ch == X.ch && S.len == 1 && B.len == 1 && S.batch == 1,
        "affine: parameter shape");
  Tensor Y(X.batch, X.ch, X.len);
  for (int b = 0; b < X.batch; ++b)
    for (int c = 0; c < X.ch; ++c) {
      const double sv = S.at(0, c, 0), bv = B.at(0, c, 0);
      const double* xr = X.row(b, c);
      double* yr = Y.row(b, c);
      for (int t = 0; t < X.len; ++t) yr[t] = sv * xr[t] + bv;
    }
  return g.add(std::move(Y), {x, scale, bias}, [=](Graph& gg, int self) {
    const Tensor& Xv = gg.val(x);
    const Tensor& Sv = gg.val(scale);
    const Tensor& dY = gg.grad(self);
    if (gg.requires_grad(x)) {
      Tensor& dX = gg.grad(x);
      for (int b = 0; b < Xv.batch; ++b)
        for (int c = 0; c < Xv.ch; ++c) {
          const double sv = Sv.at(0, c, 0);
          const double* dyr = dY.row(b, c);
          double* dxr = dX.row(b, c);
          for (int t = 0; t < Xv.len; ++t) dxr[t] += sv * dyr[t];
        }
    }
    if (gg.requires_grad(scale)) {
      Tensor& dS = gg.grad(scale);
      for (int c = 0; c < Xv.ch; ++c) {
        double acc = 0.0;
        for (int b = 0; b < Xv.batch; ++b) {
          const double* xr = Xv.row(b, c);
          const double* dyr = dY.row(b, c);
          for (int t = 0; t < Xv.len; ++t) acc += xr[t] * dyr[t];
        }
        dS.at(0, c, 0) += acc;
      }
    }
    if (gg.requires_grad(bias)) {
      Tensor& dB = gg.grad(bias);
      for (int c = 0; c < Xv.ch; ++c) {
        double acc = 0.0;
        for (int b = 0; b < Xv.batch; ++b) {
          const double* dyr = dY.row(b, c);
          for (int t = 0; t < Xv.len; ++t) acc += dyr[t];
        }
        dB.at(0, c, 0) += acc;
      }
    }
  });
}

int prelu(Graph& g, int x, int slope) {
  const Tensor& X = g.val(x);
  const Tensor& A = g.val(slope);
  check(A.ch == X.ch && A.len == 1 && A.batch == 1, "prelu: slope shape");
  Tensor Y(X.batch, X.ch, X.len);
  for (int b = 0; b < X.batch; ++b)
    for (int c = 0; c < X.ch; ++c) {
      const double a = A.at(0, c, 0);
      const double* xr = X.row(b, c);
      double* yr = Y.row(b, c);
      for (int t = 0; t < X.len; ++t) yr[t] = xr[t] >= 0.0 ? xr[t] : a * xr[t];
    }
  return g.add(std::move(Y), {x, slope}, [=](Graph& gg, int self) {
    const Tensor& Xv = gg.val(x);
    const Tensor& Av = gg.val(slope);
    const Tensor& dY = gg.grad(self);
    if (gg.requires_grad(x)) {
      Tensor& dX = gg.grad(x);
      for (int b = 0; b < Xv.batch; ++b)
        for (int c = 0; c < Xv.ch; ++c) {
          const double a = Av.at(0, c, 0);
          const double* xr = Xv.row(b, c);
          const double* dyr = dY.row(b, c);
          double* dxr = dX.row(b, c);
          for (int t = 0; t < Xv.len; ++t)
            dxr[t] += xr[t] >= 0.0 ? dyr[t] : a * dyr[t];
        }
    }
    if (gg.requires_grad(slope)) {
      Tensor& dA = gg.grad(slope);
      for (int c = 0; c < Xv.ch; ++c) {
        double acc = 0.0;
        for (int b = 0; b < Xv.batch; ++b) {
          const double* xr = Xv.row(b, c);
          const double* dyr = dY.row(b, c);
          for (int t = 0; t < Xv.len; ++t)
            if (xr[t] < 0.0) acc += xr[t] * dyr[t];
        }
        dA.at(0, c, 0) += acc;
      }
    }
  });
}

int tanh_op(Graph& g, int x) {
  const Tensor& X = g.val(x);
  Tensor Y(X.batch, X.ch, X.len);
  for (size_t i = 0; i < X.size(); ++i) Y.v[i] = std::tanh(X.v[i]);
  return g.add(std::move(Y), {x}, [=](Graph& gg, int self) {
    const Tensor& Yv = gg.val(self);
    const Tensor& dY = gg.grad(self);
    Tensor& dX = gg.grad(x);
    for (size_t i = 0; i < Yv.size(); ++i)
      dX.v[i] += dY.v[i] * (1.0 - Yv.v[i] * Yv.v[i]);
  });
}

int add_scaled(Graph& g, int a, double alpha, int b, double beta) {
  const Tensor& A = g.val(a);
  const Tensor& B = g.val(b);
  check(A.same_shape(B), "add_scaled: shape mismatch");
  Tensor Y(A.batch, A.ch, A.len);
  for (size_t i = 0; i < A.size(); ++i) Y.v[i] = alpha * A.v[i] + beta * B.v[i];
  return g.add(std::move(Y), {a, b}, [=](Graph& gg, int self) {
    const Tensor& dY = gg.grad(self);
    if (gg.requires_grad(a)) {
      Tensor& dA = gg.grad(a);
      for (size_t i = 0; i < dY.size(); ++i) dA.v[i] += alpha * dY.v[i];
    }
    if (gg.requires_grad(b)) {
      Tensor& dB = gg.grad(b);
      for (size_t i = 0; i < dY.size(); ++i) dB.v[i] += beta * dY.v[i];
    }
  });
}

int scale_op(Graph& g, int x, double c) {
  const Tensor& X = g.val(x);
  Tensor Y(X.batch, X.ch, X.len);
  for (size_t i = 0; i < X.size(); ++i) Y.v[i] = c * X.v[i];
  return g.add(std::move(Y), {x}, [=](Graph& gg, int self) {
    const Tensor& dY = gg.grad(self);
    Tensor& dX = gg.grad(x);
    for (size_t i = 0; i < dY.size(); ++i) dX.v[i] += c * dY.v[i];
  });
}

int concat_ch(Graph& g, int a, int b) {
  const Tensor& A = g.val(a);
  const Tensor& B = g.val(b);
  check(A.batch == B.batch && A.len == B.len, "concat_ch: shape mismatch");
  Tensor Y(A.batch, A.ch + B.ch, A.len);
  for (int bb = 0; bb < A.batch; ++bb) {
    for (int c = 0; c < A.ch; ++c)
      std::copy_n(A.row(bb, c), A.len, Y.row(bb, c));
    for (int c = 0; c < B.ch; ++c)
      std::copy_n(B.row(bb, c), B.len, Y.row(bb, A.ch + c));
  }
  return g.add(std::move(Y), {a, b}, [=](Graph& gg, int self) {
    const Tensor& dY = gg.grad(self);
    const int ca = gg.val(a).ch, cb = gg.val(b).ch;
    if (gg.requires_grad(a)) {
      Tensor& dA = gg.grad(a);
      for (int bb = 0; bb < dY.batch; ++bb)
        for (int c = 0; c < ca; ++c) {
          const double* src = dY.row(bb, c);
          double* dst = dA.row(bb, c);
          for (int t = 0; t < dY.len; ++t) dst[t] += src[t];
        }
    }
    if (gg.requires_grad(b)) {
      Tensor& dB = gg.grad(b);
      for (int bb = 0; bb < dY.batch; ++bb)
        for (int c = 0; c < cb; ++c) {
          const double* src = dY.row(bb, ca + c);
          double* dst = dB.row(bb, c);
          for (int t = 0; t < dY.len; ++t) dst[t] += src[t];
        }
    }
  });
}

int broadcast_time(Graph& g, int x, int t) {
  const Tensor& X = g.val(x);
  check(X.len == 1, "broadcast_time: input must have length 1");
  Tensor Y(X.batch, X.ch, t);
  for (int b = 0; b < X.batch; ++b)
    for (int c = 0; c < X.ch; ++c) {
      const double v = X.at(b, c, 0);
      double* yr = Y.row(b, c);
      for (int i = 0; i < t; ++i) yr[i] = v;
    }
  return g.add(std::move(Y), {x}, [=](Graph& gg, int self) {
    const Tensor& dY = gg.grad(self);
    Tensor& dX = gg.grad(x);
    for (int b = 0; b < dY.batch; ++b)
      for (int c = 0; c < dY.ch; ++c) {
        const double* dyr = dY.row(b, c);
        double acc = 0.0;
        for (int i = 0; i < dY.len; ++i) acc += dyr[i];
        dX.at(b, c, 0) += acc;
      }
  });
}

int avgpool_time(Graph& g, int x) {
  const Tensor& X = g.val(x);
  check(X.len >= 1, "avgpool_time: empty input");
  Tensor Y(X.batch, X.ch, 1);
  for (int b = 0; b < X.batch; ++b)
    for (int c = 0; c < X.ch; ++c) {
      const double* xr = X.row(b, c);
      double acc = 0.0;
      for (int t = 0; t < X.len; ++t) acc += xr[t];
      Y.at(b, c, 0) = acc / X.len;
    }
  return g.add(std::move(Y), {x}, [=](Graph& gg, int self) {
    const Tensor& dY = gg.grad(self);
    const Tensor& Xv = gg.val(x);
    Tensor& dX = gg.grad(x);
    for (int b = 0; b < Xv.batch; ++b)
      for (int c = 0; c < Xv.ch; ++c) {
        const double gv = dY.at(b, c, 0) / Xv.len;
        double* dxr = dX.row(b, c);
        for (int t = 0; t < Xv.len; ++t) dxr[t] += gv;
      }
  });
}

int slice_ch(Graph& g, int x, int first, int count) {
  const Tensor& X = g.val(x);
  check(first >= 0 && first + count <= X.ch, "slice_ch: range");
  Tensor Y(X.batch, count, X.len);
  for (int b = 0; b < X.batch; ++b)
    for (int c = 0; c < count; ++c)
      std::copy_n(X.row(b, first + c), X.len, Y.row(b, c));
  return g.add(std::move(Y), {x}, [=](Graph& gg, int self) {
    const Tensor& dY = gg.grad(self);
    Tensor& dX = gg.grad(x);
    for (int b = 0; b < dY.batch; ++b)
      for (int c = 0; c < count; ++c) {
        const double* src = dY.row(b, c);
        double* dst = dX.row(b, first + c);
        for (int t = 0; t < dY.len; ++t) dst[t] += src[t];
      }
  });
}

int stack_batch(Graph& g, std::span<const int> ids) {
  check(!ids.empty(), "stack_batch: empty");
  const Tensor& first = g.val(ids[0]);
  check(first.batch == 1, "stack_batch: inputs must have batch 1");
  Tensor Y(int(ids.size()), first.ch, first.len);
  for (size_t i = 0; i < ids.size(); ++i) {
    const Tensor& X = g.val(ids[i]);
    check(X.batch == 1 && X.ch == first.ch && X.len == first.len,
          "stack_batch: shape mismatch");
    for (int c = 0; c < X.ch; ++c)
      std::copy_n(X.row(0, c), X.len, Y.row(int(i), c));
  }
  std::vector<int> parents(ids.begin(), ids.end());
  return g.add(std::move(Y), parents, [parents](Graph& gg, int self) {
    const Tensor& dY = gg.grad(self);
    for (size_t i = 0; i < parents.size(); ++i) {
      if (!gg.requires_grad(parents[i])) continue;
      Tensor& dX = gg.grad(parents[i]);
      for (int c = 0; c < dY.ch; ++c) {
        const double* src = dY.row(int(i), c);
        double* dst = dX.row(0, c);
        for (int t = 0; t < dY.len; ++t) dst[t] += src[t];
      }
    }
  });
}

int skip_adapt(Graph& g, int x, int out_ch, SkipTime mode) {
  const Tensor& X = g.val(x);
  int t_out = X.len;
  if (mode == SkipTime::Sub2) t_out = X.len / 2;
  if (mode == SkipTime::Rep2) t_out = X.len * 2;
  Tensor Y(X.batch, out_ch, t_out);
  const int cmin = std::min(out_ch, X.ch);
  for (int b = 0; b < X.batch; ++b)
    for (int c = 0; c < cmin; ++c) {
      const double* xr = X.row(b, c);
      double* yr = Y.row(b, c);
      switch (mode) {
        case SkipTime::None:
          std::copy_n(xr, t_out, yr);
          break;
        case SkipTime::Sub2:
          for (int t = 0; t < t_out; ++t) yr[t] = xr[2 * t];
          break;
        case SkipTime::Rep2:
          for (int t = 0; t < X.len; ++t) yr[2 * t] = yr[2 * t + 1] = xr[t];
          break;
      }
    }
  return g.add(std::move(Y), {x}, [=](Graph& gg, int self) {
    const Tensor& dY = gg.grad(self);
    const Tensor& Xv = gg.val(x);
    Tensor& dX = gg.grad(x);
    const int cm = std::min(out_ch, Xv.ch);
    for (int b = 0; b < Xv.batch; ++b)
      for (int c = 0; c < cm; ++c) {
        const double* dyr = dY.row(b, c);
        double* dxr = dX.row(b, c);
        switch (mode) {
          case SkipTime::None:
            for (int t = 0; t < dY.len; ++t) dxr[t] += dyr[t];
            break;
          case SkipTime::Sub2:
            for (int t = 0; t < dY.len; ++t) dxr[2 * t] += dyr[t];
            break;
          case SkipTime::Rep2:
            for (int t = 0; t < Xv.len; ++t) dxr[t] += dyr[2 * t] + dyr[2 * t + 1];
            break;
        }
      }
  });
}

int masked_mix(Graph& g, int x, std::shared_ptr<const Tensor> repl,
               std::shared_ptr<const Tensor> mask) {
  const Tensor& X = g.val(x);
  check(repl->same_shape(X), "masked_mix: replacement shape");
  check(mask->batch == X.batch && mask->len == X.len &&
            (mask->ch == 1 || mask->ch == X.ch),
        "masked_mix: mask shape");
  const bool bc = mask->ch == 1;
  Tensor Y(X.batch, X.ch, X.len);
  for (int b = 0; b < X.batch; ++b)
    for (int c = 0; c < X.ch; ++c) {
      const double* xr = X.row(b, c);
      const double* rr = repl->row(b, c);
      const double* mr = mask->row(b, bc ? 0 : c);
      double* yr = Y.row(b, c);
      for (int t = 0; t < X.len; ++t)
        yr[t] = mr[t] != 0.0 ? rr[t] : xr[t];
    }
  return g.add(std::move(Y), {x}, [=, m = std::move(mask)](Graph& gg, int self) {
    const Tensor& dY = gg.grad(self);
    Tensor& dX = gg.grad(x);
    const bool bcast = m->ch == 1;
    for (int b = 0; b < dY.batch; ++b)
      for (int c = 0; c < dY.ch; ++c) {
        const double* dyr = dY.row(b, c);
        const double* mr = m->row(b, bcast ? 0 : c);
        double* dxr = dX.row(b, c);
        for (int t = 0; t < dY.len; ++t)
          if (mr[t] == 0.0) dxr[t] += dyr[t];
      }
  });
}

int prefix_sum_time(Graph& g, int x) {
  const Tensor& X = g.val(x);
  Tensor Y(X.batch, X.ch, X.len);
  for (int b = 0; b < X.batch; ++b)
    for (int c = 0; c < X.ch; ++c) {
      const double* xr = X.row(b, c);
      double* yr = Y.row(b, c);
      double acc = 0.0;
      for (int t = 0; t < X.len; ++t) {
        yr[t] = acc;
        acc += xr[t];
      }
    }
  return g.add(std::move(Y), {x}, [=](Graph& gg, int self) {
    const Tensor& dY = gg.grad(self);
    Tensor& dX = gg.grad(x);
    for (int b = 0; b < dY.batch; ++b)
      for (int c = 0; c < dY.ch; ++c) {
        const double* dyr = dY.row(b, c);
        double* dxr = dX.row(b, c);
        double acc = 0.0;
        for (int t = dY.len - 1; t >= 1; --t) {
          acc += dyr[t];
          dxr[t - 1] += acc;
        }
      }
  });
}

int mean_sq_dev(Graph& g, int x, double target) {
  const Tensor& X = g.val(x);
  check(X.size() > 0, "mean_sq_dev: empty input");
  double acc = 0.0;
  for (size_t i = 0; i < X.size(); ++i) {
    const double d = X.v[i] - target;
    acc += d * d;
  }
  Tensor Y = Tensor::scalar(acc / double(X.size()));
  return g.add(std::move(Y), {x}, [=](Graph& gg, int self) {
    const double gv = gg.grad(self).v[0];
    const Tensor& Xv = gg.val(x);
    Tensor& dX = gg.grad(x);
    const double f = 2.0 * gv / double(Xv.size());
    for (size_t i = 0; i < Xv.size(); ++i) dX.v[i] += f * (Xv.v[i] - target);
  });
}

int inner_product(Graph& g, int x, std::shared_ptr<const Tensor> probe) {
  const Tensor& X = g.val(x);
  check(probe->same_shape(X), "inner_product: probe shape");
  double acc = 0.0;
  for (size_t i = 0; i < X.size(); ++i) acc += probe->v[i] * X.v[i];
  return g.add(Tensor::scalar(acc), {x}, [x, probe](Graph& gg, int self) {
    const double gv = gg.grad(self).v[0];
    Tensor& dX = gg.grad(x);
    for (size_t i = 0; i < dX.size(); ++i) dX.v[i] += gv * probe->v[i];
  });
}

int weighted_sum(Graph& g, std::span<const int> ids, std::span<const double> coeffs) {
  check(ids.size() == coeffs.size() && !ids.empty(), "weighted_sum: arity");
  double acc = 0.0;
  for (size_t i = 0; i < ids.size(); ++i) {
    check(g.val(ids[i]).is_scalar(), "weighted_sum: non-scalar term");
    acc += coeffs[i] * g.val(ids[i]).item();
  }
  std::vector<int> parents(ids.begin(), ids.end());
  std::vector<double> cs(coeffs.begin(), coeffs.end());
  return g.add(Tensor::scalar(acc), parents, [parents, cs](Graph& gg, int self) {
    const double gv = gg.grad(self).v[0];
    for (size_t i = 0; i < parents.size(); ++i)
      if (gg.requires_grad(parents[i])) gg.grad(parents[i]).v[0] += cs[i] * gv;
  });
}

int rcfk_positions(Graph& g, int raw, const Skeleton& skeleton,
                   bool apply_root_rotation) {
  const Tensor& X = g.val(raw);
  check(X.ch == skeleton.raw_dim(), "rcfk_positions: channel count");
  const int out_ch = skeleton.local_dim();
  Tensor Y(X.batch, out_ch, X.len);
  auto caches = std::make_shared<std::vector<RcfkCache>>(size_t(X.batch) * X.len);
  auto sk = std::make_shared<const Skeleton>(skeleton);
  std::string error;
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < X.batch; ++b)
    for (int t = 0; t < X.len; ++t) {
      try {
        std::vector<double> frame(X.ch);
        for (int c = 0; c < X.ch; ++c) frame[c] = X.at(b, c, t);
        std::vector<double> out(out_ch);
        rcfk_frame_forward(frame, *sk, apply_root_rotation,
                           &(*caches)[size_t(b) * X.len + t], out);
        for (int c = 0; c < out_ch; ++c) Y.at(b, c, t) = out[c];
      } catch (const std::exception& e) {
#pragma omp critical
        if (error.empty()) error = e.what();
      }
    }
  if (!error.empty()) throw std::invalid_argument("rcfk_positions: " + error);
  return g.add(std::move(Y), {raw}, [=](Graph& gg, int self) {
    const Tensor& dY = gg.grad(self);
    Tensor& dX = gg.grad(raw);
    const int ch_in = gg.val(raw).ch;
#pragma omp parallel for collapse(2) schedule(static)
    for (int b = 0; b < dY.batch; ++b)
      for (int t = 0; t < dY.len; ++t) {
        std::vector<double> gl(out_ch);
        for (int c = 0; c < out_ch; ++c) gl[c] = dY.at(b, c, t);
        std::vector<double> gr(ch_in, 0.0);
        rcfk_frame_backward((*caches)[size_t(b) * dY.len + t], *sk,
                            apply_root_rotation, gl, gr);
        for (int c = 0; c < ch_in; ++c) dX.at(b, c, t) += gr[c];
      }
  });
}

}  // namespace tween::nn
