#include "tween/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace tween::nn {

const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::ResConv: return "res";
    case LayerKind::ResConvT: return "res_t";
    case LayerKind::Conv: return "conv";
    case LayerKind::Affine: return "affine";
    case LayerKind::PRelu: return "prelu";
    case LayerKind::AvgPool: return "avgpool";
  }
  return "?";
}

int NetworkSpec::output_ch() const {
  for (auto it = layers.rbegin(); it != layers.rend(); ++it)
    if (it->out_ch > 0) return it->out_ch;
  return 0;
}

std::string NetworkSpec::manifest() const {
  std::ostringstream out;
  out.precision(17);
  for (const auto& l : layers)
    out << to_string(l.kind) << ' ' << l.in_ch << ' ' << l.out_ch << ' '
        << l.kernel << ' ' << l.stride << ' ' << l.pad << ' ' << l.ratio << '\n';
  return out.str();
}

uint64_t NetworkSpec::hash() const {
  const std::string m = manifest();
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : m) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

void NetworkSpec::validate() const {
  if (layers.empty()) throw std::runtime_error(name + ": empty spec");
  int prev = layers.front().in_ch;
  for (const auto& l : layers) {
    if (l.ratio < 0.0 || l.ratio > 1.0) throw std::runtime_error(name + ": sigma out of [0,1]");
    if (l.kernel < 1 || (l.stride != 1 && l.stride != 2))
      throw std::runtime_error(name + ": bad kernel/stride");
    if (l.in_ch != prev) throw std::runtime_error(name + ": channel chain broken");
    prev = l.out_ch;
  }
}

namespace {

int scaled(int ch, double s) { return std::max(4, int(std::llround(ch * s))); }

LayerSpec res(int in, int out, int k, int st, int p, double sigma) {
  return {LayerKind::ResConv, in, out, k, st, p, sigma};
}
LayerSpec res_t(int in, int out, int k, int st, int p, double sigma) {
  return {LayerKind::ResConvT, in, out, k, st, p, sigma};
}
LayerSpec conv(int in, int out, int k, int st, int p) {
  return {LayerKind::Conv, in, out, k, st, p, 1.0};
}

}  // namespace

int scaled_latent_dim(double s) { return scaled(1024, s); }

NetworkSpec make_encoder_spec(int m, double s) {
  const int in = 6 * m;  // values 3M + weight 3M
  NetworkSpec spec;
  spec.name = "encoder";
  spec.layers = {
      res(in, scaled(384, s), 4, 2, 1, 1.0 / 1),
      res(scaled(384, s), scaled(384, s), 4, 2, 1, 1.0 / 2),
      res(scaled(384, s), scaled(512, s), 4, 2, 1, 1.0 / 3),
      res(scaled(512, s), scaled(512, s), 4, 2, 1, 1.0 / 4),
      res(scaled(512, s), scaled(768, s), 4, 2, 1, 1.0 / 5),
      res(scaled(768, s), scaled(1024, s), 4, 2, 1, 1.0 / 6),
  };
  spec.validate();
  return spec;
}

NetworkSpec make_decoder_spec(int m, double s) {
  const int out = 6 + 3 * (m - 1);
  const int lat = scaled(1024, s);
  NetworkSpec spec;
  spec.name = "decoder";
  spec.layers = {
      res(2 * lat, lat, 1, 1, 0, 1.0 / 1),
      res(lat, lat, 3, 1, 1, 1.0 / 1.4),
      res_t(lat, lat, 4, 2, 1, 1.0 / 1.6),
      res(lat, scaled(768, s), 3, 1, 1, 1.0 / 2.2),
      res_t(scaled(768, s), scaled(768, s), 4, 2, 1, 1.0 / 2.8),
      res(scaled(768, s), scaled(768, s), 3, 1, 1, 1.0 / 3.6),
      res_t(scaled(768, s), scaled(768, s), 4, 2, 1, 1.0 / 4.6),
      res(scaled(768, s), scaled(512, s), 3, 1, 1, 1.0 / 5.8),
      res_t(scaled(512, s), scaled(512, s), 4, 2, 1, 1.0 / 7.2),
      res(scaled(512, s), scaled(512, s), 3, 1, 1, 1.0 / 8.8),
      res_t(scaled(512, s), scaled(512, s), 4, 2, 1, 1.0 / 10.6),
      res(scaled(512, s), scaled(512, s), 3, 1, 1, 1.0 / 12.6),
      res_t(scaled(512, s), scaled(512, s), 4, 2, 1, 1.0 / 14.8),
      res(scaled(512, s), out, 3, 1, 1, 1.0 / 17.2),
  };
  spec.validate();
  return spec;
}

NetworkSpec make_dna_encoder_spec(int m, double s) {
  const int in = 3 * (m - 1);
  const int lat = scaled(1024, s);
  NetworkSpec spec;
  spec.name = "dna_encoder";
  spec.layers = {
      conv(in, lat, 1, 1, 0),
      {LayerKind::Affine, lat, lat, 1, 1, 0, 1.0},
      {LayerKind::PRelu, lat, lat, 1, 1, 0, 1.0},
      conv(lat, lat, 1, 1, 0),
      {LayerKind::Affine, lat, lat, 1, 1, 0, 1.0},
      {LayerKind::AvgPool, lat, lat, 1, 1, 0, 1.0},
  };
  spec.validate();
  return spec;
}

NetworkSpec make_discriminator_spec(int m, double s) {
  const int in = 3 * (m - 1);
  NetworkSpec spec;
  spec.name = "discriminator";
  spec.layers = {
      res(in, scaled(512, s), 4, 2, 1, 1.0 / 1),
      res(scaled(512, s), scaled(512, s), 4, 2, 1, 1.0 / 2),
      res(scaled(512, s), scaled(512, s), 4, 2, 1, 1.0 / 3),
      res(scaled(512, s), scaled(512, s), 4, 2, 1, 1.0 / 4),
      res(scaled(512, s), scaled(1024, s), 4, 2, 1, 1.0 / 5),
      res(scaled(1024, s), scaled(1024, s), 4, 2, 1, 1.0 / 6),
      conv(scaled(1024, s), 1, 1, 1, 0),
  };
  spec.validate();
  return spec;
}

NetworkSpec make_path_predictor_spec(int m, double s) {
  const int in = 3 * (m - 1);
  NetworkSpec spec;
  spec.name = "path_predictor";
  spec.layers = {
      res(in, scaled(128, s), 12, 2, 5, 1.0 / 1),
      res(scaled(128, s), scaled(128, s), 12, 2, 5, 1.0 / 2),
      res(scaled(128, s), scaled(256, s), 12, 2, 5, 1.0 / 3),
      res(scaled(256, s), scaled(256, s), 12, 2, 5, 1.0 / 4),
      res_t(scaled(256, s), scaled(256, s), 8, 2, 3, 1.0 / 5),
      res_t(scaled(256, s), scaled(256, s), 8, 2, 3, 1.0 / 6),
      res_t(scaled(256, s), scaled(128, s), 8, 2, 3, 1.0 / 7),
      res_t(scaled(128, s), scaled(128, s), 8, 2, 3, 1.0 / 8),
      res(scaled(128, s), 3, 5, 1, 2, 1.0 / 9),
  };
  spec.validate();
  return spec;
}

namespace {

bool has_kernel(LayerKind k) {
  return k == LayerKind::ResConv || k == LayerKind::ResConvT || k == LayerKind::Conv;
}
bool has_affine(LayerKind k) {
  return k == LayerKind::ResConv || k == LayerKind::ResConvT || k == LayerKind::Affine;
}
bool has_slope(LayerKind k) {
  return k == LayerKind::ResConv || k == LayerKind::ResConvT || k == LayerKind::PRelu;
}

}  // namespace

void NetWeights::init(Rng& rng) {
  layers.assign(spec.layers.size(), {});
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    auto& w = layers[i];
    if (has_kernel(l.kind)) {
      w.kernel = Tensor(l.out_ch, l.in_ch, l.kernel);
      const double bound = std::sqrt(3.0 / (double(l.in_ch) * l.kernel));
      for (auto& v : w.kernel.v) v = rng.uniform(-bound, bound);
    }
    if (has_affine(l.kind)) {
      w.scale.assign(l.out_ch, 1.0);
      w.bias.assign(l.out_ch, 0.0);
    }
    if (has_slope(l.kind)) w.slope.assign(l.out_ch, 0.25);
  }
}

size_t NetWeights::param_count() const {
  size_t n = extra.size();
  for (const auto& w : layers)
    n += w.kernel.size() + w.scale.size() + w.bias.size() + w.slope.size();
  return n;
}

void NetWeights::flatten(std::vector<float>& out) const {
  out.clear();
  out.reserve(param_count());
  for (const auto& w : layers) {
    for (double v : w.kernel.v) out.push_back(float(v));
    for (double v : w.scale) out.push_back(float(v));
    for (double v : w.bias) out.push_back(float(v));
    for (double v : w.slope) out.push_back(float(v));
  }
  for (double v : extra) out.push_back(float(v));
}

void NetWeights::unflatten(const std::vector<float>& in) {
  if (in.size() != param_count())
    throw std::runtime_error(spec.name + ": checkpoint size mismatch");
  size_t i = 0;
  for (auto& w : layers) {
    for (double& v : w.kernel.v) v = in[i++];
    for (double& v : w.scale) v = in[i++];
    for (double& v : w.bias) v = in[i++];
    for (double& v : w.slope) v = in[i++];
  }
  for (double& v : extra) v = in[i++];
}

void NetWeights::quantize_f32() {
  auto q = [](double& v) { v = double(float(v)); };
  for (auto& w : layers) {
    for (double& v : w.kernel.v) q(v);
    for (double& v : w.scale) q(v);
    for (double& v : w.bias) q(v);
    for (double& v : w.slope) q(v);
  }
  for (double& v : extra) q(v);
}

std::vector<LayerNodes> push_weights(Graph& g, const NetWeights& w, bool rg) {
  std::vector<LayerNodes> nodes(w.layers.size());
  for (size_t i = 0; i < w.layers.size(); ++i) {
    const auto& lw = w.layers[i];
    auto& n = nodes[i];
    if (lw.kernel.size()) n.kernel = g.leaf(lw.kernel, rg);
    if (!lw.scale.empty()) {
      Tensor s(1, int(lw.scale.size()), 1), b(1, int(lw.bias.size()), 1);
      s.v.assign(lw.scale.begin(), lw.scale.end());
      b.v.assign(lw.bias.begin(), lw.bias.end());
      n.scale = g.leaf(std::move(s), rg);
      n.bias = g.leaf(std::move(b), rg);
    }
    if (!lw.slope.empty()) {
      Tensor a(1, int(lw.slope.size()), 1);
      a.v.assign(lw.slope.begin(), lw.slope.end());
      n.slope = g.leaf(std::move(a), rg);
    }
  }
  return nodes;
}

int residual_block_forward(Graph& g, int x, const LayerSpec& layer,
                           const LayerNodes& nodes, int* conv_out) {
  const bool transpose = layer.kind == LayerKind::ResConvT;
  const int c = transpose ? tconv1d(g, x, nodes.kernel, layer.stride, layer.pad)
                          : conv1d(g, x, nodes.kernel, layer.stride, layer.pad);
  if (conv_out) *conv_out = c;
  const int a = affine(g, c, nodes.scale, nodes.bias);
  const int r = prelu(g, a, nodes.slope);
  SkipTime mode = SkipTime::None;
  if (layer.stride == 2) mode = transpose ? SkipTime::Rep2 : SkipTime::Sub2;
  const int skip = skip_adapt(g, x, layer.out_ch, mode);
  if (!g.val(skip).same_shape(g.val(r)))
    throw std::runtime_error("residual block: skip/conv shape mismatch");
  const double sr = std::sqrt(layer.ratio);
  const double sk = std::sqrt(1.0 - layer.ratio);
  return add_scaled(g, r, sr, skip, sk);
}

int network_forward(Graph& g, const NetworkSpec& spec,
                    const std::vector<LayerNodes>& nodes, int x,
                    const ForwardHooks& hooks) {
  int cur = x;
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    switch (l.kind) {
      case LayerKind::ResConv:
      case LayerKind::ResConvT: {
        int conv_id = -1;
        cur = residual_block_forward(g, cur, l, nodes[i], &conv_id);
        if (hooks.conv_outputs) hooks.conv_outputs->push_back(conv_id);
        break;
      }
      case LayerKind::Conv:
        cur = conv1d(g, cur, nodes[i].kernel, l.stride, l.pad);
        break;
      case LayerKind::Affine:
        cur = affine(g, cur, nodes[i].scale, nodes[i].bias);
        break;
      case LayerKind::PRelu:
        cur = prelu(g, cur, nodes[i].slope);
        break;
      case LayerKind::AvgPool:
        cur = avgpool_time(g, cur);
        break;
    }
    if (hooks.stop_after_layer == int(i)) return cur;
  }
  return cur;
}

int dna_encode(Graph& g, const NetWeights& w, const std::vector<LayerNodes>& nodes,
               int frames_or_neg, int latent_dim, int empty_const_node) {
  if (frames_or_neg < 0) {
    if (g.val(empty_const_node).ch != latent_dim)
      throw std::invalid_argument("dna_encode: empty constant has wrong width");
    return empty_const_node;
  }
  return network_forward(g, w.spec, nodes, frames_or_neg);
}

// --- receptive fields --------------------------------------------------------

namespace {

int64_t floordiv(int64_t a, int64_t b) {
  return a >= 0 ? a / b : -((-a + b - 1) / b);
}
int64_t ceildiv(int64_t a, int64_t b) {
  return a >= 0 ? (a + b - 1) / b : -((-a) / b);
}

struct Interval {
  int64_t lo, hi;
};

Interval back_through(const LayerSpec& l, Interval out, int probe_len) {
  Interval in = out;
  switch (l.kind) {
    case LayerKind::ResConv:
    case LayerKind::Conv: {
      in.lo = out.lo * l.stride - l.pad;
      in.hi = out.hi * l.stride - l.pad + l.kernel - 1;
      if (l.kind == LayerKind::ResConv && l.stride == 2) {
        in.lo = std::min(in.lo, out.lo * 2);
        in.hi = std::max(in.hi, out.hi * 2);
      }
      break;
    }
    case LayerKind::ResConvT: {
      in.lo = ceildiv(out.lo + l.pad - l.kernel + 1, l.stride);
      in.hi = floordiv(out.hi + l.pad, l.stride);
      // skip path repeats each input frame twice
      in.lo = std::min(in.lo, floordiv(out.lo, 2));
      in.hi = std::max(in.hi, floordiv(out.hi, 2));
      break;
    }
    case LayerKind::Affine:
    case LayerKind::PRelu:
      break;
    case LayerKind::AvgPool:
      in.lo = 0;
      in.hi = probe_len - 1;
      break;
  }
  return in;
}

}  // namespace

int receptive_field(const NetworkSpec& spec, int first, int last, int probe_len) {
  if (last < 0) last = int(spec.layers.size());
  Interval iv{0, 0};
  for (int i = last - 1; i >= first; --i)
    iv = back_through(spec.layers[i], iv, probe_len);
  return int(iv.hi - iv.lo + 1);
}

NetworkSpec bottleneck_stack(const NetworkSpec& encoder, const NetworkSpec& decoder) {
  NetworkSpec spec;
  spec.name = "bottleneck";
  spec.layers = encoder.layers;
  // Decoder res_1 consumes (z, w) concatenated; for the receptive-field stack
  // only the z half matters, so rewire its input width.
  LayerSpec d0 = decoder.layers[0];
  d0.in_ch = encoder.layers.back().out_ch;
  spec.layers.push_back(d0);
  spec.layers.push_back(decoder.layers[1]);
  spec.validate();
  return spec;
}

int impulse_probe(const NetworkSpec& spec, int probe_len, uint64_t seed,
                  int first, int last) {
  if (last < 0) last = int(spec.layers.size());
  NetworkSpec sub;
  sub.name = spec.name + "_probe";
  sub.layers.assign(spec.layers.begin() + first, spec.layers.begin() + last);

  NetWeights w;
  w.spec = sub;
  Rng rng(seed);
  w.init(rng);
  // Perturb affine biases/kernels away from anything structured.
  for (auto& lw : w.layers)
    for (auto& b : lw.bias) b = rng.uniform(-0.1, 0.1);

  Tensor x0(1, sub.layers.front().in_ch, probe_len);
  for (auto& v : x0.v) v = rng.uniform(-1.0, 1.0);

  auto run = [&](const Tensor& x) {
    Graph g;
    auto nodes = push_weights(g, w, false);
    const int in = g.leaf(x, false);
    const int out = network_forward(g, sub, nodes, in);
    return g.val(out);
  };
  const Tensor y0 = run(x0);
  const int mid = y0.len / 2;

  auto influences = [&](int t) {
    Tensor x1 = x0;
    for (int c = 0; c < x1.ch; ++c) x1.at(0, c, t) += 0.5;
    const Tensor y1 = run(x1);
    for (int c = 0; c < y1.ch; ++c)
      if (std::abs(y1.at(0, c, mid) - y0.at(0, c, mid)) > 1e-11) return true;
    return false;
  };

  // Analytic candidate window, then empirical scan with a safety margin.
  Interval iv{mid, mid};
  for (int i = int(sub.layers.size()) - 1; i >= 0; --i)
    iv = back_through(sub.layers[i], iv, probe_len);
  const int margin = 8;
  const int lo_scan = std::max<int64_t>(0, iv.lo - margin);
  const int hi_scan = std::min<int64_t>(probe_len - 1, iv.hi + margin);
  int lo = -1, hi = -1;
  for (int t = lo_scan; t <= hi_scan; ++t)
    if (influences(t)) {
      if (lo < 0) lo = t;
      hi = t;
    }
  if (lo < 0) throw std::runtime_error("impulse_probe: no influence found");
  return hi - lo + 1;
}

// --- gradient checking -------------------------------------------------------

GradCheckResult grad_check(
    const std::function<double(std::span<const double>, std::span<double>)>& fn,
    std::vector<double> params, double eps) {
  std::vector<double> analytic(params.size(), 0.0);
  fn(params, analytic);
  GradCheckResult res;
  for (size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + eps;
    const double fp = fn(params, {});
    params[i] = keep - eps;
    const double fm = fn(params, {});
    params[i] = keep;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-3});
    const double rel = std::abs(analytic[i] - numeric) / denom;
    if (rel > res.max_rel_err) {
      res.max_rel_err = rel;
      res.worst_index = i;
      res.analytic = analytic[i];
      res.numeric = numeric;
    }
  }
  return res;
}

// --- checkpoints --------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'T', 'W', 'C', 'K'};
constexpr uint32_t kVersion = 1;

template <class T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
void read_pod(std::istream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated");
}
void write_str(std::ostream& out, const std::string& s) {
  write_pod(out, uint32_t(s.size()));
  out.write(s.data(), std::streamsize(s.size()));
}
std::string read_str(std::istream& in) {
  uint32_t n = 0;
  read_pod(in, n);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw std::runtime_error("checkpoint: truncated string");
  return s;
}

}  // namespace

void write_checkpoint(std::ostream& out, const std::vector<WeightSection>& sections) {
  out.write(kMagic, 4);
  write_pod(out, kVersion);
  write_pod(out, uint32_t(sections.size()));
  for (const auto& s : sections) {
    write_str(out, s.name);
    write_pod(out, s.spec_hash);
    write_str(out, s.manifest);
    write_pod(out, uint64_t(s.data.size()));
    out.write(reinterpret_cast<const char*>(s.data.data()),
              std::streamsize(s.data.size() * sizeof(float)));
  }
}

std::vector<WeightSection> read_checkpoint(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic");
  uint32_t version = 0;
  read_pod(in, version);
  if (version != kVersion) throw std::runtime_error("checkpoint: unsupported version");
  uint32_t count = 0;
  read_pod(in, count);
  std::vector<WeightSection> sections(count);
  for (auto& s : sections) {
    s.name = read_str(in);
    read_pod(in, s.spec_hash);
    s.manifest = read_str(in);
    uint64_t n = 0;
    read_pod(in, n);
    s.data.resize(n);
    in.read(reinterpret_cast<char*>(s.data.data()), std::streamsize(n * sizeof(float)));
    if (!in) throw std::runtime_error("checkpoint: truncated payload");
  }
  return sections;
}

WeightSection section_from_net(const NetWeights& w, const std::string& name) {
  WeightSection s;
  s.name = name;
  s.manifest = w.spec.manifest();
  s.spec_hash = w.spec.hash();
  w.flatten(s.data);
  return s;
}

void net_from_section(const WeightSection& s, NetWeights& w) {
  if (s.spec_hash != w.spec.hash())
    throw std::runtime_error("checkpoint: spec hash mismatch for section " + s.name);
  w.unflatten(s.data);
}

void save_net(std::ostream& out, const NetWeights& w, const std::string& name) {
  write_checkpoint(out, {section_from_net(w, name)});
}

void load_net(std::istream& in, NetWeights& w, const std::string& name) {
  for (auto& s : read_checkpoint(in))
    if (s.name == name) {
      net_from_section(s, w);
      return;
    }
  throw std::runtime_error("checkpoint: missing section " + name);
}

}  // namespace tween::nn
