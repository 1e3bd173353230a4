#include <doctest.h>

#include <cmath>
#include <sstream>

#include "support.hpp"
#include "tween/network.hpp"
#include "tween/trainer.hpp"

using namespace tween;
using namespace tween::nn;

namespace {

Tensor random_tensor(int b, int c, int t, Rng& rng, double span = 1.0) {
  Tensor x(b, c, t);
  for (auto& v : x.v) v = rng.uniform(-span, span);
  return x;
}

NetWeights random_net(const NetworkSpec& spec, uint64_t seed, bool random_bias) {
  NetWeights w;
  w.spec = spec;
  Rng rng(seed);
  w.init(rng);
  if (random_bias)
    for (auto& lw : w.layers)
      for (auto& b : lw.bias) b = rng.uniform(-0.2, 0.2);
  return w;
}

// Straight-line reimplementation of one residual conv block, written from
// the definition: y = sqrt(s)*PReLU(affine(conv(x))) + sqrt(1-s)*skip(x).
Tensor residual_oracle(const Tensor& x, const LayerSpec& l, const LayerWeights& w) {
  const int t_out = l.kind == LayerKind::ResConvT
                        ? (x.len - 1) * l.stride - 2 * l.pad + l.kernel
                        : (x.len + 2 * l.pad - l.kernel) / l.stride + 1;
  Tensor conv(x.batch, l.out_ch, t_out);
  for (int b = 0; b < x.batch; ++b)
    for (int o = 0; o < l.out_ch; ++o)
      for (int to = 0; to < t_out; ++to) {
        double acc = 0.0;
        for (int ic = 0; ic < l.in_ch; ++ic)
          for (int k = 0; k < l.kernel; ++k) {
            if (l.kind == LayerKind::ResConvT) {
              const int num = to - k + l.pad;
              if (num % l.stride != 0 || num < 0) continue;
              const int t = num / l.stride;
              if (t >= x.len) continue;
              acc += w.kernel.at(o, ic, k) * x.at(b, ic, t);
            } else {
              const int t = to * l.stride + k - l.pad;
              if (t < 0 || t >= x.len) continue;
              acc += w.kernel.at(o, ic, k) * x.at(b, ic, t);
            }
          }
        conv.at(b, o, to) = acc;
      }
  Tensor y(x.batch, l.out_ch, t_out);
  for (int b = 0; b < x.batch; ++b)
    for (int o = 0; o < l.out_ch; ++o)
      for (int to = 0; to < t_out; ++to) {
        const double a = w.scale[size_t(o)] * conv.at(b, o, to) + w.bias[size_t(o)];
        const double r = a >= 0 ? a : w.slope[size_t(o)] * a;
        double skip = 0.0;
        if (o < x.ch) {
          int ts = to;
          if (l.stride == 2) ts = l.kind == LayerKind::ResConvT ? to / 2 : 2 * to;
          skip = x.at(b, o, ts);
        }
        y.at(b, o, to) = std::sqrt(l.ratio) * r + std::sqrt(1.0 - l.ratio) * skip;
      }
  return y;
}

}  // namespace

TEST_CASE("residual block: sigma=1 is the pure conv branch") {
  Rng rng(1);
  LayerSpec l{LayerKind::ResConv, 3, 5, 4, 2, 1, 1.0};
  NetWeights net = random_net({"b", {l}}, 2, true);
  const Tensor x = random_tensor(2, 3, 16, rng);

  Graph g;
  auto nodes = push_weights(g, net, false);
  int conv_id = -1;
  const int y = residual_block_forward(g, g.leaf(x, false), l, nodes[0], &conv_id);
  const Tensor& cv = g.val(conv_id);
  const Tensor& yv = g.val(y);
  for (int b = 0; b < yv.batch; ++b)
    for (int o = 0; o < yv.ch; ++o)
      for (int t = 0; t < yv.len; ++t) {
        const double a =
            net.layers[0].scale[size_t(o)] * cv.at(b, o, t) + net.layers[0].bias[size_t(o)];
        const double r = a >= 0 ? a : net.layers[0].slope[size_t(o)] * a;
        CHECK(yv.at(b, o, t) == doctest::Approx(r).epsilon(1e-14));
      }
}

TEST_CASE("residual block: sigma=0 with matching shape is the identity") {
  Rng rng(2);
  LayerSpec l{LayerKind::ResConv, 4, 4, 3, 1, 1, 0.0};
  NetWeights net = random_net({"b", {l}}, 3, true);
  const Tensor x = random_tensor(1, 4, 12, rng);
  Graph g;
  auto nodes = push_weights(g, net, false);
  const int y = residual_block_forward(g, g.leaf(x, false), l, nodes[0]);
  const Tensor& yv = g.val(y);
  for (size_t i = 0; i < x.size(); ++i) CHECK(yv.v[i] == x.v[i]);
}

TEST_CASE("residual block matches the straight-line oracle") {
  Rng rng(4);
  const LayerSpec cases[] = {
      {LayerKind::ResConv, 3, 6, 4, 2, 1, 0.5},
      {LayerKind::ResConv, 5, 3, 3, 1, 1, 0.37},
      {LayerKind::ResConvT, 4, 7, 4, 2, 1, 0.5},
      {LayerKind::ResConv, 4, 4, 1, 1, 0, 0.71},
      {LayerKind::ResConvT, 6, 3, 8, 2, 3, 0.21},
  };
  for (const auto& l : cases) {
    NetWeights net = random_net({"b", {l}}, 5, true);
    const Tensor x = random_tensor(2, l.in_ch, 16, rng);
    Graph g;
    auto nodes = push_weights(g, net, false);
    const int y = residual_block_forward(g, g.leaf(x, false), l, nodes[0]);
    const Tensor oracle = residual_oracle(x, l, net.layers[0]);
    REQUIRE(g.val(y).same_shape(oracle));
    for (size_t i = 0; i < oracle.size(); ++i)
      CHECK(g.val(y).v[i] == doctest::Approx(oracle.v[i]).epsilon(1e-12));
  }
}

TEST_CASE("network shapes follow the architecture table") {
  const int m = 16;
  const double ws = 0.05;
  const auto enc = make_encoder_spec(m, ws);
  const auto dec = make_decoder_spec(m, ws);
  const auto disc = make_discriminator_spec(m, ws);
  const auto dna = make_dna_encoder_spec(m, ws);
  const auto path = make_path_predictor_spec(m, ws);
  Rng rng(8);

  {
    NetWeights w = random_net(enc, 7, false);
    Graph g;
    auto nodes = push_weights(g, w, false);
    const Tensor x = random_tensor(1, 6 * m, 128, rng);
    const int z = network_forward(g, enc, nodes, g.leaf(x, false));
    CHECK(g.val(z).len == 2);  // 128 / 64 latents
    CHECK(g.val(z).ch == scaled_latent_dim(ws));
  }
  {
    NetWeights w = random_net(dec, 9, false);
    Graph g;
    auto nodes = push_weights(g, w, false);
    const Tensor zw = random_tensor(1, 2 * scaled_latent_dim(ws), 2, rng);
    const int out = network_forward(g, dec, nodes, g.leaf(zw, false));
    CHECK(g.val(out).len == 128);
    CHECK(g.val(out).ch == 6 + 3 * (m - 1));
  }
  {
    NetWeights w = random_net(disc, 10, false);
    Graph g;
    auto nodes = push_weights(g, w, false);
    const Tensor s = random_tensor(1, 3 * (m - 1), 2048, rng);
    const int yd = network_forward(g, disc, nodes, g.leaf(s, false));
    CHECK(g.val(yd).len == 32);  // N/64 scalars
    CHECK(g.val(yd).ch == 1);
  }
  {
    NetWeights w = random_net(path, 11, false);
    Graph g;
    auto nodes = push_weights(g, w, false);
    const Tensor lm = random_tensor(1, 3 * (m - 1), 128, rng);
    const int yp = network_forward(g, path, nodes, g.leaf(lm, false));
    CHECK(g.val(yp).len == 128);  // fully convolutional
    CHECK(g.val(yp).ch == 3);
  }
  CHECK(dna.layers.front().in_ch == 3 * (m - 1));
}

TEST_CASE("zero input stays zero through bias-free stacks") {
  const int m = 16;
  const auto enc = make_encoder_spec(m, 0.05);
  NetWeights w = random_net(enc, 12, false);  // biases stay zero from init
  Graph g;
  auto nodes = push_weights(g, w, false);
  Tensor x(1, 6 * m, 128);
  const int y = network_forward(g, enc, nodes, g.leaf(std::move(x), false));
  for (double v : g.val(y).v) CHECK(v == 0.0);
}

TEST_CASE("decoder residual ratios are non-increasing") {
  const auto dec = make_decoder_spec(57, 1.0);
  for (size_t i = 1; i < dec.layers.size(); ++i)
    CHECK(dec.layers[i].ratio <= dec.layers[i - 1].ratio + 1e-12);
}

TEST_CASE("dna encoder is permutation invariant and handles edge sizes") {
  const int m = 16;
  const auto spec = make_dna_encoder_spec(m, 0.05);
  NetWeights w = random_net(spec, 13, true);
  const int latent = scaled_latent_dim(0.05);
  Rng rng(14);

  auto encode = [&](const Tensor& frames) {
    Graph g;
    auto nodes = push_weights(g, w, false);
    const int en = g.leaf(Tensor(1, latent, 1), false);
    const int fr = g.leaf(frames, false);
    const int out = dna_encode(g, w, nodes, fr, latent, en);
    return g.val(out);
  };

  const Tensor frames = random_tensor(1, 3 * (m - 1), 5, rng);
  Tensor permuted(1, frames.ch, 5);
  const int perm[5] = {3, 0, 4, 1, 2};
  for (int c = 0; c < frames.ch; ++c)
    for (int t = 0; t < 5; ++t) permuted.at(0, c, t) = frames.at(0, c, perm[t]);
  const Tensor w1 = encode(frames);
  const Tensor w2 = encode(permuted);
  for (size_t i = 0; i < w1.size(); ++i)
    CHECK(w1.v[i] == doctest::Approx(w2.v[i]).epsilon(1e-12));

  Tensor one(1, frames.ch, 1);
  for (int c = 0; c < frames.ch; ++c) one.at(0, c, 0) = frames.at(0, c, 0);
  const Tensor w_single = encode(one);
  CHECK(w_single.len == 1);

  // Duplicated set {f, f} equals {f} under mean pooling.
  Tensor dup(1, frames.ch, 2);
  for (int c = 0; c < frames.ch; ++c)
    dup.at(0, c, 0) = dup.at(0, c, 1) = one.at(0, c, 0);
  const Tensor w_dup = encode(dup);
  for (size_t i = 0; i < w_single.size(); ++i)
    CHECK(w_dup.v[i] == doctest::Approx(w_single.v[i]).epsilon(1e-13));

  // Empty set returns the learned constant.
  Graph g;
  auto nodes = push_weights(g, w, false);
  Tensor empty(1, latent, 1);
  for (int i = 0; i < latent; ++i) empty.at(0, i, 0) = 0.5 + i;
  const int en = g.leaf(empty, false);
  const int out = dna_encode(g, w, nodes, -1, latent, en);
  for (int i = 0; i < latent; ++i) CHECK(g.val(out).at(0, i, 0) == 0.5 + i);
}

TEST_CASE("receptive fields: analytic values and impulse agreement") {
  const int m = 16;
  const double ws = 0.02;
  const auto enc = make_encoder_spec(m, ws);
  const auto dec = make_decoder_spec(m, ws);
  const auto disc = make_discriminator_spec(m, ws);
  const auto dna = make_dna_encoder_spec(m, ws);
  const auto path = make_path_predictor_spec(m, ws);

  CHECK(receptive_field(disc) == 190);
  const auto bottleneck = bottleneck_stack(enc, dec);
  CHECK(receptive_field(bottleneck) == 318);

  CHECK(impulse_probe(disc, 1024, 101) == 190);
  CHECK(impulse_probe(bottleneck, 1024, 102) == 318);
  CHECK(impulse_probe(enc, 1024, 103) == receptive_field(enc));
  CHECK(impulse_probe(dec, 64, 104) == receptive_field(dec));
  CHECK(impulse_probe(path, 512, 105) == receptive_field(path));
  CHECK(impulse_probe(dna, 16, 106) == receptive_field(dna, 0, -1, 16));
}

TEST_CASE("grad_check sanity on a quadratic") {
  auto fn = [](std::span<const double> p, std::span<double> g) -> double {
    double f = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
      f += (2.0 + double(i)) * p[i] * p[i];
      if (!g.empty()) g[i] = 2.0 * (2.0 + double(i)) * p[i];
    }
    return f;
  };
  const auto res = grad_check(fn, {0.3, -0.7, 1.1}, 1e-5);
  CHECK(res.max_rel_err < 1e-8);
}

TEST_CASE("residual blocks pass the finite-difference gate") {
  Rng rng(15);
  const LayerSpec cases[] = {
      {LayerKind::ResConv, 3, 5, 4, 2, 1, 0.5},
      {LayerKind::ResConvT, 3, 5, 4, 2, 1, 0.4},
      {LayerKind::ResConv, 4, 4, 3, 1, 1, 0.8},
  };
  for (const auto& l : cases) {
    NetWeights net = random_net({"b", {l}}, 16, true);
    const Tensor x0 = random_tensor(2, l.in_ch, 12, rng, 0.8);
    const int t_out = l.kind == LayerKind::ResConvT
                          ? (x0.len - 1) * l.stride - 2 * l.pad + l.kernel
                          : (x0.len + 2 * l.pad - l.kernel) / l.stride + 1;
    auto probe = std::make_shared<Tensor>(2, l.out_ch, t_out);
    for (auto& v : probe->v) v = rng.uniform(-1.0, 1.0);

    std::vector<double> params;
    flatten_params(net, params);
    const size_t n_weights = params.size();
    params.insert(params.end(), x0.v.begin(), x0.v.end());

    auto fn = [&](std::span<const double> p, std::span<double> grad) -> double {
      NetWeights local = net;
      assign_params(local, p.subspan(0, n_weights));
      Tensor xin = x0;
      std::copy(p.begin() + long(n_weights), p.end(), xin.v.begin());
      Graph g;
      auto nodes = push_weights(g, local, true);
      const int in = g.leaf(std::move(xin), true);
      const int y = residual_block_forward(g, in, l, nodes[0]);
      const int loss = inner_product(g, y, probe);
      if (!grad.empty()) {
        g.backward(loss);
        std::vector<double> wg;
        collect_grads(g, nodes, -1, wg);
        std::copy(wg.begin(), wg.end(), grad.begin());
        const Tensor& gx = g.grad(in);
        std::copy(gx.v.begin(), gx.v.end(), grad.begin() + long(n_weights));
      }
      return g.val(loss).item();
    };
    const auto res = grad_check(fn, params, 1e-5);
    CHECK(res.max_rel_err < 1e-4);
  }
}

TEST_CASE("full generator chain passes the finite-difference gate") {
  // Encoder -> decoder -> RC-FK on a tiny configuration; gradients w.r.t.
  // every weight and the conditioning input.
  const Skeleton sk = test::two_bone_skeleton();
  const int m = sk.joint_count();
  NetworkSpec enc = make_encoder_spec(m, 0.01);
  NetworkSpec dec = make_decoder_spec(m, 0.01);
  NetWeights we = random_net(enc, 17, true);
  NetWeights wd = random_net(dec, 18, true);
  Rng rng(19);
  const Tensor cond = random_tensor(1, 6 * m, 64, rng, 0.5);
  auto probe = std::make_shared<Tensor>(1, sk.local_dim(), 64);
  for (auto& v : probe->v) v = rng.uniform(-0.1, 0.1);
  const int latent = scaled_latent_dim(0.01);

  std::vector<double> params, pe, pd;
  flatten_params(we, pe);
  flatten_params(wd, pd);
  params = pe;
  params.insert(params.end(), pd.begin(), pd.end());

  auto fn = [&](std::span<const double> p, std::span<double> grad) -> double {
    NetWeights le = we, ld = wd;
    assign_params(le, p.subspan(0, pe.size()));
    assign_params(ld, p.subspan(pe.size(), pd.size()));
    Graph g;
    auto en = push_weights(g, le, true);
    auto dn = push_weights(g, ld, true);
    const int x = g.leaf(cond, false);
    const int z = network_forward(g, enc, en, x);
    // constant DNA vector for the concat
    Tensor wvec(1, latent, 1);
    for (int i = 0; i < latent; ++i) wvec.at(0, i, 0) = 0.1 * i;
    const int w_rep = broadcast_time(g, g.leaf(std::move(wvec), false), g.val(z).len);
    const int zw = concat_ch(g, z, w_rep);
    const int raw = network_forward(g, dec, dn, zw);
    const int pos = rcfk_positions(g, raw, sk, true);
    const int loss = inner_product(g, pos, probe);
    if (!grad.empty()) {
      g.backward(loss);
      std::vector<double> ge, gd;
      collect_grads(g, en, -1, ge);
      collect_grads(g, dn, -1, gd);
      std::copy(ge.begin(), ge.end(), grad.begin());
      std::copy(gd.begin(), gd.end(), grad.begin() + long(ge.size()));
    }
    return g.val(loss).item();
  };
  // Check a subsample of coordinates to keep runtime bounded: grad_check on
  // the full vector is exercised at acceptance; here perturb every 7th.
  std::vector<double> analytic(params.size(), 0.0);
  fn(params, analytic);
  double worst = 0.0;
  for (size_t i = 0; i < params.size(); i += 7) {
    const double keep = params[i];
    params[i] = keep + 1e-5;
    const double fp = fn(params, {});
    params[i] = keep - 1e-5;
    const double fm = fn(params, {});
    params[i] = keep;
    const double numeric = (fp - fm) / 2e-5;
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-3});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("checkpoints round trip and reject stale specs") {
  const auto spec = make_discriminator_spec(8, 0.05);
  NetWeights w = random_net(spec, 20, true);
  std::stringstream buf;
  save_net(buf, w, "discriminator");

  NetWeights loaded;
  loaded.spec = spec;
  Rng r0(0);
  loaded.init(r0);
  load_net(buf, loaded, "discriminator");
  std::vector<float> a, b;
  w.flatten(a);
  loaded.flatten(b);
  CHECK(a == b);

  // Stale spec: different width -> hash mismatch -> hard error.
  std::stringstream buf2;
  save_net(buf2, w, "discriminator");
  NetWeights wrong;
  wrong.spec = make_discriminator_spec(8, 0.1);
  wrong.init(r0);
  CHECK_THROWS_WITH_AS(load_net(buf2, wrong, "discriminator"),
                       doctest::Contains("spec hash mismatch"),
                       std::runtime_error);
}
