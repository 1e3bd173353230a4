#include "tween/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <stdexcept>

namespace tween {

using nlohmann::json;

std::string TrainConfig::to_json() const {
  json j;
  j["lr"] = lr;
  j["rmsprop_alpha"] = rmsprop_alpha;
  j["rmsprop_eps"] = rmsprop_eps;
  j["gen_batch"] = gen_batch;
  j["gen_frames"] = gen_frames;
  j["disc_batch"] = disc_batch;
  j["disc_min_len"] = disc_min_len;
  j["disc_max_len"] = disc_max_len;
  j["seed"] = seed;
  j["iterations"] = iterations;
  j["checkpoint_every"] = checkpoint_every;
  j["validate_every"] = validate_every;
  j["width_scale"] = width_scale;
  j["input_scale"] = input_scale;
  j["path_lr"] = path_lr;
  j["path_frames"] = path_frames;
  j["path_batch"] = path_batch;
  j["path_iterations"] = path_iterations;
  j["height_weight"] = height_weight;
  j["loss_weights"] = {
      {"gan", weights.gan},          {"batch_reg", weights.batch_reg},
      {"local_joint", weights.local_joint}, {"dna1", weights.dna1},
      {"dna2", weights.dna2},        {"path_start", weights.path_start},
      {"path_max", weights.path_max}, {"path_step_iters", weights.path_step_iters},
  };
  return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  const json j = json::parse(text);
  TrainConfig c;
  c.lr = j.value("lr", c.lr);
  c.rmsprop_alpha = j.value("rmsprop_alpha", c.rmsprop_alpha);
  c.rmsprop_eps = j.value("rmsprop_eps", c.rmsprop_eps);
  c.gen_batch = j.value("gen_batch", c.gen_batch);
  c.gen_frames = j.value("gen_frames", c.gen_frames);
  c.disc_batch = j.value("disc_batch", c.disc_batch);
  c.disc_min_len = j.value("disc_min_len", c.disc_min_len);
  c.disc_max_len = j.value("disc_max_len", c.disc_max_len);
  c.seed = j.value("seed", c.seed);
  c.iterations = j.value("iterations", c.iterations);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.validate_every = j.value("validate_every", c.validate_every);
  c.width_scale = j.value("width_scale", c.width_scale);
  c.input_scale = j.value("input_scale", c.input_scale);
  c.path_lr = j.value("path_lr", c.path_lr);
  c.path_frames = j.value("path_frames", c.path_frames);
  c.path_batch = j.value("path_batch", c.path_batch);
  c.path_iterations = j.value("path_iterations", c.path_iterations);
  c.height_weight = j.value("height_weight", c.height_weight);
  if (j.contains("loss_weights")) {
    const json& w = j["loss_weights"];
    c.weights.gan = w.value("gan", c.weights.gan);
    c.weights.batch_reg = w.value("batch_reg", c.weights.batch_reg);
    c.weights.local_joint = w.value("local_joint", c.weights.local_joint);
    c.weights.dna1 = w.value("dna1", c.weights.dna1);
    c.weights.dna2 = w.value("dna2", c.weights.dna2);
    c.weights.path_start = w.value("path_start", c.weights.path_start);
    c.weights.path_max = w.value("path_max", c.weights.path_max);
    c.weights.path_step_iters = w.value("path_step_iters", c.weights.path_step_iters);
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

uint64_t TrainConfig::hash() const {
  // Budget and cadence fields may grow between resumed runs; everything that
  // affects the training trajectory itself is hashed.
  json j = json::parse(to_json());
  j.erase("iterations");
  j.erase("checkpoint_every");
  j.erase("validate_every");
  j.erase("path_iterations");
  const std::string s = j.dump();
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

void TrainConfig::validate() const {
  if (lr <= 0.0) throw std::invalid_argument("config: lr must be positive");
  if (gen_frames % 64 != 0)
    throw std::invalid_argument("config: gen_frames must divide by 64");
  if (disc_min_len % 64 != 0 || disc_max_len % 64 != 0 || disc_min_len > disc_max_len)
    throw std::invalid_argument("config: disc lengths must be multiples of 64");
  if (path_frames % 16 != 0)
    throw std::invalid_argument("config: path_frames must divide by 16");
  if (weights.path_max < weights.path_start)
    throw std::invalid_argument("config: path ramp must be non-decreasing");
}

void RmsProp::step(std::span<double> params, std::span<const double> grads) {
  if (sq.size() != params.size()) sq.assign(params.size(), 0.0);
  for (size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    sq[i] = alpha * sq[i] + (1.0 - alpha) * g * g;
    params[i] -= lr * g / (std::sqrt(sq[i]) + eps);
    // Keep state on the float32 grid: checkpoints store f32 and must resume
    // bit-exactly.
    params[i] = double(float(params[i]));
    sq[i] = double(float(sq[i]));
  }
}

void flatten_params(const nn::NetWeights& w, std::vector<double>& out) {
  out.clear();
  out.reserve(w.param_count());
  for (const auto& lw : w.layers) {
    out.insert(out.end(), lw.kernel.v.begin(), lw.kernel.v.end());
    out.insert(out.end(), lw.scale.begin(), lw.scale.end());
    out.insert(out.end(), lw.bias.begin(), lw.bias.end());
    out.insert(out.end(), lw.slope.begin(), lw.slope.end());
  }
  out.insert(out.end(), w.extra.begin(), w.extra.end());
}

void assign_params(nn::NetWeights& w, std::span<const double> in) {
  size_t i = 0;
  for (auto& lw : w.layers) {
    for (double& v : lw.kernel.v) v = in[i++];
    for (double& v : lw.scale) v = in[i++];
    for (double& v : lw.bias) v = in[i++];
    for (double& v : lw.slope) v = in[i++];
  }
  for (double& v : w.extra) v = in[i++];
  if (i != in.size()) throw std::invalid_argument("assign_params: size mismatch");
}

namespace {

void append_grad(nn::Graph& g, int node, std::vector<double>& out) {
  if (node < 0) return;
  const nn::Tensor& v = g.val(node);
  if (g.has_grad(node)) {
    const nn::Tensor& gr = g.grad(node);
    out.insert(out.end(), gr.v.begin(), gr.v.end());
  } else {
    out.insert(out.end(), v.size(), 0.0);
  }
}

}  // namespace

void collect_grads(nn::Graph& g, const std::vector<nn::LayerNodes>& nodes,
                   int extra_node, std::vector<double>& out) {
  out.clear();
  for (const auto& n : nodes) {
    append_grad(g, n.kernel, out);
    append_grad(g, n.scale, out);
    append_grad(g, n.bias, out);
    append_grad(g, n.slope, out);
  }
  append_grad(g, extra_node, out);
}

// --- path predictor ----------------------------------------------------------------

namespace {

nn::Tensor local_window_tensor(std::span<const MotionClip* const> clips,
                               std::span<const int> starts, int frames,
                               double input_scale) {
  const int b = int(clips.size());
  const int ch = int(clips[0]->local_vector(0).size());
  nn::Tensor x(b, ch, frames);
  for (int e = 0; e < b; ++e)
    for (int t = 0; t < frames; ++t) {
      const auto v = clips[e]->local_vector(starts[e] + t);
      for (int c = 0; c < ch; ++c) x.at(e, c, t) = v[c] * input_scale;
    }
  return x;
}

double fmt_guard(double v) { return std::isfinite(v) ? v : -1.0; }

std::string metrics_line(const char* tag, int64_t iter,
                         std::initializer_list<std::pair<const char*, double>> kv) {
  std::ostringstream os;
  os << tag << " iter=" << iter;
  os.precision(17);
  for (const auto& [k, v] : kv) os << ' ' << k << '=' << fmt_guard(v);
  return os.str();
}

}  // namespace

double path_velocity_error(const nn::NetWeights& path,
                           std::span<const MotionClip> clips, double input_scale) {
  double acc = 0.0;
  int64_t count = 0;
  for (const auto& clip : clips) {
    const int t_total = (clip.length() / 16) * 16;
    if (t_total < 32) continue;
    const MotionClip* cp = &clip;
    const int start = 0;
    nn::Tensor x = local_window_tensor({&cp, 1}, {&start, 1}, t_total, input_scale);
    const nn::Tensor pred = predict_root_motion(x, path, 1.0);
    const nn::Tensor truth = path_targets_from_clip(clip, 0, t_total);
    for (int t = 0; t + 1 < t_total; ++t) {
      const double dx = pred.at(0, 0, t) - truth.at(0, 0, t);
      const double dz = pred.at(0, 1, t) - truth.at(0, 1, t);
      acc += std::sqrt(dx * dx + dz * dz);
      ++count;
    }
  }
  return count ? acc / double(count) : 1e300;
}

double path_displacement_error(const nn::NetWeights& path,
                               std::span<const MotionClip> clips, int horizon,
                               double input_scale) {
  double acc = 0.0;
  int64_t count = 0;
  for (const auto& clip : clips) {
    const int t_total = (clip.length() / 16) * 16;
    if (t_total <= horizon) continue;
    const MotionClip* cp = &clip;
    const int start = 0;
    nn::Tensor x = local_window_tensor({&cp, 1}, {&start, 1}, t_total, input_scale);
    const nn::Tensor pred = predict_root_motion(x, path, 1.0);
    for (int t = 0; t + horizon < t_total; ++t) {
      double dx = 0.0, dz = 0.0;
      for (int i = t; i < t + horizon; ++i) {
        dx += pred.at(0, 0, i);
        dz += pred.at(0, 1, i);
      }
      dx -= clip.root_positions[t + horizon].x() - clip.root_positions[t].x();
      dz -= clip.root_positions[t + horizon].z() - clip.root_positions[t].z();
      acc += std::sqrt(dx * dx + dz * dz);
      ++count;
    }
  }
  return count ? acc / double(count) : 1e300;
}

nn::NetWeights init_path_predictor(const Skeleton& skeleton, const TrainConfig& cfg,
                                   uint64_t seed) {
  nn::NetWeights w;
  w.spec = nn::make_path_predictor_spec(skeleton.joint_count(), cfg.width_scale);
  Rng rng = Rng::substream(seed, 0x9a7);
  w.init(rng);
  w.extra.assign(1, 0.0);
  w.quantize_f32();
  return w;
}

PathTrainResult train_path_predictor(const Corpus& corpus, const TrainConfig& cfg,
                                     std::ostream* metrics) {
  if (corpus.train.empty())
    throw std::invalid_argument("train_path_predictor: empty corpus");

  PathTrainResult result;
  result.weights = init_path_predictor(corpus.skeleton, cfg, cfg.seed);
  {
    // Mean root height of the corpus; the network trains height deviations.
    double mean_h = 0.0;
    int64_t n = 0;
    for (const auto& clip : corpus.train) {
      for (const auto& p : clip.root_positions) mean_h += p.y();
      n += clip.length();
    }
    result.weights.extra[0] = double(float(n ? mean_h / double(n) : 0.0));
  }

  nn::NetWeights current = result.weights;
  RmsProp opt{cfg.path_lr > 0 ? cfg.path_lr : cfg.lr, cfg.rmsprop_alpha,
              cfg.rmsprop_eps, {}};

  const auto& val_clips = corpus.test.empty() ? corpus.train : corpus.test;
  std::vector<double> params, grads;

  for (int64_t iter = 0; iter < cfg.path_iterations; ++iter) {
    Rng rng = Rng::substream(cfg.seed, 0x70000000ull + uint64_t(iter));

    std::vector<const MotionClip*> clips(cfg.path_batch);
    std::vector<int> starts(cfg.path_batch);
    for (int e = 0; e < cfg.path_batch; ++e) {
      const MotionClip* clip = nullptr;
      for (int attempt = 0; attempt < 64 && !clip; ++attempt) {
        const auto& cand =
            corpus.train[size_t(rng.uniform_int(0, int64_t(corpus.train.size()) - 1))];
        if (cand.length() >= cfg.path_frames) clip = &cand;
      }
      if (!clip) throw std::runtime_error("train_path_predictor: clips too short");
      clips[e] = clip;
      starts[e] = int(rng.uniform_int(0, clip->length() - cfg.path_frames));
    }

    nn::Tensor x = local_window_tensor(clips, starts, cfg.path_frames, cfg.input_scale);
    nn::Tensor truth(cfg.path_batch, 3, cfg.path_frames);
    for (int e = 0; e < cfg.path_batch; ++e) {
      const nn::Tensor t1 = path_targets_from_clip(*clips[e], starts[e], cfg.path_frames);
      for (int c = 0; c < 3; ++c)
        std::copy_n(t1.row(0, c), cfg.path_frames, truth.row(e, c));
    }
    auto truth_planar = std::make_shared<nn::Tensor>(cfg.path_batch, 2, cfg.path_frames);
    nn::Tensor truth_height(cfg.path_batch, 1, cfg.path_frames);
    for (int e = 0; e < cfg.path_batch; ++e) {
      std::copy_n(truth.row(e, 0), cfg.path_frames, truth_planar->row(e, 0));
      std::copy_n(truth.row(e, 1), cfg.path_frames, truth_planar->row(e, 1));
      for (int t = 0; t < cfg.path_frames; ++t)
        truth_height.at(e, 0, t) = truth.at(e, 2, t) - current.extra[0];
    }

    nn::Graph g;
    auto nodes = nn::push_weights(g, current, true);
    const int in = g.leaf(std::move(x), false);
    const int pred = nn::network_forward(g, current.spec, nodes, in);
    const int planar = nn::slice_ch(g, pred, 0, 2);
    const int height = nn::slice_ch(g, pred, 2, 1);
    const int l_disp = tape::path_displacement_loss(g, planar, truth_planar);
    const int h_leaf = g.leaf(std::move(truth_height), false);
    const int h_diff = nn::add_scaled(g, height, 1.0, h_leaf, -1.0);
    const int l_height = nn::mean_sq_dev(g, h_diff, 0.0);
    const int ids[2] = {l_disp, l_height};
    const double coeffs[2] = {1.0, cfg.height_weight};
    const int total = nn::weighted_sum(g, ids, coeffs);

    const double loss = g.val(total).item();
    if (!std::isfinite(loss)) {
      result.aborted_nan = true;
      break;
    }
    g.backward(total);
    flatten_params(current, params);
    collect_grads(g, nodes, -1, grads);
    grads.resize(params.size(), 0.0);  // extra (height offset) is not trained
    opt.step(params, grads);
    assign_params(current, params);

    if (metrics)
      *metrics << metrics_line("path", iter,
                               {{"loss", loss},
                                {"disp", g.val(l_disp).item()},
                                {"height", g.val(l_height).item()}})
               << '\n';

    result.iterations_run = iter + 1;
    if ((iter + 1) % cfg.validate_every == 0 || iter + 1 == cfg.path_iterations) {
      const double verr = path_velocity_error(current, val_clips, cfg.input_scale);
      const double derr =
          path_displacement_error(current, val_clips, 128, cfg.input_scale);
      if (metrics)
        *metrics << metrics_line("path_val", iter, {{"vel_cm", verr}, {"disp128_cm", derr}})
                 << '\n';
      if (verr < result.best_velocity_err_cm) {
        result.best_velocity_err_cm = verr;
        result.best_disp128_err_cm = derr;
        result.weights = current;
      }
    }
  }
  return result;
}

// --- inbetweener --------------------------------------------------------------------

GeneratorWeights init_generator(const Skeleton& skeleton, const TrainConfig& cfg,
                                uint64_t seed) {
  const int m = skeleton.joint_count();
  GeneratorWeights gw;
  gw.encoder.spec = nn::make_encoder_spec(m, cfg.width_scale);
  gw.dna_encoder.spec = nn::make_dna_encoder_spec(m, cfg.width_scale);
  gw.decoder.spec = nn::make_decoder_spec(m, cfg.width_scale);
  Rng r1 = Rng::substream(seed, 1), r2 = Rng::substream(seed, 2),
      r3 = Rng::substream(seed, 3);
  gw.encoder.init(r1);
  gw.dna_encoder.init(r2);
  gw.decoder.init(r3);
  gw.dna_encoder.extra.assign(size_t(nn::scaled_latent_dim(cfg.width_scale)), 0.0);
  gw.encoder.quantize_f32();
  gw.dna_encoder.quantize_f32();
  gw.decoder.quantize_f32();
  return gw;
}

namespace {

struct GanBatch {
  nn::Tensor cond;  // (B, 6M, N); values scaled, distance channel raw
  std::vector<std::vector<int>> cols;
  std::vector<std::vector<std::vector<double>>> local_targets;  // cm
  std::vector<std::vector<std::vector<uint8_t>>> local_masks;
  std::vector<std::vector<Vec3>> root_targets;  // recentered
  std::vector<std::vector<std::vector<double>>> dna_poses;  // cm
  std::shared_ptr<nn::Tensor> subst_values;  // scaled user locals at keyframes
  std::shared_ptr<nn::Tensor> subst_mask;    // (B, C, N)
};

GanBatch build_gan_batch(const Corpus& corpus, const Skeleton& sk,
                         const TrainConfig& cfg, Rng& rng) {
  const int n = cfg.gen_frames;
  const int pose_dim = sk.pose_dim();
  const int local_dim = sk.local_dim();
  GanBatch batch;
  batch.cond = nn::Tensor(cfg.gen_batch, 2 * pose_dim, n);
  batch.subst_values = std::make_shared<nn::Tensor>(cfg.gen_batch, local_dim, n);
  batch.subst_mask = std::make_shared<nn::Tensor>(cfg.gen_batch, local_dim, n);

  for (int e = 0; e < cfg.gen_batch; ++e) {
    SampledKeyframes sampled = sample_keyframes(corpus.train, n, rng);
    // Recenter keyframe roots by their mean; the paper's root loss is
    // translation-free, and this keeps the conditioning origin-independent.
    Vec3 mean = Vec3::Zero();
    for (const auto& p : sampled.keys.poses) mean += Vec3(p[0], p[1], p[2]);
    mean /= double(sampled.keys.count());
    for (auto& p : sampled.keys.poses) {
      p[0] -= mean.x();
      p[1] -= mean.y();
      p[2] -= mean.z();
    }

    DnaSample dna = sample_dna(sampled.interval_lengths, corpus.train, rng);

    batch.cols.push_back(sampled.keys.indices);
    std::vector<std::vector<double>> lt;
    std::vector<std::vector<uint8_t>> lm;
    std::vector<Vec3> rt;
    for (int i = 0; i < sampled.keys.count(); ++i) {
      const auto& p = sampled.keys.poses[i];
      const auto& mk = sampled.keys.mask[i];
      rt.emplace_back(p[0], p[1], p[2]);
      lt.emplace_back(p.begin() + 3, p.end());
      lm.emplace_back(mk.begin() + 3, mk.end());
    }
    batch.local_targets.push_back(std::move(lt));
    batch.local_masks.push_back(std::move(lm));
    batch.root_targets.push_back(std::move(rt));

    std::vector<std::vector<double>> dna_scaled = dna.poses;
    batch.dna_poses.push_back(std::move(dna_scaled));

    ConditioningTensor cond = build_dense_input(sampled.keys, n, pose_dim);
    for (int c = 0; c < pose_dim; ++c) {
      const double* vr = cond.values.row(0, c);
      const double* wr = cond.weight.row(0, c);
      double* dst_v = &batch.cond.at(e, c, 0);
      double* dst_w = &batch.cond.at(e, pose_dim + c, 0);
      for (int t = 0; t < n; ++t) {
        dst_v[t] = vr[t] * cfg.input_scale;
        dst_w[t] = wr[t];
      }
    }

    for (int i = 0; i < sampled.keys.count(); ++i) {
      const int t = sampled.keys.indices[i];
      for (int c = 0; c < local_dim; ++c) {
        if (!batch.local_masks[e][i][c]) continue;
        batch.subst_values->at(e, c, t) =
            batch.local_targets[e][i][c] * cfg.input_scale;
        batch.subst_mask->at(e, c, t) = 1.0;
      }
    }
  }
  return batch;
}

struct GenNodes {
  std::vector<nn::LayerNodes> encoder, dna, decoder;
  int dna_empty = -1;
};

GenNodes push_generator(nn::Graph& g, const GeneratorWeights& gw, bool rg) {
  GenNodes n;
  n.encoder = nn::push_weights(g, gw.encoder, rg);
  n.dna = nn::push_weights(g, gw.dna_encoder, rg);
  n.decoder = nn::push_weights(g, gw.decoder, rg);
  nn::Tensor empty(1, int(gw.dna_encoder.extra.size()), 1);
  empty.v.assign(gw.dna_encoder.extra.begin(), gw.dna_encoder.extra.end());
  n.dna_empty = g.leaf(std::move(empty), rg);
  return n;
}

struct GenForward {
  int raw = -1;        // (B, 6+3(M-1), N)
  int positions = -1;  // (B, 3(M-1), N), cm, root rotation applied
  int lambda = -1;     // (B, 3(M-1), N), cm, derotated
  std::vector<int> feats;
};

GenForward generator_forward(nn::Graph& g, const GeneratorWeights& gw,
                             const GenNodes& nodes, const Skeleton& sk,
                             const GanBatch& batch, const TrainConfig& cfg,
                             bool want_lambda) {
  GenForward f;
  nn::ForwardHooks hooks;
  hooks.conv_outputs = &f.feats;

  const int cond = g.leaf(batch.cond, false);
  const int z = nn::network_forward(g, gw.encoder.spec, nodes.encoder, cond, hooks);
  const int latent = gw.encoder.spec.output_ch();

  std::vector<int> ws;
  for (size_t e = 0; e < batch.dna_poses.size(); ++e) {
    const auto& poses = batch.dna_poses[e];
    int w_e;
    if (poses.empty()) {
      w_e = nn::dna_encode(g, gw.dna_encoder, nodes.dna, -1, latent, nodes.dna_empty);
    } else {
      nn::Tensor frames(1, sk.local_dim(), int(poses.size()));
      for (size_t i = 0; i < poses.size(); ++i)
        for (int c = 0; c < sk.local_dim(); ++c)
          frames.at(0, c, int(i)) = poses[i][c] * cfg.input_scale;
      const int fr = g.leaf(std::move(frames), false);
      nn::ForwardHooks dna_hooks;
      dna_hooks.conv_outputs = &f.feats;
      w_e = nn::network_forward(g, gw.dna_encoder.spec, nodes.dna, fr, dna_hooks);
    }
    ws.push_back(w_e);
  }
  const int w_stack = nn::stack_batch(g, ws);
  const int w_rep = nn::broadcast_time(g, w_stack, g.val(z).len);
  const int zw = nn::concat_ch(g, z, w_rep);
  f.raw = nn::network_forward(g, gw.decoder.spec, nodes.decoder, zw, hooks);
  f.positions = nn::rcfk_positions(g, f.raw, sk, true);
  if (want_lambda) f.lambda = nn::rcfk_positions(g, f.raw, sk, false);
  return f;
}

int discriminator_forward(nn::Graph& g, const nn::NetWeights& disc,
                          const std::vector<nn::LayerNodes>& nodes, int x,
                          std::vector<int>* feats) {
  nn::ForwardHooks hooks;
  hooks.conv_outputs = feats;
  return nn::network_forward(g, disc.spec, nodes, x, hooks);
}

int feature_channel_total(nn::Graph& g, std::span<const int> feats) {
  int total = 0;
  for (int f : feats) total += g.val(f).ch;
  return total;
}

// weighted batch-reg over all feature tensors: (w/D) * sum brt.
int batch_reg_sum(nn::Graph& g, std::span<const int> feats, double weight,
                  std::vector<int>& terms, std::vector<double>& coeffs) {
  const int d = feature_channel_total(g, feats);
  for (int f : feats) {
    terms.push_back(tape::batch_reg_term(g, f));
    coeffs.push_back(weight / double(d));
  }
  return d;
}

}  // namespace

TweenTrainResult train_inbetweener(const Corpus& corpus, const nn::NetWeights& path,
                                   const TrainConfig& cfg, std::ostream* metrics,
                                   const TrainHooks& hooks,
                                   std::optional<TrainState> resume) {
  if (path.layers.empty() || path.param_count() == 0)
    throw std::logic_error(
        "train_inbetweener: path predictor must be trained and frozen first");
  if (corpus.train.empty())
    throw std::invalid_argument("train_inbetweener: empty corpus");
  const Skeleton& sk = corpus.skeleton;
  const int local_dim = sk.local_dim();

  TweenTrainResult result;
  TrainState& st = result.state;
  if (resume) {
    st = std::move(*resume);
    if (st.config_hash != cfg.hash())
      throw std::runtime_error("train_inbetweener: checkpoint/config mismatch");
  } else {
    st.gen = init_generator(sk, cfg, cfg.seed);
    st.disc.spec = nn::make_discriminator_spec(sk.joint_count(), cfg.width_scale);
    Rng rd = Rng::substream(cfg.seed, 4);
    st.disc.init(rd);
    st.disc.quantize_f32();
    st.seed = cfg.seed;
    st.config_hash = cfg.hash();
    st.opt_encoder = {cfg.lr, cfg.rmsprop_alpha, cfg.rmsprop_eps, {}};
    st.opt_dna = st.opt_encoder;
    st.opt_decoder = st.opt_encoder;
    st.opt_disc = st.opt_encoder;
  }
  st.path = path;
  st.path_hash = 0;
  {
    std::vector<float> flat;
    path.flatten(flat);
    st.path_hash = path.spec.hash();
    for (float f : flat) {
      uint32_t u;
      std::memcpy(&u, &f, 4);
      st.path_hash = (st.path_hash ^ u) * 0x100000001b3ull;
    }
  }

  std::vector<double> params, grads;

  for (int64_t iter = st.iteration; iter < cfg.iterations; ++iter) {
    Rng rng = Rng::substream(cfg.seed, 0x10000000ull + uint64_t(iter));
    GanBatch batch = build_gan_batch(corpus, sk, cfg, rng);
    IterationStats stats;
    stats.w_path = cfg.weights.path_weight(iter);

    // Generated local motion without gradients, for the D update.
    nn::Tensor fake_positions;
    {
      nn::Graph g;
      GenNodes gn = push_generator(g, st.gen, false);
      GenForward f = generator_forward(g, st.gen, gn, sk, batch, cfg, false);
      fake_positions = g.val(f.positions);
    }

    // --- discriminator update -----------------------------------------------
    {
      // Substitute user poses at keyframe rows (scaled domain), then score.
      nn::Tensor d_fake_in(cfg.gen_batch, local_dim, cfg.gen_frames);
      for (size_t i = 0; i < fake_positions.v.size(); ++i)
        d_fake_in.v[i] = fake_positions.v[i] * cfg.input_scale;
      for (int e = 0; e < cfg.gen_batch; ++e)
        for (int c = 0; c < local_dim; ++c)
          for (int t = 0; t < cfg.gen_frames; ++t)
            if (batch.subst_mask->at(e, c, t) != 0.0)
              d_fake_in.at(e, c, t) = batch.subst_values->at(e, c, t);
      if (hooks.on_disc_input) {
        std::vector<std::vector<std::vector<double>>> scaled = batch.local_targets;
        for (auto& el : scaled)
          for (auto& key : el)
            for (auto& v : key) v *= cfg.input_scale;
        hooks.on_disc_input(d_fake_in, batch.cols, scaled);
      }

      // Real batch: one shared random length, multiples of 64.
      const int units = int(rng.uniform_int(cfg.disc_min_len / 64, cfg.disc_max_len / 64));
      const int real_len = units * 64;
      nn::Tensor real_in(cfg.disc_batch, local_dim, real_len);
      for (int e = 0; e < cfg.disc_batch; ++e) {
        const MotionClip* clip = nullptr;
        for (int attempt = 0; attempt < 64 && !clip; ++attempt) {
          const auto& cand = corpus.train[size_t(
              rng.uniform_int(0, int64_t(corpus.train.size()) - 1))];
          if (cand.length() >= real_len) clip = &cand;
        }
        if (!clip) throw std::runtime_error("train_inbetweener: clips shorter than real batch");
        const int start = int(rng.uniform_int(0, clip->length() - real_len));
        for (int t = 0; t < real_len; ++t) {
          const auto v = clip->local_vector(start + t);
          for (int c = 0; c < local_dim; ++c)
            real_in.at(e, c, t) = v[c] * cfg.input_scale;
        }
      }

      nn::Graph g;
      auto dn = nn::push_weights(g, st.disc, true);
      std::vector<int> feats;
      const int xr = g.leaf(std::move(real_in), false);
      const int xf = g.leaf(std::move(d_fake_in), false);
      const int yr = discriminator_forward(g, st.disc, dn, xr, &feats);
      const int yf = discriminator_forward(g, st.disc, dn, xf, &feats);
      const int l_gan = tape::lsgan_d_loss(g, yr, yf);
      std::vector<int> terms = {l_gan};
      std::vector<double> coeffs = {1.0};
      batch_reg_sum(g, feats, cfg.weights.batch_reg, terms, coeffs);
      const int total = nn::weighted_sum(g, terms, coeffs);
      stats.d_loss = g.val(l_gan).item();
      stats.br_d = g.val(total).item() - stats.d_loss;
      if (!std::isfinite(g.val(total).item())) {
        result.aborted_nan = true;
        break;
      }
      g.backward(total);
      flatten_params(st.disc, params);
      collect_grads(g, dn, -1, grads);
      st.opt_disc.step(params, grads);
      assign_params(st.disc, params);
    }

    // --- generator update ----------------------------------------------------
    {
      nn::Graph g;
      GenNodes gn = push_generator(g, st.gen, true);
      auto dn = nn::push_weights(g, st.disc, false);
      auto pn = nn::push_weights(g, st.path, false);

      GenForward f = generator_forward(g, st.gen, gn, sk, batch, cfg, true);

      const int scaled_pos = nn::scale_op(g, f.positions, cfg.input_scale);
      const int substituted =
          nn::masked_mix(g, scaled_pos, batch.subst_values, batch.subst_mask);
      const int y_fake = discriminator_forward(g, st.disc, dn, substituted, nullptr);
      const int l_adv = tape::lsgan_g_loss(g, y_fake);

      const int l_local = tape::masked_keyframe_mse(g, f.positions, batch.cols,
                                                    batch.local_targets,
                                                    batch.local_masks);
      const int l_dna1 = tape::dna_loss_1(g, f.lambda, batch.dna_poses);
      const int l_dna2 = tape::dna_loss_2(g, f.lambda, batch.dna_poses, batch.cols);

      const int path_in = nn::scale_op(g, f.positions, cfg.input_scale);
      const int path_out = nn::network_forward(g, st.path.spec, pn, path_in);
      const int planar_vel = nn::slice_ch(g, path_out, 0, 2);
      const int height = nn::slice_ch(g, path_out, 2, 1);
      const int planar_pos = nn::prefix_sum_time(g, planar_vel);
      const int l_root = tape::root_alignment_loss(g, planar_pos, height, batch.cols,
                                                   batch.root_targets);

      std::vector<int> terms = {l_adv, l_local, l_dna1, l_dna2, l_root};
      std::vector<double> coeffs = {cfg.weights.gan, cfg.weights.local_joint,
                                    cfg.weights.dna1, cfg.weights.dna2, stats.w_path};
      batch_reg_sum(g, f.feats, cfg.weights.batch_reg, terms, coeffs);
      const int total = nn::weighted_sum(g, terms, coeffs);

      stats.g_adv = g.val(l_adv).item();
      stats.local = g.val(l_local).item();
      stats.dna1 = g.val(l_dna1).item();
      stats.dna2 = g.val(l_dna2).item();
      stats.root = g.val(l_root).item();
      stats.g_total = g.val(total).item();
      double br = stats.g_total - (cfg.weights.gan * stats.g_adv +
                                   cfg.weights.local_joint * stats.local +
                                   cfg.weights.dna1 * stats.dna1 +
                                   cfg.weights.dna2 * stats.dna2 +
                                   stats.w_path * stats.root);
      stats.br_g = br;
      if (!std::isfinite(stats.g_total)) {
        result.aborted_nan = true;
        break;
      }
      g.backward(total);

      flatten_params(st.gen.encoder, params);
      collect_grads(g, gn.encoder, -1, grads);
      st.opt_encoder.step(params, grads);
      assign_params(st.gen.encoder, params);

      flatten_params(st.gen.dna_encoder, params);
      collect_grads(g, gn.dna, gn.dna_empty, grads);
      st.opt_dna.step(params, grads);
      assign_params(st.gen.dna_encoder, params);

      flatten_params(st.gen.decoder, params);
      collect_grads(g, gn.decoder, -1, grads);
      st.opt_decoder.step(params, grads);
      assign_params(st.gen.decoder, params);
    }

    st.iteration = iter + 1;
    if (metrics)
      *metrics << metrics_line("tween", iter,
                               {{"d", stats.d_loss},
                                {"br_d", stats.br_d},
                                {"g_adv", stats.g_adv},
                                {"br_g", stats.br_g},
                                {"local", stats.local},
                                {"dna1", stats.dna1},
                                {"dna2", stats.dna2},
                                {"root", stats.root},
                                {"w_path", stats.w_path},
                                {"g_total", stats.g_total}})
               << '\n';
    if (hooks.on_iteration) hooks.on_iteration(iter, stats);
  }
  return result;
}

// --- train-state checkpointing --------------------------------------------------

namespace {

nn::WeightSection opt_section(const std::string& name, const RmsProp& opt) {
  nn::WeightSection s;
  s.name = name;
  s.manifest = "rmsprop";
  s.data.reserve(opt.sq.size());
  for (double v : opt.sq) s.data.push_back(float(v));
  return s;
}

void opt_from_section(const nn::WeightSection& s, RmsProp& opt, size_t expect) {
  if (s.data.size() != expect && !s.data.empty())
    throw std::runtime_error("checkpoint: optimizer state size mismatch");
  opt.sq.assign(s.data.begin(), s.data.end());
}

}  // namespace

void save_train_state(std::ostream& out, const TrainState& st) {
  std::vector<nn::WeightSection> sections;
  sections.push_back(nn::section_from_net(st.gen.encoder, "encoder"));
  sections.push_back(nn::section_from_net(st.gen.dna_encoder, "dna_encoder"));
  sections.push_back(nn::section_from_net(st.gen.decoder, "decoder"));
  sections.push_back(nn::section_from_net(st.disc, "discriminator"));
  sections.push_back(nn::section_from_net(st.path, "path_predictor"));
  sections.push_back(opt_section("opt_encoder", st.opt_encoder));
  sections.push_back(opt_section("opt_dna", st.opt_dna));
  sections.push_back(opt_section("opt_decoder", st.opt_decoder));
  sections.push_back(opt_section("opt_disc", st.opt_disc));
  nn::WeightSection meta;
  meta.name = "meta";
  std::ostringstream mm;
  mm << "iteration=" << st.iteration << " seed=" << st.seed
     << " config=" << st.config_hash << " path_hash=" << st.path_hash;
  meta.manifest = mm.str();
  sections.push_back(std::move(meta));
  nn::write_checkpoint(out, sections);
}

void save_train_state_file(const std::string& path, const TrainState& st) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  save_train_state(out, st);
}

TrainState load_train_state(std::istream& in, const Skeleton& skeleton,
                            const TrainConfig& cfg) {
  auto sections = nn::read_checkpoint(in);
  auto find = [&](const std::string& name) -> const nn::WeightSection& {
    for (const auto& s : sections)
      if (s.name == name) return s;
    throw std::runtime_error("checkpoint: missing section " + name);
  };
  TrainState st;
  const int m = skeleton.joint_count();
  st.gen.encoder.spec = nn::make_encoder_spec(m, cfg.width_scale);
  st.gen.dna_encoder.spec = nn::make_dna_encoder_spec(m, cfg.width_scale);
  st.gen.decoder.spec = nn::make_decoder_spec(m, cfg.width_scale);
  st.disc.spec = nn::make_discriminator_spec(m, cfg.width_scale);
  st.path.spec = nn::make_path_predictor_spec(m, cfg.width_scale);
  Rng r0(0);
  st.gen.encoder.init(r0);
  st.gen.dna_encoder.init(r0);
  st.gen.dna_encoder.extra.assign(size_t(nn::scaled_latent_dim(cfg.width_scale)), 0.0);
  st.gen.decoder.init(r0);
  st.disc.init(r0);
  st.path.init(r0);
  st.path.extra.assign(1, 0.0);
  nn::net_from_section(find("encoder"), st.gen.encoder);
  nn::net_from_section(find("dna_encoder"), st.gen.dna_encoder);
  nn::net_from_section(find("decoder"), st.gen.decoder);
  nn::net_from_section(find("discriminator"), st.disc);
  nn::net_from_section(find("path_predictor"), st.path);
  st.opt_encoder = {cfg.lr, cfg.rmsprop_alpha, cfg.rmsprop_eps, {}};
  st.opt_dna = st.opt_encoder;
  st.opt_decoder = st.opt_encoder;
  st.opt_disc = st.opt_encoder;
  opt_from_section(find("opt_encoder"), st.opt_encoder, st.gen.encoder.param_count());
  opt_from_section(find("opt_dna"), st.opt_dna, st.gen.dna_encoder.param_count());
  opt_from_section(find("opt_decoder"), st.opt_decoder, st.gen.decoder.param_count());
  opt_from_section(find("opt_disc"), st.opt_disc, st.disc.param_count());
  std::istringstream mm(find("meta").manifest);
  std::string tok;
  while (mm >> tok) {
    const auto eq = tok.find('=');
    const std::string key = tok.substr(0, eq);
    const uint64_t val = std::stoull(tok.substr(eq + 1));
    if (key == "iteration") st.iteration = int64_t(val);
    if (key == "seed") st.seed = val;
    if (key == "config") st.config_hash = val;
    if (key == "path_hash") st.path_hash = val;
  }
  return st;
}

TrainState load_train_state_file(const std::string& path, const Skeleton& skeleton,
                                 const TrainConfig& cfg) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  return load_train_state(in, skeleton, cfg);
}

}  // namespace tween
