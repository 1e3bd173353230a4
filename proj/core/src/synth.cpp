#include "tween/synth.hpp"

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace tween {

namespace {

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

SynthesisResult synthesize(const SynthesisRequest& request, const Skeleton& skeleton,
                           const GeneratorWeights& gen, const nn::NetWeights& path) {
  const int n = request.n_frames;
  const int pose_dim = skeleton.pose_dim();
  if (n <= 0 || n % 64 != 0)
    throw std::invalid_argument("synthesize: n_frames must be a positive multiple of 64");
  request.keys.validate(n, pose_dim);

  SynthesisResult result;
  const auto& idx = request.keys.indices;
  for (size_t i = 0; i + 1 < idx.size(); ++i)
    if (idx[i + 1] - idx[i] > kMaxKeyframeGap) result.gap_warning = true;

  // Keyframes recentered by their mean root, as in training.
  KeyframeSet keys = request.keys;
  Vec3 mean_root = Vec3::Zero();
  for (const auto& p : keys.poses) mean_root += Vec3(p[0], p[1], p[2]);
  mean_root /= double(keys.count());
  for (auto& p : keys.poses) {
    p[0] -= mean_root.x();
    p[1] -= mean_root.y();
    p[2] -= mean_root.z();
  }

  const double t0 = now_s();

  ConditioningTensor cond = build_dense_input(keys, n, pose_dim);
  nn::Tensor x(1, 2 * pose_dim, n);
  for (int c = 0; c < pose_dim; ++c)
    for (int t = 0; t < n; ++t) {
      x.at(0, c, t) = cond.values.at(0, c, t) * request.input_scale;
      x.at(0, pose_dim + c, t) = cond.weight.at(0, c, t);
    }

  nn::Graph g;
  auto en = nn::push_weights(g, gen.encoder, false);
  auto dn = nn::push_weights(g, gen.dna_encoder, false);
  auto dc = nn::push_weights(g, gen.decoder, false);
  const int latent = gen.encoder.spec.output_ch();
  nn::Tensor empty(1, int(gen.dna_encoder.extra.size()), 1);
  empty.v.assign(gen.dna_encoder.extra.begin(), gen.dna_encoder.extra.end());
  const int empty_node = g.leaf(std::move(empty), false);

  const int xin = g.leaf(std::move(x), false);
  const int z = nn::network_forward(g, gen.encoder.spec, en, xin);
  int w;
  if (request.dna_poses.empty()) {
    w = nn::dna_encode(g, gen.dna_encoder, dn, -1, latent, empty_node);
  } else {
    nn::Tensor frames(1, skeleton.local_dim(), int(request.dna_poses.size()));
    for (size_t i = 0; i < request.dna_poses.size(); ++i)
      for (int c = 0; c < skeleton.local_dim(); ++c)
        frames.at(0, c, int(i)) = request.dna_poses[i][c] * request.input_scale;
    const int fr = g.leaf(std::move(frames), false);
    w = nn::network_forward(g, gen.dna_encoder.spec, dn, fr);
  }
  const int w_rep = nn::broadcast_time(g, w, g.val(z).len);
  const int zw = nn::concat_ch(g, z, w_rep);
  const int raw = nn::network_forward(g, gen.decoder.spec, dc, zw);

  // Decode every frame.
  MotionClip& clip = result.clip;
  clip.class_label = "synthesized";
  clip.source_id = "synthesize";
  clip.fps = 60;
  clip.frames.resize(n);
  clip.root_positions.resize(n);
  clip.clamp_flags.assign(n, 0);
  clip.violation_deg.assign(n, 0.0);
  const nn::Tensor& raw_v = g.val(raw);
  std::vector<double> frame_raw(skeleton.raw_dim());
  for (int t = 0; t < n; ++t) {
    for (int c = 0; c < skeleton.raw_dim(); ++c) frame_raw[c] = raw_v.at(0, c, t);
    clip.frames[t] = rc_fk_decode(frame_raw, skeleton);
  }
  result.local_generation_s = now_s() - t0;

  // Global path from the frozen predictor, anchored by the recentering fit.
  const double t1 = now_s();
  nn::Tensor local(1, skeleton.local_dim(), n);
  for (int t = 0; t < n; ++t)
    for (int j = 1; j < skeleton.joint_count(); ++j)
      for (int a = 0; a < 3; ++a)
        local.at(0, 3 * (j - 1) + a, t) =
            clip.frames[t].joint_positions[j][a] * request.input_scale;
  const nn::Tensor pred = predict_root_motion(local, path, 1.0);
  RootTrack track = root_track_from_prediction(pred, 0, {0.0, 0.0});

  Vec3 pred_mean = Vec3::Zero(), user_mean = Vec3::Zero();
  for (int i = 0; i < request.keys.count(); ++i) {
    pred_mean += track.positions[request.keys.indices[i]];
    user_mean += Vec3(request.keys.poses[i][0], request.keys.poses[i][1],
                      request.keys.poses[i][2]);
  }
  pred_mean /= double(request.keys.count());
  user_mean /= double(request.keys.count());
  const Vec3 shift = user_mean - pred_mean;
  for (int t = 0; t < n; ++t) clip.root_positions[t] = track.positions[t] + shift;
  result.path_prediction_s = now_s() - t1;
  return result;
}

// --- exact keyframe matching -----------------------------------------------------

namespace {

double blend_weight(int distance, int window) {
  if (std::abs(distance) > window) return 0.0;
  return 0.5 * (1.0 + std::cos(kPi * double(distance) / double(window)));
}

}  // namespace

void enforce_keyframes(MotionClip& clip, const KeyframeSet& keys, int window) {
  const int n = clip.length();
  const int m = int(clip.frames.empty() ? 0 : clip.frames[0].joint_positions.size());
  const int pose_dim = 3 * m;
  keys.validate(n, pose_dim);
  const int k = keys.count();
  if (k == 0) return;

  // Residuals at keyframes (masked coordinates only).
  Eigen::MatrixXd residual(k, pose_dim);
  for (int i = 0; i < k; ++i) {
    const auto pose = clip.pose_vector(keys.indices[i]);
    for (int c = 0; c < pose_dim; ++c)
      residual(i, c) = keys.mask[i][c] ? keys.poses[i][c] - pose[c] : 0.0;
  }

  // Summed blends must stay exact at every keyframe, so solve for the
  // amplitudes of the overlapping windows.
  Eigen::MatrixXd blend(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j)
      blend(i, j) = blend_weight(keys.indices[i] - keys.indices[j], window);
  const Eigen::MatrixXd amplitude = blend.fullPivLu().solve(residual);

  for (int t = 0; t < n; ++t) {
    Eigen::VectorXd corr = Eigen::VectorXd::Zero(pose_dim);
    bool touched = false;
    for (int j = 0; j < k; ++j) {
      const double w = blend_weight(t - keys.indices[j], window);
      if (w == 0.0) continue;
      corr += w * amplitude.row(j).transpose();
      touched = true;
    }
    if (!touched) continue;
    clip.root_positions[t] += Vec3(corr[0], corr[1], corr[2]);
    for (int j = 1; j < m; ++j)
      clip.frames[t].joint_positions[j] +=
          Vec3(corr[3 * j], corr[3 * j + 1], corr[3 * j + 2]);
  }
  clip.positions_authoritative = true;
}

AlignmentError eval_alignment(const MotionClip& clip, const KeyframeSet& keys) {
  const int m = int(clip.frames.empty() ? 0 : clip.frames[0].joint_positions.size());
  keys.validate(clip.length(), 3 * m);
  AlignmentError err;
  const int k = keys.count();
  if (k == 0) return err;

  // Root: recentered mean Euclidean distance.
  Vec3 pc = Vec3::Zero(), tc = Vec3::Zero();
  std::vector<Vec3> pred(k), target(k);
  for (int i = 0; i < k; ++i) {
    pred[i] = clip.root_positions[keys.indices[i]];
    target[i] = Vec3(keys.poses[i][0], keys.poses[i][1], keys.poses[i][2]);
    pc += pred[i];
    tc += target[i];
  }
  pc /= double(k);
  tc /= double(k);
  for (int i = 0; i < k; ++i)
    err.root_cm += ((pred[i] - pc) - (target[i] - tc)).norm() / double(k);

  // Locals: mean per-joint Euclidean over masked coordinates.
  double acc = 0.0;
  int64_t joints = 0;
  for (int i = 0; i < k; ++i) {
    const auto& f = clip.frames[keys.indices[i]];
    for (int j = 1; j < m; ++j) {
      double d2 = 0.0;
      bool any = false;
      for (int a = 0; a < 3; ++a) {
        const int c = 3 * j + a;
        if (!keys.mask[i][c]) continue;
        const double d = f.joint_positions[j][a] - keys.poses[i][c];
        d2 += d * d;
        any = true;
      }
      if (any) {
        acc += std::sqrt(d2);
        ++joints;
      }
    }
  }
  err.local_cm = joints ? acc / double(joints) : 0.0;
  return err;
}

DnaError eval_dna(const MotionClip& clip,
                  std::span<const std::vector<double>> representative,
                  std::span<const int> keyframe_indices) {
  DnaError err;
  if (representative.empty()) return err;
  std::vector<std::vector<double>> lam(clip.length());
  for (int t = 0; t < clip.length(); ++t) lam[t] = clip.lambda_vector(t);
  err.dna1_cm = std::sqrt(dna_loss_1(lam, representative));
  err.dna2_cm = std::sqrt(dna_loss_2(lam, representative, keyframe_indices));
  return err;
}

// --- timing harness ----------------------------------------------------------------

std::span<const TimingReference> paper_timing_reference() {
  static const TimingReference kRef[] = {
      {512, 0.019, 0.033, 0.008, 0.059},
      {1024, 0.023, 0.061, 0.017, 0.101},
      {2048, 0.021, 0.131, 0.036, 0.188},
      {4096, 0.022, 0.237, 0.070, 0.329},
  };
  return kRef;
}

TimingTable benchmark_timing(const Skeleton& skeleton, const GeneratorWeights& gen,
                             const nn::NetWeights& path,
                             std::span<const int> lengths, uint64_t seed) {
  TimingTable table;
  Rng rng(seed);
  for (int n : lengths) {
    // Two keyframes from a mildly perturbed T-pose.
    std::vector<double> raw(skeleton.raw_dim(), 0.0);
    raw[0] = 1.0;
    raw[4] = 1.0;
    for (int c = 6; c < skeleton.raw_dim(); ++c) raw[c] = rng.uniform(-0.5, 0.5);
    const LocalPoseFrame pose = rc_fk_decode(raw, skeleton);
    std::vector<double> pv(size_t(skeleton.pose_dim()), 0.0);
    pv[1] = 90.0;
    for (int j = 1; j < skeleton.joint_count(); ++j)
      for (int a = 0; a < 3; ++a) pv[size_t(3 * j + a)] = pose.joint_positions[j][a];
    std::vector<double> pv2 = pv;
    pv2[0] += 50.0;

    SynthesisRequest req;
    req.n_frames = n;
    req.keys = KeyframeSet::full_pose({n / 4, 3 * n / 4}, {pv, pv2});
    SynthesisResult syn = synthesize(req, skeleton, gen, path);

    const auto t0 = std::chrono::steady_clock::now();
    enforce_keyframes(syn.clip, req.keys);
    const auto t1 = std::chrono::steady_clock::now();

    TimingRow row;
    row.frames = n;
    row.local_generation_s = syn.local_generation_s;
    row.path_prediction_s = syn.path_prediction_s;
    row.post_processing_s = std::chrono::duration<double>(t1 - t0).count();
    row.total_s =
        row.local_generation_s + row.path_prediction_s + row.post_processing_s;
    table.rows.push_back(row);
  }
  return table;
}

void print_timing(std::ostream& out, const TimingTable& table) {
  out << "frames local_s path_s post_s total_s ref_total_s\n";
  for (const auto& row : table.rows) {
    double ref = -1.0;
    for (const auto& r : paper_timing_reference())
      if (r.frames == row.frames) ref = r.total_s;
    out << row.frames << ' ' << row.local_generation_s << ' '
        << row.path_prediction_s << ' ' << row.post_processing_s << ' '
        << row.total_s << ' ' << ref << '\n';
  }
}

}  // namespace tween
