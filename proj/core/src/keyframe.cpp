#include "tween/keyframe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace tween {

void KeyframeSet::validate(int n_frames, int pose_dim) const {
  if (poses.size() != indices.size() || mask.size() != indices.size())
    throw std::invalid_argument("keyframes: ragged fields");
  int prev = -1;
  for (size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] <= prev) throw std::invalid_argument("keyframes: indices not increasing");
    if (indices[i] < 0 || indices[i] >= n_frames)
      throw std::out_of_range("keyframes: index out of range");
    prev = indices[i];
    if (int(poses[i].size()) != pose_dim || int(mask[i].size()) != pose_dim)
      throw std::invalid_argument("keyframes: pose dimension mismatch");
    for (size_t c = 0; c < poses[i].size(); ++c)
      if (mask[i][c] && !std::isfinite(poses[i][c]))
        throw std::invalid_argument("keyframes: non-finite masked pose value");
  }
}

KeyframeSet KeyframeSet::full_pose(std::vector<int> indices,
                                   std::vector<std::vector<double>> poses) {
  KeyframeSet k;
  k.indices = std::move(indices);
  k.poses = std::move(poses);
  k.mask.reserve(k.poses.size());
  for (const auto& p : k.poses) k.mask.emplace_back(p.size(), uint8_t(1));
  return k;
}

ConditioningTensor build_sparse_input(const KeyframeSet& keys, int n_frames,
                                      int pose_dim) {
  keys.validate(n_frames, pose_dim);
  ConditioningTensor out;
  out.values = nn::Tensor(1, pose_dim, n_frames);
  out.weight = nn::Tensor(1, pose_dim, n_frames);
  for (int i = 0; i < keys.count(); ++i) {
    const int t = keys.indices[i];
    for (int c = 0; c < pose_dim; ++c) {
      if (!keys.mask[i][c]) continue;
      out.values.at(0, c, t) = keys.poses[i][c];
      out.weight.at(0, c, t) = 1.0;
    }
  }
  return out;
}

ConditioningTensor build_dense_input(const KeyframeSet& keys, int n_frames,
                                     int pose_dim, double dist_norm) {
  keys.validate(n_frames, pose_dim);
  if (keys.count() == 0)
    throw std::invalid_argument("build_dense_input: empty keyframe set");
  ConditioningTensor out;
  out.values = nn::Tensor(1, pose_dim, n_frames);
  out.weight = nn::Tensor(1, pose_dim, n_frames);

  // Per coordinate: nearest keyframe among those that specify it; ties go to
  // the earlier keyframe. Unspecified-everywhere coordinates stay zero with
  // saturated distance.
  for (int c = 0; c < pose_dim; ++c) {
    std::vector<int> holders;
    for (int i = 0; i < keys.count(); ++i)
      if (keys.mask[i][c]) holders.push_back(i);
    if (holders.empty()) {
      for (int t = 0; t < n_frames; ++t)
        out.weight.at(0, c, t) = n_frames / dist_norm;
      continue;
    }
    size_t cursor = 0;
    for (int t = 0; t < n_frames; ++t) {
      while (cursor + 1 < holders.size()) {
        const int cur = keys.indices[holders[cursor]];
        const int nxt = keys.indices[holders[cursor + 1]];
        if (std::abs(nxt - t) < std::abs(cur - t))
          ++cursor;
        else
          break;
      }
      const int ki = holders[cursor];
      out.values.at(0, c, t) = keys.poses[ki][c];
      out.weight.at(0, c, t) = std::abs(t - keys.indices[ki]) / dist_norm;
    }
  }
  return out;
}

// --- sampling --------------------------------------------------------------------

namespace {

std::vector<double> clip_keyframe_pose(const MotionClip& clip, int frame,
                                       const Vec3& root_world) {
  std::vector<double> pose = clip.pose_vector(frame);
  pose[0] = root_world.x();
  pose[1] = root_world.y();
  pose[2] = root_world.z();
  return pose;
}

}  // namespace

SampledKeyframes sample_keyframes(std::span<const MotionClip> corpus, int n_frames,
                                  Rng& rng, const KeyframeSampleConfig& cfg) {
  if (corpus.empty()) throw std::invalid_argument("sample_keyframes: empty corpus");
  if (n_frames < 2) throw std::invalid_argument("sample_keyframes: need N >= 2");

  SampledKeyframes out;
  std::vector<int> indices;
  std::vector<std::vector<double>> poses;

  int clip_id = int(rng.uniform_int(0, int64_t(corpus.size()) - 1));
  int clip_frame = int(rng.uniform_int(0, corpus[clip_id].length() - 1));
  int t = int(rng.uniform_int(0, std::min(32, n_frames - 2)));
  Vec3 root = corpus[clip_id].root_positions[clip_frame];

  indices.push_back(t);
  poses.push_back(clip_keyframe_pose(corpus[clip_id], clip_frame, root));

  while (true) {
    int interval = 0;
    int next_clip = clip_id;
    int next_frame = clip_frame;
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      interval = int(rng.uniform_int(1, cfg.max_interval));
      if (interval < cfg.short_interval) {
        // Short transition: both endpoints from the same clip, temporal
        // order maintained, in-clip gap equal to the interval.
        if (clip_frame + interval < corpus[clip_id].length()) {
          next_clip = clip_id;
          next_frame = clip_frame + interval;
          placed = true;
        }
        continue;  // clip too short for this gap: resample
      }
      const double p = std::min(1.0, (interval - cfg.short_interval) / cfg.switch_ramp);
      if (rng.uniform() < p) {
        next_clip = int(rng.uniform_int(0, int64_t(corpus.size()) - 1));
        next_frame = int(rng.uniform_int(0, corpus[next_clip].length() - 1));
        placed = true;
      } else if (clip_frame + interval < corpus[clip_id].length()) {
        next_clip = clip_id;
        next_frame = clip_frame + interval;
        placed = true;
      }
    }
    if (!placed) break;
    if (t + interval > n_frames - 1) break;

    Vec3 next_root;
    if (next_clip == clip_id && next_frame == clip_frame + interval) {
      next_root = root + (corpus[clip_id].root_positions[next_frame] -
                          corpus[clip_id].root_positions[clip_frame]);
    } else {
      // Cross-clip jump: root distance proportional to the interval.
      const double dist = cfg.root_speed_cap * interval * rng.uniform(0.3, 1.0);
      const double ang = rng.uniform(0.0, 2.0 * kPi);
      next_root = root + Vec3(dist * std::cos(ang), 0.0, dist * std::sin(ang));
      next_root.y() = corpus[next_clip].root_positions[next_frame].y();
    }

    t += interval;
    clip_id = next_clip;
    clip_frame = next_frame;
    root = next_root;
    indices.push_back(t);
    poses.push_back(clip_keyframe_pose(corpus[clip_id], clip_frame, root));
    out.interval_lengths.push_back(interval);
  }

  if (indices.size() < 2)
    return sample_keyframes(corpus, n_frames, rng, cfg);  // degenerate draw

  out.keys = KeyframeSet::full_pose(std::move(indices), std::move(poses));
  return out;
}

// --- representative frames --------------------------------------------------------

namespace {

double geodesic_angle(const Mat3& a, const Mat3& b) {
  const double c = ((a.transpose() * b).trace() - 1.0) * 0.5;
  return std::acos(std::clamp(c, -1.0, 1.0));
}

std::vector<double> rotation_change_scores(const MotionClip& clip) {
  const int n = clip.length();
  const int m = int(clip.frames.empty() ? 0 : clip.frames[0].joint_rotations.size());
  std::vector<double> score(n, 0.0);
  for (int t = 0; t < n; ++t) {
    double s = 0.0;
    int terms = 0;
    for (int j = 1; j < m; ++j) {
      if (t + 1 < n) {
        s += geodesic_angle(clip.frames[t].joint_rotations[j],
                            clip.frames[t + 1].joint_rotations[j]);
        ++terms;
      }
      if (t > 0) {
        s += geodesic_angle(clip.frames[t - 1].joint_rotations[j],
                            clip.frames[t].joint_rotations[j]);
        ++terms;
      }
    }
    score[t] = terms ? s / terms * (m - 1) : 0.0;
  }
  return score;
}

}  // namespace

RepresentativeFrames extract_representative_frames(const MotionClip& clip, int count) {
  const int n = clip.length();
  if (count > n)
    throw std::invalid_argument("extract_representative_frames: clip too short");
  RepresentativeFrames out;
  if (count == 0) return out;

  const auto score = rotation_change_scores(clip);
  const double max_score = *std::max_element(score.begin(), score.end());

  if (max_score < 1e-8) {
    // Static clip: uniform sampling fallback.
    out.fallback = true;
    for (int i = 0; i < count; ++i)
      out.frame_indices.push_back(int(int64_t(i) * n / count));
  } else {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return score[a] > score[b]; });
    std::vector<int> picked;
    for (int idx : order) {
      if (int(picked.size()) == count) break;
      bool ok = true;
      for (int p : picked)
        if (std::abs(p - idx) < kRepFrameSpacing) {
          ok = false;
          break;
        }
      if (ok) picked.push_back(idx);
    }
    // Non-adjacency can be unsatisfiable for large counts; fill by score.
    for (int idx : order) {
      if (int(picked.size()) == count) break;
      if (std::find(picked.begin(), picked.end(), idx) == picked.end())
        picked.push_back(idx);
    }
    std::sort(picked.begin(), picked.end());
    out.frame_indices = std::move(picked);
  }
  for (int idx : out.frame_indices) out.poses.push_back(clip.lambda_vector(idx));
  return out;
}

int dna_frame_budget(std::span<const int> interval_lengths, int short_interval) {
  int total = 0;
  for (int len : interval_lengths)
    if (len >= short_interval) total += len / short_interval;
  return total;
}

DnaSample sample_dna(std::span<const int> interval_lengths,
                     std::span<const MotionClip> corpus, Rng& rng) {
  DnaSample out;
  const int budget = dna_frame_budget(interval_lengths);
  if (budget == 0 || corpus.empty()) return out;

  // One motion class per DNA.
  std::vector<std::string> classes;
  for (const auto& c : corpus)
    if (std::find(classes.begin(), classes.end(), c.class_label) == classes.end())
      classes.push_back(c.class_label);
  out.class_label = classes[size_t(rng.uniform_int(0, int64_t(classes.size()) - 1))];

  std::vector<int> members;
  for (size_t i = 0; i < corpus.size(); ++i)
    if (corpus[i].class_label == out.class_label) members.push_back(int(i));

  int remaining = budget;
  int guard = 0;
  while (remaining > 0 && ++guard < 64) {
    const int ci = members[size_t(rng.uniform_int(0, int64_t(members.size()) - 1))];
    const MotionClip& clip = corpus[ci];
    const int cap = std::max(1, clip.length() / kRepFrameSpacing);
    const int take = std::min(remaining, cap);
    auto reps = extract_representative_frames(clip, take);
    for (auto& p : reps.poses) out.poses.push_back(std::move(p));
    remaining -= take;
  }
  return out;
}

}  // namespace tween
