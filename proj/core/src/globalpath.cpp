#include "tween/globalpath.hpp"

#include <stdexcept>

namespace tween {

nn::Tensor predict_root_motion(const nn::Tensor& local_motion,
                               const nn::NetWeights& path_weights,
                               double input_scale) {
  if (local_motion.len % 16 != 0)
    throw std::invalid_argument("predict_root_motion: length must divide by 16");
  if (local_motion.ch != path_weights.spec.input_ch())
    throw std::invalid_argument("predict_root_motion: channel mismatch");
  nn::Graph g;
  auto nodes = nn::push_weights(g, path_weights, false);
  int x = g.leaf(local_motion, false);
  if (input_scale != 1.0) x = nn::scale_op(g, x, input_scale);
  const int y = nn::network_forward(g, path_weights.spec, nodes, x);
  nn::Tensor out = g.val(y);
  // extra[0] carries the corpus mean height; the network learns deviations.
  if (!path_weights.extra.empty())
    for (int b = 0; b < out.batch; ++b) {
      double* row = out.row(b, 2);
      for (int t = 0; t < out.len; ++t) row[t] += path_weights.extra[0];
    }
  return out;
}

std::vector<Eigen::Vector2d> integrate_path(std::span<const Eigen::Vector2d> velocities,
                                            const Eigen::Vector2d& initial) {
  std::vector<Eigen::Vector2d> out(velocities.size());
  Eigen::Vector2d acc = initial;
  for (size_t t = 0; t < velocities.size(); ++t) {
    out[t] = acc;
    acc += velocities[t];
  }
  return out;
}

RootTrack root_track_from_prediction(const nn::Tensor& prediction, int b,
                                     const Eigen::Vector2d& initial_planar) {
  if (prediction.ch != 3)
    throw std::invalid_argument("root_track_from_prediction: need 3 channels");
  RootTrack track;
  const int n = prediction.len;
  track.velocities.resize(n);
  track.heights.resize(n);
  for (int t = 0; t < n; ++t) {
    track.velocities[t] = {prediction.at(b, 0, t), prediction.at(b, 1, t)};
    track.heights[t] = prediction.at(b, 2, t);
  }
  const auto planar = integrate_path(track.velocities, initial_planar);
  track.positions.resize(n);
  for (int t = 0; t < n; ++t)
    track.positions[t] = {planar[t].x(), track.heights[t], planar[t].y()};
  return track;
}

nn::Tensor path_targets_from_clip(const MotionClip& clip, int start, int frames) {
  if (start < 0 || start + frames > clip.length())
    throw std::out_of_range("path_targets_from_clip: window out of range");
  nn::Tensor out(1, 3, frames);
  for (int t = 0; t < frames; ++t) {
    const int src = start + t;
    const int nxt = std::min(clip.length() - 1, src + 1);
    out.at(0, 0, t) = clip.root_positions[nxt].x() - clip.root_positions[src].x();
    out.at(0, 1, t) = clip.root_positions[nxt].z() - clip.root_positions[src].z();
    out.at(0, 2, t) = clip.root_positions[src].y();
  }
  return out;
}

}  // namespace tween
