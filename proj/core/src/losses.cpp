#include "tween/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <tuple>

namespace tween {

double lsgan_d_loss(std::span<const double> y_real, std::span<const double> y_fake) {
  if (y_real.empty() || y_fake.empty())
    throw std::invalid_argument("lsgan_d_loss: empty input");
  double lr = 0.0, lf = 0.0;
  for (double y : y_real) lr += (y - 1.0) * (y - 1.0);
  for (double y : y_fake) lf += (y + 1.0) * (y + 1.0);
  return lr / double(y_real.size()) + lf / double(y_fake.size());
}

double lsgan_g_loss(std::span<const double> y_fake) {
  if (y_fake.empty()) throw std::invalid_argument("lsgan_g_loss: empty input");
  double l = 0.0;
  for (double y : y_fake) {
    const double d = y - kLsganGeneratorTarget;
    l += d * d;
  }
  return l / double(y_fake.size());
}

double batch_reg_loss(std::span<const nn::Tensor> features) {
  double acc = 0.0;
  int64_t channels = 0;
  for (const auto& f : features) {
    if (f.size() == 0) throw std::invalid_argument("batch_reg_loss: empty feature");
    const int64_t n = int64_t(f.batch) * f.len;
    for (int c = 0; c < f.ch; ++c) {
      double mean = 0.0;
      for (int b = 0; b < f.batch; ++b) {
        const double* r = f.row(b, c);
        for (int t = 0; t < f.len; ++t) mean += r[t];
      }
      mean /= double(n);
      double var = 0.0;
      for (int b = 0; b < f.batch; ++b) {
        const double* r = f.row(b, c);
        for (int t = 0; t < f.len; ++t) var += (r[t] - mean) * (r[t] - mean);
      }
      var /= double(n);
      const double s = std::max(kBatchRegStdFloor, std::sqrt(var));
      acc += mean * mean + std::log(s) * std::log(s);
      ++channels;
    }
  }
  return channels ? acc / double(channels) : 0.0;
}

double root_alignment_loss(std::span<const Vec3> pred_root,
                           std::span<const Vec3> target_root) {
  if (pred_root.size() != target_root.size() || pred_root.empty())
    throw std::invalid_argument("root_alignment_loss: need matching keyframes");
  Vec3 pc = Vec3::Zero(), tc = Vec3::Zero();
  for (const auto& p : pred_root) pc += p;
  for (const auto& t : target_root) tc += t;
  pc /= double(pred_root.size());
  tc /= double(target_root.size());
  double acc = 0.0;
  for (size_t i = 0; i < pred_root.size(); ++i)
    acc += ((pred_root[i] - pc) - (target_root[i] - tc)).squaredNorm();
  return acc / double(pred_root.size());
}

double local_joint_loss(std::span<const std::vector<double>> pred,
                        std::span<const std::vector<double>> target,
                        std::span<const std::vector<uint8_t>> mask) {
  if (pred.size() != target.size() || pred.size() != mask.size())
    throw std::invalid_argument("local_joint_loss: ragged inputs");
  double acc = 0.0;
  int64_t count = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].size() != target[i].size() || pred[i].size() != mask[i].size())
      throw std::invalid_argument("local_joint_loss: dimension mismatch");
    for (size_t c = 0; c < pred[i].size(); ++c) {
      if (!mask[i][c]) continue;
      const double d = pred[i][c] - target[i][c];
      acc += d * d;
      ++count;
    }
  }
  return count ? acc / double(count) : 0.0;
}

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double e = a[i] - b[i];
    d += e * e;
  }
  return d;
}

}  // namespace

double dna_loss_1(std::span<const std::vector<double>> synthesized,
                  std::span<const std::vector<double>> representative) {
  if (representative.empty()) return 0.0;
  if (synthesized.empty()) throw std::invalid_argument("dna_loss_1: empty sequence");
  double acc = 0.0;
  for (const auto& rep : representative) {
    double best = 1e300;
    for (const auto& s : synthesized) best = std::min(best, sq_dist(s, rep));
    acc += best;
  }
  return acc / double(representative.size());
}

double dna_loss_2(std::span<const std::vector<double>> synthesized,
                  std::span<const std::vector<double>> representative,
                  std::span<const int> keyframe_indices, int interval_frames) {
  if (representative.empty()) return 0.0;
  const int n = int(synthesized.size());
  // Cut [0, N) at the keyframe indices: [0,phi_0), [phi_0,phi_1), ..., [last, N).
  std::vector<int> bounds = {0};
  for (int k : keyframe_indices)
    if (k > 0 && k < n) bounds.push_back(k);
  bounds.push_back(n);

  double acc = 0.0;
  int64_t collected = 0;
  for (size_t s = 0; s + 1 < bounds.size(); ++s) {
    const int len = bounds[s + 1] - bounds[s];
    const int quota = len / interval_frames;
    if (len < interval_frames || quota == 0) continue;
    std::vector<double> errors;
    errors.reserve(len);
    for (int t = bounds[s]; t < bounds[s + 1]; ++t) {
      double best = 1e300;
      for (const auto& rep : representative)
        best = std::min(best, sq_dist(synthesized[t], rep));
      errors.push_back(best);
    }
    std::nth_element(errors.begin(), errors.begin() + quota - 1, errors.end());
    for (int i = 0; i < quota; ++i) acc += errors[i];
    collected += quota;
  }
  return collected ? acc / double(collected) : 0.0;
}

PathDispResult path_displacement_loss(const nn::Tensor& pred_velocity,
                                      const nn::Tensor& true_velocity) {
  if (!pred_velocity.same_shape(true_velocity) || pred_velocity.ch != 2)
    throw std::invalid_argument("path_displacement_loss: need matching (B,2,T)");
  PathDispResult res;
  const int T = pred_velocity.len;
  double total = 0.0;
  for (int b = 0; b < pred_velocity.batch; ++b) {
    // Inclusive prefix sums of the per-frame velocity error.
    std::vector<double> ex(T + 1, 0.0), ez(T + 1, 0.0);
    for (int t = 0; t < T; ++t) {
      ex[t + 1] = ex[t] + pred_velocity.at(b, 0, t) - true_velocity.at(b, 0, t);
      ez[t + 1] = ez[t] + pred_velocity.at(b, 1, t) - true_velocity.at(b, 1, t);
    }
    double batch_acc = 0.0;
    for (int q = 0; q <= 7; ++q) {
      const int nwin = 1 << q;
      if (nwin >= T) {
        res.scales_skipped = true;
        continue;
      }
      double acc = 0.0;
      for (int t = 0; t + nwin <= T; ++t) {
        const double dx = ex[t + nwin] - ex[t];
        const double dz = ez[t + nwin] - ez[t];
        acc += dx * dx + dz * dz;
      }
      batch_acc += acc / double(T - nwin + 1);
    }
    total += batch_acc / 8.0;
  }
  res.loss = total / double(pred_velocity.batch);
  return res;
}

// --- tape versions ----------------------------------------------------------------

namespace tape {

int lsgan_d_loss(nn::Graph& g, int y_real, int y_fake) {
  const int lr = nn::mean_sq_dev(g, y_real, 1.0);
  const int lf = nn::mean_sq_dev(g, y_fake, -1.0);
  return nn::add_scaled(g, lr, 1.0, lf, 1.0);
}

int lsgan_g_loss(nn::Graph& g, int y_fake) {
  return nn::mean_sq_dev(g, y_fake, kLsganGeneratorTarget);
}

int batch_reg_term(nn::Graph& g, int features) {
  const nn::Tensor& X = g.val(features);
  const int64_t n = int64_t(X.batch) * X.len;
  std::vector<double> mean(X.ch, 0.0), stdev(X.ch, 0.0);
  double loss = 0.0;
  for (int c = 0; c < X.ch; ++c) {
    double m = 0.0;
    for (int b = 0; b < X.batch; ++b) {
      const double* r = X.row(b, c);
      for (int t = 0; t < X.len; ++t) m += r[t];
    }
    m /= double(n);
    double var = 0.0;
    for (int b = 0; b < X.batch; ++b) {
      const double* r = X.row(b, c);
      for (int t = 0; t < X.len; ++t) var += (r[t] - m) * (r[t] - m);
    }
    var /= double(n);
    const double s = std::sqrt(var);
    mean[c] = m;
    stdev[c] = s;
    const double sf = std::max(kBatchRegStdFloor, s);
    loss += m * m + std::log(sf) * std::log(sf);
  }
  return g.add(nn::Tensor::scalar(loss), {features},
               [features, mean, stdev, n](nn::Graph& gg, int self) {
                 const double gv = gg.grad(self).v[0];
                 const nn::Tensor& Xv = gg.val(features);
                 nn::Tensor& dX = gg.grad(features);
                 for (int c = 0; c < Xv.ch; ++c) {
                   const double m = mean[c];
                   const double s = stdev[c];
                   const bool floored = s <= kBatchRegStdFloor;
                   const double sf = std::max(kBatchRegStdFloor, s);
                   const double mg = 2.0 * m / double(n) * gv;
                   const double sg =
                       floored ? 0.0 : 2.0 * std::log(sf) / (sf * sf * double(n)) * gv;
                   for (int b = 0; b < Xv.batch; ++b) {
                     const double* xr = Xv.row(b, c);
                     double* dxr = dX.row(b, c);
                     for (int t = 0; t < Xv.len; ++t)
                       dxr[t] += mg + sg * (xr[t] - m);
                   }
                 }
               });
}

int root_alignment_loss(nn::Graph& g, int planar_pos, int height,
                        const std::vector<std::vector<int>>& cols,
                        const std::vector<std::vector<Vec3>>& targets) {
  const nn::Tensor& P = g.val(planar_pos);
  const nn::Tensor& H = g.val(height);
  if (P.ch != 2 || H.ch != 1 || P.batch != H.batch || P.len != H.len)
    throw std::invalid_argument("root_alignment_loss: shapes");
  const int B = P.batch;
  double loss = 0.0;
  auto residuals = std::make_shared<std::vector<std::vector<Vec3>>>(B);
  for (int b = 0; b < B; ++b) {
    const auto& kc = cols[b];
    const auto& tg = targets[b];
    if (kc.empty() || kc.size() != tg.size())
      throw std::invalid_argument("root_alignment_loss: keyframe mismatch");
    Vec3 pc = Vec3::Zero(), tc = Vec3::Zero();
    std::vector<Vec3> pred(kc.size());
    for (size_t i = 0; i < kc.size(); ++i) {
      pred[i] = {P.at(b, 0, kc[i]), H.at(b, 0, kc[i]), P.at(b, 1, kc[i])};
      pc += pred[i];
      tc += tg[i];
    }
    pc /= double(kc.size());
    tc /= double(kc.size());
    auto& res = (*residuals)[b];
    res.resize(kc.size());
    for (size_t i = 0; i < kc.size(); ++i) {
      res[i] = (pred[i] - pc) - (tg[i] - tc);
      loss += res[i].squaredNorm() / double(kc.size());
    }
  }
  loss /= double(B);
  return g.add(nn::Tensor::scalar(loss), {planar_pos, height},
               [planar_pos, height, cols, residuals](nn::Graph& gg, int self) {
                 const double gv = gg.grad(self).v[0];
                 nn::Tensor& dP = gg.grad(planar_pos);
                 nn::Tensor& dH = gg.grad(height);
                 const int B = gg.val(planar_pos).batch;
                 for (int b = 0; b < B; ++b) {
                   const auto& kc = cols[b];
                   const double f = 2.0 * gv / (double(kc.size()) * B);
                   for (size_t i = 0; i < kc.size(); ++i) {
                     const Vec3& r = (*residuals)[b][i];
                     dP.at(b, 0, kc[i]) += f * r.x();
                     dH.at(b, 0, kc[i]) += f * r.y();
                     dP.at(b, 1, kc[i]) += f * r.z();
                   }
                 }
               });
}

int masked_keyframe_mse(nn::Graph& g, int positions,
                        const std::vector<std::vector<int>>& cols,
                        const std::vector<std::vector<std::vector<double>>>& targets,
                        const std::vector<std::vector<std::vector<uint8_t>>>& masks) {
  const nn::Tensor& X = g.val(positions);
  int64_t count = 0;
  double acc = 0.0;
  for (int b = 0; b < X.batch; ++b)
    for (size_t i = 0; i < cols[b].size(); ++i)
      for (int c = 0; c < X.ch; ++c) {
        if (!masks[b][i][c]) continue;
        const double d = X.at(b, c, cols[b][i]) - targets[b][i][c];
        acc += d * d;
        ++count;
      }
  const double loss = count ? acc / double(count) : 0.0;
  return g.add(nn::Tensor::scalar(loss), {positions},
               [positions, cols, targets, masks, count](nn::Graph& gg, int self) {
                 if (!count) return;
                 const double gv = gg.grad(self).v[0];
                 const nn::Tensor& Xv = gg.val(positions);
                 nn::Tensor& dX = gg.grad(positions);
                 const double f = 2.0 * gv / double(count);
                 for (int b = 0; b < Xv.batch; ++b)
                   for (size_t i = 0; i < cols[b].size(); ++i)
                     for (int c = 0; c < Xv.ch; ++c) {
                       if (!masks[b][i][c]) continue;
                       dX.at(b, c, cols[b][i]) +=
                           f * (Xv.at(b, c, cols[b][i]) - targets[b][i][c]);
                     }
               });
}

int dna_loss_1(nn::Graph& g, int lambda_positions,
               const std::vector<std::vector<std::vector<double>>>& representative) {
  const nn::Tensor& X = g.val(lambda_positions);
  const int B = X.batch;
  double loss = 0.0;
  auto argmins = std::make_shared<std::vector<std::vector<int>>>(B);
  for (int b = 0; b < B; ++b) {
    const auto& reps = representative[b];
    if (reps.empty()) continue;
    auto& am = (*argmins)[b];
    am.resize(reps.size());
    double acc = 0.0;
    for (size_t j = 0; j < reps.size(); ++j) {
      double best = 1e300;
      int best_t = 0;
      for (int t = 0; t < X.len; ++t) {
        double d = 0.0;
        for (int c = 0; c < X.ch; ++c) {
          const double e = X.at(b, c, t) - reps[j][c];
          d += e * e;
        }
        if (d < best) {
          best = d;
          best_t = t;
        }
      }
      am[j] = best_t;
      acc += best;
    }
    loss += acc / double(reps.size());
  }
  loss /= double(B);
  return g.add(nn::Tensor::scalar(loss), {lambda_positions},
               [lambda_positions, representative, argmins](nn::Graph& gg, int self) {
                 const double gv = gg.grad(self).v[0];
                 const nn::Tensor& Xv = gg.val(lambda_positions);
                 nn::Tensor& dX = gg.grad(lambda_positions);
                 for (int b = 0; b < Xv.batch; ++b) {
                   const auto& reps = representative[b];
                   if (reps.empty()) continue;
                   const double f = 2.0 * gv / (double(reps.size()) * Xv.batch);
                   for (size_t j = 0; j < reps.size(); ++j) {
                     const int t = (*argmins)[b][j];
                     for (int c = 0; c < Xv.ch; ++c)
                       dX.at(b, c, t) += f * (Xv.at(b, c, t) - reps[j][c]);
                   }
                 }
               });
}

int dna_loss_2(nn::Graph& g, int lambda_positions,
               const std::vector<std::vector<std::vector<double>>>& representative,
               const std::vector<std::vector<int>>& keyframe_indices,
               int interval_frames) {
  const nn::Tensor& X = g.val(lambda_positions);
  const int B = X.batch;
  double loss = 0.0;
  // Selected (frame, rep) pairs and the per-batch normalizer.
  auto picks = std::make_shared<std::vector<std::vector<std::pair<int, int>>>>(B);
  auto quotas = std::make_shared<std::vector<int64_t>>(B, 0);
  for (int b = 0; b < B; ++b) {
    const auto& reps = representative[b];
    if (reps.empty()) continue;
    std::vector<int> bounds = {0};
    for (int k : keyframe_indices[b])
      if (k > 0 && k < X.len) bounds.push_back(k);
    bounds.push_back(X.len);

    double acc = 0.0;
    int64_t collected = 0;
    for (size_t s = 0; s + 1 < bounds.size(); ++s) {
      const int len = bounds[s + 1] - bounds[s];
      const int quota = len / interval_frames;
      if (len < interval_frames || quota == 0) continue;
      std::vector<std::tuple<double, int, int>> err;  // (e, frame, rep)
      err.reserve(len);
      for (int t = bounds[s]; t < bounds[s + 1]; ++t) {
        double best = 1e300;
        int best_j = 0;
        for (size_t j = 0; j < reps.size(); ++j) {
          double d = 0.0;
          for (int c = 0; c < X.ch; ++c) {
            const double e = X.at(b, c, t) - reps[j][c];
            d += e * e;
          }
          if (d < best) {
            best = d;
            best_j = int(j);
          }
        }
        err.emplace_back(best, t, best_j);
      }
      std::nth_element(err.begin(), err.begin() + quota - 1, err.end());
      for (int i = 0; i < quota; ++i) {
        acc += std::get<0>(err[i]);
        (*picks)[b].emplace_back(std::get<1>(err[i]), std::get<2>(err[i]));
      }
      collected += quota;
    }
    (*quotas)[b] = collected;
    if (collected) loss += acc / double(collected);
  }
  loss /= double(B);
  return g.add(nn::Tensor::scalar(loss), {lambda_positions},
               [lambda_positions, representative, picks, quotas](nn::Graph& gg,
                                                                 int self) {
                 const double gv = gg.grad(self).v[0];
                 const nn::Tensor& Xv = gg.val(lambda_positions);
                 nn::Tensor& dX = gg.grad(lambda_positions);
                 for (int b = 0; b < Xv.batch; ++b) {
                   if (!(*quotas)[b]) continue;
                   const double f = 2.0 * gv / (double((*quotas)[b]) * Xv.batch);
                   for (const auto& [t, j] : (*picks)[b])
                     for (int c = 0; c < Xv.ch; ++c)
                       dX.at(b, c, t) +=
                           f * (Xv.at(b, c, t) - representative[b][j][c]);
                 }
               });
}

int path_displacement_loss(nn::Graph& g, int pred_velocity,
                           std::shared_ptr<const nn::Tensor> true_velocity) {
  const nn::Tensor& V = g.val(pred_velocity);
  if (!V.same_shape(*true_velocity))
    throw std::invalid_argument("path_displacement_loss: shape mismatch");
  const PathDispResult plain = tween::path_displacement_loss(V, *true_velocity);
  return g.add(nn::Tensor::scalar(plain.loss), {pred_velocity},
               [pred_velocity, true_velocity](nn::Graph& gg, int self) {
                 const double gv = gg.grad(self).v[0];
                 const nn::Tensor& Vv = gg.val(pred_velocity);
                 nn::Tensor& dV = gg.grad(pred_velocity);
                 const int T = Vv.len;
                 const int B = Vv.batch;
                 for (int b = 0; b < B; ++b) {
                   std::vector<std::array<double, 2>> pre(T + 1, {0.0, 0.0});
                   for (int t = 0; t < T; ++t)
                     for (int c = 0; c < 2; ++c)
                       pre[t + 1][c] = pre[t][c] + Vv.at(b, c, t) -
                                       true_velocity->at(b, c, t);
                   for (int q = 0; q <= 7; ++q) {
                     const int nwin = 1 << q;
                     if (nwin >= T) continue;
                     const int nt = T - nwin + 1;
                     const double f = 2.0 * gv / (8.0 * B * nt);
                     // Window-sum the per-start deltas back onto frames.
                     for (int c = 0; c < 2; ++c) {
                       std::vector<double> cum(nt + 1, 0.0);
                       for (int t = 0; t < nt; ++t)
                         cum[t + 1] =
                             cum[t] + f * (pre[t + nwin][c] - pre[t][c]);
                       for (int i = 0; i < T; ++i) {
                         const int lo = std::max(0, i - nwin + 1);
                         const int hi = std::min(i, nt - 1);
                         if (lo > hi) continue;
                         dV.at(b, c, i) += cum[hi + 1] - cum[lo];
                       }
                     }
                   }
                 }
               });
}

}  // namespace tape

}  // namespace tween
