#include <benchmark/benchmark.h>

#include "tween/keyframe.hpp"
#include "tween/network.hpp"
#include "tween/synth.hpp"
#include "tween/synthetic.hpp"

using namespace tween;

namespace {

nn::Tensor random_tensor(int b, int c, int t, uint64_t seed) {
  Rng rng(seed);
  nn::Tensor x(b, c, t);
  for (auto& v : x.v) v = rng.uniform(-1.0, 1.0);
  return x;
}

void BM_Conv1dForward(benchmark::State& state) {
  const int ch = int(state.range(0));
  nn::NetWeights w;
  w.spec = {"bench", {{nn::LayerKind::ResConv, ch, ch, 4, 2, 1, 0.5}}};
  Rng rng(1);
  w.init(rng);
  const nn::Tensor x = random_tensor(1, ch, 1024, 2);
  for (auto _ : state) {
    nn::Graph g;
    auto nodes = nn::push_weights(g, w, false);
    const int y = nn::residual_block_forward(g, g.leaf(x, false),
                                             w.spec.layers[0], nodes[0]);
    benchmark::DoNotOptimize(g.val(y).v.data());
  }
}
BENCHMARK(BM_Conv1dForward)->Arg(64)->Arg(128)->Arg(256);

void BM_RcfkDecodeFrame(benchmark::State& state) {
  const Skeleton sk = default_skeleton();
  Rng rng(3);
  std::vector<double> raw(size_t(sk.raw_dim()));
  for (auto& v : raw) v = rng.uniform(-1.0, 1.0);
  raw[0] += 2.0;
  raw[4] += 2.0;
  std::vector<double> out(size_t(sk.local_dim()));
  for (auto _ : state) {
    rcfk_frame_forward(raw, sk, true, nullptr, out);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_RcfkDecodeFrame);

void BM_DenseInput(benchmark::State& state) {
  const int n = int(state.range(0));
  const int d = 171;
  std::vector<int> idx = {3, n / 3, n / 2, 3 * n / 4, n - 5};
  std::vector<std::vector<double>> poses;
  for (size_t i = 0; i < idx.size(); ++i)
    poses.push_back(std::vector<double>(size_t(d), double(i)));
  const KeyframeSet keys = KeyframeSet::full_pose(idx, poses);
  for (auto _ : state) {
    const auto c = build_dense_input(keys, n, d);
    benchmark::DoNotOptimize(c.values.v.data());
  }
}
BENCHMARK(BM_DenseInput)->Arg(512)->Arg(2048);

void BM_EnforceKeyframes(benchmark::State& state) {
  const Skeleton sk = compact_skeleton();
  MotionClip clip = make_synthetic_clip(sk, 512, 4);
  std::vector<int> idx = {50, 200, 400};
  std::vector<std::vector<double>> poses;
  for (int i : idx) {
    poses.push_back(clip.pose_vector(i));
    for (auto& v : poses.back()) v += 0.5;
  }
  const KeyframeSet keys = KeyframeSet::full_pose(idx, poses);
  for (auto _ : state) {
    MotionClip work = clip;
    enforce_keyframes(work, keys);
    benchmark::DoNotOptimize(work.root_positions.data());
  }
}
BENCHMARK(BM_EnforceKeyframes);

}  // namespace

BENCHMARK_MAIN();
