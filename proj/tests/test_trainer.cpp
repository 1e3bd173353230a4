#include <doctest.h>

#include <cmath>
#include <sstream>

#include "support.hpp"
#include "tween/synthetic.hpp"
#include "tween/trainer.hpp"

using namespace tween;

namespace {

TrainConfig micro_config() {
  TrainConfig cfg;
  cfg.lr = 1e-4;
  cfg.gen_batch = 2;
  cfg.gen_frames = 64;
  cfg.disc_batch = 4;
  cfg.disc_min_len = 64;
  cfg.disc_max_len = 64;
  cfg.width_scale = 0.02;
  cfg.iterations = 4;
  cfg.seed = 7;
  cfg.path_frames = 64;
  cfg.path_batch = 2;
  cfg.path_iterations = 40;
  cfg.path_lr = 1e-3;
  cfg.validate_every = 20;
  return cfg;
}

Corpus micro_corpus(int clips = 3, int frames = 700) {
  const Skeleton sk = compact_skeleton();
  Corpus corpus;
  corpus.skeleton = sk;
  corpus.train = make_synthetic_clips(sk, clips, frames, 400, 2);
  return corpus;
}

std::vector<float> all_params(const TrainState& st) {
  std::vector<float> out, tmp;
  for (const nn::NetWeights* w : {&st.gen.encoder, &st.gen.dna_encoder,
                                  &st.gen.decoder, &st.disc, &st.path}) {
    w->flatten(tmp);
    out.insert(out.end(), tmp.begin(), tmp.end());
  }
  return out;
}

}  // namespace

TEST_CASE("path-loss ramp schedule") {
  LossWeights w;
  CHECK(w.path_weight(0) == 10.0);
  CHECK(w.path_weight(999) == 10.0);
  CHECK(w.path_weight(1000) == 11.0);
  CHECK(w.path_weight(25000) == 35.0);
  CHECK(w.path_weight(70000) == 80.0);
  CHECK(w.path_weight(1000000) == 80.0);
}

TEST_CASE("train config json round trip and validation") {
  TrainConfig cfg = micro_config();
  cfg.weights.dna1 = 12.5;
  const TrainConfig back = TrainConfig::from_json(cfg.to_json());
  CHECK(back.lr == cfg.lr);
  CHECK(back.gen_frames == cfg.gen_frames);
  CHECK(back.weights.dna1 == 12.5);
  CHECK(back.hash() == cfg.hash());

  TrainConfig bad = cfg;
  bad.gen_frames = 100;  // not a multiple of 64
  CHECK_THROWS(bad.validate());
}

TEST_CASE("rmsprop step matches the update rule and stays on the f32 grid") {
  RmsProp opt{0.01, 0.99, 1e-8, {}};
  std::vector<double> p = {1.0};
  std::vector<double> g = {0.5};
  opt.step(p, g);
  const double v = 0.01 * 0.25;
  const double expect = double(float(1.0 - 0.01 * 0.5 / (std::sqrt(v) + 1e-8)));
  CHECK(p[0] == expect);
  CHECK(p[0] == double(float(p[0])));
  CHECK(opt.sq[0] == double(float(v)));
}

TEST_CASE("gan stage refuses to start without a frozen path predictor") {
  const Corpus corpus = micro_corpus();
  const TrainConfig cfg = micro_config();
  nn::NetWeights empty_path;
  empty_path.spec = nn::make_path_predictor_spec(corpus.skeleton.joint_count(),
                                                 cfg.width_scale);
  CHECK_THROWS_AS(train_inbetweener(corpus, empty_path, cfg, nullptr),
                  std::logic_error);
}

TEST_CASE("path predictor training descends on a micro corpus") {
  Corpus corpus = micro_corpus(2, 400);
  TrainConfig cfg = micro_config();
  cfg.path_iterations = 120;
  std::ostringstream metrics;
  const auto result = train_path_predictor(corpus, cfg, &metrics);
  CHECK(!result.aborted_nan);
  CHECK(result.iterations_run == 120);

  // Smoothed descent: last-quarter mean loss below first-quarter mean.
  std::istringstream lines(metrics.str());
  std::string line;
  std::vector<double> losses;
  while (std::getline(lines, line)) {
    const auto at = line.find("loss=");
    if (line.rfind("path ", 0) == 0 && at != std::string::npos)
      losses.push_back(std::stod(line.substr(at + 5)));
  }
  REQUIRE(losses.size() == 120);
  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 30; ++i) {
    head += losses[size_t(i)] / 30.0;
    tail += losses[losses.size() - 1 - size_t(i)] / 30.0;
  }
  CHECK(tail < head);
}

TEST_CASE("one gan iteration runs and substitutes keyframe rows byte-exactly") {
  Corpus corpus = micro_corpus();
  TrainConfig cfg = micro_config();
  cfg.iterations = 2;

  nn::NetWeights path = init_path_predictor(corpus.skeleton, cfg, 5);

  int checked = 0;
  TrainHooks hooks;
  hooks.on_disc_input = [&](const nn::Tensor& d_in,
                            const std::vector<std::vector<int>>& cols,
                            const std::vector<std::vector<std::vector<double>>>& tg) {
    for (size_t e = 0; e < cols.size(); ++e)
      for (size_t i = 0; i < cols[e].size(); ++i)
        for (int c = 0; c < d_in.ch; ++c) {
          // Byte equality of substituted rows with the user poses.
          CHECK(d_in.at(int(e), c, cols[e][i]) == tg[e][i][size_t(c)]);
          ++checked;
        }
  };

  std::ostringstream metrics;
  const auto result = train_inbetweener(corpus, path, cfg, &metrics, hooks);
  CHECK(!result.aborted_nan);
  CHECK(result.state.iteration == 2);
  CHECK(checked > 0);

  // The frozen path predictor is bit-identical after the GAN stage.
  std::vector<float> before, after;
  path.flatten(before);
  result.state.path.flatten(after);
  CHECK(before == after);
}

TEST_CASE("training metrics are reproducible for a fixed seed") {
  Corpus corpus = micro_corpus();
  TrainConfig cfg = micro_config();
  cfg.iterations = 3;
  nn::NetWeights path = init_path_predictor(corpus.skeleton, cfg, 6);

  std::ostringstream m1, m2;
  train_inbetweener(corpus, path, cfg, &m1);
  train_inbetweener(corpus, path, cfg, &m2);
  CHECK(m1.str() == m2.str());
}

TEST_CASE("checkpoint save/load round trips bit-exactly and resumes identically") {
  Corpus corpus = micro_corpus();
  TrainConfig cfg = micro_config();
  nn::NetWeights path = init_path_predictor(corpus.skeleton, cfg, 8);

  // Straight run: 6 iterations.
  TrainConfig cfg6 = cfg;
  cfg6.iterations = 6;
  std::ostringstream m_straight;
  const auto straight = train_inbetweener(corpus, path, cfg6, &m_straight);

  // Interrupted run: 3 iterations, checkpoint, reload, resume to 6.
  TrainConfig cfg3 = cfg;
  cfg3.iterations = 3;
  std::ostringstream m_a;
  auto first = train_inbetweener(corpus, path, cfg3, &m_a);
  std::stringstream buf;
  save_train_state(buf, first.state);
  TrainState loaded = load_train_state(buf, corpus.skeleton, cfg6);
  CHECK(loaded.iteration == 3);
  CHECK(all_params(loaded) == all_params(first.state));

  // Hash mismatch: resuming under a different config is refused.
  TrainConfig other = cfg6;
  other.lr *= 2.0;
  std::stringstream buf2;
  save_train_state(buf2, first.state);
  TrainState wrong = load_train_state(buf2, corpus.skeleton, other);
  CHECK_THROWS_WITH_AS(
      train_inbetweener(corpus, path, other, nullptr, {}, wrong),
      doctest::Contains("mismatch"), std::runtime_error);

  std::ostringstream m_b;
  const auto resumed = train_inbetweener(corpus, path, cfg6, &m_b, {}, loaded);
  CHECK(resumed.state.iteration == 6);
  CHECK(all_params(resumed.state) == all_params(straight.state));

  // The resumed tail of the metrics log equals the straight run's tail.
  std::string straight_tail;
  {
    std::istringstream in(m_straight.str());
    std::string line;
    int k = 0;
    while (std::getline(in, line))
      if (++k > 3) straight_tail += line + "\n";
  }
  CHECK(m_b.str() == straight_tail);
}
