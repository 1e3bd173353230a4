#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "tween/bvh.hpp"
#include "tween/synth.hpp"
#include "tween/synthetic.hpp"
#include "tween/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tween;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

TrainConfig load_config(const std::string& path, uint64_t seed_override,
                        bool has_seed) {
  TrainConfig cfg = path.empty() ? TrainConfig{} : TrainConfig::from_json_file(path);
  if (has_seed) cfg.seed = seed_override;
  cfg.validate();
  return cfg;
}

std::ofstream open_out(const std::string& path, bool binary = true) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

KeyframeSet keys_from_json_file(const std::string& path, int pose_dim) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open keyframe file " + path);
  json j;
  in >> j;
  KeyframeSet keys;
  for (const auto& k : j.at("keyframes")) {
    keys.indices.push_back(k.at("frame").get<int>());
    auto pose = k.at("pose").get<std::vector<double>>();
    if (int(pose.size()) != pose_dim)
      throw std::runtime_error("keyframe pose must have " + std::to_string(pose_dim) +
                               " values");
    std::vector<uint8_t> mask(size_t(pose_dim), 1);
    if (k.contains("mask")) {
      const auto m = k.at("mask").get<std::vector<int>>();
      if (int(m.size()) != pose_dim)
        throw std::runtime_error("keyframe mask must have " + std::to_string(pose_dim) +
                                 " values");
      for (size_t i = 0; i < m.size(); ++i) mask[i] = m[i] ? 1 : 0;
    }
    keys.poses.push_back(std::move(pose));
    keys.mask.push_back(std::move(mask));
  }
  return keys;
}

KeyframeSet keys_from_clip(const MotionClip& clip, const std::vector<int>& frames) {
  std::vector<std::vector<double>> poses;
  for (int f : frames) {
    if (f < 0 || f >= clip.length())
      throw std::runtime_error("keyframe frame out of clip range");
    poses.push_back(clip.pose_vector(f));
  }
  return KeyframeSet::full_pose(frames, std::move(poses));
}

int run_prepare(const std::string& input, const std::string& out_path,
                const std::string& limits_path) {
  const JointLimitTable table =
      limits_path.empty() ? builtin_limit_table() : JointLimitTable::load_file(limits_path);
  std::vector<MotionClip> kept;
  Skeleton skeleton;
  bool have_skeleton = false;
  int parsed = 0, dropped_ground = 0;
  for (const auto& entry : fs::recursive_directory_iterator(input)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".bvh") continue;
    auto res = parse_bvh_file(entry.path().string(), table);
    if (!have_skeleton) {
      skeleton = res.skeleton;
      have_skeleton = true;
    }
    res.clip.source_id = entry.path().filename().string();
    // class = top-level folder under the input root
    const fs::path rel = fs::relative(entry.path(), input);
    res.clip.class_label = rel.has_parent_path() ? rel.begin()->string() : "unlabeled";
    ++parsed;
    if (!filter_ground_plane(res.clip).keep) {
      ++dropped_ground;
      continue;
    }
    for (auto& part : filter_noise(res.clip)) kept.push_back(std::move(part));
  }
  if (!have_skeleton) throw std::runtime_error("no .bvh files under " + input);
  auto out = open_out(out_path);
  save_clip_store(out, skeleton, kept);
  std::cout << "parsed " << parsed << " files, dropped " << dropped_ground
            << " off-plane, stored " << kept.size() << " clips -> " << out_path
            << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-stage generative motion inbetweening"};
  app.require_subcommand(1);

  std::string config_path, store_path, out_path, weights_path, metrics_path;
  uint64_t seed = 0;
  bool has_seed = false;
  app.add_option("--seed", seed, "global random seed")->each([&](const std::string&) {
    has_seed = true;
  });

  // prepare-data
  auto* prep = app.add_subcommand("prepare-data", "parse and filter a BVH tree");
  std::string prep_input, prep_limits;
  prep->add_option("--input", prep_input, "BVH directory (class = top folder)")
      ->required();
  prep->add_option("--out", out_path, "output clip store")->required();
  prep->add_option("--limits", prep_limits, "joint limit table (default: builtin)");

  // train-path
  auto* tpath = app.add_subcommand("train-path", "pretrain the global path predictor");
  tpath->add_option("--store", store_path, "clip store")->required();
  tpath->add_option("--config", config_path, "train config json");
  tpath->add_option("--out", out_path, "output path-predictor checkpoint")->required();
  tpath->add_option("--metrics", metrics_path, "metrics log file");

  // train-tween
  auto* ttween = app.add_subcommand("train-tween", "adversarial inbetweener training");
  std::string resume_path;
  ttween->add_option("--store", store_path, "clip store")->required();
  ttween->add_option("--config", config_path, "train config json");
  ttween->add_option("--path-weights", weights_path, "frozen path predictor")
      ->required();
  ttween->add_option("--out", out_path, "output train-state checkpoint")->required();
  ttween->add_option("--resume", resume_path, "resume from checkpoint");
  ttween->add_option("--metrics", metrics_path, "metrics log file");

  // synthesize
  auto* synth = app.add_subcommand("synthesize", "generate motion between keyframes");
  std::string keys_path, format = "bvh", dna_spec;
  std::vector<int> key_frames;
  int length = 512, keys_clip = 0;
  synth->add_option("--weights", weights_path, "train-state checkpoint")->required();
  synth->add_option("--config", config_path, "train config json (must match training)");
  synth->add_option("--store", store_path, "clip store (skeleton + pose source)");
  synth->add_option("--keys", keys_path, "keyframes json");
  synth->add_option("--keys-clip", keys_clip, "store clip index for --keys-frames");
  synth->add_option("--keys-frames", key_frames, "sample keyframes from the store clip");
  synth->add_option("--dna", dna_spec, "DNA source: <clip-index>:<count> from --store");
  synth->add_option("--length", length, "output frames (multiple of 64)");
  synth->add_option("--out", out_path, "output file")->required();
  synth->add_option("--format", format, "bvh | store")
      ->check(CLI::IsMember({"bvh", "store"}));
  bool no_post = false;
  synth->add_flag("--no-postprocess", no_post, "skip exact keyframe matching");

  // eval
  auto* eval = app.add_subcommand("eval", "alignment and DNA errors of a clip");
  std::string eval_clip_path;
  eval->add_option("--store", store_path, "clip store with the clip")->required();
  eval->add_option("--clip", keys_clip, "clip index");
  eval->add_option("--keys", keys_path, "keyframes json")->required();
  eval->add_option("--dna", dna_spec, "DNA source <clip-index>:<count>");
  (void)eval_clip_path;

  // bench
  auto* bench = app.add_subcommand("bench", "timing harness over sequence lengths");
  std::vector<int> lengths = {512, 1024, 2048, 4096};
  bench->add_option("--lengths", lengths, "sequence lengths");
  bench->add_option("--config", config_path, "train config json (width scale)");
  bench->add_option("--weights", weights_path, "train-state checkpoint (optional)");
  bench->add_option("--out", out_path, "also append the table to this file");

  // audit-limits
  auto* audit = app.add_subcommand("audit-limits", "gimbal-safety audit of a limit table");
  std::string audit_limits;
  audit->add_option("--limits", audit_limits, "table path (default: builtin)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*prep) return run_prepare(prep_input, out_path, prep_limits);

    if (*tpath) {
      const TrainConfig cfg = load_config(config_path, seed, has_seed);
      const ClipStore store = load_clip_store_file(store_path);
      const Corpus corpus = split_corpus(store.skeleton, store.clips, cfg.seed);
      std::ofstream metrics;
      if (!metrics_path.empty()) metrics = open_out(metrics_path, false);
      const auto result =
          train_path_predictor(corpus, cfg, metrics_path.empty() ? nullptr : &metrics);
      if (result.aborted_nan) {
        std::cerr << "training diverged (NaN); kept last good checkpoint\n";
      }
      auto out = open_out(out_path);
      nn::save_net(out, result.weights, "path_predictor");
      std::cout << "path predictor: vel " << result.best_velocity_err_cm
                << " cm/frame, disp128 " << result.best_disp128_err_cm << " cm -> "
                << out_path << "\n";
      return result.aborted_nan ? kExitNumeric : kExitOk;
    }

    if (*ttween) {
      const TrainConfig cfg = load_config(config_path, seed, has_seed);
      const ClipStore store = load_clip_store_file(store_path);
      const Corpus corpus = split_corpus(store.skeleton, store.clips, cfg.seed);
      nn::NetWeights path = init_path_predictor(store.skeleton, cfg, 0);
      {
        std::ifstream in(weights_path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open " + weights_path);
        nn::load_net(in, path, "path_predictor");
      }
      std::optional<TrainState> resume;
      if (!resume_path.empty())
        resume = load_train_state_file(resume_path, store.skeleton, cfg);
      std::ofstream metrics;
      if (!metrics_path.empty()) metrics = open_out(metrics_path, false);
      const auto result =
          train_inbetweener(corpus, path, cfg, metrics_path.empty() ? nullptr : &metrics,
                            {}, std::move(resume));
      save_train_state_file(out_path, result.state);
      std::cout << "trained to iteration " << result.state.iteration << " -> "
                << out_path << "\n";
      return result.aborted_nan ? kExitNumeric : kExitOk;
    }

    if (*synth) {
      const TrainConfig cfg = load_config(config_path, seed, has_seed);
      Skeleton skeleton = default_skeleton();
      ClipStore store;
      if (!store_path.empty()) {
        store = load_clip_store_file(store_path);
        skeleton = store.skeleton;
      }
      const TrainState state = load_train_state_file(weights_path, skeleton, cfg);

      SynthesisRequest req;
      req.n_frames = length;
      req.input_scale = cfg.input_scale;
      if (!keys_path.empty()) {
        req.keys = keys_from_json_file(keys_path, skeleton.pose_dim());
      } else if (!key_frames.empty()) {
        if (store.clips.empty())
          throw std::runtime_error("--keys-frames needs --store");
        req.keys = keys_from_clip(store.clips.at(size_t(keys_clip)), key_frames);
      } else {
        throw std::runtime_error("need --keys or --keys-frames");
      }
      if (!dna_spec.empty()) {
        const auto colon = dna_spec.find(':');
        const int clip_idx = std::stoi(dna_spec.substr(0, colon));
        const int count = colon == std::string::npos
                              ? 1
                              : std::stoi(dna_spec.substr(colon + 1));
        if (store.clips.empty()) throw std::runtime_error("--dna needs --store");
        req.dna_poses =
            extract_representative_frames(store.clips.at(size_t(clip_idx)), count).poses;
      }

      auto result = synthesize(req, skeleton, state.gen, state.path);
      if (result.gap_warning)
        std::cerr << "warning: keyframe gap exceeds " << kMaxKeyframeGap
                  << " frames; quality degrades beyond the receptive field\n";
      if (!no_post) enforce_keyframes(result.clip, req.keys);
      const auto err = eval_alignment(result.clip, req.keys);
      std::cout << "keyframe alignment: root " << err.root_cm << " cm, local "
                << err.local_cm << " cm\n";
      if (format == "bvh") {
        export_bvh_file(out_path, result.clip, skeleton);
      } else {
        save_clip_store_file(out_path, skeleton, {result.clip});
      }
      std::cout << "wrote " << result.clip.length() << " frames -> " << out_path
                << "\n";
      return kExitOk;
    }

    if (*eval) {
      const ClipStore store = load_clip_store_file(store_path);
      const MotionClip& clip = store.clips.at(size_t(keys_clip));
      const KeyframeSet keys =
          keys_from_json_file(keys_path, store.skeleton.pose_dim());
      const auto err = eval_alignment(clip, keys);
      std::cout << "root_cm=" << err.root_cm << " local_cm=" << err.local_cm << "\n";
      if (!dna_spec.empty()) {
        const auto colon = dna_spec.find(':');
        const int clip_idx = std::stoi(dna_spec.substr(0, colon));
        const int count =
            colon == std::string::npos ? 1 : std::stoi(dna_spec.substr(colon + 1));
        const auto reps =
            extract_representative_frames(store.clips.at(size_t(clip_idx)), count);
        const auto dna = eval_dna(clip, reps.poses, keys.indices);
        std::cout << "dna1_cm=" << dna.dna1_cm << " dna2_cm=" << dna.dna2_cm << "\n";
      }
      return kExitOk;
    }

    if (*bench) {
      const TrainConfig cfg = load_config(config_path, seed, has_seed);
      Skeleton skeleton = default_skeleton();
      GeneratorWeights gen;
      nn::NetWeights path;
      if (!weights_path.empty()) {
        const TrainState state = load_train_state_file(weights_path, skeleton, cfg);
        gen = state.gen;
        path = state.path;
      } else {
        gen = init_generator(skeleton, cfg, has_seed ? seed : 1);
        path = init_path_predictor(skeleton, cfg, has_seed ? seed : 1);
      }
      const auto table =
          benchmark_timing(skeleton, gen, path, lengths, has_seed ? seed : 1);
      print_timing(std::cout, table);
      if (!out_path.empty()) {
        auto out = open_out(out_path, false);
        print_timing(out, table);
      }
      return kExitOk;
    }

    if (*audit) {
      const JointLimitTable table = audit_limits.empty()
                                        ? builtin_limit_table()
                                        : JointLimitTable::load_file(audit_limits);
      const auto report = audit_gimbal_safety(table);
      std::cout << "checked " << report.joints_checked << " joints, "
                << report.violations.size() << " violation(s)\n";
      for (const auto& v : report.violations)
        std::cout << "  " << v.name << ": second axis " << v.second_axis << " range ("
                  << v.min_deg << ", " << v.max_deg << ") escapes (-90, 90)\n";
      return report.all_safe() ? kExitOk : kExitData;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.what() == std::string("backward: root must be scalar") ? kExitNumeric
                                                                    : kExitData;
  } catch (const std::logic_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
