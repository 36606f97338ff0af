// panoscan: command-line driver for generation, rendering, assessment,
// training, metrics and synthetic data.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "panoscan/assessor.hpp"
#include "panoscan/config.hpp"
#include "panoscan/errors.hpp"
#include "panoscan/metrics.hpp"
#include "panoscan/renderer.hpp"
#include "panoscan/scanpath_io.hpp"
#include "panoscan/synthetic.hpp"
#include "panoscan/training.hpp"

namespace fs = std::filesystem;
using namespace panoscan;
using nlohmann::ordered_json;

namespace {

enum Exit : int {
  kOk = 0,
  kInternal = 1,
  kBadConfig = 2,
  kMissingCheckpoint = 3,
  kBadInput = 4,
  kDiverged = 5,
  kDegenerate = 6,
  kWriteFailed = 7,
};

constexpr const char* kExitHelp =
    "Exit status:\n"
    "  0  success\n"
    "  1  internal error\n"
    "  2  invalid configuration or usage\n"
    "  3  missing or unreadable checkpoint\n"
    "  4  unreadable input (frames, video, scanpath or dataset files)\n"
    "  5  training diverged (non-finite loss)\n"
    "  6  metric undefined on degenerate input\n"
    "  7  output could not be written\n";

struct ExitError {
  int code;
  std::string message;
};

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  bool verbose = false;
};

// Runs `fn`, turning library errors into the given exit class.
template <class F>
auto guard(int code, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const DivergenceError&) {
    throw;
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ExitError{code, e.what()};
  } catch (const std::ios_base::failure& e) {
    throw ExitError{code, e.what()};
  } catch (const fs::filesystem_error& e) {
    throw ExitError{code, e.what()};
  }
}

RunConfig load_run_config(const Globals& g) {
  RunConfig cfg = g.config_path.empty() ? parse_config(nlohmann::json::object()) : load_config(g.config_path);
  if (g.seed) cfg.seed = *g.seed;
  if (g.threads < 1) throw ConfigError("--threads must be at least 1");
  return cfg;
}

GeneratorParams load_generator(const fs::path& path) {
  if (!fs::exists(path)) throw ExitError{kMissingCheckpoint, "generator checkpoint not found: " + path.string()};
  return guard(kMissingCheckpoint, [&] { return load_checkpoint(path); });
}

ToyAssessorParams load_toy_assessor(const fs::path& path) {
  if (!fs::exists(path)) throw ExitError{kMissingCheckpoint, "assessor checkpoint not found: " + path.string()};
  return guard(kMissingCheckpoint, [&] { return load_assessor(path); });
}

void write_text(const fs::path& path, const std::string& text) {
  guard(kWriteFailed, [&] {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    out.flush();
    if (!out) throw IoError("write failed: " + path.string());
  });
}

void log_epochs(const Globals& g, std::span<const EpochLog> log) {
  if (!g.verbose) return;
  for (const auto& l : log) {
    std::fprintf(stderr, "stage %d epoch %d loss %.6f val %.6f grad %.4g\n", l.stage, l.epoch, l.train_loss,
                 l.val_metric, l.grad_norm);
  }
}

// ---------------------------------------------------------------- commands

int cmd_generate(const Globals& g, const std::string& out, const std::string& checkpoint) {
  const RunConfig cfg = load_run_config(g);
  const GeneratorParams params = load_generator(checkpoint.empty() ? cfg.generation.checkpoint : checkpoint);
  const GeneratedBatch batch = generate_batch(params, cfg.generation_config(), g.threads);
  guard(kWriteFailed, [&] { write_scanpaths(batch.paths, out); });
  ordered_json summary{{"n_paths", batch.paths.size()},
                       {"length", batch.paths.empty() ? 0 : batch.paths.front().points.size()},
                       {"clamp_count", batch.clamp_count}};
  std::cout << summary.dump() << '\n';
  return kOk;
}

int cmd_render(const Globals& g, const std::string& scanpaths, const std::string& frames, const std::string& out) {
  const RunConfig cfg = load_run_config(g);
  const auto paths = guard(kBadInput, [&] { return read_scanpaths(scanpaths); });
  const Video video = guard(kBadInput, [&] { return load_video(frames); });
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const ViewportSequence seq = render_sequence(video, paths[i], cfg.renderer.sequence_length, cfg.render_spec());
    const fs::path dir = fs::path(out) / ("path_" + std::to_string(i));
    guard(kWriteFailed, [&] {
      fs::create_directories(dir);
      for (std::size_t k = 0; k < seq.frames.size(); ++k) write_ppm(seq.frames[k], dir / frame_filename(static_cast<int>(k) + 1));
    });
    if (g.verbose) std::fprintf(stderr, "path %zu: %zu viewports\n", i, seq.frames.size());
  }
  return kOk;
}

int cmd_assess(const Globals& g, const std::string& video_path, const std::string& out) {
  const RunConfig cfg = load_run_config(g);
  const GeneratorParams gen = load_generator(cfg.generation.checkpoint);
  const ToyAssessor assessor(load_toy_assessor(cfg.assessor.checkpoint));
  const Video video = guard(kBadInput, [&] { return load_video(video_path); });
  const QualityTask task = cfg.quality_task();
  const Eigen::MatrixXd feats = video_features(gen, video, task, cfg.seed);
  const Eigen::VectorXd s = assessor.score_features(feats);
  const std::vector<double> scores(s.data(), s.data() + s.size());
  ordered_json doc{{"assessor", assessor.name()},
                   {"score", aggregate(scores)},
                   {"n_paths", task.n_paths},
                   {"path_scores", scores}};
  write_text(out, doc.dump(2) + "\n");
  return kOk;
}

int cmd_metrics(const Globals& g, const std::string& file_a, const std::string& file_b, const std::string& out,
                const std::string& heatmap) {
  const RunConfig cfg = load_run_config(g);
  const auto a = guard(kBadInput, [&] { return read_scanpaths(file_a); });
  const auto b = guard(kBadInput, [&] { return read_scanpaths(file_b); });
  const SetMetric od_set = min_od(a, b);
  const SetMetric tc_set = max_tc(a, b);
  ordered_json table = ordered_json::array();
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double t = tc_set.table[i][j];
      table.push_back({{"a", i}, {"b", j}, {"od", od_set.table[i][j]}, {"tc", std::isnan(t) ? ordered_json() : ordered_json(t)}});
    }
  }
  ordered_json doc{{"minOD", od_set.value},
                   {"maxTC", tc_set.value},
                   {"minOD_pair", {od_set.best_a, od_set.best_b}},
                   {"maxTC_pair", {tc_set.best_a, tc_set.best_b}},
                   {"degenerate_pairs", tc_set.degenerate_pairs},
                   {"per_pair_table", table}};
  write_text(out, doc.dump(2) + "\n");
  if (!heatmap.empty()) {
    const Eigen::MatrixXd h =
        saliency_from_scanpaths(a, cfg.metrics.heatmap_height, cfg.metrics.heatmap_width, cfg.metrics.kernel_deg);
    guard(kWriteFailed, [&] { write_heatmap(h, heatmap, cfg.metrics.kernel_deg); });
  }
  return kOk;
}

int cmd_synth(const Globals& g, const std::string& data) {
  const RunConfig cfg = load_run_config(g);
  const auto model = SyntheticScanpathModel::standard();
  const int n_val = std::max(1, static_cast<int>(cfg.training.synth_paths * cfg.training.val_fraction));
  const int n_train = cfg.training.synth_paths - n_val;
  const auto train = synth_scanpaths(model, n_train, cfg.training.synth_length, cfg.seed);
  const auto val = synth_scanpaths(model, n_val, cfg.training.synth_length, mix64(cfg.seed ^ 0x76616cULL));
  const auto videos = synth_quality_dataset(cfg.seed, cfg.training.synth_videos);
  guard(kWriteFailed, [&] {
    fs::create_directories(data);
    write_scanpaths(train, fs::path(data) / "scanpaths_train.jsonl");
    write_scanpaths(val, fs::path(data) / "scanpaths_val.jsonl");
    save_quality_dataset(videos, fs::path(data) / "quality");
  });
  ordered_json summary{{"train_paths", n_train}, {"val_paths", n_val}, {"videos", videos.size()}};
  std::cout << summary.dump() << '\n';
  return kOk;
}

std::pair<std::vector<LabeledVideo>, std::vector<LabeledVideo>> quality_split(const RunConfig& cfg, const fs::path& data) {
  auto videos = guard(kBadInput, [&] { return load_quality_dataset(data / "quality"); });
  const auto n = static_cast<int>(videos.size());
  const int n_val = std::max(3, static_cast<int>(n * cfg.training.val_fraction));
  if (n - n_val < 3) throw ConfigError("quality dataset too small for a train/validation split");
  std::vector<LabeledVideo> val(std::make_move_iterator(videos.end() - n_val), std::make_move_iterator(videos.end()));
  videos.resize(n - n_val);
  return {std::move(videos), std::move(val)};
}

int cmd_train(const Globals& g, const std::string& stage, const std::string& data, std::string out, std::string log_path,
              std::string assessor_out) {
  if (stage == "synth") return cmd_synth(g, data);
  const RunConfig cfg = load_run_config(g);
  std::vector<EpochLog> log;
  ordered_json summary;
  if (stage == "1") {
    if (out.empty()) out = cfg.generation.checkpoint;
    const auto train = guard(kBadInput, [&] { return read_scanpaths(fs::path(data) / "scanpaths_train.jsonl"); });
    const auto val = guard(kBadInput, [&] { return read_scanpaths(fs::path(data) / "scanpaths_val.jsonl"); });
    const NetHyper& h = cfg.generation.hyper;
    const auto ex_train = build_examples(train, h, cfg.generation.spec, cfg.training.window_stride);
    const auto ex_val = build_examples(val, h, cfg.generation.spec, cfg.training.window_stride);
    const Stage1Result r = stage1_pretrain(init_params(cfg.seed, h), ex_train, ex_val, cfg.stage1());
    log = r.log;
    guard(kWriteFailed, [&] { save_checkpoint(r.params, out); });
    summary = {{"stage", 1}, {"epochs", r.log.size()}, {"initial_val", r.initial_val}, {"best_val", r.best_val},
               {"best_epoch", r.best_epoch}};
  } else if (stage == "2") {
    if (out.empty()) out = cfg.assessor.checkpoint;
    const GeneratorParams gen = load_generator(cfg.generation.checkpoint);
    const auto [train, val] = quality_split(cfg, data);
    const QualityTask task = cfg.quality_task();
    const auto init = init_assessor(cfg.seed, task.sequence_length, task.render.height_px, task.render.width_px,
                                    cfg.assessor.hidden);
    const Stage2Result r = stage2_warmup(init, gen, train, val, task, cfg.stage2());
    log = r.log;
    guard(kWriteFailed, [&] { save_assessor(r.params, out); });
    summary = {{"stage", 2}, {"epochs", r.log.size()}, {"best_val_plcc", r.best_val}};
  } else if (stage == "3") {
    if (out.empty()) throw ConfigError("stage 3 needs --out for the finetuned generator");
    if (assessor_out.empty()) assessor_out = out + ".assessor";
    const GeneratorParams gen = load_generator(cfg.generation.checkpoint);
    const ToyAssessorParams head = load_toy_assessor(cfg.assessor.checkpoint);
    const auto [train, val] = quality_split(cfg, data);
    const Stage3Result r = stage3_finetune(gen, head, train, val, cfg.quality_task(), cfg.stage3());
    log = r.log;
    guard(kWriteFailed, [&] {
      save_checkpoint(r.generator, out);
      save_assessor(r.assessor, assessor_out);
    });
    summary = {{"stage", 3}, {"epochs", r.log.size()}, {"steps", r.generator_grad_norms.size()},
               {"val_plcc", r.log.empty() ? 0.0 : r.log.back().val_metric}};
  } else {
    throw ConfigError("--stage must be one of 1, 2, 3, synth");
  }
  log_epochs(g, log);
  write_text(log_path.empty() ? out + ".log.jsonl" : log_path, encode_log(log));
  std::cout << summary.dump() << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"panoscan: panoramic scanpath generation and quality assessment"};
  app.require_subcommand(1);
  app.fallthrough();
  app.footer(std::string("\n") + kExitHelp + "\n" + config_help());
  app.get_formatter()->column_width(28);

  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "overrides the configuration seed");
  app.add_option("--threads", g.threads, "worker threads for scanpath generation (1 is bit-exact)")
      ->check(CLI::PositiveNumber);
  app.add_flag("--verbose", g.verbose, "progress on stderr");

  std::string out, checkpoint, scanpaths, frames, video, file_a, file_b, heatmap, stage, data, log_path, assessor_out;

  auto* gen = app.add_subcommand("generate", "generate scanpaths from a trained generator");
  gen->add_option("--out", out, "output scanpath file (JSON lines)")->required();
  gen->add_option("--checkpoint", checkpoint, "generator checkpoint (default: generation.checkpoint)");

  auto* render = app.add_subcommand("render", "render viewport sequences along scanpaths");
  render->add_option("--scanpaths", scanpaths, "scanpath file")->required();
  render->add_option("--frames", frames, "PPM image or frame directory")->required();
  render->add_option("--out", out, "output directory; writes path_<id>/frame_*.ppm")->required();

  auto* assess = app.add_subcommand("assess", "predict the quality of a panoramic video");
  assess->add_option("--video", video, "PPM image or frame directory")->required();
  assess->add_option("--out", out, "output JSON")->required();

  auto* train = app.add_subcommand("train", "run one training stage or write a synthetic dataset");
  train->add_option("--stage", stage, "1, 2, 3 or synth")->required()->check(CLI::IsMember({"1", "2", "3", "synth"}));
  train->add_option("--data", data, "dataset directory")->required();
  train->add_option("--out", out, "output checkpoint (stage 1/2 default: the configured checkpoint)");
  train->add_option("--log", log_path, "epoch log, JSON lines (default: <out>.log.jsonl)");
  train->add_option("--assessor-out", assessor_out, "stage 3 assessor checkpoint (default: <out>.assessor)");

  auto* metrics = app.add_subcommand("metrics", "compare two scanpath sets");
  metrics->add_option("--a", file_a, "first scanpath file")->required();
  metrics->add_option("--b", file_b, "second scanpath file")->required();
  metrics->add_option("--out", out, "output JSON {minOD, maxTC, per_pair_table}")->required();
  metrics->add_option("--heatmap", heatmap, "optional saliency PGM of the first set");

  auto* synth = app.add_subcommand("synth", "write a synthetic dataset (same as train --stage synth)");
  synth->add_option("--data", data, "output dataset directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kBadConfig;
  }
  if (*seed_opt) g.seed = seed;

  try {
    if (*gen) return cmd_generate(g, out, checkpoint);
    if (*render) return cmd_render(g, scanpaths, frames, out);
    if (*assess) return cmd_assess(g, video, out);
    if (*train) return cmd_train(g, stage, data, out, log_path, assessor_out);
    if (*metrics) return cmd_metrics(g, file_a, file_b, out, heatmap);
    if (*synth) return cmd_synth(g, data);
  } catch (const ExitError& e) {
    std::cerr << "error: " << e.message << '\n';
    return e.code;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kBadConfig;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return kDiverged;
  } catch (const DegenerateSeries& e) {
    std::cerr << "degenerate input: " << e.what() << '\n';
    return kDegenerate;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kInternal;
}
