#pragma once

// Run configuration: one JSON document with sections {generation, renderer,
// assessor, training, metrics, seed}. Every key has a documented default;
// unknown keys are rejected. Angles are radians; an angle key also accepts a
// "<key>_deg" spelling in degrees.

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "panoscan/density_net.hpp"
#include "panoscan/generator.hpp"
#include "panoscan/synthetic.hpp"
#include "panoscan/training.hpp"

namespace panoscan {

struct RunConfig {
  std::uint64_t seed = 0;

  struct Generation {
    std::string checkpoint = "generator.pscn";
    Viewpoint start;
    double duration_s = 7.0;
    int n_paths = 20;
    double init_jitter_rad = 0.0;
    double tau = 1.0;
    PidGains gains;
    ViewportSpec spec;  // uv frame of the network
    NetHyper hyper;
  } generation;

  struct Renderer {
    int width_px = 224;
    int height_px = 224;
    double fov_rad = kPi / 2.0;
    int sequence_length = 7;
  } renderer;

  struct Assessor {
    std::string checkpoint = "assessor.psqa";
    int width_px = 32;
    int height_px = 32;
    int sequence_length = 7;
    int hidden = 16;
    int n_paths = 8;
    double init_jitter_rad = 0.02;
  } assessor;

  struct Training {
    double quantizer_step = 0.2;
    int window_stride = 1;
    int synth_paths = 200;
    int synth_length = 75;
    int synth_videos = 64;
    double val_fraction = 0.25;
    Stage1Config stage1;
    Stage2Config stage2;
    Stage3Config stage3;
  } training;

  struct Metrics {
    int heatmap_height = 64;
    int heatmap_width = 128;
    double kernel_deg = 5.0;
    int logistic_iterations = 200;
  } metrics;

  void validate() const;

  GenerationOptions generation_options() const;
  GenerationConfig generation_config() const;
  ViewportSpec render_spec() const;
  QualityTask quality_task() const;
  Stage1Config stage1() const;
  Stage2Config stage2() const;
  Stage3Config stage3() const;
  QuantizerSpec quantizer() const { return {training.quantizer_step}; }
};

/// Overlays `doc` on the defaults. Throws ConfigError naming the offending key.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path);

/// The effective configuration as JSON (canonical radian keys).
nlohmann::ordered_json config_to_json(const RunConfig& cfg);

/// One line per key: name, default and meaning.
std::string config_help();

}  // namespace panoscan
