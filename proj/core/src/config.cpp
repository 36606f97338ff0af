#include "panoscan/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "panoscan/errors.hpp"
#include "panoscan/scanpath_io.hpp"

namespace panoscan {

using nlohmann::json;

namespace {

enum class Kind { kInt, kDouble, kAngle, kString, kBool };

struct Key {
  std::string section;
  std::string name;
  Kind kind;
  std::string help;
  std::function<void(RunConfig&, const json&)> set;
  std::function<json(const RunConfig&)> get;

  std::string path() const { return section + "." + name; }
};

template <class T>
Key field(std::string section, std::string name, Kind kind, std::string help, T& (*acc)(RunConfig&)) {
  Key k{std::move(section), std::move(name), kind, std::move(help), {}, {}};
  k.set = [acc](RunConfig& c, const json& v) { acc(c) = v.get<T>(); };
  k.get = [acc](const RunConfig& c) { return json(acc(const_cast<RunConfig&>(c))); };
  return k;
}

#define PS_FIELD(section, name, kind, type, expr, help) \
  field<type>(section, name, kind, help, [](RunConfig& c) -> type& { return expr; })

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      PS_FIELD("generation", "checkpoint", Kind::kString, std::string, c.generation.checkpoint,
               "generator checkpoint read by generate/assess and written by train"),
      PS_FIELD("generation", "start_phi", Kind::kAngle, double, c.generation.start.phi, "latitude of the start viewpoint"),
      PS_FIELD("generation", "start_theta", Kind::kAngle, double, c.generation.start.theta,
               "longitude of the start viewpoint"),
      PS_FIELD("generation", "duration_s", Kind::kDouble, double, c.generation.duration_s,
               "seconds of scanpath per path (5 Hz)"),
      PS_FIELD("generation", "n_paths", Kind::kInt, int, c.generation.n_paths, "scanpaths generated per run"),
      PS_FIELD("generation", "init_jitter", Kind::kAngle, double, c.generation.init_jitter_rad,
               "std of the tangent jitter applied to each initial viewpoint"),
      PS_FIELD("generation", "tau", Kind::kDouble, double, c.generation.tau, "Gumbel-softmax temperature"),
      PS_FIELD("generation", "kp", Kind::kDouble, double, c.generation.gains.kp, "PID proportional gain"),
      PS_FIELD("generation", "ki", Kind::kDouble, double, c.generation.gains.ki, "PID integral gain"),
      PS_FIELD("generation", "kd", Kind::kDouble, double, c.generation.gains.kd, "PID derivative gain"),
      PS_FIELD("generation", "dt", Kind::kDouble, double, c.generation.gains.dt, "PID time step per viewpoint"),
      PS_FIELD("generation", "uv_width_px", Kind::kInt, int, c.generation.spec.width_px,
               "viewport width defining the network's uv frame"),
      PS_FIELD("generation", "uv_height_px", Kind::kInt, int, c.generation.spec.height_px,
               "viewport height defining the network's uv frame"),
      PS_FIELD("generation", "uv_fov", Kind::kAngle, double, c.generation.spec.fov_rad,
               "field of view of the network's uv frame"),
      PS_FIELD("generation", "history", Kind::kInt, int, c.generation.hyper.history, "H, viewpoints of history"),
      PS_FIELD("generation", "horizon", Kind::kInt, int, c.generation.hyper.horizon, "W, viewpoints per block"),
      PS_FIELD("generation", "components", Kind::kInt, int, c.generation.hyper.components, "K, mixture components"),
      PS_FIELD("generation", "hnet_width", Kind::kInt, int, c.generation.hyper.hnet_width, "hidden width of the history net"),
      PS_FIELD("generation", "cnet_width", Kind::kInt, int, c.generation.hyper.cnet_width, "hidden width of the causal net"),
      PS_FIELD("generation", "input_scale", Kind::kDouble, double, c.generation.hyper.input_scale,
               "uv pixels per unit of network input"),
      PS_FIELD("generation", "mean_scale", Kind::kDouble, double, c.generation.hyper.mean_scale,
               "uv pixels per unit of mean-head output"),

      PS_FIELD("renderer", "width_px", Kind::kInt, int, c.renderer.width_px, "rendered viewport width"),
      PS_FIELD("renderer", "height_px", Kind::kInt, int, c.renderer.height_px, "rendered viewport height"),
      PS_FIELD("renderer", "fov", Kind::kAngle, double, c.renderer.fov_rad, "rendered viewport field of view"),
      PS_FIELD("renderer", "sequence_length", Kind::kInt, int, c.renderer.sequence_length, "L, viewports per path"),

      PS_FIELD("assessor", "checkpoint", Kind::kString, std::string, c.assessor.checkpoint,
               "assessor checkpoint read by assess and written by train"),
      PS_FIELD("assessor", "width_px", Kind::kInt, int, c.assessor.width_px, "viewport width seen by the assessor"),
      PS_FIELD("assessor", "height_px", Kind::kInt, int, c.assessor.height_px, "viewport height seen by the assessor"),
      PS_FIELD("assessor", "sequence_length", Kind::kInt, int, c.assessor.sequence_length,
               "viewports per path seen by the assessor"),
      PS_FIELD("assessor", "hidden", Kind::kInt, int, c.assessor.hidden, "hidden width of the assessor head"),
      PS_FIELD("assessor", "n_paths", Kind::kInt, int, c.assessor.n_paths, "scanpaths per video when assessing"),
      PS_FIELD("assessor", "init_jitter", Kind::kAngle, double, c.assessor.init_jitter_rad,
               "initial jitter of the scanpaths used when assessing"),

      PS_FIELD("training", "quantizer_step", Kind::kDouble, double, c.training.quantizer_step,
               "uv quantization step of the code length"),
      PS_FIELD("training", "window_stride", Kind::kInt, int, c.training.window_stride, "stride of stage-1 windows"),
      PS_FIELD("training", "synth_paths", Kind::kInt, int, c.training.synth_paths, "synthetic scanpaths written by synth"),
      PS_FIELD("training", "synth_length", Kind::kInt, int, c.training.synth_length, "viewpoints per synthetic scanpath"),
      PS_FIELD("training", "synth_videos", Kind::kInt, int, c.training.synth_videos, "synthetic quality videos"),
      PS_FIELD("training", "val_fraction", Kind::kDouble, double, c.training.val_fraction,
               "fraction of the data held out for validation"),
      PS_FIELD("training", "record_wall_time", Kind::kBool, bool, c.training.stage1.record_wall_time,
               "write real wall_ms into logs (otherwise 0 for reproducible logs)"),
      PS_FIELD("training", "stage1_lr", Kind::kDouble, double, c.training.stage1.lr.initial, "stage-1 initial learning rate"),
      PS_FIELD("training", "stage1_lr_decay", Kind::kDouble, double, c.training.stage1.lr.decay_ratio,
               "stage-1 learning-rate decay ratio"),
      PS_FIELD("training", "stage1_lr_decay_every", Kind::kInt, int, c.training.stage1.lr.decay_every,
               "stage-1 epochs between decays"),
      PS_FIELD("training", "stage1_epochs", Kind::kInt, int, c.training.stage1.epochs, "stage-1 maximum epochs"),
      PS_FIELD("training", "stage1_batch", Kind::kInt, int, c.training.stage1.batch, "stage-1 batch size"),
      PS_FIELD("training", "stage1_patience", Kind::kInt, int, c.training.stage1.patience, "stage-1 early-stop patience"),
      PS_FIELD("training", "stage2_lr", Kind::kDouble, double, c.training.stage2.lr.initial, "stage-2 initial learning rate"),
      PS_FIELD("training", "stage2_lr_decay", Kind::kDouble, double, c.training.stage2.lr.decay_ratio,
               "stage-2 learning-rate decay ratio"),
      PS_FIELD("training", "stage2_lr_decay_every", Kind::kInt, int, c.training.stage2.lr.decay_every,
               "stage-2 epochs between decays"),
      PS_FIELD("training", "stage2_epochs", Kind::kInt, int, c.training.stage2.epochs, "stage-2 maximum epochs"),
      PS_FIELD("training", "stage2_batch", Kind::kInt, int, c.training.stage2.batch, "stage-2 batch size (>= 3)"),
      PS_FIELD("training", "stage2_patience", Kind::kInt, int, c.training.stage2.patience, "stage-2 early-stop patience"),
      PS_FIELD("training", "stage2_regenerate", Kind::kBool, bool, c.training.stage2.regenerate,
               "fresh scanpaths every stage-2 epoch"),
      PS_FIELD("training", "stage3_lr", Kind::kDouble, double, c.training.stage3.lr.initial, "stage-3 initial learning rate"),
      PS_FIELD("training", "stage3_lr_decay", Kind::kDouble, double, c.training.stage3.lr.decay_ratio,
               "stage-3 learning-rate decay ratio"),
      PS_FIELD("training", "stage3_lr_decay_every", Kind::kInt, int, c.training.stage3.lr.decay_every,
               "stage-3 epochs between decays"),
      PS_FIELD("training", "stage3_epochs", Kind::kInt, int, c.training.stage3.epochs, "stage-3 epochs"),
      PS_FIELD("training", "stage3_batch", Kind::kInt, int, c.training.stage3.batch, "stage-3 batch size (>= 3)"),

      PS_FIELD("metrics", "heatmap_height", Kind::kInt, int, c.metrics.heatmap_height, "saliency heatmap rows"),
      PS_FIELD("metrics", "heatmap_width", Kind::kInt, int, c.metrics.heatmap_width, "saliency heatmap columns"),
      PS_FIELD("metrics", "kernel_deg", Kind::kDouble, double, c.metrics.kernel_deg, "saliency kernel std in degrees"),
      PS_FIELD("metrics", "logistic_iterations", Kind::kInt, int, c.metrics.logistic_iterations,
               "maximum iterations of the logistic PLCC fit"),
  };
  return table;
}

#undef PS_FIELD

bool type_ok(Kind kind, const json& v) {
  switch (kind) {
    case Kind::kInt: return v.is_number_integer();
    case Kind::kDouble:
    case Kind::kAngle: return v.is_number();
    case Kind::kString: return v.is_string();
    case Kind::kBool: return v.is_boolean();
  }
  return false;
}

const char* kind_name(Kind kind) {
  switch (kind) {
    case Kind::kInt: return "integer";
    case Kind::kDouble: return "number";
    case Kind::kAngle: return "angle in radians";
    case Kind::kString: return "string";
    case Kind::kBool: return "boolean";
  }
  return "";
}

constexpr const char* kSections[] = {"generation", "renderer", "assessor", "training", "metrics"};

}  // namespace

void RunConfig::validate() const {
  generation_config().validate();
  generation.hyper.validate();
  render_spec().validate();
  quality_task().validate();
  if (renderer.sequence_length < 1) throw ConfigError("renderer.sequence_length must be positive");
  if (assessor.hidden < 1) throw ConfigError("assessor.hidden must be positive");
  if (!(training.quantizer_step > 0.0)) throw ConfigError("training.quantizer_step must be positive");
  if (training.window_stride < 1) throw ConfigError("training.window_stride must be positive");
  if (training.synth_paths < 2 || training.synth_length < 1) throw ConfigError("training.synth_paths/synth_length too small");
  if (training.synth_videos < 6) throw ConfigError("training.synth_videos must be at least 6");
  if (!(training.val_fraction > 0.0 && training.val_fraction < 1.0)) throw ConfigError("training.val_fraction must lie in (0, 1)");
  training.stage1.lr.validate();
  training.stage2.lr.validate();
  training.stage3.lr.validate();
  if (training.stage1.epochs < 0 || training.stage1.batch < 1 || training.stage1.patience < 1) {
    throw ConfigError("invalid stage-1 epochs, batch or patience");
  }
  if (training.stage2.epochs < 0 || training.stage2.batch < 3 || training.stage2.patience < 1) {
    throw ConfigError("invalid stage-2 epochs, batch (>= 3) or patience");
  }
  if (training.stage3.epochs < 0 || training.stage3.batch < 3) throw ConfigError("invalid stage-3 epochs or batch (>= 3)");
  if (metrics.heatmap_height < 2 || metrics.heatmap_width < 2 || !(metrics.kernel_deg > 0.0) || metrics.logistic_iterations < 1) {
    throw ConfigError("invalid metrics settings");
  }
}

GenerationOptions RunConfig::generation_options() const {
  GenerationOptions o;
  o.spec = generation.spec;
  o.gains = generation.gains;
  o.tau = generation.tau;
  return o;
}

GenerationConfig RunConfig::generation_config() const {
  GenerationConfig g;
  g.start = generation.start;
  g.duration_s = generation.duration_s;
  g.n_paths = generation.n_paths;
  g.init_jitter_rad = generation.init_jitter_rad;
  g.seed = seed;
  g.options = generation_options();
  return g;
}

ViewportSpec RunConfig::render_spec() const { return {renderer.width_px, renderer.height_px, renderer.fov_rad}; }

QualityTask RunConfig::quality_task() const {
  QualityTask t;
  t.generation = generation_options();
  t.start = generation.start;
  t.duration_s = generation.duration_s;
  t.init_jitter_rad = assessor.init_jitter_rad;
  t.n_paths = assessor.n_paths;
  t.sequence_length = assessor.sequence_length;
  t.render = {assessor.width_px, assessor.height_px, renderer.fov_rad};
  return t;
}

Stage1Config RunConfig::stage1() const {
  Stage1Config s = training.stage1;
  s.quantizer = quantizer();
  s.seed = seed;
  return s;
}

Stage2Config RunConfig::stage2() const {
  Stage2Config s = training.stage2;
  s.seed = seed;
  s.record_wall_time = training.stage1.record_wall_time;
  return s;
}

Stage3Config RunConfig::stage3() const {
  Stage3Config s = training.stage3;
  s.seed = seed;
  s.record_wall_time = training.stage1.record_wall_time;
  return s;
}

RunConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("configuration must be a JSON object");
  RunConfig cfg;
  for (const auto& [top, body] : doc.items()) {
    if (top == "seed") {
      if (!body.is_number_unsigned() && !(body.is_number_integer() && body.get<long long>() >= 0)) {
        throw ConfigError("seed: expected a non-negative integer");
      }
      cfg.seed = body.get<std::uint64_t>();
      continue;
    }
    if (std::find(std::begin(kSections), std::end(kSections), top) == std::end(kSections)) {
      throw ConfigError("unknown configuration section '" + top + "'");
    }
    if (!body.is_object()) throw ConfigError(top + ": expected an object");
    for (const auto& [name, value] : body.items()) {
      const Key* key = nullptr;
      bool degrees = false;
      for (const auto& k : keys()) {
        if (k.section != top) continue;
        if (k.name == name) {
          key = &k;
        } else if (k.kind == Kind::kAngle && name == k.name + "_deg") {
          key = &k;
          degrees = true;
        }
        if (key) break;
      }
      if (!key) throw ConfigError("unknown configuration key '" + top + "." + name + "'");
      if (degrees && body.contains(key->name)) {
        throw ConfigError(key->path() + " given both in radians and degrees");
      }
      if (!type_ok(key->kind, value)) {
        throw ConfigError(top + "." + name + ": expected " + (degrees ? std::string("angle in degrees") : kind_name(key->kind)));
      }
      key->set(cfg, degrees ? json(value.get<double>() * kPi / 180.0) : value);
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(doc);
}

nlohmann::ordered_json config_to_json(const RunConfig& cfg) {
  nlohmann::ordered_json out;
  for (const char* s : kSections) out[s] = nlohmann::ordered_json::object();
  for (const auto& k : keys()) out[k.section][k.name] = k.get(cfg);
  out["seed"] = cfg.seed;
  return out;
}

std::string config_help() {
  const RunConfig defaults;
  std::ostringstream out;
  out << "Configuration keys (JSON sections; angles in radians, or degrees via a _deg suffix):\n";
  out << "  seed = 0\n      root of all randomness; --seed overrides it\n";
  for (const auto& k : keys()) {
    const json v = k.get(defaults);
    std::string shown = v.is_number_float() ? format_double(v.get<double>()) : v.dump();
    out << "  " << k.path() << " = " << shown;
    if (k.kind == Kind::kAngle) out << "  (also " << k.name << "_deg)";
    out << "\n      " << k.help << "\n";
  }
  return out.str();
}

}  // namespace panoscan
