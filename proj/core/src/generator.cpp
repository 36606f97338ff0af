#include "panoscan/generator.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "panoscan/diff_ops.hpp"
#include "panoscan/errors.hpp"

namespace panoscan {

namespace ad {

namespace {

Matrix vec_row(const Vec2& v) { return row2(v.x(), v.y()); }

Vec2 row_vec(const Var& v) { return Vec2(v.value()(0, 0), v.value()(0, 1)); }

struct DiffStep {
  Var viewpoint;
  Var uv;
  PidVars pid;
  int component = 0;
  int clamps = 0;
};

// One generation unit on the tape. `hist` holds H 1x2 viewpoints; `causal`
// holds the uv outputs of this block so far, in the frame of hist.back().
DiffStep sgu(Tape& tape, const NetVars& vars, const NetHyper& hyper, std::span<const Var> hist,
             std::span<const Var> causal, const PidVars& pid, RngStream& rng, const GenerationOptions& opts) {
  const int h = hyper.history;
  const int w = hyper.horizon;
  const int k = hyper.components;
  if (static_cast<int>(hist.size()) != h) throw ShapeError("generation unit needs exactly H historical viewpoints");
  if (static_cast<int>(causal.size()) >= w) throw ShapeError("causal context longer than the horizon");

  DiffStep out;

  // Relative scanpath set: reference hist[H - t] for t = 1..H.
  std::vector<Var> hist_parts;
  hist_parts.reserve(h * h);
  for (int t = 1; t <= h; ++t) {
    const Var& ref = hist[h - t];
    for (int j = 0; j < h; ++j) {
      bool clamped = false;
      hist_parts.push_back(sphere_to_viewport(hist[j], ref, opts.spec, &clamped));
      out.clamps += clamped ? 1 : 0;
    }
  }
  const Var hist_row = concat_cols(hist_parts);

  std::vector<Var> causal_parts;
  causal_parts.reserve(2 * w);
  const Var one = tape.constant(Matrix::Ones(1, 1));
  for (int i = 0; i < w; ++i) {
    if (i < static_cast<int>(causal.size())) {
      causal_parts.push_back(causal[i]);
      causal_parts.push_back(one);
    } else {
      causal_parts.push_back(tape.constant(Matrix::Zero(1, 3)));
    }
  }
  const Var causal_row = concat_cols(causal_parts);

  const GmmVars g = forward(vars, hyper, hist_row, causal_row);

  // Straight-through component selection and reparameterized reference.
  const SampleDraw draw = draw_sample_noise(k, rng);
  const Matrix& wv = g.weights.value();
  const std::vector<double> weights(wv.data(), wv.data() + k);
  const ComponentSelection sel = select_component(weights, draw.gumbel, opts.tau);
  out.component = sel.index;
  Matrix gumbel(1, k);
  for (int i = 0; i < k; ++i) gumbel(0, i) = draw.gumbel[i];
  const Var surrogate = softmax_rows((1.0 / opts.tau) * (log(g.weights) + tape.constant(std::move(gumbel))));
  Matrix one_hot = Matrix::Zero(1, k);
  one_hot(0, sel.index) = 1.0;
  const Var e = straight_through(one_hot, surrogate);
  const Var mu = matmul(e, reshape_rows(g.means, k, 2));
  const Var sigma = matmul(e, reshape_rows(g.sigmas, k, 2));
  const Var reference = mu + hadamard(sigma, tape.constant(vec_row(draw.noise)));

  // PID correction, then kinematic advance.
  const PidGains& gains = opts.gains;
  const Var error = reference - pid.position;
  PidVars next;
  next.error_integral = pid.error_integral + error;
  next.acceleration = gains.kp * error + gains.ki * next.error_integral + gains.kd * (error - pid.prev_error);
  next.prev_error = error;
  const double dt = gains.dt;
  next.position = pid.position + dt * pid.velocity + (0.5 * dt * dt) * next.acceleration;
  next.velocity = pid.velocity + dt * next.acceleration;

  out.uv = next.position;
  out.viewpoint = viewport_to_sphere(next.position, hist.back(), opts.spec);
  out.pid = next;
  return out;
}

}  // namespace

PidVars pid_constants(Tape& tape, const PidState& s) {
  return {tape.constant(vec_row(s.position)), tape.constant(vec_row(s.velocity)),
          tape.constant(vec_row(s.acceleration)), tape.constant(vec_row(s.error_integral)),
          tape.constant(vec_row(s.prev_error))};
}

PidState pid_values(const PidVars& p) {
  PidState s;
  s.position = row_vec(p.position);
  s.velocity = row_vec(p.velocity);
  s.acceleration = row_vec(p.acceleration);
  s.error_integral = row_vec(p.error_integral);
  s.prev_error = row_vec(p.prev_error);
  return s;
}

DiffScanpath generate_scanpath(Tape& tape, const NetVars& vars, const NetHyper& hyper,
                               std::span<const Viewpoint> initial, int blocks, RngStream& rng,
                               const GenerationOptions& opts) {
  if (static_cast<int>(initial.size()) != hyper.history) throw ShapeError("initial path must hold H viewpoints");
  if (blocks < 0) throw ConfigError("block count must be nonnegative");
  opts.validate();
  DiffScanpath out;
  for (const auto& vp : initial) {
    const Viewpoint n = vp.normalized();
    out.points.push_back(tape.constant(row2(n.phi, n.theta)));
  }
  PidVars pid = pid_constants(tape, PidState{});
  const int h = hyper.history;
  for (int b = 0; b < blocks; ++b) {
    const std::vector<Var> hist(out.points.end() - h, out.points.end());
    // The block frame is centered on hist.back(), which is where the proxy viewer sits.
    pid.position = tape.constant(Matrix::Zero(1, 2));
    std::vector<Var> causal;
    for (int i = 0; i < hyper.horizon; ++i) {
      DiffStep step = sgu(tape, vars, hyper, hist, causal, pid, rng, opts);
      causal.push_back(step.uv);
      out.points.push_back(step.viewpoint);
      out.clamps += step.clamps;
      pid = step.pid;
    }
  }
  return out;
}

}  // namespace ad

void GenerationOptions::validate() const {
  spec.validate();
  gains.validate();
  if (!(tau > 0.0)) throw ConfigError("temperature must be positive");
}

void GenerationConfig::validate() const {
  options.validate();
  if (!start.valid()) throw ConfigError("start viewpoint out of range");
  if (!(duration_s > 0.0)) throw ConfigError("duration must be positive");
  if (n_paths < 1) throw ConfigError("n_paths must be positive");
  if (!(init_jitter_rad >= 0.0)) throw ConfigError("init_jitter_rad must be nonnegative");
}

int blocks_for_duration(double duration_s, int history, int horizon, double rate_hz) {
  if (horizon < 1) throw ConfigError("horizon must be positive");
  const double m = std::ceil((rate_hz * duration_s - history) / horizon);
  return std::max(0, static_cast<int>(m));
}

std::vector<std::vector<Viewpoint>> make_initial_paths(const GenerationConfig& cfg, int history) {
  cfg.validate();
  // Large viewport so the tangent-plane jitter is well inside the valid domain.
  const ViewportSpec unit{2, 2, kPi / 2.0};  // radius 1
  std::vector<std::vector<Viewpoint>> paths(cfg.n_paths);
  for (int i = 0; i < cfg.n_paths; ++i) {
    RngStream rng(cfg.seed, static_cast<std::uint64_t>(i));
    auto& path = paths[i];
    path.reserve(history);
    for (int j = 0; j < history; ++j) {
      if (cfg.init_jitter_rad == 0.0) {
        path.push_back(cfg.start.normalized());
        continue;
      }
      const double a = cfg.init_jitter_rad * rng.normal();
      const double b = cfg.init_jitter_rad * rng.normal();
      const double rho = std::hypot(a, b);
      if (rho == 0.0) {
        path.push_back(cfg.start.normalized());
        continue;
      }
      // Exponential map: geodesic of length rho in direction (a, b).
      const double t = std::tan(std::min(rho, kPi / 2.0 - kHorizonEpsilon)) / rho;
      path.push_back(viewport_to_sphere({a * t, b * t}, cfg.start, unit));
    }
  }
  return paths;
}

RngStream path_rng(const GenerationConfig& cfg, int path, int history) {
  RngStream rng(cfg.seed, static_cast<std::uint64_t>(path));
  if (cfg.init_jitter_rad != 0.0) {
    for (int j = 0; j < 2 * history; ++j) rng.normal();
  }
  return rng;
}

SguResult sgu_step(const GeneratorParams& params, std::span<const Viewpoint> hist, const CausalContext& causal,
                   const PidState& pid, RngStream& rng, const GenerationOptions& opts) {
  opts.validate();
  causal.validate();
  if (static_cast<int>(causal.slots.size()) != params.hyper.horizon) throw ShapeError("causal context must hold W slots");
  ad::Tape tape;
  const NetVars vars = bind_params(tape, params, false);
  std::vector<ad::Var> hist_vars;
  for (const auto& vp : hist) hist_vars.push_back(tape.constant(ad::row2(vp.phi, vp.theta)));
  std::vector<ad::Var> causal_vars;
  for (const auto& s : causal.slots) {
    if (!s.valid) break;
    causal_vars.push_back(tape.constant(ad::row2(s.u, s.v)));
  }
  const ad::DiffStep step = ad::sgu(tape, vars, params.hyper, hist_vars, causal_vars, ad::pid_constants(tape, pid), rng, opts);
  SguResult out;
  out.viewpoint = {step.viewpoint.value()(0, 0), step.viewpoint.value()(0, 1)};
  out.uv = {step.uv.value()(0, 0), step.uv.value()(0, 1)};
  out.pid = ad::pid_values(step.pid);
  out.component = step.component;
  out.clamps = step.clamps;
  return out;
}

BlockResult sgb_rollout(const GeneratorParams& params, std::span<const Viewpoint> hist, const PidState& pid,
                        RngStream& rng, const GenerationOptions& opts) {
  const int w = params.hyper.horizon;
  BlockResult out;
  out.pid = pid;
  std::vector<UVPoint> causal;
  for (int i = 0; i < w; ++i) {
    const SguResult step = sgu_step(params, hist, CausalContext::from_points(causal, w), out.pid, rng, opts);
    causal.push_back(step.uv);
    out.points.push_back(step.viewpoint);
    out.pid = step.pid;
    out.clamps += step.clamps;
  }
  return out;
}

GeneratedPath generate_scanpath(const GeneratorParams& params, std::span<const Viewpoint> initial, int blocks,
                                RngStream& rng, const GenerationOptions& opts) {
  const int h = params.hyper.history;
  if (static_cast<int>(initial.size()) != h) throw ShapeError("initial path must hold H viewpoints");
  if (blocks < 0) throw ConfigError("block count must be nonnegative");
  GeneratedPath out;
  for (const auto& vp : initial) out.path.points.push_back(vp.normalized());
  PidState pid;
  for (int b = 0; b < blocks; ++b) {
    const std::vector<Viewpoint> hist(out.path.points.end() - h, out.path.points.end());
    pid.position = Vec2::Zero();
    BlockResult block = sgb_rollout(params, hist, pid, rng, opts);
    out.path.points.insert(out.path.points.end(), block.points.begin(), block.points.end());
    out.clamps += block.clamps;
    pid = block.pid;
  }
  return out;
}

GeneratedBatch generate_batch(const GeneratorParams& params, const GenerationConfig& cfg, int threads) {
  cfg.validate();
  params.validate();
  const int blocks = blocks_for_duration(cfg.duration_s, params.hyper.history, params.hyper.horizon);
  const auto initial = make_initial_paths(cfg, params.hyper.history);
  std::vector<GeneratedPath> results(cfg.n_paths);

  auto work = [&](int i) {
    RngStream rng = path_rng(cfg, i, params.hyper.history);
    results[i] = generate_scanpath(params, initial[i], blocks, rng, cfg.options);
  };

  const int n_threads = std::clamp(threads, 1, cfg.n_paths);
  if (n_threads == 1) {
    for (int i = 0; i < cfg.n_paths; ++i) work(i);
  } else {
    std::vector<std::exception_ptr> errors(n_threads);
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (int i = t; i < cfg.n_paths; i += n_threads) work(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  GeneratedBatch batch;
  for (auto& r : results) {
    batch.paths.push_back(std::move(r.path));
    batch.clamp_count += r.clamps;
  }
  return batch;
}

}  // namespace panoscan
