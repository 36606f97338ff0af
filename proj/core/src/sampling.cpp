#include "panoscan/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "panoscan/errors.hpp"

namespace panoscan {

void PidGains::validate() const {
  if (!(kp >= 0.0 && ki >= 0.0 && kd >= 0.0)) throw ConfigError("PID gains must be nonnegative");
  if (!(dt > 0.0)) throw ConfigError("PID sampling interval must be positive");
}

bool PidState::finite() const {
  return position.allFinite() && velocity.allFinite() && acceleration.allFinite() && error_integral.allFinite() &&
         prev_error.allFinite();
}

ComponentSelection select_component(std::span<const double> weights, std::span<const double> gumbel_noise,
                                    double tau) {
  const std::size_t k = weights.size();
  if (k == 0 || gumbel_noise.size() != k) {
    throw ShapeError("select_component needs matching nonempty weight and noise vectors");
  }
  if (!(tau > 0.0)) throw ConfigError("temperature must be positive");

  std::vector<double> logits(k);
  for (std::size_t i = 0; i < k; ++i) logits[i] = std::log(weights[i]) + gumbel_noise[i];

  ComponentSelection sel;
  sel.index = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  sel.forward.assign(k, 0.0);
  sel.forward[sel.index] = 1.0;

  const double top = logits[sel.index];
  sel.surrogate.resize(k);
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    sel.surrogate[i] = std::exp((logits[i] - top) / tau);
    total += sel.surrogate[i];
  }
  for (auto& s : sel.surrogate) s /= total;
  return sel;
}

Eigen::MatrixXd surrogate_jacobian(std::span<const double> surrogate, double tau) {
  const auto k = static_cast<Eigen::Index>(surrogate.size());
  Eigen::MatrixXd jac(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      jac(i, j) = surrogate[i] * ((i == j ? 1.0 : 0.0) - surrogate[j]) / tau;
    }
  }
  return jac;
}

UVPoint reparam_sample(const GmmParams& g, int component, const Vec2& noise) {
  if (component < 0 || component >= g.components()) {
    throw ShapeError("component index " + std::to_string(component) + " out of range");
  }
  const auto& mu = g.means[component];
  const auto& sigma = g.sigmas[component];
  return {mu.u + sigma.u * noise.x(), mu.v + sigma.v * noise.y()};
}

PidState pid_advance(const PidState& state, const PidGains& gains) {
  PidState next = state;
  const double dt = gains.dt;
  next.position = state.position + dt * state.velocity + 0.5 * dt * dt * state.acceleration;
  next.velocity = state.velocity + dt * state.acceleration;
  return next;
}

PidState pid_retreat(const PidState& state, const PidGains& gains) {
  PidState prev = state;
  const double dt = gains.dt;
  prev.velocity = state.velocity - dt * state.acceleration;
  prev.position = state.position - dt * prev.velocity - 0.5 * dt * dt * state.acceleration;
  return prev;
}

PidState pid_correct(const PidState& state, const UVPoint& reference, const PidGains& gains) {
  PidState next = state;
  const Vec2 error = Vec2(reference.u, reference.v) - state.position;
  next.error_integral = state.error_integral + error;
  next.acceleration = gains.kp * error + gains.ki * next.error_integral + gains.kd * (error - state.prev_error);
  next.prev_error = error;
  return next;
}

SampleDraw draw_sample_noise(int components, RngStream& rng) {
  SampleDraw draw;
  draw.gumbel.resize(components);
  for (auto& g : draw.gumbel) g = rng.gumbel();
  const double eu = rng.normal();
  const double ev = rng.normal();
  draw.noise = Vec2(eu, ev);
  return draw;
}

SampledStep sample_next_viewpoint(const GmmParams& g, const PidState& state, const PidGains& gains, RngStream& rng,
                                  double tau) {
  const SampleDraw draw = draw_sample_noise(g.components(), rng);
  const auto sel = select_component(g.weights, draw.gumbel, tau);
  SampledStep step;
  step.component = sel.index;
  step.reference = reparam_sample(g, sel.index, draw.noise);
  step.state = pid_advance(pid_correct(state, step.reference, gains), gains);
  step.emitted = {step.state.position.x(), step.state.position.y()};
  return step;
}

}  // namespace panoscan
