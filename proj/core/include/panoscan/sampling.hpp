#pragma once

// Two-step differentiable GMM sampling and the PID-smoothed proxy viewer.

#include <Eigen/Core>

#include <span>
#include <vector>

#include "panoscan/gmm.hpp"
#include "panoscan/rng.hpp"

namespace panoscan {

using Vec2 = Eigen::Vector2d;

struct PidGains {
  double kp = 0.1;
  double ki = 0.01;
  double kd = 0.6;
  double dt = 1.0;

  void validate() const;
};

struct PidState {
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
  Vec2 acceleration = Vec2::Zero();
  Vec2 error_integral = Vec2::Zero();
  Vec2 prev_error = Vec2::Zero();

  bool finite() const;
};

struct ComponentSelection {
  int index = 0;
  std::vector<double> forward;    // exact one-hot
  std::vector<double> surrogate;  // softmax((log w + g) / tau), used for gradients
};

/// Straight-through Gumbel-softmax selection. Ties go to the lowest index.
ComponentSelection select_component(std::span<const double> weights, std::span<const double> gumbel_noise,
                                    double tau);

/// d surrogate_i / d log w_j = (s_i (delta_ij - s_j)) / tau.
Eigen::MatrixXd surrogate_jacobian(std::span<const double> surrogate, double tau);

/// mu_i + sigma_i * noise, per axis.
UVPoint reparam_sample(const GmmParams& g, int component, const Vec2& noise);

/// Constant-acceleration kinematics over one interval.
PidState pid_advance(const PidState& state, const PidGains& gains);
/// Exact inverse of pid_advance.
PidState pid_retreat(const PidState& state, const PidGains& gains);
/// Feeds the error against `reference` through the PID law to set the acceleration.
PidState pid_correct(const PidState& state, const UVPoint& reference, const PidGains& gains);

struct SampleDraw {
  std::vector<double> gumbel;
  Vec2 noise = Vec2::Zero();
};

/// Draws the K Gumbel variates followed by the two Gaussian variates of one sampling step.
SampleDraw draw_sample_noise(int components, RngStream& rng);

struct SampledStep {
  UVPoint emitted;    // smoothed PID position
  UVPoint reference;  // raw mixture sample fed to the controller
  int component = 0;
  PidState state;
};

SampledStep sample_next_viewpoint(const GmmParams& g, const PidState& state, const PidGains& gains, RngStream& rng,
                                  double tau = 1.0);

}  // namespace panoscan
