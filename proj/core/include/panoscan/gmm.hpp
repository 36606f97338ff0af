#pragma once

// Diagonal Gaussian mixtures over the viewport uv plane, uniform
// quantization and the code length of a quantized viewpoint.

#include <vector>

#include "panoscan/geometry.hpp"

namespace panoscan {

inline constexpr double kSigmaFloor = 1e-3;
inline constexpr double kWeightFloor = 1e-4;
inline constexpr double kMassFloor = 1e-12;

struct AxisSigma {
  double u = 1.0;
  double v = 1.0;
  friend bool operator==(const AxisSigma&, const AxisSigma&) = default;
};

struct GmmParams {
  std::vector<double> weights;
  std::vector<UVPoint> means;
  std::vector<AxisSigma> sigmas;

  int components() const { return static_cast<int>(weights.size()); }
  /// Throws ShapeError / ConfigError when the mixture invariants do not hold.
  void validate() const;
};

struct QuantizerSpec {
  double step = 0.2;
};

double normal_pdf(double x);
/// Standard normal CDF, accurate in both tails.
double normal_cdf(double x);
/// Phi(hi) - Phi(lo) for lo <= hi without cancellation in the tails.
double normal_interval(double lo, double hi);

double gmm_density(const GmmParams& g, const UVPoint& p);

/// Delta * floor(x / Delta + 1/2).
double quantize(double x, const QuantizerSpec& q);

/// Mixture mass of the quantization cell centered at `cell_center`, floored at kMassFloor.
double gmm_mass(const GmmParams& g, const UVPoint& cell_center, const QuantizerSpec& q);

/// -log2 of the mass of the cell containing `target`.
double code_length(const GmmParams& g, const UVPoint& target, const QuantizerSpec& q);

struct CodeLengthGrad {
  double bits = 0.0;
  bool floored = false;  // mass floor active; all partials are zero
  std::vector<double> d_weights;
  std::vector<UVPoint> d_means;
  std::vector<AxisSigma> d_sigmas;
};

/// code_length together with its exact partials with respect to every mixture field.
CodeLengthGrad code_length_with_grad(const GmmParams& g, const UVPoint& target, const QuantizerSpec& q);

}  // namespace panoscan
