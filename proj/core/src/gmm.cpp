#include "panoscan/gmm.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "panoscan/errors.hpp"

namespace panoscan {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

struct AxisMass {
  double mass;
  double d_mean;
  double d_sigma;
};

AxisMass axis_mass(double center, double half_step, double mean, double sigma) {
  const double lo = (center - half_step - mean) / sigma;
  const double hi = (center + half_step - mean) / sigma;
  const double pdf_lo = normal_pdf(lo);
  const double pdf_hi = normal_pdf(hi);
  return {normal_interval(lo, hi), (pdf_lo - pdf_hi) / sigma, (pdf_lo * lo - pdf_hi * hi) / sigma};
}

}  // namespace

void GmmParams::validate() const {
  const std::size_t k = weights.size();
  if (k == 0) throw ShapeError("mixture needs at least one component");
  if (means.size() != k || sigmas.size() != k) {
    throw ShapeError("mixture has " + std::to_string(k) + " weights but " + std::to_string(means.size()) +
                     " means and " + std::to_string(sigmas.size()) + " sigmas");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (!(weights[i] >= kWeightFloor * (1.0 - 1e-9))) {
      throw ConfigError("mixture weight " + std::to_string(i) + " below the weight floor");
    }
    if (!(sigmas[i].u >= kSigmaFloor * (1.0 - 1e-9)) || !(sigmas[i].v >= kSigmaFloor * (1.0 - 1e-9))) {
      throw ConfigError("mixture sigma " + std::to_string(i) + " below the sigma floor");
    }
    if (!std::isfinite(means[i].u) || !std::isfinite(means[i].v)) {
      throw ConfigError("mixture mean " + std::to_string(i) + " is not finite");
    }
    sum += weights[i];
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("mixture weights sum to " + std::to_string(sum));
}

double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

double normal_interval(double lo, double hi) {
  if (lo >= 0.0) return 0.5 * (std::erfc(lo * kInvSqrt2) - std::erfc(hi * kInvSqrt2));
  if (hi <= 0.0) return 0.5 * (std::erfc(-hi * kInvSqrt2) - std::erfc(-lo * kInvSqrt2));
  return 1.0 - 0.5 * std::erfc(hi * kInvSqrt2) - 0.5 * std::erfc(-lo * kInvSqrt2);
}

double gmm_density(const GmmParams& g, const UVPoint& p) {
  double total = 0.0;
  for (int i = 0; i < g.components(); ++i) {
    const double zu = (p.u - g.means[i].u) / g.sigmas[i].u;
    const double zv = (p.v - g.means[i].v) / g.sigmas[i].v;
    total += g.weights[i] * std::exp(-0.5 * (zu * zu + zv * zv)) /
             (2.0 * std::numbers::pi * g.sigmas[i].u * g.sigmas[i].v);
  }
  return total;
}

// Ties round up. The slack absorbs division error so that e.g. 0.3 / 0.2 lands on the tie.
double quantize(double x, const QuantizerSpec& q) { return q.step * std::floor(x / q.step + 0.5 + 1e-9); }

double gmm_mass(const GmmParams& g, const UVPoint& cell_center, const QuantizerSpec& q) {
  const double half = 0.5 * q.step;
  double total = 0.0;
  for (int i = 0; i < g.components(); ++i) {
    const double pu = axis_mass(cell_center.u, half, g.means[i].u, g.sigmas[i].u).mass;
    const double pv = axis_mass(cell_center.v, half, g.means[i].v, g.sigmas[i].v).mass;
    total += g.weights[i] * pu * pv;
  }
  return total < kMassFloor ? kMassFloor : total;
}

double code_length(const GmmParams& g, const UVPoint& target, const QuantizerSpec& q) {
  const UVPoint cell{quantize(target.u, q), quantize(target.v, q)};
  return -std::log2(gmm_mass(g, cell, q));
}

CodeLengthGrad code_length_with_grad(const GmmParams& g, const UVPoint& target, const QuantizerSpec& q) {
  const int k = g.components();
  const UVPoint cell{quantize(target.u, q), quantize(target.v, q)};
  const double half = 0.5 * q.step;

  CodeLengthGrad out;
  out.d_weights.assign(k, 0.0);
  out.d_means.assign(k, {0.0, 0.0});
  out.d_sigmas.assign(k, {0.0, 0.0});

  std::vector<AxisMass> mu(k), mv(k);
  double total = 0.0;
  for (int i = 0; i < k; ++i) {
    mu[i] = axis_mass(cell.u, half, g.means[i].u, g.sigmas[i].u);
    mv[i] = axis_mass(cell.v, half, g.means[i].v, g.sigmas[i].v);
    total += g.weights[i] * mu[i].mass * mv[i].mass;
  }
  if (total < kMassFloor) {
    out.bits = -std::log2(kMassFloor);
    out.floored = true;
    return out;
  }
  out.bits = -std::log2(total);
  const double scale = -1.0 / (total * std::numbers::ln2);
  for (int i = 0; i < k; ++i) {
    const double w = g.weights[i];
    out.d_weights[i] = scale * mu[i].mass * mv[i].mass;
    out.d_means[i] = {scale * w * mu[i].d_mean * mv[i].mass, scale * w * mu[i].mass * mv[i].d_mean};
    out.d_sigmas[i] = {scale * w * mu[i].d_sigma * mv[i].mass, scale * w * mu[i].mass * mv[i].d_sigma};
  }
  return out;
}

}  // namespace panoscan
