#pragma once

// Scanpath fidelity (OD, minOD, TC, maxTC), quality correlation (SRCC,
// PLCC, PLCC after a monotonic logistic fit) and scanpath saliency maps.

#include <Eigen/Core>

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "panoscan/generator.hpp"

namespace panoscan {

/// Mean great-circle distance between corresponding viewpoints, in radians.
double od(const Scanpath& a, const Scanpath& b);

/// Mean of the latitude and unwrapped-longitude Pearson correlations.
/// Throws DegenerateSeries when any series is constant.
double tc(const Scanpath& a, const Scanpath& b);

/// Longitudes with 2*pi jumps removed.
std::vector<double> unwrap_longitude(std::span<const double> theta);

struct SetMetric {
  double value = 0.0;
  int best_a = -1;  // index into the first set
  int best_b = -1;  // index into the second set
  int degenerate_pairs = 0;
  std::vector<std::vector<double>> table;  // per-pair values, NaN for degenerate pairs
};

SetMetric min_od(std::span<const Scanpath> a, std::span<const Scanpath> b);
/// Degenerate pairs are skipped and counted; throws DegenerateSeries when every pair is degenerate.
SetMetric max_tc(std::span<const Scanpath> a, std::span<const Scanpath> b);

/// Pearson correlation; throws DegenerateSeries on a constant input.
double pearson(std::span<const double> x, std::span<const double> y);
/// Average ranks (ties share their mean rank), 1-based.
std::vector<double> average_ranks(std::span<const double> x);
double srcc(std::span<const double> x, std::span<const double> y);

struct LogisticFit {
  double plcc = 0.0;      // PLCC of the mapped predictions
  double raw_plcc = 0.0;  // PLCC without mapping
  std::array<double, 4> beta{};
  int iterations = 0;
  bool converged = false;
  bool affine_limit = false;  // the fit did not beat the best affine map, which the model reaches as |beta4| grows
  bool fallback = false;      // the fit failed; plcc equals raw_plcc
  std::string model = "logistic4";
};

/// Four-parameter logistic (b1 - b2) / (1 + exp(-(q - b3) / |b4|)) + b2
/// fitted by Levenberg-Marquardt, then PLCC of the fitted values.
LogisticFit plcc_logistic(std::span<const double> pred, std::span<const double> labels, int max_iterations = 200);

double logistic4(double q, const std::array<double, 4>& beta);

/// ERP heatmap (He x We) of isotropic spherical Gaussians centered on every
/// viewpoint, weighted by pixel solid angle and normalized to sum 1.
Eigen::MatrixXd saliency_from_scanpaths(std::span<const Scanpath> paths, int erp_height, int erp_width,
                                        double kernel_deg);

/// PGM plus a JSON sidecar (same stem, .json) holding the normalization constants.
void write_heatmap(const Eigen::MatrixXd& heatmap, const std::filesystem::path& pgm_path, double kernel_deg);

}  // namespace panoscan
