#pragma once

// Differentiable viewport extraction from ERP frames.
//
// Viewport pixel (i, j) sits at uv = (j - (Wv-1)/2, i - (Hv-1)/2). Its ray is
// mapped back to the sphere and then to continuous ERP coordinates (m, n);
// the frame is sampled bilinearly with n wrapping around the panorama and m
// clamped at the poles.

#include <Eigen/Core>

#include <vector>

#include "panoscan/generator.hpp"
#include "panoscan/geometry.hpp"
#include "panoscan/image.hpp"
#include "panoscan/tape.hpp"

namespace panoscan {

struct FlowField {
  Viewpoint center;  // normalized
  ViewportSpec spec;
  int erp_height = 0;
  int erp_width = 0;
  Eigen::MatrixXd m;        // Hv x Wv rows
  Eigen::MatrixXd n;        // Hv x Wv columns
  Eigen::MatrixXd dm, dn;   // (Hv*Wv) x 2, derivatives with respect to center (phi, theta)
};

FlowField flow_field(const Viewpoint& center, const ViewportSpec& spec, int erp_height, int erp_width);

struct BilinearResult {
  Image image;
  Eigen::MatrixXd d_dm;  // (Hv*Wv) x 3, derivative of each output value in m
  Eigen::MatrixXd d_dn;  // (Hv*Wv) x 3, derivative in n
};

/// Bilinear sampling; at integer coordinates the derivative comes from the
/// cell on the increasing side. Clamped rows contribute no m-derivative.
BilinearResult bilinear_sample_with_grad(const ErpFrame& frame, const FlowField& field);
Image bilinear_sample(const ErpFrame& frame, const FlowField& field);

/// flow_field followed by bilinear_sample.
Image render_viewport(const ErpFrame& frame, const Viewpoint& center, const ViewportSpec& spec);

struct ViewportSequence {
  std::vector<Image> frames;
  std::vector<double> source_times;
  std::vector<Viewpoint> source_viewpoints;
  std::vector<int> path_indices;
  std::vector<int> frame_indices;
};

/// floor(k * (P - 1) / (L - 1)) for k = 0..L-1; {0} when L = 1.
std::vector<int> sequence_indices(int path_length, int sequence_length);

/// Video frame nearest in time to t seconds (frame 0 for stills).
int nearest_frame(double t, const Video& video);

/// Throws EmptyVideo / EmptyPath.
ViewportSequence render_sequence(const Video& video, const Scanpath& path, int sequence_length,
                                 const ViewportSpec& spec);

namespace ad {

/// Viewport rendered from `frame` around the 1x2 center Var; output is (Hv*Wv) x 3.
Var render_viewport(const Var& center, const ErpFrame& frame, const ViewportSpec& spec);

/// Differentiable counterpart of render_sequence over a tape scanpath.
std::vector<Var> render_sequence(std::span<const Var> path, const Video& video, int sequence_length,
                                 const ViewportSpec& spec, double rate_hz = kScanpathRateHz);

}  // namespace ad

}  // namespace panoscan
