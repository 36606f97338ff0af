#pragma once

// Tape operators for the geometric transforms and the mixture code length.
// Viewpoints travel as 1x2 [phi, theta] and uv points as 1x2 [u, v].

#include <span>

#include "panoscan/geometry.hpp"
#include "panoscan/gmm.hpp"
#include "panoscan/tape.hpp"

namespace panoscan::ad {

Matrix row2(double a, double b);

/// Gnomonic projection of `vp` into the viewport centered at `center`; horizon clamp applies.
Var sphere_to_viewport(const Var& vp, const Var& center, const ViewportSpec& spec, bool* clamped = nullptr);

/// Inverse projection; theta is normalized into [-pi, pi).
Var viewport_to_sphere(const Var& uv, const Var& center, const ViewportSpec& spec);

/// Per-row code length in bits (B x 1) of `targets` under the mixtures
/// weights (B x K), means (B x 2K) and sigmas (B x 2K), with means and sigmas
/// interleaved as (u1, v1, u2, v2, ...). Values match code_length() exactly.
Var code_length_bits(const Var& weights, const Var& means, const Var& sigmas, std::span<const UVPoint> targets,
                     const QuantizerSpec& q);

/// Mixture described by row `row` of the three head outputs.
GmmParams gmm_row(const Matrix& weights, const Matrix& means, const Matrix& sigmas, Index row);

}  // namespace panoscan::ad
