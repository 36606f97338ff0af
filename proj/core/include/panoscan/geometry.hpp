#pragma once

// Coordinate systems used throughout the library:
//   * Euler: latitude phi in [-pi/2, pi/2], longitude theta in [-pi, pi).
//   * Cartesian: x = r cos(phi) cos(theta), y = r cos(phi) sin(theta), z = r sin(phi).
//   * Viewport plane: gnomonic projection onto x = r after rotating the view
//     center onto +x; u grows to the right, v grows downward, origin at the
//     viewport center.
//   * ERP pixels: continuous (row m, column n) with pixel centers on integers.

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "panoscan/dual.hpp"

namespace panoscan {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Points closer than this to the projection horizon are clamped (radians).
inline constexpr double kHorizonEpsilon = 1e-3;

/// Wraps a longitude into [-pi, pi).
double normalize_longitude(double theta);

struct Viewpoint {
  double phi = 0.0;
  double theta = 0.0;

  /// Copy with theta wrapped into [-pi, pi) and phi clamped to the poles.
  Viewpoint normalized() const;
  bool valid() const;
  friend bool operator==(const Viewpoint&, const Viewpoint&) = default;
};

struct UVPoint {
  double u = 0.0;
  double v = 0.0;
  friend bool operator==(const UVPoint&, const UVPoint&) = default;
};

struct ViewportSpec {
  int width_px = 224;
  int height_px = 224;
  double fov_rad = kPi / 2.0;

  /// Radius of the projection sphere, 0.5 * width * cot(0.5 * fov).
  double radius() const;
  /// Throws ConfigError when any field is out of range.
  void validate() const;
};

struct ErpCoord {
  double m = 0.0;  // row
  double n = 0.0;  // column
};

struct Projection {
  UVPoint uv;
  bool clamped = false;
};

enum class HorizonPolicy { kThrow, kClamp };

struct RelativePath {
  Viewpoint reference;
  std::vector<UVPoint> points;
  std::vector<bool> clamped;

  int clamp_count() const;
};

Eigen::Vector3d euler_to_cartesian(const Viewpoint& vp, double r);

/// R = R2 * R1; maps +x onto the direction of `center`.
Eigen::Matrix3d rotation_matrix(const Viewpoint& center);

Projection sphere_to_viewport(const Viewpoint& vp, const Viewpoint& center, const ViewportSpec& spec,
                              HorizonPolicy policy = HorizonPolicy::kClamp);

Viewpoint viewport_to_sphere(const UVPoint& p, const Viewpoint& center, const ViewportSpec& spec);

ErpCoord euler_to_erp_pixel(const Viewpoint& vp, int erp_height, int erp_width);

/// Great-circle distance in radians.
double angular_distance(const Viewpoint& a, const Viewpoint& b);

/// One relative path per reference s[H-1], s[H-2], ..., s[0], each holding all H points.
std::vector<RelativePath> relative_scanpath_set(std::span<const Viewpoint> path, const ViewportSpec& spec);

// Scalar-generic kernels shared by the plain functions above and by the
// differentiable operators (instantiated with Dual<N>).
namespace kernels {

template <class T>
struct Vec3 {
  T x, y, z;
};

template <class T>
std::array<T, 9> rotation(const T& phi, const T& theta) {
  using std::cos;
  using std::sin;
  const T a = cos(theta);
  const T b = sin(theta);
  const T c = cos(phi);
  const T d = sin(phi);
  const T omc = 1.0 - c;
  // R1 = [[a, -b, 0], [b, a, 0], [0, 0, 1]]
  const std::array<T, 9> r2 = {c + omc * b * b, -(omc * a * b), -(d * a),  //
                               -(omc * a * b),  c + omc * a * a, -(d * b),  //
                               d * a,           d * b,           c};
  std::array<T, 9> out;
  for (int i = 0; i < 3; ++i) {
    const T& p = r2[i * 3 + 0];
    const T& q = r2[i * 3 + 1];
    const T& s = r2[i * 3 + 2];
    out[i * 3 + 0] = p * a + q * b;
    out[i * 3 + 1] = q * a - p * b;
    out[i * 3 + 2] = s;
  }
  return out;
}

template <class T>
Vec3<T> unit_vector(const T& phi, const T& theta) {
  using std::cos;
  using std::sin;
  const T cp = cos(phi);
  return {cp * cos(theta), cp * sin(theta), sin(phi)};
}

/// Gnomonic projection of (phi, theta) into the viewport centered at
/// (cphi, ctheta). Sets *clamped when the horizon clamp was applied.
template <class T>
std::pair<T, T> project(const T& phi, const T& theta, const T& cphi, const T& ctheta, double r,
                        bool* clamped) {
  using std::sqrt;
  const auto rot = rotation(cphi, ctheta);
  const auto p = unit_vector(phi, theta);
  // q = R^T p
  T qx = rot[0] * p.x + rot[3] * p.y + rot[6] * p.z;
  T qy = rot[1] * p.x + rot[4] * p.y + rot[7] * p.z;
  T qz = rot[2] * p.x + rot[5] * p.y + rot[8] * p.z;
  const double min_cos = std::sin(kHorizonEpsilon);
  *clamped = false;
  if (value_of(qx) < min_cos) {
    *clamped = true;
    const T lateral2 = qy * qy + qz * qz;
    const double cos_e = std::cos(kHorizonEpsilon);
    if (value_of(lateral2) > 0.0) {
      const T s = sqrt(lateral2);
      qy = cos_e * qy / s;
      qz = cos_e * qz / s;
    } else {
      qy = T(cos_e);
      qz = T(0.0);
    }
    qx = T(min_cos);
  }
  return {r * qy / qx, -(r * qz / qx)};
}

/// Inverse gnomonic projection; the returned theta lies in (-pi, pi].
template <class T>
std::pair<T, T> unproject(const T& u, const T& v, const T& cphi, const T& ctheta, double r) {
  using std::atan2;
  using std::sqrt;
  const auto rot = rotation(cphi, ctheta);
  const T qx(r);
  const T qy = u;
  const T qz = -v;
  const T wx = rot[0] * qx + rot[1] * qy + rot[2] * qz;
  const T wy = rot[3] * qx + rot[4] * qy + rot[5] * qz;
  const T wz = rot[6] * qx + rot[7] * qy + rot[8] * qz;
  const T horiz = sqrt(wx * wx + wy * wy);
  return {atan2(wz, horiz), atan2(wy, wx)};
}

template <class T>
std::pair<T, T> erp_pixel(const T& phi, const T& theta, int erp_height, int erp_width) {
  return {(0.5 - phi / kPi) * static_cast<double>(erp_height) - 0.5,
          (theta / kTwoPi + 0.5) * static_cast<double>(erp_width) - 0.5};
}

}  // namespace kernels

}  // namespace panoscan
