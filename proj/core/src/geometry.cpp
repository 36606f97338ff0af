#include "panoscan/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "panoscan/errors.hpp"

namespace panoscan {

double normalize_longitude(double theta) {
  if (theta >= -kPi && theta < kPi) return theta;
  double t = std::fmod(theta + kPi, kTwoPi);
  if (t < 0.0) t += kTwoPi;
  t -= kPi;
  // fmod can land exactly on +pi after the shift because of rounding.
  if (t >= kPi) t -= kTwoPi;
  return t;
}

Viewpoint Viewpoint::normalized() const {
  return {std::clamp(phi, -kPi / 2.0, kPi / 2.0), normalize_longitude(theta)};
}

bool Viewpoint::valid() const {
  return std::isfinite(phi) && std::isfinite(theta) && phi >= -kPi / 2.0 && phi <= kPi / 2.0 &&
         theta >= -kPi && theta < kPi;
}

double ViewportSpec::radius() const { return 0.5 * width_px / std::tan(0.5 * fov_rad); }

void ViewportSpec::validate() const {
  if (width_px <= 0 || height_px <= 0) {
    throw ConfigError("viewport size must be positive, got " + std::to_string(width_px) + "x" +
                      std::to_string(height_px));
  }
  if (!(fov_rad > 0.0 && fov_rad < kPi)) {
    throw ConfigError("viewport field of view must lie in (0, pi), got " + std::to_string(fov_rad));
  }
}

int RelativePath::clamp_count() const {
  return static_cast<int>(std::count(clamped.begin(), clamped.end(), true));
}

Eigen::Vector3d euler_to_cartesian(const Viewpoint& vp, double r) {
  const auto p = kernels::unit_vector(vp.phi, vp.theta);
  return {r * p.x, r * p.y, r * p.z};
}

Eigen::Matrix3d rotation_matrix(const Viewpoint& center) {
  const auto r = kernels::rotation(center.phi, center.theta);
  Eigen::Matrix3d m;
  m << r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7], r[8];
  return m;
}

Projection sphere_to_viewport(const Viewpoint& vp, const Viewpoint& center, const ViewportSpec& spec,
                              HorizonPolicy policy) {
  bool clamped = false;
  const auto [u, v] = kernels::project(vp.phi, vp.theta, center.phi, center.theta, spec.radius(), &clamped);
  if (clamped && policy == HorizonPolicy::kThrow) {
    throw HorizonError("viewpoint is " + std::to_string(angular_distance(vp, center)) +
                       " rad from the viewport center, beyond the projection horizon");
  }
  return {{u, v}, clamped};
}

Viewpoint viewport_to_sphere(const UVPoint& p, const Viewpoint& center, const ViewportSpec& spec) {
  const auto [phi, theta] = kernels::unproject(p.u, p.v, center.phi, center.theta, spec.radius());
  return {phi, normalize_longitude(theta)};
}

ErpCoord euler_to_erp_pixel(const Viewpoint& vp, int erp_height, int erp_width) {
  const auto [m, n] = kernels::erp_pixel(vp.phi, vp.theta, erp_height, erp_width);
  return {m, n};
}

double angular_distance(const Viewpoint& a, const Viewpoint& b) {
  const auto p = kernels::unit_vector(a.phi, a.theta);
  const auto q = kernels::unit_vector(b.phi, b.theta);
  const double dot = p.x * q.x + p.y * q.y + p.z * q.z;
  const double cx = p.y * q.z - p.z * q.y;
  const double cy = p.z * q.x - p.x * q.z;
  const double cz = p.x * q.y - p.y * q.x;
  return std::atan2(std::sqrt(cx * cx + cy * cy + cz * cz), dot);
}

std::vector<RelativePath> relative_scanpath_set(std::span<const Viewpoint> path, const ViewportSpec& spec) {
  if (path.empty()) throw ShapeError("relative_scanpath_set needs at least one viewpoint");
  const std::size_t h = path.size();
  std::vector<RelativePath> out;
  out.reserve(h);
  for (std::size_t t = 1; t <= h; ++t) {
    RelativePath rel;
    rel.reference = path[h - t];
    rel.points.reserve(h);
    rel.clamped.reserve(h);
    for (const auto& vp : path) {
      const auto proj = sphere_to_viewport(vp, rel.reference, spec, HorizonPolicy::kClamp);
      rel.points.push_back(proj.uv);
      rel.clamped.push_back(proj.clamped);
    }
    out.push_back(std::move(rel));
  }
  return out;
}

}  // namespace panoscan
