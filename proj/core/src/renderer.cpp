#include "panoscan/renderer.hpp"

#include <algorithm>
#include <cmath>

#include "panoscan/dual.hpp"
#include "panoscan/errors.hpp"

namespace panoscan {

namespace {

int wrap(long i, int n) {
  const long r = i % n;
  return static_cast<int>(r < 0 ? r + n : r);
}

}  // namespace

FlowField flow_field(const Viewpoint& center, const ViewportSpec& spec, int erp_height, int erp_width) {
  spec.validate();
  if (erp_height < 1 || erp_width < 1) throw ShapeError("ERP dimensions must be positive");
  using D2 = Dual<2>;
  FlowField f;
  f.center = center.normalized();
  f.spec = spec;
  f.erp_height = erp_height;
  f.erp_width = erp_width;
  const int hv = spec.height_px, wv = spec.width_px;
  f.m.resize(hv, wv);
  f.n.resize(hv, wv);
  f.dm.resize(static_cast<Eigen::Index>(hv) * wv, 2);
  f.dn.resize(static_cast<Eigen::Index>(hv) * wv, 2);
  const double r = spec.radius();
  const D2 cphi(f.center.phi, 0), ctheta(f.center.theta, 1);
  for (int i = 0; i < hv; ++i) {
    const D2 v(i - 0.5 * (hv - 1));
    for (int j = 0; j < wv; ++j) {
      const D2 u(j - 0.5 * (wv - 1));
      const auto [phi, theta] = kernels::unproject(u, v, cphi, ctheta, r);
      const auto [m, n] = kernels::erp_pixel(phi, theta, erp_height, erp_width);
      const Eigen::Index p = static_cast<Eigen::Index>(i) * wv + j;
      f.m(i, j) = m.v;
      f.n(i, j) = n.v;
      f.dm(p, 0) = m.d[0];
      f.dm(p, 1) = m.d[1];
      f.dn(p, 0) = n.d[0];
      f.dn(p, 1) = n.d[1];
    }
  }
  return f;
}

BilinearResult bilinear_sample_with_grad(const ErpFrame& frame, const FlowField& field) {
  if (frame.empty()) throw EmptyVideo("cannot sample an empty frame");
  if (frame.height != field.erp_height || frame.width != field.erp_width) {
    throw ShapeError("flow field was built for a different ERP size");
  }
  const int hv = static_cast<int>(field.m.rows()), wv = static_cast<int>(field.m.cols());
  const int he = frame.height, we = frame.width;
  BilinearResult out;
  out.image = Image(hv, wv);
  out.d_dm.resize(static_cast<Eigen::Index>(hv) * wv, 3);
  out.d_dn.resize(static_cast<Eigen::Index>(hv) * wv, 3);
  for (int i = 0; i < hv; ++i) {
    for (int j = 0; j < wv; ++j) {
      const double m = field.m(i, j), n = field.n(i, j);
      int i0, i1;
      double fm;
      bool m_clamped = false;
      if (m <= 0.0) {
        i0 = i1 = 0;
        fm = 0.0;
        m_clamped = m < 0.0;
        if (!m_clamped && he > 1) i1 = 1;
      } else if (m >= he - 1) {
        i0 = i1 = he - 1;
        fm = 0.0;
        m_clamped = true;
      } else {
        i0 = static_cast<int>(std::floor(m));
        i1 = i0 + 1;
        fm = m - i0;
      }
      const double nf = std::floor(n);
      const double fn = n - nf;
      const int j0 = wrap(static_cast<long>(nf), we);
      const int j1 = wrap(static_cast<long>(nf) + 1, we);
      const Eigen::Index p = static_cast<Eigen::Index>(i) * wv + j;
      for (int c = 0; c < 3; ++c) {
        const double p00 = frame.at(i0, j0, c), p01 = frame.at(i0, j1, c);
        const double p10 = frame.at(i1, j0, c), p11 = frame.at(i1, j1, c);
        const double top = p00 + fn * (p01 - p00);
        const double bottom = p10 + fn * (p11 - p10);
        const double lo = std::min({p00, p01, p10, p11});
        const double hi = std::max({p00, p01, p10, p11});
        out.image.rgb(p, c) = std::clamp(top + fm * (bottom - top), lo, hi);
        out.d_dn(p, c) = (1.0 - fm) * (p01 - p00) + fm * (p11 - p10);
        out.d_dm(p, c) = m_clamped ? 0.0 : bottom - top;
      }
    }
  }
  return out;
}

Image bilinear_sample(const ErpFrame& frame, const FlowField& field) {
  return bilinear_sample_with_grad(frame, field).image;
}

Image render_viewport(const ErpFrame& frame, const Viewpoint& center, const ViewportSpec& spec) {
  return bilinear_sample(frame, flow_field(center, spec, frame.height, frame.width));
}

std::vector<int> sequence_indices(int path_length, int sequence_length) {
  if (path_length < 1) throw EmptyPath("scanpath is empty");
  if (sequence_length < 1) throw ConfigError("sequence length must be positive");
  std::vector<int> idx(sequence_length, 0);
  if (sequence_length == 1) return idx;
  const long span = path_length - 1;
  for (int k = 0; k < sequence_length; ++k) idx[k] = static_cast<int>(k * span / (sequence_length - 1));
  return idx;
}

int nearest_frame(double t, const Video& video) {
  const int count = static_cast<int>(video.frames.size());
  if (count == 0) throw EmptyVideo("video has no frames");
  if (count == 1 || video.fps <= 0.0) return 0;
  const double idx = std::round(t * video.fps);
  return static_cast<int>(std::clamp(idx, 0.0, static_cast<double>(count - 1)));
}

ViewportSequence render_sequence(const Video& video, const Scanpath& path, int sequence_length,
                                 const ViewportSpec& spec) {
  if (video.frames.empty()) throw EmptyVideo("video has no frames");
  if (path.points.empty()) throw EmptyPath("scanpath is empty");
  ViewportSequence seq;
  for (int idx : sequence_indices(static_cast<int>(path.points.size()), sequence_length)) {
    const double t = idx / path.rate_hz;
    const int f = nearest_frame(t, video);
    seq.frames.push_back(render_viewport(video.frames[f], path.points[idx], spec));
    seq.source_times.push_back(t);
    seq.source_viewpoints.push_back(path.points[idx]);
    seq.path_indices.push_back(idx);
    seq.frame_indices.push_back(f);
  }
  return seq;
}

namespace ad {

Var render_viewport(const Var& center, const ErpFrame& frame, const ViewportSpec& spec) {
  if (center.rows() != 1 || center.cols() != 2) throw ShapeError("viewport center must be a 1x2 row");
  const Viewpoint c{center.value()(0, 0), center.value()(0, 1)};
  const FlowField field = flow_field(c, spec, frame.height, frame.width);
  BilinearResult res = bilinear_sample_with_grad(frame, field);
  // d value / d center = d_dm * dm + d_dn * dn, per pixel and channel.
  Matrix jac_phi = res.d_dm.array().colwise() * field.dm.col(0).array();
  jac_phi.array() += res.d_dn.array().colwise() * field.dn.col(0).array();
  Matrix jac_theta = res.d_dm.array().colwise() * field.dm.col(1).array();
  jac_theta.array() += res.d_dn.array().colwise() * field.dn.col(1).array();
  const int parent = center.id();
  return center.tape()->record(
      std::move(res.image.rgb), {parent},
      [parent, jp = std::move(jac_phi), jt = std::move(jac_theta)](Tape& tp, int self) {
        const Matrix& g = tp.grad_ref(self);
        Matrix& gc = tp.grad_ref(parent);
        gc(0, 0) += g.cwiseProduct(jp).sum();
        gc(0, 1) += g.cwiseProduct(jt).sum();
      });
}

std::vector<Var> render_sequence(std::span<const Var> path, const Video& video, int sequence_length,
                                 const ViewportSpec& spec, double rate_hz) {
  if (video.frames.empty()) throw EmptyVideo("video has no frames");
  if (path.empty()) throw EmptyPath("scanpath is empty");
  std::vector<Var> frames;
  for (int idx : sequence_indices(static_cast<int>(path.size()), sequence_length)) {
    const int f = nearest_frame(idx / rate_hz, video);
    frames.push_back(render_viewport(path[idx], video.frames[f], spec));
  }
  return frames;
}

}  // namespace ad

}  // namespace panoscan
