#include "panoscan/diff_ops.hpp"

#include <string>

#include "panoscan/dual.hpp"
#include "panoscan/errors.hpp"

namespace panoscan::ad {

namespace {

void require_row2(const Var& v, const char* what) {
  if (v.rows() != 1 || v.cols() != 2) throw ShapeError(std::string(what) + " must be a 1x2 row");
}

using D4 = Dual<4>;

// Output (2) and Jacobian (2x4) with respect to [a0, a1, c0, c1].
struct Local {
  double out0, out1;
  Eigen::Matrix<double, 2, 4> jac;
};

void backward_row2(Tape& tp, int self, int pa, int pc, const Eigen::Matrix<double, 2, 4>& jac) {
  const Matrix& g = tp.grad_ref(self);
  const Eigen::RowVector4d up = g.row(0) * jac;
  if (tp.needs_grad(pa)) {
    Matrix& ga = tp.grad_ref(pa);
    ga(0, 0) += up(0);
    ga(0, 1) += up(1);
  }
  if (tp.needs_grad(pc)) {
    Matrix& gc = tp.grad_ref(pc);
    gc(0, 0) += up(2);
    gc(0, 1) += up(3);
  }
}

}  // namespace

Matrix row2(double a, double b) {
  Matrix m(1, 2);
  m << a, b;
  return m;
}

Var sphere_to_viewport(const Var& vp, const Var& center, const ViewportSpec& spec, bool* clamped) {
  require_row2(vp, "viewpoint");
  require_row2(center, "center");
  const D4 phi(vp.value()(0, 0), 0), theta(vp.value()(0, 1), 1);
  const D4 cphi(center.value()(0, 0), 2), ctheta(center.value()(0, 1), 3);
  bool was_clamped = false;
  const auto [u, v] = kernels::project(phi, theta, cphi, ctheta, spec.radius(), &was_clamped);
  if (clamped != nullptr) *clamped = was_clamped;
  Eigen::Matrix<double, 2, 4> jac;
  for (int j = 0; j < 4; ++j) {
    jac(0, j) = u.d[j];
    jac(1, j) = v.d[j];
  }
  const int pa = vp.id(), pc = center.id();
  return vp.tape()->record(row2(u.v, v.v), {pa, pc},
                           [pa, pc, jac](Tape& tp, int self) { backward_row2(tp, self, pa, pc, jac); });
}

Var viewport_to_sphere(const Var& uv, const Var& center, const ViewportSpec& spec) {
  require_row2(uv, "uv point");
  require_row2(center, "center");
  const D4 u(uv.value()(0, 0), 0), v(uv.value()(0, 1), 1);
  const D4 cphi(center.value()(0, 0), 2), ctheta(center.value()(0, 1), 3);
  const auto [phi, theta] = kernels::unproject(u, v, cphi, ctheta, spec.radius());
  Eigen::Matrix<double, 2, 4> jac;
  for (int j = 0; j < 4; ++j) {
    jac(0, j) = phi.d[j];
    jac(1, j) = theta.d[j];
  }
  const int pa = uv.id(), pc = center.id();
  return uv.tape()->record(row2(phi.v, normalize_longitude(theta.v)), {pa, pc},
                           [pa, pc, jac](Tape& tp, int self) { backward_row2(tp, self, pa, pc, jac); });
}

GmmParams gmm_row(const Matrix& weights, const Matrix& means, const Matrix& sigmas, Index row) {
  const Index k = weights.cols();
  GmmParams g;
  g.weights.resize(k);
  g.means.resize(k);
  g.sigmas.resize(k);
  for (Index i = 0; i < k; ++i) {
    g.weights[i] = weights(row, i);
    g.means[i] = {means(row, 2 * i), means(row, 2 * i + 1)};
    g.sigmas[i] = {sigmas(row, 2 * i), sigmas(row, 2 * i + 1)};
  }
  return g;
}

Var code_length_bits(const Var& weights, const Var& means, const Var& sigmas, std::span<const UVPoint> targets,
                     const QuantizerSpec& q) {
  const Index batch = weights.rows();
  const Index k = weights.cols();
  if (means.rows() != batch || sigmas.rows() != batch || means.cols() != 2 * k || sigmas.cols() != 2 * k ||
      static_cast<Index>(targets.size()) != batch) {
    throw ShapeError("code_length_bits: inconsistent batch shapes");
  }
  Matrix bits(batch, 1);
  Matrix dw(batch, k), dm(batch, 2 * k), ds(batch, 2 * k);
  for (Index b = 0; b < batch; ++b) {
    const auto grad = code_length_with_grad(gmm_row(weights.value(), means.value(), sigmas.value(), b), targets[b], q);
    bits(b, 0) = grad.bits;
    for (Index i = 0; i < k; ++i) {
      dw(b, i) = grad.d_weights[i];
      dm(b, 2 * i) = grad.d_means[i].u;
      dm(b, 2 * i + 1) = grad.d_means[i].v;
      ds(b, 2 * i) = grad.d_sigmas[i].u;
      ds(b, 2 * i + 1) = grad.d_sigmas[i].v;
    }
  }
  const int pw = weights.id(), pm = means.id(), ps = sigmas.id();
  return weights.tape()->record(
      std::move(bits), {pw, pm, ps},
      [pw, pm, ps, dw = std::move(dw), dm = std::move(dm), ds = std::move(ds)](Tape& tp, int self) {
        const Eigen::VectorXd g = tp.grad_ref(self).col(0);
        if (tp.needs_grad(pw)) tp.grad_ref(pw) += g.asDiagonal() * dw;
        if (tp.needs_grad(pm)) tp.grad_ref(pm) += g.asDiagonal() * dm;
        if (tp.needs_grad(ps)) tp.grad_ref(ps) += g.asDiagonal() * ds;
      });
}

}  // namespace panoscan::ad
