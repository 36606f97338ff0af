#include "panoscan/tape.hpp"

#include <cmath>
#include <string>

#include "panoscan/errors.hpp"

namespace panoscan::ad {

namespace {

Tape& same_tape(const Var& a, const Var& b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) throw ShapeError("operands live on different tapes");
  return *a.tape();
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

// Convenience for unary elementwise ops: backward multiplies the incoming
// adjoint by a precomputed local derivative.
Var unary(const Var& a, Matrix value, Matrix local) {
  Tape& t = *a.tape();
  const int pa = a.id();
  return t.record(std::move(value), {pa}, [pa, local = std::move(local)](Tape& tp, int self) {
    tp.grad_ref(pa).array() += tp.grad_ref(self).array() * local.array();
  });
}

}  // namespace

const Matrix& Var::value() const { return tape_->value(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ShapeError("scalar() on a " + std::to_string(v.rows()) + "x" + std::to_string(v.cols()));
  return v(0, 0);
}

Var Tape::variable(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Matrix value, std::vector<int> parents, Backward backward) {
  Node n;
  n.value = std::move(value);
  for (int p : parents) n.needs_grad = n.needs_grad || nodes_[p].needs_grad;
  if (n.needs_grad) {
    n.parents = std::move(parents);
    n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Matrix& Tape::grad_ref(int id) {
  Node& n = nodes_[id];
  if (!n.grad_ready) {
    n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    n.grad_ready = true;
  }
  return n.grad;
}

Matrix Tape::grad(const Var& v) const {
  const Node& n = nodes_[v.id()];
  if (!n.grad_ready) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(const Var& output) {
  if (output.value().size() != 1) throw ShapeError("backward() without a seed needs a 1x1 output");
  backward(output, Matrix::Ones(1, 1));
}

void Tape::backward(const Var& output, const Matrix& seed) {
  if (seed.rows() != output.rows() || seed.cols() != output.cols()) throw ShapeError("backward seed shape mismatch");
  grad_ref(output.id()) += seed;
  for (int id = output.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.grad_ready || !n.backward) continue;
    n.backward(*this, id);
  }
}

Var operator+(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tape& t = same_tape(a, b);
  const int pa = a.id(), pb = b.id();
  return t.record(a.value() + b.value(), {pa, pb}, [pa, pb](Tape& tp, int self) {
    const Matrix& g = tp.grad_ref(self);
    if (tp.needs_grad(pa)) tp.grad_ref(pa) += g;
    if (tp.needs_grad(pb)) tp.grad_ref(pb) += g;
  });
}

Var operator-(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tape& t = same_tape(a, b);
  const int pa = a.id(), pb = b.id();
  return t.record(a.value() - b.value(), {pa, pb}, [pa, pb](Tape& tp, int self) {
    const Matrix& g = tp.grad_ref(self);
    if (tp.needs_grad(pa)) tp.grad_ref(pa) += g;
    if (tp.needs_grad(pb)) tp.grad_ref(pb) -= g;
  });
}

Var operator-(const Var& a) { return -1.0 * a; }

Var operator*(double s, const Var& a) {
  const int pa = a.id();
  return a.tape()->record(s * a.value(), {pa}, [pa, s](Tape& tp, int self) { tp.grad_ref(pa) += s * tp.grad_ref(self); });
}

Var hadamard(const Var& a, const Var& b) {
  require_same_shape(a, b, "hadamard");
  Tape& t = same_tape(a, b);
  const int pa = a.id(), pb = b.id();
  return t.record(a.value().cwiseProduct(b.value()), {pa, pb}, [pa, pb](Tape& tp, int self) {
    const Matrix& g = tp.grad_ref(self);
    if (tp.needs_grad(pa)) tp.grad_ref(pa) += g.cwiseProduct(tp.value(pb));
    if (tp.needs_grad(pb)) tp.grad_ref(pb) += g.cwiseProduct(tp.value(pa));
  });
}

Var add_scalar(const Var& a, double s) {
  const int pa = a.id();
  return a.tape()->record(a.value().array() + s, {pa}, [pa](Tape& tp, int self) { tp.grad_ref(pa) += tp.grad_ref(self); });
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols()) + " and " + std::to_string(b.rows()));
  }
  Tape& t = same_tape(a, b);
  const int pa = a.id(), pb = b.id();
  Matrix value = a.value() * b.value();
  return t.record(std::move(value), {pa, pb}, [pa, pb](Tape& tp, int self) {
    const Matrix& g = tp.grad_ref(self);
    if (tp.needs_grad(pa)) tp.grad_ref(pa).noalias() += g * tp.value(pb).transpose();
    if (tp.needs_grad(pb)) tp.grad_ref(pb).noalias() += tp.value(pa).transpose() * g;
  });
}

Var add_row(const Var& m, const Var& row) {
  if (row.rows() != 1 || row.cols() != m.cols()) throw ShapeError("add_row: row must be 1 x cols(m)");
  Tape& t = same_tape(m, row);
  const int pm = m.id(), pr = row.id();
  Matrix value = m.value().rowwise() + row.value().row(0);
  return t.record(std::move(value), {pm, pr}, [pm, pr](Tape& tp, int self) {
    const Matrix& g = tp.grad_ref(self);
    if (tp.needs_grad(pm)) tp.grad_ref(pm) += g;
    if (tp.needs_grad(pr)) tp.grad_ref(pr) += g.colwise().sum();
  });
}

Var scale_by(const Var& m, const Var& s) {
  if (s.value().size() != 1) throw ShapeError("scale_by: scale must be 1x1");
  Tape& t = same_tape(m, s);
  const int pm = m.id(), ps = s.id();
  return t.record(m.value() * s.scalar(), {pm, ps}, [pm, ps](Tape& tp, int self) {
    const Matrix& g = tp.grad_ref(self);
    if (tp.needs_grad(pm)) tp.grad_ref(pm) += g * tp.value(ps)(0, 0);
    if (tp.needs_grad(ps)) tp.grad_ref(ps)(0, 0) += g.cwiseProduct(tp.value(pm)).sum();
  });
}

Var tanh(const Var& a) {
  Matrix y = a.value().array().tanh();
  Matrix local = 1.0 - y.array().square();
  return unary(a, std::move(y), std::move(local));
}

Var softplus(const Var& a) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  Matrix local(x.rows(), x.cols());
  for (Index i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    // log(1 + e^v) = max(v, 0) + log1p(e^-|v|)
    y.data()[i] = std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v)));
    local.data()[i] = 1.0 / (1.0 + std::exp(-v));
  }
  return unary(a, std::move(y), std::move(local));
}

Var exp(const Var& a) {
  Matrix y = a.value().array().exp();
  Matrix local = y;
  return unary(a, std::move(y), std::move(local));
}

Var log(const Var& a) {
  Matrix y = a.value().array().log();
  Matrix local = a.value().array().inverse();
  return unary(a, std::move(y), std::move(local));
}

Var sqrt(const Var& a) {
  Matrix y = a.value().array().sqrt();
  Matrix local = 0.5 * y.array().inverse();
  return unary(a, std::move(y), std::move(local));
}

Var square(const Var& a) {
  Matrix y = a.value().array().square();
  Matrix local = 2.0 * a.value().array();
  return unary(a, std::move(y), std::move(local));
}

Var normal_cdf(const Var& a) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  Matrix local(x.rows(), x.cols());
  for (Index i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    y.data()[i] = 0.5 * std::erfc(-v * 0.70710678118654752440);
    local.data()[i] = 0.39894228040143267794 * std::exp(-0.5 * v * v);
  }
  return unary(a, std::move(y), std::move(local));
}

Var softmax_rows(const Var& a) {
  Matrix y = a.value();
  for (Index r = 0; r < y.rows(); ++r) {
    const double top = y.row(r).maxCoeff();
    y.row(r) = (y.row(r).array() - top).exp();
    y.row(r) /= y.row(r).sum();
  }
  const int pa = a.id();
  return a.tape()->record(y, {pa}, [pa](Tape& tp, int self) {
    const Matrix& g = tp.grad_ref(self);
    const Matrix& s = tp.value(self);
    Matrix& out = tp.grad_ref(pa);
    for (Index r = 0; r < s.rows(); ++r) {
      const double dot = g.row(r).dot(s.row(r));
      out.row(r).array() += s.row(r).array() * (g.row(r).array() - dot);
    }
  });
}

Var sum(const Var& a) {
  const int pa = a.id();
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  return a.tape()->record(std::move(v), {pa}, [pa](Tape& tp, int self) {
    tp.grad_ref(pa).array() += tp.grad_ref(self)(0, 0);
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  return (1.0 / n) * sum(a);
}

Var row_sums(const Var& a) {
  const int pa = a.id();
  Matrix v = a.value().rowwise().sum();
  return a.tape()->record(std::move(v), {pa}, [pa](Tape& tp, int self) {
    tp.grad_ref(pa).colwise() += tp.grad_ref(self).col(0);
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols of nothing");
  Tape& t = *parts.front().tape();
  const Index rows = parts.front().rows();
  Index cols = 0;
  std::vector<int> ids;
  std::vector<Index> offsets;
  for (const auto& p : parts) {
    if (p.tape() != &t || p.rows() != rows) throw ShapeError("concat_cols: incompatible parts");
    offsets.push_back(cols);
    cols += p.cols();
    ids.push_back(p.id());
  }
  Matrix v(rows, cols);
  for (std::size_t i = 0; i < parts.size(); ++i) v.middleCols(offsets[i], parts[i].cols()) = parts[i].value();
  return t.record(std::move(v), ids, [ids, offsets](Tape& tp, int self) {
    const Matrix& g = tp.grad_ref(self);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!tp.needs_grad(ids[i])) continue;
      Matrix& out = tp.grad_ref(ids[i]);
      out += g.middleCols(offsets[i], out.cols());
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows of nothing");
  Tape& t = *parts.front().tape();
  const Index cols = parts.front().cols();
  Index rows = 0;
  std::vector<int> ids;
  std::vector<Index> offsets;
  for (const auto& p : parts) {
    if (p.tape() != &t || p.cols() != cols) throw ShapeError("concat_rows: incompatible parts");
    offsets.push_back(rows);
    rows += p.rows();
    ids.push_back(p.id());
  }
  Matrix v(rows, cols);
  for (std::size_t i = 0; i < parts.size(); ++i) v.middleRows(offsets[i], parts[i].rows()) = parts[i].value();
  return t.record(std::move(v), ids, [ids, offsets](Tape& tp, int self) {
    const Matrix& g = tp.grad_ref(self);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!tp.needs_grad(ids[i])) continue;
      Matrix& out = tp.grad_ref(ids[i]);
      out += g.middleRows(offsets[i], out.rows());
    }
  });
}

Var slice_cols(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeError("slice_cols out of range");
  const int pa = a.id();
  return a.tape()->record(a.value().middleCols(start, count), {pa}, [pa, start, count](Tape& tp, int self) {
    tp.grad_ref(pa).middleCols(start, count) += tp.grad_ref(self);
  });
}

Var slice_rows(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw ShapeError("slice_rows out of range");
  const int pa = a.id();
  return a.tape()->record(a.value().middleRows(start, count), {pa}, [pa, start, count](Tape& tp, int self) {
    tp.grad_ref(pa).middleRows(start, count) += tp.grad_ref(self);
  });
}

Var reshape_rows(const Var& a, Index rows, Index cols) {
  if (rows * cols != a.value().size()) throw ShapeError("reshape_rows: size mismatch");
  const Index src_cols = a.cols();
  Matrix v(rows, cols);
  const Matrix& x = a.value();
  for (Index k = 0; k < rows * cols; ++k) v(k / cols, k % cols) = x(k / src_cols, k % src_cols);
  const int pa = a.id();
  return a.tape()->record(std::move(v), {pa}, [pa, rows, cols, src_cols](Tape& tp, int self) {
    const Matrix& g = tp.grad_ref(self);
    Matrix& out = tp.grad_ref(pa);
    for (Index k = 0; k < rows * cols; ++k) out(k / src_cols, k % src_cols) += g(k / cols, k % cols);
  });
}

Var straight_through(const Matrix& forward, const Var& surrogate) {
  if (forward.rows() != surrogate.rows() || forward.cols() != surrogate.cols()) {
    throw ShapeError("straight_through: shape mismatch");
  }
  const int ps = surrogate.id();
  return surrogate.tape()->record(forward, {ps}, [ps](Tape& tp, int self) { tp.grad_ref(ps) += tp.grad_ref(self); });
}

}  // namespace panoscan::ad
