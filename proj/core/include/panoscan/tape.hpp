#pragma once

// Reverse-mode differentiation over dense matrices.
//
// A Tape records every operation applied to its Vars. Calling backward() on a
// scalar output propagates adjoints to all recorded nodes in reverse order.
// Each tape supports one backward pass per forward recording; build a new tape
// (or call clear()) for the next iteration.

#include <Eigen/Core>

#include <deque>
#include <functional>
#include <span>
#include <vector>

namespace panoscan::ad {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

class Tape;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  /// Value of a 1x1 Var.
  double scalar() const;

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  /// Called during backward with the tape and the node's own id.
  using Backward = std::function<void(Tape&, int)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf whose gradient is tracked.
  Var variable(Matrix value);
  /// Leaf without gradient.
  Var constant(Matrix value);
  /// Records an operation. `backward` is skipped when no parent needs a gradient.
  Var record(Matrix value, std::vector<int> parents, Backward backward);

  /// Backpropagates from a 1x1 output seeded with 1.
  void backward(const Var& output);
  /// Backpropagates from an arbitrary output seeded with `seed`.
  void backward(const Var& output, const Matrix& seed);

  const Matrix& value(int id) const { return nodes_[id].value; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  /// Gradient of a node after backward(); zeros when nothing reached it.
  Matrix grad(const Var& v) const;
  /// Mutable gradient accumulator, allocated on first use.
  Matrix& grad_ref(int id);
  bool has_grad(int id) const { return nodes_[id].grad_ready; }

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::vector<int> parents;
    Backward backward;
    bool needs_grad = false;
    bool grad_ready = false;
  };
  std::deque<Node> nodes_;
};

// Elementwise arithmetic (identical shapes).
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator-(const Var& a);
Var operator*(double s, const Var& a);
Var hadamard(const Var& a, const Var& b);
Var add_scalar(const Var& a, double s);

/// a (r x k) times b (k x c).
Var matmul(const Var& a, const Var& b);
/// Adds a 1 x c row to every row of m.
Var add_row(const Var& m, const Var& row);
/// Multiplies every entry of m by the 1x1 Var s.
Var scale_by(const Var& m, const Var& s);

Var tanh(const Var& a);
Var softplus(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var square(const Var& a);
Var normal_cdf(const Var& a);
/// Row-wise softmax.
Var softmax_rows(const Var& a);

Var sum(const Var& a);
Var mean(const Var& a);
/// Column vector of row sums.
Var row_sums(const Var& a);

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(const Var& a, Index start, Index count);
Var slice_rows(const Var& a, Index start, Index count);
/// Reinterprets the entries in row-major order with a new shape.
Var reshape_rows(const Var& a, Index rows, Index cols);

/// Forward value `forward`, backward through `surrogate` (straight-through).
Var straight_through(const Matrix& forward, const Var& surrogate);

}  // namespace panoscan::ad
