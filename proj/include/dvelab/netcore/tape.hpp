#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "dvelab/netcore/params.hpp"

namespace dvelab::net {

/// Handle to a value recorded on a Tape.
struct Var {
  std::uint32_t id = std::numeric_limits<std::uint32_t>::max();
  bool valid() const { return id != std::numeric_limits<std::uint32_t>::max(); }
};

/// Reverse-mode tape over small dense vectors. Values live in one arena;
/// parameters are read from (and gradients accumulated into) the spans bound
/// at construction. Every recorded node is visited once by backward(), in
/// reverse recording order, after which the tape is consumed until reset().
class Tape {
 public:
  using ScalarFn = double (*)(double);
  /// Derivative given input x and output y.
  using ScalarDeriv = double (*)(double x, double y);

  Tape() = default;
  Tape(std::span<const double> params, std::span<double> grads) { bind(params, grads); }

  /// `grads` may be empty: parameters then act as constants.
  void bind(std::span<const double> params, std::span<double> grads);
  /// Drops every recorded node, keeping arena capacity.
  void reset();

  Var input(std::span<const double> values);
  Var input(double value);
  Var param(ParamBlock block);
  /// W x + b with W (rows x cols) and b (rows) read from the bound parameters.
  Var affine(ParamBlock weight, ParamBlock bias, Var x);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double c);
  Var add_scalar(Var a, double c);
  /// Vector times a size-1 Var.
  Var scale_by(Var vec, Var s);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var exp(Var a);
  /// log(max(a, floor)); gradient is zero where the floor is active.
  Var log_floor(Var a, double floor);
  Var recip(Var a);
  Var square(Var a);
  Var softmax(Var a);
  Var log_softmax(Var a);
  Var sum(Var a);
  Var dot(Var a, Var b);
  Var pick(Var a, std::size_t index);
  Var slice(Var a, std::size_t offset, std::size_t n);
  Var concat(Var a, Var b);
  /// Elementwise minimum; ties route the gradient to `a`.
  Var minimum(Var a, Var b);
  /// Gradient passes for lo <= a <= hi.
  Var clamp(Var a, double lo, double hi);
  /// Copies the value; no gradient flows back through it.
  Var stop_gradient(Var a);
  /// User-supplied elementwise op.
  Var map(Var a, ScalarFn f, ScalarDeriv df);

  std::span<const double> value(Var v) const;
  double scalar(Var v) const;
  std::size_t size(Var v) const { return nodes_[v.id].n; }
  std::size_t node_count() const { return nodes_.size(); }

  /// Adds `grad` to the adjoint of `v` before backward().
  void seed(Var v, std::span<const double> grad);
  /// Runs reverse accumulation from the seeded adjoints.
  void backward();
  /// Seeds a scalar output with 1 and runs backward().
  void backward(Var scalar_out);

  bool consumed() const { return consumed_; }
  std::size_t visited_nodes() const { return visited_; }

 private:
  enum class Op : std::uint8_t {
    Input, Param, Affine, Add, Sub, Mul, Scale, AddScalar, ScaleBy, Tanh, Sigmoid, Exp,
    LogFloor, Recip, Square, Softmax, LogSoftmax, Sum, Dot, Pick, Slice, Concat, Minimum,
    Clamp, StopGrad, Map,
  };
  struct Node {
    Op op;
    bool needs_grad;
    std::uint32_t a;
    std::uint32_t b;
    std::size_t off;
    std::size_t n;
    ParamBlock w;
    ParamBlock bias;
    double c0;
    double c1;
    ScalarFn f;
    ScalarDeriv df;
  };

  Var push(Op op, std::size_t n, bool needs_grad, std::uint32_t a = 0, std::uint32_t b = 0);
  double* val(std::uint32_t id) { return val_.data() + nodes_[id].off; }
  const double* val(std::uint32_t id) const { return val_.data() + nodes_[id].off; }
  double* adj(std::uint32_t id) { return adj_.data() + nodes_[id].off; }
  void check(Var v) const;
  void check_same(Var a, Var b) const;
  void check_live() const;
  void ensure_adjoints();
  void backprop(const Node& node, std::uint32_t id);

  std::span<const double> params_;
  std::span<double> grads_;
  std::vector<Node> nodes_;
  std::vector<double> val_;
  std::vector<double> adj_;
  bool seeded_ = false;
  bool consumed_ = false;
  std::size_t visited_ = 0;
};

}  // namespace dvelab::net
