#include "dvelab/netcore/tape.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "dvelab/common/error.hpp"

namespace dvelab::net {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMajor>;
using MatMap = Eigen::Map<RowMajor>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;

double sigmoid_of(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

void Tape::bind(std::span<const double> params, std::span<double> grads) {
  if (!grads.empty() && grads.size() != params.size()) {
    throw Error(ErrorCode::DimMismatch, "gradient buffer length differs from parameters");
  }
  params_ = params;
  grads_ = grads;
  reset();
}

void Tape::reset() {
  nodes_.clear();
  val_.clear();
  adj_.clear();
  seeded_ = false;
  consumed_ = false;
  visited_ = 0;
}

void Tape::check_live() const {
  if (consumed_) throw Error(ErrorCode::TapeReused, "tape already consumed by backward()");
}

void Tape::check(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) {
    throw Error(ErrorCode::InvalidArgument, "variable does not belong to this tape");
  }
}

void Tape::check_same(Var a, Var b) const {
  check(a);
  check(b);
  if (nodes_[a.id].n != nodes_[b.id].n) {
    throw Error(ErrorCode::DimMismatch, "operand sizes " + std::to_string(nodes_[a.id].n) +
                                            " and " + std::to_string(nodes_[b.id].n));
  }
}

Var Tape::push(Op op, std::size_t n, bool needs_grad, std::uint32_t a, std::uint32_t b) {
  check_live();
  Node node{};
  node.op = op;
  node.needs_grad = needs_grad;
  node.a = a;
  node.b = b;
  node.off = val_.size();
  node.n = n;
  val_.resize(val_.size() + n);
  nodes_.push_back(node);
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::input(std::span<const double> values) {
  const Var v = push(Op::Input, values.size(), false);
  std::copy(values.begin(), values.end(), val(v.id));
  return v;
}

Var Tape::input(double value) { return input(std::span<const double>(&value, 1)); }

Var Tape::param(ParamBlock block) {
  if (block.offset + block.size() > params_.size()) {
    throw Error(ErrorCode::DimMismatch, "parameter block outside bound parameters");
  }
  const Var v = push(Op::Param, block.size(), !grads_.empty());
  nodes_[v.id].w = block;
  std::copy_n(params_.data() + block.offset, block.size(), val(v.id));
  return v;
}

Var Tape::affine(ParamBlock weight, ParamBlock bias, Var x) {
  check(x);
  if (weight.cols != nodes_[x.id].n || bias.size() != weight.rows) {
    throw Error(ErrorCode::DimMismatch, "affine expects input of size " +
                                            std::to_string(weight.cols) + ", got " +
                                            std::to_string(nodes_[x.id].n));
  }
  if (weight.offset + weight.size() > params_.size() || bias.offset + bias.size() > params_.size()) {
    throw Error(ErrorCode::DimMismatch, "parameter block outside bound parameters");
  }
  const Var v = push(Op::Affine, weight.rows, !grads_.empty() || nodes_[x.id].needs_grad, x.id);
  nodes_[v.id].w = weight;
  nodes_[v.id].bias = bias;
  ConstMatMap W(params_.data() + weight.offset, static_cast<Eigen::Index>(weight.rows),
                static_cast<Eigen::Index>(weight.cols));
  ConstVecMap xin(val(x.id), static_cast<Eigen::Index>(weight.cols));
  ConstVecMap b(params_.data() + bias.offset, static_cast<Eigen::Index>(bias.size()));
  VecMap y(val(v.id), static_cast<Eigen::Index>(weight.rows));
  y.noalias() = W * xin;
  y += b;
  return v;
}

#define DVELAB_BINARY(name, OPCODE, expr)                                              \
  Var Tape::name(Var a, Var b) {                                                      \
    check_same(a, b);                                                                 \
    const std::size_t n = nodes_[a.id].n;                                             \
    const Var v = push(Op::OPCODE, n, nodes_[a.id].needs_grad || nodes_[b.id].needs_grad, \
                       a.id, b.id);                                                   \
    const double* x = val(a.id);                                                      \
    const double* z = val(b.id);                                                      \
    double* y = val(v.id);                                                            \
    for (std::size_t i = 0; i < n; ++i) y[i] = (expr);                                \
    return v;                                                                         \
  }

DVELAB_BINARY(add, Add, x[i] + z[i])
DVELAB_BINARY(sub, Sub, x[i] - z[i])
DVELAB_BINARY(mul, Mul, x[i] * z[i])
DVELAB_BINARY(minimum, Minimum, x[i] <= z[i] ? x[i] : z[i])
#undef DVELAB_BINARY

#define DVELAB_UNARY(name, OPCODE, expr)                                   \
  Var Tape::name(Var a) {                                                 \
    check(a);                                                             \
    const std::size_t n = nodes_[a.id].n;                                 \
    const Var v = push(Op::OPCODE, n, nodes_[a.id].needs_grad, a.id);     \
    const double* x = val(a.id);                                          \
    double* y = val(v.id);                                                \
    for (std::size_t i = 0; i < n; ++i) y[i] = (expr);                    \
    return v;                                                             \
  }

DVELAB_UNARY(tanh, Tanh, std::tanh(x[i]))
DVELAB_UNARY(sigmoid, Sigmoid, sigmoid_of(x[i]))
DVELAB_UNARY(exp, Exp, std::exp(x[i]))
DVELAB_UNARY(recip, Recip, 1.0 / x[i])
DVELAB_UNARY(square, Square, x[i] * x[i])
#undef DVELAB_UNARY

Var Tape::scale(Var a, double c) {
  check(a);
  const std::size_t n = nodes_[a.id].n;
  const Var v = push(Op::Scale, n, nodes_[a.id].needs_grad, a.id);
  nodes_[v.id].c0 = c;
  for (std::size_t i = 0; i < n; ++i) val(v.id)[i] = val(a.id)[i] * c;
  return v;
}

Var Tape::add_scalar(Var a, double c) {
  check(a);
  const std::size_t n = nodes_[a.id].n;
  const Var v = push(Op::AddScalar, n, nodes_[a.id].needs_grad, a.id);
  for (std::size_t i = 0; i < n; ++i) val(v.id)[i] = val(a.id)[i] + c;
  return v;
}

Var Tape::scale_by(Var vec, Var s) {
  check(vec);
  check(s);
  if (nodes_[s.id].n != 1) throw Error(ErrorCode::DimMismatch, "scale_by expects a scalar");
  const std::size_t n = nodes_[vec.id].n;
  const Var v = push(Op::ScaleBy, n, nodes_[vec.id].needs_grad || nodes_[s.id].needs_grad,
                     vec.id, s.id);
  const double k = val(s.id)[0];
  for (std::size_t i = 0; i < n; ++i) val(v.id)[i] = val(vec.id)[i] * k;
  return v;
}

Var Tape::log_floor(Var a, double floor) {
  check(a);
  const std::size_t n = nodes_[a.id].n;
  const Var v = push(Op::LogFloor, n, nodes_[a.id].needs_grad, a.id);
  nodes_[v.id].c0 = floor;
  for (std::size_t i = 0; i < n; ++i) val(v.id)[i] = std::log(std::max(val(a.id)[i], floor));
  return v;
}

Var Tape::softmax(Var a) {
  check(a);
  const std::size_t n = nodes_[a.id].n;
  const Var v = push(Op::Softmax, n, nodes_[a.id].needs_grad, a.id);
  const double* x = val(a.id);
  double* y = val(v.id);
  const double m = *std::max_element(x, x + n);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) z += (y[i] = std::exp(x[i] - m));
  for (std::size_t i = 0; i < n; ++i) y[i] /= z;
  return v;
}

Var Tape::log_softmax(Var a) {
  check(a);
  const std::size_t n = nodes_[a.id].n;
  const Var v = push(Op::LogSoftmax, n, nodes_[a.id].needs_grad, a.id);
  const double* x = val(a.id);
  double* y = val(v.id);
  const double m = *std::max_element(x, x + n);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) z += std::exp(x[i] - m);
  const double lse = m + std::log(z);
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] - lse;
  return v;
}

Var Tape::sum(Var a) {
  check(a);
  const Var v = push(Op::Sum, 1, nodes_[a.id].needs_grad, a.id);
  double s = 0.0;
  for (std::size_t i = 0; i < nodes_[a.id].n; ++i) s += val(a.id)[i];
  val(v.id)[0] = s;
  return v;
}

Var Tape::dot(Var a, Var b) {
  check_same(a, b);
  const Var v = push(Op::Dot, 1, nodes_[a.id].needs_grad || nodes_[b.id].needs_grad, a.id, b.id);
  double s = 0.0;
  for (std::size_t i = 0; i < nodes_[a.id].n; ++i) s += val(a.id)[i] * val(b.id)[i];
  val(v.id)[0] = s;
  return v;
}

Var Tape::pick(Var a, std::size_t index) {
  check(a);
  if (index >= nodes_[a.id].n) throw Error(ErrorCode::DimMismatch, "pick index out of range");
  const Var v = push(Op::Pick, 1, nodes_[a.id].needs_grad, a.id);
  nodes_[v.id].c0 = static_cast<double>(index);
  val(v.id)[0] = val(a.id)[index];
  return v;
}

Var Tape::slice(Var a, std::size_t offset, std::size_t n) {
  check(a);
  if (offset + n > nodes_[a.id].n) throw Error(ErrorCode::DimMismatch, "slice out of range");
  const Var v = push(Op::Slice, n, nodes_[a.id].needs_grad, a.id);
  nodes_[v.id].c0 = static_cast<double>(offset);
  std::copy_n(val(a.id) + offset, n, val(v.id));
  return v;
}

Var Tape::concat(Var a, Var b) {
  check(a);
  check(b);
  const std::size_t na = nodes_[a.id].n;
  const std::size_t nb = nodes_[b.id].n;
  const Var v = push(Op::Concat, na + nb, nodes_[a.id].needs_grad || nodes_[b.id].needs_grad,
                     a.id, b.id);
  std::copy_n(val(a.id), na, val(v.id));
  std::copy_n(val(b.id), nb, val(v.id) + na);
  return v;
}

Var Tape::clamp(Var a, double lo, double hi) {
  check(a);
  const std::size_t n = nodes_[a.id].n;
  const Var v = push(Op::Clamp, n, nodes_[a.id].needs_grad, a.id);
  nodes_[v.id].c0 = lo;
  nodes_[v.id].c1 = hi;
  for (std::size_t i = 0; i < n; ++i) val(v.id)[i] = std::clamp(val(a.id)[i], lo, hi);
  return v;
}

Var Tape::stop_gradient(Var a) {
  check(a);
  const std::size_t n = nodes_[a.id].n;
  const Var v = push(Op::StopGrad, n, false, a.id);
  std::copy_n(val(a.id), n, val(v.id));
  return v;
}

Var Tape::map(Var a, ScalarFn f, ScalarDeriv df) {
  check(a);
  const std::size_t n = nodes_[a.id].n;
  const Var v = push(Op::Map, n, nodes_[a.id].needs_grad, a.id);
  nodes_[v.id].f = f;
  nodes_[v.id].df = df;
  for (std::size_t i = 0; i < n; ++i) val(v.id)[i] = f(val(a.id)[i]);
  return v;
}

std::span<const double> Tape::value(Var v) const {
  check(v);
  return {val(v.id), nodes_[v.id].n};
}

double Tape::scalar(Var v) const {
  check(v);
  if (nodes_[v.id].n != 1) throw Error(ErrorCode::DimMismatch, "value is not a scalar");
  return val(v.id)[0];
}

void Tape::ensure_adjoints() {
  if (!seeded_) {
    adj_.assign(val_.size(), 0.0);
    seeded_ = true;
  }
}

void Tape::seed(Var v, std::span<const double> grad) {
  check_live();
  check(v);
  if (grad.size() != nodes_[v.id].n) throw Error(ErrorCode::DimMismatch, "seed size mismatch");
  ensure_adjoints();
  double* g = adj(v.id);
  for (std::size_t i = 0; i < grad.size(); ++i) g[i] += grad[i];
}

void Tape::backward(Var scalar_out) {
  check(scalar_out);
  if (nodes_[scalar_out.id].n != 1) {
    throw Error(ErrorCode::DimMismatch, "backward(out) expects a scalar output");
  }
  const double one = 1.0;
  seed(scalar_out, std::span<const double>(&one, 1));
  backward();
}

void Tape::backward() {
  check_live();
  ensure_adjoints();
  visited_ = 0;
  for (std::size_t k = nodes_.size(); k-- > 0;) {
    ++visited_;
    const Node& node = nodes_[k];
    if (node.needs_grad) backprop(node, static_cast<std::uint32_t>(k));
  }
  consumed_ = true;
}

void Tape::backprop(const Node& node, std::uint32_t id) {
  const double* dy = adj(id);
  const double* y = val(id);
  const std::size_t n = node.n;
  auto grad_a = [&]() -> double* {
    return nodes_[node.a].needs_grad ? adj(node.a) : nullptr;
  };
  auto grad_b = [&]() -> double* {
    return nodes_[node.b].needs_grad ? adj(node.b) : nullptr;
  };
  switch (node.op) {
    case Op::Input:
    case Op::StopGrad:
      break;
    case Op::Param: {
      if (grads_.empty()) break;
      double* g = grads_.data() + node.w.offset;
      for (std::size_t i = 0; i < n; ++i) g[i] += dy[i];
      break;
    }
    case Op::Affine: {
      const auto rows = static_cast<Eigen::Index>(node.w.rows);
      const auto cols = static_cast<Eigen::Index>(node.w.cols);
      ConstVecMap g(dy, rows);
      if (double* dx = grad_a()) {
        ConstMatMap W(params_.data() + node.w.offset, rows, cols);
        VecMap(dx, cols).noalias() += W.transpose() * g;
      }
      if (!grads_.empty()) {
        ConstVecMap x(val(node.a), cols);
        MatMap(grads_.data() + node.w.offset, rows, cols).noalias() += g * x.transpose();
        VecMap(grads_.data() + node.bias.offset, rows) += g;
      }
      break;
    }
    case Op::Add: {
      if (double* da = grad_a()) for (std::size_t i = 0; i < n; ++i) da[i] += dy[i];
      if (double* db = grad_b()) for (std::size_t i = 0; i < n; ++i) db[i] += dy[i];
      break;
    }
    case Op::Sub: {
      if (double* da = grad_a()) for (std::size_t i = 0; i < n; ++i) da[i] += dy[i];
      if (double* db = grad_b()) for (std::size_t i = 0; i < n; ++i) db[i] -= dy[i];
      break;
    }
    case Op::Mul: {
      const double* a = val(node.a);
      const double* b = val(node.b);
      if (double* da = grad_a()) for (std::size_t i = 0; i < n; ++i) da[i] += dy[i] * b[i];
      if (double* db = grad_b()) for (std::size_t i = 0; i < n; ++i) db[i] += dy[i] * a[i];
      break;
    }
    case Op::Minimum: {
      const double* a = val(node.a);
      const double* b = val(node.b);
      double* da = grad_a();
      double* db = grad_b();
      for (std::size_t i = 0; i < n; ++i) {
        if (a[i] <= b[i]) {
          if (da) da[i] += dy[i];
        } else if (db) {
          db[i] += dy[i];
        }
      }
      break;
    }
    case Op::Scale: {
      if (double* da = grad_a()) for (std::size_t i = 0; i < n; ++i) da[i] += dy[i] * node.c0;
      break;
    }
    case Op::AddScalar: {
      if (double* da = grad_a()) for (std::size_t i = 0; i < n; ++i) da[i] += dy[i];
      break;
    }
    case Op::ScaleBy: {
      const double* a = val(node.a);
      const double k = val(node.b)[0];
      if (double* da = grad_a()) for (std::size_t i = 0; i < n; ++i) da[i] += dy[i] * k;
      if (double* db = grad_b()) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += dy[i] * a[i];
        db[0] += s;
      }
      break;
    }
    case Op::Tanh: {
      if (double* da = grad_a()) for (std::size_t i = 0; i < n; ++i) da[i] += dy[i] * (1.0 - y[i] * y[i]);
      break;
    }
    case Op::Sigmoid: {
      if (double* da = grad_a()) for (std::size_t i = 0; i < n; ++i) da[i] += dy[i] * y[i] * (1.0 - y[i]);
      break;
    }
    case Op::Exp: {
      if (double* da = grad_a()) for (std::size_t i = 0; i < n; ++i) da[i] += dy[i] * y[i];
      break;
    }
    case Op::LogFloor: {
      const double* a = val(node.a);
      if (double* da = grad_a()) {
        for (std::size_t i = 0; i < n; ++i) {
          if (a[i] > node.c0) da[i] += dy[i] / a[i];
        }
      }
      break;
    }
    case Op::Recip: {
      if (double* da = grad_a()) for (std::size_t i = 0; i < n; ++i) da[i] -= dy[i] * y[i] * y[i];
      break;
    }
    case Op::Square: {
      const double* a = val(node.a);
      if (double* da = grad_a()) for (std::size_t i = 0; i < n; ++i) da[i] += 2.0 * a[i] * dy[i];
      break;
    }
    case Op::Softmax: {
      if (double* da = grad_a()) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += y[i] * dy[i];
        for (std::size_t i = 0; i < n; ++i) da[i] += y[i] * (dy[i] - s);
      }
      break;
    }
    case Op::LogSoftmax: {
      if (double* da = grad_a()) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += dy[i];
        for (std::size_t i = 0; i < n; ++i) da[i] += dy[i] - std::exp(y[i]) * s;
      }
      break;
    }
    case Op::Sum: {
      if (double* da = grad_a()) {
        for (std::size_t i = 0; i < nodes_[node.a].n; ++i) da[i] += dy[0];
      }
      break;
    }
    case Op::Dot: {
      const std::size_t m = nodes_[node.a].n;
      const double* a = val(node.a);
      const double* b = val(node.b);
      if (double* da = grad_a()) for (std::size_t i = 0; i < m; ++i) da[i] += dy[0] * b[i];
      if (double* db = grad_b()) for (std::size_t i = 0; i < m; ++i) db[i] += dy[0] * a[i];
      break;
    }
    case Op::Pick: {
      if (double* da = grad_a()) da[static_cast<std::size_t>(node.c0)] += dy[0];
      break;
    }
    case Op::Slice: {
      if (double* da = grad_a()) {
        const auto off = static_cast<std::size_t>(node.c0);
        for (std::size_t i = 0; i < n; ++i) da[off + i] += dy[i];
      }
      break;
    }
    case Op::Concat: {
      const std::size_t na = nodes_[node.a].n;
      if (double* da = grad_a()) for (std::size_t i = 0; i < na; ++i) da[i] += dy[i];
      if (double* db = grad_b()) for (std::size_t i = na; i < n; ++i) db[i - na] += dy[i];
      break;
    }
    case Op::Clamp: {
      const double* a = val(node.a);
      if (double* da = grad_a()) {
        for (std::size_t i = 0; i < n; ++i) {
          if (a[i] >= node.c0 && a[i] <= node.c1) da[i] += dy[i];
        }
      }
      break;
    }
    case Op::Map: {
      const double* a = val(node.a);
      if (double* da = grad_a()) for (std::size_t i = 0; i < n; ++i) da[i] += dy[i] * node.df(a[i], y[i]);
      break;
    }
  }
}

}  // namespace dvelab::net
