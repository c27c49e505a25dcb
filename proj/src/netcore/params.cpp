#include "dvelab/netcore/params.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "dvelab/common/error.hpp"

namespace dvelab::net {

std::size_t ParamVector::Shape::size() const {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

ParamBlock ParamVector::add(std::string name, std::vector<std::size_t> dims) {
  if (contains(name)) throw Error(ErrorCode::InvalidArgument, "duplicate parameter '" + name + "'");
  if (dims.empty() || dims.size() > 2) {
    throw Error(ErrorCode::InvalidArgument, "parameter '" + name + "' must be rank 1 or 2");
  }
  Shape s{std::move(name), std::move(dims), values_.size()};
  values_.resize(values_.size() + s.size(), 0.0);
  grads_.resize(values_.size(), 0.0);
  shapes_.push_back(std::move(s));
  return block(shapes_.back().name);
}

const ParamVector::Shape& ParamVector::shape(std::string_view name) const {
  for (const auto& s : shapes_) {
    if (s.name == name) return s;
  }
  throw Error(ErrorCode::InvalidArgument, "no parameter named '" + std::string(name) + "'");
}

bool ParamVector::contains(std::string_view name) const {
  return std::any_of(shapes_.begin(), shapes_.end(), [&](const Shape& s) { return s.name == name; });
}

ParamBlock ParamVector::block(std::string_view name) const {
  const Shape& s = shape(name);
  return {s.offset, s.dims[0], s.dims.size() == 2 ? s.dims[1] : 1};
}

std::span<double> ParamVector::values(std::string_view name) {
  const Shape& s = shape(name);
  return std::span<double>(values_).subspan(s.offset, s.size());
}

std::span<const double> ParamVector::values(std::string_view name) const {
  const Shape& s = shape(name);
  return std::span<const double>(values_).subspan(s.offset, s.size());
}

std::span<double> ParamVector::grads(std::string_view name) {
  const Shape& s = shape(name);
  return std::span<double>(grads_).subspan(s.offset, s.size());
}

void ParamVector::zero_grad() { std::fill(grads_.begin(), grads_.end(), 0.0); }

bool ParamVector::all_finite() const {
  auto finite = [](double v) { return std::isfinite(v); };
  return std::all_of(values_.begin(), values_.end(), finite) &&
         std::all_of(grads_.begin(), grads_.end(), finite);
}

}  // namespace dvelab::net
