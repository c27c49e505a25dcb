#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dvelab::net {

/// Location of one named tensor inside a ParamVector (row-major rows x cols).
struct ParamBlock {
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 1;
  std::size_t size() const { return rows * cols; }
};

/// Flat parameter store with a same-length gradient buffer.
class ParamVector {
 public:
  struct Shape {
    std::string name;
    std::vector<std::size_t> dims;
    std::size_t offset = 0;
    std::size_t size() const;
    bool operator==(const Shape&) const = default;
  };

  /// Appends a zero-initialized tensor. Names must be unique.
  ParamBlock add(std::string name, std::vector<std::size_t> dims);

  ParamBlock block(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t size() const { return values_.size(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> grads() { return grads_; }
  std::span<const double> grads() const { return grads_; }
  std::span<double> values(std::string_view name);
  std::span<const double> values(std::string_view name) const;
  std::span<double> grads(std::string_view name);

  const std::vector<Shape>& shapes() const { return shapes_; }

  void zero_grad();
  bool all_finite() const;

  bool operator==(const ParamVector&) const = default;

 private:
  const Shape& shape(std::string_view name) const;

  std::vector<double> values_;
  std::vector<double> grads_;
  std::vector<Shape> shapes_;
};

}  // namespace dvelab::net
