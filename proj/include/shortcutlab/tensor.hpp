#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace scl {

/// Dense row-major array of 64-bit floats. Plain value type: graph identity
/// lives in Graph nodes, not here, so tensors can be copied and shared freely.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, std::vector<double> d);

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double value);
  static Tensor scalar(double value);
  static Tensor vec(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t numel() const { return data.size(); }
  bool empty() const { return data.empty(); }

  // 2-d accessors; a rank-1 tensor counts as a single column.
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? (shape.empty() ? 0 : 1) : shape[1]; }
  double& at(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool is_scalar() const { return numel() == 1; }
  bool all_finite() const;
  double scalar_value() const;
};

std::string shape_str(const std::vector<std::size_t>& shape);

/// Throws std::invalid_argument naming both shapes when they differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace scl
