#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace cslab::nn {

// Dense row-major tensor of doubles. Every differentiable primitive treats a
// tensor as a matrix: rank 0 is 1x1, rank 1 is 1xn, rank 2 is m x n.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({}, std::vector<double>{v}); }
  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Tensor({rows, cols}, fill);
  }
  static Tensor row(std::vector<double> values);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double item() const;

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }
  std::span<const double> row_span(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * cols(), cols());
  }

  bool all_finite() const;
  bool same_shape(const Tensor& other) const;
  void fill(double v);
  std::string shape_string() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// Row-wise softmax of a matrix (no gradient).
Tensor softmax_rows(const Tensor& logits);

}  // namespace cslab::nn
