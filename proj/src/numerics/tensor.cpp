#include "cslab/numerics/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "cslab/common/errors.hpp"

namespace cslab::nn {
namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(product(shape_), fill) {
  if (shape_.size() > 2) throw DimensionError("tensors of rank > 2 are not supported");
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.size() > 2) throw DimensionError("tensors of rank > 2 are not supported");
  if (product(shape_) != data_.size()) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string());
  }
}

Tensor Tensor::row(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({1, n}, std::move(values));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged rows in Tensor::from_rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

std::size_t Tensor::rows() const {
  return shape_.size() == 2 ? shape_[0] : 1;
}

std::size_t Tensor::cols() const {
  if (shape_.empty()) return 1;
  return shape_.back();
}

double Tensor::item() const {
  if (data_.size() != 1) throw DimensionError("item() on tensor of shape " + shape_string());
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

bool Tensor::same_shape(const Tensor& other) const {
  return rows() == other.rows() && cols() == other.cols() && size() == other.size();
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << 'x';
    os << shape_[i];
  }
  os << ']';
  return os.str();
}

Tensor softmax_rows(const Tensor& logits) {
  Tensor out = logits;
  const std::size_t m = logits.rows(), n = logits.cols();
  for (std::size_t r = 0; r < m; ++r) {
    double* row = out.values().data() + r * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      row[c] = std::exp(row[c] - mx);
      z += row[c];
    }
    for (std::size_t c = 0; c < n; ++c) row[c] /= z;
  }
  return out;
}

}  // namespace cslab::nn
