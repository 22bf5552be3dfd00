// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major f64 tensor. Rank 1 and 2 are what the trace ops use.
#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace conductor::tape {

class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(checked_numel(shape_), 0.0) {}

  Tensor(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != checked_numel(shape_)) {
      throw std::invalid_argument("Tensor: data length does not match shape");
    }
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  static Tensor matrix(std::size_t rows, std::size_t cols) {
    return Tensor({rows, cols});
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }

  std::size_t rows() const {
    require_rank2("rows");
    return shape_[0];
  }
  std::size_t cols() const {
    require_rank2("cols");
    return shape_[1];
  }

  double& operator()(std::size_t i, std::size_t j) {
    return data_[i * shape_[1] + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
  }

  double& at(std::size_t flat) {
    if (flat >= data_.size()) throw std::out_of_range("Tensor::at: index out of range");
    return data_[flat];
  }
  double at(std::size_t flat) const {
    if (flat >= data_.size()) throw std::out_of_range("Tensor::at: index out of range");
    return data_[flat];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  const std::vector<double>& values() const { return data_; }
  std::vector<double>& values() { return data_; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

  std::string shape_string() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

 private:
  static std::size_t checked_numel(const std::vector<std::size_t>& shape) {
    if (shape.empty()) throw std::invalid_argument("Tensor: empty shape");
    std::size_t n = 1;
    for (std::size_t d : shape) {
      if (d == 0) throw std::invalid_argument("Tensor: zero dimension");
      n *= d;
    }
    return n;
  }

  void require_rank2(const char* what) const {
    if (shape_.size() != 2) {
      throw std::logic_error(std::string("Tensor::") + what + ": rank-2 required, got " +
                             shape_string());
    }
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

}  // namespace conductor::tape
