#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace scribe {

using real = double;

std::string shape_str(const std::vector<std::size_t>& shape);

// Dense row-major tensor. Rank 1 and 2 cover most of the library; the
// attention filterbanks use rank 3 (batch, rows, cols).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, real fill = 0.0);

  static Tensor scalar(real v);
  static Tensor vec(std::initializer_list<real> v);
  static Tensor from(std::vector<std::size_t> shape, std::vector<real> data);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t i) const { return shape_[i]; }
  std::size_t rows() const { return shape_[0]; }
  std::size_t cols() const { return shape_[1]; }

  real* data() { return data_.data(); }
  const real* data() const { return data_.data(); }
  real& operator[](std::size_t i) { return data_[i]; }
  real operator[](std::size_t i) const { return data_[i]; }

  // rank-2 access
  real& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  real at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;

  // value of a single-element tensor
  real item() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<real> data_;
};

bool bitwise_equal(const Tensor& a, const Tensor& b);

}  // namespace scribe
