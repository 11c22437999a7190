#include "scribe/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace scribe {

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

static std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw std::invalid_argument("tensor extent must be positive, got " + shape_str(shape));
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<std::size_t> shape, real fill)
    : shape_(std::move(shape)), data_(shape_product(shape_), fill) {}

Tensor Tensor::scalar(real v) {
  Tensor t({1});
  t.data_[0] = v;
  return t;
}

Tensor Tensor::vec(std::initializer_list<real> v) {
  Tensor t({v.size()});
  std::size_t i = 0;
  for (real x : v) t.data_[i++] = x;
  return t;
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<real> data) {
  if (shape_product(shape) != data.size())
    throw std::invalid_argument("tensor data size " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(data);
  return t;
}

bool Tensor::all_finite() const {
  for (real v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

real Tensor::item() const {
  if (data_.size() != 1)
    throw std::invalid_argument("item() on tensor of shape " + shape_str(shape_));
  return data_[0];
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(real)) == 0;
}

}  // namespace scribe
