#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "patchdesc/error.hpp"

namespace patchdesc {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) out << 'x';
    out << shape[i];
  }
  return out.str();
}

inline std::size_t shape_volume(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

/// Floating-point width used for a whole run. Verification uses f64, training f32.
enum class Precision { f32, f64 };

inline Precision parse_precision(std::string_view text) {
  if (text == "f32") return Precision::f32;
  if (text == "f64") return Precision::f64;
  throw Error(ErrorKind::config, "precision must be f32 or f64, got '" + std::string(text) + "'");
}

inline std::string_view to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

/// Reads PATCHDESC_PRECISION; falls back to `fallback` when unset.
inline Precision precision_from_env(Precision fallback = Precision::f32) {
  const char* value = std::getenv("PATCHDESC_PRECISION");
  if (value == nullptr || *value == '\0') return fallback;
  return parse_precision(value);
}

/// Dense row-major tensor with value semantics.
template <typename Real>
class Tensor {
 public:
  using value_type = Real;

  Tensor() = default;

  explicit Tensor(Shape shape, Real fill = Real(0)) : shape_(std::move(shape)) {
    if (shape_.empty()) throw Error(ErrorKind::invalid_shape, "shape must have at least one extent");
    for (std::size_t extent : shape_) {
      if (extent == 0) throw Error(ErrorKind::invalid_shape, "zero extent in shape " + shape_string(shape_));
    }
    data_.assign(shape_volume(shape_), fill);
  }

  Tensor(Shape shape, std::vector<Real> values) : Tensor(std::move(shape)) {
    if (values.size() != data_.size()) {
      throw Error(ErrorKind::shape_mismatch, std::to_string(values.size()) + " values for shape " +
                                                 shape_string(shape_));
    }
    data_ = std::move(values);
  }

  static Tensor create(Shape shape, Real fill) { return Tensor(std::move(shape), fill); }

  static Tensor vector(std::initializer_list<Real> values) {
    return Tensor(Shape{values.size()}, std::vector<Real>(values));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<Real> values() noexcept { return data_; }
  std::span<const Real> values() const noexcept { return data_; }
  Real* data() noexcept { return data_.data(); }
  const Real* data() const noexcept { return data_.data(); }

  Real& operator[](std::size_t i) { return data_[i]; }
  const Real& operator[](std::size_t i) const { return data_[i]; }

  template <typename... Index>
  Real& at(Index... index) {
    return data_[offset({static_cast<std::size_t>(index)...})];
  }
  template <typename... Index>
  const Real& at(Index... index) const {
    return data_[offset({static_cast<std::size_t>(index)...})];
  }

  /// Same data, new shape of equal volume.
  Tensor reshaped(Shape shape) const {
    Tensor out(std::move(shape));
    if (out.size() != size()) {
      throw Error(ErrorKind::shape_mismatch,
                  "cannot reshape " + shape_string(shape_) + " to " + shape_string(out.shape_));
    }
    out.data_ = data_;
    return out;
  }

  void fill(Real value) { std::fill(data_.begin(), data_.end(), value); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](Real v) { return std::isfinite(v); });
  }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out(shape_);
    std::transform(data_.begin(), data_.end(), out.values().begin(),
                   [](Real v) { return static_cast<Other>(v); });
    return out;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::size_t offset(std::initializer_list<std::size_t> index) const {
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (std::size_t i : index) flat = flat * shape_[axis++] + i;
    return flat;
  }

  Shape shape_;
  std::vector<Real> data_;
};

enum class BinaryOp { add, sub, mul };

template <typename Real>
Tensor<Real> map_binary(const Tensor<Real>& a, const Tensor<Real>& b, BinaryOp op) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorKind::shape_mismatch,
                "elementwise operands " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  }
  Tensor<Real> out(a.shape());
  const auto x = a.values();
  const auto y = b.values();
  auto z = out.values();
  switch (op) {
    case BinaryOp::add:
      for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] + y[i];
      break;
    case BinaryOp::sub:
      for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] - y[i];
      break;
    case BinaryOp::mul:
      for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] * y[i];
      break;
  }
  return out;
}

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) { return map_binary(a, b, BinaryOp::add); }
template <typename Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) { return map_binary(a, b, BinaryOp::sub); }
template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) { return map_binary(a, b, BinaryOp::mul); }

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& a, Real s) {
  Tensor<Real> out = a;
  for (Real& v : out.values()) v *= s;
  return out;
}

/// In-place a += s * b; the hot path for gradient accumulation and SGD updates.
template <typename Real>
void axpy(Tensor<Real>& a, Real s, const Tensor<Real>& b) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorKind::shape_mismatch,
                "axpy operands " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  }
  auto x = a.values();
  const auto y = b.values();
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += s * y[i];
}

template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0)) {
    throw Error(ErrorKind::shape_mismatch,
                "matmul operands " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  }
  const std::size_t m = a.extent(0);
  const std::size_t k = a.extent(1);
  const std::size_t n = b.extent(1);
  Tensor<Real> out(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) {
    Real* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Real aip = a[i * k + p];
      const Real* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  return out;
}

template <typename Real>
Real dot(std::span<const Real> a, std::span<const Real> b) {
  Real acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace patchdesc
