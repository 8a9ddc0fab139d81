/* Copyright 2026 The ProxForge Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

/// \file tensor.hpp
/// Dense rank-0..2 tensors of doubles and the primitive operation table that
/// proxy graphs are built from.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <istream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "proxforge/error.hpp"

namespace proxforge {

/// Shared epsilon for normalized_sum and the AutoProx formulas.
inline constexpr double kEpsilon = 1e-9;

class Shape {
 public:
  Shape() = default;  // rank 0
  explicit Shape(std::size_t n) : dims_{n, 1}, rank_(1) { check(); }
  Shape(std::size_t rows, std::size_t cols) : dims_{rows, cols}, rank_(2) { check(); }

  std::size_t rank() const noexcept { return rank_; }
  std::size_t operator[](std::size_t i) const noexcept { return dims_[i]; }
  std::size_t numel() const noexcept {
    std::size_t n = 1;
    for (std::size_t i = 0; i < rank_; ++i) n *= dims_[i];
    return n;
  }
  std::string str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < rank_; ++i) {
      if (i) s += ",";
      s += std::to_string(dims_[i]);
    }
    return s + "]";
  }

  friend bool operator==(const Shape& a, const Shape& b) noexcept {
    if (a.rank_ != b.rank_) return false;
    for (std::size_t i = 0; i < a.rank_; ++i)
      if (a.dims_[i] != b.dims_[i]) return false;
    return true;
  }

 private:
  void check() const {
    for (std::size_t i = 0; i < rank_; ++i)
      if (dims_[i] == 0) throw ShapeMismatch("zero-sized dimension");
  }

  std::array<std::size_t, 2> dims_{1, 1};
  std::size_t rank_ = 0;
};

/// Immutable-by-convention value type; row-major storage.
class Tensor {
 public:
  Tensor() : data_(1, 0.0) {}

  Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.numel())
      throw ShapeMismatch("data length " + std::to_string(data_.size()) +
                          " does not match shape " + shape_.str());
  }

  static Tensor scalar(double v) { return Tensor(Shape(), {v}); }
  static Tensor vector(std::vector<double> v) {
    const auto n = v.size();
    return Tensor(Shape(n), std::move(v));
  }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
    return Tensor(Shape(rows, cols), std::move(v));
  }
  static Tensor filled(Shape shape, double v) { return Tensor(shape, std::vector<double>(shape.numel(), v)); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.rank(); }
  std::size_t numel() const noexcept { return data_.size(); }
  std::span<const double> data() const noexcept { return data_; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }
  double at(std::size_t r, std::size_t c) const noexcept { return data_[r * shape_[1] + c]; }

  /// Only meaningful for rank-0 tensors.
  double item() const noexcept { return data_.front(); }

  /// Bitwise equality (NaN payloads included).
  friend bool operator==(const Tensor& a, const Tensor& b) noexcept {
    if (!(a.shape_ == b.shape_)) return false;
    for (std::size_t i = 0; i < a.data_.size(); ++i)
      if (std::bit_cast<std::uint64_t>(a.data_[i]) != std::bit_cast<std::uint64_t>(b.data_[i])) return false;
    return true;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Operation table

enum class OpId : std::uint8_t {
  kNoOp = 0,            // UOP00
  kAbs,                 // UOP01
  kTanh,                // UOP02
  kSquare,              // UOP03 element_wise_pow
  kExp,                 // UOP04
  kLog,                 // UOP05
  kRelu,                // UOP06
  kLeakyRelu,           // UOP07
  kSwish,               // UOP08
  kMish,                // UOP09
  kInvert,              // UOP10
  kNormalizedSum,       // UOP11
  kNormalize,           // UOP12
  kSigmoid,             // UOP13
  kLogSoftmax,          // UOP14
  kSoftmax,             // UOP15
  kSqrt,                // UOP16
  kRevert,              // UOP17
  kFrobeniusNorm,       // UOP18
  kAbsLog,              // UOP19
  kL1Norm,              // UOP20
  kMinMaxNormalize,     // UOP21
  kToMeanScalar,        // UOP22
  kToStdScalar,         // UOP23
  kSum,                 // BOP01
  kDifference,          // BOP02
  kProduct,             // BOP03
  kMatMul,              // BOP04
};

inline constexpr std::size_t kNumUnaryOps = 24;
inline constexpr std::size_t kNumBinaryOps = 4;

constexpr bool is_unary(OpId op) noexcept { return static_cast<std::size_t>(op) < kNumUnaryOps; }
constexpr bool is_binary(OpId op) noexcept { return !is_unary(op); }

constexpr OpId unary_op(std::size_t i) noexcept { return static_cast<OpId>(i); }
constexpr OpId binary_op(std::size_t i) noexcept { return static_cast<OpId>(kNumUnaryOps + i); }

namespace detail {

struct OpInfo {
  std::string_view code;
  std::string_view name;
};

inline constexpr std::array<OpInfo, kNumUnaryOps + kNumBinaryOps> kOpTable{{
    {"UOP00", "no_op"},
    {"UOP01", "element_wise_abs"},
    {"UOP02", "element_wise_tanh"},
    {"UOP03", "element_wise_pow"},
    {"UOP04", "element_wise_exp"},
    {"UOP05", "element_wise_log"},
    {"UOP06", "element_wise_relu"},
    {"UOP07", "element_wise_leaky_relu"},
    {"UOP08", "element_wise_swish"},
    {"UOP09", "element_wise_mish"},
    {"UOP10", "element_wise_invert"},
    {"UOP11", "element_wise_normalized_sum"},
    {"UOP12", "normalize"},
    {"UOP13", "sigmoid"},
    {"UOP14", "logsoftmax"},
    {"UOP15", "softmax"},
    {"UOP16", "element_wise_sqrt"},
    {"UOP17", "element_wise_revert"},
    {"UOP18", "frobenius_norm"},
    {"UOP19", "element_wise_abslog"},
    {"UOP20", "l1_norm"},
    {"UOP21", "min_max_normalize"},
    {"UOP22", "to_mean_scalar"},
    {"UOP23", "to_std_scalar"},
    {"BOP01", "element_wise_sum"},
    {"BOP02", "element_wise_difference"},
    {"BOP03", "element_wise_product"},
    {"BOP04", "matrix_multiplication"},
}};

}  // namespace detail

constexpr std::string_view op_code(OpId op) noexcept { return detail::kOpTable[static_cast<std::size_t>(op)].code; }
constexpr std::string_view op_name(OpId op) noexcept { return detail::kOpTable[static_cast<std::size_t>(op)].name; }

inline std::optional<OpId> parse_op_code(std::string_view code) noexcept {
  for (std::size_t i = 0; i < detail::kOpTable.size(); ++i)
    if (detail::kOpTable[i].code == code) return static_cast<OpId>(i);
  return std::nullopt;
}

/// True for the ops whose result is always rank-0.
constexpr bool reduces_to_scalar(OpId op) noexcept {
  switch (op) {
    case OpId::kNormalizedSum:
    case OpId::kFrobeniusNorm:
    case OpId::kL1Norm:
    case OpId::kToMeanScalar:
    case OpId::kToStdScalar:
      return true;
    default:
      return false;
  }
}

namespace detail {

template <class F>
Tensor map(const Tensor& a, F f) {
  std::vector<double> out(a.numel());
  const auto in = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return Tensor(a.shape(), std::move(out));
}

inline double sum(std::span<const double> xs) noexcept {
  double s = 0.0;
  for (double x : xs) s += x;
  return s;
}

inline double mean(std::span<const double> xs) noexcept { return sum(xs) / static_cast<double>(xs.size()); }

// Population standard deviation (divide by n).
inline double pop_std(std::span<const double> xs) noexcept {
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size()));
}

inline double sigmoid(double x) noexcept { return 1.0 / (1.0 + std::exp(-x)); }

// log-sum-exp over the flattened sequence; max-shifted.
inline double log_sum_exp(std::span<const double> xs) noexcept {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : xs) mx = std::max(mx, x);
  if (std::isnan(mx)) {
    for (double x : xs)
      if (std::isnan(x)) return x;
  }
  if (!std::isfinite(mx)) {
    // +Inf max or all -Inf: let IEEE arithmetic decide.
    double s = 0.0;
    for (double x : xs) s += std::exp(x);
    return std::log(s);
  }
  double s = 0.0;
  for (double x : xs) s += std::exp(x - mx);
  return mx + std::log(s);
}

}  // namespace detail

/// Applies one of UOP00..UOP23. Never throws on numeric domain problems:
/// those surface as NaN/Inf in the result.
inline Tensor apply_unary(OpId op, const Tensor& a) {
  using detail::map;
  const auto xs = a.data();
  switch (op) {
    case OpId::kNoOp:
      return a;
    case OpId::kAbs:
      return map(a, [](double x) { return std::fabs(x); });
    case OpId::kTanh:
      return map(a, [](double x) { return std::tanh(x); });
    case OpId::kSquare:
      return map(a, [](double x) { return x * x; });
    case OpId::kExp:
      return map(a, [](double x) { return std::exp(x); });
    case OpId::kLog:
      return map(a, [](double x) { return std::log(x); });
    case OpId::kRelu:
      return map(a, [](double x) { return std::isnan(x) ? x : std::max(0.0, x); });
    case OpId::kLeakyRelu:
      return map(a, [](double x) { return std::isnan(x) ? x : std::max(0.1 * x, x); });
    case OpId::kSwish:
      return map(a, [](double x) { return x * detail::sigmoid(x); });
    case OpId::kMish:
      return map(a, [](double x) { return x * std::tanh(std::log1p(std::exp(x))); });
    case OpId::kInvert:
      return map(a, [](double x) { return 1.0 / x; });
    case OpId::kNormalizedSum:
      return Tensor::scalar(detail::sum(xs) / (static_cast<double>(xs.size()) + kEpsilon));
    case OpId::kNormalize: {
      const double m = detail::mean(xs);
      const double s = detail::pop_std(xs);
      return map(a, [=](double x) { return (x - m) / s; });
    }
    case OpId::kSigmoid:
      return map(a, detail::sigmoid);
    case OpId::kLogSoftmax: {
      const double lse = detail::log_sum_exp(xs);
      return map(a, [=](double x) { return x - lse; });
    }
    case OpId::kSoftmax: {
      const double lse = detail::log_sum_exp(xs);
      return map(a, [=](double x) { return std::exp(x - lse); });
    }
    case OpId::kSqrt:
      return map(a, [](double x) { return std::sqrt(x); });
    case OpId::kRevert:
      return map(a, [](double x) { return -x; });
    case OpId::kFrobeniusNorm: {
      double ss = 0.0;
      for (double x : xs) ss += x * x;
      return Tensor::scalar(std::sqrt(ss));
    }
    case OpId::kAbsLog:
      return map(a, [](double x) { return std::fabs(std::log(x)); });
    case OpId::kL1Norm: {
      double s = 0.0;
      for (double x : xs) s += std::fabs(x);
      return Tensor::scalar(s / static_cast<double>(xs.size()));
    }
    case OpId::kMinMaxNormalize: {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -std::numeric_limits<double>::infinity();
      bool nan = false;
      for (double x : xs) {
        nan = nan || std::isnan(x);
        lo = std::min(lo, x);
        hi = std::max(hi, x);
      }
      if (nan) return Tensor::filled(a.shape(), std::numeric_limits<double>::quiet_NaN());
      const double range = hi - lo;
      return map(a, [=](double x) { return (x - lo) / range; });
    }
    case OpId::kToMeanScalar:
      return Tensor::scalar(detail::mean(xs));
    case OpId::kToStdScalar:
      return Tensor::scalar(detail::pop_std(xs));
    default:
      throw std::invalid_argument("apply_unary: " + std::string(op_code(op)) + " is not a unary op");
  }
}

namespace detail {

template <class F>
Tensor zip(const Tensor& a, const Tensor& b, F f, std::string_view what) {
  if (a.shape() == b.shape()) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i], b[i]);
    return Tensor(a.shape(), std::move(out));
  }
  if (b.rank() == 0) {
    const double s = b.item();
    return map(a, [&](double x) { return f(x, s); });
  }
  if (a.rank() == 0) {
    const double s = a.item();
    return map(b, [&](double x) { return f(s, x); });
  }
  throw ShapeMismatch(std::string(what) + " of " + a.shape().str() + " and " + b.shape().str());
}

// Rank-1 operands act as a row vector on the left and a column vector on the
// right; the corresponding unit dimension is dropped from the result.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() == 0 || b.rank() == 0) return zip(a, b, std::multiplies<>{}, "matrix_multiplication");
  const std::size_t m = a.rank() == 2 ? a.shape()[0] : 1;
  const std::size_t k = a.rank() == 2 ? a.shape()[1] : a.shape()[0];
  const std::size_t kb = b.shape()[0];
  const std::size_t n = b.rank() == 2 ? b.shape()[1] : 1;
  if (k != kb)
    throw ShapeMismatch("matrix_multiplication of " + a.shape().str() + " and " + b.shape().str());
  std::vector<double> out(m * n, 0.0);
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = x[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * y[p * n + j];
    }
  if (a.rank() == 1 && b.rank() == 1) return Tensor::scalar(out[0]);
  if (a.rank() == 1) return Tensor(Shape(n), std::move(out));
  if (b.rank() == 1) return Tensor(Shape(m), std::move(out));
  return Tensor(Shape(m, n), std::move(out));
}

}  // namespace detail

/// Applies one of BOP01..BOP04. Element-wise ops need equal shapes or a rank-0
/// operand; anything else throws ShapeMismatch.
inline Tensor apply_binary(OpId op, const Tensor& a, const Tensor& b) {
  switch (op) {
    case OpId::kSum:
      return detail::zip(a, b, std::plus<>{}, "element_wise_sum");
    case OpId::kDifference:
      return detail::zip(a, b, std::minus<>{}, "element_wise_difference");
    case OpId::kProduct:
      return detail::zip(a, b, std::multiplies<>{}, "element_wise_product");
    case OpId::kMatMul:
      return detail::matmul(a, b);
    default:
      throw std::invalid_argument("apply_binary: " + std::string(op_code(op)) + " is not a binary op");
  }
}

// ---------------------------------------------------------------------------
// Binary format: u32 rank, u64 dims, then row-major binary64, little-endian.

namespace detail {

template <class T>
void put_le(std::ostream& os, T v) {
  auto u = std::bit_cast<std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>>(v);
  char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((u >> (8 * i)) & 0xFF);
  os.write(buf, sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T))) throw IoError("truncated tensor blob");
  U u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(buf[i]) << (8 * i);
  return std::bit_cast<T>(u);
}

}  // namespace detail

inline void write_tensor(std::ostream& os, const Tensor& t) {
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t i = 0; i < t.rank(); ++i) detail::put_le<std::uint64_t>(os, t.shape()[i]);
  for (double v : t.data()) detail::put_le<double>(os, v);
}

inline Tensor read_tensor(std::istream& is) {
  const auto rank = detail::get_le<std::uint32_t>(is);
  if (rank > 2) throw IoError("tensor blob has unsupported rank " + std::to_string(rank));
  std::array<std::uint64_t, 2> dims{1, 1};
  for (std::uint32_t i = 0; i < rank; ++i) {
    dims[i] = detail::get_le<std::uint64_t>(is);
    if (dims[i] == 0 || dims[i] > (1ull << 32)) throw IoError("tensor blob has invalid dimension");
  }
  Shape shape = rank == 0 ? Shape() : rank == 1 ? Shape(dims[0]) : Shape(dims[0], dims[1]);
  std::vector<double> data(shape.numel());
  for (auto& v : data) v = detail::get_le<double>(is);
  return Tensor(shape, std::move(data));
}

}  // namespace proxforge
