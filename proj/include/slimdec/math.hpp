#pragma once

// Dense row-major matrices, the handful of neural primitives the decoders
// need, and a seeded generator with a fixed, documented algorithm.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "slimdec/errors.hpp"

namespace slimdec {

template <typename Real>
using BasicVector = std::vector<Real>;
using Vector = BasicVector<double>;

template <typename Real>
class BasicMatrix {
 public:
  using value_type = Real;

  BasicMatrix() = default;
  BasicMatrix(std::size_t rows, std::size_t cols, Real fill = Real{0})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  // Row-wise literal: {{1, 2}, {3, 4}}.
  BasicMatrix(std::initializer_list<std::initializer_list<Real>> init)
      : rows_(init.size()), cols_(init.size() ? init.begin()->size() : 0) {
    data_.reserve(rows_ * cols_);
    for (const auto &r : init) {
      if (r.size() != cols_) throw ShapeError("ragged matrix literal");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static BasicMatrix row_vector(std::span<const Real> v) {
    BasicMatrix m(1, v.size());
    std::copy(v.begin(), v.end(), m.data_.begin());
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  Real &operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const Real &operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<Real> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const Real> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<Real> flat() { return data_; }
  std::span<const Real> flat() const { return data_; }
  Real *data() noexcept { return data_.data(); }
  const Real *data() const noexcept { return data_.data(); }

  void fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const BasicMatrix &) const = default;

  template <typename Other>
  BasicMatrix<Other> cast() const {
    BasicMatrix<Other> out(rows_, cols_);
    std::transform(data_.begin(), data_.end(), out.flat().begin(),
                   [](Real v) { return static_cast<Other>(v); });
    return out;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Real> data_;
};

using Matrix = BasicMatrix<double>;

inline std::string shape_string(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

template <typename Real>
BasicMatrix<Real> matmul(const BasicMatrix<Real> &a, const BasicMatrix<Real> &b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: " + shape_string(a.rows(), a.cols()) + " by " +
                     shape_string(b.rows(), b.cols()));
  BasicMatrix<Real> out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto dst = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const Real s = a(i, k);
      auto src = b.row(k);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += s * src[j];
    }
  }
  return out;
}

template <typename Real>
BasicMatrix<Real> transpose(const BasicMatrix<Real> &a) {
  BasicMatrix<Real> out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

// Four independent accumulators so the compiler can vectorize the reduction
// without reassociation flags.
template <typename Real>
Real dot(std::span<const Real> a, std::span<const Real> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  Real s0{}, s1{}, s2{}, s3{};
  std::size_t i = 0;
  const std::size_t n = a.size();
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

// out += s * x
template <typename Real>
void axpy(Real s, std::span<const Real> x, std::span<Real> out) {
  if (x.size() != out.size()) throw ShapeError("axpy: length mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) out[i] += s * x[i];
}

// out += x^T W, where W is in x out.
template <typename Real>
void vecmat_accumulate(std::span<const Real> x, const BasicMatrix<Real> &w, std::span<Real> out) {
  if (x.size() != w.rows() || out.size() != w.cols())
    throw ShapeError("vecmat: vector of " + std::to_string(x.size()) + " by " +
                     shape_string(w.rows(), w.cols()));
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const Real s = x[i];
    const Real *src = w.data() + i * w.cols();
    Real *dst = out.data();
    for (std::size_t j = 0; j < out.size(); ++j) dst[j] += s * src[j];
  }
}

template <typename Real>
BasicVector<Real> vecmat(std::span<const Real> x, const BasicMatrix<Real> &w) {
  BasicVector<Real> out(w.cols(), Real{0});
  vecmat_accumulate<Real>(x, w, out);
  return out;
}

// out += W y, i.e. the transposed product used when backpropagating through
// x^T W.
template <typename Real>
void matvec_accumulate(const BasicMatrix<Real> &w, std::span<const Real> y, std::span<Real> out) {
  if (y.size() != w.cols() || out.size() != w.rows())
    throw ShapeError("matvec: " + shape_string(w.rows(), w.cols()) + " by vector of " +
                     std::to_string(y.size()));
  for (std::size_t i = 0; i < w.rows(); ++i) out[i] += dot<Real>(w.row(i), y);
}

// W += x y^T (rank-one update).
template <typename Real>
void outer_accumulate(std::span<const Real> x, std::span<const Real> y, BasicMatrix<Real> &w) {
  if (x.size() != w.rows() || y.size() != w.cols()) throw ShapeError("outer: shape mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) axpy<Real>(x[i], y, w.row(i));
}

template <typename Real>
Real sigmoid(Real x) {
  if (x >= 0) return Real{1} / (Real{1} + std::exp(-x));
  const Real e = std::exp(x);
  return e / (Real{1} + e);
}

template <typename Real>
BasicVector<Real> swish(std::span<const Real> x) {
  BasicVector<Real> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * sigmoid(x[i]);
  return out;
}

template <typename Real>
Real swish_derivative(Real x) {
  const Real s = sigmoid(x);
  return s + x * s * (Real{1} - s);
}

inline constexpr double kLayerNormEps = 1e-6;

// (x - mean) / sqrt(var + eps) * gamma + beta, with the population variance.
template <typename Real>
BasicVector<Real> layer_norm(std::span<const Real> x, std::span<const Real> gamma,
                             std::span<const Real> beta, Real eps = Real(kLayerNormEps)) {
  if (x.size() != gamma.size() || x.size() != beta.size())
    throw ShapeError("layer_norm: length mismatch");
  if (x.empty()) throw ShapeError("layer_norm: empty input");
  const Real n = static_cast<Real>(x.size());
  Real mean{0};
  for (Real v : x) mean += v;
  mean /= n;
  Real var{0};
  for (Real v : x) var += (v - mean) * (v - mean);
  var /= n;
  const Real inv = Real{1} / std::sqrt(var + eps);
  BasicVector<Real> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean) * inv * gamma[i] + beta[i];
  return out;
}

template <typename Real>
Real log_sum_exp(Real a, Real b) {
  if (a == -std::numeric_limits<Real>::infinity()) return b;
  if (b == -std::numeric_limits<Real>::infinity()) return a;
  const Real m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

template <typename Real>
Real log_sum_exp(std::span<const Real> x) {
  if (x.empty()) throw ShapeError("log_sum_exp: empty input");
  const Real m = *std::max_element(x.begin(), x.end());
  if (m == -std::numeric_limits<Real>::infinity()) return m;
  Real s{0};
  for (Real v : x) s += std::exp(v - m);
  return m + std::log(s);
}

template <typename Real>
BasicVector<Real> log_softmax(std::span<const Real> logits) {
  if (logits.empty()) throw ShapeError("log_softmax: empty input");
  const Real lse = log_sum_exp(logits);
  BasicVector<Real> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

// Index of the first maximum.
template <typename Real>
std::size_t argmax(std::span<const Real> x) {
  if (x.empty()) throw ShapeError("argmax: empty input");
  return static_cast<std::size_t>(std::max_element(x.begin(), x.end()) - x.begin());
}

template <typename Real>
bool all_finite(std::span<const Real> x) {
  return std::all_of(x.begin(), x.end(), [](Real v) { return std::isfinite(v); });
}

// xoshiro256** seeded through splitmix64. The integer stream is identical on
// every platform; gaussian() uses Box-Muller on top of it.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0) : seed_(seed) {
    std::uint64_t sm = seed;
    for (auto &s : state_) s = splitmix64(sm);
  }

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [lo, hi].
  std::size_t uniform_int(std::size_t lo, std::size_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::size_t>(next_u64() % span);
  }

  double gaussian(double mean = 0.0, double stddev = 1.0) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return mean + stddev * r * std::cos(theta);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  static std::uint64_t splitmix64(std::uint64_t &x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t state_[4]{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace slimdec
