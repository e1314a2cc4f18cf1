#ifndef SCRN_NUMERICS_HPP_
#define SCRN_NUMERICS_HPP_

// Dense row-major matrices, activations and the handful of BLAS-like kernels
// the recurrent cells and output layers are written in.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace scrn {

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <class Real>
using Vector = std::vector<Real>;

template <class Real>
class Matrix {
  static_assert(std::is_floating_point_v<Real>);

 public:
  using value_type = Real;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, Real fill = Real(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  Real& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  Real operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<Real> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const Real> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<Real> flat() { return data_; }
  std::span<const Real> flat() const { return data_; }
  Real* data() { return data_.data(); }
  const Real* data() const { return data_.data(); }

  void fill(Real v) { std::fill(data_.begin(), data_.end(), v); }
  void resize(std::size_t rows, std::size_t cols) {
    rows_ = rows;
    cols_ = cols;
    data_.assign(rows * cols, Real(0));
  }

  Matrix transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

  template <class Other>
  Matrix<Other> cast() const {
    Matrix<Other> out(rows_, cols_);
    for (std::size_t i = 0; i < data_.size(); ++i) out.flat()[i] = static_cast<Other>(data_[i]);
    return out;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Real> data_;
};

inline void check_dim(bool ok, const char* what) {
  if (!ok) throw DimensionError(std::string("dimension mismatch: ") + what);
}

// ---------------------------------------------------------------------------
// Activations

inline constexpr double kSigmoidClamp = 30.0;

template <class Real>
inline Real sigmoid(Real x) {
  const Real z = std::clamp(x, Real(-kSigmoidClamp), Real(kSigmoidClamp));
  return Real(1) / (Real(1) + std::exp(-z));
}

template <class Real>
inline Vector<Real> sigmoid(std::span<const Real> v) {
  Vector<Real> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = sigmoid(v[i]);
  return out;
}

template <class Real>
inline Vector<Real> sigmoid(const Vector<Real>& v) {
  return sigmoid(std::span<const Real>(v));
}

template <class Real>
inline Real logit(Real p) {
  return std::log(p / (Real(1) - p));
}

// Scalar type for sums and losses: at least double.
template <class Real>
using accum_t = std::conditional_t<(sizeof(Real) > sizeof(double)), Real, double>;

// In place: v <- softmax(v). Returns log of the normalizer (after the max
// shift has been added back), so log p_i = v_i - lse for the original v.
template <class Real>
inline accum_t<Real> softmax_inplace(std::span<Real> v) {
  using Acc = accum_t<Real>;
  if (v.empty()) return Acc(0);
  const Real mx = *std::max_element(v.begin(), v.end());
  Acc sum = 0;
  for (auto& x : v) {
    x = std::exp(x - mx);
    sum += x;
  }
  const Real inv = static_cast<Real>(Acc(1) / sum);
  for (auto& x : v) x *= inv;
  return static_cast<Acc>(mx) + std::log(sum);
}

template <class Real>
inline Vector<Real> softmax(std::span<const Real> v) {
  Vector<Real> out(v.begin(), v.end());
  softmax_inplace(std::span<Real>(out));
  return out;
}

template <class Real>
inline Vector<Real> softmax(const Vector<Real>& v) {
  return softmax(std::span<const Real>(v));
}

// ---------------------------------------------------------------------------
// Kernels. Dot products use four partial sums so the compiler can vectorize
// without reassociation flags; the order is fixed, so results are
// reproducible run to run.

template <class Real>
inline Real dot(std::span<const Real> a, std::span<const Real> b) {
  assert(a.size() == b.size());
  const std::size_t n = a.size();
  Real s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

// y += a * x
template <class Real>
inline void axpy(Real a, std::span<const Real> x, std::span<Real> y) {
  assert(x.size() == y.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

// out (+)= W x
template <class Real>
inline void affine_apply(const Matrix<Real>& w, std::span<const Real> x, std::span<Real> out,
                         bool accumulate = false) {
  check_dim(w.cols() == x.size() && w.rows() == out.size(), "affine_apply");
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const Real v = dot(w.row(r), x);
    out[r] = accumulate ? out[r] + v : v;
  }
}

template <class Real>
inline Vector<Real> affine_apply(const Matrix<Real>& w, std::span<const Real> x) {
  Vector<Real> out(w.rows());
  affine_apply(w, x, std::span<Real>(out));
  return out;
}

// out (+)= W^T g
template <class Real>
inline void transpose_apply(const Matrix<Real>& w, std::span<const Real> g, std::span<Real> out,
                            bool accumulate = false) {
  check_dim(w.rows() == g.size() && w.cols() == out.size(), "transpose_apply");
  if (!accumulate) std::fill(out.begin(), out.end(), Real(0));
  for (std::size_t r = 0; r < w.rows(); ++r) {
    if (g[r] != Real(0)) axpy(g[r], w.row(r), out);
  }
}

template <class Real>
inline Vector<Real> transpose_apply(const Matrix<Real>& w, std::span<const Real> g) {
  Vector<Real> out(w.cols());
  transpose_apply(w, g, std::span<Real>(out));
  return out;
}

// W += scale * a b^T
template <class Real>
inline void add_outer(Matrix<Real>& w, std::span<const Real> a, std::span<const Real> b,
                      Real scale = Real(1)) {
  check_dim(w.rows() == a.size() && w.cols() == b.size(), "add_outer");
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const Real ar = scale * a[r];
    if (ar != Real(0)) axpy(ar, b, w.row(r));
  }
}

template <class Real>
inline double squared_norm(std::span<const Real> v) {
  double s = 0.0;
  for (Real x : v) s += static_cast<double>(x) * static_cast<double>(x);
  return s;
}

template <class Real>
inline bool all_finite(std::span<const Real> v) {
  return std::all_of(v.begin(), v.end(), [](Real x) { return std::isfinite(x); });
}

// ---------------------------------------------------------------------------
// Initialization

// Entries i.i.d. uniform in [-half_width, half_width]; bit-identical for the
// same (shape, seed).
template <class Real>
inline Matrix<Real> seeded_uniform(std::size_t rows, std::size_t cols, double half_width,
                                   std::uint64_t seed) {
  if (!(half_width > 0.0)) throw std::invalid_argument("seeded_uniform: half_width must be > 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-half_width, half_width);
  Matrix<Real> m(rows, cols);
  for (auto& x : m.flat()) x = static_cast<Real>(dist(rng));
  return m;
}

// splitmix64 finalizer, used to derive independent per-block seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace scrn

#endif  // SCRN_NUMERICS_HPP_
