#ifndef SCRN_TESTS_ORACLES_HPP_
#define SCRN_TESTS_ORACLES_HPP_

// Straight-line reference computations used as test oracles. They work on
// explicit one-hot vectors and full matrix products so they share no code
// path with the library kernels.

#include <cmath>
#include <random>
#include <vector>

#include "scrn/model.hpp"

namespace scrn::oracle {

using Mat = std::vector<std::vector<double>>;
using Vec = std::vector<double>;

inline Mat to_mat(const Matrix<double>& m) {
  Mat out(m.rows(), Vec(m.cols()));
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
  return out;
}

// y_i = sum_j W_ij x_j, triple-loop style.
inline Vec matvec(const Mat& w, const Vec& x) {
  Vec y(w.size(), 0.0);
  for (std::size_t i = 0; i < w.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j) y[i] += w[i][j] * x[j];
  return y;
}

// Token-indexed blocks are stored d x k; the column-vector map is their
// transpose applied to a one-hot x.
inline Vec embed(const Mat& rows_by_token, const Vec& onehot) {
  const std::size_t k = rows_by_token.empty() ? 0 : rows_by_token[0].size();
  Vec y(k, 0.0);
  for (std::size_t t = 0; t < rows_by_token.size(); ++t)
    for (std::size_t j = 0; j < k; ++j) y[j] += rows_by_token[t][j] * onehot[t];
  return y;
}

inline Vec onehot(std::size_t d, std::size_t id) {
  Vec x(d, 0.0);
  x[id] = 1.0;
  return x;
}

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct ScrnTrace {
  std::vector<Vec> h, s;
};

// Fixed-alpha (or per-unit decay q) SCRN recurrence from the zero state.
inline ScrnTrace scrn_run(const Params<double>& p, const ModelShape& shape, const Vec& q,
                          const std::vector<TokenId>& tokens) {
  const Mat a = to_mat(p[Block::kA]), r = to_mat(p[Block::kR]), b = to_mat(p[Block::kB]),
            pm = to_mat(p[Block::kP]);
  Vec h(shape.hidden, 0.0), s(shape.context, 0.0);
  ScrnTrace tr;
  for (TokenId tok : tokens) {
    const Vec x = onehot(shape.vocab, tok);
    const Vec bx = embed(b, x);
    Vec s_new(shape.context);
    for (std::size_t j = 0; j < shape.context; ++j) s_new[j] = (1.0 - q[j]) * bx[j] + q[j] * s[j];
    const Vec ax = embed(a, x);
    const Vec rh = matvec(r, h);
    const Vec ps = shape.context ? matvec(pm, s_new) : Vec(shape.hidden, 0.0);
    Vec h_new(shape.hidden);
    for (std::size_t i = 0; i < shape.hidden; ++i) h_new[i] = logistic(ps[i] + ax[i] + rh[i]);
    h = h_new;
    s = s_new;
    tr.h.push_back(h);
    tr.s.push_back(s);
  }
  return tr;
}

struct LstmTrace {
  std::vector<Vec> h, c;
};

inline LstmTrace lstm_run(const Params<double>& p, const ModelShape& shape,
                          const std::vector<TokenId>& tokens) {
  const std::size_t m = shape.hidden;
  const Mat wx = to_mat(p[Block::kWx]), wh = to_mat(p[Block::kWh]);
  const Vec bias = to_mat(p[Block::kBias])[0];
  Vec h(m, 0.0), c(m, 0.0);
  LstmTrace tr;
  for (TokenId tok : tokens) {
    const Vec zx = embed(wx, onehot(shape.vocab, tok));
    const Vec zh = matvec(wh, h);
    Vec ig(m), fg(m), og(m), gg(m);
    for (std::size_t i = 0; i < m; ++i) {
      ig[i] = logistic(zx[i] + zh[i] + bias[i]);
      fg[i] = logistic(zx[m + i] + zh[m + i] + bias[m + i]);
      og[i] = logistic(zx[2 * m + i] + zh[2 * m + i] + bias[2 * m + i]);
      gg[i] = std::tanh(zx[3 * m + i] + zh[3 * m + i] + bias[3 * m + i]);
    }
    for (std::size_t i = 0; i < m; ++i) {
      c[i] = fg[i] * c[i] + ig[i] * gg[i];
      h[i] = og[i] * std::tanh(c[i]);
    }
    tr.h.push_back(h);
    tr.c.push_back(c);
  }
  return tr;
}

// exp/sum softmax without max shifting; fine for moderate logits.
inline Vec softmax(const Vec& v) {
  double z = 0.0;
  for (double x : v) z += std::exp(x);
  Vec out;
  for (double x : v) out.push_back(std::exp(x) / z);
  return out;
}

struct ScrnGrads {
  Mat A, R, B, P, U, V;
  Vec beta;
};

// Full-sequence backpropagation for the SRN/SCRN family with a full softmax.
// tokens[0..n-1] are inputs, tokens[1..n] targets; q holds the per-unit
// decays (sigma(beta) when `adaptive`). Plain nested loops over explicit
// matrices, written directly from the forward equations.
inline ScrnGrads scrn_bptt(const Params<double>& p, const ModelShape& shape, const Vec& q, bool adaptive,
                           const std::vector<TokenId>& tokens) {
  const std::size_t d = shape.vocab, m = shape.hidden, c = shape.context, n = tokens.size() - 1;
  const Mat a = to_mat(p[Block::kA]), r = to_mat(p[Block::kR]), b = to_mat(p[Block::kB]),
            pm = to_mat(p[Block::kP]), u = to_mat(p[Block::kU]), v = to_mat(p[Block::kV]);
  const std::vector<TokenId> inputs(tokens.begin(), tokens.end() - 1);
  const ScrnTrace tr = scrn_run(p, shape, q, inputs);

  auto zeros = [](std::size_t rows, std::size_t cols) { return Mat(rows, Vec(cols, 0.0)); };
  ScrnGrads g{zeros(d, m), zeros(m, m), zeros(d, c), zeros(m, c), zeros(d, m), zeros(d, c), Vec(c, 0.0)};
  Vec carry_h(m, 0.0), carry_s(c, 0.0);
  for (std::size_t t = n; t-- > 0;) {
    const Vec& h = tr.h[t];
    const Vec& s = tr.s[t];
    const Vec h_prev = t ? tr.h[t - 1] : Vec(m, 0.0);
    const Vec s_prev = t ? tr.s[t - 1] : Vec(c, 0.0);
    Vec logits(d, 0.0);
    for (std::size_t k = 0; k < d; ++k) {
      for (std::size_t i = 0; i < m; ++i) logits[k] += u[k][i] * h[i];
      for (std::size_t j = 0; j < c; ++j) logits[k] += v[k][j] * s[j];
    }
    Vec dz = softmax(logits);
    dz[tokens[t + 1]] -= 1.0;
    Vec dh = carry_h, ds = carry_s;
    for (std::size_t k = 0; k < d; ++k) {
      for (std::size_t i = 0; i < m; ++i) {
        g.U[k][i] += dz[k] * h[i];
        dh[i] += u[k][i] * dz[k];
      }
      for (std::size_t j = 0; j < c; ++j) {
        g.V[k][j] += dz[k] * s[j];
        ds[j] += v[k][j] * dz[k];
      }
    }
    Vec da(m);
    for (std::size_t i = 0; i < m; ++i) da[i] = dh[i] * h[i] * (1.0 - h[i]);
    const TokenId x = inputs[t];
    for (std::size_t i = 0; i < m; ++i) {
      g.A[x][i] += da[i];
      for (std::size_t k = 0; k < m; ++k) g.R[i][k] += da[i] * h_prev[k];
      for (std::size_t j = 0; j < c; ++j) {
        g.P[i][j] += da[i] * s[j];
        ds[j] += pm[i][j] * da[i];
      }
    }
    for (std::size_t j = 0; j < c; ++j) {
      g.B[x][j] += (1.0 - q[j]) * ds[j];
      if (adaptive) g.beta[j] += ds[j] * (s_prev[j] - b[x][j]) * q[j] * (1.0 - q[j]);
      carry_s[j] = q[j] * ds[j];
    }
    for (std::size_t k = 0; k < m; ++k) {
      carry_h[k] = 0.0;
      for (std::size_t i = 0; i < m; ++i) carry_h[k] += r[i][k] * da[i];
    }
  }
  return g;
}

inline Vec random_vec(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vec v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

}  // namespace scrn::oracle

#endif  // SCRN_TESTS_ORACLES_HPP_
