#ifndef SCRN_CELLS_HPP_
#define SCRN_CELLS_HPP_

// Recurrent cells: SRN, SCRN with a fixed or learned context decay, and a
// minimal LSTM. Forward steps write into tape entries; backward_window runs
// exact reverse mode over a window of cached steps.

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "scrn/gradients.hpp"
#include "scrn/model.hpp"
#include "scrn/numerics.hpp"

namespace scrn {

template <class Real>
struct CellState {
  Vector<Real> h;  // hidden, m
  Vector<Real> s;  // context, p
  Vector<Real> c;  // LSTM memory, m

  static CellState zeros(const ModelShape& shape) {
    CellState st;
    st.h.assign(shape.hidden, Real(0));
    st.s.assign(shape.context, Real(0));
    if (shape.lstm()) st.c.assign(shape.hidden, Real(0));
    return st;
  }

  bool finite() const {
    return all_finite<Real>(h) && all_finite<Real>(s) && all_finite<Real>(c);
  }

  friend bool operator==(const CellState&, const CellState&) = default;
};

// Gradient of a loss with respect to a cell state.
template <class Real>
struct StateGrad {
  Vector<Real> h, s, c;

  static StateGrad zeros(const ModelShape& shape) {
    StateGrad g;
    g.h.assign(shape.hidden, Real(0));
    g.s.assign(shape.context, Real(0));
    g.c.assign(shape.lstm() ? shape.hidden : 0, Real(0));
    return g;
  }
  void clear() {
    std::fill(h.begin(), h.end(), Real(0));
    std::fill(s.begin(), s.end(), Real(0));
    std::fill(c.begin(), c.end(), Real(0));
  }
};

template <class Real>
struct TapeEntry {
  TokenId token = 0;
  CellState<Real> state;  // state after consuming `token`
  Vector<Real> gates;     // LSTM: i, f, o (sigmoid) and g (tanh), 4m
  Vector<Real> tanh_c;    // LSTM: tanh(c), m
};

// Ring of the most recent steps plus the state that preceded the oldest one.
template <class Real>
class StepTape {
 public:
  StepTape() = default;
  StepTape(const ModelShape& shape, std::size_t capacity)
      : initial_(CellState<Real>::zeros(shape)), entries_(capacity) {
    if (capacity == 0) throw std::invalid_argument("tape capacity must be > 0");
  }

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return entries_.size(); }
  bool empty() const { return size_ == 0; }

  // i = 0 is the oldest retained step.
  const TapeEntry<Real>& operator[](std::size_t i) const {
    return entries_[(head_ + i) % entries_.size()];
  }
  const TapeEntry<Real>& back() const { return (*this)[size_ - 1]; }

  const CellState<Real>& initial() const { return initial_; }
  const CellState<Real>& prev_of(std::size_t i) const {
    return i == 0 ? initial_ : (*this)[i - 1].state;
  }
  const CellState<Real>& current() const { return size_ == 0 ? initial_ : back().state; }

  // Slot for the next step; evicts the oldest step when full.
  TapeEntry<Real>& push() {
    if (size_ == entries_.size()) {
      initial_ = entries_[head_].state;
      head_ = (head_ + 1) % entries_.size();
      --size_;
    }
    ++size_;
    return entries_[(head_ + size_ - 1) % entries_.size()];
  }

  // Drops history but keeps the current state as the new window start.
  void truncate() {
    initial_ = current();
    head_ = 0;
    size_ = 0;
  }

  void reset(const CellState<Real>& state) {
    initial_ = state;
    head_ = 0;
    size_ = 0;
  }

 private:
  CellState<Real> initial_;
  std::vector<TapeEntry<Real>> entries_;
  std::size_t head_ = 0;
  std::size_t size_ = 0;
};

// Per-unit context decay: alpha everywhere in fixed mode, sigma(beta) in
// adaptive mode.
template <class Real>
inline Vector<Real> context_decay(const Params<Real>& params, const ModelShape& shape) {
  Vector<Real> q(shape.context);
  if (shape.adaptive()) {
    const auto& beta = params[Block::kBeta];
    for (std::size_t i = 0; i < shape.context; ++i) q[i] = sigmoid(beta(0, i));
  } else {
    std::fill(q.begin(), q.end(), static_cast<Real>(shape.alpha));
  }
  return q;
}

namespace detail {

template <class Real>
void check_token(const ModelShape& shape, TokenId token) {
  if (token >= shape.vocab) throw std::out_of_range("token id out of range");
}

}  // namespace detail

// s_t = (1 - q) * B x_t + q * s_{t-1}
// h_t = sigmoid(P s_t + A x_t + R h_{t-1})
template <class Real>
inline void scrn_step(const Params<Real>& params, const ModelShape& shape,
                      const CellState<Real>& prev, TokenId token, TapeEntry<Real>& out) {
  detail::check_token<Real>(shape, token);
  const std::size_t m = shape.hidden, p = shape.context;
  out.token = token;
  auto& s = out.state.s;
  auto& h = out.state.h;
  s.resize(p);
  h.resize(m);
  if (p > 0) {
    const Vector<Real> q = context_decay(params, shape);
    const auto b = params[Block::kB].row(token);
    for (std::size_t i = 0; i < p; ++i) s[i] = (Real(1) - q[i]) * b[i] + q[i] * prev.s[i];
  }
  if (m > 0) {
    const auto a = params[Block::kA].row(token);
    affine_apply(params[Block::kR], std::span<const Real>(prev.h), std::span<Real>(h));
    if (p > 0) affine_apply(params[Block::kP], std::span<const Real>(s), std::span<Real>(h), true);
    for (std::size_t i = 0; i < m; ++i) h[i] = sigmoid(h[i] + a[i]);
  }
}

// h_t = sigmoid(A x_t + R h_{t-1}); the SCRN step with no context units.
template <class Real>
inline void srn_step(const Params<Real>& params, const ModelShape& shape,
                     const CellState<Real>& prev, TokenId token, TapeEntry<Real>& out) {
  if (shape.context != 0) throw std::invalid_argument("srn_step: model has context units");
  scrn_step(params, shape, prev, token, out);
}

// Gates from z = Wx[x] + Wh h_{t-1} + b, laid out as [i | f | o | g].
// c_t = f*c_{t-1} + i*g, h_t = o*tanh(c_t).
template <class Real>
inline void lstm_step(const Params<Real>& params, const ModelShape& shape,
                      const CellState<Real>& prev, TokenId token, TapeEntry<Real>& out) {
  detail::check_token<Real>(shape, token);
  const std::size_t m = shape.hidden;
  out.token = token;
  auto& z = out.gates;
  z.resize(4 * m);
  affine_apply(params[Block::kWh], std::span<const Real>(prev.h), std::span<Real>(z));
  const auto wx = params[Block::kWx].row(token);
  const auto bias = params[Block::kBias].row(0);
  for (std::size_t i = 0; i < 4 * m; ++i) z[i] += wx[i] + bias[i];
  for (std::size_t i = 0; i < 3 * m; ++i) z[i] = sigmoid(z[i]);
  for (std::size_t i = 3 * m; i < 4 * m; ++i) z[i] = std::tanh(z[i]);

  auto& st = out.state;
  st.h.resize(m);
  st.c.resize(m);
  st.s.clear();
  out.tanh_c.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    st.c[i] = z[m + i] * prev.c[i] + z[i] * z[3 * m + i];
    out.tanh_c[i] = std::tanh(st.c[i]);
    st.h[i] = z[2 * m + i] * out.tanh_c[i];
  }
}

template <class Real>
inline void step(const Params<Real>& params, const ModelShape& shape, const CellState<Real>& prev,
                 TokenId token, TapeEntry<Real>& out) {
  if (shape.lstm()) {
    lstm_step(params, shape, prev, token, out);
  } else {
    scrn_step(params, shape, prev, token, out);
  }
}

// Convenience for tests and evaluation: returns the next state.
template <class Real>
inline CellState<Real> advance(const Params<Real>& params, const ModelShape& shape,
                               const CellState<Real>& prev, TokenId token) {
  TapeEntry<Real> e;
  step(params, shape, prev, token, e);
  return std::move(e.state);
}

// ---------------------------------------------------------------------------
// Block-matrix view of the fixed/adaptive SCRN. With z_t = [h_t; s_t]:
//   z_t = act(M z_{t-1} + W x_t)
//   M = [R, P Q; 0, Q],  W = [A^T + P (I - Q) B^T; (I - Q) B^T]
// where act is the sigmoid on the first m coordinates and identity on the
// last p, and Q = alpha I or diag(sigma(beta)).

template <class Real>
inline Matrix<Real> block_matrix(const Params<Real>& params, const ModelShape& shape) {
  if (shape.lstm()) throw std::invalid_argument("block_matrix: not defined for lstm");
  const std::size_t m = shape.hidden, p = shape.context;
  const Vector<Real> q = context_decay(params, shape);
  Matrix<Real> mm(m + p, m + p);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) mm(i, j) = params[Block::kR](i, j);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < p; ++j) mm(i, m + j) = params[Block::kP](i, j) * q[j];
  for (std::size_t j = 0; j < p; ++j) mm(m + j, m + j) = q[j];
  return mm;
}

template <class Real>
inline Matrix<Real> block_input_matrix(const Params<Real>& params, const ModelShape& shape) {
  if (shape.lstm()) throw std::invalid_argument("block_input_matrix: not defined for lstm");
  const std::size_t m = shape.hidden, p = shape.context, d = shape.vocab;
  const Vector<Real> q = context_decay(params, shape);
  Matrix<Real> w(m + p, d);
  for (std::size_t x = 0; x < d; ++x) {
    for (std::size_t j = 0; j < p; ++j) w(m + j, x) = (Real(1) - q[j]) * params[Block::kB](x, j);
    for (std::size_t i = 0; i < m; ++i) {
      Real v = params[Block::kA](x, i);
      for (std::size_t j = 0; j < p; ++j) v += params[Block::kP](i, j) * w(m + j, x);
      w(i, x) = v;
    }
  }
  return w;
}

// ---------------------------------------------------------------------------
// Backward

namespace detail {

template <class Real>
void check_grads_shape(const ModelShape& shape, const StateGrad<Real>& g) {
  if (g.h.size() != shape.hidden || g.s.size() != shape.context)
    throw DimensionError("dimension mismatch: output gradient vs model shape");
}

}  // namespace detail

// Reverse mode over every step held in `tape`. `output_grads` are dL/dh_t
// and dL/ds_t contributed by the output layer; they apply to the newest
// output_grads.size() steps, older steps receive none (their losses were
// already used by an earlier update). Parameter gradients are accumulated
// into `grads`; the gradient with respect to tape.initial() is returned.
// The fixed decay alpha is a constant and gets no gradient.
template <class Real>
inline StateGrad<Real> backward_window(const Params<Real>& params, const ModelShape& shape,
                                       const StepTape<Real>& tape,
                                       std::span<const StateGrad<Real>> output_grads,
                                       Gradients<Real>& grads) {
  if (output_grads.size() > tape.size())
    throw DimensionError("dimension mismatch: more output gradients than tape steps");
  for (const auto& g : output_grads) detail::check_grads_shape(shape, g);

  const std::size_t m = shape.hidden, p = shape.context;
  const std::size_t n = tape.size();
  const std::size_t first_out = n - output_grads.size();
  StateGrad<Real> carry = StateGrad<Real>::zeros(shape);

  if (shape.lstm()) {
    Vector<Real> dh(m), dc(m), dz(4 * m);
    for (std::size_t k = n; k-- > 0;) {
      const auto& e = tape[k];
      const auto& prev = tape.prev_of(k);
      const auto& z = e.gates;
      for (std::size_t i = 0; i < m; ++i) {
        dh[i] = carry.h[i] + (k >= first_out ? output_grads[k - first_out].h[i] : Real(0));
      }
      for (std::size_t i = 0; i < m; ++i) {
        const Real ig = z[i], fg = z[m + i], og = z[2 * m + i], gg = z[3 * m + i];
        const Real tc = e.tanh_c[i];
        dc[i] = carry.c[i] + dh[i] * og * (Real(1) - tc * tc);
        dz[i] = dc[i] * gg * ig * (Real(1) - ig);
        dz[m + i] = dc[i] * prev.c[i] * fg * (Real(1) - fg);
        dz[2 * m + i] = dh[i] * tc * og * (Real(1) - og);
        dz[3 * m + i] = dc[i] * ig * (Real(1) - gg * gg);
        carry.c[i] = dc[i] * fg;
      }
      const std::span<const Real> dzs(dz);
      axpy(Real(1), dzs, grads.row(Block::kWx, e.token));
      axpy(Real(1), dzs, grads.row(Block::kBias, 0));
      add_outer(grads.dense(Block::kWh), dzs, std::span<const Real>(prev.h));
      transpose_apply(params[Block::kWh], dzs, std::span<Real>(carry.h));
    }
    return carry;
  }

  const Vector<Real> q = context_decay(params, shape);
  Vector<Real> da(m), ds(p);
  for (std::size_t k = n; k-- > 0;) {
    const auto& e = tape[k];
    const auto& prev = tape.prev_of(k);
    const StateGrad<Real>* out = k >= first_out ? &output_grads[k - first_out] : nullptr;
    const auto& h = e.state.h;
    const auto& s = e.state.s;

    for (std::size_t i = 0; i < m; ++i) {
      const Real dh = carry.h[i] + (out ? out->h[i] : Real(0));
      da[i] = dh * h[i] * (Real(1) - h[i]);
    }
    for (std::size_t j = 0; j < p; ++j) ds[j] = carry.s[j] + (out ? out->s[j] : Real(0));

    const std::span<const Real> das(da);
    if (m > 0) {
      axpy(Real(1), das, grads.row(Block::kA, e.token));
      add_outer(grads.dense(Block::kR), das, std::span<const Real>(prev.h));
    }
    if (p > 0) {
      if (m > 0) {
        add_outer(grads.dense(Block::kP), das, std::span<const Real>(s));
        transpose_apply(params[Block::kP], das, std::span<Real>(ds), true);
      }
      auto gb = grads.row(Block::kB, e.token);
      const auto b = params[Block::kB].row(e.token);
      for (std::size_t j = 0; j < p; ++j) gb[j] += (Real(1) - q[j]) * ds[j];
      if (shape.adaptive()) {
        auto gbeta = grads.row(Block::kBeta, 0);
        for (std::size_t j = 0; j < p; ++j)
          gbeta[j] += ds[j] * (prev.s[j] - b[j]) * q[j] * (Real(1) - q[j]);
      }
      for (std::size_t j = 0; j < p; ++j) carry.s[j] = q[j] * ds[j];
    }
    if (m > 0) transpose_apply(params[Block::kR], das, std::span<Real>(carry.h));
  }
  return carry;
}

}  // namespace scrn

#endif  // SCRN_CELLS_HPP_
