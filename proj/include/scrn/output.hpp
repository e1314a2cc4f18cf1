#ifndef SCRN_OUTPUT_HPP_
#define SCRN_OUTPUT_HPP_

// Output layers: y = softmax(U h + V s) over the full vocabulary, or the
// two-level factorization P(w) = P(class(w) | h, s) * P(w | class(w), h, s).
// Class logits come from separate K-row matrices (Cu, Cv); within-class
// logits reuse the rows of U and V that belong to the class.

#include <cmath>
#include <span>
#include <vector>

#include "scrn/cells.hpp"
#include "scrn/corpus.hpp"
#include "scrn/gradients.hpp"
#include "scrn/model.hpp"

namespace scrn {

namespace detail {

// Softmax over logits row_h(r).h + row_s(r).s for r in `rows`. Returns
// -log p(target_pos). With grads set, accumulates the parameter gradients
// into row-blocks bh/bs and the state gradients into gh/gs.
template <class Real, class Rows>
accum_t<Real> softmax_rows_loss(const Matrix<Real>& wh, const Matrix<Real>& ws, const Rows& rows,
                         std::span<const Real> h, std::span<const Real> s, std::size_t target_pos,
                         Gradients<Real>* grads, Block bh, Block bs, StateGrad<Real>* out) {
  thread_local Vector<Real> logits;
  const std::size_t n = rows.size();
  logits.resize(n);
  const bool use_h = !h.empty(), use_s = !s.empty();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = rows[i];
    Real v = use_h ? dot(wh.row(r), h) : Real(0);
    if (use_s) v += dot(ws.row(r), s);
    logits[i] = v;
  }
  const accum_t<Real> target_logit = logits[target_pos];
  const accum_t<Real> lse = softmax_inplace(std::span<Real>(logits.data(), n));
  const accum_t<Real> nll = lse - target_logit;
  if (grads == nullptr && out == nullptr) return nll;

  logits[target_pos] -= Real(1);  // now dL/dlogit
  for (std::size_t i = 0; i < n; ++i) {
    const Real g = logits[i];
    const std::size_t r = rows[i];
    if (use_h) {
      if (out) axpy(g, wh.row(r), std::span<Real>(out->h));
      if (grads) axpy(g, h, grads->row(bh, r));
    }
    if (use_s) {
      if (out) axpy(g, ws.row(r), std::span<Real>(out->s));
      if (grads) axpy(g, s, grads->row(bs, r));
    }
  }
  return nll;
}

// Probabilities of `rows` written to probs (same order).
template <class Real, class Rows>
void softmax_rows_probs(const Matrix<Real>& wh, const Matrix<Real>& ws, const Rows& rows,
                        std::span<const Real> h, std::span<const Real> s, std::span<Real> probs) {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t r = rows[i];
    Real v = h.empty() ? Real(0) : dot(wh.row(r), h);
    if (!s.empty()) v += dot(ws.row(r), s);
    probs[i] = v;
  }
  softmax_inplace(probs);
}

struct IotaRows {
  std::size_t n;
  std::size_t size() const { return n; }
  std::size_t operator[](std::size_t i) const { return i; }
};

}  // namespace detail

// -ln y[target] for y = softmax(U h + V s). When `grads` is given, dL/dU and
// dL/dV are accumulated; when `out` is given, dL/dh and dL/ds are added to it.
template <class Real>
inline accum_t<Real> full_softmax_loss(const Params<Real>& params, const ModelShape& shape,
                                std::span<const Real> h, std::span<const Real> s, TokenId target,
                                Gradients<Real>* grads = nullptr, StateGrad<Real>* out = nullptr) {
  detail::check_token<Real>(shape, target);
  return detail::softmax_rows_loss(params[Block::kU], params[Block::kV], detail::IotaRows{shape.vocab},
                                   h, s, target, grads, Block::kU, Block::kV, out);
}

template <class Real>
inline accum_t<Real> hsm_loss(const Params<Real>& params, const ModelShape& shape, const ClassLayout& layout,
                       std::span<const Real> h, std::span<const Real> s, TokenId target,
                       Gradients<Real>* grads = nullptr, StateGrad<Real>* out = nullptr) {
  detail::check_token<Real>(shape, target);
  const std::size_t cls = layout.class_of[target];
  const accum_t<Real> class_nll = detail::softmax_rows_loss(
      params[Block::kClassU], params[Block::kClassV], detail::IotaRows{layout.num_classes()}, h, s,
      cls, grads, Block::kClassU, Block::kClassV, out);
  const accum_t<Real> word_nll = detail::softmax_rows_loss(
      params[Block::kU], params[Block::kV], layout.class_members[cls], h, s,
      layout.within_class_index[target], grads, Block::kU, Block::kV, out);
  return class_nll + word_nll;
}

template <class Real>
inline Vector<Real> full_distribution(const Params<Real>& params, const ModelShape& shape,
                                      std::span<const Real> h, std::span<const Real> s) {
  Vector<Real> probs(shape.vocab);
  detail::softmax_rows_probs(params[Block::kU], params[Block::kV], detail::IotaRows{shape.vocab}, h,
                             s, std::span<Real>(probs));
  return probs;
}

// Explicit O(d) enumeration of the factored distribution.
template <class Real>
inline Vector<Real> hsm_full_distribution(const Params<Real>& params, const ModelShape& shape,
                                          const ClassLayout& layout, std::span<const Real> h,
                                          std::span<const Real> s) {
  const std::size_t k = layout.num_classes();
  Vector<Real> class_probs(k);
  detail::softmax_rows_probs(params[Block::kClassU], params[Block::kClassV], detail::IotaRows{k}, h,
                             s, std::span<Real>(class_probs));
  Vector<Real> probs(shape.vocab);
  Vector<Real> within;
  for (std::size_t c = 0; c < k; ++c) {
    const auto& members = layout.class_members[c];
    within.resize(members.size());
    detail::softmax_rows_probs(params[Block::kU], params[Block::kV], members, h, s,
                               std::span<Real>(within));
    for (std::size_t i = 0; i < members.size(); ++i) probs[members[i]] = class_probs[c] * within[i];
  }
  return probs;
}

// Dispatch on the model's output layer.
template <class Real>
inline accum_t<Real> output_loss(const Model<Real>& model, const CellState<Real>& state, TokenId target,
                          Gradients<Real>* grads = nullptr, StateGrad<Real>* out = nullptr) {
  const std::span<const Real> h(state.h), s(state.s);
  if (model.shape.softmax == SoftmaxKind::kHierarchical)
    return hsm_loss(model.params, model.shape, *model.layout, h, s, target, grads, out);
  return full_softmax_loss(model.params, model.shape, h, s, target, grads, out);
}

template <class Real>
inline Vector<Real> output_distribution(const Model<Real>& model, const CellState<Real>& state) {
  const std::span<const Real> h(state.h), s(state.s);
  if (model.shape.softmax == SoftmaxKind::kHierarchical)
    return hsm_full_distribution(model.params, model.shape, *model.layout, h, s);
  return full_distribution(model.params, model.shape, h, s);
}

}  // namespace scrn

#endif  // SCRN_OUTPUT_HPP_
