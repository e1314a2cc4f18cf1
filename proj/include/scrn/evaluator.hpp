#ifndef SCRN_EVALUATOR_HPP_
#define SCRN_EVALUATOR_HPP_

#include <cmath>
#include <cstdio>
#include <span>
#include <stdexcept>
#include <string>

#include "scrn/cells.hpp"
#include "scrn/model.hpp"
#include "scrn/output.hpp"

namespace scrn {

struct EvalReport {
  std::size_t tokens = 0;
  double total_nll = 0.0;  // natural log
  double perplexity = 0.0;
  std::string arch;
  std::string softmax;

  std::string line() const {
    char buf[160];
    std::snprintf(buf, sizeof buf, "ppl=%.6f tokens=%zu nll=%.6f", perplexity, tokens, total_nll);
    return buf;
  }

  std::string json() const {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "{\"ppl\":%.17g,\"tokens\":%zu,\"nll\":%.17g,\"arch\":\"%s\",\"softmax\":\"%s\"}",
                  perplexity, tokens, total_nll, arch.c_str(), softmax.c_str());
    return buf;
  }
};

// Single-stream scorer. Each token is scored from the state left by the
// previous one (the first from the zero state), so feeding a sequence in
// pieces gives the same result as feeding it at once.
template <class Real>
class StreamingEvaluator {
 public:
  explicit StreamingEvaluator(const Model<Real>& model, bool enumerate = false)
      : model_(model), enumerate_(enumerate), state_(CellState<Real>::zeros(model.shape)) {}

  void feed(std::span<const TokenId> ids) {
    for (TokenId id : ids) {
      double nll;
      if (enumerate_) {
        const auto probs = output_distribution(model_, state_);
        nll = -std::log(static_cast<double>(probs.at(id)));
      } else {
        nll = output_loss(model_, state_, id);
      }
      if (!std::isfinite(nll)) throw std::runtime_error("non-finite loss during evaluation");
      total_ += nll;
      ++count_;
      step(model_.params, model_.shape, state_, id, scratch_);
      std::swap(state_, scratch_.state);
    }
  }

  EvalReport report() const {
    if (count_ == 0) throw std::invalid_argument("perplexity of an empty sequence");
    EvalReport r;
    r.tokens = count_;
    r.total_nll = total_;
    r.perplexity = std::exp(total_ / static_cast<double>(count_));
    r.arch = std::string(to_string(model_.shape.arch));
    r.softmax = std::string(to_string(model_.shape.softmax));
    return r;
  }

 private:
  const Model<Real>& model_;
  bool enumerate_;
  CellState<Real> state_;
  TapeEntry<Real> scratch_;
  double total_ = 0.0;
  std::size_t count_ = 0;
};

// exp of the mean negative log-likelihood over `ids`. With `enumerate`, each
// probability is read off the explicit d-way distribution instead of the
// factored loss.
template <class Real>
inline EvalReport perplexity(const Model<Real>& model, std::span<const TokenId> ids,
                             bool enumerate = false) {
  if (ids.empty()) throw std::invalid_argument("perplexity of an empty sequence");
  StreamingEvaluator<Real> ev(model, enumerate);
  ev.feed(ids);
  return ev.report();
}

}  // namespace scrn

#endif  // SCRN_EVALUATOR_HPP_
