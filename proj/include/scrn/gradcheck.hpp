#ifndef SCRN_GRADCHECK_HPP_
#define SCRN_GRADCHECK_HPP_

// Central finite differences against the analytic gradients of a window
// loss, block by block. Analytic gradients come from the double-precision
// model; the finite differences are evaluated on an extended-precision copy
// so that rounding in the loss (about |L| * 1e-16 / eps) stays far below
// the tolerance even for very small gradient entries.

#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "scrn/cells.hpp"
#include "scrn/corpus.hpp"
#include "scrn/gradients.hpp"
#include "scrn/model.hpp"
#include "scrn/output.hpp"

namespace scrn {

inline double relative_error(double analytic, double numeric) {
  return std::fabs(analytic - numeric) /
         std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
}

// (f(theta + eps e_i) - f(theta - eps e_i)) / (2 eps) for every coordinate.
// theta is restored exactly after each probe.
inline std::vector<double> numeric_gradient(const std::function<double()>& loss,
                                            std::span<double> theta, double epsilon) {
  if (!(epsilon >= 1e-6 && epsilon <= 1e-3))
    throw std::invalid_argument("finite-difference epsilon must lie in [1e-6, 1e-3]");
  std::vector<double> g(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double saved = theta[i];
    theta[i] = saved + epsilon;
    const double up = loss();
    theta[i] = saved - epsilon;
    const double down = loss();
    theta[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw std::runtime_error("non-finite loss during finite differencing");
    g[i] = (up - down) / (2.0 * epsilon);
  }
  return g;
}

inline std::vector<double> numeric_gradient(const std::function<double(std::span<const double>)>& loss,
                                            std::vector<double> theta, double epsilon) {
  std::span<double> view(theta);
  return numeric_gradient([&] { return loss(view); }, view, epsilon);
}

struct BlockReport {
  std::string name;
  std::size_t size = 0;
  double max_rel_error = 0.0;
  double mean_rel_error = 0.0;
  std::size_t worst_index = 0;
  bool pass = true;
};

struct GradReport {
  std::string arch;
  std::string softmax;
  double epsilon = 0.0;
  double tolerance = 0.0;
  std::vector<BlockReport> blocks;

  bool pass() const {
    for (const auto& b : blocks)
      if (!b.pass) return false;
    return true;
  }
  double max_rel_error() const {
    double m = 0.0;
    for (const auto& b : blocks) m = std::max(m, b.max_rel_error);
    return m;
  }
  std::vector<std::string> failing_blocks() const {
    std::vector<std::string> out;
    for (const auto& b : blocks)
      if (!b.pass) out.push_back(b.name);
    return out;
  }

  std::string to_string() const {
    std::string out = "gradcheck arch=" + arch + " softmax=" + softmax + "\n";
    char buf[200];
    for (const auto& b : blocks) {
      std::snprintf(buf, sizeof buf, "  %-5s n=%-4zu max_rel=%.3e mean_rel=%.3e worst=%zu %s\n",
                    b.name.c_str(), b.size, b.max_rel_error, b.mean_rel_error, b.worst_index,
                    b.pass ? "ok" : "FAIL");
      out += buf;
    }
    std::snprintf(buf, sizeof buf, "result: %s (max_rel=%.3e, tol=%.1e, eps=%.1e)\n",
                  pass() ? "PASS" : "FAIL", max_rel_error(), tolerance, epsilon);
    out += buf;
    return out;
  }
};

struct GradCheckDims {
  std::size_t vocab = 13;
  std::size_t hidden = 7;
  std::size_t context = 5;
  std::size_t classes = 4;
  std::size_t window = 30;
};

struct GradCheckOptions {
  double epsilon = 1e-4;
  double tolerance = 1e-5;
  double init_half_width = 0.5;
  std::optional<Block> flip_sign_of;  // fault injection for self-tests
};

// Summed next-token loss over `ids` from the zero state, plus its analytic
// gradient when `grads` is given.
template <class Real>
inline accum_t<Real> window_loss(const Model<Real>& model, std::span<const TokenId> ids,
                                 Gradients<Real>* grads = nullptr) {
  const std::size_t n = ids.size() - 1;
  StepTape<Real> tape(model.shape, n);
  std::vector<StateGrad<Real>> out(grads ? n : 0, StateGrad<Real>::zeros(model.shape));
  accum_t<Real> loss = 0;
  for (std::size_t t = 0; t < n; ++t) {
    auto& e = tape.push();
    step(model.params, model.shape, tape.prev_of(t), ids[t], e);
    loss += output_loss(model, e.state, ids[t + 1], grads, grads ? &out[t] : nullptr);
  }
  if (grads) backward_window(model.params, model.shape, tape, std::span<const StateGrad<Real>>(out), *grads);
  return loss;
}

// Compares analytic and numeric gradients on every parameter block of a
// small random model.
inline GradReport check_model(const Model<double>& model, std::span<const TokenId> ids,
                              const GradCheckOptions& opt = {}) {
  Gradients<double> grads(model.shape);
  window_loss(model, ids, &grads);
  Params<double> analytic = grads.params();
  if (opt.flip_sign_of)
    for (auto& x : analytic[*opt.flip_sign_of].flat()) x = -x;

  GradReport rep;
  rep.arch = std::string(to_string(model.shape.arch));
  rep.softmax = std::string(to_string(model.shape.softmax));
  rep.epsilon = opt.epsilon;
  rep.tolerance = opt.tolerance;
  if (!(opt.epsilon >= 1e-6 && opt.epsilon <= 1e-3))
    throw std::invalid_argument("finite-difference epsilon must lie in [1e-6, 1e-3]");
  Model<long double> wide{model.shape, model.params.cast<long double>(), model.layout};
  for (Block b : active_blocks(model.shape)) {
    const auto theta = model.params[b].flat();
    if (theta.empty()) continue;
    auto probe = wide.params[b].flat();
    std::vector<double> numeric(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const long double saved = probe[i];
      probe[i] = saved + opt.epsilon;
      const long double up = window_loss(wide, ids);
      probe[i] = saved - opt.epsilon;
      const long double down = window_loss(wide, ids);
      probe[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw std::runtime_error("non-finite loss during finite differencing");
      numeric[i] = static_cast<double>((up - down) / (2.0L * opt.epsilon));
    }
    BlockReport br;
    br.name = std::string(block_name(b));
    br.size = theta.size();
    double sum = 0.0;
    const auto a = analytic[b].flat();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double e = relative_error(a[i], numeric[i]);
      sum += e;
      if (e > br.max_rel_error) {
        br.max_rel_error = e;
        br.worst_index = i;
      }
    }
    br.mean_rel_error = sum / static_cast<double>(theta.size());
    br.pass = br.max_rel_error <= opt.tolerance;
    rep.blocks.push_back(br);
  }
  return rep;
}

// Random tiny model and token window for the given architecture/output.
inline GradReport check_all(Architecture arch, SoftmaxKind softmax, std::uint64_t seed,
                            const GradCheckDims& dims = {}, const GradCheckOptions& opt = {}) {
  if (dims.vocab > 20 || dims.hidden > 8 || dims.context > 6 || dims.window > 30)
    throw std::invalid_argument("gradcheck dimensions too large (d<=20, m<=8, p<=6, window<=30)");
  ModelShape shape;
  shape.arch = arch;
  shape.softmax = softmax;
  shape.vocab = dims.vocab;
  shape.hidden = dims.hidden;
  shape.context = (arch == Architecture::kScrn || arch == Architecture::kScrnAdaptive) ? dims.context : 0;
  shape.classes = softmax == SoftmaxKind::kHierarchical ? dims.classes : 0;

  std::mt19937_64 rng(mix_seed(seed, 1000));
  std::optional<ClassLayout> layout;
  if (softmax == SoftmaxKind::kHierarchical) {
    std::vector<std::uint64_t> counts(dims.vocab);
    std::uniform_int_distribution<std::uint64_t> cd(1, 50);
    for (auto& c : counts) c = cd(rng);
    layout = build_frequency_classes(std::span<const std::uint64_t>(counts), dims.classes);
  }
  auto model = Model<double>::create(shape, seed, layout, opt.init_half_width);
  if (shape.adaptive()) {
    std::uniform_real_distribution<double> bd(-2.0, 2.0);
    for (auto& b : model.params[Block::kBeta].flat()) b = bd(rng);
  }
  std::vector<TokenId> ids(dims.window + 1);
  std::uniform_int_distribution<TokenId> td(0, static_cast<TokenId>(dims.vocab - 1));
  for (auto& t : ids) t = td(rng);
  return check_model(model, ids, opt);
}

}  // namespace scrn

#endif  // SCRN_GRADCHECK_HPP_
