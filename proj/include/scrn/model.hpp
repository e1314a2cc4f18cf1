#ifndef SCRN_MODEL_HPP_
#define SCRN_MODEL_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "scrn/corpus.hpp"
#include "scrn/numerics.hpp"

namespace scrn {

enum class Architecture : std::uint32_t { kSrn = 0, kScrn = 1, kScrnAdaptive = 2, kLstm = 3 };
enum class SoftmaxKind : std::uint32_t { kFull = 0, kHierarchical = 1 };

inline std::string_view to_string(Architecture a) {
  switch (a) {
    case Architecture::kSrn: return "srn";
    case Architecture::kScrn: return "scrn";
    case Architecture::kScrnAdaptive: return "scrn-adaptive";
    case Architecture::kLstm: return "lstm";
  }
  return "?";
}

inline std::string_view to_string(SoftmaxKind k) {
  return k == SoftmaxKind::kFull ? "full" : "hsm";
}

inline Architecture parse_architecture(std::string_view s) {
  if (s == "srn") return Architecture::kSrn;
  if (s == "scrn") return Architecture::kScrn;
  if (s == "scrn-adaptive") return Architecture::kScrnAdaptive;
  if (s == "lstm") return Architecture::kLstm;
  throw std::invalid_argument("unknown architecture: " + std::string(s));
}

inline SoftmaxKind parse_softmax(std::string_view s) {
  if (s == "full") return SoftmaxKind::kFull;
  if (s == "hsm") return SoftmaxKind::kHierarchical;
  throw std::invalid_argument("unknown softmax kind: " + std::string(s));
}

struct ModelShape {
  Architecture arch = Architecture::kScrn;
  SoftmaxKind softmax = SoftmaxKind::kFull;
  std::size_t vocab = 0;    // d
  std::size_t hidden = 0;   // m
  std::size_t context = 0;  // p (0 for SRN and LSTM)
  std::size_t classes = 0;  // K (hierarchical softmax only)
  double alpha = 0.95;      // fixed context decay

  bool has_context() const { return context > 0; }
  bool adaptive() const { return arch == Architecture::kScrnAdaptive; }
  bool lstm() const { return arch == Architecture::kLstm; }

  void validate() const {
    if (vocab == 0) throw std::invalid_argument("vocabulary size must be > 0");
    if ((arch == Architecture::kSrn || arch == Architecture::kLstm) && context != 0)
      throw std::invalid_argument(std::string(to_string(arch)) + " has no context units");
    if (arch == Architecture::kLstm && hidden == 0)
      throw std::invalid_argument("lstm needs hidden units");
    if (hidden + context == 0) throw std::invalid_argument("model has no recurrent units");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0,1)");
    if (softmax == SoftmaxKind::kHierarchical && (classes < 1 || classes > vocab))
      throw std::invalid_argument("number of classes must lie in [1, d]");
  }
};

// Parameter blocks. Token-indexed blocks (A, B, U, V, Wx) store one row per
// vocabulary entry, so a one-hot input selects a row.
enum class Block : std::size_t {
  kA,       // d x m   token embedding
  kR,       // m x m   recurrent
  kB,       // d x p   context embedding
  kP,       // m x p   context -> hidden
  kU,       // d x m   hidden -> output
  kV,       // d x p   context -> output
  kBeta,    // 1 x p   adaptive decay logits
  kWx,      // d x 4m  LSTM input weights  (gates i, f, o, g)
  kWh,      // 4m x m  LSTM recurrent weights
  kBias,    // 1 x 4m  LSTM biases
  kClassU,  // K x m   class logits from h
  kClassV,  // K x p   class logits from s
};
inline constexpr std::size_t kNumBlocks = 12;

inline std::string_view block_name(Block b) {
  static constexpr std::array<std::string_view, kNumBlocks> names = {
      "A", "R", "B", "P", "U", "V", "beta", "Wx", "Wh", "bias", "Cu", "Cv"};
  return names[static_cast<std::size_t>(b)];
}

inline bool row_sparse(Block b) {
  return b == Block::kA || b == Block::kB || b == Block::kU || b == Block::kV || b == Block::kWx;
}

// Blocks that exist for an architecture/output combination, in canonical
// order (this is also the checkpoint order).
inline std::vector<Block> active_blocks(const ModelShape& s) {
  std::vector<Block> out;
  if (s.lstm()) {
    out = {Block::kWx, Block::kWh, Block::kBias, Block::kU};
  } else {
    out = {Block::kA, Block::kR};
    if (s.has_context()) {
      out.insert(out.end(), {Block::kB, Block::kP});
    }
    out.push_back(Block::kU);
    if (s.has_context()) out.push_back(Block::kV);
    if (s.adaptive() && s.has_context()) out.push_back(Block::kBeta);
  }
  if (s.softmax == SoftmaxKind::kHierarchical) {
    out.push_back(Block::kClassU);
    if (s.has_context()) out.push_back(Block::kClassV);
  }
  return out;
}

inline std::pair<std::size_t, std::size_t> block_shape(const ModelShape& s, Block b) {
  const std::size_t d = s.vocab, m = s.hidden, p = s.context, k = s.classes;
  switch (b) {
    case Block::kA: return {d, m};
    case Block::kR: return {m, m};
    case Block::kB: return {d, p};
    case Block::kP: return {m, p};
    case Block::kU: return {d, m};
    case Block::kV: return {d, p};
    case Block::kBeta: return {1, p};
    case Block::kWx: return {d, 4 * m};
    case Block::kWh: return {4 * m, m};
    case Block::kBias: return {1, 4 * m};
    case Block::kClassU: return {k, m};
    case Block::kClassV: return {k, p};
  }
  return {0, 0};
}

// All weights of one model. Inactive blocks are 0x0. Gradients use the same
// type.
template <class Real>
struct Params {
  std::array<Matrix<Real>, kNumBlocks> blocks;

  Matrix<Real>& operator[](Block b) { return blocks[static_cast<std::size_t>(b)]; }
  const Matrix<Real>& operator[](Block b) const { return blocks[static_cast<std::size_t>(b)]; }

  static Params zeros(const ModelShape& s) {
    Params p;
    for (Block b : active_blocks(s)) {
      auto [r, c] = block_shape(s, b);
      p[b] = Matrix<Real>(r, c);
    }
    return p;
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& m : blocks) n += m.size();
    return n;
  }

  template <class Other>
  Params<Other> cast() const {
    Params<Other> out;
    for (std::size_t i = 0; i < kNumBlocks; ++i) out.blocks[i] = blocks[i].template cast<Other>();
    return out;
  }

  friend bool operator==(const Params&, const Params&) = default;
};

inline std::size_t parameter_count(const ModelShape& s) {
  std::size_t n = 0;
  for (Block b : active_blocks(s)) {
    auto [r, c] = block_shape(s, b);
    n += r * c;
  }
  return n;
}

// Decays sigma(beta_i) evenly spaced over [lo, hi].
template <class Real>
inline Matrix<Real> spaced_decay_logits(std::size_t p, double lo = 0.5, double hi = 0.99) {
  Matrix<Real> beta(1, p);
  for (std::size_t i = 0; i < p; ++i) {
    const double q = p == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(p - 1);
    beta(0, i) = static_cast<Real>(std::log(q / (1.0 - q)));
  }
  return beta;
}

// Weights uniform in [-half_width, half_width]; LSTM biases zero except the
// forget gate (1.0); adaptive decays spaced over [0.5, 0.99].
template <class Real>
inline Params<Real> init_params(const ModelShape& s, std::uint64_t seed, double half_width = 0.1) {
  s.validate();
  Params<Real> p;
  for (Block b : active_blocks(s)) {
    auto [r, c] = block_shape(s, b);
    if (b == Block::kBeta) {
      p[b] = spaced_decay_logits<Real>(s.context);
    } else if (b == Block::kBias) {
      p[b] = Matrix<Real>(r, c);
      for (std::size_t i = s.hidden; i < 2 * s.hidden; ++i) p[b](0, i) = Real(1);
    } else if (r * c == 0) {
      p[b] = Matrix<Real>(r, c);
    } else {
      p[b] = seeded_uniform<Real>(r, c, half_width, mix_seed(seed, static_cast<std::size_t>(b)));
    }
  }
  return p;
}

template <class Real>
struct Model {
  ModelShape shape;
  Params<Real> params;
  std::optional<ClassLayout> layout;  // set iff hierarchical softmax

  static Model create(const ModelShape& shape, std::uint64_t seed,
                      std::optional<ClassLayout> layout = std::nullopt, double half_width = 0.1) {
    Model m{shape, init_params<Real>(shape, seed, half_width), std::move(layout)};
    m.check_layout();
    return m;
  }

  void check_layout() const {
    if (shape.softmax == SoftmaxKind::kHierarchical) {
      if (!layout || layout->num_classes() != shape.classes || layout->vocab_size() != shape.vocab)
        throw std::invalid_argument("class layout does not match model shape");
    }
  }
};

}  // namespace scrn

#endif  // SCRN_MODEL_HPP_
