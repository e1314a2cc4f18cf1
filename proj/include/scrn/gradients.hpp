#ifndef SCRN_GRADIENTS_HPP_
#define SCRN_GRADIENTS_HPP_

#include <cmath>
#include <cstdint>
#include <vector>

#include "scrn/model.hpp"

namespace scrn {

// Gradient accumulator with the same block layout as Params. Token-indexed
// blocks remember which rows were written so clearing, norms and SGD steps
// only visit those rows; the dense view is always exact.
template <class Real>
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ModelShape& shape) : grads_(Params<Real>::zeros(shape)) {
    for (Block b : active_blocks(shape)) {
      active_.push_back(b);
      if (row_sparse(b)) {
        auto& t = tracks_[static_cast<std::size_t>(b)];
        t.sparse = true;
        t.flags.assign(grads_[b].rows(), 0);
      }
    }
  }

  const Params<Real>& params() const { return grads_; }
  const std::vector<Block>& blocks() const { return active_; }

  // Dense block access; only valid for blocks that are not row-sparse.
  Matrix<Real>& dense(Block b) { return grads_[b]; }
  const Matrix<Real>& operator[](Block b) const { return grads_[b]; }

  std::span<Real> row(Block b, std::size_t r) {
    auto& t = tracks_[static_cast<std::size_t>(b)];
    if (t.sparse && !t.flags[r]) {
      t.flags[r] = 1;
      t.rows.push_back(static_cast<std::uint32_t>(r));
    }
    return grads_[b].row(r);
  }

  template <class Fn>
  void for_each_live_row(Block b, Fn&& fn) const {
    const auto& t = tracks_[static_cast<std::size_t>(b)];
    const auto& m = grads_[b];
    if (t.sparse) {
      for (auto r : t.rows) fn(r, m.row(r));
    } else {
      for (std::size_t r = 0; r < m.rows(); ++r) fn(r, m.row(r));
    }
  }

  void clear() {
    for (Block b : active_) {
      auto& t = tracks_[static_cast<std::size_t>(b)];
      auto& m = grads_[b];
      if (t.sparse) {
        for (auto r : t.rows) {
          auto row = m.row(r);
          std::fill(row.begin(), row.end(), Real(0));
          t.flags[r] = 0;
        }
        t.rows.clear();
      } else {
        m.fill(Real(0));
      }
    }
  }

  double squared_norm() const {
    double s = 0.0;
    for (Block b : active_)
      for_each_live_row(b, [&](std::size_t, std::span<const Real> row) { s += scrn::squared_norm(row); });
    return s;
  }

  double norm() const { return std::sqrt(squared_norm()); }

  void scale(Real factor) {
    for (Block b : active_) {
      for_each_live_row(b, [&](std::size_t r, std::span<const Real>) {
        for (auto& x : grads_[b].row(r)) x *= factor;
      });
    }
  }

  // this += other
  void accumulate(const Gradients& other) {
    for (Block b : active_) {
      other.for_each_live_row(b, [&](std::size_t r, std::span<const Real> src) {
        auto dst = row(b, r);
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
      });
    }
  }

  // params += step * this
  void apply_to(Params<Real>& params, Real step) const {
    for (Block b : active_) {
      for_each_live_row(b, [&](std::size_t r, std::span<const Real> src) {
        axpy(step, src, params[b].row(r));
      });
    }
  }

 private:
  struct Track {
    bool sparse = false;
    std::vector<std::uint8_t> flags;
    std::vector<std::uint32_t> rows;
  };

  Params<Real> grads_;
  std::array<Track, kNumBlocks> tracks_{};
  std::vector<Block> active_;
};

// Global L2 renormalization: if the norm exceeds clip_norm, every block is
// scaled by clip_norm / norm. Returns the norm before scaling.
template <class Real>
inline double renormalize_gradients(Gradients<Real>& grads, double clip_norm) {
  if (!(clip_norm > 0.0)) throw std::invalid_argument("clip_norm must be > 0");
  const double g = grads.norm();
  if (g > clip_norm) grads.scale(static_cast<Real>(clip_norm / g));
  return g;
}

}  // namespace scrn

#endif  // SCRN_GRADIENTS_HPP_
