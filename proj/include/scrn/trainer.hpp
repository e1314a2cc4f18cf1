#ifndef SCRN_TRAINER_HPP_
#define SCRN_TRAINER_HPP_

// Truncated-BPTT SGD over S parallel streams.
//
// All streams advance in lockstep. Every `update_interval` steps each stream
// back-propagates the losses of its newest update_interval steps through up
// to `bptt_span` cached steps, the per-stream gradients are summed (or
// averaged, see average_streams), renormalized to at most `clip_norm`, and
// applied with plain SGD. Stream state is carried across updates and reset
// to zero at every epoch start.

#include <atomic>
#include <barrier>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "scrn/cells.hpp"
#include "scrn/corpus.hpp"
#include "scrn/gradients.hpp"
#include "scrn/model.hpp"
#include "scrn/output.hpp"

namespace scrn {

enum class Truncation : std::uint32_t {
  kSliding = 0,  // backward always spans the last bptt_span steps
  kTiled = 1,    // backward stops at the previous update
};

enum class Precision : std::uint32_t { kFloat32 = 4, kFloat64 = 8 };

struct TrainConfig {
  Architecture arch = Architecture::kScrn;
  std::size_t hidden = 100;
  std::size_t context = 40;
  bool hsm = true;
  std::size_t classes = 0;  // 0: ceil(sqrt(d))
  double alpha = 0.95;
  std::size_t bptt_span = 0;  // 0: 10 for SRN, 50 otherwise
  std::size_t update_interval = 5;
  std::size_t num_streams = 32;
  double learning_rate = 0.05;
  double lr_decay_divisor = 1.5;
  double clip_norm = 50.0;
  std::size_t max_epochs = 10;
  std::uint64_t seed = 1;
  Precision precision = Precision::kFloat32;
  Truncation truncation = Truncation::kSliding;
  std::size_t workers = 1;
  double init_half_width = 0.1;
  double improvement_threshold = 0.001;  // relative
  bool average_streams = false;  // true: divide the summed gradient by num_streams

  std::size_t effective_bptt() const {
    if (bptt_span != 0) return bptt_span;
    return arch == Architecture::kSrn ? 10 : 50;
  }

  std::size_t effective_context() const {
    return (arch == Architecture::kSrn || arch == Architecture::kLstm) ? 0 : context;
  }

  std::size_t effective_classes(std::size_t vocab) const {
    return classes != 0 ? classes : default_num_classes(vocab);
  }

  ModelShape shape_for(std::size_t vocab) const {
    ModelShape s;
    s.arch = arch;
    s.softmax = hsm ? SoftmaxKind::kHierarchical : SoftmaxKind::kFull;
    s.vocab = vocab;
    s.hidden = hidden;
    s.context = effective_context();
    s.classes = hsm ? effective_classes(vocab) : 0;
    s.alpha = alpha;
    return s;
  }

  void validate() const {
    if (update_interval < 1) throw std::invalid_argument("update_interval must be >= 1");
    if (effective_bptt() < update_interval)
      throw std::invalid_argument("bptt_span must be >= update_interval");
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning_rate must be >= 0");
    if (!(lr_decay_divisor >= 1.0)) throw std::invalid_argument("lr_decay_divisor must be >= 1");
    if (!(clip_norm > 0.0)) throw std::invalid_argument("clip_norm must be > 0");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0,1)");
    if (num_streams < 1) throw std::invalid_argument("num_streams must be >= 1");
    if (workers < 1) throw std::invalid_argument("workers must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Learning-rate schedule

struct ScheduleState {
  double current_lr = 0.0;
  double best_validation_perplexity = std::numeric_limits<double>::infinity();
  bool decay_started = false;
  std::size_t epochs_without_improvement = 0;
  std::size_t epochs_completed = 0;

  static ScheduleState initial(const TrainConfig& cfg) {
    ScheduleState s;
    s.current_lr = cfg.learning_rate;
    return s;
  }

  friend bool operator==(const ScheduleState&, const ScheduleState&) = default;
};

// Called once per finished epoch with its validation perplexity. An epoch
// counts as an improvement only if it beats the best so far by more than
// improvement_threshold (relative); otherwise the rate is divided by
// lr_decay_divisor. Training stops after two non-improving epochs in a row
// or when max_epochs is reached.
inline std::pair<ScheduleState, bool> schedule_step(ScheduleState st, double validation_perplexity,
                                                    const TrainConfig& cfg) {
  if (!std::isfinite(validation_perplexity) || validation_perplexity <= 0.0)
    throw std::invalid_argument("validation perplexity must be finite and positive");
  ++st.epochs_completed;
  const bool improved = validation_perplexity <
                        st.best_validation_perplexity * (1.0 - cfg.improvement_threshold);
  if (improved) {
    st.best_validation_perplexity = validation_perplexity;
    st.epochs_without_improvement = 0;
  } else {
    st.current_lr /= cfg.lr_decay_divisor;
    st.decay_started = true;
    ++st.epochs_without_improvement;
  }
  const bool stop = (st.decay_started && st.epochs_without_improvement >= 2) ||
                    st.epochs_completed >= cfg.max_epochs;
  return {st, stop};
}

// ---------------------------------------------------------------------------

class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, std::size_t stream, std::size_t position)
      : std::runtime_error(what), stream_(stream), position_(position) {}
  std::size_t stream() const { return stream_; }
  std::size_t position() const { return position_; }

 private:
  std::size_t stream_;
  std::size_t position_;
};

struct EpochStats {
  double mean_nll = 0.0;
  std::size_t tokens = 0;
  std::size_t updates = 0;
  double seconds = 0.0;
  double tokens_per_sec = 0.0;
  double max_grad_norm = 0.0;
};

template <class Real>
class Trainer {
 public:
  // Receives the reduced, renormalized gradient right before each SGD step.
  using GradientObserver = std::function<void(const Gradients<Real>&)>;

  Trainer(Model<Real>& model, const TrainConfig& cfg) : model_(model), cfg_(cfg) {
    cfg_.validate();
    model_.check_layout();
  }

  void set_gradient_observer(GradientObserver obs) { observer_ = std::move(obs); }

  // One pass over `streams` at learning rate schedule.current_lr. Position t
  // of a stream is fed as input and position t+1 is its target, so a stream
  // of length T yields T-1 scored predictions.
  EpochStats train_epoch(const StreamSet& streams, const ScheduleState& schedule) {
    const auto started = std::chrono::steady_clock::now();
    const std::size_t num_streams = streams.num_streams();
    const std::size_t steps = streams.length() > 0 ? streams.length() - 1 : 0;
    const std::size_t workers = std::min(cfg_.workers, num_streams);
    const Real lr = static_cast<Real>(schedule.current_lr);

    for (std::size_t s = 0; s < num_streams; ++s) {
      for (TokenId id : streams.stream(s))
        if (id >= model_.shape.vocab) throw std::out_of_range("stream token outside vocabulary");
    }

    // Per-worker buffers.
    std::vector<WorkerState> ws(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      ws[w].begin = num_streams * w / workers;
      ws[w].end = num_streams * (w + 1) / workers;
      ws[w].grads = Gradients<Real>(model_.shape);
      for (std::size_t s = ws[w].begin; s < ws[w].end; ++s) {
        StreamState st;
        st.tape = StepTape<Real>(model_.shape, cfg_.effective_bptt());
        st.pending.assign(cfg_.update_interval, StateGrad<Real>::zeros(model_.shape));
        ws[w].streams.push_back(std::move(st));
      }
    }

    EpochStats stats;
    const std::size_t u = cfg_.update_interval;
    const std::size_t cycles = (steps + u - 1) / u;

    auto run_cycle = [&](WorkerState& w, std::size_t cycle) {
      const std::size_t t0 = cycle * u;
      const std::size_t t1 = std::min(steps, t0 + u);
      w.grads.clear();
      for (std::size_t s = w.begin; s < w.end; ++s) {
        StreamState& st = w.streams[s - w.begin];
        const auto ids = streams.stream(s);
        for (std::size_t t = t0; t < t1; ++t) {
          TapeEntry<Real>& e = st.tape.push();
          step(model_.params, model_.shape, st.tape.prev_of(st.tape.size() - 1), ids[t], e);
          StateGrad<Real>& g = st.pending[t - t0];
          g.clear();
          const double nll = output_loss(model_, e.state, ids[t + 1], &w.grads, &g);
          if (!std::isfinite(nll)) {
            std::ostringstream msg;
            msg << "non-finite loss at stream " << s << ", position " << (t + 1);
            throw NumericError(msg.str(), s, t + 1);
          }
          w.loss += nll;
        }
        backward_window(model_.params, model_.shape, st.tape,
                        std::span<const StateGrad<Real>>(st.pending.data(), t1 - t0), w.grads);
        if (cfg_.truncation == Truncation::kTiled) st.tape.truncate();
      }
    };

    auto apply_update = [&] {
      Gradients<Real>& total = ws[0].grads;
      for (std::size_t w = 1; w < workers; ++w) total.accumulate(ws[w].grads);
      if (cfg_.average_streams) total.scale(static_cast<Real>(1.0 / static_cast<double>(num_streams)));
      const double norm = renormalize_gradients(total, cfg_.clip_norm);
      stats.max_grad_norm = std::max(stats.max_grad_norm, norm);
      if (observer_) observer_(total);
      if (lr != Real(0)) total.apply_to(model_.params, -lr);
      ++stats.updates;
    };

    if (workers == 1) {
      for (std::size_t c = 0; c < cycles; ++c) {
        run_cycle(ws[0], c);
        apply_update();
      }
    } else {
      run_parallel(ws, cycles, run_cycle, apply_update);
    }

    double loss = 0.0;
    for (const auto& w : ws) loss += w.loss;
    stats.tokens = steps * num_streams;
    stats.mean_nll = stats.tokens ? loss / static_cast<double>(stats.tokens) : 0.0;
    stats.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    stats.tokens_per_sec = stats.seconds > 0 ? static_cast<double>(stats.tokens) / stats.seconds : 0.0;
    return stats;
  }

 private:
  struct StreamState {
    StepTape<Real> tape;
    std::vector<StateGrad<Real>> pending;
  };
  struct WorkerState {
    std::size_t begin = 0, end = 0;
    std::vector<StreamState> streams;
    Gradients<Real> grads;
    double loss = 0.0;
  };

  // Workers own disjoint stream ranges and private gradient buffers; the
  // calling thread (worker 0) reduces them in worker order and applies the
  // update between two barriers, so parameters are never written while
  // another worker reads them.
  template <class Cycle, class Update>
  void run_parallel(std::vector<WorkerState>& ws, std::size_t cycles, Cycle& run_cycle,
                    Update& apply_update) {
    const std::size_t workers = ws.size();
    std::barrier sync(static_cast<std::ptrdiff_t>(workers));
    std::atomic<bool> failed{false};
    std::vector<std::exception_ptr> errors(workers);

    auto body = [&](std::size_t w) {
      for (std::size_t c = 0; c < cycles; ++c) {
        if (!failed.load()) {
          try {
            run_cycle(ws[w], c);
          } catch (...) {
            errors[w] = std::current_exception();
            failed.store(true);
          }
        }
        sync.arrive_and_wait();
        if (w == 0 && !failed.load()) {
          try {
            apply_update();
          } catch (...) {
            errors[0] = std::current_exception();
            failed.store(true);
          }
        }
        sync.arrive_and_wait();
        if (failed.load()) break;
      }
    };

    {
      std::vector<std::jthread> threads;
      for (std::size_t w = 1; w < workers; ++w) threads.emplace_back(body, w);
      body(0);
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  Model<Real>& model_;
  TrainConfig cfg_;
  GradientObserver observer_;
};

}  // namespace scrn

#endif  // SCRN_TRAINER_HPP_
