#ifndef SCRN_CHECKPOINT_HPP_
#define SCRN_CHECKPOINT_HPP_

// Binary checkpoint, little-endian:
//
//   "SCRN"  u32 version  u32 arch  u32 softmax  u32 real_bytes
//   u64 d  u64 m  u64 p  u64 K  u64 seed
//   u32 n  f64 x n hyperparameters (see kHyperNames)
//   u64 vocabulary hash (FNV-1a of the vocabulary file)
//   u32 blocks, then per block: u32 id, u64 rows, u64 cols, rows*cols reals
//   f64 current_lr  f64 best_ppl  u8 decay_started
//   u64 epochs_without_improvement  u64 epochs_completed

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "scrn/corpus.hpp"
#include "scrn/model.hpp"
#include "scrn/trainer.hpp"

namespace scrn {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::array<char, 4> kCheckpointMagic = {'S', 'C', 'R', 'N'};

inline constexpr std::array<const char*, 14> kHyperNames = {
    "alpha",           "learning_rate",         "lr_decay_divisor", "clip_norm",
    "bptt_span",       "update_interval",       "num_streams",      "max_epochs",
    "init_half_width", "improvement_threshold", "truncation",       "workers",
    "classes",         "average_streams"};

enum class CheckpointErrc { kIo, kFormat, kVersion, kTruncated, kVocabMismatch };

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CheckpointErrc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  CheckpointErrc code() const { return code_; }

 private:
  CheckpointErrc code_;
};

using AnyParams = std::variant<Params<float>, Params<double>>;

struct Checkpoint {
  TrainConfig config;
  ModelShape shape;
  std::uint64_t vocab_hash = 0;
  AnyParams params;
  ScheduleState schedule;
};

namespace detail {

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  template <class U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u8(std::uint8_t v) { uint(v); }
  void u32(std::uint32_t v) { uint(v); }
  void u64(std::uint64_t v) { uint(v); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  const std::vector<char>& data() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<char> data) : buf_(std::move(data)) {}

  void bytes(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  template <class U>
  U uint() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }
  std::uint8_t u8() { return uint<std::uint8_t>(); }
  std::uint32_t u32() { return uint<std::uint32_t>(); }
  std::uint64_t u64() { return uint<std::uint64_t>(); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  bool at_end() const { return pos_ == buf_.size(); }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw CheckpointError(CheckpointErrc::kTruncated, "checkpoint is truncated");
  }
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

inline std::vector<double> hyper_values(const TrainConfig& c) {
  return {c.alpha,
          c.learning_rate,
          c.lr_decay_divisor,
          c.clip_norm,
          static_cast<double>(c.bptt_span),
          static_cast<double>(c.update_interval),
          static_cast<double>(c.num_streams),
          static_cast<double>(c.max_epochs),
          c.init_half_width,
          c.improvement_threshold,
          static_cast<double>(static_cast<std::uint32_t>(c.truncation)),
          static_cast<double>(c.workers),
          static_cast<double>(c.classes),
          c.average_streams ? 1.0 : 0.0};
}

inline void apply_hyper_values(TrainConfig& c, const std::vector<double>& v) {
  c.alpha = v[0];
  c.learning_rate = v[1];
  c.lr_decay_divisor = v[2];
  c.clip_norm = v[3];
  c.bptt_span = static_cast<std::size_t>(v[4]);
  c.update_interval = static_cast<std::size_t>(v[5]);
  c.num_streams = static_cast<std::size_t>(v[6]);
  c.max_epochs = static_cast<std::size_t>(v[7]);
  c.init_half_width = v[8];
  c.improvement_threshold = v[9];
  c.truncation = static_cast<Truncation>(static_cast<std::uint32_t>(v[10]));
  c.workers = static_cast<std::size_t>(v[11]);
  c.classes = static_cast<std::size_t>(v[12]);
  c.average_streams = v[13] != 0.0;
}

template <class Real>
void write_params(ByteWriter& w, const ModelShape& shape, const Params<Real>& p) {
  const auto blocks = active_blocks(shape);
  w.u32(static_cast<std::uint32_t>(blocks.size()));
  for (Block b : blocks) {
    const auto& m = p[b];
    w.u32(static_cast<std::uint32_t>(b));
    w.u64(m.rows());
    w.u64(m.cols());
    for (Real x : m.flat()) {
      if constexpr (sizeof(Real) == 4) {
        w.f32(x);
      } else {
        w.f64(x);
      }
    }
  }
}

template <class Real>
Params<Real> read_params(ByteReader& r, const ModelShape& shape) {
  const auto expected = active_blocks(shape);
  const std::uint32_t n = r.u32();
  if (n != expected.size()) throw CheckpointError(CheckpointErrc::kFormat, "unexpected block count");
  Params<Real> p;
  for (Block b : expected) {
    if (r.u32() != static_cast<std::uint32_t>(b))
      throw CheckpointError(CheckpointErrc::kFormat, "unexpected parameter block");
    const std::uint64_t rows = r.u64(), cols = r.u64();
    const auto [er, ec] = block_shape(shape, b);
    if (rows != er || cols != ec)
      throw CheckpointError(CheckpointErrc::kFormat,
                            "block " + std::string(block_name(b)) + " has the wrong shape");
    if (r.remaining() < rows * cols * sizeof(Real))
      throw CheckpointError(CheckpointErrc::kTruncated, "checkpoint is truncated");
    Matrix<Real> m(rows, cols);
    for (auto& x : m.flat()) {
      if constexpr (sizeof(Real) == 4) {
        x = r.f32();
      } else {
        x = r.f64();
      }
    }
    p[b] = std::move(m);
  }
  return p;
}

}  // namespace detail

// Stored hyperparameters, in kHyperNames order.
inline std::vector<double> hyperparameter_values(const TrainConfig& cfg) { return detail::hyper_values(cfg); }

template <class Real>
std::vector<char> serialize_checkpoint(const Model<Real>& model, const TrainConfig& cfg,
                                       const ScheduleState& sched, std::uint64_t vocab_hash) {
  detail::ByteWriter w;
  w.bytes(kCheckpointMagic.data(), kCheckpointMagic.size());
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(model.shape.arch));
  w.u32(static_cast<std::uint32_t>(model.shape.softmax));
  w.u32(static_cast<std::uint32_t>(sizeof(Real)));
  w.u64(model.shape.vocab);
  w.u64(model.shape.hidden);
  w.u64(model.shape.context);
  w.u64(model.shape.classes);
  w.u64(cfg.seed);
  TrainConfig stored = cfg;
  stored.alpha = model.shape.alpha;
  const auto hyper = detail::hyper_values(stored);
  w.u32(static_cast<std::uint32_t>(hyper.size()));
  for (double v : hyper) w.f64(v);
  w.u64(vocab_hash);
  detail::write_params(w, model.shape, model.params);
  w.f64(sched.current_lr);
  w.f64(sched.best_validation_perplexity);
  w.u8(sched.decay_started ? 1 : 0);
  w.u64(sched.epochs_without_improvement);
  w.u64(sched.epochs_completed);
  return w.data();
}

template <class Real>
void save_checkpoint(const std::string& path, const Model<Real>& model, const TrainConfig& cfg,
                     const ScheduleState& sched, std::uint64_t vocab_hash) {
  const auto bytes = serialize_checkpoint(model, cfg, sched, vocab_hash);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError(CheckpointErrc::kIo, "cannot write checkpoint: " + path);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw CheckpointError(CheckpointErrc::kIo, "short write: " + path);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw CheckpointError(CheckpointErrc::kIo, "cannot move checkpoint into place: " + path);
}

inline Checkpoint parse_checkpoint(std::vector<char> bytes,
                                   std::optional<std::uint64_t> expected_vocab_hash = std::nullopt) {
  detail::ByteReader r(std::move(bytes));
  std::array<char, 4> magic{};
  try {
    r.bytes(magic.data(), magic.size());
  } catch (const CheckpointError&) {
    throw CheckpointError(CheckpointErrc::kFormat, "not a checkpoint (file too short)");
  }
  if (magic != kCheckpointMagic) throw CheckpointError(CheckpointErrc::kFormat, "not a checkpoint (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointError(CheckpointErrc::kVersion,
                          "unsupported checkpoint version " + std::to_string(version));

  Checkpoint ck;
  const std::uint32_t arch = r.u32(), softmax = r.u32(), real_bytes = r.u32();
  if (arch > 3 || softmax > 1 || (real_bytes != 4 && real_bytes != 8))
    throw CheckpointError(CheckpointErrc::kFormat, "malformed checkpoint header");
  ck.shape.arch = static_cast<Architecture>(arch);
  ck.shape.softmax = static_cast<SoftmaxKind>(softmax);
  ck.shape.vocab = r.u64();
  ck.shape.hidden = r.u64();
  ck.shape.context = r.u64();
  ck.shape.classes = r.u64();
  ck.config.seed = r.u64();
  const std::uint32_t nh = r.u32();
  if (nh != kHyperNames.size()) throw CheckpointError(CheckpointErrc::kFormat, "unexpected hyperparameter count");
  std::vector<double> hyper(nh);
  for (auto& v : hyper) v = r.f64();
  detail::apply_hyper_values(ck.config, hyper);
  ck.shape.alpha = ck.config.alpha;
  ck.config.arch = ck.shape.arch;
  ck.config.hidden = ck.shape.hidden;
  ck.config.context = ck.shape.context;
  ck.config.hsm = ck.shape.softmax == SoftmaxKind::kHierarchical;
  ck.config.precision = real_bytes == 4 ? Precision::kFloat32 : Precision::kFloat64;
  try {
    ck.shape.validate();
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(CheckpointErrc::kFormat, std::string("malformed checkpoint: ") + e.what());
  }

  ck.vocab_hash = r.u64();
  if (expected_vocab_hash && *expected_vocab_hash != ck.vocab_hash)
    throw CheckpointError(CheckpointErrc::kVocabMismatch,
                          "checkpoint was trained with a different vocabulary");

  if (real_bytes == 4) {
    ck.params = detail::read_params<float>(r, ck.shape);
  } else {
    ck.params = detail::read_params<double>(r, ck.shape);
  }
  ck.schedule.current_lr = r.f64();
  ck.schedule.best_validation_perplexity = r.f64();
  ck.schedule.decay_started = r.u8() != 0;
  ck.schedule.epochs_without_improvement = r.u64();
  ck.schedule.epochs_completed = r.u64();
  if (!r.at_end()) throw CheckpointError(CheckpointErrc::kFormat, "trailing bytes after checkpoint");
  return ck;
}

inline std::vector<char> read_file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError(CheckpointErrc::kIo, "cannot open checkpoint: " + path);
  return std::vector<char>(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

inline Checkpoint load_checkpoint(const std::string& path,
                                  std::optional<std::uint64_t> expected_vocab_hash = std::nullopt) {
  return parse_checkpoint(read_file_bytes(path), expected_vocab_hash);
}

// Rebuilds a model of the stored precision; the class layout is derived
// from the vocabulary the checkpoint was trained with.
template <class Real>
Model<Real> model_from_checkpoint(const Checkpoint& ck, const Vocabulary& vocab) {
  if (vocab.content_hash() != ck.vocab_hash)
    throw CheckpointError(CheckpointErrc::kVocabMismatch,
                          "checkpoint was trained with a different vocabulary");
  if (vocab.size() != ck.shape.vocab)
    throw CheckpointError(CheckpointErrc::kVocabMismatch, "vocabulary size differs from checkpoint");
  Model<Real> m;
  m.shape = ck.shape;
  m.params = std::get<Params<Real>>(ck.params);
  if (m.shape.softmax == SoftmaxKind::kHierarchical)
    m.layout = build_frequency_classes(vocab, m.shape.classes);
  m.check_layout();
  return m;
}

}  // namespace scrn

#endif  // SCRN_CHECKPOINT_HPP_
