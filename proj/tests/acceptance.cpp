// Acceptance run: prints one PASS/FAIL/SKIP line per criterion and exits
// nonzero if any criterion that ran failed.
//
// Optional environment:
//   SCRN_CORPUS   plain-text corpus for the desk-scale runs (criteria 7-9);
//                 without it a seeded synthetic topic corpus is generated
//   SCRN_PTB_DIR  directory with ptb.{train,valid,test}.txt (criterion 10)
//   SCRN_CLI      path of the scrn executable (criterion 11)
// Arguments: criterion numbers to run (default: all).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>

#include "scrn/gradcheck.hpp"
#include "scrn/scrn.hpp"
#include "scrn/synthetic_corpus.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace scrn;

namespace {

struct Outcome {
  enum Kind { kPass, kFail, kSkip } kind;
  std::string detail;
};

Outcome pass(std::string d) { return {Outcome::kPass, std::move(d)}; }
Outcome fail(std::string d) { return {Outcome::kFail, std::move(d)}; }
Outcome skip(std::string d) { return {Outcome::kSkip, std::move(d)}; }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<TokenId> random_ids(std::size_t n, std::size_t d, std::mt19937_64& rng) {
  std::vector<TokenId> ids(n);
  for (auto& x : ids) x = static_cast<TokenId>(rng() % d);
  return ids;
}

ModelShape shape_of(Architecture arch, SoftmaxKind kind, std::size_t d, std::size_t m, std::size_t p,
                    std::size_t k = 0) {
  ModelShape s;
  s.arch = arch;
  s.softmax = kind;
  s.vocab = d;
  s.hidden = m;
  s.context = p;
  s.classes = kind == SoftmaxKind::kHierarchical ? k : 0;
  return s;
}

ClassLayout random_layout(std::size_t d, std::size_t k, std::mt19937_64& rng) {
  std::vector<std::uint64_t> counts(d);
  for (auto& c : counts) c = 1 + rng() % 1000;
  return build_frequency_classes(std::span<const std::uint64_t>(counts), k);
}

// 1 ------------------------------------------------------------------------
Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::string failures;
  for (auto arch : {Architecture::kSrn, Architecture::kScrn, Architecture::kScrnAdaptive, Architecture::kLstm})
    for (auto kind : {SoftmaxKind::kFull, SoftmaxKind::kHierarchical}) {
      const auto rep = check_all(arch, kind, 1);
      worst = std::max(worst, rep.max_rel_error());
      if (!rep.pass()) failures += " " + rep.arch + "/" + rep.softmax;
    }
  const double secs = seconds_since(t0);
  const std::string d = fmt("8 combinations, max_rel=%.2e (tol 1e-5), %.1fs", worst, secs);
  if (!failures.empty()) return fail(d + ", failing:" + failures);
  if (secs >= 60.0) return fail(d + ", over the 60s budget");
  return pass(d);
}

// 2 ------------------------------------------------------------------------
Outcome exponential_trace() {
  std::mt19937_64 rng(2);
  double worst = 0.0;
  for (int inst = 0; inst < 10; ++inst) {
    auto shape = shape_of(Architecture::kScrn, SoftmaxKind::kFull, 30, 5, 8);
    shape.alpha = 0.5 + 0.49 * (inst / 9.0);
    const auto params = init_params<double>(shape, 100 + inst, 1.0);
    const auto ids = random_ids(100, 30, rng);
    auto st = CellState<double>::zeros(shape);
    for (std::size_t t = 0; t < ids.size(); ++t) {
      st = advance(params, shape, st, ids[t]);
      for (std::size_t j = 0; j < shape.context; ++j) {
        double closed = 0.0;
        for (std::size_t k = 0; k <= t; ++k)
          closed += std::pow(shape.alpha, double(k)) * (1.0 - shape.alpha) * params[Block::kB](ids[t - k], j);
        worst = std::max(worst, std::fabs(closed - st.s[j]));
      }
    }
  }
  const auto d = fmt("max |s_t - closed form| = %.2e over 10 x 100 steps", worst);
  return worst <= 1e-12 ? pass(d) : fail(d);
}

// 3 ------------------------------------------------------------------------
Outcome block_matrix_equivalence() {
  std::mt19937_64 rng(3);
  double worst = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    const auto arch = inst % 2 ? Architecture::kScrnAdaptive : Architecture::kScrn;
    const std::size_t d = 5 + rng() % 20, m = 1 + rng() % 8, p = 1 + rng() % 6;
    auto shape = shape_of(arch, SoftmaxKind::kFull, d, m, p);
    shape.alpha = 0.05 + 0.9 * std::uniform_real_distribution<double>(0, 1)(rng);
    const auto params = init_params<double>(shape, 1000 + inst, 1.0);
    const auto mm = oracle::to_mat(block_matrix(params, shape));
    const auto ww = oracle::to_mat(block_input_matrix(params, shape));
    auto prev = CellState<double>::zeros(shape);
    for (auto& x : prev.h) x = std::uniform_real_distribution<double>(0, 1)(rng);
    for (auto& x : prev.s) x = std::uniform_real_distribution<double>(-1, 1)(rng);
    const TokenId tok = static_cast<TokenId>(rng() % d);
    const auto next = advance(params, shape, prev, tok);
    oracle::Vec z(prev.h.begin(), prev.h.end());
    z.insert(z.end(), prev.s.begin(), prev.s.end());
    auto pre = oracle::matvec(mm, z);
    const auto wx = oracle::matvec(ww, oracle::onehot(d, tok));
    for (std::size_t i = 0; i < m + p; ++i) pre[i] += wx[i];
    for (std::size_t i = 0; i < m; ++i) worst = std::max(worst, std::fabs(oracle::logistic(pre[i]) - next.h[i]));
    for (std::size_t j = 0; j < p; ++j) worst = std::max(worst, std::fabs(pre[m + j] - next.s[j]));
  }
  const auto d = fmt("max deviation %.2e on 100 random instances", worst);
  return worst <= 1e-12 ? pass(d) : fail(d);
}

// 4 ------------------------------------------------------------------------
Outcome normalization() {
  std::mt19937_64 rng(4);
  double worst = 0.0;
  for (int inst = 0; inst < 40; ++inst) {
    const std::size_t d = inst < 4 ? 1000 : 2 + rng() % 999;
    const std::size_t k = 1 + rng() % static_cast<std::size_t>(std::ceil(std::sqrt(double(d)) * 2));
    const auto layout = random_layout(d, std::min(k, d), rng);
    for (auto kind : {SoftmaxKind::kFull, SoftmaxKind::kHierarchical}) {
      const auto shape = shape_of(Architecture::kScrn, kind, d, 6, 4, layout.num_classes());
      Model<double> model = Model<double>::create(
          shape, inst, kind == SoftmaxKind::kHierarchical ? std::optional(layout) : std::nullopt, 2.0);
      CellState<double> st = CellState<double>::zeros(shape);
      for (auto& x : st.h) x = std::uniform_real_distribution<double>(0, 1)(rng);
      for (auto& x : st.s) x = std::uniform_real_distribution<double>(-3, 3)(rng);
      const auto probs = output_distribution(model, st);
      double sum = 0.0;
      for (double x : probs) sum += x;
      worst = std::max(worst, std::fabs(sum - 1.0));
    }
  }
  const auto d = fmt("max |sum - 1| = %.2e over 80 distributions, d up to 1000", worst);
  return worst <= 1e-9 ? pass(d) : fail(d);
}

// 5 ------------------------------------------------------------------------
Outcome uniform_baseline() {
  std::mt19937_64 rng(5);
  double worst = 0.0;
  for (auto arch : {Architecture::kSrn, Architecture::kScrn, Architecture::kScrnAdaptive, Architecture::kLstm}) {
    const bool ctx = arch == Architecture::kScrn || arch == Architecture::kScrnAdaptive;
    // full softmax, d = 997
    {
      const auto shape = shape_of(arch, SoftmaxKind::kFull, 997, 8, ctx ? 4 : 0);
      auto model = Model<double>::create(shape, 5);
      model.params[Block::kU].fill(0.0);
      if (ctx) model.params[Block::kV].fill(0.0);
      const auto ids = random_ids(500, 997, rng);
      worst = std::max(worst, std::fabs(perplexity(model, std::span<const TokenId>(ids)).perplexity - 997.0));
    }
    // hierarchical softmax with equal-size classes (d = 36, K = 6)
    {
      const auto shape = shape_of(arch, SoftmaxKind::kHierarchical, 36, 8, ctx ? 4 : 0, 6);
      std::vector<std::uint64_t> counts(36, 10);
      auto model = Model<double>::create(shape, 6, build_frequency_classes(std::span<const std::uint64_t>(counts), 6));
      for (Block b : {Block::kU, Block::kV, Block::kClassU, Block::kClassV}) model.params[b].fill(0.0);
      const auto ids = random_ids(500, 36, rng);
      worst = std::max(worst, std::fabs(perplexity(model, std::span<const TokenId>(ids)).perplexity - 36.0));
    }
  }
  const auto d = fmt("max |ppl - d| = %.2e (4 architectures, full and hierarchical)", worst);
  return worst <= 1e-6 ? pass(d) : fail(d);
}

// 6 ------------------------------------------------------------------------
Outcome full_bptt_equivalence() {
  std::mt19937_64 rng(6);
  double worst = 0.0;
  int checked = 0;
  for (auto arch : {Architecture::kSrn, Architecture::kScrn, Architecture::kScrnAdaptive, Architecture::kLstm})
    for (bool hsm : {false, true})
      for (std::size_t len : {10u, 20u, 30u}) {
        TrainConfig cfg;
        cfg.arch = arch;
        cfg.hidden = 6;
        cfg.context = 4;
        cfg.hsm = hsm;
        cfg.classes = 3;
        cfg.num_streams = 1;
        cfg.bptt_span = cfg.update_interval = len - 1;
        cfg.clip_norm = 1e300;
        cfg.learning_rate = 0.0;
        cfg.init_half_width = 0.5;
        const std::size_t d = 11;
        const auto shape = cfg.shape_for(d);
        std::optional<ClassLayout> layout;
        if (hsm) layout = random_layout(d, shape.classes, rng);
        auto model = Model<double>::create(shape, len, layout, cfg.init_half_width);
        const auto ids = random_ids(len, d, rng);

        // Reference: the straight-line oracle where it exists, otherwise a
        // single unrolled pass over the whole sequence.
        Params<double> ref;
        if (!hsm && arch != Architecture::kLstm) {
          oracle::Vec q;
          for (double x : context_decay(model.params, shape)) q.push_back(x);
          const auto o = oracle::scrn_bptt(model.params, shape, q, shape.adaptive(), ids);
          ref = Params<double>::zeros(shape);
          auto put = [&](Block b, const oracle::Mat& m) {
            for (std::size_t r = 0; r < m.size(); ++r)
              for (std::size_t c = 0; c < m[r].size(); ++c) ref[b](r, c) = m[r][c];
          };
          put(Block::kA, o.A);
          put(Block::kR, o.R);
          put(Block::kU, o.U);
          if (shape.context) {
            put(Block::kB, o.B);
            put(Block::kP, o.P);
            put(Block::kV, o.V);
          }
          if (shape.adaptive()) put(Block::kBeta, {o.beta});
        } else {
          Gradients<double> g(shape);
          window_loss(model, ids, &g);
          ref = g.params();
        }
        Trainer<double> trainer(model, cfg);
        int calls = 0;
        trainer.set_gradient_observer([&](const Gradients<double>& g) {
          ++calls;
          for (Block b : active_blocks(shape)) {
            const auto x = g[b].flat();
            const auto y = std::as_const(ref)[b].flat();
            for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::fabs(x[i] - y[i]));
          }
        });
        trainer.train_epoch(make_streams(ids, 1), ScheduleState::initial(cfg));
        if (calls != 1) return fail("expected exactly one update per sequence");
        ++checked;
      }
  const auto d = fmt("max |trainer - full BPTT| = %.2e over %d sequences of 10-30 tokens", worst, checked);
  return worst <= 1e-10 ? pass(d) : fail(d);
}

// 7-9 ----------------------------------------------------------------------

struct DeskData {
  std::string source;
  std::string train_text;  // ~1M words
  std::string valid_text;  // ~100K words
};

// Splits `text` by lines into a train part of `train_words` words followed
// by a validation part of `valid_words` words.
void split_words(std::istream& is, std::size_t train_words, std::size_t valid_words, DeskData& out) {
  std::string line;
  std::size_t w = 0;
  while (std::getline(is, line) && w < train_words + valid_words) {
    std::istringstream ls(line);
    std::string tok, clean;
    std::size_t n = 0;
    while (ls >> tok) {
      if (n) clean += ' ';
      clean += tok;
      ++n;
    }
    if (n == 0) continue;
    (w < train_words ? out.train_text : out.valid_text) += clean + "\n";
    w += n;
  }
}

const DeskData& desk_data() {
  static const DeskData data = [] {
    DeskData d;
    const std::size_t train_words = 1'000'000, valid_words = 100'000;
    if (const char* path = std::getenv("SCRN_CORPUS"); path && *path) {
      std::ifstream is(path);
      if (!is) throw std::runtime_error(std::string("cannot open SCRN_CORPUS=") + path);
      // Single-line corpora (Text8) are re-wrapped into 20-word lines.
      std::string first;
      std::getline(is, first);
      is.clear();
      is.seekg(0);
      if (first.size() > 1'000'000) {
        std::ostringstream wrapped;
        std::string tok;
        std::size_t n = 0;
        while (is >> tok && n < train_words + valid_words) {
          wrapped << tok << (++n % 20 ? ' ' : '\n');
        }
        std::istringstream ws(wrapped.str());
        split_words(ws, train_words, valid_words, d);
      } else {
        split_words(is, train_words, valid_words, d);
      }
      d.source = path;
    } else {
      TopicCorpusSpec spec;
      spec.words = train_words + valid_words;
      std::ostringstream os;
      write_topic_corpus(os, spec);
      std::istringstream is(os.str());
      split_words(is, train_words, valid_words, d);
      d.source = "synthetic topic corpus (seed 2015)";
    }
    return d;
  }();
  return data;
}

// Trains with default hyperparameters apart from the architecture fields,
// `epochs` epochs with the validation schedule, on the first `train_words`
// words. Returns the best validation perplexity.
double desk_run(Architecture arch, std::size_t m, std::size_t p, std::size_t k, std::size_t train_words,
                std::size_t epochs, std::string& log) {
  const auto& data = desk_data();
  std::string train = data.train_text;
  if (train_words < 1'000'000) {
    std::istringstream is(data.train_text);
    DeskData part;
    split_words(is, train_words, 0, part);
    train = part.train_text;
  }
  std::istringstream ts(train);
  const auto vocab = build_vocab(ts, 1, true);
  const auto train_ids = encode(train, vocab);
  const auto valid_ids = encode(data.valid_text, vocab);

  TrainConfig cfg;
  cfg.arch = arch;
  cfg.hidden = m;
  cfg.context = p;
  cfg.classes = k;
  cfg.max_epochs = epochs;
  const auto shape = cfg.shape_for(vocab.size());
  auto model = Model<float>::create(shape, cfg.seed, build_frequency_classes(vocab, shape.classes), cfg.init_half_width);
  Trainer<float> trainer(model, cfg);
  const auto streams = make_streams(train_ids, cfg.num_streams);
  auto sched = ScheduleState::initial(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  bool stop = false;
  while (!stop) {
    trainer.train_epoch(streams, sched);
    const double ppl = perplexity(model, std::span<const TokenId>(valid_ids)).perplexity;
    std::tie(sched, stop) = schedule_step(sched, ppl, cfg);
    log += fmt("%.1f ", ppl);
  }
  log += fmt("(%.0fs)", seconds_since(t0));
  return sched.best_validation_perplexity;
}

Outcome desk_ordering() {
  std::string ls, lr;
  const double srn = desk_run(Architecture::kSrn, 50, 0, 0, 1'000'000, 5, ls);
  const double scrn = desk_run(Architecture::kScrn, 40, 10, 0, 1'000'000, 5, lr);
  const auto d = fmt("SCRN 40/10 valid ppl %.2f vs SRN 50 %.2f [%s] epochs SRN: %s; SCRN: %s", scrn, srn,
                     desk_data().source.c_str(), ls.c_str(), lr.c_str());
  return scrn < srn ? pass(d) : fail(d);
}

constexpr std::size_t kSmallDeskWords = 300'000;

Outcome adaptive_vs_fixed() {
  std::string lf, la;
  const double fixed = desk_run(Architecture::kScrn, 0, 50, 100, kSmallDeskWords, 5, lf);
  const double adaptive = desk_run(Architecture::kScrnAdaptive, 0, 50, 100, kSmallDeskWords, 5, la);
  const double gain = 1.0 - adaptive / fixed;
  const auto d = fmt("m=0 p=50 K=100: adaptive %.2f vs fixed %.2f, %.1f%% lower (need >= 20%%) epochs fixed: %s; adaptive: %s",
                     adaptive, fixed, 100.0 * gain, lf.c_str(), la.c_str());
  return gain >= 0.20 ? pass(d) : fail(d);
}

Outcome context_helps() {
  std::string ls, lc;
  const double srn = desk_run(Architecture::kSrn, 100, 0, 0, kSmallDeskWords, 5, ls);
  const double scrn = desk_run(Architecture::kScrn, 100, 40, 0, kSmallDeskWords, 5, lc);
  const double gain = 1.0 - scrn / srn;
  const auto d = fmt("m=100: +40 context %.2f vs %.2f, %.1f%% lower (need >= 10%%) epochs SRN: %s; SCRN: %s", scrn,
                     srn, 100.0 * gain, ls.c_str(), lc.c_str());
  return gain >= 0.10 ? pass(d) : fail(d);
}

// 10 -----------------------------------------------------------------------
Outcome full_scale() {
  const char* dir = std::getenv("SCRN_PTB_DIR");
  if (!dir || !*dir) return skip("optional; set SCRN_PTB_DIR to a directory with ptb.{train,valid,test}.txt");
  auto read = [&](const char* name) {
    std::ifstream is(fs::path(dir) / name);
    if (!is) throw std::runtime_error(std::string("missing ") + name + " in SCRN_PTB_DIR");
    return std::string(std::istreambuf_iterator<char>(is), {});
  };
  const std::string train = read("ptb.train.txt"), valid = read("ptb.valid.txt"), test = read("ptb.test.txt");
  std::istringstream ts(train);
  const auto vocab = build_vocab(ts, 1, true);
  const auto train_ids = encode(train, vocab), valid_ids = encode(valid, vocab), test_ids = encode(test, vocab);
  auto run = [&](Architecture arch, std::size_t m, std::size_t p) {
    TrainConfig cfg;
    cfg.arch = arch;
    cfg.hidden = m;
    cfg.context = p;
    cfg.max_epochs = 50;
    const auto shape = cfg.shape_for(vocab.size());
    auto model = Model<float>::create(shape, cfg.seed, build_frequency_classes(vocab, shape.classes));
    Model<float> best = model;
    Trainer<float> trainer(model, cfg);
    const auto streams = make_streams(train_ids, cfg.num_streams);
    auto sched = ScheduleState::initial(cfg);
    bool stop = false;
    while (!stop) {
      trainer.train_epoch(streams, sched);
      const double ppl = perplexity(model, std::span<const TokenId>(valid_ids)).perplexity;
      if (ppl < sched.best_validation_perplexity) best = model;
      std::tie(sched, stop) = schedule_step(sched, ppl, cfg);
    }
    return perplexity(best, std::span<const TokenId>(test_ids)).perplexity;
  };
  const double srn = run(Architecture::kSrn, 100, 0);
  const double scrn = run(Architecture::kScrn, 100, 40);
  const bool ok = srn >= 123 && srn <= 136 && scrn >= 109 && scrn <= 121;
  const auto d = fmt("test ppl SRN-100 %.2f (target 123-136), SCRN-100/40 %.2f (target 109-121)", srn, scrn);
  return ok ? pass(d) : fail(d);
}

// 11 -----------------------------------------------------------------------
Outcome determinism() {
  const char* cli = std::getenv("SCRN_CLI");
  std::string exe = cli && *cli ? cli : "";
#ifdef SCRN_CLI_PATH
  if (exe.empty()) exe = SCRN_CLI_PATH;
#endif
  if (exe.empty() || !fs::exists(exe)) return fail("scrn executable not found (set SCRN_CLI)");
  const fs::path root = fs::temp_directory_path() / fs::path("scrn_acceptance_determinism");
  fs::remove_all(root);
  fs::create_directories(root / "data");
  {
    TopicCorpusSpec spec;
    spec.words = 40'000;
    spec.seed = 11;
    std::ofstream tr(root / "data" / "train.txt");
    write_topic_corpus(tr, spec);
    spec.words = 5'000;
    spec.seed = 12;
    std::ofstream va(root / "data" / "valid.txt");
    write_topic_corpus(va, spec);
  }
  {
    std::ofstream cfg(root / "exp.cfg");
    cfg << "arch = scrn-adaptive\nhidden = 16\ncontext = 8\nmax_epochs = 3\nnum_streams = 8\n"
        << "workers = 2\n"
        << "train = " << (root / "data" / "train.txt").string() << "\n"
        << "valid = " << (root / "data" / "valid.txt").string() << "\n";
  }
  auto run = [&](const std::string& out) {
    const std::string cmd = "SCRN_DETERMINISTIC=1 \"" + exe + "\" train --config \"" + (root / "exp.cfg").string() +
                            "\" --checkpoint_dir \"" + (root / out).string() + "\" > \"" +
                            (root / (out + ".log")).string() + "\" 2>&1";
    return std::system(cmd.c_str());
  };
  if (run("a") != 0 || run("b") != 0) return fail("training run exited nonzero");
  auto bytes = [](const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), {});
  };
  for (const char* f : {"metrics.jsonl", "checkpoint.bin", "best.bin", "vocab.tsv"}) {
    const auto a = bytes(root / "a" / f), b = bytes(root / "b" / f);
    if (a.empty() || a != b) return fail(std::string(f) + " differs between runs");
  }
  const auto metrics = bytes(root / "a" / "metrics.jsonl");
  const auto lines = std::count(metrics.begin(), metrics.end(), '\n');
  fs::remove_all(root);
  return pass(fmt("two runs: metrics.jsonl (%ld epochs), checkpoint.bin, best.bin, vocab.tsv byte-identical", long(lines)));
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient suite", gradient_suite},
      {"exponential trace", exponential_trace},
      {"block-matrix equivalence", block_matrix_equivalence},
      {"normalization", normalization},
      {"uniform baseline", uniform_baseline},
      {"full-BPTT equivalence", full_bptt_equivalence},
      {"desk-scale ordering", desk_ordering},
      {"adaptive vs fixed decay", adaptive_vs_fixed},
      {"context helps", context_helps},
      {"full-scale reproduction", full_scale},
      {"determinism", determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    const char* tag = o.kind == Outcome::kPass ? "PASS" : o.kind == Outcome::kFail ? "FAIL" : "SKIP";
    std::printf("criterion %2d %-26s %s  %s\n", id, criteria[i].first, tag, o.detail.c_str());
    std::fflush(stdout);
    if (o.kind == Outcome::kFail) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
