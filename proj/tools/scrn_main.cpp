// scrn: train, evaluate and inspect recurrent language models.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "experiment_config.hpp"
#include "json.hpp"
#include "scrn/checkpoint.hpp"
#include "scrn/evaluator.hpp"
#include "scrn/gradcheck.hpp"
#include "scrn/scrn.hpp"
#include "scrn/synthetic_corpus.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace scrn::tools {
namespace {

enum Exit : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

// Data problems: missing or malformed inputs.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

bool deterministic_env() {
  const char* v = std::getenv("SCRN_DETERMINISTIC");
  return v != nullptr && *v != '\0' && std::string(v) != "0";
}

std::ifstream open_text(const std::string& path, const char* what) {
  if (path.empty()) throw DataError(std::string("no ") + what + " file configured");
  std::ifstream is(path);
  if (!is) throw DataError(std::string("cannot open ") + what + " file: " + path);
  return is;
}

std::vector<TokenId> encode_path(const std::string& path, const Vocabulary& vocab, const char* what) {
  auto is = open_text(path, what);
  auto ids = encode(is, vocab);
  if (ids.empty()) throw DataError(std::string(what) + " file is empty: " + path);
  return ids;
}

Vocabulary load_vocab_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open vocabulary: " + path);
  return Vocabulary::load(is);
}

void save_vocab_file(const Vocabulary& v, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write vocabulary: " + path);
  v.save(os);
}

// ---------------------------------------------------------------------------
// train

json epoch_record(std::size_t epoch, const EpochStats& st, double lr_used, double valid_ppl,
                  const ScheduleState& next) {
  return json{{"epoch", epoch},
              {"train_nll", st.mean_nll},
              {"train_ppl", std::exp(st.mean_nll)},
              {"valid_ppl", valid_ppl},
              {"lr", lr_used},
              {"next_lr", next.current_lr},
              {"updates", st.updates},
              {"tokens", st.tokens},
              {"max_grad_norm", st.max_grad_norm}};
}

template <class Real>
int run_training(ExperimentConfig& cfg, const Vocabulary& vocab, const std::vector<TokenId>& train_ids,
                 const std::vector<TokenId>& valid_ids, const std::vector<TokenId>& test_ids) {
  const fs::path dir(cfg.checkpoint_dir);
  const std::string ckpt_path = (dir / "checkpoint.bin").string();
  const std::string best_path = (dir / "best.bin").string();
  const std::string metrics_path = (dir / "metrics.jsonl").string();
  const std::uint64_t hash = vocab.content_hash();

  TrainConfig tc = cfg.train;
  Model<Real> model;
  ScheduleState sched = ScheduleState::initial(tc);
  bool resumed = false;
  if (cfg.resume && fs::exists(ckpt_path)) {
    const auto ck = load_checkpoint(ckpt_path, hash);
    if (ck.config.precision != tc.precision)
      throw DataError("checkpoint precision differs from configured precision");
    const auto max_epochs = tc.max_epochs, workers = tc.workers;
    tc = ck.config;
    tc.max_epochs = max_epochs;
    tc.workers = workers;
    model = model_from_checkpoint<Real>(ck, vocab);
    sched = ck.schedule;
    resumed = true;
    std::cerr << "resuming from " << ckpt_path << " after epoch " << sched.epochs_completed << "\n";
  } else {
    const auto shape = tc.shape_for(vocab.size());
    std::optional<ClassLayout> layout;
    if (tc.hsm) layout = build_frequency_classes(vocab, shape.classes);
    model = Model<Real>::create(shape, tc.seed, layout, tc.init_half_width);
  }
  tc.validate();

  std::ofstream metrics(metrics_path, resumed ? std::ios::app : std::ios::trunc);
  if (!metrics) throw DataError("cannot write metrics log: " + metrics_path);

  std::cerr << "model " << to_string(model.shape.arch) << " d=" << model.shape.vocab
            << " m=" << model.shape.hidden << " p=" << model.shape.context << " K=" << model.shape.classes
            << " params=" << parameter_count(model.shape) << " train_tokens=" << train_ids.size()
            << " valid_tokens=" << valid_ids.size() << "\n";

  const auto valid_ppl = [&] { return perplexity(model, std::span<const TokenId>(valid_ids)).perplexity; };

  if (tc.max_epochs == 0 || sched.epochs_completed >= tc.max_epochs) {
    save_checkpoint(ckpt_path, model, tc, sched, hash);
    if (!resumed) save_checkpoint(best_path, model, tc, sched, hash);
    std::cout << "valid ppl=" << valid_ppl() << " (no training epochs)\n";
  } else {
    const auto streams = make_streams(train_ids, tc.num_streams);
    Trainer<Real> trainer(model, tc);
    bool stop = false;
    while (!stop) {
      const double lr_used = sched.current_lr;
      const auto st = trainer.train_epoch(streams, sched);
      const double vppl = valid_ppl();
      const double best_before = sched.best_validation_perplexity;
      std::tie(sched, stop) = schedule_step(sched, vppl, tc);
      const json rec = epoch_record(sched.epochs_completed, st, lr_used, vppl, sched);
      metrics << rec.dump() << "\n" << std::flush;
      if (cfg.log_format == "json") {
        json console = rec;
        console["seconds"] = st.seconds;
        console["tokens_per_sec"] = st.tokens_per_sec;
        std::cout << console.dump() << std::endl;
      } else {
        std::printf("epoch %zu  train_ppl %.3f  valid_ppl %.3f  lr %.6g  %.0f tok/s\n", sched.epochs_completed,
                    std::exp(st.mean_nll), vppl, lr_used, st.tokens_per_sec);
        std::fflush(stdout);
      }
      save_checkpoint(ckpt_path, model, tc, sched, hash);
      if (vppl < best_before) save_checkpoint(best_path, model, tc, sched, hash);
    }
  }

  if (!test_ids.empty()) {
    const auto best = load_checkpoint(best_path, hash);
    const auto best_model = model_from_checkpoint<Real>(best, vocab);
    std::cout << "test " << perplexity(best_model, std::span<const TokenId>(test_ids)).line() << "\n";
  }
  return kOk;
}

int cmd_train(ExperimentConfig cfg) {
  cfg.train.validate();
  if (cfg.min_count < 1) throw ConfigError("min_count must be >= 1");
  fs::create_directories(cfg.checkpoint_dir);

  Vocabulary vocab;
  if (!cfg.vocab_path.empty() && fs::exists(cfg.vocab_path)) {
    vocab = load_vocab_file(cfg.vocab_path);
  } else {
    auto is = open_text(cfg.train_path, "train");
    vocab = build_vocab(is, cfg.min_count, cfg.eos);
    if (!cfg.vocab_path.empty()) save_vocab_file(vocab, cfg.vocab_path);
  }
  save_vocab_file(vocab, (fs::path(cfg.checkpoint_dir) / "vocab.tsv").string());
  {
    std::ofstream os(fs::path(cfg.checkpoint_dir) / "config.txt");
    os << dump_config(cfg);
  }

  const auto train_ids = encode_path(cfg.train_path, vocab, "train");
  const auto valid_ids = encode_path(cfg.valid_path, vocab, "valid");
  std::vector<TokenId> test_ids;
  if (!cfg.test_path.empty()) test_ids = encode_path(cfg.test_path, vocab, "test");
  if (train_ids.size() < 2 * cfg.train.num_streams)
    throw DataError("training text too short for " + std::to_string(cfg.train.num_streams) + " streams");

  if (cfg.train.precision == Precision::kFloat64)
    return run_training<double>(cfg, vocab, train_ids, valid_ids, test_ids);
  return run_training<float>(cfg, vocab, train_ids, valid_ids, test_ids);
}

// ---------------------------------------------------------------------------
// eval / info

std::string default_vocab_for(const std::string& model_path) {
  return (fs::path(model_path).parent_path() / "vocab.tsv").string();
}

int cmd_eval(const std::string& model_path, const std::string& text_path, std::string vocab_path,
             bool as_json, bool enumerate) {
  if (vocab_path.empty()) vocab_path = default_vocab_for(model_path);
  const auto vocab = load_vocab_file(vocab_path);
  const auto ck = load_checkpoint(model_path, vocab.content_hash());
  const auto ids = encode_path(text_path, vocab, "text");
  EvalReport rep;
  if (ck.config.precision == Precision::kFloat64) {
    rep = perplexity(model_from_checkpoint<double>(ck, vocab), std::span<const TokenId>(ids), enumerate);
  } else {
    rep = perplexity(model_from_checkpoint<float>(ck, vocab), std::span<const TokenId>(ids), enumerate);
  }
  std::cout << (as_json ? rep.json() : rep.line()) << "\n";
  return kOk;
}

template <class Real>
std::vector<double> sorted_decays(const Params<Real>& p, const ModelShape& shape) {
  std::vector<double> q;
  for (std::size_t i = 0; i < shape.context; ++i) q.push_back(sigmoid(static_cast<double>(p[Block::kBeta](0, i))));
  std::sort(q.begin(), q.end());
  return q;
}

int cmd_info(const std::string& model_path) {
  const auto ck = load_checkpoint(model_path);
  const auto& s = ck.shape;
  std::printf("architecture     %s\n", std::string(to_string(s.arch)).c_str());
  std::printf("softmax          %s\n", std::string(to_string(s.softmax)).c_str());
  std::printf("vocabulary       %zu\n", s.vocab);
  std::printf("hidden           %zu\n", s.hidden);
  std::printf("context          %zu\n", s.context);
  std::printf("classes          %zu\n", s.classes);
  std::printf("parameters       %zu\n", parameter_count(s));
  std::printf("precision        %d-bit\n", ck.config.precision == Precision::kFloat32 ? 32 : 64);
  std::printf("seed             %llu\n", static_cast<unsigned long long>(ck.config.seed));
  std::printf("vocab hash       %016llx\n", static_cast<unsigned long long>(ck.vocab_hash));
  const auto hyper = hyperparameter_values(ck.config);
  for (std::size_t i = 0; i < hyper.size(); ++i) std::printf("%-22s %.10g\n", kHyperNames[i], hyper[i]);
  std::printf("epochs completed %zu\n", ck.schedule.epochs_completed);
  std::printf("current lr       %.10g\n", ck.schedule.current_lr);
  std::printf("best valid ppl   %.6f\n", ck.schedule.best_validation_perplexity);
  if (s.adaptive()) {
    const auto q = std::visit([&](const auto& p) { return sorted_decays(p, s); }, ck.params);
    std::printf("decays (sorted)  ");
    for (std::size_t i = 0; i < q.size(); ++i) std::printf("%s%.4f", i ? " " : "", q[i]);
    std::printf("\n");
  }
  return kOk;
}

int cmd_gradcheck(const std::string& arch, const std::string& softmax, std::uint64_t seed, double eps,
                  double tol) {
  GradCheckOptions opt;
  opt.epsilon = eps;
  opt.tolerance = tol;
  Architecture a;
  SoftmaxKind k;
  try {
    a = parse_architecture(arch);
    k = parse_softmax(softmax);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const auto rep = check_all(a, k, seed, {}, opt);
  std::cout << rep.to_string();
  return rep.pass() ? kOk : kNumeric;
}

int cmd_synth(const std::string& out_dir, std::size_t words, std::uint64_t seed) {
  fs::create_directories(out_dir);
  // 80/10/10 split from three independently seeded draws of one generator.
  const std::array<std::pair<const char*, double>, 3> parts = {{{"train.txt", 0.8}, {"valid.txt", 0.1}, {"test.txt", 0.1}}};
  for (std::size_t i = 0; i < parts.size(); ++i) {
    TopicCorpusSpec spec;
    spec.words = static_cast<std::size_t>(static_cast<double>(words) * parts[i].second);
    spec.seed = mix_seed(seed, i);
    std::ofstream os(fs::path(out_dir) / parts[i].first);
    if (!os) throw DataError("cannot write to " + out_dir);
    write_topic_corpus(os, spec);
  }
  std::cout << "wrote " << out_dir << "/{train,valid,test}.txt\n";
  return kOk;
}

}  // namespace
}  // namespace scrn::tools

int main(int argc, char** argv) {
  using namespace scrn;
  using namespace scrn::tools;

  CLI::App app("Recurrent language models with slowly-decaying context units");
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "train a model from an experiment config");
  std::string config_path;
  train->add_option("--config", config_path, "key = value experiment file");
  std::map<std::string, std::string> overrides;
  std::map<std::string, CLI::Option*> override_opts;
  for (const auto& k : config_keys())
    override_opts[k.name] = train->add_option("--" + k.name, overrides[k.name], k.help);
  bool print_config = false;
  train->add_flag("--print-config", print_config, "print the resolved config and exit");

  // eval
  auto* eval = app.add_subcommand("eval", "report perplexity of a checkpoint on a text");
  std::string model_path, text_path, vocab_path;
  bool as_json = false, enumerate = false;
  eval->add_option("--model", model_path, "checkpoint file")->required();
  eval->add_option("--text", text_path, "text to score")->required();
  eval->add_option("--vocab", vocab_path, "vocabulary (default: vocab.tsv next to the checkpoint)");
  eval->add_flag("--json", as_json, "print a JSON object instead of the text line");
  eval->add_flag("--enumerate", enumerate, "score from the explicit full distribution");

  // info
  auto* info = app.add_subcommand("info", "describe a checkpoint");
  info->add_option("--model", model_path, "checkpoint file")->required();

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "compare analytic and finite-difference gradients");
  std::string gc_arch, gc_softmax;
  std::uint64_t gc_seed = 1;
  double gc_eps = 1e-4, gc_tol = 1e-5;
  gc->add_option("--arch", gc_arch, "srn | scrn | scrn-adaptive | lstm")->required();
  gc->add_option("--softmax", gc_softmax, "full | hsm")->required();
  gc->add_option("--seed", gc_seed, "random seed")->capture_default_str();
  gc->add_option("--eps", gc_eps, "finite-difference step")->capture_default_str();
  gc->add_option("--tol", gc_tol, "relative error tolerance")->capture_default_str();

  // synth
  auto* synth = app.add_subcommand("synth", "write a synthetic topic-mixture corpus");
  std::string synth_dir;
  std::size_t synth_words = 1'250'000;
  std::uint64_t synth_seed = 2015;
  synth->add_option("--out", synth_dir, "output directory")->required();
  synth->add_option("--words", synth_words, "total words over train/valid/test")->capture_default_str();
  synth->add_option("--seed", synth_seed, "generator seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*train) {
      ExperimentConfig cfg;
      if (!config_path.empty()) apply_config_file(cfg, config_path);
      for (const auto& k : config_keys())
        if (override_opts[k.name]->count() > 0) set_value(cfg, k.name, overrides[k.name]);
      if (deterministic_env()) cfg.train.workers = 1;
      if (print_config) {
        std::cout << dump_config(cfg);
        return kOk;
      }
      try {
        cfg.train.validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
      return cmd_train(cfg);
    }
    if (*eval) return cmd_eval(model_path, text_path, vocab_path, as_json, enumerate);
    if (*info) return cmd_info(model_path);
    if (*gc) return cmd_gradcheck(gc_arch, gc_softmax, gc_seed, gc_eps, gc_tol);
    if (*synth) return cmd_synth(synth_dir, synth_words, synth_seed);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const CorpusError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
