#ifndef SCRN_SYNTHETIC_CORPUS_HPP_
#define SCRN_SYNTHETIC_CORPUS_HPP_

// Seeded generator for a topic-mixture text corpus. Documents draw one
// topic; words alternate between a small set of function words (whose
// choice depends on the previous word) and content words drawn either from
// the document topic or from a shared pool, with frequent fixed
// collocations. Short-range structure and document-level topic structure
// both carry information, which is what the desk-scale experiments need
// when no public corpus is available.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <random>
#include <string>
#include <vector>

namespace scrn {

struct TopicCorpusSpec {
  std::size_t words = 1'000'000;
  std::size_t topics = 40;
  std::size_t words_per_topic = 250;
  std::size_t general_words = 3000;
  std::size_t function_words = 120;
  std::size_t min_doc_words = 200;
  std::size_t max_doc_words = 1200;
  std::size_t min_sentence = 6;
  std::size_t max_sentence = 24;
  double topic_share = 0.55;        // content words drawn from the document topic
  double collocation_rate = 0.3;    // content word followed by its fixed partner
  double content_after_function = 0.7;
  double function_after_content = 0.65;
  double zipf_exponent = 1.0;
  std::uint64_t seed = 2015;
};

namespace detail {

class ZipfSampler {
 public:
  ZipfSampler(std::size_t n, double exponent) : cdf_(n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += 1.0 / std::pow(static_cast<double>(i + 1), exponent);
      cdf_[i] = acc;
    }
    for (auto& c : cdf_) c /= acc;
  }
  template <class Rng>
  std::size_t operator()(Rng& rng) const {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double x = u(rng);
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), x);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
  }

 private:
  std::vector<double> cdf_;
};

}  // namespace detail

// Writes one sentence per line. Returns the number of words written.
inline std::size_t write_topic_corpus(std::ostream& os, const TopicCorpusSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  const detail::ZipfSampler topic_zipf(spec.words_per_topic, spec.zipf_exponent);
  const detail::ZipfSampler general_zipf(spec.general_words, spec.zipf_exponent);
  const detail::ZipfSampler function_zipf(spec.function_words, spec.zipf_exponent);

  // Word ids: [function | general | topic 0 | topic 1 | ...]
  const std::size_t general_base = spec.function_words;
  const std::size_t topic_base = general_base + spec.general_words;
  const std::size_t total_types = topic_base + spec.topics * spec.words_per_topic;
  auto name = [&](std::size_t id) {
    if (id < general_base) return "f" + std::to_string(id);
    if (id < topic_base) return "g" + std::to_string(id - general_base);
    const std::size_t k = id - topic_base;
    return "t" + std::to_string(k / spec.words_per_topic) + "_" + std::to_string(k % spec.words_per_topic);
  };

  // Function-word choice depends on a 16-way bucket of the previous word:
  // each bucket uses its own permutation of the function-word ranks.
  constexpr std::size_t kBuckets = 16;
  std::vector<std::vector<std::size_t>> function_perm(kBuckets);
  for (auto& perm : function_perm) {
    perm.resize(spec.function_words);
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
  }
  // Fixed collocation partner for every content word, within its own pool.
  std::vector<std::size_t> partner(total_types, 0);
  for (std::size_t id = general_base; id < total_types; ++id) {
    if (id < topic_base) {
      partner[id] = general_base + general_zipf(rng);
    } else {
      const std::size_t topic = (id - topic_base) / spec.words_per_topic;
      partner[id] = topic_base + topic * spec.words_per_topic + topic_zipf(rng);
    }
  }

  std::uniform_int_distribution<std::size_t> topic_pick(0, spec.topics - 1);
  std::uniform_int_distribution<std::size_t> doc_len(spec.min_doc_words, spec.max_doc_words);
  std::uniform_int_distribution<std::size_t> sent_len(spec.min_sentence, spec.max_sentence);

  std::size_t written = 0;
  std::size_t prev = 0;
  bool prev_content = false;
  while (written < spec.words) {
    const std::size_t topic = topic_pick(rng);
    std::size_t remaining = std::min(doc_len(rng), spec.words - written);
    while (remaining > 0) {
      const std::size_t len = std::min(sent_len(rng), remaining);
      for (std::size_t i = 0; i < len; ++i) {
        std::size_t id;
        const bool want_content =
            prev_content ? coin(rng) >= spec.function_after_content : coin(rng) < spec.content_after_function;
        if (prev_content && coin(rng) < spec.collocation_rate) {
          id = partner[prev];
        } else if (!want_content) {
          id = function_perm[prev % kBuckets][function_zipf(rng)];
        } else if (coin(rng) < spec.topic_share) {
          id = topic_base + topic * spec.words_per_topic + topic_zipf(rng);
        } else {
          id = general_base + general_zipf(rng);
        }
        if (i) os << ' ';
        os << name(id);
        prev = id;
        prev_content = id >= general_base;
      }
      os << '\n';
      remaining -= len;
      written += len;
    }
  }
  return written;
}

}  // namespace scrn

#endif  // SCRN_SYNTHETIC_CORPUS_HPP_
