#ifndef SCRN_CORPUS_HPP_
#define SCRN_CORPUS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace scrn {

using TokenId = std::uint32_t;

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::string_view kUnkToken = "<unk>";
inline constexpr std::string_view kEosToken = "</s>";

// Token <-> id bijection. Ids are assigned in descending count order, ties
// broken by byte-wise token order.
class Vocabulary {
 public:
  Vocabulary() = default;

  // Builds from (token, count) pairs; the pairs are re-sorted. `<unk>` is
  // added with count 0 if missing.
  static Vocabulary from_counts(std::vector<std::pair<std::string, std::uint64_t>> entries) {
    bool has_unk = false;
    for (auto& e : entries) has_unk |= e.first == kUnkToken;
    if (!has_unk) entries.emplace_back(std::string(kUnkToken), 0);
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    Vocabulary v;
    for (auto& [tok, cnt] : entries) v.append(std::move(tok), cnt);
    return v;
  }

  // Keeps the given order exactly (used when reading a vocabulary file).
  static Vocabulary from_ordered(std::vector<std::pair<std::string, std::uint64_t>> entries) {
    Vocabulary v;
    for (auto& [tok, cnt] : entries) v.append(std::move(tok), cnt);
    if (!v.index_.contains(std::string(kUnkToken)))
      throw CorpusError("vocabulary has no " + std::string(kUnkToken) + " entry");
    return v;
  }

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  std::uint64_t count(TokenId id) const { return counts_.at(id); }
  const std::vector<std::uint64_t>& counts() const { return counts_; }
  const std::vector<std::string>& tokens() const { return tokens_; }
  TokenId unk_id() const { return unk_id_; }
  std::optional<TokenId> eos_id() const { return eos_id_; }

  std::optional<TokenId> find(std::string_view tok) const {
    auto it = index_.find(std::string(tok));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  TokenId lookup(std::string_view tok) const { return find(tok).value_or(unk_id_); }

  // One `token<TAB>count` line per id.
  void save(std::ostream& os) const {
    for (std::size_t i = 0; i < tokens_.size(); ++i) os << tokens_[i] << '\t' << counts_[i] << '\n';
  }
  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw CorpusError("cannot write vocabulary file: " + path);
    save(os);
  }

  static Vocabulary load(std::istream& is) {
    std::vector<std::pair<std::string, std::uint64_t>> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto tab = line.rfind('\t');
      if (tab == std::string::npos || tab == 0)
        throw CorpusError("malformed vocabulary line " + std::to_string(lineno));
      std::uint64_t cnt = 0;
      try {
        cnt = std::stoull(line.substr(tab + 1));
      } catch (const std::exception&) {
        throw CorpusError("malformed count on vocabulary line " + std::to_string(lineno));
      }
      entries.emplace_back(line.substr(0, tab), cnt);
    }
    if (entries.empty()) throw CorpusError("empty vocabulary file");
    return from_ordered(std::move(entries));
  }
  static Vocabulary load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CorpusError("cannot open vocabulary file: " + path);
    return load(is);
  }

  // 64-bit FNV-1a over the serialized file contents.
  std::uint64_t content_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](std::string_view s) {
      for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
      }
    };
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      feed(tokens_[i]);
      feed("\t");
      feed(std::to_string(counts_[i]));
      feed("\n");
    }
    return h;
  }

 private:
  void append(std::string tok, std::uint64_t cnt) {
    const auto id = static_cast<TokenId>(tokens_.size());
    if (!index_.emplace(tok, id).second) throw CorpusError("duplicate vocabulary token: " + tok);
    if (tok == kUnkToken) unk_id_ = id;
    if (tok == kEosToken) eos_id_ = id;
    tokens_.push_back(std::move(tok));
    counts_.push_back(cnt);
  }

  std::vector<std::string> tokens_;
  std::vector<std::uint64_t> counts_;
  std::unordered_map<std::string, TokenId> index_;
  TokenId unk_id_ = 0;
  std::optional<TokenId> eos_id_;
};

namespace detail {

// Calls fn(token) for every whitespace-separated token and fn(eos) after
// every line when add_eos is set.
template <class Fn>
void for_each_token(std::istream& is, bool add_eos, Fn&& fn) {
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string tok;
    bool any = false;
    while (ls >> tok) {
      fn(std::string_view(tok));
      any = true;
    }
    if (add_eos && any) fn(kEosToken);
  }
}

}  // namespace detail

// Counts tokens; anything seen fewer than min_count times is folded into
// <unk>. Blank lines do not produce an end-of-sentence token.
inline Vocabulary build_vocab(std::istream& is, std::uint64_t min_count, bool add_eos) {
  if (min_count < 1) throw CorpusError("min_count must be >= 1");
  std::unordered_map<std::string, std::uint64_t> counts;
  std::uint64_t total = 0;
  detail::for_each_token(is, add_eos, [&](std::string_view tok) {
    ++counts[std::string(tok)];
    ++total;
  });
  if (total == 0) throw CorpusError("cannot build a vocabulary from empty input");

  std::uint64_t unk_count = 0;
  std::vector<std::pair<std::string, std::uint64_t>> kept;
  for (auto& [tok, cnt] : counts) {
    const bool special = tok == kEosToken;
    if (tok == kUnkToken) {
      unk_count += cnt;
    } else if (cnt >= min_count || special) {
      kept.emplace_back(tok, cnt);
    } else {
      unk_count += cnt;
    }
  }
  kept.emplace_back(std::string(kUnkToken), unk_count);
  return Vocabulary::from_counts(std::move(kept));
}

inline Vocabulary build_vocab_from_file(const std::string& path, std::uint64_t min_count,
                                        bool add_eos) {
  std::ifstream is(path);
  if (!is) throw CorpusError("cannot open text file: " + path);
  return build_vocab(is, min_count, add_eos);
}

// End-of-sentence tokens are emitted iff the vocabulary contains one.
inline std::vector<TokenId> encode(std::istream& is, const Vocabulary& vocab) {
  std::vector<TokenId> ids;
  detail::for_each_token(is, vocab.eos_id().has_value(),
                         [&](std::string_view tok) { ids.push_back(vocab.lookup(tok)); });
  return ids;
}

inline std::vector<TokenId> encode(std::string_view text, const Vocabulary& vocab) {
  std::istringstream is{std::string(text)};
  return encode(is, vocab);
}

inline std::vector<TokenId> encode_file(const std::string& path, const Vocabulary& vocab) {
  std::ifstream is(path);
  if (!is) throw CorpusError("cannot open text file: " + path);
  return encode(is, vocab);
}

// Tokens joined by single spaces; an end-of-sentence token ends the line.
inline std::string decode(const std::vector<TokenId>& ids, const Vocabulary& vocab) {
  std::string out;
  bool line_start = true;
  for (TokenId id : ids) {
    if (vocab.eos_id() && id == *vocab.eos_id()) {
      out += '\n';
      line_start = true;
      continue;
    }
    if (!line_start) out += ' ';
    out += vocab.token(id);
    line_start = false;
  }
  return out;
}

// S parallel contiguous slices of the corpus, each of length T = floor(n/S).
class StreamSet {
 public:
  StreamSet() = default;
  StreamSet(std::size_t num_streams, std::size_t length, std::vector<TokenId> ids)
      : num_streams_(num_streams), length_(length), ids_(std::move(ids)) {}

  std::size_t num_streams() const { return num_streams_; }
  std::size_t length() const { return length_; }
  TokenId at(std::size_t stream, std::size_t t) const { return ids_[stream * length_ + t]; }
  std::span<const TokenId> stream(std::size_t s) const {
    return {ids_.data() + s * length_, length_};
  }

 private:
  std::size_t num_streams_ = 0;
  std::size_t length_ = 0;
  std::vector<TokenId> ids_;
};

inline StreamSet make_streams(std::span<const TokenId> ids, std::size_t num_streams) {
  if (num_streams == 0) throw CorpusError("make_streams: number of streams must be > 0");
  if (ids.size() < num_streams)
    throw CorpusError("make_streams: corpus shorter than the number of streams");
  const std::size_t len = ids.size() / num_streams;
  return StreamSet(num_streams, len, std::vector<TokenId>(ids.begin(), ids.begin() + len * num_streams));
}

// Two-level partition of the vocabulary into frequency bins.
struct ClassLayout {
  std::vector<std::uint32_t> class_of;
  std::vector<std::uint32_t> within_class_index;
  std::vector<std::vector<TokenId>> class_members;

  std::size_t num_classes() const { return class_members.size(); }
  std::size_t vocab_size() const { return class_of.size(); }
};

// Greedy sweep over tokens in descending count order. A class is closed once
// its own cumulative count reaches total/K, or when the remaining tokens are
// only just enough to give each remaining class one member. The last class
// takes whatever is left, so exactly K classes are non-empty.
inline ClassLayout build_frequency_classes(std::span<const std::uint64_t> counts, std::size_t k) {
  const std::size_t d = counts.size();
  if (k < 1) throw CorpusError("number of classes must be >= 1");
  if (k > d) throw CorpusError("number of classes exceeds vocabulary size");

  std::vector<TokenId> order(d);
  for (std::size_t i = 0; i < d; ++i) order[i] = static_cast<TokenId>(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](TokenId a, TokenId b) { return counts[a] > counts[b]; });

  long double total = 0;
  for (auto c : counts) total += static_cast<long double>(c);
  const long double target = total / static_cast<long double>(k);

  ClassLayout layout;
  layout.class_of.assign(d, 0);
  layout.within_class_index.assign(d, 0);
  layout.class_members.assign(k, {});
  std::size_t cls = 0;
  long double cum = 0;
  for (std::size_t i = 0; i < d; ++i) {
    const TokenId tok = order[i];
    layout.class_of[tok] = static_cast<std::uint32_t>(cls);
    layout.within_class_index[tok] = static_cast<std::uint32_t>(layout.class_members[cls].size());
    layout.class_members[cls].push_back(tok);
    cum += static_cast<long double>(counts[tok]);
    const std::size_t tokens_left = d - i - 1;
    const std::size_t classes_left = k - 1 - cls;
    if (classes_left > 0 && (cum >= target || tokens_left == classes_left)) {
      ++cls;
      cum = 0;
    }
  }
  return layout;
}

inline ClassLayout build_frequency_classes(const Vocabulary& vocab, std::size_t k) {
  return build_frequency_classes(std::span<const std::uint64_t>(vocab.counts()), k);
}

inline std::size_t default_num_classes(std::size_t vocab_size) {
  return static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(vocab_size))));
}

}  // namespace scrn

#endif  // SCRN_CORPUS_HPP_
