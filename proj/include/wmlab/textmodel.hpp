#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "wmlab/prng.hpp"

namespace wmlab {

using TokenId = std::uint32_t;

// Natural-log scores, one per vocabulary entry.
using LogitVector = std::vector<double>;

struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  bool operator==(const Span&) const = default;
};

/// Word-level split: whitespace separates units and every ASCII punctuation
/// mark is a unit of its own. The literal "<unk>" survives as one unit so
/// detokenized unknowns re-tokenize to the unknown id.
struct WordSplit {
  std::vector<std::string> words;
  std::vector<Span> spans;  // byte offsets into the source
};

WordSplit split_words(std::string_view text);

// Joins units with single spaces, except no space before closing
// punctuation (. , ; : ! ? ) ] } %) and none after opening brackets.
std::string detokenize(std::span<const std::string> words);

class Vocabulary {
 public:
  static constexpr std::string_view kUnkToken = "<unk>";

  // Appends the unknown token when absent. Tokens must be distinct and the
  // result must hold at least two entries.
  explicit Vocabulary(std::vector<std::string> tokens);

  // Top `max_size` tokens by corpus frequency (ties lexicographic), then unk.
  static Vocabulary from_corpus(std::span<const std::string> documents,
                                std::size_t max_size = 8192);

  std::size_t size() const { return tokens_.size(); }
  TokenId unk_id() const { return unk_id_; }
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  // Unknown strings map to unk_id().
  TokenId id(std::string_view token) const;
  bool contains(std::string_view token) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  TokenId unk_id_ = 0;
};

struct TokenizedText {
  std::vector<TokenId> token_ids;
  std::vector<Span> spans;

  std::size_t size() const { return token_ids.size(); }
  bool empty() const { return token_ids.empty(); }
};

TokenizedText tokenize(std::string_view text, const Vocabulary& vocab);
std::string detokenize(std::span<const TokenId> ids, const Vocabulary& vocab);

/// Additively smoothed n-gram model with backoff to the longest seen
/// context suffix. P(w | c) = (count(c, w) + alpha) / (count(c) + alpha |V|).
class NGramModel {
 public:
  NGramModel(Vocabulary vocab, int order, double alpha);

  // One document per corpus entry. Throws DataError on an empty corpus.
  static NGramModel train(std::span<const std::string> corpus, int order,
                          double alpha, std::size_t max_vocab = 8192);

  const Vocabulary& vocab() const { return vocab_; }
  int order() const { return order_; }
  double alpha() const { return alpha_; }

  // Only the last order-1 tokens of `context` are consulted.
  LogitVector next_logits(std::span<const TokenId> context) const;
  double log_prob(std::span<const TokenId> context, TokenId token) const;

  // Versioned JSON. save(load(f)) reproduces f byte for byte.
  std::string to_json() const;
  static NGramModel from_json(std::string_view json);
  void save(const std::filesystem::path& path) const;
  static NGramModel load(const std::filesystem::path& path);

 private:
  struct ContextStats {
    std::uint64_t total = 0;
    std::vector<std::pair<TokenId, std::uint64_t>> next;  // sorted by id
  };

  struct ContextHash {
    std::size_t operator()(const std::vector<TokenId>& ctx) const;
  };

  void add_count(const std::vector<TokenId>& ctx, TokenId token,
                 std::uint64_t count);
  void finalize();
  const ContextStats& lookup(std::span<const TokenId> context) const;

  Vocabulary vocab_;
  int order_;
  double alpha_;
  std::unordered_map<std::vector<TokenId>, ContextStats, ContextHash> table_;
  ContextStats empty_;
};

LogitVector softmax(std::span<const double> logits);
LogitVector log_softmax(std::span<const double> logits);

// Shannon entropy of softmax(logits), in nats.
double entropy(std::span<const double> logits);

// exp(-mean log p(token_t | prefix)). `history` is prepended context that is
// conditioned on but not scored.
double perplexity(const NGramModel& model, std::span<const TokenId> tokens,
                  std::span<const TokenId> history = {});

// Multinomial draw from softmax(logits / temperature); advances `rng`.
TokenId sample(std::span<const double> logits, double temperature,
               PrngState& rng);

}  // namespace wmlab
