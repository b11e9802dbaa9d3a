#include "wmlab/textmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "json.hpp"
#include "wmlab/errors.hpp"

namespace wmlab {
namespace {

constexpr int kModelFormatVersion = 1;

bool is_ascii_punct(unsigned char c) {
  return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) ||
         (c >= 0x5B && c <= 0x60) || (c >= 0x7B && c <= 0x7E);
}

// Byte length of the whitespace character starting at text[i], or 0.
std::size_t whitespace_len(std::string_view text, std::size_t i) {
  auto byte = [&](std::size_t k) -> unsigned char {
    return i + k < text.size() ? static_cast<unsigned char>(text[i + k]) : 0;
  };
  unsigned char c = byte(0);
  if (c == ' ' || (c >= 0x09 && c <= 0x0D)) return 1;
  if (c == 0xC2 && (byte(1) == 0x85 || byte(1) == 0xA0)) return 2;
  if (c == 0xE1 && byte(1) == 0x9A && byte(2) == 0x80) return 3;
  if (c == 0xE2 && byte(1) == 0x80 &&
      ((byte(2) >= 0x80 && byte(2) <= 0x8A) || byte(2) == 0xA8 ||
       byte(2) == 0xA9 || byte(2) == 0xAF))
    return 3;
  if (c == 0xE2 && byte(1) == 0x81 && byte(2) == 0x9F) return 3;
  if (c == 0xE3 && byte(1) == 0x80 && byte(2) == 0x80) return 3;
  return 0;
}

bool closes(std::string_view w) {
  return w == "." || w == "," || w == ";" || w == ":" || w == "!" ||
         w == "?" || w == ")" || w == "]" || w == "}" || w == "%";
}

bool opens(std::string_view w) { return w == "(" || w == "[" || w == "{"; }

}  // namespace

WordSplit split_words(std::string_view text) {
  WordSplit out;
  std::size_t i = 0;
  std::size_t word_start = std::string_view::npos;
  auto flush = [&](std::size_t end) {
    if (word_start != std::string_view::npos) {
      out.words.emplace_back(text.substr(word_start, end - word_start));
      out.spans.push_back({word_start, end});
      word_start = std::string_view::npos;
    }
  };
  while (i < text.size()) {
    if (std::size_t ws = whitespace_len(text, i)) {
      flush(i);
      i += ws;
      continue;
    }
    if (text.compare(i, Vocabulary::kUnkToken.size(), Vocabulary::kUnkToken) ==
        0) {
      flush(i);
      out.words.emplace_back(Vocabulary::kUnkToken);
      out.spans.push_back({i, i + Vocabulary::kUnkToken.size()});
      i += Vocabulary::kUnkToken.size();
      continue;
    }
    auto c = static_cast<unsigned char>(text[i]);
    if (is_ascii_punct(c)) {
      flush(i);
      out.words.emplace_back(1, text[i]);
      out.spans.push_back({i, i + 1});
      ++i;
      continue;
    }
    if (word_start == std::string_view::npos) word_start = i;
    ++i;
  }
  flush(text.size());
  return out;
}

std::string detokenize(std::span<const std::string> words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i > 0 && !closes(words[i]) && !opens(words[i - 1])) out += ' ';
    out += words[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary(std::vector<std::string> tokens)
    : tokens_(std::move(tokens)) {
  if (std::find(tokens_.begin(), tokens_.end(), kUnkToken) == tokens_.end())
    tokens_.emplace_back(kUnkToken);
  require(tokens_.size() >= 2, "vocabulary needs at least two entries");
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    auto [it, inserted] =
        index_.emplace(tokens_[i], static_cast<TokenId>(i));
    require(inserted, "duplicate vocabulary token: " + tokens_[i]);
  }
  unk_id_ = index_.at(std::string(kUnkToken));
}

Vocabulary Vocabulary::from_corpus(std::span<const std::string> documents,
                                   std::size_t max_size) {
  std::unordered_map<std::string, std::uint64_t> freq;
  for (const auto& doc : documents)
    for (auto& w : split_words(doc).words) ++freq[w];
  freq.erase(std::string(kUnkToken));

  std::vector<std::pair<std::string, std::uint64_t>> ranked(freq.begin(),
                                                            freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (ranked.size() > max_size) ranked.resize(max_size);

  std::vector<std::string> tokens;
  tokens.reserve(ranked.size() + 1);
  for (auto& [w, _] : ranked) tokens.push_back(w);
  return Vocabulary(std::move(tokens));
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? unk_id_ : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.count(std::string(token)) > 0;
}

TokenizedText tokenize(std::string_view text, const Vocabulary& vocab) {
  WordSplit split = split_words(text);
  TokenizedText out;
  out.token_ids.reserve(split.words.size());
  for (const auto& w : split.words) out.token_ids.push_back(vocab.id(w));
  out.spans = std::move(split.spans);
  return out;
}

std::string detokenize(std::span<const TokenId> ids, const Vocabulary& vocab) {
  std::vector<std::string> words;
  words.reserve(ids.size());
  for (TokenId id : ids) words.push_back(vocab.token(id));
  return detokenize(words);
}

// ---------------------------------------------------------------------------
// NGramModel

std::size_t NGramModel::ContextHash::operator()(
    const std::vector<TokenId>& ctx) const {
  std::uint64_t h = ctx.size();
  for (TokenId t : ctx) h = mix64(h ^ t);
  return static_cast<std::size_t>(h);
}

NGramModel::NGramModel(Vocabulary vocab, int order, double alpha)
    : vocab_(std::move(vocab)), order_(order), alpha_(alpha) {
  require(order >= 1, "n-gram order must be >= 1");
  require(alpha > 0 && std::isfinite(alpha), "alpha must be positive");
}

NGramModel NGramModel::train(std::span<const std::string> corpus, int order,
                             double alpha, std::size_t max_vocab) {
  if (corpus.empty()) throw DataError("cannot train on an empty corpus");
  NGramModel model(Vocabulary::from_corpus(corpus, max_vocab), order, alpha);

  std::unordered_map<std::vector<TokenId>,
                     std::unordered_map<TokenId, std::uint64_t>, ContextHash>
      counts;
  for (const auto& doc : corpus) {
    auto ids = tokenize(doc, model.vocab_).token_ids;
    for (std::size_t t = 0; t < ids.size(); ++t) {
      std::size_t max_k = std::min<std::size_t>(order - 1, t);
      for (std::size_t k = 0; k <= max_k; ++k) {
        std::vector<TokenId> ctx(ids.begin() + (t - k), ids.begin() + t);
        ++counts[ctx][ids[t]];
      }
    }
  }
  for (auto& [ctx, next] : counts)
    for (auto& [tok, c] : next) model.add_count(ctx, tok, c);
  model.finalize();
  return model;
}

void NGramModel::add_count(const std::vector<TokenId>& ctx, TokenId token,
                           std::uint64_t count) {
  auto& stats = table_[ctx];
  stats.total += count;
  stats.next.emplace_back(token, count);
}

void NGramModel::finalize() {
  for (auto& [_, stats] : table_)
    std::sort(stats.next.begin(), stats.next.end());
}

const NGramModel::ContextStats& NGramModel::lookup(
    std::span<const TokenId> context) const {
  std::size_t k = std::min<std::size_t>(order_ - 1, context.size());
  std::vector<TokenId> key;
  for (;; --k) {
    key.assign(context.end() - k, context.end());
    auto it = table_.find(key);
    if (it != table_.end() && it->second.total > 0) return it->second;
    if (k == 0) break;
  }
  return empty_;
}

LogitVector NGramModel::next_logits(std::span<const TokenId> context) const {
  const ContextStats& stats = lookup(context);
  const double denom =
      static_cast<double>(stats.total) + alpha_ * static_cast<double>(vocab_.size());
  LogitVector out(vocab_.size(), std::log(alpha_ / denom));
  for (auto [tok, c] : stats.next)
    out[tok] = std::log((static_cast<double>(c) + alpha_) / denom);
  return out;
}

double NGramModel::log_prob(std::span<const TokenId> context,
                            TokenId token) const {
  const ContextStats& stats = lookup(context);
  const double denom =
      static_cast<double>(stats.total) + alpha_ * static_cast<double>(vocab_.size());
  auto it = std::lower_bound(
      stats.next.begin(), stats.next.end(), token,
      [](const auto& entry, TokenId t) { return entry.first < t; });
  double c = (it != stats.next.end() && it->first == token)
                 ? static_cast<double>(it->second)
                 : 0.0;
  return std::log((c + alpha_) / denom);
}

std::string NGramModel::to_json() const {
  using nlohmann::json;
  std::map<std::vector<TokenId>, const ContextStats*> ordered;
  for (const auto& [ctx, stats] : table_) ordered.emplace(ctx, &stats);

  json contexts = json::array();
  for (const auto& [ctx, stats] : ordered) {
    json next = json::array();
    for (auto [tok, c] : stats->next) next.push_back({tok, c});
    contexts.push_back({ctx, std::move(next)});
  }
  json doc = {
      {"format", "wmlab-ngram"},
      {"version", kModelFormatVersion},
      {"order", order_},
      {"alpha", alpha_},
      {"vocab", vocab_.tokens()},
      {"contexts", std::move(contexts)},
  };
  return doc.dump() + "\n";
}

NGramModel NGramModel::from_json(std::string_view text) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(text);
    if (doc.at("format") != "wmlab-ngram")
      throw DataError("not a wmlab n-gram model file");
    if (doc.at("version").get<int>() != kModelFormatVersion)
      throw DataError("unsupported model format version");
    NGramModel model(Vocabulary(doc.at("vocab").get<std::vector<std::string>>()),
                     doc.at("order").get<int>(), doc.at("alpha").get<double>());
    for (const auto& entry : doc.at("contexts")) {
      auto ctx = entry.at(0).get<std::vector<TokenId>>();
      for (const auto& pair : entry.at(1)) {
        auto tok = pair.at(0).get<TokenId>();
        if (tok >= model.vocab_.size())
          throw DataError("model token id out of range");
        model.add_count(ctx, tok, pair.at(1).get<std::uint64_t>());
      }
    }
    model.finalize();
    return model;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed model file: ") + e.what());
  }
}

void NGramModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json();
}

NGramModel NGramModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

// ---------------------------------------------------------------------------
// Distribution helpers

LogitVector log_softmax(std::span<const double> logits) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : logits) m = std::max(m, v);
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - m);
  const double lse = m + std::log(sum);
  LogitVector out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

LogitVector softmax(std::span<const double> logits) {
  LogitVector out = log_softmax(logits);
  for (double& v : out) v = std::exp(v);
  return out;
}

double entropy(std::span<const double> logits) {
  LogitVector lp = log_softmax(logits);
  double h = 0.0;
  for (double l : lp) {
    double p = std::exp(l);
    if (p > 0.0) h -= p * l;
  }
  return std::max(0.0, h);
}

double perplexity(const NGramModel& model, std::span<const TokenId> tokens,
                  std::span<const TokenId> history) {
  if (tokens.empty()) throw DataError("perplexity of empty text");
  std::vector<TokenId> context(history.begin(), history.end());
  double total = 0.0;
  for (TokenId t : tokens) {
    total += model.log_prob(context, t);
    context.push_back(t);
  }
  return std::exp(-total / static_cast<double>(tokens.size()));
}

TokenId sample(std::span<const double> logits, double temperature,
               PrngState& rng) {
  require(temperature > 0, "temperature must be positive");
  LogitVector scaled(logits.begin(), logits.end());
  for (double& v : scaled) v /= temperature;
  LogitVector p = softmax(scaled);
  const double u = rng.next_unit();
  double cum = 0.0;
  TokenId last_nonzero = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    cum += p[i];
    last_nonzero = static_cast<TokenId>(i);
    if (u < cum) return last_nonzero;
  }
  return last_nonzero;
}

}  // namespace wmlab
