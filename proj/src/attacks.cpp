#include "wmlab/attacks.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "wmlab/errors.hpp"
#include "wmlab/prng.hpp"

namespace wmlab {
namespace {

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Keeps a leading capital when the original word had one.
std::string match_case(const std::string& original, std::string replacement) {
  if (!original.empty() && !replacement.empty() &&
      std::isupper(static_cast<unsigned char>(original[0])))
    replacement[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(replacement[0])));
  return replacement;
}

// k distinct indices out of n, uniformly, via a partial Fisher-Yates shuffle.
std::vector<std::size_t> choose_positions(std::size_t n, std::size_t k, PrngState& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + rng.next_below(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

void check_ratio(double ratio) {
  require(ratio >= 0.0 && ratio <= 1.0, "attack ratio must lie in [0, 1]");
}

std::vector<std::string> candidates_for(const SynonymLexicon& lexicon,
                                        const std::string& word) {
  std::vector<std::string> out;
  if (const auto* syns = lexicon.find(word)) {
    const std::string lower = lowercase(word);
    for (const auto& s : *syns)
      if (lowercase(s) != lower) out.push_back(s);
  }
  return out;
}

// Eligible word positions and the positions chosen for substitution.
std::vector<std::size_t> substitution_targets(const std::vector<std::string>& words,
                                              double ratio, PrngState& rng,
                                              const SynonymLexicon& lexicon) {
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < words.size(); ++i)
    if (!candidates_for(lexicon, words[i]).empty()) eligible.push_back(i);
  std::vector<std::size_t> picks =
      choose_positions(eligible.size(), attacked_count(ratio, eligible.size()), rng);
  for (auto& p : picks) p = eligible[p];
  return picks;
}

}  // namespace

SynonymLexicon::SynonymLexicon(std::map<std::string, std::vector<std::string>> entries) {
  for (auto& [word, syns] : entries) {
    const std::string key = lowercase(word);
    if (syns.empty()) throw DataError("lexicon entry \"" + word + "\" has no synonyms");
    if (syns.size() == 1 && lowercase(syns[0]) == key)
      throw DataError("lexicon entry \"" + word + "\" is its own sole synonym");
    auto& slot = entries_[key];
    slot.insert(slot.end(), syns.begin(), syns.end());
  }
}

SynonymLexicon SynonymLexicon::from_json(const nlohmann::json& j) {
  try {
    return SynonymLexicon(j.get<std::map<std::string, std::vector<std::string>>>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed lexicon: ") + e.what());
  }
}

SynonymLexicon SynonymLexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read lexicon " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("malformed lexicon " + path.string() + ": " + e.what());
  }
}

const std::vector<std::string>* SynonymLexicon::find(std::string_view word) const {
  auto it = entries_.find(lowercase(word));
  return it == entries_.end() ? nullptr : &it->second;
}

std::size_t attacked_count(double ratio, std::size_t n) {
  check_ratio(ratio);
  const double exact = ratio * static_cast<double>(n);
  auto k = static_cast<std::size_t>(std::ceil(exact - 1e-9));
  return std::min(k, n);
}

std::string word_deletion(std::string_view text, double ratio, std::uint64_t seed) {
  std::vector<std::string> words = split_words(text).words;
  PrngState rng{seed};
  std::vector<std::size_t> drop =
      choose_positions(words.size(), attacked_count(ratio, words.size()), rng);
  std::vector<std::string> kept;
  kept.reserve(words.size() - drop.size());
  std::size_t d = 0;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (d < drop.size() && drop[d] == i) {
      ++d;
      continue;
    }
    kept.push_back(std::move(words[i]));
  }
  return detokenize(kept);
}

std::string synonym_substitution(std::string_view text, double ratio, std::uint64_t seed,
                                 const SynonymLexicon& lexicon) {
  std::vector<std::string> words = split_words(text).words;
  PrngState rng{seed};
  for (std::size_t pos : substitution_targets(words, ratio, rng, lexicon)) {
    auto cands = candidates_for(lexicon, words[pos]);
    words[pos] = match_case(words[pos], cands[rng.next_below(cands.size())]);
  }
  return detokenize(words);
}

std::string context_aware_substitution(std::string_view text, double ratio,
                                       std::uint64_t seed, const SynonymLexicon& lexicon,
                                       const NGramModel& model) {
  std::vector<std::string> words = split_words(text).words;
  PrngState rng{seed};
  const auto span = static_cast<std::size_t>(model.order() - 1);
  std::vector<TokenId> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(model.vocab().id(w));

  for (std::size_t pos : substitution_targets(words, ratio, rng, lexicon)) {
    auto cands = candidates_for(lexicon, words[pos]);
    const std::size_t lo = pos >= span ? pos - span : 0;
    const std::size_t hi = std::min(ids.size(), pos + span + 1);
    double best_score = -std::numeric_limits<double>::infinity();
    std::size_t best = 0;
    for (std::size_t c = 0; c < cands.size(); ++c) {
      std::vector<TokenId> window(ids.begin() + static_cast<std::ptrdiff_t>(lo),
                                  ids.begin() + static_cast<std::ptrdiff_t>(hi));
      window[pos - lo] = model.vocab().id(match_case(words[pos], cands[c]));
      double score = 0.0;
      for (std::size_t j = pos - lo; j < window.size(); ++j)
        score += model.log_prob(std::span(window).first(j), window[j]);
      if (score > best_score) {
        best_score = score;
        best = c;
      }
    }
    words[pos] = match_case(words[pos], cands[best]);
    ids[pos] = model.vocab().id(words[pos]);
  }
  return detokenize(words);
}

void validate_paraphrase_endpoint(const ChatEndpointConfig& cfg) {
  const std::string& t = cfg.prompt_template;
  const auto first = t.find("{text}");
  if (first == std::string::npos || t.find("{text}", first + 1) != std::string::npos)
    throw ConfigError("endpoint.prompt_template", "must contain {text} exactly once");
}

std::string external_paraphrase(std::string_view text, const ChatClient& client) {
  validate_paraphrase_endpoint(client.config());
  return client.complete(
      render_template(client.config().prompt_template, {{"text", std::string(text)}}));
}

AttackKind parse_attack_kind(std::string_view name) {
  if (name == "Word-D") return AttackKind::kWordDeletion;
  if (name == "Word-S") return AttackKind::kSynonymSubstitution;
  if (name == "Word-S-Context") return AttackKind::kContextAwareSynonymSubstitution;
  if (name == "Doc-P" || (name.starts_with("Doc-P(") && name.ends_with(")")))
    return AttackKind::kExternalParaphrase;
  throw Error(ErrorCode::kInvalidArgument, "unknown attack: " + std::string(name));
}

std::string_view attack_flag_name(AttackKind kind) {
  switch (kind) {
    case AttackKind::kWordDeletion: return "Word-D";
    case AttackKind::kSynonymSubstitution: return "Word-S";
    case AttackKind::kContextAwareSynonymSubstitution: return "Word-S-Context";
    case AttackKind::kExternalParaphrase: return "Doc-P";
  }
  return "?";
}

void AttackSpec::validate() const {
  switch (kind) {
    case AttackKind::kExternalParaphrase:
      if (!endpoint) throw AttackUnavailable("Doc-P needs an endpoint configuration");
      validate_paraphrase_endpoint(endpoint->config());
      return;
    case AttackKind::kContextAwareSynonymSubstitution:
      require(model != nullptr, "Word-S-Context needs a language model");
      [[fallthrough]];
    case AttackKind::kSynonymSubstitution:
      require(lexicon != nullptr, "substitution attacks need a lexicon");
      [[fallthrough]];
    case AttackKind::kWordDeletion:
      check_ratio(ratio);
  }
}

std::string AttackSpec::apply(std::string_view text, std::size_t sample_index) const {
  const std::uint64_t seed = derive_seed(rng_seed, sample_index);
  switch (kind) {
    case AttackKind::kWordDeletion: return word_deletion(text, ratio, seed);
    case AttackKind::kSynonymSubstitution:
      return synonym_substitution(text, ratio, seed, *lexicon);
    case AttackKind::kContextAwareSynonymSubstitution:
      return context_aware_substitution(text, ratio, seed, *lexicon, *model);
    case AttackKind::kExternalParaphrase: return external_paraphrase(text, *endpoint);
  }
  return std::string(text);
}

nlohmann::json AttackSpec::to_json() const {
  nlohmann::json j = {{"attack", std::string(attack_flag_name(kind))}};
  if (kind == AttackKind::kExternalParaphrase) {
    j["endpoint"] = endpoint ? endpoint->config().base_url + endpoint->config().path : "";
  } else {
    j["ratio"] = ratio;
    j["seed"] = rng_seed;
  }
  return j;
}

}  // namespace wmlab
