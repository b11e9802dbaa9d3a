#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wmlab/chat_client.hpp"
#include "wmlab/textmodel.hpp"

namespace wmlab {

/// word -> synonyms, keyed by lowercase word. Loaded from a JSON object of
/// string arrays; a word listed as its own sole synonym is rejected.
class SynonymLexicon {
 public:
  SynonymLexicon() = default;
  explicit SynonymLexicon(std::map<std::string, std::vector<std::string>> entries);

  static SynonymLexicon from_json(const nlohmann::json& j);
  static SynonymLexicon load(const std::filesystem::path& path);

  // Case-normalized lookup; nullptr when absent.
  const std::vector<std::string>* find(std::string_view word) const;
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::string, std::vector<std::string>> entries_;
};

// Number of positions touched for a ratio over n candidates: ceil(ratio n),
// tolerant of floating-point error in the product.
std::size_t attacked_count(double ratio, std::size_t n);

// Removes exactly attacked_count(ratio, N) word units, order preserved.
std::string word_deletion(std::string_view text, double ratio, std::uint64_t seed);

// Replaces attacked_count(ratio, K) of the K lexicon-covered words with a
// uniformly chosen synonym different from the original.
std::string synonym_substitution(std::string_view text, double ratio,
                                 std::uint64_t seed, const SynonymLexicon& lexicon);

// Same positions as synonym_substitution; the replacement is the synonym
// maximizing the model log-probability of the window it participates in.
std::string context_aware_substitution(std::string_view text, double ratio,
                                       std::uint64_t seed,
                                       const SynonymLexicon& lexicon,
                                       const NGramModel& model);

// {text} must occur exactly once in the template.
void validate_paraphrase_endpoint(const ChatEndpointConfig& cfg);

// Throws AttackUnavailable on any endpoint failure.
std::string external_paraphrase(std::string_view text, const ChatClient& client);

enum class AttackKind {
  kWordDeletion,
  kSynonymSubstitution,
  kContextAwareSynonymSubstitution,
  kExternalParaphrase,
};

// Word-D, Word-S, Word-S-Context, Doc-P.
AttackKind parse_attack_kind(std::string_view name);
std::string_view attack_flag_name(AttackKind kind);

struct AttackSpec {
  AttackKind kind = AttackKind::kWordDeletion;
  double ratio = 0.3;
  std::uint64_t rng_seed = 0;
  std::shared_ptr<const SynonymLexicon> lexicon;  // substitution kinds
  std::shared_ptr<const NGramModel> model;        // context-aware kind
  std::shared_ptr<const ChatClient> endpoint;     // external kind

  void validate() const;
  // Per-sample seeds are derived from rng_seed and the sample index.
  std::string apply(std::string_view text, std::size_t sample_index) const;
  nlohmann::json to_json() const;
};

}  // namespace wmlab
