#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "wmlab/prng.hpp"
#include "wmlab/textmodel.hpp"
#include "wmlab/watermark.hpp"

namespace wmlab {

// Upper regularized incomplete gamma Q(a, x), a > 0, x >= 0.
double gamma_q(double a, double x);

struct ExpConfig {
  SeedContext seed_context;
  double p_threshold = 0.01;
  double temperature = 1.0;

  void validate() const;
};

// argmax_i ln(r_i) / p_i with r the PRNG stream seeded from the context and
// p = softmax(logits / temperature).
TokenId exp_sample(const ExpConfig& cfg, std::span<const TokenId> context,
                   std::span<const double> logits);

struct ChristDetection {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t scored_T = 0;
  std::vector<double> per_token_alignment;  // one per scored token
  std::vector<bool> scored;                 // one per input token
  bool is_watermarked = false;
};

// S = sum -ln(1 - r_t) over scored positions, p = Q(T, S).
ChristDetection exp_detect(const ExpConfig& cfg,
                           std::span<const TokenId> tokens);
ChristDetection exp_detect(const ExpConfig& cfg, std::string_view text,
                           const Vocabulary& vocab);

/// Fixed n x |V| key matrix of uniforms from the stream of key_seed. Values
/// are computed on demand from their flat stream index.
struct EditKey {
  std::uint64_t key_seed = 0;
  std::size_t length = 64;
  std::size_t vocab_size = 0;

  double value(std::size_t row, TokenId token) const {
    return unit_at(key_seed, static_cast<std::uint64_t>(row) * vocab_size + token);
  }
};

struct ExpEditConfig {
  EditKey key;
  double gamma_edit = 0.4;
  std::size_t permutations = 99;
  // Strict p < threshold, so it must exceed 1 / (permutations + 1).
  double p_threshold = 0.05;
  // Match-cost scale: cost = clamp(1 - (-ln(1 - xi)) / scale, 0, 1).
  double match_scale = 5.0;

  void validate() const;
};

std::size_t exp_edit_start_offset(const EditKey& key, std::uint64_t offset_seed);

std::vector<TokenId> exp_edit_generate_ids(const ExpEditConfig& cfg,
                                           const NGramModel& model,
                                           std::span<const TokenId> prompt,
                                           std::size_t max_tokens,
                                           std::uint64_t offset_seed);
std::string exp_edit_generate(const ExpEditConfig& cfg, const NGramModel& model,
                              std::string_view prompt, std::size_t max_tokens,
                              std::uint64_t offset_seed);

struct EditAlignment {
  double cost = 0.0;
  std::size_t offset = 0;
  std::vector<double> per_token;  // aligned key value, 0 for gap tokens
};

// Minimum over start offsets of the Levenshtein-style alignment cost between
// the tokens and the key window of equal length.
double exp_edit_alignment_cost(const EditKey& key, std::span<const TokenId> tokens,
                               double gamma_edit, double match_scale);
EditAlignment exp_edit_align(const EditKey& key, std::span<const TokenId> tokens,
                             double gamma_edit, double match_scale);

// Key of the k-th permutation-test draw (k >= 1); depends only on the real
// key seed and k, so serial and parallel runs agree.
EditKey permutation_key(const EditKey& key, std::size_t k);

// jobs > 1 spreads the permutation test across threads.
ChristDetection exp_edit_detect(const ExpEditConfig& cfg,
                                std::span<const TokenId> tokens,
                                unsigned jobs = 1);
ChristDetection exp_edit_detect(const ExpEditConfig& cfg, std::string_view text,
                                const Vocabulary& vocab, unsigned jobs = 1);

VisualizationData christ_visualization_data(const ChristDetection& det,
                                            std::span<const TokenId> tokens,
                                            const Vocabulary& vocab);

class ExpWatermark : public Watermark {
 public:
  ExpWatermark(ExpConfig cfg, std::shared_ptr<const NGramModel> model);
  static std::unique_ptr<ExpWatermark> from_json(
      const nlohmann::json& config, std::shared_ptr<const NGramModel> model);

  AlgorithmName algorithm() const override { return AlgorithmName::kEXP; }
  ScoreOrientation orientation() const override {
    return ScoreOrientation::kLowerIsWatermarked;
  }
  const ExpConfig& config() const { return cfg_; }

  // The EXP rule is a deterministic function of key and context, so `seed`
  // does not influence the watermarked output.
  std::vector<TokenId> generate_watermarked_ids(
      std::span<const TokenId> prompt, std::size_t max_tokens,
      std::uint64_t seed) const override;
  DetectionResult detect(std::string_view text) const override;
  VisualizationData visualization_data(std::string_view text) const override;
  nlohmann::json config_json() const override;

 protected:
  double sampling_temperature() const override { return cfg_.temperature; }

 private:
  ExpConfig cfg_;
};

class ExpEditWatermark : public Watermark {
 public:
  ExpEditWatermark(ExpEditConfig cfg, std::shared_ptr<const NGramModel> model);
  static std::unique_ptr<ExpEditWatermark> from_json(
      const nlohmann::json& config, std::shared_ptr<const NGramModel> model);

  AlgorithmName algorithm() const override { return AlgorithmName::kEXPEdit; }
  ScoreOrientation orientation() const override {
    return ScoreOrientation::kLowerIsWatermarked;
  }
  const ExpEditConfig& config() const { return cfg_; }

  // `seed` picks the random start offset into the key.
  std::vector<TokenId> generate_watermarked_ids(
      std::span<const TokenId> prompt, std::size_t max_tokens,
      std::uint64_t seed) const override;
  DetectionResult detect(std::string_view text) const override;
  VisualizationData visualization_data(std::string_view text) const override;
  nlohmann::json config_json() const override;

 private:
  ExpEditConfig cfg_;
};

}  // namespace wmlab
