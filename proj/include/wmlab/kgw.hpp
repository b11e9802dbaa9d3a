#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "wmlab/prng.hpp"
#include "wmlab/textmodel.hpp"
#include "wmlab/watermark.hpp"

namespace wmlab {

enum class KgwVariant { kPlain, kSweet, kEwd };

struct KgwConfig {
  double gamma = 0.5;
  double delta = 2.0;
  SeedContext seed_context;  // prefix_length 0 is the Unigram scheme
  double z_threshold = 4.0;
  KgwVariant variant = KgwVariant::kPlain;
  double entropy_threshold = 0.0;  // nats, sweet only

  void validate() const;
};

struct GreenList {
  std::vector<bool> membership;
  std::size_t green_count = 0;

  bool is_green(TokenId id) const { return membership[id]; }
};

// floor(gamma * vocab_size), robust to representation error in the product.
std::size_t green_list_size(std::size_t vocab_size, double gamma);

// Fisher-Yates over 0..vocab_size-1 driven by PrngState{seed}; the first
// green_list_size() shuffled indices are green.
GreenList partition_vocab(std::uint64_t seed, std::size_t vocab_size,
                          double gamma);

// logits + delta on green entries. Sweet leaves low-entropy steps untouched.
LogitVector process_logits(const KgwConfig& cfg,
                           std::span<const TokenId> context,
                           std::span<const double> logits);

// (green - gamma T) / sqrt(T gamma (1 - gamma))
double kgw_z_score(double green, double scored, double gamma);

struct KgwTokenEvidence {
  TokenId token = 0;
  bool scored = false;
  bool is_green = false;
  double weight = 0.0;  // 1 for plain/sweet, normalized entropy for ewd
};

struct KgwDetection {
  double z_score = 0.0;
  std::size_t green_count = 0;
  std::size_t scored_T = 0;
  double weighted_green = 0.0;
  double weight_sum = 0.0;
  double weight_sq_sum = 0.0;
  bool is_watermarked = false;
  std::vector<KgwTokenEvidence> per_token;
};

// Throws InsufficientText when fewer than two positions are scorable.
KgwDetection kgw_detect(const KgwConfig& cfg, std::span<const TokenId> tokens,
                        const NGramModel& model);
KgwDetection kgw_detect(const KgwConfig& cfg, std::string_view text,
                        const NGramModel& model);

VisualizationData kgw_visualization_data(const KgwConfig& cfg,
                                         std::string_view text,
                                         const NGramModel& model);

class KgwWatermark : public Watermark {
 public:
  KgwWatermark(AlgorithmName name, KgwConfig cfg,
               std::shared_ptr<const NGramModel> model);

  // Missing keys take the per-algorithm defaults; the sweet entropy
  // threshold defaults to half the maximum entropy ln|V|.
  static std::unique_ptr<KgwWatermark> from_json(
      AlgorithmName name, const nlohmann::json& config,
      std::shared_ptr<const NGramModel> model);

  AlgorithmName algorithm() const override { return name_; }
  ScoreOrientation orientation() const override {
    return ScoreOrientation::kHigherIsWatermarked;
  }
  const KgwConfig& config() const { return cfg_; }

  std::vector<TokenId> generate_watermarked_ids(
      std::span<const TokenId> prompt, std::size_t max_tokens,
      std::uint64_t seed) const override;
  DetectionResult detect(std::string_view text) const override;
  VisualizationData visualization_data(std::string_view text) const override;
  nlohmann::json config_json() const override;

 private:
  AlgorithmName name_;
  KgwConfig cfg_;
};

}  // namespace wmlab
