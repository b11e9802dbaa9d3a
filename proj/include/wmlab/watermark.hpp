#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "wmlab/textmodel.hpp"
#include "wmlab/visualization_data.hpp"

namespace wmlab {

enum class AlgorithmName { kKGW, kUnigram, kSWEET, kEWD, kEXP, kEXPEdit };

inline constexpr AlgorithmName kAllAlgorithms[] = {
    AlgorithmName::kKGW, AlgorithmName::kUnigram, AlgorithmName::kSWEET,
    AlgorithmName::kEWD, AlgorithmName::kEXP,     AlgorithmName::kEXPEdit};

// Throws NameError for anything outside the closed set.
AlgorithmName parse_algorithm(std::string_view name);
std::string_view to_string(AlgorithmName name);

enum class Family { kKgw, kChrist };
Family family_of(AlgorithmName name);

enum class ScoreOrientation { kHigherIsWatermarked, kLowerIsWatermarked };

// Family-neutral verdict. `score` is the z-score for the KGW family and the
// p-value for the Christ family.
struct DetectionResult {
  AlgorithmName algorithm = AlgorithmName::kKGW;
  double score = 0.0;
  double threshold = 0.0;
  ScoreOrientation orientation = ScoreOrientation::kHigherIsWatermarked;
  bool is_watermarked = false;
  std::size_t scored_tokens = 0;
  // Raw test statistic: z for KGW, S for EXP, -A for EXP-Edit.
  double statistic = 0.0;
};

nlohmann::json to_json(const DetectionResult& r);

/// A loaded watermarking scheme bound to its language model. Instances are
/// immutable; every call owns its own PRNG state, so one instance can serve
/// concurrent callers.
class Watermark {
 public:
  virtual ~Watermark() = default;

  virtual AlgorithmName algorithm() const = 0;
  virtual ScoreOrientation orientation() const = 0;

  // Continuation token ids only; the prompt is never part of the result.
  virtual std::vector<TokenId> generate_watermarked_ids(
      std::span<const TokenId> prompt, std::size_t max_tokens,
      std::uint64_t seed) const = 0;
  std::vector<TokenId> generate_unwatermarked_ids(
      std::span<const TokenId> prompt, std::size_t max_tokens,
      std::uint64_t seed) const;

  std::string generate_watermarked(std::string_view prompt,
                                   std::size_t max_tokens,
                                   std::uint64_t seed = 0) const;
  std::string generate_unwatermarked(std::string_view prompt,
                                     std::size_t max_tokens,
                                     std::uint64_t seed = 0) const;

  virtual DetectionResult detect(std::string_view text) const = 0;
  virtual VisualizationData visualization_data(std::string_view text) const = 0;

  // Resolved parameters, echoed into reports.
  virtual nlohmann::json config_json() const = 0;

  const NGramModel& model() const { return *model_; }
  std::shared_ptr<const NGramModel> model_ptr() const { return model_; }

 protected:
  explicit Watermark(std::shared_ptr<const NGramModel> model);

  virtual double sampling_temperature() const { return 1.0; }

  std::shared_ptr<const NGramModel> model_;
};

// Per-step selection rule: (full context, raw model logits) -> next token.
using StepRule =
    std::function<TokenId(std::span<const TokenId>, const LogitVector&)>;

// Autoregressive loop over the model. Always emits exactly max_tokens.
std::vector<TokenId> generate_tokens(const NGramModel& model,
                                     std::span<const TokenId> prompt,
                                     std::size_t max_tokens,
                                     const StepRule& rule);

// Top-level registry. The config is a flat JSON object; an optional
// "algorithm" key must agree with `name`. Unknown keys are rejected.
std::unique_ptr<Watermark> load(std::string_view name,
                                const std::filesystem::path& config_path,
                                std::shared_ptr<const NGramModel> model);
std::unique_ptr<Watermark> load_from_json(
    std::string_view name, const nlohmann::json& config,
    std::shared_ptr<const NGramModel> model);

// config/<NAME>.json under `config_dir`.
std::filesystem::path default_config_path(const std::filesystem::path& config_dir,
                                          AlgorithmName name);

/// Key-checked view over a flat JSON config. Every accessor marks the key as
/// consumed; finish() rejects whatever was not consumed.
class ConfigReader {
 public:
  explicit ConfigReader(const nlohmann::json& obj);

  double number(const std::string& key, std::optional<double> fallback,
                double lo, double hi, bool lo_open = false,
                bool hi_open = false);
  std::uint64_t uint(const std::string& key,
                     std::optional<std::uint64_t> fallback,
                     std::uint64_t lo = 0,
                     std::uint64_t hi = UINT64_MAX);
  std::optional<double> optional_number(const std::string& key, double lo,
                                        double hi);
  std::string string(const std::string& key,
                     std::optional<std::string> fallback);
  bool has(const std::string& key) const;
  void finish() const;

 private:
  const nlohmann::json* find(const std::string& key);

  const nlohmann::json& obj_;
  std::vector<std::string> consumed_;
};

}  // namespace wmlab
