#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "wmlab/attacks.hpp"
#include "wmlab/chat_client.hpp"
#include "wmlab/watermark.hpp"

namespace wmlab {

// ---------------------------------------------------------------------------
// Success-rate calculators

struct ScoreSet {
  std::vector<double> positives;  // scores of watermarked texts
  std::vector<double> negatives;  // scores of unwatermarked texts
  bool higher_is_watermarked = true;
};

struct ClassificationReport {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double tpr = 0, tnr = 0, fpr = 0, fnr = 0;
  double precision = 0, recall = 0, f1 = 0, accuracy = 0;
  double threshold = 0;

  double rate(std::string_view label) const;
  // Only the requested labels; unknown labels throw.
  nlohmann::json to_json(std::span<const std::string> labels) const;
};

inline const std::vector<std::string> kAllRateLabels = {"TPR", "TNR", "FPR", "FNR",
                                                        "P",   "R",   "F1",  "ACC"};

// score >= threshold (or <= for lower-is-watermarked) counts as watermarked.
ClassificationReport fundamental_success_rate(const ScoreSet& scores, double threshold);

enum class ThresholdRule { kBest, kTargetFpr };
ThresholdRule parse_threshold_rule(std::string_view name);

// Midpoints between adjacent distinct pooled scores plus +-infinity, ascending.
std::vector<double> candidate_thresholds(const ScoreSet& scores);

/// kBest: the candidate maximizing F1, ties to the numerically lowest.
/// kTargetFpr: the most permissive candidate whose empirical FPR <= target
/// (smallest threshold for higher-is-watermarked scores, largest otherwise).
ClassificationReport dynamic_threshold_success_rate(const ScoreSet& scores,
                                                    ThresholdRule rule,
                                                    std::optional<double> target_fpr = {});

// ---------------------------------------------------------------------------
// Text quality analyzers

// -ln(1 - u2 u3 u4) over distinct n-gram ratios, product clamped to 1 - 1e-6.
double log_diversity(std::string_view text);

// BLEU-4, uniform weights, closest-reference brevity penalty, add-one
// smoothing on orders n >= 2 whose clipped match count is zero.
double bleu(std::string_view hypothesis, std::span<const std::string> references);

struct JudgeOutcome {
  bool pass = false;
  bool timed_out = false;
  int exit_status = -1;
};

// Writes `generated` to a temp file, substitutes its path for {file} in the
// template and runs it through /bin/sh. Pass iff exit status 0 in time.
JudgeOutcome command_judger(std::string_view generated, std::string_view command_template,
                            double timeout_seconds = 10.0);

struct DiscriminatorPair {
  std::string watermarked;
  std::string unwatermarked;
  std::string task;
};

struct DiscriminatorResult {
  double win_rate = 0.0;
  std::vector<std::optional<double>> per_pair;  // 1 win, 0 loss, 0.5 tie
  std::size_t requested = 0, completed = 0, skipped = 0;
};

inline constexpr std::string_view kDefaultJudgeTemplate =
    "Task: {task}\n\nResponse 1:\n{first}\n\nResponse 2:\n{second}\n\n"
    "Which response is better? Answer with 1, 2, or tie.";

// Each pair is shown in an order drawn from `seed`. Replies starting with
// "1"/"2" pick a side, anything else is a tie. Throws DataError when no pair
// completes.
DiscriminatorResult external_discriminator(std::span<const DiscriminatorPair> pairs,
                                           const ChatClient& judge, std::uint64_t seed,
                                           std::string_view prompt_template = kDefaultJudgeTemplate);

// ---------------------------------------------------------------------------
// Datasets and pipelines

struct DatasetRecord {
  std::string prompt;
  std::string natural_text;
  std::optional<std::string> reference;
};

// JSON Lines; blank lines ignored. Throws DataError with the line number.
std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path);
std::vector<DatasetRecord> parse_dataset(std::string_view jsonl);

struct PipelineOptions {
  std::size_t max_tokens = 200;
  std::uint64_t seed = 0;  // per-record seeds derive from it
  unsigned jobs = 1;
  std::size_t limit = 0;   // 0 = whole dataset
};

struct DetectionScores {
  std::vector<double> scores;           // completed samples, dataset order
  std::vector<std::size_t> record_index;
  std::vector<std::string> texts;       // the text that was scored
  std::size_t requested = 0, completed = 0, skipped = 0;
  std::size_t skipped_unavailable = 0, skipped_insufficient = 0;

  nlohmann::json counts_json() const;
};

// Runs fn(i) for i in [0, n) on up to `jobs` threads.
void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn);

// generate watermarked -> optional attack -> detect. Throws DataError when
// every sample was skipped.
DetectionScores pipeline_wmdetect(std::span<const DatasetRecord> dataset, const Watermark& wm,
                                  const AttackSpec* attack, const PipelineOptions& opts);

enum class NegativeSource { kNaturalText, kUnwatermarkedGeneration };

DetectionScores pipeline_uwmdetect(std::span<const DatasetRecord> dataset, const Watermark& wm,
                                   NegativeSource source, const PipelineOptions& opts,
                                   const AttackSpec* attack = nullptr);

ScoreSet make_score_set(const DetectionScores& positives, const DetectionScores& negatives,
                        ScoreOrientation orientation);

enum class QualityKind { kDirect, kRef, kExDis };
enum class QualityMetric { kPPL, kLogDiversity, kBLEU, kPass, kGPTJudge };

// PPL, Log-Diversity (or "Log Diversity"), BLEU, Pass, GPT-Judge.
QualityMetric parse_quality_metric(std::string_view name);
std::string_view to_string(QualityMetric metric);
QualityKind natural_kind(QualityMetric metric);

struct QualityAnalyzer {
  QualityMetric metric = QualityMetric::kPPL;
  std::string command_template;                // Pass
  double timeout_seconds = 10.0;               // Pass
  std::shared_ptr<const ChatClient> judge;     // GPT-Judge
  std::string task_description = "Continue the given text.";
};

struct QualityReport {
  std::string metric;
  double watermarked_mean = 0.0;
  double unwatermarked_mean = 0.0;
  std::string direction;  // up, down or none
  std::vector<std::pair<double, double>> per_sample;
  std::size_t requested = 0, completed = 0, skipped = 0;

  nlohmann::json to_json() const;
};

// Paired watermarked/unwatermarked generations per record, scored by the
// analyzer. Throws InvalidArgument when the analyzer does not fit `kind`.
QualityReport pipeline_quality(QualityKind kind, std::span<const DatasetRecord> dataset,
                               const Watermark& wm, const QualityAnalyzer& analyzer,
                               const PipelineOptions& opts);

}  // namespace wmlab
