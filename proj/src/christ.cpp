#include "wmlab/christ.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include "wmlab/errors.hpp"

namespace wmlab {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Shared by both EXP-style samplers: argmax ln(u_i) / p_i.
template <typename UniformAt>
TokenId gumbel_power_argmax(std::span<const double> probs, UniformAt&& uniform) {
  TokenId best = 0;
  double best_score = kNegInf;
  bool found = false;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    double score = std::log(uniform(i)) / probs[i];
    if (!found || score > best_score) {
      best = static_cast<TokenId>(i);
      best_score = score;
      found = true;
    }
  }
  return best;
}

std::vector<TokenId> surface_ids(const WordSplit& words, const Vocabulary& vocab) {
  std::vector<TokenId> ids;
  ids.reserve(words.words.size());
  for (const auto& w : words.words) ids.push_back(vocab.id(w));
  return ids;
}

}  // namespace

double gamma_q(double a, double x) {
  require(a > 0.0, "gamma_q: a must be positive");
  require(x >= 0.0, "gamma_q: x must be non-negative");
  if (x == 0.0) return 1.0;
  constexpr double kEps = 1e-16;
  constexpr int kMaxIter = 100000;
  const double log_prefactor = -x + a * std::log(x) - std::lgamma(a);

  if (x < a + 1.0) {
    // Series for P(a, x).
    double ap = a;
    double term = 1.0 / a;
    double sum = term;
    for (int n = 0; n < kMaxIter; ++n) {
      ap += 1.0;
      term *= x / ap;
      sum += term;
      if (std::fabs(term) < std::fabs(sum) * kEps) break;
    }
    return std::clamp(1.0 - sum * std::exp(log_prefactor), 0.0, 1.0);
  }

  // Modified Lentz continued fraction for Q(a, x).
  constexpr double kTiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxIter; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return std::clamp(std::exp(log_prefactor) * h, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// EXP

void ExpConfig::validate() const {
  if (!(p_threshold > 0.0 && p_threshold < 1.0))
    throw ConfigError("p_threshold", "must lie in (0, 1)");
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw ConfigError("temperature", "must be > 0");
}

TokenId exp_sample(const ExpConfig& cfg, std::span<const TokenId> context,
                   std::span<const double> logits) {
  const std::uint64_t seed = seed_from_context(cfg.seed_context, context);
  LogitVector scaled(logits.begin(), logits.end());
  for (double& v : scaled) v /= cfg.temperature;
  LogitVector probs = softmax(scaled);
  return gumbel_power_argmax(probs, [&](std::size_t i) { return unit_at(seed, i); });
}

ChristDetection exp_detect(const ExpConfig& cfg, std::span<const TokenId> tokens) {
  const std::size_t h = cfg.seed_context.prefix_length;
  ChristDetection det;
  det.scored.assign(tokens.size(), false);
  double s = 0.0;
  for (std::size_t t = h; t < tokens.size(); ++t) {
    const std::uint64_t seed = seed_from_context(cfg.seed_context, tokens.first(t));
    const double r = unit_at(seed, tokens[t]);
    s += -std::log1p(-r);
    det.per_token_alignment.push_back(r);
    det.scored[t] = true;
  }
  det.scored_T = det.per_token_alignment.size();
  if (det.scored_T < 2)
    throw InsufficientText("need at least 2 scorable tokens, got " +
                           std::to_string(det.scored_T));
  det.statistic = s;
  det.p_value = gamma_q(static_cast<double>(det.scored_T), s);
  det.is_watermarked = det.p_value < cfg.p_threshold;
  return det;
}

ChristDetection exp_detect(const ExpConfig& cfg, std::string_view text,
                           const Vocabulary& vocab) {
  return exp_detect(cfg, tokenize(text, vocab).token_ids);
}

// ---------------------------------------------------------------------------
// EXP-Edit

void ExpEditConfig::validate() const {
  if (key.length < 1) throw ConfigError("key_length", "must be >= 1");
  if (!(gamma_edit >= 0.0) || !std::isfinite(gamma_edit))
    throw ConfigError("gamma_edit", "must be >= 0");
  if (permutations < 20) throw ConfigError("permutations", "must be >= 20");
  if (!(p_threshold > 0.0 && p_threshold < 1.0))
    throw ConfigError("p_threshold", "must lie in (0, 1)");
  if (!(match_scale > 0.0)) throw ConfigError("match_scale", "must be > 0");
}

std::size_t exp_edit_start_offset(const EditKey& key, std::uint64_t offset_seed) {
  return static_cast<std::size_t>(mix64(offset_seed) % key.length);
}

std::vector<TokenId> exp_edit_generate_ids(const ExpEditConfig& cfg,
                                           const NGramModel& model,
                                           std::span<const TokenId> prompt,
                                           std::size_t max_tokens,
                                           std::uint64_t offset_seed) {
  require(cfg.key.vocab_size == model.vocab().size(),
          "edit key and model disagree on vocabulary size");
  const std::size_t offset = exp_edit_start_offset(cfg.key, offset_seed);
  std::size_t step = 0;
  return generate_tokens(
      model, prompt, max_tokens,
      [&](std::span<const TokenId>, const LogitVector& logits) {
        const std::size_t row = (offset + step++) % cfg.key.length;
        LogitVector probs = softmax(logits);
        return gumbel_power_argmax(
            probs, [&](std::size_t i) { return cfg.key.value(row, static_cast<TokenId>(i)); });
      });
}

std::string exp_edit_generate(const ExpEditConfig& cfg, const NGramModel& model,
                              std::string_view prompt, std::size_t max_tokens,
                              std::uint64_t offset_seed) {
  auto p = tokenize(prompt, model.vocab()).token_ids;
  return detokenize(exp_edit_generate_ids(cfg, model, p, max_tokens, offset_seed),
                    model.vocab());
}

namespace {

// Text-major match-cost table: cost[i * n + row].
std::vector<double> match_costs(const EditKey& key, std::span<const TokenId> tokens,
                                double scale) {
  const std::size_t n = key.length;
  std::vector<double> cost(tokens.size() * n);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    for (std::size_t row = 0; row < n; ++row) {
      const double xi = key.value(row, tokens[i]);
      cost[i * n + row] = std::clamp(1.0 + std::log1p(-xi) / scale, 0.0, 1.0);
    }
  }
  return cost;
}

// Global alignment of all T tokens against key rows offset..offset+T-1
// (mod n). `full`, when given, receives the (T+1)^2 table.
double align_at_offset(const std::vector<double>& cost, std::size_t n,
                       std::size_t T, std::size_t offset, double gap,
                       std::vector<double>* full) {
  std::vector<double> prev(T + 1), cur(T + 1);
  for (std::size_t k = 0; k <= T; ++k) prev[k] = static_cast<double>(k) * gap;
  if (full) {
    full->assign((T + 1) * (T + 1), 0.0);
    std::copy(prev.begin(), prev.end(), full->begin());
  }
  for (std::size_t i = 1; i <= T; ++i) {
    const double* row_costs = &cost[(i - 1) * n];
    cur[0] = static_cast<double>(i) * gap;
    std::size_t row = offset % n;
    for (std::size_t k = 1; k <= T; ++k) {
      const double match = prev[k - 1] + row_costs[row];
      const double skip_token = prev[k] + gap;
      const double skip_key = cur[k - 1] + gap;
      cur[k] = std::min(match, std::min(skip_token, skip_key));
      if (++row == n) row = 0;
    }
    if (full) std::copy(cur.begin(), cur.end(), full->begin() + i * (T + 1));
    std::swap(prev, cur);
  }
  return prev[T];
}

}  // namespace

double exp_edit_alignment_cost(const EditKey& key, std::span<const TokenId> tokens,
                               double gamma_edit, double match_scale) {
  const std::size_t T = tokens.size();
  const std::vector<double> cost = match_costs(key, tokens, match_scale);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t o = 0; o < key.length; ++o)
    best = std::min(best, align_at_offset(cost, key.length, T, o, gamma_edit, nullptr));
  return best;
}

EditAlignment exp_edit_align(const EditKey& key, std::span<const TokenId> tokens,
                             double gamma_edit, double match_scale) {
  const std::size_t T = tokens.size();
  const std::size_t n = key.length;
  const std::vector<double> cost = match_costs(key, tokens, match_scale);
  EditAlignment out;
  out.cost = std::numeric_limits<double>::infinity();
  for (std::size_t o = 0; o < n; ++o) {
    double c = align_at_offset(cost, n, T, o, gamma_edit, nullptr);
    if (c < out.cost) {
      out.cost = c;
      out.offset = o;
    }
  }

  std::vector<double> table;
  align_at_offset(cost, n, T, out.offset, gamma_edit, &table);
  out.per_token.assign(T, 0.0);
  auto at = [&](std::size_t i, std::size_t k) { return table[i * (T + 1) + k]; };
  std::size_t i = T, k = T;
  while (i > 0 && k > 0) {
    const std::size_t row = (out.offset + k - 1) % n;
    if (at(i, k) == at(i - 1, k - 1) + cost[(i - 1) * n + row]) {
      out.per_token[i - 1] = key.value(row, tokens[i - 1]);
      --i;
      --k;
    } else if (at(i, k) == at(i - 1, k) + gamma_edit) {
      --i;
    } else {
      --k;
    }
  }
  return out;
}

EditKey permutation_key(const EditKey& key, std::size_t k) {
  EditKey fresh = key;
  fresh.key_seed = derive_seed(key.key_seed ^ 0x5851F42D4C957F2Dull, k);
  return fresh;
}

ChristDetection exp_edit_detect(const ExpEditConfig& cfg,
                                std::span<const TokenId> tokens, unsigned jobs) {
  if (tokens.size() < 2)
    throw InsufficientText("need at least 2 tokens, got " +
                           std::to_string(tokens.size()));
  EditAlignment observed =
      exp_edit_align(cfg.key, tokens, cfg.gamma_edit, cfg.match_scale);
  const double observed_stat = -observed.cost;

  const std::size_t m = cfg.permutations;
  std::vector<double> null_stats(m);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < m; k = next++) {
      null_stats[k] = -exp_edit_alignment_cost(permutation_key(cfg.key, k + 1), tokens,
                                               cfg.gamma_edit, cfg.match_scale);
    }
  };
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(m)));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }

  const auto at_least = static_cast<std::size_t>(std::count_if(
      null_stats.begin(), null_stats.end(),
      [&](double s) { return s >= observed_stat; }));
  ChristDetection det;
  det.statistic = observed_stat;
  det.p_value = static_cast<double>(1 + at_least) / static_cast<double>(m + 1);
  det.scored_T = tokens.size();
  det.scored.assign(tokens.size(), true);
  det.per_token_alignment = std::move(observed.per_token);
  det.is_watermarked = det.p_value < cfg.p_threshold;
  return det;
}

ChristDetection exp_edit_detect(const ExpEditConfig& cfg, std::string_view text,
                                const Vocabulary& vocab, unsigned jobs) {
  return exp_edit_detect(cfg, tokenize(text, vocab).token_ids, jobs);
}

VisualizationData christ_visualization_data(const ChristDetection& det,
                                            std::span<const TokenId> tokens,
                                            const Vocabulary& vocab) {
  VisualizationData out;
  std::size_t next = 0;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    out.decoded_tokens.push_back(vocab.token(tokens[t]));
    if (det.scored[t]) out.highlights.emplace_back(Continuous{det.per_token_alignment[next++]});
    else out.highlights.emplace_back(Unscored{});
  }
  return out;
}

// ---------------------------------------------------------------------------

ExpWatermark::ExpWatermark(ExpConfig cfg, std::shared_ptr<const NGramModel> model)
    : Watermark(std::move(model)), cfg_(cfg) {
  cfg_.validate();
}

std::unique_ptr<ExpWatermark> ExpWatermark::from_json(
    const nlohmann::json& config, std::shared_ptr<const NGramModel> model) {
  ConfigReader r(config);
  ExpConfig cfg;
  cfg.seed_context.hash_key = r.uint("hash_key", std::nullopt);
  cfg.seed_context.prefix_length = r.uint("prefix_length", 1, 0, 64);
  cfg.p_threshold = r.number("p_threshold", 0.01, 0.0, 1.0, true, true);
  cfg.temperature = r.number("temperature", 1.0, 0.0, 1e6, true);
  r.finish();
  return std::make_unique<ExpWatermark>(cfg, std::move(model));
}

std::vector<TokenId> ExpWatermark::generate_watermarked_ids(
    std::span<const TokenId> prompt, std::size_t max_tokens, std::uint64_t) const {
  return generate_tokens(*model_, prompt, max_tokens,
                         [&](std::span<const TokenId> context, const LogitVector& logits) {
                           return exp_sample(cfg_, context, logits);
                         });
}

DetectionResult ExpWatermark::detect(std::string_view text) const {
  ChristDetection det = exp_detect(cfg_, text, model_->vocab());
  DetectionResult r;
  r.algorithm = AlgorithmName::kEXP;
  r.score = det.p_value;
  r.statistic = det.statistic;
  r.threshold = cfg_.p_threshold;
  r.orientation = ScoreOrientation::kLowerIsWatermarked;
  r.is_watermarked = det.is_watermarked;
  r.scored_tokens = det.scored_T;
  return r;
}

VisualizationData ExpWatermark::visualization_data(std::string_view text) const {
  WordSplit words = split_words(text);
  auto ids = surface_ids(words, model_->vocab());
  VisualizationData out = christ_visualization_data(exp_detect(cfg_, ids), ids, model_->vocab());
  out.decoded_tokens = std::move(words.words);
  return out;
}

nlohmann::json ExpWatermark::config_json() const {
  return {
      {"algorithm", "EXP"},
      {"hash_key", cfg_.seed_context.hash_key},
      {"prefix_length", cfg_.seed_context.prefix_length},
      {"p_threshold", cfg_.p_threshold},
      {"temperature", cfg_.temperature},
  };
}

ExpEditWatermark::ExpEditWatermark(ExpEditConfig cfg,
                                   std::shared_ptr<const NGramModel> model)
    : Watermark(std::move(model)), cfg_(cfg) {
  cfg_.key.vocab_size = model_->vocab().size();
  cfg_.validate();
}

std::unique_ptr<ExpEditWatermark> ExpEditWatermark::from_json(
    const nlohmann::json& config, std::shared_ptr<const NGramModel> model) {
  ConfigReader r(config);
  ExpEditConfig cfg;
  cfg.key.key_seed = r.uint("key_seed", std::nullopt);
  cfg.key.length = r.uint("key_length", 64, 1, 1u << 20);
  cfg.gamma_edit = r.number("gamma_edit", 0.4, 0.0, 1e6);
  cfg.permutations = r.uint("permutations", 99, 20, 1u << 20);
  cfg.p_threshold = r.number("p_threshold", 0.05, 0.0, 1.0, true, true);
  r.finish();
  return std::make_unique<ExpEditWatermark>(cfg, std::move(model));
}

std::vector<TokenId> ExpEditWatermark::generate_watermarked_ids(
    std::span<const TokenId> prompt, std::size_t max_tokens,
    std::uint64_t seed) const {
  return exp_edit_generate_ids(cfg_, *model_, prompt, max_tokens, seed);
}

DetectionResult ExpEditWatermark::detect(std::string_view text) const {
  ChristDetection det = exp_edit_detect(cfg_, text, model_->vocab());
  DetectionResult r;
  r.algorithm = AlgorithmName::kEXPEdit;
  r.score = det.p_value;
  r.statistic = det.statistic;
  r.threshold = cfg_.p_threshold;
  r.orientation = ScoreOrientation::kLowerIsWatermarked;
  r.is_watermarked = det.is_watermarked;
  r.scored_tokens = det.scored_T;
  return r;
}

VisualizationData ExpEditWatermark::visualization_data(std::string_view text) const {
  WordSplit words = split_words(text);
  auto ids = surface_ids(words, model_->vocab());
  VisualizationData out =
      christ_visualization_data(exp_edit_detect(cfg_, ids), ids, model_->vocab());
  out.decoded_tokens = std::move(words.words);
  return out;
}

nlohmann::json ExpEditWatermark::config_json() const {
  return {
      {"algorithm", "EXP-Edit"},
      {"key_seed", cfg_.key.key_seed},
      {"key_length", cfg_.key.length},
      {"gamma_edit", cfg_.gamma_edit},
      {"permutations", cfg_.permutations},
      {"p_threshold", cfg_.p_threshold},
  };
}

}  // namespace wmlab
