#include "wmlab/kgw.hpp"

#include <cmath>
#include <numeric>

#include "wmlab/errors.hpp"

namespace wmlab {
namespace {

std::string_view variant_name(KgwVariant v) {
  switch (v) {
    case KgwVariant::kPlain: return "plain";
    case KgwVariant::kSweet: return "sweet";
    case KgwVariant::kEwd: return "ewd";
  }
  return "plain";
}

KgwVariant variant_for(AlgorithmName name) {
  switch (name) {
    case AlgorithmName::kSWEET: return KgwVariant::kSweet;
    case AlgorithmName::kEWD: return KgwVariant::kEwd;
    default: return KgwVariant::kPlain;
  }
}

}  // namespace

void KgwConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma", "must lie in (0, 1)");
  if (!(delta >= 0.0) || !std::isfinite(delta)) throw ConfigError("delta", "must be >= 0");
  if (!(entropy_threshold >= 0.0))
    throw ConfigError("entropy_threshold", "must be >= 0");
  if (!std::isfinite(z_threshold)) throw ConfigError("z_threshold", "must be finite");
}

std::size_t green_list_size(std::size_t vocab_size, double gamma) {
  return static_cast<std::size_t>(
      std::floor(gamma * static_cast<double>(vocab_size) + 1e-9));
}

GreenList partition_vocab(std::uint64_t seed, std::size_t vocab_size,
                          double gamma) {
  require(vocab_size >= 2, "vocabulary must hold at least two tokens");
  std::vector<TokenId> perm(vocab_size);
  std::iota(perm.begin(), perm.end(), TokenId{0});
  PrngState rng{seed};
  for (std::size_t i = vocab_size - 1; i > 0; --i) {
    std::size_t j = rng.next_below(i + 1);
    std::swap(perm[i], perm[j]);
  }
  GreenList out;
  out.green_count = green_list_size(vocab_size, gamma);
  out.membership.assign(vocab_size, false);
  for (std::size_t k = 0; k < out.green_count; ++k) out.membership[perm[k]] = true;
  return out;
}

LogitVector process_logits(const KgwConfig& cfg,
                           std::span<const TokenId> context,
                           std::span<const double> logits) {
  LogitVector out(logits.begin(), logits.end());
  if (cfg.delta == 0.0) return out;
  if (cfg.variant == KgwVariant::kSweet && entropy(logits) <= cfg.entropy_threshold)
    return out;
  GreenList green =
      partition_vocab(seed_from_context(cfg.seed_context, context),
                      logits.size(), cfg.gamma);
  for (std::size_t i = 0; i < out.size(); ++i)
    if (green.membership[i]) out[i] += cfg.delta;
  return out;
}

double kgw_z_score(double green, double scored, double gamma) {
  return (green - gamma * scored) / std::sqrt(scored * gamma * (1.0 - gamma));
}

KgwDetection kgw_detect(const KgwConfig& cfg, std::span<const TokenId> tokens,
                        const NGramModel& model) {
  const std::size_t vocab_size = model.vocab().size();
  const std::size_t h = cfg.seed_context.prefix_length;
  const bool needs_entropy = cfg.variant != KgwVariant::kPlain;
  const double max_entropy = std::log(static_cast<double>(vocab_size));

  KgwDetection det;
  det.per_token.reserve(tokens.size());
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    KgwTokenEvidence ev;
    ev.token = tokens[t];
    if (t >= h) {
      auto prefix = tokens.first(t);
      double weight = 1.0;
      bool scored = true;
      if (needs_entropy) {
        double ent = entropy(model.next_logits(prefix));
        if (cfg.variant == KgwVariant::kSweet) scored = ent > cfg.entropy_threshold;
        else weight = ent / max_entropy;
      }
      if (scored) {
        GreenList green = partition_vocab(
            seed_from_context(cfg.seed_context, prefix), vocab_size, cfg.gamma);
        ev.scored = true;
        ev.is_green = ev.token < vocab_size && green.is_green(ev.token);
        ev.weight = weight;
      }
    }
    if (ev.scored) {
      ++det.scored_T;
      det.green_count += ev.is_green ? 1 : 0;
      det.weight_sum += ev.weight;
      det.weight_sq_sum += ev.weight * ev.weight;
      det.weighted_green += ev.is_green ? ev.weight : 0.0;
    }
    det.per_token.push_back(ev);
  }

  if (det.scored_T < 2)
    throw InsufficientText("need at least 2 scorable tokens, got " +
                           std::to_string(det.scored_T));
  if (cfg.variant == KgwVariant::kEwd) {
    if (det.weight_sq_sum <= 0.0)
      throw InsufficientText("all entropy weights are zero");
    det.z_score = (det.weighted_green - cfg.gamma * det.weight_sum) /
                  std::sqrt(cfg.gamma * (1.0 - cfg.gamma) * det.weight_sq_sum);
  } else {
    det.z_score = kgw_z_score(static_cast<double>(det.green_count),
                              static_cast<double>(det.scored_T), cfg.gamma);
  }
  det.is_watermarked = det.z_score >= cfg.z_threshold;
  return det;
}

KgwDetection kgw_detect(const KgwConfig& cfg, std::string_view text,
                        const NGramModel& model) {
  return kgw_detect(cfg, tokenize(text, model.vocab()).token_ids, model);
}

VisualizationData kgw_visualization_data(const KgwConfig& cfg,
                                         std::string_view text,
                                         const NGramModel& model) {
  WordSplit words = split_words(text);
  std::vector<TokenId> ids;
  ids.reserve(words.words.size());
  for (const auto& w : words.words) ids.push_back(model.vocab().id(w));
  KgwDetection det = kgw_detect(cfg, ids, model);

  VisualizationData out;
  out.decoded_tokens = std::move(words.words);
  out.highlights.reserve(ids.size());
  for (const auto& ev : det.per_token) {
    if (!ev.scored) out.highlights.emplace_back(Unscored{});
    else out.highlights.emplace_back(ev.is_green ? Discrete::kGreen : Discrete::kRed);
  }
  return out;
}

// ---------------------------------------------------------------------------

KgwWatermark::KgwWatermark(AlgorithmName name, KgwConfig cfg,
                           std::shared_ptr<const NGramModel> model)
    : Watermark(std::move(model)), name_(name), cfg_(cfg) {
  require(family_of(name) == Family::kKgw, "not a KGW-family algorithm");
  cfg_.validate();
}

std::unique_ptr<KgwWatermark> KgwWatermark::from_json(
    AlgorithmName name, const nlohmann::json& config,
    std::shared_ptr<const NGramModel> model) {
  require(model != nullptr, "watermark needs a model");
  ConfigReader r(config);
  KgwConfig cfg;
  cfg.variant = variant_for(name);
  cfg.gamma = r.number("gamma", std::nullopt, 0.0, 1.0, true, true);
  cfg.delta = r.number("delta", std::nullopt, 0.0, 1e6);
  cfg.seed_context.hash_key = r.uint("hash_key", std::nullopt);
  const std::uint64_t default_h = name == AlgorithmName::kUnigram ? 0 : 1;
  cfg.seed_context.prefix_length = r.uint("prefix_length", default_h, 0, 64);
  if (name == AlgorithmName::kUnigram && cfg.seed_context.prefix_length != 0)
    throw ConfigError("prefix_length", "Unigram requires prefix_length 0");
  cfg.z_threshold = r.number("z_threshold", 4.0, -1e6, 1e6);
  std::string variant = r.string("variant", std::string(variant_name(cfg.variant)));
  if (variant != variant_name(cfg.variant))
    throw ConfigError("variant", "\"" + variant + "\" does not match " +
                                     std::string(to_string(name)));
  const double max_entropy = std::log(static_cast<double>(model->vocab().size()));
  cfg.entropy_threshold = r.number("entropy_threshold", 0.5 * max_entropy, 0.0, 1e6);
  r.finish();
  return std::make_unique<KgwWatermark>(name, cfg, std::move(model));
}

std::vector<TokenId> KgwWatermark::generate_watermarked_ids(
    std::span<const TokenId> prompt, std::size_t max_tokens,
    std::uint64_t seed) const {
  PrngState rng{seed};
  return generate_tokens(
      *model_, prompt, max_tokens,
      [&](std::span<const TokenId> context, const LogitVector& logits) {
        return sample(process_logits(cfg_, context, logits), 1.0, rng);
      });
}

DetectionResult KgwWatermark::detect(std::string_view text) const {
  KgwDetection det = kgw_detect(cfg_, text, *model_);
  DetectionResult r;
  r.algorithm = name_;
  r.score = det.z_score;
  r.statistic = det.z_score;
  r.threshold = cfg_.z_threshold;
  r.orientation = ScoreOrientation::kHigherIsWatermarked;
  r.is_watermarked = det.is_watermarked;
  r.scored_tokens = det.scored_T;
  return r;
}

VisualizationData KgwWatermark::visualization_data(std::string_view text) const {
  return kgw_visualization_data(cfg_, text, *model_);
}

nlohmann::json KgwWatermark::config_json() const {
  return {
      {"algorithm", std::string(to_string(name_))},
      {"gamma", cfg_.gamma},
      {"delta", cfg_.delta},
      {"hash_key", cfg_.seed_context.hash_key},
      {"prefix_length", cfg_.seed_context.prefix_length},
      {"z_threshold", cfg_.z_threshold},
      {"variant", std::string(variant_name(cfg_.variant))},
      {"entropy_threshold", cfg_.entropy_threshold},
  };
}

}  // namespace wmlab
