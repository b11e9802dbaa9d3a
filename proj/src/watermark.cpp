#include "wmlab/watermark.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "wmlab/christ.hpp"
#include "wmlab/errors.hpp"
#include "wmlab/kgw.hpp"

namespace wmlab {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kName: return "NameError";
    case ErrorCode::kConfig: return "ConfigError";
    case ErrorCode::kInsufficientText: return "InsufficientText";
    case ErrorCode::kTypeMismatch: return "TypeMismatch";
    case ErrorCode::kAttackUnavailable: return "AttackUnavailable";
    case ErrorCode::kData: return "DataError";
    case ErrorCode::kIo: return "IoError";
  }
  return "Error";
}

std::uint64_t seed_from_context(const SeedContext& sc,
                                std::span<const std::uint32_t> context) {
  if (sc.prefix_length == 0) return mix64(sc.hash_key);
  std::uint64_t s = sc.hash_key;
  std::size_t n = std::min(sc.prefix_length, context.size());
  for (std::size_t i = context.size() - n; i < context.size(); ++i)
    s = mix64(s ^ (static_cast<std::uint64_t>(context[i]) + 1));
  return s;
}

AlgorithmName parse_algorithm(std::string_view name) {
  for (AlgorithmName a : kAllAlgorithms)
    if (to_string(a) == name) return a;
  throw NameError(std::string(name));
}

std::string_view to_string(AlgorithmName name) {
  switch (name) {
    case AlgorithmName::kKGW: return "KGW";
    case AlgorithmName::kUnigram: return "Unigram";
    case AlgorithmName::kSWEET: return "SWEET";
    case AlgorithmName::kEWD: return "EWD";
    case AlgorithmName::kEXP: return "EXP";
    case AlgorithmName::kEXPEdit: return "EXP-Edit";
  }
  return "?";
}

Family family_of(AlgorithmName name) {
  return (name == AlgorithmName::kEXP || name == AlgorithmName::kEXPEdit)
             ? Family::kChrist
             : Family::kKgw;
}

nlohmann::json to_json(const DetectionResult& r) {
  const bool kgw = family_of(r.algorithm) == Family::kKgw;
  nlohmann::json j = {
      {"algorithm", std::string(to_string(r.algorithm))},
      {"score", r.score},
      {kgw ? "z_threshold" : "p_threshold", r.threshold},
      {"is_watermarked", r.is_watermarked},
      {"scored_T", r.scored_tokens},
      {"statistic", r.statistic},
  };
  if (!kgw) j["p_value"] = r.score;
  else j["z_score"] = r.score;
  return j;
}

// ---------------------------------------------------------------------------
// Generation

std::vector<TokenId> generate_tokens(const NGramModel& model,
                                     std::span<const TokenId> prompt,
                                     std::size_t max_tokens,
                                     const StepRule& rule) {
  require(max_tokens >= 1, "max_tokens must be >= 1");
  require(model.vocab().size() >= 2, "model has no usable vocabulary");
  std::vector<TokenId> context(prompt.begin(), prompt.end());
  context.reserve(prompt.size() + max_tokens);
  for (std::size_t step = 0; step < max_tokens; ++step) {
    LogitVector logits = model.next_logits(context);
    context.push_back(rule(context, logits));
  }
  return {context.begin() + static_cast<std::ptrdiff_t>(prompt.size()),
          context.end()};
}

Watermark::Watermark(std::shared_ptr<const NGramModel> model)
    : model_(std::move(model)) {
  require(model_ != nullptr, "watermark needs a model");
}

std::vector<TokenId> Watermark::generate_unwatermarked_ids(
    std::span<const TokenId> prompt, std::size_t max_tokens,
    std::uint64_t seed) const {
  PrngState rng{seed};
  const double temperature = sampling_temperature();
  return generate_tokens(*model_, prompt, max_tokens,
                         [&](std::span<const TokenId>, const LogitVector& l) {
                           return sample(l, temperature, rng);
                         });
}

std::string Watermark::generate_watermarked(std::string_view prompt,
                                            std::size_t max_tokens,
                                            std::uint64_t seed) const {
  auto p = tokenize(prompt, model_->vocab()).token_ids;
  return detokenize(generate_watermarked_ids(p, max_tokens, seed),
                    model_->vocab());
}

std::string Watermark::generate_unwatermarked(std::string_view prompt,
                                              std::size_t max_tokens,
                                              std::uint64_t seed) const {
  auto p = tokenize(prompt, model_->vocab()).token_ids;
  return detokenize(generate_unwatermarked_ids(p, max_tokens, seed),
                    model_->vocab());
}

// ---------------------------------------------------------------------------
// Config loading

ConfigReader::ConfigReader(const nlohmann::json& obj) : obj_(obj) {
  if (!obj_.is_object()) throw ConfigError("<root>", "config must be a JSON object");
}

const nlohmann::json* ConfigReader::find(const std::string& key) {
  consumed_.push_back(key);
  auto it = obj_.find(key);
  if (it == obj_.end() || it->is_null()) return nullptr;
  return &*it;
}

bool ConfigReader::has(const std::string& key) const {
  auto it = obj_.find(key);
  return it != obj_.end() && !it->is_null();
}

double ConfigReader::number(const std::string& key,
                            std::optional<double> fallback, double lo,
                            double hi, bool lo_open, bool hi_open) {
  const nlohmann::json* v = find(key);
  if (v == nullptr) {
    if (!fallback) throw ConfigError(key, "required key missing");
    return *fallback;
  }
  if (!v->is_number()) throw ConfigError(key, "expected a number");
  double x = v->get<double>();
  bool ok = std::isfinite(x) && (lo_open ? x > lo : x >= lo) &&
            (hi_open ? x < hi : x <= hi);
  if (!ok) {
    throw ConfigError(key, "value " + v->dump() + " outside " +
                               (lo_open ? "(" : "[") + std::to_string(lo) +
                               ", " + std::to_string(hi) + (hi_open ? ")" : "]"));
  }
  return x;
}

std::optional<double> ConfigReader::optional_number(const std::string& key,
                                                    double lo, double hi) {
  if (!has(key)) {
    consumed_.push_back(key);
    return std::nullopt;
  }
  return number(key, std::nullopt, lo, hi);
}

std::uint64_t ConfigReader::uint(const std::string& key,
                                 std::optional<std::uint64_t> fallback,
                                 std::uint64_t lo, std::uint64_t hi) {
  const nlohmann::json* v = find(key);
  if (v == nullptr) {
    if (!fallback) throw ConfigError(key, "required key missing");
    return *fallback;
  }
  if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<std::int64_t>() >= 0))
    throw ConfigError(key, "expected a non-negative integer");
  auto x = v->get<std::uint64_t>();
  if (x < lo || x > hi)
    throw ConfigError(key, "value " + v->dump() + " outside [" +
                               std::to_string(lo) + ", " + std::to_string(hi) + "]");
  return x;
}

std::string ConfigReader::string(const std::string& key,
                                 std::optional<std::string> fallback) {
  const nlohmann::json* v = find(key);
  if (v == nullptr) {
    if (!fallback) throw ConfigError(key, "required key missing");
    return *fallback;
  }
  if (!v->is_string()) throw ConfigError(key, "expected a string");
  return v->get<std::string>();
}

void ConfigReader::finish() const {
  for (const auto& [key, _] : obj_.items()) {
    if (std::find(consumed_.begin(), consumed_.end(), key) == consumed_.end())
      throw ConfigError(key, "unknown key");
  }
}

std::unique_ptr<Watermark> load_from_json(
    std::string_view name, const nlohmann::json& config,
    std::shared_ptr<const NGramModel> model) {
  AlgorithmName algo = parse_algorithm(name);
  if (!config.is_object()) throw ConfigError("<root>", "config must be a JSON object");

  nlohmann::json params = config;
  if (auto it = params.find("algorithm"); it != params.end()) {
    if (!it->is_string() || it->get<std::string>() != to_string(algo))
      throw ConfigError("algorithm", "does not match requested algorithm " +
                                         std::string(to_string(algo)));
    params.erase(it);
  }
  switch (algo) {
    case AlgorithmName::kEXP:
      return ExpWatermark::from_json(params, std::move(model));
    case AlgorithmName::kEXPEdit:
      return ExpEditWatermark::from_json(params, std::move(model));
    default:
      return KgwWatermark::from_json(algo, params, std::move(model));
  }
}

std::unique_ptr<Watermark> load(std::string_view name,
                                const std::filesystem::path& config_path,
                                std::shared_ptr<const NGramModel> model) {
  parse_algorithm(name);
  std::ifstream in(config_path);
  if (!in) throw ConfigError("<file>", "cannot open " + config_path.string());
  nlohmann::json config;
  try {
    config = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("<file>", config_path.string() + ": " + e.what());
  }
  return load_from_json(name, config, std::move(model));
}

std::filesystem::path default_config_path(const std::filesystem::path& config_dir,
                                          AlgorithmName name) {
  return config_dir / (std::string(to_string(name)) + ".json");
}

}  // namespace wmlab
