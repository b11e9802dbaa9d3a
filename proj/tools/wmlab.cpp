#include <cstdint>
#include <fstream>
#include <iostream>
#include <iterator>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "wmlab/attacks.hpp"
#include "wmlab/errors.hpp"
#include "wmlab/evaluation.hpp"
#include "wmlab/visualize.hpp"
#include "wmlab/watermark.hpp"

#ifndef WMLAB_VERSION
#define WMLAB_VERSION "0.0.0"
#endif

using namespace wmlab;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitExternal = 4;

// Failure with an explicit exit status, for cases where the error code alone
// does not decide it (a missing model is a usage problem, not a data one).
struct CliFailure {
  int status;
  std::string message;
};

int exit_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kName:
    case ErrorCode::kConfig:
    case ErrorCode::kTypeMismatch: return kExitUsage;
    case ErrorCode::kAttackUnavailable: return kExitExternal;
    case ErrorCode::kInsufficientText:
    case ErrorCode::kData:
    case ErrorCode::kIo: return kExitData;
  }
  return kExitData;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_input(const std::string& path) {
  if (path.empty() || path == "-")
    return {std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>()};
  return read_file(path);
}

void write_output(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << content;
}

struct ModelOptions {
  std::string model = "data/model.json";
  std::string algorithm;
  std::string config;
  std::string config_dir = "config";
  std::vector<std::string> overrides;

  void attach(CLI::App* app) {
    app->add_option("--algorithm", algorithm, "KGW, Unigram, SWEET, EWD, EXP or EXP-Edit")
        ->required();
    app->add_option("--model", model, "n-gram model file")->capture_default_str();
    app->add_option("--config", config, "algorithm config (default <config-dir>/<ALGO>.json)");
    app->add_option("--config-dir", config_dir)->capture_default_str();
    app->add_option("--set", overrides, "config override key=value (repeatable)");
  }

  std::shared_ptr<const NGramModel> load_model() const {
    try {
      return std::make_shared<const NGramModel>(NGramModel::load(model));
    } catch (const Error& e) {
      throw CliFailure{kExitUsage, "model " + model + ": " + e.what()};
    }
  }

  json config_json(AlgorithmName name) const {
    const std::string path =
        config.empty() ? default_config_path(config_dir, name).string() : config;
    json cfg;
    try {
      cfg = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
      throw ConfigError(path, std::string("malformed JSON: ") + e.what());
    } catch (const IoError& e) {
      throw CliFailure{kExitUsage, e.what()};
    }
    if (!cfg.is_object()) throw ConfigError(path, "expected a JSON object");
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos || eq == 0)
        throw Error(ErrorCode::kInvalidArgument, "--set expects key=value, got " + o);
      const std::string key = o.substr(0, eq);
      const std::string value = o.substr(eq + 1);
      try {
        cfg[key] = json::parse(value);
      } catch (const json::parse_error&) {
        cfg[key] = value;
      }
    }
    return cfg;
  }

  std::unique_ptr<Watermark> load_watermark() const {
    const AlgorithmName name = parse_algorithm(algorithm);
    json cfg = config_json(name);
    return load_from_json(algorithm, cfg, load_model());
  }
};

json tool_json() { return {{"name", "wmlab"}, {"version", WMLAB_VERSION}}; }

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string corpus, output;
  int order = 3;
  double alpha = 0.1;
  std::size_t max_vocab = 8192;
};

int run_train(const TrainArgs& a) {
  std::vector<std::string> docs;
  std::istringstream in(read_file(a.corpus));
  for (std::string line; std::getline(in, line);)
    if (line.find_first_not_of(" \t\r") != std::string::npos) docs.push_back(line);
  NGramModel model = NGramModel::train(docs, a.order, a.alpha, a.max_vocab);
  write_output(a.output, model.to_json());
  std::cerr << "trained order-" << a.order << " model, |V| = " << model.vocab().size() << "\n";
  return kExitOk;
}

struct GenerateArgs {
  ModelOptions m;
  std::string prompt, prompt_file, output, metadata;
  std::size_t max_tokens = 200;
  std::uint64_t seed = 0;
  bool unwatermarked = false;
};

int run_generate(const GenerateArgs& a) {
  auto wm = a.m.load_watermark();
  const std::string prompt = a.prompt_file.empty() ? a.prompt : read_file(a.prompt_file);
  const auto& vocab = wm->model().vocab();
  const auto prompt_ids = tokenize(prompt, vocab).token_ids;
  const auto ids = a.unwatermarked
                       ? wm->generate_unwatermarked_ids(prompt_ids, a.max_tokens, a.seed)
                       : wm->generate_watermarked_ids(prompt_ids, a.max_tokens, a.seed);
  write_output(a.output, detokenize(ids, vocab) + "\n");
  if (!a.metadata.empty()) {
    json meta = {{"tool", tool_json()},
                 {"algorithm", a.m.algorithm},
                 {"watermarked", !a.unwatermarked},
                 {"seed", a.seed},
                 {"max_tokens", a.max_tokens},
                 {"generated_tokens", ids.size()},
                 {"config", wm->config_json()}};
    write_output(a.metadata, meta.dump(2) + "\n");
  }
  return kExitOk;
}

struct DetectArgs {
  ModelOptions m;
  std::string input, output;
};

int run_detect(const DetectArgs& a) {
  auto wm = a.m.load_watermark();
  const std::string text = read_input(a.input);
  try {
    write_output(a.output, to_json(wm->detect(text)).dump(2) + "\n");
  } catch (const InsufficientText& e) {
    json err = {{"error", {{"code", error_code_name(e.code())}, {"message", e.what()}}}};
    write_output(a.output, err.dump(2) + "\n");
    throw;
  }
  return kExitOk;
}

struct VisualizeArgs {
  ModelOptions m;
  std::string input, output, visualizer, settings;
  bool allow_mismatch = false;
  bool html = false;
};

// Forces highlights into the other visual kind when explicitly asked to.
VisualizationData coerce(VisualizationData data, bool to_discrete) {
  for (auto& h : data.highlights) {
    if (to_discrete) {
      if (const auto* c = std::get_if<Continuous>(&h))
        h = c->value >= 0.5 ? Discrete::kGreen : Discrete::kRed;
    } else if (const auto* d = std::get_if<Discrete>(&h)) {
      h = Continuous{*d == Discrete::kGreen ? 1.0 : 0.0};
    }
  }
  return data;
}

int run_visualize(const VisualizeArgs& a) {
  auto wm = a.m.load_watermark();
  const bool kgw = family_of(wm->algorithm()) == Family::kKgw;
  const std::string kind = a.visualizer.empty() ? (kgw ? "discrete" : "continuous") : a.visualizer;
  const bool discrete = kind == "discrete";
  if (discrete != kgw && !a.allow_mismatch)
    throw TypeMismatch("the " + kind + " visualizer does not fit " + a.m.algorithm +
                       " (pass --allow-mismatch to convert)");
  VisualSettings settings;
  if (!a.settings.empty()) {
    try {
      settings = VisualSettings::from_json(json::parse(read_file(a.settings)));
    } catch (const json::parse_error& e) {
      throw ConfigError(a.settings, std::string("malformed JSON: ") + e.what());
    }
  }
  const std::string text = read_input(a.input);
  if (tokenize(text, wm->model().vocab()).empty()) throw DataError("empty text");
  VisualizationData data = coerce(wm->visualization_data(text), discrete);
  std::string svg = discrete ? visualize_discrete(data, settings)
                             : visualize_continuous(data, settings);
  write_output(a.output, a.html ? wrap_html(svg, a.m.algorithm + " watermark") : svg);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// assess

struct AssessArgs {
  ModelOptions m;
  std::string dataset = "data/dataset.jsonl";
  std::string output;
  std::size_t max_tokens = 200;
  std::uint64_t seed = 0;
  unsigned jobs = 1;
  std::size_t limit = 0;

  // detectability / robustness
  std::vector<std::string> labels = kAllRateLabels;
  std::string rules = "best";
  std::optional<double> target_fpr;
  std::string negatives = "natural";

  // robustness
  std::string attack;
  double ratio = 0.3;
  std::uint64_t attack_seed = 0;
  std::string lexicon = "data/lexicon.json";
  std::string endpoint;

  // quality
  std::string metric;
  std::string judge_command;
  double judge_timeout = 10.0;
  std::string judge_endpoint;

  void attach_common(CLI::App* app) {
    m.attach(app);
    app->add_option("--dataset", dataset, "JSON Lines dataset")->capture_default_str();
    app->add_option("--output", output, "report path (default stdout)");
    app->add_option("--max-tokens,--max_tokens", max_tokens)->capture_default_str();
    app->add_option("--seed", seed)->capture_default_str();
    app->add_option("--jobs", jobs)->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--limit", limit, "use the first N records (0 = all)");
  }

  void attach_rates(CLI::App* app) {
    app->add_option("--labels", labels, "rates to report")->capture_default_str();
    app->add_option("--rules", rules, "best or target_fpr")->capture_default_str();
    app->add_option("--target_fpr,--target-fpr", target_fpr);
    app->add_option("--negatives", negatives, "natural or generated")->capture_default_str();
  }

  PipelineOptions pipeline() const { return {max_tokens, seed, jobs, limit}; }

  json options_json() const {
    return {{"dataset", dataset},
            {"max_tokens", max_tokens},
            {"seed", seed},
            {"jobs", jobs},
            {"limit", limit}};
  }
};

NegativeSource parse_negatives(const std::string& s) {
  if (s == "natural") return NegativeSource::kNaturalText;
  if (s == "generated") return NegativeSource::kUnwatermarkedGeneration;
  throw Error(ErrorCode::kInvalidArgument, "--negatives must be natural or generated");
}

// Flag checks that must pass before any generation starts.
ThresholdRule check_rates(const AssessArgs& a) {
  const ThresholdRule rule = parse_threshold_rule(a.rules);
  if (rule == ThresholdRule::kTargetFpr && !a.target_fpr)
    throw Error(ErrorCode::kInvalidArgument, "--rules target_fpr needs --target_fpr");
  if (a.target_fpr && !(*a.target_fpr > 0.0 && *a.target_fpr < 1.0))
    throw Error(ErrorCode::kInvalidArgument, "--target_fpr must lie in (0, 1)");
  ClassificationReport probe;
  for (const auto& l : a.labels) probe.rate(l);
  parse_negatives(a.negatives);
  return rule;
}

json detection_report(const AssessArgs& a, const char* command, const Watermark& wm,
                      const std::vector<DatasetRecord>& data, const AttackSpec* attack,
                      ThresholdRule rule) {
  const PipelineOptions opts = a.pipeline();
  DetectionScores pos = pipeline_wmdetect(data, wm, attack, opts);
  DetectionScores neg = pipeline_uwmdetect(data, wm, parse_negatives(a.negatives), opts);
  ClassificationReport r = dynamic_threshold_success_rate(
      make_score_set(pos, neg, wm.orientation()), rule, a.target_fpr);
  json rule_json = {{"name", a.rules}};
  if (rule == ThresholdRule::kTargetFpr) rule_json["target_fpr"] = *a.target_fpr;
  json report = {{"tool", tool_json()},
                 {"command", command},
                 {"algorithm", a.m.algorithm},
                 {"config", wm.config_json()},
                 {"options", a.options_json()},
                 {"negatives", a.negatives},
                 {"rule", rule_json},
                 {"orientation", wm.orientation() == ScoreOrientation::kHigherIsWatermarked
                                     ? "higher_is_watermarked"
                                     : "lower_is_watermarked"},
                 {"threshold", r.threshold},
                 {"rates", r.to_json(a.labels)},
                 {"confusion", {{"tp", r.tp}, {"fp", r.fp}, {"tn", r.tn}, {"fn", r.fn}}},
                 {"counts", {{"watermarked", pos.counts_json()}, {"unwatermarked", neg.counts_json()}}}};
  if (attack) report["attack"] = attack->to_json();
  return report;
}

std::vector<DatasetRecord> load_records(const std::string& path) {
  std::vector<DatasetRecord> data = load_dataset(path);
  if (data.empty()) throw DataError("dataset " + path + " has no records");
  return data;
}

int run_detectability(const AssessArgs& a) {
  const ThresholdRule rule = check_rates(a);
  auto wm = a.m.load_watermark();
  auto data = load_records(a.dataset);
  write_output(a.output,
               detection_report(a, "assess detectability", *wm, data, nullptr, rule).dump(2) + "\n");
  return kExitOk;
}

std::shared_ptr<const ChatClient> load_endpoint(const std::string& path) {
  if (path.empty()) return nullptr;
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path, std::string("malformed JSON: ") + e.what());
  } catch (const IoError& e) {
    throw CliFailure{kExitUsage, e.what()};
  }
  return std::make_shared<const ChatClient>(ChatEndpointConfig::from_json(j));
}

int run_robustness(const AssessArgs& a) {
  const ThresholdRule rule = check_rates(a);
  AttackSpec spec;
  spec.kind = parse_attack_kind(a.attack);
  spec.ratio = a.ratio;
  spec.rng_seed = a.attack_seed;
  spec.endpoint = load_endpoint(a.endpoint);
  if (spec.kind == AttackKind::kSynonymSubstitution ||
      spec.kind == AttackKind::kContextAwareSynonymSubstitution) {
    try {
      spec.lexicon = std::make_shared<const SynonymLexicon>(SynonymLexicon::load(a.lexicon));
    } catch (const IoError& e) {
      throw CliFailure{kExitUsage, e.what()};
    }
  }
  auto wm = a.m.load_watermark();
  if (spec.kind == AttackKind::kContextAwareSynonymSubstitution) spec.model = wm->model_ptr();
  spec.validate();
  auto data = load_records(a.dataset);
  write_output(a.output,
               detection_report(a, "assess robustness", *wm, data, &spec, rule).dump(2) + "\n");
  return kExitOk;
}

int run_quality(const AssessArgs& a) {
  QualityAnalyzer analyzer;
  analyzer.metric = parse_quality_metric(a.metric);
  analyzer.command_template = a.judge_command;
  analyzer.timeout_seconds = a.judge_timeout;
  analyzer.judge = load_endpoint(a.judge_endpoint);
  if (analyzer.metric == QualityMetric::kPass && analyzer.command_template.empty())
    throw Error(ErrorCode::kInvalidArgument, "--metric Pass needs --judge-command");
  if (analyzer.metric == QualityMetric::kGPTJudge && !analyzer.judge)
    throw AttackUnavailable("--metric GPT-Judge needs --judge-endpoint");
  auto wm = a.m.load_watermark();
  auto data = load_records(a.dataset);
  const QualityKind kind = natural_kind(analyzer.metric);
  QualityReport q = pipeline_quality(kind, data, *wm, analyzer, a.pipeline());
  json report = q.to_json();
  report["tool"] = tool_json();
  report["command"] = "assess quality";
  report["algorithm"] = a.m.algorithm;
  report["config"] = wm->config_json();
  report["options"] = a.options_json();
  report["pipeline"] = kind == QualityKind::kDirect ? "direct"
                       : kind == QualityKind::kRef  ? "reference"
                                                    : "external_discriminator";
  write_output(a.output, report.dump(2) + "\n");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wmlab: text watermarking lab"};
  app.set_version_flag("--version", WMLAB_VERSION);
  app.require_subcommand(1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train-lm", "train an n-gram model from a corpus");
  train_cmd->add_option("--corpus", train.corpus, "one document per line")->required();
  train_cmd->add_option("--output", train.output, "model path")->required();
  train_cmd->add_option("--order", train.order)->capture_default_str()->check(CLI::Range(1, 8));
  train_cmd->add_option("--alpha", train.alpha)->capture_default_str();
  train_cmd->add_option("--max-vocab", train.max_vocab)->capture_default_str();

  GenerateArgs gen;
  auto* gen_cmd = app.add_subcommand("generate", "generate a continuation");
  gen.m.attach(gen_cmd);
  auto* prompt_opt = gen_cmd->add_option("--prompt", gen.prompt);
  gen_cmd->add_option("--prompt-file", gen.prompt_file)->excludes(prompt_opt);
  gen_cmd->add_option("--max-tokens,--max_tokens", gen.max_tokens)
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  gen_cmd->add_option("--seed", gen.seed)->capture_default_str();
  gen_cmd->add_flag("--unwatermarked", gen.unwatermarked);
  gen_cmd->add_option("--output", gen.output, "text path (default stdout)");
  gen_cmd->add_option("--metadata", gen.metadata, "JSON metadata path");

  DetectArgs det;
  auto* det_cmd = app.add_subcommand("detect", "score a text");
  det.m.attach(det_cmd);
  det_cmd->add_option("--input", det.input, "text file (default stdin)");
  det_cmd->add_option("--output", det.output, "JSON path (default stdout)");

  VisualizeArgs vis;
  auto* vis_cmd = app.add_subcommand("visualize", "render token evidence as SVG");
  vis.m.attach(vis_cmd);
  vis_cmd->add_option("--input", vis.input, "text file (default stdin)");
  vis_cmd->add_option("--output", vis.output, "SVG path (default stdout)");
  vis_cmd->add_option("--visualizer", vis.visualizer, "discrete or continuous")
      ->check(CLI::IsMember({"discrete", "continuous"}));
  vis_cmd->add_flag("--allow-mismatch", vis.allow_mismatch);
  vis_cmd->add_option("--settings", vis.settings, "visual settings JSON");
  vis_cmd->add_flag("--html", vis.html, "wrap the SVG in an HTML page");

  auto* assess = app.add_subcommand("assess", "run an assessment pipeline");
  assess->require_subcommand(1);
  AssessArgs dta, rob, qua;
  auto* dta_cmd = assess->add_subcommand("detectability", "watermarked vs unwatermarked detection rates");
  dta.attach_common(dta_cmd);
  dta.attach_rates(dta_cmd);
  auto* rob_cmd = assess->add_subcommand("robustness", "detection rates after an attack");
  rob.attach_common(rob_cmd);
  rob.attach_rates(rob_cmd);
  rob_cmd->add_option("--attack", rob.attack, "Word-D, Word-S, Word-S-Context or Doc-P")
      ->required();
  rob_cmd->add_option("--ratio", rob.ratio)->capture_default_str();
  rob_cmd->add_option("--attack-seed", rob.attack_seed)->capture_default_str();
  rob_cmd->add_option("--lexicon", rob.lexicon)->capture_default_str();
  rob_cmd->add_option("--endpoint", rob.endpoint, "paraphrase endpoint JSON");
  auto* qua_cmd = assess->add_subcommand("quality", "paired text quality comparison");
  qua.attach_common(qua_cmd);
  qua_cmd->add_option("--metric", qua.metric, "PPL, Log-Diversity, BLEU, Pass or GPT-Judge")
      ->required();
  qua_cmd->add_option("--judge-command", qua.judge_command, "shell command with {file}");
  qua_cmd->add_option("--judge-timeout", qua.judge_timeout)->capture_default_str();
  qua_cmd->add_option("--judge-endpoint", qua.judge_endpoint, "discriminator endpoint JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train_cmd) return run_train(train);
    if (*gen_cmd) return run_generate(gen);
    if (*det_cmd) return run_detect(det);
    if (*vis_cmd) return run_visualize(vis);
    if (*dta_cmd) return run_detectability(dta);
    if (*rob_cmd) return run_robustness(rob);
    if (*qua_cmd) return run_quality(qua);
  } catch (const CliFailure& f) {
    std::cerr << "error: " << f.message << "\n";
    return f.status;
  } catch (const Error& e) {
    std::cerr << "error (" << error_code_name(e.code()) << "): " << e.what() << "\n";
    return exit_status(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
