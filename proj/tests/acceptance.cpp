// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "support.hpp"
#include "wmlab/attacks.hpp"
#include "wmlab/christ.hpp"
#include "wmlab/errors.hpp"
#include "wmlab/evaluation.hpp"
#include "wmlab/kgw.hpp"
#include "wmlab/visualize.hpp"

using namespace wmlab;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void expect(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::span<const DatasetRecord> heldout(std::size_t n) {
  return std::span<const DatasetRecord>(testing::heldout()).first(n);
}

std::unique_ptr<Watermark> scheme(const std::string& name, json cfg = nullptr) {
  if (cfg.is_null()) cfg = testing::config_for(name);
  return load_from_json(name, cfg, testing::fixture_model());
}

const std::vector<std::string> kRateSchemes = {"KGW", "Unigram", "SWEET", "EWD", "EXP"};
const std::vector<std::string> kKgwFamily = {"KGW", "Unigram", "SWEET", "EWD"};

ScoreSet score_set(const Watermark& wm, std::span<const DatasetRecord> data,
                   const AttackSpec* attack) {
  PipelineOptions opts;
  opts.max_tokens = 200;
  auto pos = pipeline_wmdetect(data, wm, attack, opts);
  auto neg = pipeline_uwmdetect(data, wm, NegativeSource::kNaturalText, opts);
  return make_score_set(pos, neg, wm.orientation());
}

// 200 prompts, 200 tokens; best-rule F1 and TPR at 1% empirical FPR.
void detectability(Outcome& o) {
  auto t0 = Clock::now();
  for (const auto& name : kRateSchemes) {
    auto wm = scheme(name);
    auto s = score_set(*wm, heldout(200), nullptr);
    auto best = dynamic_threshold_success_rate(s, ThresholdRule::kBest);
    auto pinned = dynamic_threshold_success_rate(s, ThresholdRule::kTargetFpr, 0.01);
    o.detail << " " << name << " F1=" << best.f1 << " TPR@1%=" << pinned.tpr;
    o.expect(best.f1 >= 0.98, name + " best F1 >= 0.98");
    o.expect(pinned.tpr >= 0.95, name + " TPR >= 0.95");
    o.expect(pinned.fpr <= 0.01, name + " FPR <= 0.01");
  }
  const double secs = seconds_since(t0);
  o.detail << " runtime=" << secs << "s";
  o.expect(secs <= 600.0, "runtime <= 10 min");
}

void null_calibration(Outcome& o) {
  for (const auto& name : kKgwFamily) {
    auto wm = scheme(name);
    double sum = 0;
    std::size_t n = 0, over = 0;
    for (const auto& r : heldout(500)) {
      double z = wm->detect(r.natural_text).score;
      sum += z;
      over += z >= 4.0;
      ++n;
    }
    const double mean = sum / static_cast<double>(n);
    const double tail = static_cast<double>(over) / static_cast<double>(n);
    o.detail << " " << name << " mean_z=" << mean << " P(z>=4)=" << tail;
    o.expect(n == 500, name + " 500 texts");
    o.expect(std::fabs(mean) <= 0.2, name + " |mean z| <= 0.2");
    o.expect(tail <= 0.01, name + " P(z >= 4) <= 0.01");
  }

  auto exp = ExpWatermark::from_json(testing::config_for("EXP"), testing::fixture_model());
  const std::size_t V = testing::fixture_model()->vocab().size();
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<TokenId> tok(0, static_cast<TokenId>(V - 1));
  std::size_t hits = 0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<TokenId> ids(200);
    for (auto& t : ids) t = tok(rng);
    hits += exp_detect(exp->config(), ids).p_value < 0.01;
  }
  const double fpr = static_cast<double>(hits) / 1000.0;
  o.detail << " EXP FPR@0.01=" << fpr;
  o.expect(fpr >= 0.003 && fpr <= 0.03, "EXP null FPR in [0.003, 0.03]");
}

void robustness(Outcome& o) {
  for (const auto& name : kRateSchemes) {
    auto wm = scheme(name);
    std::vector<double> f1;
    for (double ratio : {0.0, 0.3, 0.6}) {
      AttackSpec attack;
      attack.kind = AttackKind::kWordDeletion;
      attack.ratio = ratio;
      auto s = score_set(*wm, heldout(200), &attack);
      o.expect(s.positives.size() == 200 && s.negatives.size() == 200, name + " 200+200 samples");
      f1.push_back(dynamic_threshold_success_rate(s, ThresholdRule::kBest).f1);
    }
    o.detail << " " << name << " F1=" << f1[0] << "/" << f1[1] << "/" << f1[2];
    o.expect(f1[0] - f1[1] <= 0.10, name + " drop at 0.3 <= 0.10");
    o.expect(f1[1] <= f1[0] && f1[2] <= f1[1], name + " non-increasing");
  }

  auto model = testing::fixture_model();
  auto uni = KgwWatermark::from_json(AlgorithmName::kUnigram, testing::config_for("Unigram"), model);
  std::mt19937_64 rng(11);
  std::size_t checked = 0, equal = 0;
  for (std::size_t i = 0; i < 50; ++i) {
    auto prompt = tokenize(testing::heldout()[i].prompt, model->vocab()).token_ids;
    auto ids = uni->generate_watermarked_ids(prompt, 100, i);
    const double z = kgw_detect(uni->config(), ids, *model).z_score;
    for (int k = 0; k < 5; ++k) {
      std::shuffle(ids.begin(), ids.end(), rng);
      equal += kgw_detect(uni->config(), ids, *model).z_score == z;
      ++checked;
    }
  }
  o.detail << " Unigram shuffles equal=" << equal << "/" << checked;
  o.expect(equal == checked, "Unigram z invariant under shuffles");
}

// P(X >= k) for X ~ Binomial(n, 1/2).
double sign_test_upper(std::size_t k, std::size_t n) {
  double p = 0;
  for (std::size_t i = k; i <= n; ++i)
    p += std::exp(std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) -
                  static_cast<double>(n) * std::log(2.0));
  return p;
}

void quality_direction(Outcome& o) {
  QualityAnalyzer ppl;
  PipelineOptions opts;
  opts.max_tokens = 200;

  auto cfg = testing::config_for("KGW");
  cfg["delta"] = 5.0;
  auto strong = pipeline_quality(QualityKind::kDirect, heldout(200), *scheme("KGW", cfg), ppl, opts);
  std::size_t wins = 0, untied = 0;
  for (auto [w, u] : strong.per_sample) {
    if (w == u) continue;
    ++untied;
    wins += w > u;
  }
  const double p = sign_test_upper(wins, untied);
  o.detail << " delta=5 PPL wm=" << strong.watermarked_mean << " uwm=" << strong.unwatermarked_mean
           << " wins=" << wins << "/" << untied << " p=" << p;
  o.expect(strong.per_sample.size() == 200, "200 pairs");
  o.expect(strong.watermarked_mean > strong.unwatermarked_mean, "mean PPL goes up");
  o.expect(p < 0.01, "sign test p < 0.01");

  cfg["delta"] = 0.0;
  auto none = pipeline_quality(QualityKind::kDirect, heldout(200), *scheme("KGW", cfg), ppl, opts);
  std::size_t same = 0;
  for (auto [w, u] : none.per_sample) same += w == u;
  o.detail << " delta=0 identical=" << same << "/" << none.per_sample.size();
  o.expect(none.per_sample.size() == 200 && same == 200, "delta 0 pairs identical");
}

void oracle_equivalence(Outcome& o) {
  auto model = testing::fixture_model();
  const std::size_t V = model->vocab().size();
  std::size_t agree = 0, total = 0;
  for (const auto& name : {"KGW", "Unigram"}) {
    auto wm = KgwWatermark::from_json(parse_algorithm(name), testing::config_for(name), model);
    const auto& c = wm->config();
    for (std::size_t i = 0; i < 50; ++i) {
      const auto& r = testing::heldout()[i];
      const std::string text = i % 2 ? r.natural_text : wm->generate_watermarked(r.prompt, 200, i);
      auto ids = tokenize(text, model->vocab()).token_ids;
      auto det = kgw_detect(c, text, *model);
      auto ref = oracle::recount(c.seed_context.hash_key, c.seed_context.prefix_length, ids, V, c.gamma);
      agree += det.green_count == ref.green && det.scored_T == ref.scored && det.z_score == ref.z;
      ++total;
    }
  }
  o.detail << " recount " << agree << "/" << total;
  o.expect(agree == total, "brute-force recount");

  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  std::size_t same = 0;
  for (int k = 0; k < 100; ++k) {
    ScoreSet s;
    const std::size_t np = 5 + rng() % 40, nn = 5 + rng() % 40;
    for (std::size_t i = 0; i < np; ++i) s.positives.push_back(std::round(4 * (nd(rng) + 1)) / 4);
    for (std::size_t i = 0; i < nn; ++i) s.negatives.push_back(std::round(4 * nd(rng)) / 4);
    auto [f1, t] = oracle::best_f1(s);
    auto r = dynamic_threshold_success_rate(s, ThresholdRule::kBest);
    same += r.f1 == f1 && r.threshold == t;
  }
  o.detail << " best-rule " << same << "/100";
  o.expect(same == 100, "best rule matches enumeration");

  const std::pair<double, double> points[] = {
      {1, 0.5},     {1, 3},       {2, 0.1},     {2, 4},       {5, 2},
      {5, 9},       {10, 5},      {10, 15},     {25, 20},     {50, 40},
      {50, 65},     {100, 90},    {100, 130},   {150, 150},   {200, 170},
      {200, 200},   {200, 240},   {300, 350},   {500, 480},   {1000, 1100}};
  double worst = 0;
  for (auto [a, x] : points) worst = std::max(worst, std::fabs(gamma_q(a, x) - oracle::gamma_q(a, x)));
  o.detail << " gamma_q max_err=" << worst;
  o.expect(worst <= 1e-10, "incomplete gamma within 1e-10");
}

void sampling(Outcome& o) {
  const std::vector<std::vector<double>> cases = {
      {0.3, -1.2, 1.7, 0.0, -0.4, 0.9, -2.5, 0.2}, {0.0, 1.0, 2.0}};
  double worst = 0;
  for (const auto& logits : cases) {
    const auto p = softmax(logits);
    std::vector<double> freq(logits.size());
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
      ExpConfig c;
      c.seed_context = {static_cast<std::uint64_t>(i) * 7919 + 1, 1};
      freq[exp_sample(c, std::vector<TokenId>{0}, logits)] += 1.0 / draws;
    }
    for (std::size_t k = 0; k < p.size(); ++k) worst = std::max(worst, std::fabs(freq[k] - p[k]));
  }
  o.detail << " exp_sample max|freq-p|=" << worst;
  o.expect(worst <= 0.02, "marginals within 2%");

  auto model = testing::fixture_model();
  auto edit = ExpEditWatermark::from_json(testing::config_for("EXP-Edit"), model);
  const auto& cfg = edit->config();
  const double floor_p = 1.0 / static_cast<double>(cfg.permutations + 1);
  std::size_t at_floor = 0, null_low = 0;
  for (std::size_t i = 0; i < 50; ++i) {
    const auto& r = testing::heldout()[i];
    auto prompt = tokenize(r.prompt, model->vocab()).token_ids;
    auto ids = edit->generate_watermarked_ids(prompt, 100, i);
    at_floor += exp_edit_detect(cfg, ids).p_value == floor_p;
    auto nat = tokenize(r.natural_text, model->vocab()).token_ids;
    nat.resize(std::min<std::size_t>(nat.size(), 100));
    null_low += exp_edit_detect(cfg, nat).p_value <= 0.05;
  }
  o.detail << " EXP-Edit p=1/(m+1): " << at_floor << "/50, null p<=0.05: " << null_low << "/50";
  o.expect(at_floor >= 45, "watermarked at the permutation floor on >= 90%");
  o.expect(null_low <= 5, "null P(p <= 0.05) <= 0.10");
}

void determinism(Outcome& o) {
  const std::string prompt = testing::fixture_dataset()[3].prompt;
  std::size_t stable = 0, runs = 0;
  auto twice = [&](const std::vector<std::string>& args, const std::string& in) {
    auto a = testing::run_cli(args, in), b = testing::run_cli(args, in);
    stable += a.status == 0 && a.out == b.out && !a.out.empty();
    ++runs;
    return a.out;
  };
  for (auto algo : kAllAlgorithms) {
    const std::string name(to_string(algo));
    auto text = twice({"generate", "--algorithm", name, "--prompt", prompt, "--seed", "3",
                       "--max-tokens", "80"}, "");
    twice({"detect", "--algorithm", name}, text);
    twice({"visualize", "--algorithm", name}, text);
  }
  o.detail << " cli stable " << stable << "/" << runs;
  o.expect(stable == runs, "byte-identical CLI reruns");

  auto golden = [](const std::string& f) { return testing::slurp(testing::source_path("tests/golden/" + f)); };
  const bool disc = visualize_discrete(testing::discrete_fixture()) == golden("discrete.svg");
  const bool cont = visualize_continuous(testing::continuous_fixture()) == golden("continuous.svg");
  o.detail << " goldens " << (disc && cont ? "match" : "differ");
  o.expect(disc && cont, "SVG goldens");

  std::mt19937 rng(1);
  std::vector<std::pair<Rgb, Rgb>> pairs = {{{255, 255, 255}, {0, 0, 0}}, {ColorScheme{}.light, ColorScheme{}.dark}};
  for (int i = 0; i < 50; ++i) {
    auto c = [&] { return static_cast<std::uint8_t>(rng() % 256); };
    pairs.push_back({{c(), c(), c()}, {c(), c(), c()}});
  }
  std::size_t exact = 0;
  for (auto [l, d] : pairs) {
    auto half = [](int a, int b) { return static_cast<std::uint8_t>((a + b + 1) / 2); };
    const Rgb mid{half(l.r, d.r), half(l.g, d.g), half(l.b, d.b)};
    exact += interpolate(l, d, 0.0) == l && interpolate(l, d, 1.0) == d && interpolate(l, d, 0.5) == mid;
  }
  o.detail << " interpolation " << exact << "/" << pairs.size();
  o.expect(exact == pairs.size(), "interpolation endpoints and midpoint");
}

// Tiny structural schema: pointer -> expected kind.
bool conforms(const json& j, const std::vector<std::pair<std::string, std::string>>& schema,
              std::string& why) {
  for (const auto& [ptr, kind] : schema) {
    const json::json_pointer p(ptr);
    if (!j.contains(p)) {
      why = ptr + " missing";
      return false;
    }
    const json& v = j.at(p);
    const bool ok = kind == "string"   ? v.is_string()
                    : kind == "number" ? v.is_number()
                    : kind == "unsigned" ? v.is_number_unsigned()
                    : kind == "object" ? v.is_object()
                    : kind == "array"  ? v.is_array()
                    : kind == "rate"   ? v.is_number() && v.get<double>() >= 0 && v.get<double>() <= 1
                                       : false;
    if (!ok) {
      why = ptr + " is not " + kind;
      return false;
    }
  }
  return true;
}

void cli_contract(Outcome& o) {
  const std::vector<std::pair<std::string, std::string>> common = {
      {"/tool/name", "string"}, {"/tool/version", "string"}, {"/command", "string"},
      {"/algorithm", "string"}, {"/config", "object"},      {"/options", "object"}};
  auto rate_schema = common;
  for (auto k : {"/negatives", "/rule/name", "/orientation"}) rate_schema.emplace_back(k, "string");
  rate_schema.emplace_back("/threshold", "number");
  rate_schema.emplace_back("/rates", "object");
  for (auto k : {"tp", "fp", "tn", "fn"}) rate_schema.emplace_back(std::string("/confusion/") + k, "unsigned");
  for (auto side : {"watermarked", "unwatermarked"})
    for (auto k : {"requested", "completed", "skipped"})
      rate_schema.emplace_back(std::string("/counts/") + side + "/" + k, "unsigned");

  auto det_schema = rate_schema;
  det_schema.emplace_back("/rates/TPR", "rate");
  det_schema.emplace_back("/rates/F1", "rate");
  det_schema.emplace_back("/rule/target_fpr", "number");
  auto rob_schema = rate_schema;
  for (auto k : {"TPR", "TNR", "FPR", "FNR", "P", "R", "F1", "ACC"})
    rob_schema.emplace_back(std::string("/rates/") + k, "rate");
  rob_schema.emplace_back("/attack/attack", "string");
  rob_schema.emplace_back("/attack/ratio", "number");
  auto q_schema = common;
  for (auto k : {"/metric", "/direction", "/pipeline"}) q_schema.emplace_back(k, "string");
  for (auto k : {"/watermarked_mean", "/unwatermarked_mean"}) q_schema.emplace_back(k, "number");
  for (auto k : {"/counts/requested", "/counts/completed", "/counts/skipped"}) q_schema.emplace_back(k, "unsigned");

  struct Case {
    std::vector<std::string> args;
    std::vector<std::pair<std::string, std::string>> schema;
  };
  const std::vector<Case> cases = {
      {{"assess", "detectability", "--algorithm", "KGW", "--labels", "TPR", "F1", "--rules", "target_fpr",
        "--target_fpr", "0.01"}, det_schema},
      {{"assess", "robustness", "--algorithm", "KGW", "--attack", "Word-D"}, rob_schema},
      {{"assess", "quality", "--algorithm", "KGW", "--metric", "PPL"}, q_schema}};
  for (const auto& c : cases) {
    auto t0 = Clock::now();
    auto r = testing::run_cli(c.args);
    const double secs = seconds_since(t0);
    const std::string label = c.args[1];
    std::string why = "ok";
    bool ok = r.status == 0;
    if (!ok) why = "exit " + std::to_string(r.status);
    json j = ok ? json::parse(r.out, nullptr, false) : json();
    if (ok && j.is_discarded()) ok = false, why = "not JSON";
    if (ok) ok = conforms(j, c.schema, why);
    if (ok && label != "quality" && j["counts"]["watermarked"]["completed"] != 50) {
      ok = false;
      why = "expected 50 records";
    }
    o.detail << " " << label << "=" << why << " " << secs << "s";
    o.expect(ok, label + " schema");
    o.expect(secs <= 60.0, label + " <= 60 s");
  }
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
      {"detectability", detectability},
      {"null calibration", null_calibration},
      {"robustness", robustness},
      {"quality direction", quality_direction},
      {"oracle equivalence", oracle_equivalence},
      {"sampling correctness", sampling},
      {"determinism and rendering", determinism},
      {"cli contract", cli_contract},
  };
  std::size_t passed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    auto t0 = Clock::now();
    try {
      run(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    passed += o.pass;
    std::printf("%s %s (%.1fs):%s\n", o.pass ? "PASS" : "FAIL", name.c_str(), seconds_since(t0),
                o.detail.str().c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", passed, criteria.size());
  return passed == criteria.size() ? 0 : 1;
}
