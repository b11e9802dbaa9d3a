#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "support.hpp"
#include "wmlab/christ.hpp"
#include "wmlab/errors.hpp"

using namespace wmlab;

namespace {

ExpConfig exp_cfg(std::uint64_t key = 15485863) {
  ExpConfig c;
  c.seed_context = {key, 1};
  return c;
}

}  // namespace

TEST_CASE("incomplete gamma against a 50-digit oracle") {
  const double pts[20][2] = {{1, 0.5},    {1, 3},       {2, 1},     {2.5, 4},    {5, 2},
                             {5, 10},     {10, 7},      {10, 15},   {20, 20},    {50, 40},
                             {50, 65},    {100, 100},   {100, 120}, {150, 130},  {200, 200},
                             {200, 240},  {200, 170},   {0.5, 0.1}, {3, 0.01},   {30, 60}};
  for (auto& p : pts) {
    const double want = oracle::gamma_q(p[0], p[1]);
    CHECK(std::fabs(gamma_q(p[0], p[1]) - want) <= 1e-10);
  }
  CHECK(gamma_q(3, 0) == 1.0);
  CHECK_THROWS(gamma_q(0, 1));
  CHECK_THROWS(gamma_q(1, -1));
}

TEST_CASE("exp_sample marginals follow softmax") {
  std::vector<double> logits{0.3, -1.0, 1.1, 0.0, -0.4, 0.8};
  auto p = softmax(logits);
  std::vector<int> counts(logits.size());
  std::vector<TokenId> ctx{3};
  for (std::uint64_t k = 0; k < 10000; ++k)
    counts[exp_sample(exp_cfg(k), ctx, logits)]++;
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::fabs(counts[i] / 10000.0 - p[i]) <= 0.02);

  std::vector<double> onehot{-1e9, -1e9, 0.0};
  CHECK(exp_sample(exp_cfg(1), ctx, onehot) == 2);
  CHECK(exp_sample(exp_cfg(4), ctx, logits) == exp_sample(exp_cfg(4), ctx, logits));
}

TEST_CASE("exp_detect statistic and null behaviour") {
  auto model = testing::fixture_model();
  const std::size_t V = model->vocab().size();
  std::mt19937_64 rng(21);
  double mean_ratio = 0;
  int flagged = 0;
  for (int k = 0; k < 500; ++k) {
    std::vector<TokenId> ids(200);
    for (auto& t : ids) t = static_cast<TokenId>(rng() % V);
    auto d = exp_detect(exp_cfg(), ids);
    mean_ratio += d.statistic / static_cast<double>(d.scored_T) / 500.0;
    flagged += d.is_watermarked;
    CHECK(d.p_value == doctest::Approx(gamma_q(static_cast<double>(d.scored_T), d.statistic)));
  }
  CHECK(std::fabs(mean_ratio - 1.0) <= 0.05);
  CHECK(flagged <= 15);

  CHECK_THROWS_AS(exp_detect(exp_cfg(), std::vector<TokenId>{1, 2}), InsufficientText);
  auto d = exp_detect(exp_cfg(), std::vector<TokenId>{1, 2, 3});
  CHECK(d.scored_T == 2);
  CHECK_FALSE(d.scored[0]);
}

TEST_CASE("exp watermark detects its own text") {
  auto model = testing::fixture_model();
  auto wm = ExpWatermark::from_json(testing::config_for("EXP"), model);
  int hits = 0;
  double wm_mean = 0, nat_mean = 0;
  for (std::size_t i = 0; i < 30; ++i) {
    auto text = wm->generate_watermarked(testing::heldout()[i].prompt, 200, 0);
    CHECK(text == wm->generate_watermarked(testing::heldout()[i].prompt, 200, 99));
    hits += wm->detect(text).is_watermarked;
    auto a = exp_detect(wm->config(), text, model->vocab());
    auto b = exp_detect(wm->config(), testing::heldout()[i].natural_text, model->vocab());
    for (double r : a.per_token_alignment) wm_mean += r / a.scored_T / 30;
    for (double r : b.per_token_alignment) nat_mean += r / b.scored_T / 30;
  }
  CHECK(hits >= 29);
  CHECK(wm_mean - nat_mean > 0.1);

  auto vd = wm->visualization_data(testing::heldout()[0].natural_text);
  auto det = exp_detect(wm->config(), testing::heldout()[0].natural_text, model->vocab());
  CHECK(std::holds_alternative<Unscored>(vd.highlights[0]));
  for (std::size_t i = 1; i < vd.highlights.size(); ++i) {
    const double v = std::get<Continuous>(vd.highlights[i]).value;
    CHECK(v == det.per_token_alignment[i - 1]);
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("edit key and generation") {
  EditKey key{7, 16, 50};
  CHECK(key.value(3, 9) == unit_at(7, 3 * 50 + 9));
  CHECK(exp_edit_start_offset(key, 1) < 16);

  auto model = testing::fixture_model();
  ExpEditConfig cfg;
  cfg.key = {15485863, 64, model->vocab().size()};
  const auto& prompt = testing::heldout()[0].prompt;
  CHECK(exp_edit_generate(cfg, *model, prompt, 50, 3) == exp_edit_generate(cfg, *model, prompt, 50, 3));
  int differ = 0, pairs = 0;
  std::vector<std::string> outs;
  for (std::uint64_t s = 0; s < 20; ++s) outs.push_back(exp_edit_generate(cfg, *model, prompt, 200, s));
  for (std::size_t a = 0; a < outs.size(); ++a)
    for (std::size_t b = a + 1; b < outs.size(); ++b) {
      ++pairs;
      differ += outs[a] != outs[b];
    }
  CHECK(differ >= pairs * 9 / 10);

  cfg.key.length = 1;
  auto ids = exp_edit_generate_ids(cfg, *model, {}, 3, 0);
  CHECK(ids.size() == 3);
}

TEST_CASE("alignment cost matches the oracle") {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 15; ++k) {
    EditKey key{rng(), 8, 30};
    std::vector<TokenId> y(3 + rng() % 10);
    for (auto& t : y) t = static_cast<TokenId>(rng() % 30);
    const double mine = exp_edit_alignment_cost(key, y, 0.4, 5.0);
    CHECK(mine == doctest::Approx(oracle::alignment(key, y, 0.4)).epsilon(1e-12));
    auto al = exp_edit_align(key, y, 0.4, 5.0);
    CHECK(al.cost == mine);
    CHECK(al.per_token.size() == y.size());
  }
}

TEST_CASE("permutation test") {
  auto model = testing::fixture_model();
  auto wm = ExpEditWatermark::from_json(testing::config_for("EXP-Edit"), model);
  const auto& cfg = wm->config();
  CHECK(permutation_key(cfg.key, 1).key_seed != permutation_key(cfg.key, 2).key_seed);
  CHECK(permutation_key(cfg.key, 1).key_seed == permutation_key(cfg.key, 1).key_seed);

  int minimal = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    auto prompt = tokenize(testing::heldout()[i].prompt, model->vocab()).token_ids;
    auto ids = wm->generate_watermarked_ids(prompt, 60, i);
    auto d = exp_edit_detect(cfg, ids);
    CHECK(d.p_value >= 1.0 / 100.0);
    CHECK(d.p_value <= 1.0);
    minimal += d.p_value == 1.0 / 100.0;
    auto par = exp_edit_detect(cfg, ids, 3);
    CHECK(par.p_value == d.p_value);
    CHECK(par.statistic == d.statistic);
  }
  CHECK(minimal >= 8);
  CHECK_THROWS_AS(exp_edit_detect(cfg, std::vector<TokenId>{4}), InsufficientText);

  auto bad = testing::config_for("EXP-Edit");
  bad["permutations"] = 5;
  CHECK_THROWS_AS(ExpEditWatermark::from_json(bad, model), ConfigError);
}
