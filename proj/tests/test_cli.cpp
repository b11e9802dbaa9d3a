#include <cstdlib>

#include "doctest.h"
#include "support.hpp"

using testing::run_cli;
using nlohmann::json;

namespace {

const std::string kPrompt =
    "Every fast result examined every funny meal, and one arid volume seized one funny strategy";

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("wmlab-cli-" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("generate") {
  auto r = run_cli({"generate", "--algorithm", "KGW", "--prompt", kPrompt, "--seed", "7",
                    "--max-tokens", "40"});
  REQUIRE(r.status == 0);
  const auto golden = testing::source_path("tests/golden/generate_kgw.txt");
  if (std::getenv("WMLAB_UPDATE_GOLDEN")) testing::spit(golden, r.out);
  CHECK(r.out == testing::slurp(golden));
  CHECK(run_cli({"generate", "--algorithm", "KGW", "--prompt", kPrompt, "--seed", "7",
                 "--max-tokens", "40"}).out == r.out);

  auto five = run_cli({"generate", "--algorithm", "EXP", "--prompt", kPrompt, "--max-tokens", "5"});
  CHECK(five.status == 0);
  CHECK(wmlab::split_words(five.out).words.size() == 5);

  CHECK(run_cli({"generate", "--algorithm", "NoSuchAlgo", "--prompt", "x"}).status == 2);
  CHECK(run_cli({"generate", "--algorithm", "KGW", "--prompt", "x", "--model", "missing.json"}).status == 2);
  CHECK(run_cli({"generate", "--algorithm", "KGW", "--prompt", "x", "--set", "gamma=1.5"}).status == 2);
  CHECK(run_cli({"generate", "--prompt", "x"}).status == 2);

  auto meta = scratch("meta.json");
  CHECK(run_cli({"generate", "--algorithm", "SWEET", "--prompt", kPrompt, "--metadata", meta.string(),
                 "--max-tokens", "10", "--unwatermarked"}).status == 0);
  auto m = json::parse(testing::slurp(meta));
  CHECK(m["generated_tokens"] == 10);
  CHECK(m["watermarked"] == false);
}

TEST_CASE("generate then detect") {
  for (const char* algo : {"KGW", "Unigram", "SWEET", "EWD", "EXP", "EXP-Edit"}) {
    auto g = run_cli({"generate", "--algorithm", algo, "--prompt", kPrompt, "--seed", "2",
                      "--max-tokens", "200"});
    REQUIRE(g.status == 0);
    auto d = run_cli({"detect", "--algorithm", algo}, g.out);
    REQUIRE(d.status == 0);
    auto j = json::parse(d.out);
    CHECK(j["is_watermarked"].is_boolean());
    CHECK(j["is_watermarked"] == true);
    CHECK(j.contains("scored_T"));
    CHECK(j.contains("score"));
    CHECK((j.contains("z_threshold") || j.contains("p_threshold")));
    CHECK(run_cli({"detect", "--algorithm", algo}, g.out).out == d.out);
  }
  auto one = run_cli({"detect", "--algorithm", "KGW"}, "word");
  CHECK(one.status == 3);
  CHECK(json::parse(one.out)["error"]["code"] == "InsufficientText");
}

TEST_CASE("visualize") {
  auto text = run_cli({"generate", "--algorithm", "KGW", "--prompt", kPrompt, "--max-tokens", "30"}).out;
  auto v = run_cli({"visualize", "--algorithm", "KGW"}, text);
  CHECK(v.status == 0);
  CHECK(v.out.rfind("<?xml", 0) == 0);
  CHECK(v.out == run_cli({"visualize", "--algorithm", "KGW"}, text).out);
  CHECK(run_cli({"visualize", "--algorithm", "EXP"}, text).status == 0);
  CHECK(run_cli({"visualize", "--algorithm", "KGW", "--visualizer", "continuous"}, text).status == 2);
  CHECK(run_cli({"visualize", "--algorithm", "KGW", "--visualizer", "continuous", "--allow-mismatch"}, text)
            .status == 0);
  CHECK(run_cli({"visualize", "--algorithm", "KGW"}, " ").status == 3);
  auto html = run_cli({"visualize", "--algorithm", "EXP-Edit", "--html"}, text);
  CHECK(html.status == 0);
  CHECK(html.out.find("<!DOCTYPE html>") != std::string::npos);
}

TEST_CASE("train-lm") {
  auto out = scratch("model.json");
  CHECK(run_cli({"train-lm", "--corpus", "data/corpus.txt", "--output", out.string()}).status == 0);
  CHECK(testing::slurp(out) == testing::slurp(testing::source_path("data/model.json")));
  CHECK(run_cli({"train-lm", "--corpus", "nope.txt", "--output", out.string()}).status == 3);
}

TEST_CASE("assess") {
  auto d = run_cli({"assess", "detectability", "--algorithm", "KGW", "--labels", "TPR", "F1", "--rules",
                    "target_fpr", "--target_fpr", "0.01", "--limit", "10"});
  REQUIRE(d.status == 0);
  auto j = json::parse(d.out);
  CHECK(j["rates"].size() == 2);
  CHECK(j["tool"]["version"].is_string());

  CHECK(run_cli({"assess", "detectability", "--algorithm", "KGW", "--rules", "target_fpr"}).status == 2);
  CHECK(run_cli({"assess", "detectability", "--algorithm", "KGW", "--labels", "BOGUS"}).status == 2);
  CHECK(run_cli({"assess", "detectability", "--algorithm", "KGW", "--dataset", "none.jsonl"}).status == 3);
  CHECK(run_cli({"assess", "robustness", "--algorithm", "KGW", "--attack", "Doc-P"}).status == 4);
  CHECK(run_cli({"assess", "robustness", "--algorithm", "KGW", "--attack", "Word-Q"}).status == 2);
  CHECK(run_cli({"assess", "quality", "--algorithm", "KGW", "--metric", "GPT-Judge"}).status == 4);
  CHECK(run_cli({"assess", "quality", "--algorithm", "KGW", "--metric", "Pass"}).status == 2);
  CHECK(run_cli({"assess", "quality", "--algorithm", "KGW"}).status == 2);

  auto rob0 = run_cli({"assess", "robustness", "--algorithm", "KGW", "--attack", "Word-D", "--ratio", "0",
                       "--limit", "10"});
  auto base = run_cli({"assess", "detectability", "--algorithm", "KGW", "--limit", "10"});
  REQUIRE(rob0.status == 0);
  auto a = json::parse(rob0.out), b = json::parse(base.out);
  CHECK(a["rates"] == b["rates"]);
  CHECK(a["threshold"] == b["threshold"]);
  CHECK(a["counts"] == b["counts"]);

  auto q = run_cli({"assess", "quality", "--algorithm", "KGW", "--metric", "PPL", "--set", "delta=0",
                    "--limit", "10"});
  REQUIRE(q.status == 0);
  auto qj = json::parse(q.out);
  CHECK(qj["watermarked_mean"] == qj["unwatermarked_mean"]);
}
