#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "wmlab/evaluation.hpp"
#include "wmlab/textmodel.hpp"
#include "wmlab/visualization_data.hpp"

namespace testing {

inline std::filesystem::path source_path(const std::string& rel) {
  return std::filesystem::path(WMLAB_SOURCE_DIR) / rel;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

// The bundled fixture model, loaded once.
inline std::shared_ptr<const wmlab::NGramModel> fixture_model() {
  static auto m = std::make_shared<const wmlab::NGramModel>(
      wmlab::NGramModel::load(source_path("data/model.json")));
  return m;
}

inline const std::vector<wmlab::DatasetRecord>& heldout() {
  static auto d = wmlab::load_dataset(source_path("data/heldout.jsonl"));
  return d;
}

inline const std::vector<wmlab::DatasetRecord>& fixture_dataset() {
  static auto d = wmlab::load_dataset(source_path("data/dataset.jsonl"));
  return d;
}

inline nlohmann::json config_for(const std::string& algo) {
  return nlohmann::json::parse(slurp(source_path("config/" + algo + ".json")));
}

// Inputs behind tests/golden/{discrete,continuous}.svg.
inline wmlab::VisualizationData discrete_fixture() {
  using wmlab::Discrete;
  return {{"The", "quick", "<fox>", "&", "\"friends\"", "ran", "."},
          {wmlab::Unscored{}, Discrete::kGreen, Discrete::kRed, Discrete::kGreen, Discrete::kGreen,
           Discrete::kRed, Discrete::kGreen}};
}

inline wmlab::VisualizationData continuous_fixture() {
  wmlab::VisualizationData d;
  for (int i = 0; i < 40; ++i) {
    d.decoded_tokens.push_back(i % 7 == 0 ? "," : "token" + std::to_string(i));
    if (i == 0) d.highlights.emplace_back(wmlab::Unscored{});
    else d.highlights.emplace_back(wmlab::Continuous{(i % 10) / 10.0});
  }
  return d;
}

struct CliRun {
  int status = -1;
  std::string out;
};

inline std::string shell_quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

// Runs the CLI from the source dir; stderr is discarded.
inline CliRun run_cli(const std::vector<std::string>& args, const std::string& stdin_text = "") {
  std::string cmd = "cd " + shell_quote(WMLAB_SOURCE_DIR) + " && ";
  std::filesystem::path in_file;
  if (!stdin_text.empty()) {
    in_file = std::filesystem::temp_directory_path() /
              ("wmlab-cli-in-" + std::to_string(::getpid()) + ".txt");
    spit(in_file, stdin_text);
  }
  cmd += shell_quote(WMLAB_CLI);
  for (const auto& a : args) cmd += " " + shell_quote(a);
  cmd += in_file.empty() ? " < /dev/null" : " < " + shell_quote(in_file.string());
  cmd += " 2>/dev/null";
  CliRun r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  int st = ::pclose(p);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  if (!in_file.empty()) std::filesystem::remove(in_file);
  return r;
}

}  // namespace testing
