#include "wmlab/evaluation.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "wmlab/errors.hpp"

namespace wmlab {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ClassificationReport classify(const ScoreSet& s, double threshold) {
  if (s.positives.empty() || s.negatives.empty())
    throw DataError("score set needs both positive and negative scores");
  auto flagged = [&](double v) {
    return s.higher_is_watermarked ? v >= threshold : v <= threshold;
  };
  ClassificationReport r;
  r.threshold = threshold;
  for (double v : s.positives) (flagged(v) ? r.tp : r.fn)++;
  for (double v : s.negatives) (flagged(v) ? r.fp : r.tn)++;
  const auto pos = static_cast<double>(s.positives.size());
  const auto neg = static_cast<double>(s.negatives.size());
  r.tpr = static_cast<double>(r.tp) / pos;
  r.fnr = 1.0 - r.tpr;
  r.fpr = static_cast<double>(r.fp) / neg;
  r.tnr = 1.0 - r.fpr;
  r.recall = r.tpr;
  r.precision = (r.tp + r.fp) > 0 ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp) : 0.0;
  r.f1 = (r.precision + r.recall) > 0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  r.accuracy = static_cast<double>(r.tp + r.tn) / (pos + neg);
  return r;
}

std::vector<std::string> ngrams(const std::vector<std::string>& words, std::size_t n) {
  std::vector<std::string> out;
  if (words.size() < n) return out;
  for (std::size_t i = 0; i + n <= words.size(); ++i) {
    std::string g = words[i];
    for (std::size_t k = 1; k < n; ++k) (g += '\x1f') += words[i + k];
    out.push_back(std::move(g));
  }
  return out;
}

std::map<std::string, std::size_t> count_ngrams(const std::vector<std::string>& words,
                                                std::size_t n) {
  std::map<std::string, std::size_t> out;
  for (auto& g : ngrams(words, n)) ++out[g];
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Calculators

double ClassificationReport::rate(std::string_view label) const {
  if (label == "TPR") return tpr;
  if (label == "TNR") return tnr;
  if (label == "FPR") return fpr;
  if (label == "FNR") return fnr;
  if (label == "P") return precision;
  if (label == "R") return recall;
  if (label == "F1") return f1;
  if (label == "ACC") return accuracy;
  throw Error(ErrorCode::kInvalidArgument, "unknown rate label: " + std::string(label));
}

nlohmann::json ClassificationReport::to_json(std::span<const std::string> labels) const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& l : labels) j[l] = rate(l);
  return j;
}

ClassificationReport fundamental_success_rate(const ScoreSet& scores, double threshold) {
  require(std::isfinite(threshold), "threshold must be finite");
  return classify(scores, threshold);
}

ThresholdRule parse_threshold_rule(std::string_view name) {
  if (name == "best") return ThresholdRule::kBest;
  if (name == "target_fpr") return ThresholdRule::kTargetFpr;
  throw Error(ErrorCode::kInvalidArgument, "unknown threshold rule: " + std::string(name));
}

std::vector<double> candidate_thresholds(const ScoreSet& scores) {
  std::vector<double> pooled(scores.positives);
  pooled.insert(pooled.end(), scores.negatives.begin(), scores.negatives.end());
  for (double v : pooled) if (std::isnan(v)) throw DataError("score set contains NaN");
  std::sort(pooled.begin(), pooled.end());
  pooled.erase(std::unique(pooled.begin(), pooled.end()), pooled.end());
  std::vector<double> out{-kInf};
  for (std::size_t i = 0; i + 1 < pooled.size(); ++i)
    out.push_back(pooled[i] + (pooled[i + 1] - pooled[i]) / 2.0);
  out.push_back(kInf);
  return out;
}

ClassificationReport dynamic_threshold_success_rate(const ScoreSet& scores, ThresholdRule rule,
                                                    std::optional<double> target_fpr) {
  const std::vector<double> cands = candidate_thresholds(scores);
  if (rule == ThresholdRule::kBest) {
    ClassificationReport best = classify(scores, cands.front());
    for (std::size_t i = 1; i < cands.size(); ++i) {
      ClassificationReport r = classify(scores, cands[i]);
      if (r.f1 > best.f1) best = r;
    }
    return best;
  }
  require(target_fpr && *target_fpr > 0.0 && *target_fpr < 1.0,
          "target_fpr rule needs a target in (0, 1)");
  // Walk from strictest to most permissive; keep the last admissible one.
  std::vector<double> order(cands);
  if (!scores.higher_is_watermarked) std::reverse(order.begin(), order.end());
  std::optional<ClassificationReport> chosen;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    ClassificationReport r = classify(scores, *it);
    if (r.fpr > *target_fpr) break;
    chosen = r;
  }
  return *chosen;
}

// ---------------------------------------------------------------------------
// Quality analyzers

double log_diversity(std::string_view text) {
  const auto words = split_words(text).words;
  if (words.size() < 5) throw DataError("log diversity needs at least 5 tokens");
  double product = 1.0;
  for (std::size_t n = 2; n <= 4; ++n) {
    auto grams = ngrams(words, n);
    std::set<std::string> distinct(grams.begin(), grams.end());
    product *= static_cast<double>(distinct.size()) / static_cast<double>(grams.size());
  }
  product = std::min(product, 1.0 - 1e-6);
  return -std::log(1.0 - product);
}

double bleu(std::string_view hypothesis, std::span<const std::string> references) {
  const auto hyp = split_words(hypothesis).words;
  if (hyp.empty()) throw DataError("BLEU: empty hypothesis");
  if (references.empty()) throw DataError("BLEU: no reference");
  std::vector<std::vector<std::string>> refs;
  for (const auto& r : references) refs.push_back(split_words(r).words);

  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    auto hyp_counts = count_ngrams(hyp, n);
    std::map<std::string, std::size_t> max_ref;
    for (const auto& r : refs)
      for (auto& [g, c] : count_ngrams(r, n)) max_ref[g] = std::max(max_ref[g], c);
    std::size_t matches = 0;
    for (auto& [g, c] : hyp_counts) {
      auto it = max_ref.find(g);
      if (it != max_ref.end()) matches += std::min(c, it->second);
    }
    const std::size_t total = hyp.size() >= n ? hyp.size() - n + 1 : 0;
    double p;
    if (n == 1) {
      if (matches == 0) return 0.0;
      p = static_cast<double>(matches) / static_cast<double>(total);
    } else if (matches == 0) {
      p = 1.0 / static_cast<double>(total + 1);
    } else {
      p = static_cast<double>(matches) / static_cast<double>(total);
    }
    log_sum += std::log(p) / 4.0;
  }

  const auto c = static_cast<double>(hyp.size());
  double r = static_cast<double>(refs.front().size());
  for (const auto& ref : refs) {
    const auto len = static_cast<double>(ref.size());
    if (std::fabs(len - c) < std::fabs(r - c) || (std::fabs(len - c) == std::fabs(r - c) && len < r))
      r = len;
  }
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  return bp * std::exp(log_sum);
}

JudgeOutcome command_judger(std::string_view generated, std::string_view command_template,
                            double timeout_seconds) {
  if (command_template.find("{file}") == std::string_view::npos)
    throw Error(ErrorCode::kInvalidArgument, "judge command must reference {file}");
  const char* tmpdir = std::getenv("TMPDIR");
  std::string path = std::string(tmpdir && *tmpdir ? tmpdir : "/tmp") + "/wmlab-judge-XXXXXX";
  int fd = ::mkstemp(path.data());
  if (fd < 0) throw IoError("cannot create judge temp file");
  std::size_t written = 0;
  while (written < generated.size()) {
    ssize_t n = ::write(fd, generated.data() + written, generated.size() - written);
    if (n <= 0) break;
    written += static_cast<std::size_t>(n);
  }
  ::close(fd);
  const std::string command = render_template(command_template, {{"file", path}});

  JudgeOutcome out;
  pid_t pid = ::fork();
  if (pid < 0) {
    ::unlink(path.c_str());
    throw IoError("fork failed");
  }
  if (pid == 0) {
    ::setpgid(0, 0);
    int devnull = ::open("/dev/null", O_RDWR);
    if (devnull >= 0) {
      ::dup2(devnull, STDIN_FILENO);
      ::dup2(devnull, STDOUT_FILENO);
      ::dup2(devnull, STDERR_FILENO);
    }
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::setpgid(pid, pid);
  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::duration<double>(timeout_seconds);
  int status = 0;
  for (;;) {
    pid_t r = ::waitpid(pid, &status, WNOHANG);
    if (r == pid) break;
    if (std::chrono::steady_clock::now() >= deadline) {
      ::killpg(pid, SIGKILL);
      ::waitpid(pid, &status, 0);
      out.timed_out = true;
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  ::unlink(path.c_str());
  if (!out.timed_out && WIFEXITED(status)) {
    out.exit_status = WEXITSTATUS(status);
    out.pass = out.exit_status == 0;
  }
  return out;
}

DiscriminatorResult external_discriminator(std::span<const DiscriminatorPair> pairs,
                                           const ChatClient& judge, std::uint64_t seed,
                                           std::string_view prompt_template) {
  DiscriminatorResult out;
  out.requested = pairs.size();
  PrngState rng{seed};
  double total = 0.0;
  for (const auto& pair : pairs) {
    const bool watermarked_first = rng.next_below(2) == 0;
    const std::string& first = watermarked_first ? pair.watermarked : pair.unwatermarked;
    const std::string& second = watermarked_first ? pair.unwatermarked : pair.watermarked;
    std::string reply;
    try {
      reply = judge.complete(render_template(
          prompt_template, {{"task", pair.task}, {"first", first}, {"second", second}}));
    } catch (const AttackUnavailable&) {
      out.per_pair.emplace_back(std::nullopt);
      ++out.skipped;
      continue;
    }
    auto start = reply.find_first_not_of(" \t\r\n\"'");
    char pick = start == std::string::npos ? '\0' : reply[start];
    double win = 0.5;
    if (pick == '1') win = watermarked_first ? 1.0 : 0.0;
    else if (pick == '2') win = watermarked_first ? 0.0 : 1.0;
    out.per_pair.emplace_back(win);
    total += win;
    ++out.completed;
  }
  if (out.completed == 0) throw DataError("external discriminator: no pair completed");
  out.win_rate = total / static_cast<double>(out.completed);
  return out;
}

// ---------------------------------------------------------------------------
// Datasets

std::vector<DatasetRecord> parse_dataset(std::string_view jsonl) {
  std::vector<DatasetRecord> out;
  std::istringstream in{std::string(jsonl)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      DatasetRecord rec;
      rec.prompt = j.at("prompt").get<std::string>();
      rec.natural_text = j.at("natural_text").get<std::string>();
      if (auto it = j.find("reference"); it != j.end() && !it->is_null())
        rec.reference = it->get<std::string>();
      out.push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read dataset " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str());
}

// ---------------------------------------------------------------------------
// Pipelines

void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max(1u, jobs);
  if (jobs == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    for (unsigned j = 0; j < std::min<std::size_t>(jobs, n); ++j) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

nlohmann::json DetectionScores::counts_json() const {
  return {{"requested", requested},
          {"completed", completed},
          {"skipped", skipped},
          {"skipped_unavailable", skipped_unavailable},
          {"skipped_insufficient_text", skipped_insufficient}};
}

namespace {

enum class SlotState { kDone, kUnavailable, kInsufficient };

struct Slot {
  SlotState state = SlotState::kDone;
  double score = 0.0;
  std::string text;
};

std::span<const DatasetRecord> limited(std::span<const DatasetRecord> d, std::size_t limit) {
  return limit > 0 && limit < d.size() ? d.first(limit) : d;
}

DetectionScores collect(std::vector<Slot>& slots) {
  DetectionScores out;
  out.requested = slots.size();
  for (std::size_t i = 0; i < slots.size(); ++i) {
    switch (slots[i].state) {
      case SlotState::kDone:
        out.scores.push_back(slots[i].score);
        out.record_index.push_back(i);
        out.texts.push_back(std::move(slots[i].text));
        ++out.completed;
        break;
      case SlotState::kUnavailable: ++out.skipped_unavailable; ++out.skipped; break;
      case SlotState::kInsufficient: ++out.skipped_insufficient; ++out.skipped; break;
    }
  }
  if (out.completed == 0 && out.requested > 0)
    throw DataError("every sample was skipped (" + std::to_string(out.skipped_unavailable) +
                    " attack unavailable, " + std::to_string(out.skipped_insufficient) +
                    " insufficient text)");
  return out;
}

void score_text(const Watermark& wm, const AttackSpec* attack, std::size_t index,
                std::string text, Slot& slot) {
  try {
    if (attack) text = attack->apply(text, index);
  } catch (const AttackUnavailable&) {
    slot.state = SlotState::kUnavailable;
    return;
  }
  try {
    slot.score = wm.detect(text).score;
    slot.text = std::move(text);
  } catch (const InsufficientText&) {
    slot.state = SlotState::kInsufficient;
  }
}

}  // namespace

DetectionScores pipeline_wmdetect(std::span<const DatasetRecord> dataset, const Watermark& wm,
                                  const AttackSpec* attack, const PipelineOptions& opts) {
  dataset = limited(dataset, opts.limit);
  if (dataset.empty()) throw DataError("empty dataset");
  if (attack) attack->validate();
  std::vector<Slot> slots(dataset.size());
  parallel_for(dataset.size(), opts.jobs, [&](std::size_t i) {
    auto prompt = tokenize(dataset[i].prompt, wm.model().vocab()).token_ids;
    auto ids = wm.generate_watermarked_ids(prompt, opts.max_tokens, derive_seed(opts.seed, i));
    score_text(wm, attack, i, detokenize(ids, wm.model().vocab()), slots[i]);
  });
  return collect(slots);
}

DetectionScores pipeline_uwmdetect(std::span<const DatasetRecord> dataset, const Watermark& wm,
                                   NegativeSource source, const PipelineOptions& opts,
                                   const AttackSpec* attack) {
  dataset = limited(dataset, opts.limit);
  if (dataset.empty()) throw DataError("empty dataset");
  if (attack) attack->validate();
  std::vector<Slot> slots(dataset.size());
  parallel_for(dataset.size(), opts.jobs, [&](std::size_t i) {
    std::string text;
    if (source == NegativeSource::kNaturalText) {
      text = dataset[i].natural_text;
    } else {
      auto prompt = tokenize(dataset[i].prompt, wm.model().vocab()).token_ids;
      text = detokenize(
          wm.generate_unwatermarked_ids(prompt, opts.max_tokens, derive_seed(opts.seed, i)),
          wm.model().vocab());
    }
    score_text(wm, attack, i, std::move(text), slots[i]);
  });
  return collect(slots);
}

ScoreSet make_score_set(const DetectionScores& positives, const DetectionScores& negatives,
                        ScoreOrientation orientation) {
  return {positives.scores, negatives.scores,
          orientation == ScoreOrientation::kHigherIsWatermarked};
}

QualityMetric parse_quality_metric(std::string_view name) {
  if (name == "PPL") return QualityMetric::kPPL;
  if (name == "Log-Diversity" || name == "Log Diversity") return QualityMetric::kLogDiversity;
  if (name == "BLEU") return QualityMetric::kBLEU;
  if (name == "Pass") return QualityMetric::kPass;
  if (name == "GPT-Judge") return QualityMetric::kGPTJudge;
  throw Error(ErrorCode::kInvalidArgument, "unknown quality metric: " + std::string(name));
}

std::string_view to_string(QualityMetric metric) {
  switch (metric) {
    case QualityMetric::kPPL: return "PPL";
    case QualityMetric::kLogDiversity: return "Log-Diversity";
    case QualityMetric::kBLEU: return "BLEU";
    case QualityMetric::kPass: return "Pass";
    case QualityMetric::kGPTJudge: return "GPT-Judge";
  }
  return "?";
}

QualityKind natural_kind(QualityMetric metric) {
  switch (metric) {
    case QualityMetric::kPPL:
    case QualityMetric::kLogDiversity: return QualityKind::kDirect;
    case QualityMetric::kBLEU:
    case QualityMetric::kPass: return QualityKind::kRef;
    case QualityMetric::kGPTJudge: return QualityKind::kExDis;
  }
  return QualityKind::kDirect;
}

nlohmann::json QualityReport::to_json() const {
  nlohmann::json pairs = nlohmann::json::array();
  for (auto [w, u] : per_sample) pairs.push_back({{"watermarked", w}, {"unwatermarked", u}});
  return {{"metric", metric},
          {"watermarked_mean", watermarked_mean},
          {"unwatermarked_mean", unwatermarked_mean},
          {"direction", direction},
          {"counts", {{"requested", requested}, {"completed", completed}, {"skipped", skipped}}},
          {"per_sample", std::move(pairs)}};
}

QualityReport pipeline_quality(QualityKind kind, std::span<const DatasetRecord> dataset,
                               const Watermark& wm, const QualityAnalyzer& analyzer,
                               const PipelineOptions& opts) {
  if (natural_kind(analyzer.metric) != kind)
    throw Error(ErrorCode::kInvalidArgument, "analyzer " + std::string(to_string(analyzer.metric)) +
                                                 " does not fit this quality pipeline");
  if (analyzer.metric == QualityMetric::kPass && analyzer.command_template.empty())
    throw Error(ErrorCode::kInvalidArgument, "Pass metric needs a judge command");
  if (analyzer.metric == QualityMetric::kGPTJudge && !analyzer.judge)
    throw AttackUnavailable("GPT-Judge metric needs a judge endpoint");
  dataset = limited(dataset, opts.limit);
  if (dataset.empty()) throw DataError("empty dataset");

  const Vocabulary& vocab = wm.model().vocab();
  struct Pair {
    std::vector<TokenId> prompt, wm_ids, uwm_ids;
    std::string wm_text, uwm_text;
    std::optional<std::pair<double, double>> values;
  };
  std::vector<Pair> pairs(dataset.size());
  parallel_for(dataset.size(), opts.jobs, [&](std::size_t i) {
    Pair& p = pairs[i];
    p.prompt = tokenize(dataset[i].prompt, vocab).token_ids;
    const std::uint64_t seed = derive_seed(opts.seed, i);
    p.wm_ids = wm.generate_watermarked_ids(p.prompt, opts.max_tokens, seed);
    p.uwm_ids = wm.generate_unwatermarked_ids(p.prompt, opts.max_tokens, seed);
    p.wm_text = detokenize(p.wm_ids, vocab);
    p.uwm_text = detokenize(p.uwm_ids, vocab);
    switch (analyzer.metric) {
      case QualityMetric::kPPL:
        p.values = {perplexity(wm.model(), p.wm_ids, p.prompt),
                    perplexity(wm.model(), p.uwm_ids, p.prompt)};
        break;
      case QualityMetric::kLogDiversity:
        try {
          p.values = {log_diversity(p.wm_text), log_diversity(p.uwm_text)};
        } catch (const DataError&) {
        }
        break;
      case QualityMetric::kBLEU:
        if (dataset[i].reference) {
          std::vector<std::string> refs{*dataset[i].reference};
          p.values = {bleu(p.wm_text, refs), bleu(p.uwm_text, refs)};
        }
        break;
      case QualityMetric::kPass: {
        auto a = command_judger(p.wm_text, analyzer.command_template, analyzer.timeout_seconds);
        auto b = command_judger(p.uwm_text, analyzer.command_template, analyzer.timeout_seconds);
        p.values = {a.pass ? 1.0 : 0.0, b.pass ? 1.0 : 0.0};
        break;
      }
      case QualityMetric::kGPTJudge:
        break;
    }
  });

  if (analyzer.metric == QualityMetric::kGPTJudge) {
    std::vector<DiscriminatorPair> dpairs;
    for (const auto& p : pairs)
      dpairs.push_back({p.wm_text, p.uwm_text, analyzer.task_description});
    DiscriminatorResult res = external_discriminator(dpairs, *analyzer.judge, opts.seed);
    for (std::size_t i = 0; i < pairs.size(); ++i)
      if (res.per_pair[i]) pairs[i].values = {*res.per_pair[i], 1.0 - *res.per_pair[i]};
  }

  QualityReport report;
  report.metric = std::string(to_string(analyzer.metric));
  report.requested = pairs.size();
  double wsum = 0.0, usum = 0.0;
  for (const auto& p : pairs) {
    if (!p.values) {
      ++report.skipped;
      continue;
    }
    report.per_sample.push_back(*p.values);
    wsum += p.values->first;
    usum += p.values->second;
    ++report.completed;
  }
  if (report.completed == 0) throw DataError("quality pipeline: no sample completed");
  report.watermarked_mean = wsum / static_cast<double>(report.completed);
  report.unwatermarked_mean = usum / static_cast<double>(report.completed);
  report.direction = report.watermarked_mean > report.unwatermarked_mean   ? "up"
                     : report.watermarked_mean < report.unwatermarked_mean ? "down"
                                                                           : "none";
  return report;
}

}  // namespace wmlab
