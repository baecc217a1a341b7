// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// gated criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "claimsrisk/codevec.hpp"
#include "claimsrisk/evalkit.hpp"
#include "commands.hpp"
#include "json.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace claimsrisk;
namespace oracle = claimsrisk::testing;

namespace {

// Tolerances and gates.
constexpr double kGradRelTol = 1e-4;
constexpr double kGradEps = 1e-5;
constexpr double kGradSeconds = 60.0;
constexpr double kAucTol = 1e-12;
constexpr int kAucSets = 200;
constexpr int kAttentionDraws = 1000;
constexpr double kRowSumTol = 1e-9;
constexpr std::size_t kMinFixtures = 12;
constexpr double kSaMinAuc = 0.85;
constexpr double kSaMargin = 0.03;
constexpr double kEndToEndSeconds = 30.0 * 60.0;
constexpr std::size_t kPlantedPairs = 100;
constexpr double kRandomPairQuantile = 0.95;

struct Outcome {
  bool pass = false;
  std::string detail;
  bool gated = true;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::string worst_block;
  std::size_t checked = 0;
  for (auto kind : {ModelKind::SelfAttentive, ModelKind::Baseline}) {
    for (std::uint64_t draw = 0; draw < 4; ++draw) {
      const auto params = oracle::random_params(oracle::tiny_hyper(kind), 1000 + draw);
      Rng rng(draw);
      std::uniform_int_distribution<CodeIndex> tok(1, 19);
      std::vector<CodeIndex> tokens(12);
      for (auto& t : tokens) t = tok(rng);
      std::vector<std::uint8_t> mask(12, 1);
      if (draw % 2) mask[11] = mask[10] = mask[4] = 0;
      for (const auto& b : oracle::gradient_check(params, tokens, mask, static_cast<int>(draw % 2), kGradEps)) {
        checked += b.entries;
        if (b.max_rel_error > worst) {
          worst = b.max_rel_error;
          worst_block = std::string(kind_name(kind)) + ":" + b.block;
        }
      }
    }
  }
  const double took = seconds_since(t0);
  return {worst < kGradRelTol && took < kGradSeconds,
          std::to_string(checked) + " entries, max rel error " + fmt("%.2e", worst) + " (" + worst_block + "), " +
              fmt("%.1fs", took)};
}

Outcome auc_oracle() {
  Rng rng(2024);
  double worst_brute = 0.0, worst_area = 0.0;
  for (int i = 0; i < kAucSets; ++i) {
    const std::size_t n = 2 + static_cast<std::size_t>(i) * 198 / (kAucSets - 1);
    const bool ties = i % 2 == 0;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> coarse(0, 5);
    ScoredSet s;
    for (std::size_t k = 0; k < n; ++k) {
      s.scores.push_back(ties ? coarse(rng) / 5.0 : u(rng));
      s.labels.push_back(u(rng) < 0.4 ? 1 : 0);
    }
    s.labels[0] = 1;
    s.labels[1] = 0;
    const double auc = roc_auc(s);
    worst_brute = std::max(worst_brute, std::abs(auc - oracle::brute_force_auc(s.scores, s.labels)));
    worst_area = std::max(worst_area, std::abs(trapezoid_area(roc_curve(s)) - auc));
  }
  return {worst_brute <= kAucTol && worst_area <= kAucTol,
          std::to_string(kAucSets) + " sets, max |auc - brute| " + fmt("%.1e", worst_brute) +
              ", max |area - auc| " + fmt("%.1e", worst_area)};
}

Outcome attention_masking() {
  Rng rng(77);
  double worst_sum = 0.0;
  std::size_t nonzero_masked = 0, pad_sensitive = 0;
  std::uniform_int_distribution<CodeIndex> tok(1, 19);
  std::uniform_int_distribution<std::size_t> len(1, 24);
  std::bernoulli_distribution drop(0.3);
  for (int draw = 0; draw < kAttentionDraws; ++draw) {
    const auto params = oracle::random_params(oracle::tiny_hyper(ModelKind::SelfAttentive),
                                              static_cast<std::uint64_t>(draw), 1.0);
    const auto n = len(rng);
    std::vector<CodeIndex> tokens(n);
    std::vector<std::uint8_t> mask(n);
    for (std::size_t t = 0; t < n; ++t) {
      mask[t] = drop(rng) ? 0 : 1;
      tokens[t] = mask[t] ? tok(rng) : kPadIndex;
    }
    mask[rng() % n] = 1;
    for (std::size_t t = 0; t < n; ++t) {
      if (mask[t] && tokens[t] == kPadIndex) tokens[t] = tok(rng);
    }
    const auto r = forward(params, tokens, mask);
    for (Eigen::Index k = 0; k < r.attention.scores.rows(); ++k) {
      worst_sum = std::max(worst_sum, std::abs(r.attention.scores.row(k).sum() - 1.0));
    }
    for (std::size_t t = 0; t < n; ++t) {
      if (!mask[t] && r.attention.scores.col(static_cast<Eigen::Index>(t)).cwiseAbs().maxCoeff() != 0.0) {
        ++nonzero_masked;
      }
    }
    auto altered = tokens;
    for (std::size_t t = 0; t < n; ++t) {
      if (!mask[t]) altered[t] = tok(rng);
    }
    if (forward(params, altered, mask).probability != r.probability) ++pad_sensitive;
  }
  return {worst_sum <= kRowSumTol && nonzero_masked == 0 && pad_sensitive == 0,
          std::to_string(kAttentionDraws) + " draws, max |row sum - 1| " + fmt("%.1e", worst_sum) +
              ", masked non-zero " + std::to_string(nonzero_masked) + ", PAD-sensitive outputs " +
              std::to_string(pad_sensitive)};
}

Outcome cohort_rules() {
  const auto sets = oracle::fixture_code_sets();
  const auto fixtures = oracle::cohort_fixtures();
  std::vector<Timeline> all;
  std::set<std::string> expected_diabetics;
  for (const auto& f : fixtures) {
    all.push_back(f.timeline);
    if (f.diabetic) expected_diabetics.insert(f.timeline.individual_id);
  }
  std::vector<std::string> failures;
  if (find_diabetics(all, sets) != expected_diabetics) failures.emplace_back("diabetic set");

  const auto cohort = build_cohort(all, sets, 60, 9);
  std::map<std::string, const CohortSample*> by_id;
  for (const auto& s : cohort.samples) by_id[s.individual_id] = &s;
  for (const auto& f : fixtures) {
    if (first_complication(f.timeline, sets) != f.complication) failures.push_back(f.name + ": complication");
    std::optional<CohortSample> s;
    if (f.diabetic && f.complication) {
      s = extract_positive_window(f.timeline, *f.complication, f.gap_days);
    } else if (f.diabetic) {
      Rng rng(1);
      s = extract_negative_window(f.timeline, f.gap_days, rng);
    }
    if (s.has_value() != f.window_present) {
      failures.push_back(f.name + ": window presence");
      continue;
    }
    if (f.gap_days == 60 && (by_id.count(f.timeline.individual_id) > 0) != f.window_present) {
      failures.push_back(f.name + ": build_cohort membership");
    }
    if (!s) continue;
    const bool ok = s->label == (f.complication ? 1 : 0) && s->index_date == f.index_date &&
                    s->codes.size() == f.window_length && s->record_dates.front() == f.window_first &&
                    s->record_dates.back() == f.window_last &&
                    std::none_of(s->codes.begin(), s->codes.end(),
                                 [&](const std::string& c) { return sets.complication_class_of(c).has_value(); });
    if (!ok) failures.push_back(f.name + ": window contents");
  }
  std::string detail = std::to_string(fixtures.size()) + " fixtures";
  for (const auto& f : failures) detail += "; " + f;
  return {fixtures.size() >= kMinFixtures && failures.empty(), detail};
}

std::map<std::pair<int, std::string>, double> read_means(const fs::path& aggregate) {
  std::map<std::pair<int, std::string>, double> out;
  const auto j = nlohmann::json::parse(slurp(aggregate));
  for (const auto& e : j.at("entries")) {
    out[{e.at("gap_days").get<int>(), e.at("model").get<std::string>()}] = e.at("mean_auc").get<double>();
  }
  return out;
}

Outcome end_to_end(const fs::path& run_dir, double took, const RunConfig& config) {
  std::string detail;
  bool ok = config.get_u64("synth.n_individuals") == 2000 && config.get_double("synth.complication_fraction") == 0.05;
  if (!ok) detail += "config is not n_individuals=2000, complication_fraction=0.05; ";
  const auto means = read_means(run_dir / "aggregate.json");
  for (int gap : kDefaultGaps) {
    const auto sa = means.find({gap, "sa"});
    const auto base = means.find({gap, "baseline"});
    if (sa == means.end() || base == means.end()) {
      ok = false;
      detail += "gap " + std::to_string(gap) + " missing; ";
      continue;
    }
    detail += "gap " + std::to_string(gap) + " SA " + fmt("%.3f", sa->second) + " / LSTM " +
              fmt("%.3f", base->second) + "; ";
    ok = ok && sa->second > base->second;
    if (gap == 60) ok = ok && sa->second >= kSaMinAuc && sa->second - base->second >= kSaMargin;
  }
  ok = ok && took < kEndToEndSeconds;
  detail += fmt("%.0fs", took);
  return {ok, detail};
}

Outcome gap_trend(const fs::path& run_dir) {
  const auto j = nlohmann::json::parse(slurp(run_dir / "report.json"));
  std::string detail;
  bool monotone = true;
  for (const auto& [model, t] : j.at("gap_trend").items()) {
    monotone = monotone && t.at("non_increasing").get<bool>();
    detail += model + (t.at("non_increasing").get<bool>() ? " non-increasing" : " deviates:");
    for (const auto& d : t.at("deviations")) detail += " " + d.get<std::string>();
    detail += "; ";
  }
  return {monotone, detail, false};
}

Outcome determinism(const fs::path& workdir, const RunConfig& config) {
  std::string detail;
  std::vector<std::pair<std::string, std::string>> outputs;
  for (int i = 0; i < 2; ++i) {
    const auto dir = workdir / ("determinism_" + std::to_string(i));
    fs::remove_all(dir);
    std::ofstream log(workdir / ("determinism_" + std::to_string(i) + ".log"));
    cli::Context ctx{config, dir, std::nullopt, &log, &log};
    cli::cmd_run_all(ctx);
    outputs.emplace_back(slurp(dir / "aggregate.json"), slurp(dir / "report.json"));
  }
  const bool same = outputs[0] == outputs[1] && !outputs[0].first.empty();
  return {same, std::string("aggregate.json ") + (outputs[0].first == outputs[1].first ? "identical" : "differs") +
                    ", report.json " + (outputs[0].second == outputs[1].second ? "identical" : "differs")};
}

Outcome skipgram_sanity(const fs::path& run_dir) {
  std::ifstream vin(run_dir / "embed" / "vocab.csv");
  const auto vocab = Vocabulary::read_csv(vin);
  std::ifstream tin(run_dir / "embed" / "embeddings.txt");
  const auto table = EmbeddingTable::read(tin, vocab);
  const auto sets = CodeSets::load((run_dir / "codesets.cfg").string());
  if (sets.planted_pairs.size() < kPlantedPairs) return {false, "fewer than 100 planted pairs"};

  Rng rng(8);
  std::uniform_int_distribution<CodeIndex> pick(kUnkIndex + 1, static_cast<CodeIndex>(vocab.size()) - 1);
  std::vector<double> random_cos;
  while (random_cos.size() < 20000) {
    const auto a = pick(rng), b = pick(rng);
    if (a == b) continue;
    random_cos.push_back(cosine(table.vectors.row(a).transpose(), table.vectors.row(b).transpose()));
  }
  std::sort(random_cos.begin(), random_cos.end());
  const double threshold = random_cos[static_cast<std::size_t>(kRandomPairQuantile * random_cos.size())];
  std::size_t above = 0;
  double lowest = 1.0;
  for (std::size_t i = 0; i < kPlantedPairs; ++i) {
    const auto& [x, y] = sets.planted_pairs[i];
    if (!vocab.contains(x) || !vocab.contains(y)) continue;
    const double c = cosine(table.vectors.row(vocab.index_of(x)).transpose(),
                            table.vectors.row(vocab.index_of(y)).transpose());
    lowest = std::min(lowest, c);
    above += c > threshold;
  }
  return {above == kPlantedPairs, std::to_string(above) + "/" + std::to_string(kPlantedPairs) +
                                      " planted pairs above the random-pair 95th percentile " +
                                      fmt("%.3f", threshold) + " (lowest planted " + fmt("%.3f", lowest) + ")"};
}

// Mean aggregate attention on risk-marker records vs background records,
// over held-out positives of every gap.
Outcome attention_on_markers(const fs::path& run_dir, const RunConfig& config) {
  const auto sets = CodeSets::load((run_dir / "codesets.cfg").string());
  std::ifstream vin(run_dir / "embed" / "vocab.csv");
  const auto vocab = Vocabulary::read_csv(vin);
  double marker = 0.0, background = 0.0;
  std::size_t samples = 0;
  for (int gap : config.gaps()) {
    std::ifstream cin(run_dir / "cohort" / ("gap" + std::to_string(gap) + ".jsonl"));
    const auto cohort = read_cohort_jsonl(cin);
    std::map<std::string, const CohortSample*> by_id;
    for (const auto& s : cohort) by_id[s.individual_id] = &s;
    const auto dir = run_dir / "train" / ("gap" + std::to_string(gap) + "_sa");
    for (int f = 0; fs::exists(dir / ("fold" + std::to_string(f))); ++f) {
      const auto fold = dir / ("fold" + std::to_string(f));
      const auto params = load_checkpoint_file((fold / "checkpoint").string());
      std::ifstream sin(fold / "scores.csv");
      const auto held_out = read_scores_csv(sin);
      for (std::size_t i = 0; i < held_out.ids.size(); ++i) {
        if (held_out.labels[i] != 1) continue;
        const auto att = attention_of(params, vocab, *by_id.at(held_out.ids[i]));
        double m = 0, b = 0;
        std::size_t nm = 0, nb = 0;
        for (std::size_t t = 0; t < att.codes.size(); ++t) {
          const double a = att.map.aggregate(static_cast<Eigen::Index>(t));
          if (sets.risk_markers.count(att.codes[t])) {
            m += a;
            ++nm;
          } else {
            b += a;
            ++nb;
          }
        }
        if (nm == 0 || nb == 0) continue;
        marker += m / static_cast<double>(nm);
        background += b / static_cast<double>(nb);
        ++samples;
      }
    }
  }
  if (samples == 0) return {false, "no held-out positives"};
  marker /= static_cast<double>(samples);
  background /= static_cast<double>(samples);
  return {samples >= 100 && marker > background, std::to_string(samples) + " positives, mean marker attention " +
                                                     fmt("%.5f", marker) + " vs background " + fmt("%.5f", background)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"claimsrisk acceptance suite"};
  std::string config_path;
  std::string workdir = "acceptance_runs";
  std::vector<int> only;
  app.add_option("--config", config_path, "desk configuration for the end-to-end criteria")->check(CLI::ExistingFile);
  app.add_option("--workdir", workdir, "scratch directory for pipeline runs");
  app.add_option("--only", only, "criteria to run (default: all)")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  RunConfig config;
  if (!config_path.empty()) config.merge_file(config_path);
  const fs::path root(workdir);
  fs::create_directories(root);
  const auto wanted = [&](int n) { return only.empty() || std::find(only.begin(), only.end(), n) != only.end(); };

  bool all_pass = true;
  const auto report = [&](const std::string& label, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const char* verdict = o.pass ? "PASS" : (o.gated ? "FAIL" : "REPORTED (deviations)");
    if (!o.gated && o.pass) verdict = "REPORTED (holds)";
    std::cout << label << ": " << verdict << " - " << o.detail << std::endl;
    if (o.gated && !o.pass) all_pass = false;
  };

  if (wanted(1)) report("criterion 1 gradient correctness", gradient_correctness);
  if (wanted(2)) report("criterion 2 AUC oracle equivalence", auc_oracle);
  if (wanted(3)) report("criterion 3 attention stochasticity and masking", attention_masking);
  if (wanted(4)) report("criterion 4 cohort rules", cohort_rules);

  const auto run_dir = root / "end_to_end";
  const bool need_run = wanted(5) || wanted(6) || wanted(8);
  double took = 0.0;
  std::string run_error;
  if (need_run) {
    fs::remove_all(run_dir);
    std::ofstream log(root / "end_to_end.log");
    const auto t0 = std::chrono::steady_clock::now();
    try {
      cli::cmd_run_all(cli::Context{config, run_dir, std::nullopt, &log, &log});
    } catch (const std::exception& e) {
      run_error = e.what();
    }
    took = seconds_since(t0);
  }
  const auto after_run = [&](std::function<Outcome()> fn) {
    return [&, fn]() -> Outcome {
      if (!run_error.empty()) return {false, "run-all failed: " + run_error};
      return fn();
    };
  };
  if (wanted(5)) {
    report("criterion 5 end-to-end synthetic gate", after_run([&] { return end_to_end(run_dir, took, config); }));
    report("  supplementary: attention favours risk markers",
           after_run([&] { return attention_on_markers(run_dir, config); }));
  }
  if (wanted(6)) report("criterion 6 monotonic gap trend (not gated)", after_run([&] { return gap_trend(run_dir); }));
  if (wanted(7)) {
    // Two complete runs: a reduced population keeps this affordable.
    RunConfig small = config;
    small.set("synth.n_individuals", "400");
    small.set("synth.complication_fraction", "0.1");
    small.set("gaps", "60,120");
    small.set("train.epochs", "2");
    report("criterion 7 determinism", [&] { return determinism(root, small); });
  }
  if (wanted(8)) report("criterion 8 skipgram sanity", after_run([&] { return skipgram_sanity(run_dir); }));

  std::cout << (all_pass ? "acceptance: all gated criteria pass" : "acceptance: FAILURES present") << std::endl;
  return all_pass ? 0 : 1;
}
