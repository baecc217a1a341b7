#include "commands.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "claimsrisk/codevec.hpp"
#include "claimsrisk/evalkit.hpp"
#include "claimsrisk/records.hpp"
#include "claimsrisk/synthgen.hpp"
#include "claimsrisk/trainer.hpp"
#include "json.hpp"

namespace claimsrisk::cli {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

std::ostream& log(const Context& ctx) { return ctx.log ? *ctx.log : std::cerr; }
std::ostream& result_stream(const Context& ctx) { return ctx.out_stream ? *ctx.out_stream : std::cout; }

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  return in;
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

fs::path cohort_file(const Context& ctx, int gap) {
  return ctx.out / "cohort" / ("gap" + std::to_string(gap) + ".jsonl");
}
fs::path embed_dir(const Context& ctx) { return ctx.out / "embed"; }
std::string experiment_name(int gap, ModelKind kind) {
  return "gap" + std::to_string(gap) + "_" + std::string(kind_name(kind));
}
fs::path train_dir(const Context& ctx, int gap, ModelKind kind) {
  return ctx.out / "train" / experiment_name(gap, kind);
}

void write_run_manifest(const Context& ctx) {
  const auto& c = ctx.config;
  ordered_json j;
  ordered_json config = ordered_json::object();
  for (const auto& o : config_options()) config[std::string(o.key)] = c.get(o.key);
  j["config"] = config;
  ordered_json seeds;
  seeds["synth"] = c.seed();
  seeds["cohort"] = c.cohort_seed();
  seeds["embed"] = c.embed_seed();
  ordered_json train = ordered_json::object();
  for (int g : c.gaps()) train[std::to_string(g)] = c.train_seed(g);
  seeds["train"] = train;
  j["seeds"] = seeds;
  write_text(ctx.out / "run.json", j.dump(2) + "\n");
}

std::vector<AggregateEntry> read_aggregate(const fs::path& path) {
  std::vector<AggregateEntry> out;
  if (!fs::exists(path)) return out;
  auto in = open_in(path);
  const auto j = nlohmann::json::parse(in);
  for (const auto& e : j.at("entries")) {
    AggregateEntry a;
    a.gap_days = e.at("gap_days").get<int>();
    a.model = parse_kind(e.at("model").get<std::string>());
    a.mean_auc = e.at("mean_auc").get<double>();
    a.sd_auc = e.at("sd_auc").get<double>();
    a.fold_aucs = e.at("fold_aucs").get<std::vector<double>>();
    out.push_back(std::move(a));
  }
  return out;
}

void write_aggregate(const fs::path& path, std::vector<AggregateEntry> entries) {
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    return a.gap_days != b.gap_days ? a.gap_days < b.gap_days : a.model < b.model;
  });
  ordered_json j;
  j["entries"] = ordered_json::array();
  for (const auto& e : entries) {
    ordered_json row;
    row["gap_days"] = e.gap_days;
    row["model"] = std::string(kind_name(e.model));
    row["mean_auc"] = e.mean_auc;
    row["sd_auc"] = e.sd_auc.value_or(0.0);
    row["fold_aucs"] = e.fold_aucs;
    j["entries"].push_back(row);
  }
  write_text(path, j.dump(2) + "\n");
}

std::vector<CohortSample> load_cohort(const Context& ctx, int gap) {
  const auto path = cohort_file(ctx, gap);
  if (!fs::exists(path)) throw Error("missing cohort " + path.string() + " (run `cohort` first)");
  auto in = open_in(path);
  return read_cohort_jsonl(in);
}

struct Embedding {
  Vocabulary vocab;
  EmbeddingTable table;
};

Embedding load_embedding(const Context& ctx) {
  const auto dir = embed_dir(ctx);
  auto vin = open_in(dir / "vocab.csv");
  Embedding e{Vocabulary::read_csv(vin), {}};
  auto tin = open_in(dir / "embeddings.txt");
  e.table = EmbeddingTable::read(tin, e.vocab);
  return e;
}

std::string describe_code(const CodeSets& sets, const std::string& code) {
  if (sets.hba1c.count(code)) return "glycated hemoglobin test";
  if (sets.risk_markers.count(code)) return "risk marker";
  if (const auto cls = sets.complication_class_of(code)) return std::string(class_name(*cls));
  return "procedure";
}

}  // namespace

fs::path records_path(const Context& ctx) {
  const auto& p = ctx.config.get("records_path");
  return p.empty() ? ctx.out / "records.csv" : fs::path(p);
}

fs::path codesets_path(const Context& ctx) {
  const auto& p = ctx.config.get("codesets_path");
  return p.empty() ? ctx.out / "codesets.cfg" : fs::path(p);
}

void cmd_synth(const Context& ctx) {
  const auto config = ctx.config.synth_config();
  const auto records = records_path(ctx);
  SynthManifest manifest;
  {
    auto out = open_out(records);
    manifest = generate_population(config, out);
  }
  {
    auto out = open_out(codesets_path(ctx));
    manifest.code_sets.write(out);
  }
  auto in = open_in(records);
  const auto stats = describe_population(in, manifest.code_sets);
  write_text(ctx.out / "population.json", stats_json(stats) + "\n");
  log(ctx) << "synth: " << stats.individuals << " individuals, " << stats.records << " records, "
           << manifest.positive_ids.size() << " planted complications\n";
  result_stream(ctx) << stats_json(stats) << '\n';
}

void cmd_cohort(const Context& ctx) {
  const auto sets = CodeSets::load(codesets_path(ctx).string());
  const auto ingested = ingest_records_file(records_path(ctx).string());
  log(ctx) << "cohort: ingested " << ingested.accepted_lines << " records ("
           << ingested.rejected_lines << " rejected) for " << ingested.timelines.size()
           << " individuals\n";
  for (int gap : ctx.config.gaps()) {
    const auto cohort = build_cohort(ingested.timelines, sets, gap, ctx.config.cohort_seed());
    {
      auto out = open_out(cohort_file(ctx, gap));
      write_cohort_jsonl(out, cohort.samples);
    }
    auto summary = nlohmann::ordered_json::parse(summary_json(cohort.summary));
    summary["rejected_lines"] = ingested.rejected_lines;
    write_text(ctx.out / "cohort" / ("gap" + std::to_string(gap) + "_summary.json"),
               summary.dump(2) + "\n");
    log(ctx) << "cohort: gap " << gap << ": " << cohort.summary.positives << " positives, "
             << cohort.summary.negatives << " negatives\n";
  }
}

void cmd_embed(const Context& ctx) {
  const auto ingested = ingest_records_file(records_path(ctx).string());
  std::vector<std::vector<std::string>> corpus;
  corpus.reserve(ingested.timelines.size());
  for (const auto& t : ingested.timelines) {
    std::vector<std::string> seq;
    seq.reserve(t.records.size());
    for (const auto& r : t.records) seq.push_back(r.code);
    corpus.push_back(std::move(seq));
  }
  const auto vocab = build_vocab(corpus, ctx.config.get_u64("embed.min_count"));
  std::vector<std::vector<CodeIndex>> encoded;
  encoded.reserve(corpus.size());
  for (const auto& seq : corpus) encoded.push_back(vocab.encode(seq));
  const auto result = train_skipgram(encoded, vocab, ctx.config.skipgram_config());

  const auto dir = embed_dir(ctx);
  {
    auto out = open_out(dir / "embeddings.txt");
    result.table.write(out, vocab);
  }
  {
    auto out = open_out(dir / "vocab.csv");
    vocab.write_csv(out);
  }
  ordered_json loss;
  loss["epoch_loss"] = result.epoch_loss;
  loss["online_loss"] = result.online_loss;
  write_text(dir / "loss.json", loss.dump(2) + "\n");
  log(ctx) << "embed: V=" << vocab.size() << " d=" << result.table.dim() << " final loss "
           << (result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back()) << '\n';

  if (fs::exists(codesets_path(ctx))) {
    const auto sets = CodeSets::load(codesets_path(ctx).string());
    if (!sets.planted_pairs.empty() && vocab.contains(sets.planted_pairs.front().first)) {
      const auto& [a, b] = sets.planted_pairs.front();
      log(ctx) << "embed: nearest to " << a << " (planted partner " << b << "):";
      for (const auto& [code, cos] : nearest(result.table, vocab, a, 3)) log(ctx) << ' ' << code << '=' << cos;
      log(ctx) << '\n';
    }
  }
}

void cmd_train(const Context& ctx) {
  write_run_manifest(ctx);
  const auto embedding = load_embedding(ctx);
  const auto aggregate_path = ctx.out / "aggregate.json";
  auto entries = read_aggregate(aggregate_path);
  for (int gap : ctx.config.gaps()) {
    const auto cohort = load_cohort(ctx, gap);
    for (auto kind : ctx.config.models()) {
      const auto config = ctx.config.train_config(kind, gap);
      const auto data = encode_cohort(cohort, embedding.vocab, config.target_class);
      const auto dir = train_dir(ctx, gap, kind);
      const auto result = run_experiment(config, data, embedding.table, dir.string(), [&](const FoldResult& f) {
        log(ctx) << "train: gap " << gap << ' ' << kind_name(kind) << " fold " << f.fold << " AUC "
                 << f.auc << " (train " << f.train_auc << ")\n";
      });
      ordered_json folds = ordered_json::array();
      for (const auto& f : result.folds) {
        folds.push_back({{"fold", f.fold},
                         {"auc", f.auc},
                         {"train_auc", f.train_auc},
                         {"test_size", f.test_indices.size()},
                         {"loss_history", f.loss_history}});
      }
      write_text(dir / "folds.json", folds.dump(2) + "\n");
      std::erase_if(entries, [&](const AggregateEntry& e) { return e.gap_days == gap && e.model == kind; });
      entries.push_back(result.aggregate);
      write_aggregate(aggregate_path, entries);
      log(ctx) << "train: gap " << gap << ' ' << kind_name(kind) << " mean AUC "
               << result.aggregate.mean_auc << " +/- " << result.aggregate.sd_auc.value_or(0.0) << '\n';
    }
  }
}

void cmd_eval(const Context& ctx) {
  ordered_json summary = ordered_json::array();
  for (int gap : ctx.config.gaps()) {
    for (auto kind : ctx.config.models()) {
      const auto dir = train_dir(ctx, gap, kind);
      std::vector<CurvePoints> rocs, prs;
      std::vector<double> aucs;
      for (int f = 0;; ++f) {
        const auto scores_path = dir / ("fold" + std::to_string(f)) / "scores.csv";
        if (!fs::exists(scores_path)) break;
        auto in = open_in(scores_path);
        const auto set = read_scores_csv(in);
        rocs.push_back(roc_curve(set));
        prs.push_back(pr_curve(set));
        aucs.push_back(roc_auc(set));
        const auto eval_dir = ctx.out / "eval" / experiment_name(gap, kind);
        auto roc_out = open_out(eval_dir / ("fold" + std::to_string(f) + "_roc.csv"));
        write_curve_csv(roc_out, rocs.back());
        auto pr_out = open_out(eval_dir / ("fold" + std::to_string(f) + "_pr.csv"));
        write_curve_csv(pr_out, prs.back());
      }
      if (rocs.empty()) throw Error("eval: no fold scores under " + dir.string() + " (run `train` first)");
      const auto eval_dir = ctx.out / "eval" / experiment_name(gap, kind);
      const auto mean_roc = mean_curves(rocs);
      const auto mean_pr = mean_curves(prs);
      {
        auto out = open_out(eval_dir / "roc.csv");
        write_curve_csv(out, mean_roc);
      }
      {
        auto out = open_out(eval_dir / "pr.csv");
        write_curve_csv(out, mean_pr);
      }
      const auto agg = aggregate_folds(gap, kind, aucs);
      summary.push_back({{"gap_days", gap},
                         {"model", std::string(kind_name(kind))},
                         {"mean_auc", agg.mean_auc},
                         {"sd_auc", agg.sd_auc.value_or(0.0)},
                         {"mean_roc_area", trapezoid_area(mean_roc)},
                         {"mean_pr_area", trapezoid_area(mean_pr)}});
      log(ctx) << "eval: " << experiment_name(gap, kind) << " mean AUC " << agg.mean_auc << '\n';
    }
  }
  write_text(ctx.out / "eval" / "summary.json", summary.dump(2) + "\n");
}

void cmd_attend(const Context& ctx) {
  if (!ctx.individual_id) throw Error("attend: --id is required");
  const int gap = ctx.config.gaps().front();
  const auto cohort = load_cohort(ctx, gap);
  const auto it = std::find_if(cohort.begin(), cohort.end(),
                               [&](const CohortSample& s) { return s.individual_id == *ctx.individual_id; });
  if (it == cohort.end()) {
    throw Error("attend: individual " + *ctx.individual_id + " is not in the gap-" + std::to_string(gap) +
                " cohort");
  }
  // Use the fold whose held-out split contains this individual.
  const auto dir = train_dir(ctx, gap, ModelKind::SelfAttentive);
  fs::path checkpoint;
  for (int f = 0; checkpoint.empty(); ++f) {
    const auto fold_dir = dir / ("fold" + std::to_string(f));
    if (!fs::exists(fold_dir / "scores.csv")) break;
    auto in = open_in(fold_dir / "scores.csv");
    const auto set = read_scores_csv(in);
    if (std::find(set.ids.begin(), set.ids.end(), *ctx.individual_id) != set.ids.end()) {
      checkpoint = fold_dir / "checkpoint";
    }
  }
  if (checkpoint.empty()) throw Error("attend: no trained self-attentive fold holds out " + *ctx.individual_id);

  const auto embedding = load_embedding(ctx);
  const auto params = load_checkpoint_file(checkpoint.string());
  const auto attention = attention_of(params, embedding.vocab, *it);
  const auto sets = fs::exists(codesets_path(ctx)) ? CodeSets::load(codesets_path(ctx).string()) : CodeSets{};
  const auto stem = ctx.out / "attention" / ("attention_" + *ctx.individual_id);
  {
    auto out = open_out(stem.string() + ".csv");
    export_attention_csv(out, attention, [&](const std::string& code) { return describe_code(sets, code); });
  }
  write_text(stem.string() + ".svg", attention_svg(attention));
  log(ctx) << "attend: " << *ctx.individual_id << " label " << it->label << " score " << attention.probability
           << " -> " << stem.string() << ".csv\n";
}

void cmd_report(const Context& ctx) {
  const auto path = ctx.out / "aggregate.json";
  if (!fs::exists(path)) throw Error("report: missing " + path.string() + " (run `train` first)");
  const auto entries = read_aggregate(path);
  if (entries.empty()) throw Error("report: aggregate.json holds no entries");
  const auto report = report_table(entries);
  write_text(ctx.out / "report.txt", report.text);
  write_text(ctx.out / "report.json", report.json);
  result_stream(ctx) << report.text;
}

void cmd_run_all(const Context& ctx) {
  cmd_synth(ctx);
  cmd_cohort(ctx);
  cmd_embed(ctx);
  cmd_train(ctx);
  cmd_eval(ctx);
  cmd_report(ctx);
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Diabetes-complication risk prediction from coded claims records"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "run";
  std::optional<std::uint64_t> seed;
  std::vector<int> gaps;
  std::string model;
  std::vector<std::string> overrides;
  std::string individual;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key=value configuration file")->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory")->capture_default_str();
    sub->add_option("--seed", seed, "master seed (overrides config)");
    sub->add_option("--gap", gaps, "prediction gap in days; repeatable")->take_all();
    sub->add_option("--model", model, "restrict to one model kind")->check(CLI::IsMember({"sa", "baseline"}));
    sub->add_option("--set", overrides, "key=value override; repeatable");
  };

  using Command = void (*)(const Context&);
  const std::vector<std::tuple<std::string, std::string, Command>> commands = {
      {"synth", "generate a synthetic population and its code sets", cmd_synth},
      {"cohort", "extract labelled input windows for each gap", cmd_cohort},
      {"embed", "pretrain skipgram code embeddings", cmd_embed},
      {"train", "cross-validated training for each gap and model", cmd_train},
      {"eval", "ROC/PR curves averaged over folds", cmd_eval},
      {"attend", "export the attention map of one individual", cmd_attend},
      {"report", "render the gap x model AUC table", cmd_report},
      {"run-all", "synth, cohort, embed, train, eval and report", cmd_run_all},
  };
  std::map<CLI::App*, Command> dispatch;
  for (const auto& [name, help, fn] : commands) {
    auto* sub = app.add_subcommand(name, help);
    add_common(sub);
    if (name == "attend") sub->add_option("--id", individual, "individual_id to explain")->required();
    dispatch[sub] = fn;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    Context ctx;
    if (!config_path.empty()) ctx.config.merge_file(config_path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw Error("--set expects key=value, got '" + kv + "'");
      ctx.config.set(trim(std::string_view(kv).substr(0, eq)), trim(std::string_view(kv).substr(eq + 1)));
    }
    if (seed) ctx.config.set("seed", std::to_string(*seed));
    if (!gaps.empty()) {
      std::string joined;
      for (int g : gaps) joined += (joined.empty() ? "" : ",") + std::to_string(g);
      ctx.config.set("gaps", joined);
    }
    if (!model.empty()) ctx.config.set("models", model);
    ctx.out = out_dir;
    if (!individual.empty()) ctx.individual_id = individual;
    fs::create_directories(ctx.out);
    write_text(ctx.out / "config.resolved", ctx.config.dump());

    for (auto* sub : app.get_subcommands()) dispatch.at(sub)(ctx);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace claimsrisk::cli
