#include "claimsrisk/config.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <sstream>

namespace claimsrisk {

const std::vector<ConfigOption>& config_options() {
  static const std::vector<ConfigOption> options = {
      {"seed", "20181203", "master seed; every stage derives its own sub-seed"},
      {"gaps", "60,120,180,240", "prediction gaps in days"},
      {"models", "sa,baseline", "model kinds to train"},
      {"records_path", "", "record CSV (default <out>/records.csv)"},
      {"codesets_path", "", "code-set file (default <out>/codesets.cfg)"},

      {"synth.n_individuals", "2000", ""},
      {"synth.vocab_size", "400", ""},
      {"synth.complication_fraction", "0.05", ""},
      {"synth.base_rate", "8", "records per 30 days, stable state"},
      {"synth.risk_rate", "16", "records per 30 days right before a complication"},
      {"synth.risk_markers", "10", ""},
      {"synth.marker_base_mass", "0.02", ""},
      {"synth.marker_peak_mass", "0.15", ""},
      {"synth.planted_pairs", "100", ""},
      {"synth.zipf_exponent", "0.7", ""},
      {"synth.profile_codes", "5", "recurring background codes per individual"},
      {"synth.profile_mass", "0.6", ""},
      {"synth.horizon_days", "1100", ""},
      {"synth.min_onset_lead", "480", ""},
      {"synth.max_onset_lead", "720", ""},

      {"embed.dim", "64", ""},
      {"embed.window", "5", ""},
      {"embed.negatives", "5", ""},
      {"embed.epochs", "5", ""},
      {"embed.learning_rate", "0.025", ""},
      {"embed.min_learning_rate", "0.0001", ""},
      {"embed.min_count", "1", ""},

      {"model.hidden", "64", "LSTM units per direction"},
      {"model.attn_dim", "64", ""},
      {"model.hops", "4", ""},
      {"model.fc_hidden", "64", ""},
      {"model.penalty", "0.1", "weight of the attention redundancy penalty"},

      {"train.k_folds", "5", ""},
      {"train.oversample_ratio", "1.0", "target positives:negatives after oversampling"},
      {"train.batch_size", "32", ""},
      {"train.epochs", "20", ""},
      {"train.learning_rate", "0.001", ""},
      {"train.beta1", "0.9", ""},
      {"train.beta2", "0.999", ""},
      {"train.epsilon", "1e-8", ""},
      {"train.clip_norm", "5", ""},
      {"train.freeze_embeddings", "false", ""},
      {"train.patience", "0", "0 disables early stopping"},
      {"train.target_class", "any", "any, or one complication class for per-class runs"},
  };
  return options;
}

RunConfig::RunConfig() {
  for (const auto& o : config_options()) values_.emplace(std::string(o.key), std::string(o.default_value));
}

void RunConfig::merge(std::istream& in, const std::string& origin) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto text = trim(line);
    if (const auto hash = text.find('#'); hash != std::string_view::npos) text = trim(text.substr(0, hash));
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string_view::npos) {
      throw Error(origin + ":" + std::to_string(line_no) + ": expected key=value");
    }
    try {
      set(trim(text.substr(0, eq)), trim(text.substr(eq + 1)));
    } catch (const Error& e) {
      throw Error(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void RunConfig::merge_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file '" + path + "'");
  merge(in, path);
}

void RunConfig::set(std::string_view key, std::string_view value) {
  const auto it = values_.find(key);
  if (it == values_.end()) throw Error("unknown config key '" + std::string(key) + "'");
  it->second = std::string(value);
}

const std::string& RunConfig::get(std::string_view key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw Error("unknown config key '" + std::string(key) + "'");
  return it->second;
}

namespace {

template <class T>
T parse_number(std::string_view key, const std::string& text) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw Error("config key '" + std::string(key) + "': cannot parse '" + text + "'");
  }
  return value;
}

}  // namespace

int RunConfig::get_int(std::string_view key) const { return parse_number<int>(key, get(key)); }

std::uint64_t RunConfig::get_u64(std::string_view key) const {
  return parse_number<std::uint64_t>(key, get(key));
}

double RunConfig::get_double(std::string_view key) const {
  const auto& text = get(key);
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error("config key '" + std::string(key) + "': cannot parse '" + text + "'");
}

bool RunConfig::get_bool(std::string_view key) const {
  const auto& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error("config key '" + std::string(key) + "': expected true or false, got '" + v + "'");
}

std::vector<std::string> RunConfig::get_list(std::string_view key) const {
  std::vector<std::string> out;
  for (auto token : split(get(key), ',')) {
    token = trim(token);
    if (!token.empty()) out.emplace_back(token);
  }
  return out;
}

std::vector<int> RunConfig::gaps() const {
  std::vector<int> out;
  for (const auto& g : get_list("gaps")) out.push_back(parse_number<int>("gaps", g));
  if (out.empty()) throw Error("config: gaps is empty");
  return out;
}

std::vector<ModelKind> RunConfig::models() const {
  std::vector<ModelKind> out;
  for (const auto& m : get_list("models")) out.push_back(parse_kind(m));
  if (out.empty()) throw Error("config: models is empty");
  return out;
}

std::string RunConfig::dump() const {
  std::ostringstream out;
  for (const auto& [k, v] : values_) out << k << '=' << v << '\n';
  return out.str();
}

SynthConfig RunConfig::synth_config() const {
  SynthConfig c;
  c.n_individuals = static_cast<std::size_t>(get_u64("synth.n_individuals"));
  c.vocab_size = static_cast<std::size_t>(get_u64("synth.vocab_size"));
  c.complication_fraction = get_double("synth.complication_fraction");
  c.base_rate = get_double("synth.base_rate");
  c.risk_rate = get_double("synth.risk_rate");
  c.risk_markers = static_cast<std::size_t>(get_u64("synth.risk_markers"));
  c.marker_base_mass = get_double("synth.marker_base_mass");
  c.marker_peak_mass = get_double("synth.marker_peak_mass");
  c.planted_pairs = static_cast<std::size_t>(get_u64("synth.planted_pairs"));
  c.zipf_exponent = get_double("synth.zipf_exponent");
  c.profile_codes = static_cast<std::size_t>(get_u64("synth.profile_codes"));
  c.profile_mass = get_double("synth.profile_mass");
  c.horizon_days = get_int("synth.horizon_days");
  c.min_onset_lead = get_int("synth.min_onset_lead");
  c.max_onset_lead = get_int("synth.max_onset_lead");
  c.seed = seed();
  c.validate();
  return c;
}

SkipgramConfig RunConfig::skipgram_config() const {
  SkipgramConfig c;
  c.dim = get_int("embed.dim");
  c.window = get_int("embed.window");
  c.negatives = get_int("embed.negatives");
  c.epochs = get_int("embed.epochs");
  c.learning_rate = get_double("embed.learning_rate");
  c.min_learning_rate = get_double("embed.min_learning_rate");
  c.seed = embed_seed();
  return c;
}

TrainConfig RunConfig::train_config(ModelKind kind, int gap_days) const {
  TrainConfig c;
  c.gap_days = gap_days;
  c.k_folds = get_int("train.k_folds");
  c.oversample_ratio = get_double("train.oversample_ratio");
  c.batch_size = get_int("train.batch_size");
  c.epochs = get_int("train.epochs");
  c.adam.learning_rate = get_double("train.learning_rate");
  c.adam.beta1 = get_double("train.beta1");
  c.adam.beta2 = get_double("train.beta2");
  c.adam.epsilon = get_double("train.epsilon");
  c.clip_norm = get_double("train.clip_norm");
  c.freeze_embeddings = get_bool("train.freeze_embeddings");
  c.patience = get_int("train.patience");
  const auto& target = get("train.target_class");
  if (target != "any") c.target_class = parse_class_name(target);
  c.seed = train_seed(gap_days);
  c.model.kind = kind;
  c.model.hidden = get_int("model.hidden");
  c.model.attn_dim = get_int("model.attn_dim");
  c.model.hops = get_int("model.hops");
  c.model.fc_hidden = get_int("model.fc_hidden");
  c.model.penalty = get_double("model.penalty");
  c.model.embed_dim = get_int("embed.dim");
  c.validate();
  return c;
}

}  // namespace claimsrisk
