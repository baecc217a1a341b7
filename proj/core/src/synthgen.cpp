#include "claimsrisk/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <utility>

#include "json.hpp"

namespace claimsrisk {

namespace {

constexpr const char* kHba1cCode = "40302733";
constexpr std::array<std::array<const char*, 2>, 3> kComplicationCodes = {{
    {"30901011", "30901029"},
    {"30911015", "30911023"},
    {"30921010", "30921028"},
}};
constexpr std::array<double, 3> kClassWeights = {0.40, 0.35, 0.25};
constexpr Day kBlockDays = 30;

std::string ordinary_code(std::size_t i) { return std::to_string(10100000 + i); }

struct Layout {
  std::size_t emittable = 0;  // indices [0, emittable) draw from the background law
  std::size_t first_follower = 0;
  std::size_t first_marker = 0;
};

Layout layout_of(const SynthConfig& c) {
  Layout l;
  l.first_marker = c.vocab_size - c.risk_markers;
  l.first_follower = l.first_marker - c.planted_pairs;
  l.emittable = l.first_follower;
  return l;
}

struct Event {
  Day day;
  std::size_t seq;
  std::string code;
};

class IndividualGenerator {
 public:
  IndividualGenerator(const SynthConfig& config, const Layout& layout,
                      std::discrete_distribution<std::size_t> background)
      : config_(config), layout_(layout), background_(std::move(background)) {}

  // Date-sorted events of one individual; same-day events keep emission order.
  std::vector<Event> generate(Rng& rng, bool deteriorating) {
    std::vector<Event> events;
    std::vector<std::size_t> profile(config_.profile_codes);
    for (auto& p : profile) p = background_(rng);
    std::bernoulli_distribution from_profile(config_.profile_mass);
    std::uniform_int_distribution<std::size_t> profile_pick(0, profile.empty() ? 0 : profile.size() - 1);
    const Day start = config_.start_day + std::uniform_int_distribution<Day>(0, 29)(rng);
    Day end = config_.start_day + config_.horizon_days;  // exclusive
    Day complication_day = 0;
    Day onset = end;
    std::size_t cls = 0;
    if (deteriorating) {
      const Day earliest = config_.start_day + 60 + kWindowDays + kDefaultGaps.back();
      complication_day = std::uniform_int_distribution<Day>(earliest, end - 1)(rng);
      onset = complication_day - std::uniform_int_distribution<Day>(config_.min_onset_lead,
                                                                    config_.max_onset_lead)(rng);
      cls = std::discrete_distribution<std::size_t>(kClassWeights.begin(),
                                                    kClassWeights.end())(rng);
      end = complication_day;
    }

    for (Day block = start; block < end; block += kBlockDays) {
      const Day block_end = std::min<Day>(block + kBlockDays, end);
      const Day mid = block + (block_end - block) / 2;
      double progress = 0.0;
      if (deteriorating && mid >= onset) {
        progress = static_cast<double>(mid - onset) / static_cast<double>(complication_day - onset);
      }
      const double rate = (config_.base_rate + progress * (config_.risk_rate - config_.base_rate)) *
                          static_cast<double>(block_end - block) / kBlockDays;
      const double marker_mass = config_.marker_base_mass +
                                 progress * (config_.marker_peak_mass - config_.marker_base_mass);
      const int count = std::poisson_distribution<int>(rate)(rng);
      std::uniform_int_distribution<Day> day_in_block(block, block_end - 1);
      std::bernoulli_distribution is_marker(marker_mass);
      std::uniform_int_distribution<std::size_t> marker_pick(0, config_.risk_markers - 1);
      for (int k = 0; k < count; ++k) {
        const Day day = day_in_block(rng);
        if (config_.risk_markers > 0 && is_marker(rng)) {
          push(events, day, ordinary_code(layout_.first_marker + marker_pick(rng)));
          continue;
        }
        const std::size_t code = from_profile(rng) ? profile[profile_pick(rng)] : background_(rng);
        push(events, day, ordinary_code(code));
        if (code < config_.planted_pairs) {
          push(events, day, ordinary_code(layout_.first_follower + code));
        }
      }
    }

    // Glycated hemoglobin tests every 90 to 200 days.
    for (Day day = start + std::uniform_int_distribution<Day>(0, 59)(rng); day < end;
         day += std::uniform_int_distribution<Day>(90, 200)(rng)) {
      push(events, day, kHba1cCode);
    }
    if (deteriorating) push(events, complication_day, kComplicationCodes[cls][rng() % 2]);

    std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
      return a.day != b.day ? a.day < b.day : a.seq < b.seq;
    });
    return events;
  }

 private:
  static void push(std::vector<Event>& events, Day day, std::string code) {
    events.push_back(Event{day, events.size(), std::move(code)});
  }

  const SynthConfig& config_;
  const Layout& layout_;
  std::discrete_distribution<std::size_t> background_;
};

}  // namespace

void SynthConfig::validate() const {
  if (n_individuals == 0) throw Error("synth: n_individuals must be positive");
  if (vocab_size < 100) throw Error("synth: vocab_size must be at least 100");
  if (!(complication_fraction >= 0.0 && complication_fraction < 0.5)) {
    throw Error("synth: complication_fraction must lie in [0, 0.5)");
  }
  if (!(base_rate > 0.0) || !(risk_rate > 0.0)) throw Error("synth: rates must be positive");
  if (risk_markers + 2 * planted_pairs + 10 > vocab_size) {
    throw Error("synth: vocab_size too small for the requested markers and pairs");
  }
  if (!(marker_base_mass >= 0.0 && marker_base_mass <= 1.0 && marker_peak_mass >= 0.0 &&
        marker_peak_mass <= 1.0)) {
    throw Error("synth: marker masses must lie in [0, 1]");
  }
  if (!(profile_mass >= 0.0 && profile_mass < 1.0)) throw Error("synth: profile_mass must lie in [0, 1)");
  if (profile_mass > 0.0 && profile_codes == 0) throw Error("synth: profile_codes must be positive");
  if (min_onset_lead <= 0 || max_onset_lead < min_onset_lead) {
    throw Error("synth: onset lead range is invalid");
  }
  if (horizon_days < 60 + kWindowDays + kDefaultGaps.back() + 30) {
    throw Error("synth: horizon_days too short to hold a window for the longest gap");
  }
}

CodeSets synthetic_code_sets(const SynthConfig& config) {
  config.validate();
  const auto layout = layout_of(config);
  CodeSets sets;
  sets.hba1c = {kHba1cCode};
  for (std::size_t c = 0; c < kComplicationCodes.size(); ++c) {
    sets.complications[c] = {kComplicationCodes[c][0], kComplicationCodes[c][1]};
  }
  for (std::size_t i = layout.first_marker; i < config.vocab_size; ++i) {
    sets.risk_markers.insert(ordinary_code(i));
  }
  for (std::size_t i = 0; i < config.planted_pairs; ++i) {
    sets.planted_pairs.emplace_back(ordinary_code(i), ordinary_code(layout.first_follower + i));
  }
  return sets;
}

SynthManifest generate_population(const SynthConfig& config, std::ostream& out) {
  config.validate();
  const auto layout = layout_of(config);

  // Zipf weights over background codes, assigned to codes in a seeded order.
  std::vector<std::size_t> rank(layout.emittable);
  std::iota(rank.begin(), rank.end(), std::size_t{0});
  Rng layout_rng(mix_seed(config.seed, ~std::uint64_t{0}));
  std::shuffle(rank.begin(), rank.end(), layout_rng);
  std::vector<double> weights(layout.emittable);
  for (std::size_t i = 0; i < layout.emittable; ++i) {
    weights[i] = 1.0 / std::pow(static_cast<double>(rank[i] + 1), config.zipf_exponent);
  }
  IndividualGenerator generator(config, layout, {weights.begin(), weights.end()});

  SynthManifest manifest;
  manifest.code_sets = synthetic_code_sets(config);
  for (std::size_t i = 0; i < layout.emittable; ++i) {
    manifest.background_codes.push_back(ordinary_code(i));
  }

  out << "individual_id,service_date,code\n";
  char id_buf[16];
  for (std::size_t i = 0; i < config.n_individuals; ++i) {
    Rng rng(mix_seed(config.seed, i));
    const bool deteriorating = std::bernoulli_distribution(config.complication_fraction)(rng);
    std::snprintf(id_buf, sizeof id_buf, "P%06zu", i + 1);
    const auto events = generator.generate(rng, deteriorating);
    for (const auto& e : events) {
      out << id_buf << ',' << format_iso_date(e.day) << ',' << e.code << '\n';
    }
    if (deteriorating) manifest.positive_ids.emplace_back(id_buf);
    manifest.records += events.size();
  }
  manifest.individuals = config.n_individuals;
  if (!out) throw Error("synth: failed writing record stream");
  return manifest;
}

PopulationStats describe_population(std::istream& in, const CodeSets& code_sets) {
  const auto ingested = ingest_records(in);
  PopulationStats stats;
  stats.individuals = ingested.timelines.size();
  stats.records = ingested.accepted_lines;
  stats.rejected_lines = ingested.rejected_lines;
  std::vector<std::size_t> sizes;
  for (const auto& t : ingested.timelines) {
    sizes.push_back(t.records.size());
    if (std::any_of(t.records.begin(), t.records.end(),
                    [&](const CodedRecord& r) { return code_sets.is_complication(r.code); })) {
      ++stats.with_complication;
    }
  }
  stats.prevalence = static_cast<double>(stats.with_complication) /
                     static_cast<double>(stats.individuals);
  std::sort(sizes.begin(), sizes.end());
  for (double q : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    const auto idx = static_cast<std::size_t>(std::lround(q * static_cast<double>(sizes.size() - 1)));
    stats.records_per_individual_quantiles.push_back(sizes[idx]);
  }
  return stats;
}

std::string stats_json(const PopulationStats& s) {
  nlohmann::ordered_json j;
  j["individuals"] = s.individuals;
  j["records"] = s.records;
  j["rejected_lines"] = s.rejected_lines;
  j["with_complication"] = s.with_complication;
  j["prevalence"] = s.prevalence;
  j["records_per_individual"] = {{"min", s.records_per_individual_quantiles.at(0)},
                                 {"p25", s.records_per_individual_quantiles.at(1)},
                                 {"median", s.records_per_individual_quantiles.at(2)},
                                 {"p75", s.records_per_individual_quantiles.at(3)},
                                 {"max", s.records_per_individual_quantiles.at(4)}};
  return j.dump(2);
}

}  // namespace claimsrisk
