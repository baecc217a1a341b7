#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "claimsrisk/common.hpp"
#include "claimsrisk/records.hpp"

namespace claimsrisk {

/// Parameters of the synthetic claims population.
///
/// Every individual starts in a stable state that emits background codes at
/// `base_rate` records per 30-day block. A `complication_fraction` of
/// individuals turn deteriorating at an onset day; from there the emission
/// rate climbs linearly towards `risk_rate` and the share of risk-marker
/// codes climbs towards `marker_peak_mass`, until a complication code is
/// emitted and the individual leaves the data.
struct SynthConfig {
  std::size_t n_individuals = 2000;
  std::size_t vocab_size = 400;  // ordinary codes, markers and pairs included
  double complication_fraction = 0.05;
  double base_rate = 8.0;   // mean records per 30-day block, stable state
  double risk_rate = 16.0;  // mean records per block right before a complication
  std::size_t risk_markers = 10;
  double marker_base_mass = 0.02;
  double marker_peak_mass = 0.15;
  std::size_t planted_pairs = 100;  // leader code always followed by its partner
  double zipf_exponent = 0.7;
  std::size_t profile_codes = 5;  // recurring background codes per individual
  double profile_mass = 0.6;       // share of background draws taken from the profile
  Day horizon_days = 1100;
  Day min_onset_lead = 480;  // onset precedes the complication by [min, max] days
  Day max_onset_lead = 720;
  Day start_day = 16801;  // 2016-01-01
  std::uint64_t seed = 20181203;

  void validate() const;  // throws Error
};

/// Codes the generator uses, plus which individuals carry a planted
/// complication.
struct SynthManifest {
  CodeSets code_sets;  // includes risk_markers and planted_pairs
  std::vector<std::string> background_codes;
  std::vector<std::string> positive_ids;
  std::size_t individuals = 0;
  std::size_t records = 0;
};

/// Writes the record CSV (header `individual_id,service_date,code`) and
/// returns the manifest. Deterministic in the config, including the seed.
SynthManifest generate_population(const SynthConfig& config, std::ostream& out);

/// Code sets the generator would use for `config`, without generating data.
CodeSets synthetic_code_sets(const SynthConfig& config);

struct PopulationStats {
  std::size_t individuals = 0;
  std::size_t records = 0;
  std::size_t rejected_lines = 0;
  std::size_t with_complication = 0;
  double prevalence = 0.0;
  // min, 25th, 50th, 75th percentile and max of records per individual
  std::vector<std::size_t> records_per_individual_quantiles;
};

/// Throws Error on an empty or malformed stream.
PopulationStats describe_population(std::istream& in, const CodeSets& code_sets);
std::string stats_json(const PopulationStats& stats);

}  // namespace claimsrisk
