#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "claimsrisk/common.hpp"

namespace claimsrisk {

/// One dated procedure code for one individual.
struct CodedRecord {
  std::string individual_id;
  Day service_date = 0;
  std::string code;
};

/// Date-sorted history of one individual. Ties keep input order.
struct Timeline {
  std::string individual_id;
  std::vector<CodedRecord> records;
};

enum class ComplicationClass {
  AmputationDebridement = 0,
  RevascularizationAngioplasty = 1,
  Hemodialysis = 2,
};

inline constexpr std::array<ComplicationClass, 3> kComplicationClasses = {
    ComplicationClass::AmputationDebridement,
    ComplicationClass::RevascularizationAngioplasty,
    ComplicationClass::Hemodialysis,
};

std::string_view class_name(ComplicationClass cls);
ComplicationClass parse_class_name(std::string_view name);

/// Configurable code families. `risk_markers` and `planted_pairs` are
/// informational keys written by the synthetic generator; cohort rules never
/// read them.
struct CodeSets {
  std::set<std::string> hba1c;
  std::array<std::set<std::string>, 3> complications;
  std::set<std::string> risk_markers;
  std::vector<std::pair<std::string, std::string>> planted_pairs;

  const std::set<std::string>& complication(ComplicationClass cls) const {
    return complications[static_cast<std::size_t>(cls)];
  }
  std::optional<ComplicationClass> complication_class_of(std::string_view code) const;
  bool is_complication(std::string_view code) const {
    return complication_class_of(code).has_value();
  }

  /// Checks non-emptiness and pairwise disjointness; throws Error.
  void validate() const;

  /// key=value format: hba1c, amputation_debridement,
  /// revascularization_angioplasty, hemodialysis (comma-separated codes),
  /// plus optional risk_markers and planted_pairs (`a:b,c:d`).
  static CodeSets parse(std::istream& in);
  static CodeSets load(const std::string& path);
  void write(std::ostream& out) const;
};

/// Column names of the record CSV. Extra columns are ignored.
struct CsvFormat {
  std::string id_column = "individual_id";
  std::string date_column = "service_date";
  std::string code_column = "code";
};

struct IngestResult {
  std::vector<Timeline> timelines;  // first-appearance order of individual_id
  std::size_t accepted_lines = 0;
  std::size_t rejected_lines = 0;
};

/// Reads the record CSV. Malformed lines are skipped and counted; an
/// unreadable stream, a missing header column or zero valid lines throw.
IngestResult ingest_records(std::istream& in, const CsvFormat& format = {});
IngestResult ingest_records_file(const std::string& path, const CsvFormat& format = {});

/// Individuals with two HbA1c records less than 365 days apart.
std::set<std::string> find_diabetics(const std::vector<Timeline>& timelines,
                                     const CodeSets& code_sets);

struct FirstComplication {
  Day day = 0;
  ComplicationClass cls = ComplicationClass::AmputationDebridement;
  bool operator==(const FirstComplication&) const = default;
};

/// Earliest complication record; same-day ties resolve by class order.
std::optional<FirstComplication> first_complication(const Timeline& timeline,
                                                    const CodeSets& code_sets);

inline constexpr Day kWindowDays = 365;
inline constexpr std::size_t kMinWindowRecords = 40;
inline constexpr std::size_t kMaxWindowRecords = 500;
inline constexpr std::array<int, 4> kDefaultGaps = {60, 120, 180, 240};

struct CohortSample {
  std::string individual_id;
  std::vector<std::string> codes;
  std::vector<Day> record_dates;
  Day index_date = 0;  // window end, exclusive
  int gap_days = 0;
  int label = 0;
  std::optional<ComplicationClass> complication_class;

  bool operator==(const CohortSample&) const = default;
};

/// Window [index_date - 365, index_date) with index_date = complication day -
/// gap. Keeps the 500 latest records; absent when fewer than 40 remain.
std::optional<CohortSample> extract_positive_window(const Timeline& timeline,
                                                    const FirstComplication& complication,
                                                    int gap_days);

/// Uniformly samples an index date whose trailing window holds at least 40
/// records and for which index_date + gap does not pass the last observed
/// record. Absent when no such date exists.
std::optional<CohortSample> extract_negative_window(const Timeline& timeline, int gap_days,
                                                    Rng& rng);

struct CohortSummary {
  int gap_days = 0;
  std::size_t individuals = 0;
  std::size_t diabetics = 0;
  std::size_t excluded_not_diabetic = 0;
  std::size_t complicated = 0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t excluded_positive_short_window = 0;
  std::size_t excluded_negative_no_window = 0;
};

struct Cohort {
  std::vector<CohortSample> samples;
  CohortSummary summary;
};

/// One sample per diabetic individual. Each individual draws from its own
/// sub-seed (seed mixed with its timeline index), so the result does not
/// depend on evaluation order. Throws when no positive survives.
Cohort build_cohort(const std::vector<Timeline>& timelines, const CodeSets& code_sets,
                    int gap_days, std::uint64_t seed);

void write_cohort_jsonl(std::ostream& out, const std::vector<CohortSample>& samples);
std::vector<CohortSample> read_cohort_jsonl(std::istream& in);
std::string summary_json(const CohortSummary& summary);

}  // namespace claimsrisk
