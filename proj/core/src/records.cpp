#include "claimsrisk/records.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

namespace claimsrisk {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr std::array<std::string_view, 3> kClassNames = {
    "amputation_debridement", "revascularization_angioplasty", "hemodialysis"};

std::set<std::string> parse_code_list(std::string_view value) {
  std::set<std::string> out;
  for (auto token : split(value, ',')) {
    token = trim(token);
    if (!token.empty()) out.emplace(token);
  }
  return out;
}

std::string join(const std::set<std::string>& codes) {
  std::string out;
  for (const auto& c : codes) {
    if (!out.empty()) out += ',';
    out += c;
  }
  return out;
}

// Indices [first, last) of records dated within [index_date - 365, index_date).
std::pair<std::size_t, std::size_t> window_range(const std::vector<CodedRecord>& records,
                                                 Day index_date) {
  const auto by_date = [](const CodedRecord& r, Day d) { return r.service_date < d; };
  const auto lo = std::lower_bound(records.begin(), records.end(), index_date - kWindowDays, by_date);
  const auto hi = std::lower_bound(records.begin(), records.end(), index_date, by_date);
  return {static_cast<std::size_t>(lo - records.begin()),
          static_cast<std::size_t>(hi - records.begin())};
}

std::optional<CohortSample> make_window(const Timeline& timeline, Day index_date, int gap_days) {
  auto [first, last] = window_range(timeline.records, index_date);
  if (last - first < kMinWindowRecords) return std::nullopt;
  if (last - first > kMaxWindowRecords) first = last - kMaxWindowRecords;
  CohortSample sample;
  sample.individual_id = timeline.individual_id;
  sample.index_date = index_date;
  sample.gap_days = gap_days;
  sample.codes.reserve(last - first);
  sample.record_dates.reserve(last - first);
  for (std::size_t i = first; i < last; ++i) {
    sample.codes.push_back(timeline.records[i].code);
    sample.record_dates.push_back(timeline.records[i].service_date);
  }
  return sample;
}

}  // namespace

std::string_view class_name(ComplicationClass cls) {
  return kClassNames[static_cast<std::size_t>(cls)];
}

ComplicationClass parse_class_name(std::string_view name) {
  for (auto cls : kComplicationClasses) {
    if (class_name(cls) == name) return cls;
  }
  throw Error("unknown complication class '" + std::string(name) + "'");
}

std::optional<ComplicationClass> CodeSets::complication_class_of(std::string_view code) const {
  for (auto cls : kComplicationClasses) {
    const auto& set = complication(cls);
    if (set.find(std::string(code)) != set.end()) return cls;
  }
  return std::nullopt;
}

void CodeSets::validate() const {
  if (hba1c.empty()) throw Error("code sets: hba1c is empty");
  for (auto cls : kComplicationClasses) {
    if (complication(cls).empty()) {
      throw Error("code sets: " + std::string(class_name(cls)) + " is empty");
    }
  }
  const auto overlap = [](const std::set<std::string>& a, const std::set<std::string>& b) {
    return std::any_of(a.begin(), a.end(), [&](const auto& c) { return b.count(c) > 0; });
  };
  for (std::size_t i = 0; i < complications.size(); ++i) {
    if (overlap(hba1c, complications[i])) {
      throw Error("code sets: hba1c overlaps " + std::string(kClassNames[i]));
    }
    for (std::size_t j = i + 1; j < complications.size(); ++j) {
      if (overlap(complications[i], complications[j])) {
        throw Error("code sets: " + std::string(kClassNames[i]) + " overlaps " +
                    std::string(kClassNames[j]));
      }
    }
  }
}

CodeSets CodeSets::parse(std::istream& in) {
  CodeSets sets;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto eq = text.find('=');
    if (eq == std::string_view::npos) {
      throw Error("code sets line " + std::to_string(line_no) + ": expected key=value");
    }
    const auto key = trim(text.substr(0, eq));
    const auto value = text.substr(eq + 1);
    if (key == "hba1c") {
      sets.hba1c = parse_code_list(value);
    } else if (key == "risk_markers") {
      sets.risk_markers = parse_code_list(value);
    } else if (key == "planted_pairs") {
      for (auto token : split(value, ',')) {
        token = trim(token);
        if (token.empty()) continue;
        const auto colon = token.find(':');
        if (colon == std::string_view::npos) {
          throw Error("code sets: planted pair '" + std::string(token) + "' lacks ':'");
        }
        sets.planted_pairs.emplace_back(std::string(trim(token.substr(0, colon))),
                                        std::string(trim(token.substr(colon + 1))));
      }
    } else {
      sets.complications[static_cast<std::size_t>(parse_class_name(key))] =
          parse_code_list(value);
    }
  }
  return sets;
}

CodeSets CodeSets::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open code-set file '" + path + "'");
  return parse(in);
}

void CodeSets::write(std::ostream& out) const {
  out << "hba1c=" << join(hba1c) << '\n';
  for (auto cls : kComplicationClasses) {
    out << class_name(cls) << '=' << join(complication(cls)) << '\n';
  }
  if (!risk_markers.empty()) out << "risk_markers=" << join(risk_markers) << '\n';
  if (!planted_pairs.empty()) {
    out << "planted_pairs=";
    for (std::size_t i = 0; i < planted_pairs.size(); ++i) {
      if (i) out << ',';
      out << planted_pairs[i].first << ':' << planted_pairs[i].second;
    }
    out << '\n';
  }
}

IngestResult ingest_records(std::istream& in, const CsvFormat& format) {
  if (!in) throw Error("record stream is not readable");
  std::string line;
  if (!std::getline(in, line)) throw Error("record stream is empty");

  const auto header = split(trim(line), ',');
  const auto column = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (trim(header[i]) == name) return i;
    }
    throw Error("record header lacks column '" + name + "'");
  };
  const std::size_t id_col = column(format.id_column);
  const std::size_t date_col = column(format.date_column);
  const std::size_t code_col = column(format.code_column);
  const std::size_t needed = std::max({id_col, date_col, code_col}) + 1;

  IngestResult result;
  std::unordered_map<std::string, std::size_t> slot;
  while (std::getline(in, line)) {
    const auto text = trim(line);
    if (text.empty()) continue;
    const auto fields = split(text, ',');
    if (fields.size() < needed) {
      ++result.rejected_lines;
      continue;
    }
    const auto id = trim(fields[id_col]);
    const auto code = trim(fields[code_col]);
    if (id.empty() || code.empty()) {
      ++result.rejected_lines;
      continue;
    }
    Day day = 0;
    try {
      day = parse_iso_date(fields[date_col]);
    } catch (const Error&) {
      ++result.rejected_lines;
      continue;
    }
    auto [it, inserted] = slot.try_emplace(std::string(id), result.timelines.size());
    if (inserted) result.timelines.push_back(Timeline{std::string(id), {}});
    result.timelines[it->second].records.push_back(
        CodedRecord{std::string(id), day, std::string(code)});
    ++result.accepted_lines;
  }
  if (in.bad()) throw Error("error while reading record stream");
  if (result.accepted_lines == 0) throw Error("record stream holds no valid lines");

  for (auto& t : result.timelines) {
    std::stable_sort(t.records.begin(), t.records.end(),
                     [](const CodedRecord& a, const CodedRecord& b) {
                       return a.service_date < b.service_date;
                     });
  }
  return result;
}

IngestResult ingest_records_file(const std::string& path, const CsvFormat& format) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open record file '" + path + "'");
  return ingest_records(in, format);
}

std::set<std::string> find_diabetics(const std::vector<Timeline>& timelines,
                                     const CodeSets& code_sets) {
  std::set<std::string> out;
  std::vector<Day> dates;
  for (const auto& t : timelines) {
    dates.clear();
    for (const auto& r : t.records) {
      if (code_sets.hba1c.count(r.code)) dates.push_back(r.service_date);
    }
    std::sort(dates.begin(), dates.end());
    for (std::size_t i = 1; i < dates.size(); ++i) {
      if (dates[i] - dates[i - 1] < kWindowDays) {
        out.insert(t.individual_id);
        break;
      }
    }
  }
  return out;
}

std::optional<FirstComplication> first_complication(const Timeline& timeline,
                                                    const CodeSets& code_sets) {
  std::optional<FirstComplication> best;
  for (const auto& r : timeline.records) {
    if (best && r.service_date > best->day) break;
    const auto cls = code_sets.complication_class_of(r.code);
    if (!cls) continue;
    if (!best || r.service_date < best->day || *cls < best->cls) {
      best = FirstComplication{r.service_date, *cls};
    }
  }
  return best;
}

std::optional<CohortSample> extract_positive_window(const Timeline& timeline,
                                                    const FirstComplication& complication,
                                                    int gap_days) {
  auto sample = make_window(timeline, complication.day - gap_days, gap_days);
  if (!sample) return std::nullopt;
  sample->label = 1;
  sample->complication_class = complication.cls;
  return sample;
}

std::optional<CohortSample> extract_negative_window(const Timeline& timeline, int gap_days,
                                                    Rng& rng) {
  const auto& records = timeline.records;
  if (records.size() < kMinWindowRecords) return std::nullopt;
  const Day first_day = records.front().service_date;
  const Day last_day = records.back().service_date;

  std::vector<Day> eligible;
  for (Day d = first_day + 1; d + gap_days <= last_day; ++d) {
    const auto [lo, hi] = window_range(records, d);
    if (hi - lo >= kMinWindowRecords) eligible.push_back(d);
  }
  if (eligible.empty()) return std::nullopt;
  std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
  auto sample = make_window(timeline, eligible[pick(rng)], gap_days);
  sample->label = 0;
  return sample;
}

Cohort build_cohort(const std::vector<Timeline>& timelines, const CodeSets& code_sets,
                    int gap_days, std::uint64_t seed) {
  if (std::find(kDefaultGaps.begin(), kDefaultGaps.end(), gap_days) == kDefaultGaps.end()) {
    throw Error("gap must be one of 60, 120, 180, 240 days (got " + std::to_string(gap_days) +
                ")");
  }
  code_sets.validate();
  const auto diabetics = find_diabetics(timelines, code_sets);

  Cohort cohort;
  auto& s = cohort.summary;
  s.gap_days = gap_days;
  s.individuals = timelines.size();
  for (std::size_t i = 0; i < timelines.size(); ++i) {
    const auto& t = timelines[i];
    if (!diabetics.count(t.individual_id)) {
      ++s.excluded_not_diabetic;
      continue;
    }
    ++s.diabetics;
    if (const auto first = first_complication(t, code_sets)) {
      ++s.complicated;
      if (auto sample = extract_positive_window(t, *first, gap_days)) {
        cohort.samples.push_back(std::move(*sample));
        ++s.positives;
      } else {
        ++s.excluded_positive_short_window;
      }
    } else {
      Rng rng(mix_seed(seed, i));
      if (auto sample = extract_negative_window(t, gap_days, rng)) {
        cohort.samples.push_back(std::move(*sample));
        ++s.negatives;
      } else {
        ++s.excluded_negative_no_window;
      }
    }
  }
  if (s.positives == 0) {
    throw Error("cohort for gap " + std::to_string(gap_days) + " has no positive samples");
  }
  return cohort;
}

void write_cohort_jsonl(std::ostream& out, const std::vector<CohortSample>& samples) {
  for (const auto& s : samples) {
    ordered_json j;
    j["individual_id"] = s.individual_id;
    j["codes"] = s.codes;
    j["record_dates"] = s.record_dates;
    j["index_date"] = s.index_date;
    j["gap_days"] = s.gap_days;
    j["label"] = s.label;
    j["complication_class"] =
        s.complication_class ? ordered_json(std::string(class_name(*s.complication_class)))
                             : ordered_json(nullptr);
    out << j.dump() << '\n';
  }
}

std::vector<CohortSample> read_cohort_jsonl(std::istream& in) {
  std::vector<CohortSample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      CohortSample s;
      s.individual_id = j.at("individual_id").get<std::string>();
      s.codes = j.at("codes").get<std::vector<std::string>>();
      s.record_dates = j.at("record_dates").get<std::vector<Day>>();
      s.index_date = j.at("index_date").get<Day>();
      s.gap_days = j.at("gap_days").get<int>();
      s.label = j.at("label").get<int>();
      if (!j.at("complication_class").is_null()) {
        s.complication_class = parse_class_name(j.at("complication_class").get<std::string>());
      }
      if (s.codes.size() != s.record_dates.size()) throw Error("codes/dates length mismatch");
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw Error("cohort line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error("cohort line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::string summary_json(const CohortSummary& s) {
  ordered_json j;
  j["gap_days"] = s.gap_days;
  j["individuals"] = s.individuals;
  j["diabetics"] = s.diabetics;
  j["excluded_not_diabetic"] = s.excluded_not_diabetic;
  j["complicated"] = s.complicated;
  j["positives"] = s.positives;
  j["negatives"] = s.negatives;
  j["excluded_positive_short_window"] = s.excluded_positive_short_window;
  j["excluded_negative_no_window"] = s.excluded_negative_no_window;
  return j.dump(2);
}

}  // namespace claimsrisk
