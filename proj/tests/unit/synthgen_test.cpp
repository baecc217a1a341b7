#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "claimsrisk/records.hpp"
#include "claimsrisk/synthgen.hpp"

using namespace claimsrisk;

namespace {

struct Row {
  std::string id;
  Day day;
  std::string code;
};

std::vector<Row> parse_rows(const std::string& csv) {
  std::vector<Row> rows;
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "individual_id,service_date,code");
  while (std::getline(in, line)) {
    const auto f = split(line, ',');
    rows.push_back(Row{std::string(f[0]), parse_iso_date(f[1]), std::string(f[2])});
  }
  return rows;
}

SynthConfig small(std::size_t n, double fraction, std::uint64_t seed) {
  SynthConfig c;
  c.n_individuals = n;
  c.complication_fraction = fraction;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(Synth, ZeroFractionEmitsNoComplications) {
  std::ostringstream out;
  const auto m = generate_population(small(200, 0.0, 3), out);
  EXPECT_TRUE(m.positive_ids.empty());
  for (const auto& r : parse_rows(out.str())) EXPECT_FALSE(m.code_sets.complication_class_of(r.code)) << r.code;
}

TEST(Synth, SameSeedSameBytes) {
  std::ostringstream a, b, c;
  generate_population(small(1000, 0.05, 11), a);
  generate_population(small(1000, 0.05, 11), b);
  generate_population(small(1000, 0.05, 12), c);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_NE(a.str(), c.str());
}

TEST(Synth, PlantedPositivesMatchScan) {
  std::ostringstream out;
  const auto m = generate_population(small(600, 0.1, 5), out);
  std::set<std::string> with_complication;
  for (const auto& r : parse_rows(out.str())) {
    if (m.code_sets.complication_class_of(r.code)) with_complication.insert(r.id);
  }
  EXPECT_EQ(with_complication.size(), m.positive_ids.size());
  EXPECT_EQ(with_complication, std::set<std::string>(m.positive_ids.begin(), m.positive_ids.end()));
}

TEST(Synth, EveryoneIsDiabeticAndPositivesExit) {
  std::ostringstream out;
  const auto m = generate_population(small(300, 0.2, 8), out);
  std::istringstream in(out.str());
  const auto timelines = ingest_records(in).timelines;
  ASSERT_EQ(timelines.size(), 300u);
  EXPECT_EQ(find_diabetics(timelines, m.code_sets).size(), 300u);
  for (const auto& t : timelines) {
    const auto first = first_complication(t, m.code_sets);
    if (!first) continue;
    EXPECT_LE(t.records.back().service_date, first->day + 1) << t.individual_id;
  }
}

TEST(Synth, PlantedLeadersAreFollowedSameDay) {
  std::ostringstream out;
  const auto m = generate_population(small(100, 0.05, 2), out);
  std::map<std::string, std::string> partner(m.code_sets.planted_pairs.begin(), m.code_sets.planted_pairs.end());
  const auto rows = parse_rows(out.str());
  std::size_t leaders = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto it = partner.find(rows[i].code);
    if (it == partner.end()) continue;
    ++leaders;
    ASSERT_LT(i + 1, rows.size());
    EXPECT_EQ(rows[i + 1].code, it->second);
    EXPECT_EQ(rows[i + 1].day, rows[i].day);
  }
  EXPECT_GT(leaders, 1000u);
}

TEST(Synth, MarkerFrequencyRisesBeforeComplication) {
  std::ostringstream out;
  const auto m = generate_population(small(1200, 0.2, 21), out);
  ASSERT_GE(m.positive_ids.size(), 200u);
  std::istringstream in(out.str());
  double late = 0, early = 0;
  for (const auto& t : ingest_records(in).timelines) {
    const auto first = first_complication(t, m.code_sets);
    if (!first) continue;
    for (const auto& r : t.records) {
      if (!m.code_sets.risk_markers.count(r.code)) continue;
      const Day before = first->day - r.service_date;
      if (before > 0 && before <= 90) late += 1;
      if (before >= 275 && before < 365) early += 1;
    }
  }
  EXPECT_GT(late, early);
}

TEST(Synth, DescribePopulation) {
  std::ostringstream out;
  const auto config = small(1000, 0.05, 13);
  const auto m = generate_population(config, out);
  std::istringstream in(out.str());
  const auto stats = describe_population(in, m.code_sets);
  EXPECT_EQ(stats.individuals, 1000u);
  EXPECT_EQ(stats.records, m.records);
  EXPECT_EQ(stats.with_complication, m.positive_ids.size());
  const double sigma = std::sqrt(0.05 * 0.95 / 1000.0);
  EXPECT_NEAR(stats.prevalence, 0.05, 3 * sigma);
  ASSERT_EQ(stats.records_per_individual_quantiles.size(), 5u);
  EXPECT_LE(stats.records_per_individual_quantiles.front(), stats.records_per_individual_quantiles.back());

  std::istringstream empty("");
  EXPECT_THROW(describe_population(empty, m.code_sets), Error);
  std::istringstream garbage("not,a,header\n1,2,3\n");
  EXPECT_THROW(describe_population(garbage, m.code_sets), Error);
}

TEST(Synth, InvalidConfigRejectedBeforeOutput) {
  std::ostringstream out;
  auto c = small(10, 0.05, 1);
  c.vocab_size = 99;
  EXPECT_THROW(generate_population(c, out), Error);
  c = small(10, 0.5, 1);
  EXPECT_THROW(generate_population(c, out), Error);
  c = small(10, 0.05, 1);
  c.base_rate = 0.0;
  EXPECT_THROW(generate_population(c, out), Error);
  c = small(10, 0.05, 1);
  c.profile_mass = 1.0;
  EXPECT_THROW(generate_population(c, out), Error);
  c.profile_mass = 0.5;
  c.profile_codes = 0;
  EXPECT_THROW(generate_population(c, out), Error);
  EXPECT_TRUE(out.str().empty());
}

// Share of an individual's background records taken by their five most
// frequent background codes, averaged over individuals.
TEST(Synth, ProfilesConcentratePersonalCodes) {
  const auto top_share = [](const SynthConfig& c) {
    std::ostringstream out;
    const auto m = generate_population(c, out);
    const std::set<std::string> background(m.background_codes.begin(), m.background_codes.end());
    std::map<std::string, std::map<std::string, int>> counts;
    for (const auto& r : parse_rows(out.str())) {
      if (background.count(r.code)) ++counts[r.id][r.code];
    }
    double total = 0.0;
    for (const auto& [id, by_code] : counts) {
      std::vector<int> v;
      int n = 0;
      for (const auto& [code, k] : by_code) {
        v.push_back(k);
        n += k;
      }
      std::sort(v.rbegin(), v.rend());
      int top = 0;
      for (std::size_t i = 0; i < std::min<std::size_t>(5, v.size()); ++i) top += v[i];
      total += static_cast<double>(top) / n;
    }
    return total / static_cast<double>(counts.size());
  };
  auto flat = small(100, 0.0, 4);
  flat.profile_mass = 0.0;
  auto personal = small(100, 0.0, 4);
  personal.profile_mass = 0.6;
  personal.profile_codes = 5;
  const double a = top_share(flat), b = top_share(personal);
  EXPECT_LT(a, 0.3);
  EXPECT_GT(b, a + 0.3);
}
