#include "claimsrisk/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace claimsrisk {

namespace {

using ordered_json = nlohmann::ordered_json;

void check_parallel(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error("scores and labels differ in length");
  if (scores.empty()) throw Error("scored set is empty");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw Error("labels must be 0 or 1");
    if (!std::isfinite(scores[i])) throw Error("scores must be finite");
  }
}

std::vector<std::size_t> descending_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

// Calls emit(tp, fp) after each group of tied scores, walking thresholds from
// the highest score down.
template <class Emit>
void sweep_thresholds(const ScoredSet& set, Emit&& emit) {
  const auto order = descending_order(set.scores);
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = set.scores[order[i]];
    for (; i < order.size() && set.scores[order[i]] == s; ++i) {
      (set.labels[order[i]] ? tp : fp) += 1;
    }
    emit(tp, fp);
  }
}

std::string model_label(ModelKind kind) {
  return kind == ModelKind::SelfAttentive ? "LSTM+SA" : "LSTM";
}

std::string format_cell(const AggregateEntry& e, int decimals) {
  char buf[64];
  if (e.sd_auc) {
    std::snprintf(buf, sizeof buf, "%.*f +/- %.*f", decimals, e.mean_auc, decimals, *e.sd_auc);
  } else {
    std::snprintf(buf, sizeof buf, "%.*f", decimals, e.mean_auc);
  }
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

}  // namespace

std::size_t ScoredSet::positives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

std::size_t ScoredSet::negatives() const { return labels.size() - positives(); }

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  check_parallel(scores, labels);
  const auto n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  // Average 1-based ranks over tied groups; only the positives' sum is kept.
  double rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) {
        rank_sum += avg_rank;
        ++pos;
      }
    }
    i = j;
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) throw Error("AUC needs at least one positive and one negative");
  const double p = static_cast<double>(pos);
  const double u = rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(neg));
}

double roc_auc(const ScoredSet& set) { return roc_auc(set.scores, set.labels); }

CurvePoints roc_curve(const ScoredSet& set) {
  check_parallel(set.scores, set.labels);
  const double p = static_cast<double>(set.positives());
  const double n = static_cast<double>(set.negatives());
  if (p == 0 || n == 0) throw Error("ROC curve needs at least one positive and one negative");
  CurvePoints c;
  c.kind = CurveKind::Roc;
  c.x.push_back(0.0);
  c.y.push_back(0.0);
  sweep_thresholds(set, [&](std::size_t tp, std::size_t fp) {
    c.x.push_back(static_cast<double>(fp) / n);
    c.y.push_back(static_cast<double>(tp) / p);
  });
  if (c.x.back() != 1.0 || c.y.back() != 1.0) {
    c.x.push_back(1.0);
    c.y.push_back(1.0);
  }
  return c;
}

CurvePoints pr_curve(const ScoredSet& set) {
  check_parallel(set.scores, set.labels);
  const double p = static_cast<double>(set.positives());
  if (p == 0) throw Error("PR curve needs at least one positive");
  CurvePoints c;
  c.kind = CurveKind::PrecisionRecall;
  sweep_thresholds(set, [&](std::size_t tp, std::size_t fp) {
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    if (c.x.empty()) {
      c.x.push_back(0.0);
      c.y.push_back(precision);
    }
    c.x.push_back(static_cast<double>(tp) / p);
    c.y.push_back(precision);
  });
  return c;
}

double trapezoid_area(const CurvePoints& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    area += (curve.x[i] - curve.x[i - 1]) * (curve.y[i] + curve.y[i - 1]) * 0.5;
  }
  return area;
}

double interpolate(const CurvePoints& curve, double x) {
  if (curve.size() == 0) throw Error("cannot interpolate an empty curve");
  if (x < curve.x.front()) return curve.y.front();
  // Last point with px <= x.
  const auto it = std::upper_bound(curve.x.begin(), curve.x.end(), x);
  const auto lo = static_cast<std::size_t>(it - curve.x.begin()) - 1;
  if (curve.x[lo] == x || lo + 1 == curve.size()) return curve.y[lo];
  const std::size_t hi = lo + 1;
  const double w = (x - curve.x[lo]) / (curve.x[hi] - curve.x[lo]);
  return curve.y[lo] + w * (curve.y[hi] - curve.y[lo]);
}

CurvePoints mean_curves(std::span<const CurvePoints> curves, std::size_t grid_size) {
  if (curves.empty()) throw Error("mean_curves needs at least one curve");
  if (grid_size < 2) throw Error("mean_curves grid needs at least two points");
  for (const auto& c : curves) {
    if (c.kind != curves.front().kind) throw Error("mean_curves: mixed curve kinds");
  }
  CurvePoints mean;
  mean.kind = curves.front().kind;
  for (std::size_t j = 0; j < grid_size; ++j) {
    const double x = static_cast<double>(j) / static_cast<double>(grid_size - 1);
    double sum = 0.0;
    for (const auto& c : curves) sum += interpolate(c, x);
    mean.x.push_back(x);
    mean.y.push_back(sum / static_cast<double>(curves.size()));
  }
  return mean;
}

AggregateEntry aggregate_folds(int gap_days, ModelKind model, std::span<const double> fold_aucs) {
  if (fold_aucs.empty()) throw Error("aggregate_folds: no fold AUCs");
  AggregateEntry e;
  e.gap_days = gap_days;
  e.model = model;
  e.fold_aucs.assign(fold_aucs.begin(), fold_aucs.end());
  const double n = static_cast<double>(fold_aucs.size());
  e.mean_auc = std::accumulate(fold_aucs.begin(), fold_aucs.end(), 0.0) / n;
  double ss = 0.0;
  for (double a : fold_aucs) ss += (a - e.mean_auc) * (a - e.mean_auc);
  e.sd_auc = fold_aucs.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  return e;
}

std::vector<GapTrend> gap_trends(std::span<const AggregateEntry> entries) {
  std::map<ModelKind, std::map<int, double>> by_model;
  for (const auto& e : entries) by_model[e.model][e.gap_days] = e.mean_auc;
  std::vector<GapTrend> out;
  for (const auto& [model, by_gap] : by_model) {
    GapTrend trend;
    trend.model = model;
    for (auto it = by_gap.begin(); it != by_gap.end() && std::next(it) != by_gap.end(); ++it) {
      const auto next = std::next(it);
      if (next->second > it->second) {
        trend.non_increasing = false;
        char buf[96];
        std::snprintf(buf, sizeof buf, "%d->%d: +%.4f", it->first, next->first,
                      next->second - it->second);
        trend.deviations.emplace_back(buf);
      }
    }
    out.push_back(std::move(trend));
  }
  return out;
}

Report report_table(std::span<const AggregateEntry> entries, int decimals) {
  std::map<int, std::map<ModelKind, const AggregateEntry*>> rows;
  std::vector<ModelKind> columns;
  for (const auto& e : entries) {
    rows[e.gap_days][e.model] = &e;
    if (std::find(columns.begin(), columns.end(), e.model) == columns.end()) columns.push_back(e.model);
  }
  std::sort(columns.begin(), columns.end());

  // Text table.
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{"Time Gap"};
  for (auto m : columns) header.push_back(model_label(m));
  cells.push_back(header);
  for (const auto& [gap, by_model] : rows) {
    std::vector<std::string> row{std::to_string(gap)};
    for (auto m : columns) {
      const auto it = by_model.find(m);
      row.push_back(it == by_model.end() ? "-" : format_cell(*it->second, decimals));
    }
    cells.push_back(std::move(row));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream text;
  text << "Mean AUC over cross-validation folds\n";
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t c = 0; c < cells[r].size(); ++c) {
      text << (c ? " | " : "") << (c + 1 == cells[r].size() ? cells[r][c] : pad(cells[r][c], width[c]));
    }
    text << '\n';
    if (r == 0) {
      for (std::size_t c = 0; c < width.size(); ++c) {
        text << (c ? "-+-" : "") << std::string(width[c], '-');
      }
      text << '\n';
    }
  }

  ordered_json j;
  j["columns"] = ordered_json::array();
  for (auto m : columns) j["columns"].push_back(std::string(kind_name(m)));
  j["rows"] = ordered_json::array();
  for (const auto& [gap, by_model] : rows) {
    ordered_json row;
    row["gap_days"] = gap;
    for (auto m : columns) {
      const auto it = by_model.find(m);
      if (it == by_model.end()) continue;
      ordered_json cell;
      cell["mean_auc"] = it->second->mean_auc;
      if (it->second->sd_auc) cell["sd_auc"] = *it->second->sd_auc;
      cell["fold_aucs"] = it->second->fold_aucs;
      row[std::string(kind_name(m))] = cell;
    }
    j["rows"].push_back(row);
  }
  const auto trends = gap_trends(entries);
  ordered_json trend_json = ordered_json::object();
  for (const auto& t : trends) {
    trend_json[std::string(kind_name(t.model))] = {{"non_increasing", t.non_increasing},
                                                   {"deviations", t.deviations}};
  }
  j["gap_trend"] = trend_json;
  if (columns.size() == 2) {
    bool every = true;
    for (const auto& [gap, by_model] : rows) {
      if (by_model.size() == 2) {
        every = every && by_model.at(ModelKind::SelfAttentive)->mean_auc >
                             by_model.at(ModelKind::Baseline)->mean_auc;
      }
    }
    j["sa_above_baseline_every_gap"] = every;
  }

  for (const auto& t : trends) {
    text << "gap trend (" << model_label(t.model) << "): "
         << (t.non_increasing ? "non-increasing" : "increases at");
    for (const auto& d : t.deviations) text << ' ' << d;
    text << '\n';
  }
  return Report{text.str(), j.dump(2) + "\n"};
}

void write_curve_csv(std::ostream& out, const CurvePoints& curve) {
  out << (curve.kind == CurveKind::Roc ? "fpr,tpr\n" : "recall,precision\n");
  char buf[64];
  for (std::size_t i = 0; i < curve.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", curve.x[i], curve.y[i]);
    out << buf;
  }
}

void write_scores_csv(std::ostream& out, const ScoredSet& set) {
  out << "individual_id,score,label\n";
  char buf[40];
  for (std::size_t i = 0; i < set.scores.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", set.scores[i]);
    out << (i < set.ids.size() ? set.ids[i] : std::to_string(i)) << ',' << buf << ','
        << set.labels[i] << '\n';
  }
}

ScoredSet read_scores_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != "individual_id,score,label") {
    throw Error("scores.csv: missing header");
  }
  ScoredSet set;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto f = split(trim(line), ',');
    if (f.size() != 3) throw Error("scores.csv: malformed line '" + line + "'");
    set.ids.emplace_back(f[0]);
    set.scores.push_back(std::stod(std::string(f[1])));
    set.labels.push_back(std::stoi(std::string(f[2])));
  }
  return set;
}

void export_attention_csv(std::ostream& out, const SampleAttention& a, const DescribeCode& describe) {
  const auto n = a.codes.size();
  if (a.dates.size() != n || static_cast<std::size_t>(a.map.scores.cols()) != n ||
      static_cast<std::size_t>(a.map.aggregate.size()) != n) {
    throw Error("export_attention: codes, dates and attention differ in length");
  }
  out << "position,date,code,description";
  for (Eigen::Index k = 0; k < a.map.scores.rows(); ++k) out << ",hop_" << (k + 1);
  out << ",aggregate\n";
  char buf[40];
  for (std::size_t t = 0; t < n; ++t) {
    const auto col = static_cast<Eigen::Index>(t);
    std::string description = describe ? describe(a.codes[t]) : std::string();
    std::replace(description.begin(), description.end(), ',', ';');
    out << t << ',' << format_iso_date(a.dates[t]) << ',' << a.codes[t] << ',' << description;
    for (Eigen::Index k = 0; k < a.map.scores.rows(); ++k) {
      std::snprintf(buf, sizeof buf, ",%.17g", a.map.scores(k, col));
      out << buf;
    }
    std::snprintf(buf, sizeof buf, ",%.17g\n", a.map.aggregate(col));
    out << buf;
  }
}

std::string attention_svg(const SampleAttention& a) {
  const auto n = static_cast<std::size_t>(a.map.aggregate.size());
  constexpr int kCell = 12, kHeight = 40;
  const double top = n ? a.map.aggregate.maxCoeff() : 0.0;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << n * kCell << "\" height=\""
      << kHeight << "\">\n";
  for (std::size_t t = 0; t < n; ++t) {
    const double level = top > 0 ? a.map.aggregate(static_cast<Eigen::Index>(t)) / top : 0.0;
    const int r = static_cast<int>(std::lround(255.0 - level * (255.0 - 139.0)));
    const int gb = static_cast<int>(std::lround(255.0 * (1.0 - level)));
    char fill[16];
    std::snprintf(fill, sizeof fill, "#%02x%02x%02x", r, gb, gb);
    svg << "  <rect x=\"" << t * kCell << "\" y=\"0\" width=\"" << kCell << "\" height=\"" << kHeight
        << "\" fill=\"" << fill << "\"><title>" << (t < a.codes.size() ? a.codes[t] : "")
        << "</title></rect>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace claimsrisk
