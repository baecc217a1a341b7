#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "claimsrisk/seqmodel.hpp"

namespace claimsrisk {

/// Parallel scores, binary labels and (optional) individual ids.
struct ScoredSet {
  std::vector<double> scores;
  std::vector<int> labels;
  std::vector<std::string> ids;

  std::size_t positives() const;
  std::size_t negatives() const;
};

/// Mann-Whitney AUC with average ranks for ties. Throws Error unless both
/// classes are present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);
double roc_auc(const ScoredSet& set);

enum class CurveKind { Roc, PrecisionRecall };

struct CurvePoints {
  CurveKind kind = CurveKind::Roc;
  std::vector<double> x;  // FPR or recall, non-decreasing
  std::vector<double> y;  // TPR or precision
  std::size_t size() const { return x.size(); }
};

/// One point per distinct threshold (scores descending), starting at (0,0)
/// and ending at (1,1).
CurvePoints roc_curve(const ScoredSet& set);

/// (recall, precision) per distinct threshold, descending. The first point is
/// (0, precision at the top threshold). Throws Error without positives.
CurvePoints pr_curve(const ScoredSet& set);

double trapezoid_area(const CurvePoints& curve);

/// Piecewise-linear value of the curve at `x`. Where several points share an
/// x, the last one in list order wins.
double interpolate(const CurvePoints& curve, double x);

/// Vertical averaging on a uniform grid of `grid_size` points over [0, 1].
/// Throws Error for an empty list or mixed kinds.
CurvePoints mean_curves(std::span<const CurvePoints> curves, std::size_t grid_size = 101);

/// Mean/SD of fold AUCs for one (gap, model) experiment.
struct AggregateEntry {
  int gap_days = 0;
  ModelKind model = ModelKind::SelfAttentive;
  double mean_auc = 0.0;
  std::optional<double> sd_auc;
  std::vector<double> fold_aucs;
};

/// Sample mean and standard deviation (n - 1 denominator; 0 for one value).
AggregateEntry aggregate_folds(int gap_days, ModelKind model, std::span<const double> fold_aucs);

struct GapTrend {
  ModelKind model = ModelKind::SelfAttentive;
  bool non_increasing = true;
  std::vector<std::string> deviations;  // e.g. "120->180: +0.0123"
};

/// Whether mean AUC falls (weakly) as the gap grows, per model.
std::vector<GapTrend> gap_trends(std::span<const AggregateEntry> entries);

struct Report {
  std::string text;  // Table-3-shaped: one row per gap, one column per model
  std::string json;
};

/// Models without entries get no column. `decimals` controls the printed
/// precision of AUC cells.
Report report_table(std::span<const AggregateEntry> entries, int decimals = 3);

void write_curve_csv(std::ostream& out, const CurvePoints& curve);
void write_scores_csv(std::ostream& out, const ScoredSet& set);
ScoredSet read_scores_csv(std::istream& in);

using DescribeCode = std::function<std::string(const std::string& code)>;

/// `position,date,code,description,hop_1..hop_r,aggregate`, oldest first.
/// Throws Error when codes, dates and attention columns differ in length.
void export_attention_csv(std::ostream& out, const SampleAttention& attention,
                          const DescribeCode& describe = {});

/// One-row heatmap, one cell per record, colour proportional to the
/// aggregate score (white = 0, dark red = row maximum).
std::string attention_svg(const SampleAttention& attention);

}  // namespace claimsrisk
