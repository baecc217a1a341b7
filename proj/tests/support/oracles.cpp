#include "oracles.hpp"

#include <algorithm>
#include <cmath>

namespace claimsrisk::testing {

double brute_force_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) {
        wins += 1.0;
      } else if (scores[i] == scores[j]) {
        wins += 0.5;
      }
    }
  }
  return wins / pairs;
}

ModelHyper tiny_hyper(ModelKind kind) {
  ModelHyper h;
  h.kind = kind;
  h.vocab_size = 20;
  h.embed_dim = 8;
  h.hidden = 8;
  h.attn_dim = 6;
  h.hops = 3;
  h.fc_hidden = 8;
  h.penalty = 0.1;
  return h;
}

ModelParams random_params(const ModelHyper& hyper, std::uint64_t seed, double spread) {
  ModelParams p = init_params(hyper, seed);
  Rng rng(mix_seed(seed, 99));
  std::uniform_real_distribution<double> noise(-spread, spread);
  p.for_each_block([&](std::string_view, auto& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) += noise(rng);
    }
  });
  p.embedding.row(kPadIndex).setZero();
  return p;
}

std::vector<BlockCheck> gradient_check(const ModelParams& params, const std::vector<CodeIndex>& tokens,
                                       const std::vector<std::uint8_t>& mask, int label, double eps) {
  const double coeff = params.hyper.penalty;
  const auto objective = [&](const ModelParams& p) {
    return trace_loss(forward(p, tokens, mask).trace, label, coeff);
  };
  ModelParams grads = ModelParams::zeros(params.hyper);
  backward(forward(params, tokens, mask).trace, label, params, grads);

  std::vector<BlockCheck> out;
  ModelParams probe = params;
  std::size_t block = 0;
  probe.for_each_block([&](std::string_view name, auto& m) {
    BlockCheck check{std::string(name), 0.0, 0};
    std::size_t seen = 0;
    grads.for_each_block([&](std::string_view, const auto& g) {
      if (seen++ != block) return;
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
          const double saved = m(i, j);
          m(i, j) = saved + eps;
          const double up = objective(probe);
          m(i, j) = saved - eps;
          const double down = objective(probe);
          m(i, j) = saved;
          const double numeric = (up - down) / (2.0 * eps);
          const double analytic = g(i, j);
          const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
          check.max_rel_error = std::max(check.max_rel_error, std::abs(analytic - numeric) / denom);
          ++check.entries;
        }
      }
    });
    out.push_back(check);
    ++block;
  });
  return out;
}

namespace {

using Vec = std::vector<double>;

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Cell {
  Vec h;
  Vec c;
};

template <class W, class U, class B>
Cell step(const W& w, const U& u, const B& b, const Vec& x, const Cell& prev) {
  const auto n = static_cast<std::size_t>(u.cols());
  Vec z(4 * n);
  for (std::size_t r = 0; r < 4 * n; ++r) {
    double acc = b(static_cast<Eigen::Index>(r));
    for (std::size_t k = 0; k < x.size(); ++k) acc += w(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) * x[k];
    for (std::size_t k = 0; k < n; ++k) acc += u(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) * prev.h[k];
    z[r] = acc;
  }
  Cell next{Vec(n), Vec(n)};
  for (std::size_t k = 0; k < n; ++k) {
    const double i = logistic(z[k]);
    const double f = logistic(z[n + k]);
    const double g = std::tanh(z[2 * n + k]);
    const double o = logistic(z[3 * n + k]);
    next.c[k] = f * prev.c[k] + i * g;
    next.h[k] = o * std::tanh(next.c[k]);
  }
  return next;
}

}  // namespace

ReferenceOutput reference_forward(const ModelParams& params, const std::vector<CodeIndex>& tokens,
                                  const std::vector<std::uint8_t>& mask) {
  const auto& hp = params.hyper;
  const auto u = static_cast<std::size_t>(hp.hidden);
  std::vector<std::size_t> valid;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (mask.empty() || mask[t]) valid.push_back(t);
  }
  std::vector<Vec> x;
  for (auto t : valid) {
    Vec e(static_cast<std::size_t>(hp.embed_dim));
    for (std::size_t k = 0; k < e.size(); ++k) e[k] = params.embedding(tokens[t], static_cast<Eigen::Index>(k));
    x.push_back(e);
  }
  const std::size_t n = x.size();

  std::vector<Vec> fwd(n);
  Cell state{Vec(u, 0.0), Vec(u, 0.0)};
  for (std::size_t t = 0; t < n; ++t) {
    state = step(params.fwd.w, params.fwd.u, params.fwd.b, x[t], state);
    fwd[t] = state.h;
  }

  Vec pooled;
  ReferenceOutput out;
  if (hp.kind == ModelKind::Baseline) {
    pooled = fwd.back();
  } else {
    std::vector<Vec> bwd(n);
    state = Cell{Vec(u, 0.0), Vec(u, 0.0)};
    for (std::size_t k = n; k-- > 0;) {
      state = step(params.bwd.w, params.bwd.u, params.bwd.b, x[k], state);
      bwd[k] = state.h;
    }
    std::vector<Vec> h(n);
    for (std::size_t t = 0; t < n; ++t) {
      h[t] = fwd[t];
      h[t].insert(h[t].end(), bwd[t].begin(), bwd[t].end());
    }
    const auto da = static_cast<std::size_t>(hp.attn_dim);
    const auto r = static_cast<std::size_t>(hp.hops);
    out.attention.assign(r, Vec(tokens.size(), 0.0));
    for (std::size_t hop = 0; hop < r; ++hop) {
      Vec logits(n);
      for (std::size_t t = 0; t < n; ++t) {
        double acc = 0.0;
        for (std::size_t a = 0; a < da; ++a) {
          double s = 0.0;
          for (std::size_t k = 0; k < 2 * u; ++k) {
            s += params.attn_w1(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(k)) * h[t][k];
          }
          acc += params.attn_w2(static_cast<Eigen::Index>(hop), static_cast<Eigen::Index>(a)) * std::tanh(s);
        }
        logits[t] = acc;
      }
      const double peak = *std::max_element(logits.begin(), logits.end());
      double total = 0.0;
      for (auto& v : logits) total += (v = std::exp(v - peak));
      Vec m(2 * u, 0.0);
      for (std::size_t t = 0; t < n; ++t) {
        const double a = logits[t] / total;
        out.attention[hop][valid[t]] = a;
        for (std::size_t k = 0; k < 2 * u; ++k) m[k] += a * h[t][k];
      }
      pooled.insert(pooled.end(), m.begin(), m.end());
    }
  }

  double logit = params.fc2_b(0);
  for (Eigen::Index j = 0; j < params.fc1_w.rows(); ++j) {
    double acc = params.fc1_b(j);
    for (std::size_t k = 0; k < pooled.size(); ++k) acc += params.fc1_w(j, static_cast<Eigen::Index>(k)) * pooled[k];
    logit += params.fc2_w(0, j) * std::tanh(acc);
  }
  out.probability = logistic(logit);
  return out;
}

CodeSets fixture_code_sets() {
  CodeSets sets;
  sets.hba1c = {"H"};
  sets.complications[0] = {"A"};
  sets.complications[1] = {"R"};
  sets.complications[2] = {"D"};
  return sets;
}

namespace {

class Builder {
 public:
  explicit Builder(std::string id) { t_.individual_id = std::move(id); }
  Builder& add(Day day, const std::string& code) {
    t_.records.push_back(CodedRecord{t_.individual_id, day, code});
    return *this;
  }
  // `count` ordinary records spread over [from, to], both ends hit.
  Builder& spread(Day from, Day to, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      const Day day = count == 1 ? from
                                 : from + static_cast<Day>((static_cast<long>(to - from) * static_cast<long>(i)) /
                                                           static_cast<long>(count - 1));
      add(day, "X");
    }
    return *this;
  }
  Builder& diabetic() { return add(0, "H").add(1, "H"); }
  Timeline done() {
    std::stable_sort(t_.records.begin(), t_.records.end(),
                     [](const CodedRecord& a, const CodedRecord& b) { return a.service_date < b.service_date; });
    return t_;
  }

 private:
  Timeline t_;
};

using CC = ComplicationClass;

// Complication on day 1000 at gap 60 gives the window [575, 940).
CohortFixture positive(std::string name, Timeline t, std::optional<std::size_t> length, Day first, Day last,
                       CC cls = CC::AmputationDebridement, int gap = 60, Day day = 1000) {
  CohortFixture f;
  f.name = std::move(name);
  f.timeline = std::move(t);
  f.diabetic = true;
  f.complication = FirstComplication{day, cls};
  f.gap_days = gap;
  f.index_date = day - gap;
  f.window_present = length.has_value();
  f.window_length = length.value_or(0);
  f.window_first = first;
  f.window_last = last;
  return f;
}

}  // namespace

std::vector<CohortFixture> cohort_fixtures() {
  std::vector<CohortFixture> out;

  {
    CohortFixture f;
    f.name = "hba1c 300 days apart";
    f.timeline = Builder("hba1c-300").add(100, "H").add(400, "H").spread(100, 400, 10).done();
    f.diabetic = true;
    out.push_back(f);
  }
  {
    CohortFixture f;
    f.name = "hba1c 365 days apart";
    f.timeline = Builder("hba1c-365").add(0, "H").add(365, "H").spread(0, 365, 60).done();
    out.push_back(f);
  }
  {
    CohortFixture f;
    f.name = "hba1c 364 days apart";
    f.timeline = Builder("hba1c-364").add(0, "H").add(364, "H").done();
    f.diabetic = true;
    out.push_back(f);
  }
  {
    CohortFixture f;
    f.name = "single hba1c test";
    f.timeline = Builder("hba1c-single").add(10, "H").spread(0, 300, 50).done();
    out.push_back(f);
  }
  {
    CohortFixture f;
    f.name = "complication without diabetes";
    f.timeline = Builder("no-diabetes").add(0, "H").spread(575, 939, 80).add(1000, "A").done();
    f.complication = FirstComplication{1000, CC::AmputationDebridement};
    out.push_back(f);
  }

  out.push_back(positive("39 window records", Builder("win-39").diabetic().spread(575, 939, 39).add(1000, "A").done(),
                         std::nullopt, 0, 0));
  out.push_back(positive("40 window records", Builder("win-40").diabetic().spread(575, 939, 40).add(1000, "A").done(),
                         40, 575, 939));
  out.push_back(positive("500 window records",
                         Builder("win-500").diabetic().spread(575, 939, 500).add(1000, "A").done(), 500, 575, 939));
  {
    // 501 records: the earliest is dropped, so the kept window starts one record later.
    auto t = Builder("win-501").diabetic().add(575, "X").spread(576, 939, 500).add(1000, "A").done();
    out.push_back(positive("501 window records", t, 500, 576, 939));
  }
  out.push_back(positive(
      "same-day complication tie",
      Builder("tie").diabetic().spread(575, 939, 60).add(1000, "D").add(1000, "R").add(1000, "A").done(), 60, 575,
      939));
  out.push_back(positive("record dated on index_date",
                         Builder("at-index").diabetic().spread(575, 939, 40).add(940, "X").add(1000, "A").done(), 40,
                         575, 939));
  out.push_back(positive("record on the window's first day",
                         Builder("at-start").diabetic().add(575, "X").spread(600, 939, 39).add(1000, "R").done(), 40,
                         575, 939, CC::RevascularizationAngioplasty));
  out.push_back(positive("record one day before the window",
                         Builder("before-start").diabetic().add(574, "X").spread(600, 939, 39).add(1000, "A").done(),
                         std::nullopt, 0, 0));
  out.push_back(positive("earlier class wins by date",
                         Builder("by-date").diabetic().spread(515, 879, 45).add(940, "R").add(950, "A").done(), 45,
                         515, 879, CC::RevascularizationAngioplasty, 60, 940));
  out.push_back(positive("gap 240", Builder("gap-240").diabetic().spread(395, 759, 41).add(1000, "D").done(), 41, 395,
                         759, CC::Hemodialysis, 240));
  {
    // Only index_date = 40 keeps all 40 records and leaves 60 observed days after it.
    CohortFixture f;
    f.name = "negative with one eligible date";
    f.timeline = Builder("neg-one").add(0, "H").add(1, "H").spread(2, 39, 38).add(100, "X").done();
    f.diabetic = true;
    f.window_present = true;
    f.window_length = 40;
    f.window_first = 0;
    f.window_last = 39;
    f.index_date = 40;
    out.push_back(f);
  }
  {
    CohortFixture f;
    f.name = "negative without an eligible date";
    f.timeline = Builder("neg-none").add(0, "H").add(1, "H").spread(2, 39, 38).add(99, "X").done();
    f.diabetic = true;
    out.push_back(f);
  }
  return out;
}

}  // namespace claimsrisk::testing
