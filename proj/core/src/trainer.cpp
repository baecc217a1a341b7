#include "claimsrisk/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <type_traits>

namespace claimsrisk {

namespace {

template <class T>
struct Span {
  T* data;
  Eigen::Index size;
};

template <class P>
auto flat_blocks(P& p) {
  using T = std::conditional_t<std::is_const_v<P>, const double, double>;
  std::vector<Span<T>> out;
  p.for_each_block([&](std::string_view, auto& m) { out.push_back(Span<T>{m.data(), m.size()}); });
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (k_folds < 2) throw Error("train: k_folds must be at least 2");
  if (batch_size < 1) throw Error("train: batch_size must be at least 1");
  if (epochs < 0) throw Error("train: epochs must be non-negative");
  if (!(oversample_ratio > 0.0 && oversample_ratio <= 1.0)) {
    throw Error("train: oversample_ratio must lie in (0, 1]");
  }
  if (!(clip_norm > 0.0)) throw Error("train: clip_norm must be positive");
  if (!(adam.learning_rate >= 0.0) || !(adam.beta1 >= 0.0 && adam.beta1 < 1.0) ||
      !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) || !(adam.epsilon > 0.0)) {
    throw Error("train: invalid Adam hyperparameters");
  }
  if (patience < 0) throw Error("train: patience must be non-negative");
}

std::vector<EncodedSample> encode_cohort(std::span<const CohortSample> samples, const Vocabulary& vocab,
                                         std::optional<ComplicationClass> target_class) {
  std::vector<EncodedSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    EncodedSample e;
    e.individual_id = s.individual_id;
    e.tokens = vocab.encode(s.codes);
    const bool positive =
        s.label == 1 && (!target_class || (s.complication_class && *s.complication_class == *target_class));
    e.label = positive ? 1 : 0;
    e.stratum = positive && s.complication_class ? static_cast<int>(*s.complication_class) : -1;
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<Fold> stratified_kfold(std::span<const int> labels, int k, std::uint64_t seed) {
  if (k < 2) throw Error("kfold: k must be at least 2");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(i);
  const auto uk = static_cast<std::size_t>(k);
  if (pos.size() < uk) {
    throw Error("kfold: " + std::to_string(pos.size()) + " positives cannot fill " +
                std::to_string(k) + " folds");
  }
  if (neg.size() < uk) {
    throw Error("kfold: " + std::to_string(neg.size()) + " negatives cannot fill " +
                std::to_string(k) + " folds");
  }
  Rng rng(seed);
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);

  std::vector<std::size_t> fold_of(labels.size());
  for (std::size_t i = 0; i < pos.size(); ++i) fold_of[pos[i]] = i % uk;
  for (std::size_t j = 0; j < neg.size(); ++j) fold_of[neg[j]] = (pos.size() + j) % uk;

  std::vector<Fold> folds(uk);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t f = 0; f < uk; ++f) (f == fold_of[i] ? folds[f].test : folds[f].train).push_back(i);
  }
  return folds;
}

std::vector<std::size_t> oversample_positives(std::span<const std::size_t> train,
                                              std::span<const int> labels,
                                              std::span<const int> strata, double ratio, Rng& rng) {
  if (labels.size() != strata.size()) throw Error("oversample: labels and strata differ in length");
  if (!(ratio > 0.0 && ratio <= 1.0)) throw Error("oversample: ratio must lie in (0, 1]");
  std::map<int, std::vector<std::size_t>> by_stratum;
  std::size_t n_pos = 0, n_neg = 0;
  for (auto i : train) {
    if (labels[i]) {
      by_stratum[strata[i]].push_back(i);
      ++n_pos;
    } else {
      ++n_neg;
    }
  }
  if (n_pos == 0) throw Error("oversample: training split has no positives");
  std::vector<std::size_t> out(train.begin(), train.end());
  const auto target = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n_neg) - 1e-9));
  if (n_pos >= target) {
    std::sort(out.begin(), out.end());
    return out;
  }

  // Largest-remainder apportionment of `target` across strata.
  std::vector<std::pair<int, std::size_t>> share;
  std::vector<std::pair<double, int>> remainder;
  std::size_t assigned = 0;
  for (const auto& [s, members] : by_stratum) {
    const double exact = static_cast<double>(target) * static_cast<double>(members.size()) /
                         static_cast<double>(n_pos);
    const auto whole = static_cast<std::size_t>(std::floor(exact));
    share.emplace_back(s, whole);
    remainder.emplace_back(exact - static_cast<double>(whole), s);
    assigned += whole;
  }
  std::stable_sort(remainder.begin(), remainder.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < target; ++i, ++assigned) {
    for (auto& [s, n] : share) {
      if (s == remainder[i % remainder.size()].second) ++n;
    }
  }

  for (const auto& [s, want] : share) {
    auto members = by_stratum[s];
    const std::size_t have = members.size();
    if (want <= have) continue;
    const std::size_t copies = want / have;  // originals count as the first copy
    for (std::size_t c = 1; c < copies; ++c) out.insert(out.end(), members.begin(), members.end());
    std::shuffle(members.begin(), members.end(), rng);
    out.insert(out.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(want % have));
  }
  std::sort(out.begin(), out.end());
  return out;
}

AdamOptimizer::AdamOptimizer(const ModelParams& like, AdamConfig config)
    : config_(config), m_(ModelParams::zeros(like.hyper)), v_(ModelParams::zeros(like.hyper)) {}

void AdamOptimizer::step(ModelParams& params, const ModelParams& grads, bool freeze_embedding) {
  ++t_;
  auto p = flat_blocks(params);
  auto g = flat_blocks(grads);
  auto m = flat_blocks(m_);
  auto v = flat_blocks(v_);
  if (p.size() != g.size()) throw Error("adam: gradient set does not match parameters");
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double lr = config_.learning_rate;
  // Block 0 is the embedding.
  for (std::size_t b = freeze_embedding ? 1 : 0; b < p.size(); ++b) {
    if (p[b].size != g[b].size) throw Error("adam: gradient block size mismatch");
    for (Eigen::Index i = 0; i < p[b].size; ++i) {
      const double gi = g[b].data[i];
      double& mi = m[b].data[i];
      double& vi = v[b].data[i];
      mi = b1 * mi + (1.0 - b1) * gi;
      vi = b2 * vi + (1.0 - b2) * gi * gi;
      p[b].data[i] -= lr * (mi / c1) / (std::sqrt(vi / c2) + config_.epsilon);
    }
  }
  params.embedding.row(kPadIndex).setZero();
}

double global_norm(const ModelParams& grads) {
  double sq = 0.0;
  grads.for_each_block([&](std::string_view, const auto& m) { sq += m.squaredNorm(); });
  return std::sqrt(sq);
}

TrainResult train_model(const TrainConfig& config, std::span<const EncodedSample> data,
                        std::span<const std::size_t> train_indices, const EmbeddingTable& embedding) {
  config.validate();
  ModelHyper hyper = config.model;
  hyper.vocab_size = static_cast<int>(embedding.rows());
  hyper.embed_dim = static_cast<int>(embedding.dim());

  TrainResult result{init_params(hyper, mix_seed(config.seed, 11), &embedding), {}};
  ModelParams& params = result.params;
  if (train_indices.empty() || config.epochs == 0) return result;

  AdamOptimizer adam(params, config.adam);
  ModelParams grads = ModelParams::zeros(hyper);
  std::vector<std::size_t> order(train_indices.begin(), train_indices.end());
  Rng rng(mix_seed(config.seed, 12));

  std::vector<CodeIndex> padded;
  std::vector<std::uint8_t> mask;
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    const auto batch = static_cast<std::size_t>(config.batch_size);
    for (std::size_t start = 0, b = 0; start < order.size(); start += batch, ++b) {
      const std::size_t end = std::min(order.size(), start + batch);
      std::size_t max_len = 0;
      for (std::size_t i = start; i < end; ++i) max_len = std::max(max_len, data[order[i]].tokens.size());

      grads.set_zero();
      double batch_loss = 0.0;
      const double scale = 1.0 / static_cast<double>(end - start);
      for (std::size_t i = start; i < end; ++i) {
        const auto& s = data[order[i]];
        padded.assign(max_len, kPadIndex);
        mask.assign(max_len, 0);
        std::copy(s.tokens.begin(), s.tokens.end(), padded.begin());
        std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(s.tokens.size()), 1);
        const auto fwd = forward(params, padded, mask);
        batch_loss += trace_loss(fwd.trace, s.label, hyper.penalty);
        backward(fwd.trace, s.label, params, grads, scale);
      }
      if (!std::isfinite(batch_loss)) {
        throw Error("train: non-finite loss in epoch " + std::to_string(epoch + 1) + ", batch " +
                    std::to_string(b));
      }
      epoch_loss += batch_loss;
      if (config.freeze_embeddings) grads.embedding.setZero();
      const double norm = global_norm(grads);
      if (norm > config.clip_norm) {
        const double shrink = config.clip_norm / norm;
        grads.for_each_block([&](std::string_view, auto& m) { m *= shrink; });
      }
      adam.step(params, grads, config.freeze_embeddings);
    }
    const double mean = epoch_loss / static_cast<double>(order.size());
    result.loss_history.push_back(mean);
    if (config.patience > 0) {
      if (mean < best) {
        best = mean;
        stale = 0;
      } else if (++stale >= config.patience) {
        break;
      }
    }
  }
  return result;
}

std::vector<double> score_samples(const ModelParams& params, std::span<const EncodedSample> data,
                                  std::span<const std::size_t> indices) {
  std::vector<double> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(forward(params, data[i].tokens).probability);
  return out;
}

ExperimentResult run_experiment(const TrainConfig& config, std::span<const EncodedSample> data,
                                const EmbeddingTable& embedding, const std::string& run_dir,
                                const FoldCallback& on_fold) {
  config.validate();
  std::vector<int> labels, strata;
  for (const auto& s : data) {
    labels.push_back(s.label);
    strata.push_back(s.stratum);
  }
  const auto folds = stratified_kfold(labels, config.k_folds, mix_seed(config.seed, 21));

  ExperimentResult result;
  result.model = config.model.kind;
  result.gap_days = config.gap_days;
  std::vector<double> aucs;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const auto& fold = folds[f];
    Rng oversample_rng(mix_seed(config.seed, 31 + f));
    const auto train = oversample_positives(fold.train, labels, strata, config.oversample_ratio,
                                            oversample_rng);
    const std::set<std::size_t> test_set(fold.test.begin(), fold.test.end());
    for (auto i : train) {
      if (test_set.count(i)) throw Error("train: held-out sample leaked into training split");
    }

    TrainConfig fold_config = config;
    fold_config.seed = mix_seed(config.seed, 41 + f);
    auto trained = train_model(fold_config, data, train, embedding);

    FoldResult fr;
    fr.fold = static_cast<int>(f);
    fr.test_indices = fold.test;
    fr.held_out.scores = score_samples(trained.params, data, fold.test);
    for (auto i : fold.test) {
      fr.held_out.labels.push_back(labels[i]);
      fr.held_out.ids.push_back(data[i].individual_id);
    }
    fr.auc = roc_auc(fr.held_out);
    std::vector<int> train_labels;
    for (auto i : fold.train) train_labels.push_back(labels[i]);
    fr.train_auc = roc_auc(score_samples(trained.params, data, fold.train), train_labels);
    fr.loss_history = std::move(trained.loss_history);

    if (!run_dir.empty()) {
      const auto dir = std::filesystem::path(run_dir) / ("fold" + std::to_string(f));
      std::filesystem::create_directories(dir);
      fr.checkpoint = (dir / "checkpoint").string();
      save_checkpoint_file(fr.checkpoint, trained.params);
      std::ofstream scores(dir / "scores.csv");
      write_scores_csv(scores, fr.held_out);
      if (!scores) throw Error("train: cannot write " + (dir / "scores.csv").string());
    }
    aucs.push_back(fr.auc);
    if (on_fold) on_fold(fr);
    result.folds.push_back(std::move(fr));
  }
  result.aggregate = aggregate_folds(config.gap_days, config.model.kind, aucs);
  return result;
}

}  // namespace claimsrisk
