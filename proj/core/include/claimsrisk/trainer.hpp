#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "claimsrisk/codevec.hpp"
#include "claimsrisk/evalkit.hpp"
#include "claimsrisk/records.hpp"
#include "claimsrisk/seqmodel.hpp"

namespace claimsrisk {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  int gap_days = 60;
  int k_folds = 5;
  double oversample_ratio = 1.0;  // positives : negatives in each training split
  int batch_size = 32;
  int epochs = 20;
  AdamConfig adam;
  double clip_norm = 5.0;
  std::uint64_t seed = 7;
  ModelHyper model;  // vocab_size and embed_dim come from the embedding table
  bool freeze_embeddings = false;
  int patience = 0;  // stop after this many epochs without training-loss gain; 0 = off
  /// Empty: label = any complication. Otherwise only this class counts as
  /// positive.
  std::optional<ComplicationClass> target_class;

  void validate() const;
};

/// A cohort sample mapped onto vocabulary indices.
struct EncodedSample {
  std::string individual_id;
  std::vector<CodeIndex> tokens;
  int label = 0;
  int stratum = -1;  // complication class of a positive, -1 otherwise
};

std::vector<EncodedSample> encode_cohort(std::span<const CohortSample> samples, const Vocabulary& vocab,
                                         std::optional<ComplicationClass> target_class = {});

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Positives and negatives are shuffled separately and dealt round-robin, so
/// per-fold positive counts differ by at most one. Throws Error with fewer
/// than k positives or k negatives.
std::vector<Fold> stratified_kfold(std::span<const int> labels, int k, std::uint64_t seed);

/// Duplicates positives until positives >= ratio * negatives. Each stratum
/// gets its proportional share (largest remainder); within a stratum every
/// positive is repeated floor(share / n) times and the rest are drawn without
/// replacement. Returns `train` unchanged if already balanced. Output sorted.
std::vector<std::size_t> oversample_positives(std::span<const std::size_t> train,
                                              std::span<const int> labels,
                                              std::span<const int> strata, double ratio, Rng& rng);

/// Adam with bias correction over a ModelParams-shaped state.
class AdamOptimizer {
 public:
  AdamOptimizer(const ModelParams& like, AdamConfig config);
  void step(ModelParams& params, const ModelParams& grads, bool freeze_embedding);
  long steps() const { return t_; }

 private:
  AdamConfig config_;
  ModelParams m_;
  ModelParams v_;
  long t_ = 0;
};

/// Global L2 norm over all gradient blocks.
double global_norm(const ModelParams& grads);

struct TrainResult {
  ModelParams params;
  std::vector<double> loss_history;  // mean training loss per epoch
};

/// Minibatch Adam on data[train_indices] (a multiset). Batches are padded to
/// their longest member and masked; order is reshuffled every epoch.
/// Throws Error naming the epoch and batch on a non-finite loss.
TrainResult train_model(const TrainConfig& config, std::span<const EncodedSample> data,
                        std::span<const std::size_t> train_indices, const EmbeddingTable& embedding);

/// Probability of every indexed sample.
std::vector<double> score_samples(const ModelParams& params, std::span<const EncodedSample> data,
                                  std::span<const std::size_t> indices);

struct FoldResult {
  int fold = 0;
  std::vector<std::size_t> test_indices;
  ScoredSet held_out;
  double auc = 0.0;
  double train_auc = 0.0;  // on the fold's original (non-oversampled) training split
  std::vector<double> loss_history;
  std::string checkpoint;  // path, empty when nothing was persisted
};

struct ExperimentResult {
  ModelKind model = ModelKind::SelfAttentive;
  int gap_days = 0;
  std::vector<FoldResult> folds;
  AggregateEntry aggregate;
};

using FoldCallback = std::function<void(const FoldResult&)>;

/// Full cross-validation: split, oversample the training side, train, score
/// the held-out side. When `run_dir` is non-empty writes
/// fold<i>/checkpoint and fold<i>/scores.csv beneath it.
ExperimentResult run_experiment(const TrainConfig& config, std::span<const EncodedSample> data,
                                const EmbeddingTable& embedding, const std::string& run_dir = {},
                                const FoldCallback& on_fold = {});

}  // namespace claimsrisk
