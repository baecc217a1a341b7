#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "claimsrisk/common.hpp"
#include "claimsrisk/linalg.hpp"

namespace claimsrisk {

using CodeIndex = std::int32_t;

inline constexpr CodeIndex kPadIndex = 0;
inline constexpr CodeIndex kUnkIndex = 1;
inline constexpr std::string_view kPadToken = "<PAD>";
inline constexpr std::string_view kUnkToken = "<UNK>";

/// Dense code -> index map. Index 0 is padding and index 1 collects every code
/// below the count threshold; real codes follow in descending count order
/// (ties by code string).
class Vocabulary {
 public:
  Vocabulary();

  CodeIndex index_of(std::string_view code) const;  // kUnkIndex when unknown
  bool contains(std::string_view code) const;
  const std::string& code_of(CodeIndex index) const { return codes_.at(static_cast<std::size_t>(index)); }
  std::uint64_t count_of(CodeIndex index) const { return counts_.at(static_cast<std::size_t>(index)); }
  std::size_t size() const { return codes_.size(); }
  std::uint64_t min_count() const { return min_count_; }

  std::vector<CodeIndex> encode(std::span<const std::string> codes) const;

  /// `code,count` CSV, one row per index (PAD and UNK included).
  void write_csv(std::ostream& out) const;
  static Vocabulary read_csv(std::istream& in);

  friend Vocabulary build_vocab(const std::vector<std::vector<std::string>>& sequences,
                                std::uint64_t min_count);

 private:
  void add(std::string code, std::uint64_t count);

  std::vector<std::string> codes_;
  std::vector<std::uint64_t> counts_;
  std::unordered_map<std::string, CodeIndex> index_;
  std::uint64_t min_count_ = 1;
};

/// Throws Error for an empty corpus or min_count == 0.
Vocabulary build_vocab(const std::vector<std::vector<std::string>>& sequences,
                       std::uint64_t min_count);

/// V x d table; row kPadIndex is zero.
struct EmbeddingTable {
  RowMatrix vectors;

  std::size_t rows() const { return static_cast<std::size_t>(vectors.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(vectors.cols()); }

  /// Header `V d`, then `code v_1 ... v_d` per row.
  void write(std::ostream& out, const Vocabulary& vocab) const;
  /// Reads the format above. Rows are reordered to match `vocab` when given;
  /// codes missing from the file get zero rows.
  static EmbeddingTable read(std::istream& in, const Vocabulary& vocab);
};

/// (center, context) pairs for every position t and offset j in [-w, w],
/// j != 0, t ascending then j ascending.
std::vector<std::pair<CodeIndex, CodeIndex>> skipgram_pairs(std::span<const CodeIndex> sequence,
                                                            int window);

struct SkipgramConfig {
  int dim = 64;
  int window = 5;
  int negatives = 5;
  int epochs = 5;
  double learning_rate = 0.025;
  double min_learning_rate = 1e-4;
  double unigram_power = 0.75;
  std::uint64_t seed = 1;
};

struct SkipgramResult {
  EmbeddingTable table;            // center vectors
  // Mean loss per (center, context) pair over the whole corpus, with the
  // parameters frozen at the end of each epoch and the same negatives every
  // epoch.
  std::vector<double> epoch_loss;
  // Mean loss seen during each epoch's updates. With sequential SGD this
  // tracks the codes of the current sequence and can rise as the rate decays.
  std::vector<double> online_loss;
};

/// Negative-sampling loss for one center vector, one true context vector
/// and k negative context vectors, with its gradients:
///   loss = -log s(u_ctx . v) - sum_k log s(-u_k . v)
struct SgnsGradient {
  double loss = 0.0;
  Vector d_center;
  Vector d_context;
  std::vector<Vector> d_negatives;
};
SgnsGradient sgns_loss_and_gradient(const Vector& center, const Vector& context,
                                    const std::vector<Vector>& negatives);

/// Single-threaded SGD over every skipgram pair of every sequence. Learning
/// rate decays linearly from `learning_rate` to `min_learning_rate` over all
/// pairs; negatives come from the unigram distribution raised to
/// `unigram_power`. Throws Error on a non-finite loss.
SkipgramResult train_skipgram(const std::vector<std::vector<CodeIndex>>& sequences,
                              const Vocabulary& vocab, const SkipgramConfig& config);

/// Center-vector initialization used by train_skipgram: uniform in
/// [-0.5/d, 0.5/d], PAD row zero.
EmbeddingTable initial_embedding(std::size_t vocab_size, int dim, std::uint64_t seed);

double cosine(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b);

/// k most cosine-similar codes to `code`, skipping PAD, UNK and the query;
/// ties go to the lower index. Throws Error for an unknown code.
std::vector<std::pair<std::string, double>> nearest(const EmbeddingTable& table,
                                                    const Vocabulary& vocab,
                                                    std::string_view code, std::size_t k);

}  // namespace claimsrisk
