#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "claimsrisk/codevec.hpp"
#include "claimsrisk/common.hpp"
#include "claimsrisk/linalg.hpp"
#include "claimsrisk/records.hpp"

namespace claimsrisk {

enum class ModelKind {
  SelfAttentive,  // BiLSTM + multi-hop self-attentive pooling
  Baseline,       // unidirectional LSTM, last hidden state
};

std::string_view kind_name(ModelKind kind);  // "sa" / "baseline"
ModelKind parse_kind(std::string_view name);

inline constexpr std::size_t kMaxSequenceLength = 500;

struct ModelHyper {
  ModelKind kind = ModelKind::SelfAttentive;
  int vocab_size = 0;
  int embed_dim = 64;
  int hidden = 64;     // per direction
  int attn_dim = 64;   // d_a
  int hops = 4;        // r
  int fc_hidden = 64;
  double penalty = 0.1;  // weight of ||A A^T - I||_F^2

  int head_input() const { return kind == ModelKind::SelfAttentive ? hops * 2 * hidden : hidden; }
  void validate() const;
  bool operator==(const ModelHyper&) const = default;
};

/// Gate blocks are stacked in the order input, forget, cell, output.
struct LstmParams {
  Matrix w;  // 4u x d
  Matrix u;  // 4u x u
  Vector b;  // 4u
};

/// Every learnable weight of either model kind. Blocks a kind does not use
/// (the backward LSTM and attention for the baseline) are empty.
struct ModelParams {
  ModelHyper hyper;
  RowMatrix embedding;  // V x d, row kPadIndex stays zero
  LstmParams fwd;
  LstmParams bwd;
  Matrix attn_w1;  // d_a x 2u
  Matrix attn_w2;  // r x d_a
  Matrix fc1_w;    // h_fc x head_input
  Vector fc1_b;
  Matrix fc2_w;  // 1 x h_fc
  Vector fc2_b;  // 1

  /// Correctly shaped, all-zero parameters.
  static ModelParams zeros(const ModelHyper& hyper);

  /// Visits (name, block) for every block the kind uses, in a fixed order.
  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    f("embedding", self.embedding);
    f("fwd.w", self.fwd.w);
    f("fwd.u", self.fwd.u);
    f("fwd.b", self.fwd.b);
    if (self.hyper.kind == ModelKind::SelfAttentive) {
      f("bwd.w", self.bwd.w);
      f("bwd.u", self.bwd.u);
      f("bwd.b", self.bwd.b);
      f("attn.w1", self.attn_w1);
      f("attn.w2", self.attn_w2);
    }
    f("fc1.w", self.fc1_w);
    f("fc1.b", self.fc1_b);
    f("fc2.w", self.fc2_w);
    f("fc2.b", self.fc2_b);
  }
  template <class F>
  void for_each_block(F&& f) { visit(*this, std::forward<F>(f)); }
  template <class F>
  void for_each_block(F&& f) const { visit(*this, std::forward<F>(f)); }

  std::size_t parameter_count() const;
  void set_zero();
  bool all_finite() const;
};

/// Seeded Glorot-uniform weights, zero biases except forget-gate bias 1.
/// When `pretrained` is given it must be V x d and becomes the embedding.
ModelParams init_params(const ModelHyper& hyper, std::uint64_t seed,
                        const EmbeddingTable* pretrained = nullptr);

struct LstmState {
  Vector h;
  Vector c;
};

/// One LSTM step. Throws Error on non-finite input or inconsistent shapes.
LstmState lstm_cell(const Vector& x, const Vector& h_prev, const Vector& c_prev,
                    const LstmParams& params);

/// Activations of one LSTM direction, one column per valid position.
struct LstmTrace {
  Matrix gates;  // 4u x Tv, post-activation
  Matrix cell;   // u x Tv
  Matrix tanh_cell;
  Matrix hidden;  // u x Tv
};

/// Everything backward() needs. Masked positions are dropped up front, so
/// all matrices are indexed by valid position.
struct ForwardTrace {
  ModelKind kind = ModelKind::SelfAttentive;
  std::size_t length = 0;               // T, masked positions included
  std::vector<std::size_t> positions;   // valid positions, ascending
  std::vector<CodeIndex> tokens;        // tokens at those positions
  Matrix inputs;                        // d x Tv
  LstmTrace fwd;
  LstmTrace bwd;
  Matrix states;       // 2u x Tv, [forward; backward]
  Matrix attn_hidden;  // d_a x Tv, tanh(W1 H^T)
  Matrix attention;    // r x Tv
  Vector pooled;       // head input
  Vector fc_hidden;    // tanh(FC1)
  double logit = 0.0;
  double probability = 0.0;
};

/// r x T attention over the full (padded) sequence; masked columns are 0.
struct AttentionMap {
  Matrix scores;
  Vector aggregate;  // column mean over hops
};

struct ForwardResult {
  double probability = 0.0;
  AttentionMap attention;  // empty for the baseline
  ForwardTrace trace;
};

/// `mask[t] != 0` marks a valid position; an empty mask means all valid.
/// Throws Error when nothing is valid, more than kMaxSequenceLength
/// positions are valid, or a token is out of range.
ForwardResult forward_sa(const ModelParams& params, std::span<const CodeIndex> tokens,
                         std::span<const std::uint8_t> mask = {});
ForwardResult forward_baseline(const ModelParams& params, std::span<const CodeIndex> tokens,
                               std::span<const std::uint8_t> mask = {});
/// Dispatches on params.hyper.kind.
ForwardResult forward(const ModelParams& params, std::span<const CodeIndex> tokens,
                      std::span<const std::uint8_t> mask = {});

/// ||A A^T - I||_F^2
double attention_penalty(const Matrix& attention);

/// Binary cross-entropy plus penalty_coeff * ||A A^T - I||_F^2. Pass an empty
/// attention matrix for the baseline.
double loss(double probability, int label, const Matrix& attention, double penalty_coeff);

/// Same objective evaluated from the logit, stable for saturated outputs.
double trace_loss(const ForwardTrace& trace, int label, double penalty_coeff);

/// Adds scale * d(trace_loss)/d(params) into `grads`, which must have the
/// shapes of `params`. The PAD embedding row receives no gradient.
void backward(const ForwardTrace& trace, int label, const ModelParams& params,
              ModelParams& grads, double scale = 1.0);

/// Attention of a trained self-attentive model on one cohort sample, aligned
/// with its codes and dates (oldest first, latest last).
struct SampleAttention {
  std::string individual_id;
  std::vector<std::string> codes;
  std::vector<Day> dates;
  AttentionMap map;
  double probability = 0.0;
};
SampleAttention attention_of(const ModelParams& params, const Vocabulary& vocab,
                             const CohortSample& sample);

/// Text checkpoint: a `claimsrisk-checkpoint 1` line, hyperparameter lines,
/// then `block <name> <rows> <cols>` headers each followed by rows of
/// hexadecimal floats. Save then load reproduces every bit.
void save_checkpoint(std::ostream& out, const ModelParams& params);
ModelParams load_checkpoint(std::istream& in);
void save_checkpoint_file(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint_file(const std::string& path);

}  // namespace claimsrisk
