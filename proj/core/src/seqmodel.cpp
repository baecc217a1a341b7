#include "claimsrisk/seqmodel.hpp"

#include <cmath>

namespace claimsrisk {

namespace {

double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

Vector sigmoid(const Vector& x) { return x.unaryExpr([](double v) { return sigmoid(v); }); }

// log(1 + e^z), overflow-free.
double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

void fill_uniform(Matrix& m, double limit, Rng& rng) {
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
  }
}

double glorot(Eigen::Index fan_in, Eigen::Index fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

LstmParams init_lstm(int in, int hidden, Rng& rng) {
  LstmParams p;
  p.w.resize(4 * hidden, in);
  p.u.resize(4 * hidden, hidden);
  fill_uniform(p.w, glorot(in, hidden), rng);
  fill_uniform(p.u, glorot(hidden, hidden), rng);
  p.b = Vector::Zero(4 * hidden);
  p.b.segment(hidden, hidden).setOnes();
  return p;
}

// Runs one direction over the valid columns of `inputs`. `reverse` walks from
// the last column to the first; the trace stays indexed by column.
void run_lstm(const LstmParams& p, const Matrix& inputs, bool reverse, LstmTrace& tr) {
  const Eigen::Index u = p.u.cols();
  const Eigen::Index n = inputs.cols();
  Matrix pre = p.w * inputs;
  pre.colwise() += p.b;
  tr.gates.resize(4 * u, n);
  tr.cell.resize(u, n);
  tr.tanh_cell.resize(u, n);
  tr.hidden.resize(u, n);
  Vector h = Vector::Zero(u);
  Vector c = Vector::Zero(u);
  Vector z(4 * u);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index t = reverse ? n - 1 - k : k;
    z.noalias() = pre.col(t);
    z.noalias() += p.u * h;
    auto gates = tr.gates.col(t);
    for (Eigen::Index j = 0; j < u; ++j) {
      gates(j) = sigmoid(z(j));
      gates(u + j) = sigmoid(z(u + j));
      gates(2 * u + j) = std::tanh(z(2 * u + j));
      gates(3 * u + j) = sigmoid(z(3 * u + j));
    }
    c = gates.segment(u, u).cwiseProduct(c) + gates.head(u).cwiseProduct(gates.segment(2 * u, u));
    tr.cell.col(t) = c;
    tr.tanh_cell.col(t) = c.array().tanh().matrix();
    h = gates.tail(u).cwiseProduct(tr.tanh_cell.col(t));
    tr.hidden.col(t) = h;
  }
}

// Backpropagation through time for one direction. `d_hidden` is the loss
// gradient w.r.t. each column's hidden state from the layers above.
void lstm_backward(const LstmParams& p, const LstmTrace& tr, const Matrix& inputs,
                   const Matrix& d_hidden, bool reverse, LstmParams& g, Matrix& d_inputs) {
  const Eigen::Index u = p.u.cols();
  const Eigen::Index n = inputs.cols();
  Matrix dz(4 * u, n);
  Matrix h_prev = Matrix::Zero(u, n);
  Vector dh_next = Vector::Zero(u);
  Vector dc_next = Vector::Zero(u);
  Vector dc(u);
  for (Eigen::Index k = n - 1; k >= 0; --k) {
    const Eigen::Index t = reverse ? n - 1 - k : k;
    const Eigen::Index prev = reverse ? t + 1 : t - 1;
    const bool has_prev = k > 0;
    const auto gates = tr.gates.col(t);
    const auto i = gates.head(u).array();
    const auto f = gates.segment(u, u).array();
    const auto gg = gates.segment(2 * u, u).array();
    const auto o = gates.tail(u).array();
    const auto tc = tr.tanh_cell.col(t).array();

    const Vector dh = d_hidden.col(t) + dh_next;
    dc = dc_next.array() + dh.array() * o * (1.0 - tc.square());
    auto col = dz.col(t);
    col.segment(3 * u, u) = (dh.array() * tc * o * (1.0 - o)).matrix();
    col.head(u) = (dc.array() * gg * i * (1.0 - i)).matrix();
    col.segment(2 * u, u) = (dc.array() * i * (1.0 - gg.square())).matrix();
    if (has_prev) {
      col.segment(u, u) = (dc.array() * tr.cell.col(prev).array() * f * (1.0 - f)).matrix();
      h_prev.col(t) = tr.hidden.col(prev);
    } else {
      col.segment(u, u).setZero();
    }
    dc_next = (dc.array() * f).matrix();
    dh_next.noalias() = p.u.transpose() * col;
  }
  g.w.noalias() += dz * inputs.transpose();
  g.u.noalias() += dz * h_prev.transpose();
  g.b += dz.rowwise().sum();
  d_inputs.noalias() += p.w.transpose() * dz;
}

ForwardTrace prepare(const ModelParams& params, std::span<const CodeIndex> tokens,
                     std::span<const std::uint8_t> mask) {
  if (!mask.empty() && mask.size() != tokens.size()) {
    throw Error("forward: mask length " + std::to_string(mask.size()) +
                " does not match sequence length " + std::to_string(tokens.size()));
  }
  ForwardTrace tr;
  tr.kind = params.hyper.kind;
  tr.length = tokens.size();
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (!mask.empty() && mask[t] == 0) continue;
    if (tokens[t] < 0 || tokens[t] >= params.hyper.vocab_size) {
      throw Error("forward: token " + std::to_string(tokens[t]) + " out of vocabulary range");
    }
    tr.positions.push_back(t);
    tr.tokens.push_back(tokens[t]);
  }
  if (tr.positions.empty()) throw Error("forward: every position is masked");
  if (tr.positions.size() > kMaxSequenceLength) {
    throw Error("forward: " + std::to_string(tr.positions.size()) + " valid positions exceed " +
                std::to_string(kMaxSequenceLength));
  }
  const auto n = static_cast<Eigen::Index>(tr.tokens.size());
  tr.inputs.resize(params.hyper.embed_dim, n);
  for (Eigen::Index t = 0; t < n; ++t) {
    tr.inputs.col(t) = params.embedding.row(tr.tokens[static_cast<std::size_t>(t)]).transpose();
  }
  return tr;
}

void head_forward(const ModelParams& params, ForwardTrace& tr) {
  tr.fc_hidden = (params.fc1_w * tr.pooled + params.fc1_b).array().tanh().matrix();
  tr.logit = params.fc2_w.row(0).dot(tr.fc_hidden) + params.fc2_b(0);
  tr.probability = sigmoid(tr.logit);
}

// Head backward; returns d(loss)/d(pooled).
Vector head_backward(const ForwardTrace& tr, int label, const ModelParams& params,
                     ModelParams& grads, double scale) {
  const double d_logit = scale * (tr.probability - static_cast<double>(label));
  grads.fc2_w.row(0) += d_logit * tr.fc_hidden.transpose();
  grads.fc2_b(0) += d_logit;
  const Vector d_pre =
      (d_logit * params.fc2_w.row(0).transpose()).cwiseProduct((1.0 - tr.fc_hidden.array().square()).matrix());
  grads.fc1_w.noalias() += d_pre * tr.pooled.transpose();
  grads.fc1_b += d_pre;
  return params.fc1_w.transpose() * d_pre;
}

void scatter_embedding(const ForwardTrace& tr, const Matrix& d_inputs, ModelParams& grads) {
  for (std::size_t t = 0; t < tr.tokens.size(); ++t) {
    if (tr.tokens[t] == kPadIndex) continue;
    grads.embedding.row(tr.tokens[t]) += d_inputs.col(static_cast<Eigen::Index>(t)).transpose();
  }
}

void check_shapes(const ModelParams& params, const ModelParams& grads) {
  bool ok = params.hyper == grads.hyper;
  if (ok) {
    std::vector<std::pair<Eigen::Index, Eigen::Index>> a, b;
    params.for_each_block([&](std::string_view, const auto& m) { a.emplace_back(m.rows(), m.cols()); });
    grads.for_each_block([&](std::string_view, const auto& m) { b.emplace_back(m.rows(), m.cols()); });
    ok = a == b;
  }
  if (!ok) throw Error("backward: gradient set does not match parameter shapes");
}

}  // namespace

std::string_view kind_name(ModelKind kind) {
  return kind == ModelKind::SelfAttentive ? "sa" : "baseline";
}

ModelKind parse_kind(std::string_view name) {
  if (name == "sa") return ModelKind::SelfAttentive;
  if (name == "baseline") return ModelKind::Baseline;
  throw Error("unknown model kind '" + std::string(name) + "' (expected sa or baseline)");
}

void ModelHyper::validate() const {
  if (vocab_size < 2) throw Error("model: vocab_size must cover PAD and UNK");
  if (embed_dim < 1 || hidden < 1 || fc_hidden < 1) {
    throw Error("model: embed_dim, hidden and fc_hidden must be positive");
  }
  if (kind == ModelKind::SelfAttentive && (attn_dim < 1 || hops < 1)) {
    throw Error("model: attn_dim and hops must be positive");
  }
  if (!(penalty >= 0.0) || !std::isfinite(penalty)) throw Error("model: penalty must be >= 0");
}

ModelParams ModelParams::zeros(const ModelHyper& hyper) {
  hyper.validate();
  ModelParams p;
  p.hyper = hyper;
  const int d = hyper.embed_dim, u = hyper.hidden;
  p.embedding = RowMatrix::Zero(hyper.vocab_size, d);
  p.fwd = LstmParams{Matrix::Zero(4 * u, d), Matrix::Zero(4 * u, u), Vector::Zero(4 * u)};
  if (hyper.kind == ModelKind::SelfAttentive) {
    p.bwd = p.fwd;
    p.attn_w1 = Matrix::Zero(hyper.attn_dim, 2 * u);
    p.attn_w2 = Matrix::Zero(hyper.hops, hyper.attn_dim);
  }
  p.fc1_w = Matrix::Zero(hyper.fc_hidden, hyper.head_input());
  p.fc1_b = Vector::Zero(hyper.fc_hidden);
  p.fc2_w = Matrix::Zero(1, hyper.fc_hidden);
  p.fc2_b = Vector::Zero(1);
  return p;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for_each_block([&](std::string_view, const auto& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

void ModelParams::set_zero() {
  for_each_block([](std::string_view, auto& m) { m.setZero(); });
}

bool ModelParams::all_finite() const {
  bool ok = true;
  for_each_block([&](std::string_view, const auto& m) { ok = ok && m.allFinite(); });
  return ok;
}

ModelParams init_params(const ModelHyper& hyper, std::uint64_t seed,
                        const EmbeddingTable* pretrained) {
  ModelParams p = ModelParams::zeros(hyper);
  Rng rng(seed);
  const int d = hyper.embed_dim, u = hyper.hidden;
  if (pretrained) {
    if (pretrained->vectors.rows() != hyper.vocab_size || pretrained->vectors.cols() != d) {
      throw Error("model: pretrained table is " + std::to_string(pretrained->vectors.rows()) + "x" +
                  std::to_string(pretrained->vectors.cols()) + ", expected " +
                  std::to_string(hyper.vocab_size) + "x" + std::to_string(d));
    }
    p.embedding = pretrained->vectors;
  } else {
    Matrix e(hyper.vocab_size, d);
    fill_uniform(e, 0.5 / d, rng);
    p.embedding = e;
  }
  p.embedding.row(kPadIndex).setZero();
  p.fwd = init_lstm(d, u, rng);
  if (hyper.kind == ModelKind::SelfAttentive) {
    p.bwd = init_lstm(d, u, rng);
    fill_uniform(p.attn_w1, glorot(2 * u, hyper.attn_dim), rng);
    fill_uniform(p.attn_w2, glorot(hyper.attn_dim, hyper.hops), rng);
  }
  fill_uniform(p.fc1_w, glorot(hyper.head_input(), hyper.fc_hidden), rng);
  fill_uniform(p.fc2_w, glorot(hyper.fc_hidden, 1), rng);
  return p;
}

LstmState lstm_cell(const Vector& x, const Vector& h_prev, const Vector& c_prev,
                    const LstmParams& params) {
  const Eigen::Index u = params.u.cols();
  if (params.w.rows() != 4 * u || params.u.rows() != 4 * u || params.b.size() != 4 * u ||
      params.w.cols() != x.size() || h_prev.size() != u || c_prev.size() != u) {
    throw Error("lstm_cell: inconsistent shapes");
  }
  if (!x.allFinite() || !h_prev.allFinite() || !c_prev.allFinite()) {
    throw Error("lstm_cell: non-finite input");
  }
  const Vector z = params.w * x + params.u * h_prev + params.b;
  const Vector i = sigmoid(Vector(z.head(u)));
  const Vector f = sigmoid(Vector(z.segment(u, u)));
  const Vector g = z.segment(2 * u, u).array().tanh().matrix();
  const Vector o = sigmoid(Vector(z.tail(u)));
  LstmState s;
  s.c = f.cwiseProduct(c_prev) + i.cwiseProduct(g);
  s.h = o.cwiseProduct(s.c.array().tanh().matrix());
  return s;
}

ForwardResult forward_sa(const ModelParams& params, std::span<const CodeIndex> tokens,
                         std::span<const std::uint8_t> mask) {
  if (params.hyper.kind != ModelKind::SelfAttentive) {
    throw Error("forward_sa: parameters belong to a baseline model");
  }
  ForwardResult out;
  ForwardTrace& tr = out.trace;
  tr = prepare(params, tokens, mask);
  const Eigen::Index u = params.hyper.hidden;
  const Eigen::Index n = tr.inputs.cols();
  const Eigen::Index r = params.hyper.hops;

  run_lstm(params.fwd, tr.inputs, false, tr.fwd);
  run_lstm(params.bwd, tr.inputs, true, tr.bwd);
  tr.states.resize(2 * u, n);
  tr.states.topRows(u) = tr.fwd.hidden;
  tr.states.bottomRows(u) = tr.bwd.hidden;

  tr.attn_hidden = (params.attn_w1 * tr.states).array().tanh().matrix();
  Matrix logits = params.attn_w2 * tr.attn_hidden;  // r x Tv
  tr.attention.resize(r, n);
  for (Eigen::Index k = 0; k < r; ++k) {
    const double top = logits.row(k).maxCoeff();
    const auto e = (logits.row(k).array() - top).exp();
    tr.attention.row(k) = (e / e.sum()).matrix();
  }

  // Pooled M = A H, flattened hop by hop: column k of H^T A^T is hop k.
  const Matrix pooled = tr.states * tr.attention.transpose();  // 2u x r
  tr.pooled = Eigen::Map<const Vector>(pooled.data(), pooled.size());
  head_forward(params, tr);

  out.probability = tr.probability;
  out.attention.scores = Matrix::Zero(r, static_cast<Eigen::Index>(tr.length));
  for (Eigen::Index t = 0; t < n; ++t) {
    out.attention.scores.col(static_cast<Eigen::Index>(tr.positions[static_cast<std::size_t>(t)])) =
        tr.attention.col(t);
  }
  out.attention.aggregate = out.attention.scores.colwise().mean().transpose();
  return out;
}

ForwardResult forward_baseline(const ModelParams& params, std::span<const CodeIndex> tokens,
                               std::span<const std::uint8_t> mask) {
  if (params.hyper.kind != ModelKind::Baseline) {
    throw Error("forward_baseline: parameters belong to a self-attentive model");
  }
  ForwardResult out;
  ForwardTrace& tr = out.trace;
  tr = prepare(params, tokens, mask);
  run_lstm(params.fwd, tr.inputs, false, tr.fwd);
  tr.pooled = tr.fwd.hidden.col(tr.fwd.hidden.cols() - 1);
  head_forward(params, tr);
  out.probability = tr.probability;
  return out;
}

ForwardResult forward(const ModelParams& params, std::span<const CodeIndex> tokens,
                      std::span<const std::uint8_t> mask) {
  return params.hyper.kind == ModelKind::SelfAttentive ? forward_sa(params, tokens, mask)
                                                       : forward_baseline(params, tokens, mask);
}

double attention_penalty(const Matrix& attention) {
  if (attention.size() == 0) return 0.0;
  const Matrix gram = attention * attention.transpose() -
                      Matrix::Identity(attention.rows(), attention.rows());
  return gram.squaredNorm();
}

double loss(double probability, int label, const Matrix& attention, double penalty_coeff) {
  const double bce = label ? -std::log(probability) : -std::log1p(-probability);
  return bce + (penalty_coeff != 0.0 ? penalty_coeff * attention_penalty(attention) : 0.0);
}

double trace_loss(const ForwardTrace& trace, int label, double penalty_coeff) {
  const double bce = softplus(trace.logit) - static_cast<double>(label) * trace.logit;
  if (trace.kind != ModelKind::SelfAttentive || penalty_coeff == 0.0) return bce;
  return bce + penalty_coeff * attention_penalty(trace.attention);
}

void backward(const ForwardTrace& tr, int label, const ModelParams& params, ModelParams& grads,
              double scale) {
  check_shapes(params, grads);
  if (tr.kind != params.hyper.kind) throw Error("backward: trace and parameters differ in kind");
  if (tr.inputs.rows() != params.hyper.embed_dim) throw Error("backward: trace shape mismatch");

  const Vector d_pooled = head_backward(tr, label, params, grads, scale);
  const Eigen::Index u = params.hyper.hidden;
  const Eigen::Index n = tr.inputs.cols();
  Matrix d_inputs = Matrix::Zero(tr.inputs.rows(), n);

  if (tr.kind == ModelKind::Baseline) {
    Matrix d_hidden = Matrix::Zero(u, n);
    d_hidden.col(n - 1) = d_pooled;
    lstm_backward(params.fwd, tr.fwd, tr.inputs, d_hidden, false, grads.fwd, d_inputs);
    scatter_embedding(tr, d_inputs, grads);
    return;
  }

  const Eigen::Index r = params.hyper.hops;
  const Eigen::Map<const Matrix> d_pool(d_pooled.data(), 2 * u, r);  // d(H^T A^T)
  Matrix d_states = d_pool * tr.attention;                          // 2u x Tv
  Matrix d_attention = d_pool.transpose() * tr.states;              // r x Tv
  if (params.hyper.penalty != 0.0) {
    const Matrix gram = tr.attention * tr.attention.transpose() - Matrix::Identity(r, r);
    d_attention += (scale * params.hyper.penalty * 4.0) * gram * tr.attention;
  }
  // Row-wise softmax Jacobian.
  Matrix d_logits(r, n);
  for (Eigen::Index k = 0; k < r; ++k) {
    const double dot = d_attention.row(k).dot(tr.attention.row(k));
    d_logits.row(k) = tr.attention.row(k).cwiseProduct(
        (d_attention.row(k).array() - dot).matrix());
  }
  grads.attn_w2.noalias() += d_logits * tr.attn_hidden.transpose();
  const Matrix d_pre = (params.attn_w2.transpose() * d_logits)
                           .cwiseProduct((1.0 - tr.attn_hidden.array().square()).matrix());
  grads.attn_w1.noalias() += d_pre * tr.states.transpose();
  d_states.noalias() += params.attn_w1.transpose() * d_pre;

  lstm_backward(params.fwd, tr.fwd, tr.inputs, d_states.topRows(u), false, grads.fwd, d_inputs);
  lstm_backward(params.bwd, tr.bwd, tr.inputs, d_states.bottomRows(u), true, grads.bwd, d_inputs);
  scatter_embedding(tr, d_inputs, grads);
}

SampleAttention attention_of(const ModelParams& params, const Vocabulary& vocab,
                             const CohortSample& sample) {
  if (sample.codes.size() != sample.record_dates.size()) {
    throw Error("attention_of: codes and dates differ in length");
  }
  const auto tokens = vocab.encode(sample.codes);
  auto result = forward_sa(params, tokens);
  SampleAttention out;
  out.individual_id = sample.individual_id;
  out.codes = sample.codes;
  out.dates = sample.record_dates;
  out.map = std::move(result.attention);
  out.probability = result.probability;
  return out;
}

}  // namespace claimsrisk
