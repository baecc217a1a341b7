#include "claimsrisk/codevec.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

namespace claimsrisk {

namespace {

double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

double log_sigmoid(double x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

}  // namespace

Vocabulary::Vocabulary() {
  add(std::string(kPadToken), 0);
  add(std::string(kUnkToken), 0);
}

void Vocabulary::add(std::string code, std::uint64_t count) {
  index_.emplace(code, static_cast<CodeIndex>(codes_.size()));
  codes_.push_back(std::move(code));
  counts_.push_back(count);
}

CodeIndex Vocabulary::index_of(std::string_view code) const {
  const auto it = index_.find(std::string(code));
  if (it == index_.end() || it->second == kPadIndex) return kUnkIndex;
  return it->second;
}

bool Vocabulary::contains(std::string_view code) const {
  const auto it = index_.find(std::string(code));
  return it != index_.end() && it->second > kUnkIndex;
}

std::vector<CodeIndex> Vocabulary::encode(std::span<const std::string> codes) const {
  std::vector<CodeIndex> out;
  out.reserve(codes.size());
  for (const auto& c : codes) out.push_back(index_of(c));
  return out;
}

void Vocabulary::write_csv(std::ostream& out) const {
  out << "code,count\n";
  for (std::size_t i = 0; i < codes_.size(); ++i) out << codes_[i] << ',' << counts_[i] << '\n';
}

Vocabulary Vocabulary::read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != "code,count") {
    throw Error("vocabulary: missing `code,count` header");
  }
  Vocabulary vocab;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto fields = split(trim(line), ',');
    if (fields.size() != 2) throw Error("vocabulary: malformed line '" + line + "'");
    const std::uint64_t count = std::stoull(std::string(fields[1]));
    if (row == 0 || row == 1) {
      if (fields[0] != (row == 0 ? kPadToken : kUnkToken)) {
        throw Error("vocabulary: reserved rows must be <PAD> and <UNK>");
      }
      vocab.counts_[row] = count;
    } else {
      vocab.add(std::string(fields[0]), count);
    }
    ++row;
  }
  if (row < 2) throw Error("vocabulary: reserved rows missing");
  return vocab;
}

Vocabulary build_vocab(const std::vector<std::vector<std::string>>& sequences,
                       std::uint64_t min_count) {
  if (min_count == 0) throw Error("vocabulary: min_count must be at least 1");
  std::map<std::string, std::uint64_t> counts;
  for (const auto& seq : sequences) {
    for (const auto& code : seq) ++counts[code];
  }
  if (counts.empty()) throw Error("vocabulary: empty corpus");

  std::vector<std::pair<std::string, std::uint64_t>> kept;
  std::uint64_t unknown = 0;
  for (auto& [code, n] : counts) {
    if (n >= min_count) {
      kept.emplace_back(code, n);
    } else {
      unknown += n;
    }
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary vocab;
  vocab.min_count_ = min_count;
  vocab.counts_[kUnkIndex] = unknown;
  for (auto& [code, n] : kept) vocab.add(std::move(code), n);
  return vocab;
}

void EmbeddingTable::write(std::ostream& out, const Vocabulary& vocab) const {
  if (rows() != vocab.size()) throw Error("embedding: table rows do not match vocabulary");
  out << rows() << ' ' << dim() << '\n';
  char buf[40];
  for (std::size_t r = 0; r < rows(); ++r) {
    out << vocab.code_of(static_cast<CodeIndex>(r));
    for (std::size_t c = 0; c < dim(); ++c) {
      std::snprintf(buf, sizeof buf, " %.17g", vectors(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
      out << buf;
    }
    out << '\n';
  }
}

EmbeddingTable EmbeddingTable::read(std::istream& in, const Vocabulary& vocab) {
  std::size_t v = 0, d = 0;
  if (!(in >> v >> d) || d == 0) throw Error("embedding: malformed `V d` header");
  EmbeddingTable table;
  table.vectors = RowMatrix::Zero(static_cast<Eigen::Index>(vocab.size()), static_cast<Eigen::Index>(d));
  std::string code;
  for (std::size_t r = 0; r < v; ++r) {
    if (!(in >> code)) throw Error("embedding: expected " + std::to_string(v) + " rows");
    Vector row(static_cast<Eigen::Index>(d));
    for (std::size_t c = 0; c < d; ++c) {
      if (!(in >> row[static_cast<Eigen::Index>(c)])) throw Error("embedding: short row for " + code);
    }
    CodeIndex idx = -1;
    if (code == kPadToken) {
      idx = kPadIndex;
    } else if (code == kUnkToken) {
      idx = kUnkIndex;
    } else if (vocab.contains(code)) {
      idx = vocab.index_of(code);
    }
    if (idx >= 0) table.vectors.row(idx) = row.transpose();
  }
  table.vectors.row(kPadIndex).setZero();
  return table;
}

std::vector<std::pair<CodeIndex, CodeIndex>> skipgram_pairs(std::span<const CodeIndex> sequence,
                                                            int window) {
  if (window < 1) throw Error("skipgram: window must be at least 1");
  std::vector<std::pair<CodeIndex, CodeIndex>> pairs;
  const auto n = static_cast<std::ptrdiff_t>(sequence.size());
  for (std::ptrdiff_t t = 0; t < n; ++t) {
    for (std::ptrdiff_t j = -window; j <= window; ++j) {
      const auto c = t + j;
      if (j == 0 || c < 0 || c >= n) continue;
      pairs.emplace_back(sequence[static_cast<std::size_t>(t)], sequence[static_cast<std::size_t>(c)]);
    }
  }
  return pairs;
}

SgnsGradient sgns_loss_and_gradient(const Vector& center, const Vector& context,
                                    const std::vector<Vector>& negatives) {
  SgnsGradient g;
  const double pos = context.dot(center);
  g.loss = -log_sigmoid(pos);
  const double g_pos = sigmoid(pos) - 1.0;
  g.d_center = g_pos * context;
  g.d_context = g_pos * center;
  for (const auto& neg : negatives) {
    const double s = neg.dot(center);
    g.loss -= log_sigmoid(-s);
    const double g_neg = sigmoid(s);
    g.d_center += g_neg * neg;
    g.d_negatives.push_back(g_neg * center);
  }
  return g;
}

EmbeddingTable initial_embedding(std::size_t vocab_size, int dim, std::uint64_t seed) {
  if (dim < 2) throw Error("embedding: dimension must be at least 2");
  Rng rng(seed);
  const double half = 0.5 / dim;
  std::uniform_real_distribution<double> init(-half, half);
  EmbeddingTable table;
  table.vectors.resize(static_cast<Eigen::Index>(vocab_size), dim);
  for (Eigen::Index r = 0; r < table.vectors.rows(); ++r) {
    for (Eigen::Index c = 0; c < dim; ++c) table.vectors(r, c) = init(rng);
  }
  table.vectors.row(kPadIndex).setZero();
  return table;
}

SkipgramResult train_skipgram(const std::vector<std::vector<CodeIndex>>& sequences,
                              const Vocabulary& vocab, const SkipgramConfig& config) {
  if (config.window < 1 || config.negatives < 0 || config.epochs < 0) {
    throw Error("skipgram: window >= 1, negatives >= 0 and epochs >= 0 required");
  }
  const auto V = vocab.size();
  const int d = config.dim;
  SkipgramResult result;
  result.table = initial_embedding(V, d, config.seed);
  RowMatrix& center = result.table.vectors;
  RowMatrix context = RowMatrix::Zero(static_cast<Eigen::Index>(V), d);

  std::vector<double> weights(V, 0.0);
  for (std::size_t i = 1; i < V; ++i) {
    weights[i] = std::pow(static_cast<double>(vocab.count_of(static_cast<CodeIndex>(i))),
                          config.unigram_power);
  }
  if (std::accumulate(weights.begin(), weights.end(), 0.0) <= 0.0) weights[kUnkIndex] = 1.0;
  std::discrete_distribution<CodeIndex> negative_draw(weights.begin(), weights.end());
  Rng rng(mix_seed(config.seed, 1));

  std::uint64_t pairs_per_epoch = 0;
  for (const auto& seq : sequences) {
    pairs_per_epoch += skipgram_pairs(seq, config.window).size();
  }
  const double total = static_cast<double>(pairs_per_epoch) * config.epochs;
  const double lr_end = std::min(config.min_learning_rate, config.learning_rate);
  double processed = 0.0;

  Vector grad_center(d);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double loss_sum = 0.0;
    std::uint64_t loss_pairs = 0;
    for (const auto& seq : sequences) {
      for (const auto& [c, ctx] : skipgram_pairs(seq, config.window)) {
        const double lr = config.learning_rate + (lr_end - config.learning_rate) * (processed / total);
        processed += 1.0;
        if (c == kPadIndex || ctx == kPadIndex) continue;
        auto v = center.row(c);
        grad_center.setZero();

        const auto step = [&](CodeIndex target, double label) {
          auto u = context.row(target);
          const double s = u.dot(v);
          const double g = sigmoid(s) - label;
          loss_sum -= label > 0 ? log_sigmoid(s) : log_sigmoid(-s);
          grad_center += g * u.transpose();
          u -= lr * g * v;
        };
        step(ctx, 1.0);
        for (int k = 0; k < config.negatives; ++k) {
          const CodeIndex neg = negative_draw(rng);
          if (neg == ctx) continue;
          step(neg, 0.0);
        }
        v -= lr * grad_center.transpose();
        ++loss_pairs;
      }
    }
    const double online = loss_pairs ? loss_sum / static_cast<double>(loss_pairs) : 0.0;

    Rng eval_rng(mix_seed(config.seed, 2));
    double eval_sum = 0.0;
    for (const auto& seq : sequences) {
      for (const auto& [c, ctx] : skipgram_pairs(seq, config.window)) {
        if (c == kPadIndex || ctx == kPadIndex) continue;
        const auto v = center.row(c);
        eval_sum -= log_sigmoid(context.row(ctx).dot(v));
        for (int k = 0; k < config.negatives; ++k) {
          const CodeIndex neg = negative_draw(eval_rng);
          if (neg != ctx) eval_sum -= log_sigmoid(-context.row(neg).dot(v));
        }
      }
    }
    const double mean = loss_pairs ? eval_sum / static_cast<double>(loss_pairs) : 0.0;
    if (!std::isfinite(mean) || !std::isfinite(online)) {
      throw Error("skipgram: non-finite loss in epoch " + std::to_string(epoch + 1) +
                  " (learning rate " + std::to_string(config.learning_rate) + ")");
    }
    result.epoch_loss.push_back(mean);
    result.online_loss.push_back(online);
  }
  center.row(kPadIndex).setZero();
  return result;
}

double cosine(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

std::vector<std::pair<std::string, double>> nearest(const EmbeddingTable& table,
                                                    const Vocabulary& vocab,
                                                    std::string_view code, std::size_t k) {
  if (!vocab.contains(code)) throw Error("nearest: unknown code '" + std::string(code) + "'");
  const CodeIndex q = vocab.index_of(code);
  const Vector query = table.vectors.row(q).transpose();
  std::vector<std::pair<double, CodeIndex>> scored;
  for (CodeIndex i = kUnkIndex + 1; i < static_cast<CodeIndex>(table.rows()); ++i) {
    if (i == q) continue;
    scored.emplace_back(cosine(query, table.vectors.row(i).transpose()), i);
  }
  k = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(),
                    [](const auto& a, const auto& b) {
                      return a.first != b.first ? a.first > b.first : a.second < b.second;
                    });
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t i = 0; i < k; ++i) out.emplace_back(vocab.code_of(scored[i].second), scored[i].first);
  return out;
}

}  // namespace claimsrisk
