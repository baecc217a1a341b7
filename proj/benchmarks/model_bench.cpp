#include <benchmark/benchmark.h>

#include "claimsrisk/codevec.hpp"
#include "claimsrisk/seqmodel.hpp"

using namespace claimsrisk;

namespace {

ModelHyper hyper(ModelKind kind, int width) {
  ModelHyper h;
  h.kind = kind;
  h.vocab_size = 400;
  h.embed_dim = h.hidden = h.attn_dim = h.fc_hidden = width;
  return h;
}

std::vector<CodeIndex> sequence(std::size_t n) {
  std::vector<CodeIndex> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<CodeIndex>(2 + (i * 37) % 398);
  return t;
}

void BM_Forward(benchmark::State& state) {
  const auto kind = state.range(0) ? ModelKind::SelfAttentive : ModelKind::Baseline;
  const auto params = init_params(hyper(kind, static_cast<int>(state.range(1))), 1);
  const auto tokens = sequence(static_cast<std::size_t>(state.range(2)));
  for (auto _ : state) benchmark::DoNotOptimize(forward(params, tokens).probability);
  state.SetLabel(std::string(kind_name(kind)));
}

void BM_ForwardBackward(benchmark::State& state) {
  const auto kind = state.range(0) ? ModelKind::SelfAttentive : ModelKind::Baseline;
  const auto params = init_params(hyper(kind, static_cast<int>(state.range(1))), 1);
  const auto tokens = sequence(static_cast<std::size_t>(state.range(2)));
  auto grad = ModelParams::zeros(params.hyper);
  for (auto _ : state) {
    const auto r = forward(params, tokens);
    backward(r.trace, 1, params, grad);
    benchmark::ClobberMemory();
  }
  state.SetLabel(std::string(kind_name(kind)));
}

void BM_SkipgramEpoch(benchmark::State& state) {
  std::vector<std::vector<std::string>> corpus(200);
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    for (std::size_t i = 0; i < 300; ++i) corpus[s].push_back("c" + std::to_string((s * 7 + i * 13) % 300));
  }
  const auto vocab = build_vocab(corpus, 1);
  std::vector<std::vector<CodeIndex>> encoded;
  for (const auto& s : corpus) encoded.push_back(vocab.encode(s));
  SkipgramConfig config;
  config.dim = static_cast<int>(state.range(0));
  config.epochs = 1;
  for (auto _ : state) benchmark::DoNotOptimize(train_skipgram(encoded, vocab, config).epoch_loss);
  state.SetItemsProcessed(state.iterations() * 200 * 300);
}

}  // namespace

BENCHMARK(BM_Forward)->ArgsProduct({{0, 1}, {16, 64}, {100, 500}})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ForwardBackward)->ArgsProduct({{0, 1}, {16, 64}, {100, 500}})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_SkipgramEpoch)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
