#include <benchmark/benchmark.h>

#include "memcirc/circuit.hpp"
#include "memcirc/corpus.hpp"
#include "memcirc/trainer.hpp"

using namespace memcirc;

namespace {

ModelConfig bench_config(int d_model) {
  ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 8;
  c.d_model = d_model;
  c.d_head = d_model / 8;
  c.d_mlp = 4 * d_model;
  c.vocab_size = Vocabulary::standard().size();
  c.seed = 3;
  return c;
}

std::vector<ContrastivePair> bench_pairs(int n) {
  const Corpus corpus = generate_corpus(Domain::wiki, 2 * n, 5);
  std::vector<ContrastivePair> pairs;
  for (int i = 0; i < n; ++i) {
    ContrastivePair p;
    p.clean.assign(corpus.samples[2 * i].tokens.begin(), corpus.samples[2 * i].tokens.begin() + 40);
    p.corrupt.assign(corpus.samples[2 * i + 1].tokens.begin(),
                     corpus.samples[2 * i + 1].tokens.begin() + 40);
    p.t_mem = corpus.samples[2 * i].tokens[40];
    p.t_pred = corpus.samples[2 * i + 1].tokens[40];
    pairs.push_back(std::move(p));
  }
  return pairs;
}

void BM_EdgeEnumeration(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(EdgeGraph::enumerate(n, n).num_edges());
}
BENCHMARK(BM_EdgeEnumeration)->Arg(2)->Arg(12);

void BM_ForwardLogits(benchmark::State& state) {
  const Model model(bench_config(static_cast<int>(state.range(0))));
  const auto tokens = generate_corpus(Domain::wiki, 1, 1).samples[0].tokens;
  for (auto _ : state) benchmark::DoNotOptimize(forward_logits(model, tokens));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(tokens.size()));
}
BENCHMARK(BM_ForwardLogits)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_TrainBatch(benchmark::State& state) {
  const Model model(bench_config(static_cast<int>(state.range(0))));
  const Corpus corpus = generate_corpus(Domain::wiki, 8, 2);
  std::vector<std::vector<int>> batch;
  std::vector<int> targets;
  for (const auto& s : corpus.samples) {
    batch.emplace_back(s.tokens.begin(), s.tokens.end() - 1);
    targets.insert(targets.end(), s.tokens.begin() + 1, s.tokens.end());
  }
  for (auto _ : state) {
    Tape tape;
    BatchForward f = forward_batch(tape, model, batch);
    tape.backward(tape.cross_entropy(f.logits, targets));
    benchmark::DoNotOptimize(tape.grad(f.params[0]));
  }
}
BENCHMARK(BM_TrainBatch)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_GreedyGeneration(benchmark::State& state) {
  const Model model(bench_config(128));
  const auto tokens = generate_corpus(Domain::wiki, 1, 1).samples[0].tokens;
  const std::vector<int> context(tokens.begin(), tokens.begin() + 50);
  for (auto _ : state) benchmark::DoNotOptimize(generate_greedy(model, context, 50));
}
BENCHMARK(BM_GreedyGeneration)->Unit(benchmark::kMillisecond);

void BM_EapIgPerPair(benchmark::State& state) {
  const Model model(bench_config(128));
  const auto pairs = bench_pairs(1);
  AttributionConfig cfg;
  cfg.ig_steps = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(eap_ig(model, pairs, cfg));
}
BENCHMARK(BM_EapIgPerPair)->Arg(5)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_CircuitProbe(benchmark::State& state) {
  const Model model(bench_config(128));
  const auto pairs = bench_pairs(static_cast<int>(state.range(0)));
  const CircuitEvaluator ev(model, pairs);
  std::vector<std::uint32_t> edges{0, 5, 17, 40, 99, 200, 309};
  for (auto _ : state) {
    benchmark::DoNotOptimize(ev.faithfulness(edges, Metric::logit_diff, Direction::noising));
  }
}
BENCHMARK(BM_CircuitProbe)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_Bleu(benchmark::State& state) {
  const Corpus corpus = generate_corpus(Domain::code, 2, 9);
  const auto& a = corpus.samples[0].tokens;
  const auto& b = corpus.samples[1].tokens;
  for (auto _ : state) benchmark::DoNotOptimize(bleu(a, b));
}
BENCHMARK(BM_Bleu);

}  // namespace

BENCHMARK_MAIN();
