#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "gkmvlp/harness.hpp"
#include "gkmvlp/ops.hpp"
#include "gkmvlp/optim.hpp"
#include "gkmvlp/synthgen.hpp"

namespace {

using namespace gkmvlp;

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> dist;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

// Forward and backward of one attention call: queries x keys, width 128, 4 heads.
void BM_Attention(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const auto n = state.range(0);
  const auto m = state.range(1);
  ParameterStore store;
  Parameter& q = store.add("q", random_matrix(n, 128, rng));
  Parameter& k = store.add("k", random_matrix(m, 128, rng));
  Parameter& v = store.add("v", random_matrix(m, 128, rng));
  for (auto _ : state) {
    Graph g;
    Var out = ops::attention(g.parameter(q), g.parameter(k), g.parameter(v), 4);
    g.backward(ops::sum(out));
    benchmark::DoNotOptimize(q.grad.data());
  }
  state.SetItemsProcessed(state.iterations() * n * m);
}
BENCHMARK(BM_Attention)->Args({29, 64})->Args({65, 29})->Args({64, 64})->Unit(benchmark::kMicrosecond);

void BM_GenerateDataset(benchmark::State& state) {
  SynthConfig s;
  s.num_samples = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(generate_dataset(s));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GenerateDataset)->Arg(64)->Unit(benchmark::kMillisecond);

// One optimizer step of pre-training at the default width, batch 8.
void BM_PretrainStep(benchmark::State& state) {
  SynthConfig s;
  s.num_samples = 8;
  s.max_entities_per_sample = 5;
  const auto records = generate_dataset(s);
  RunConfig cfg;
  cfg.ablation.grounding = static_cast<Grounding>(state.range(0));
  Model model(cfg.encoder, cfg.fusion, build_vocabulary(records), 0);
  const auto samples = prepare_samples(records, model);
  std::vector<const PreparedSample*> batch;
  for (const PreparedSample& p : samples) batch.push_back(&p);
  const std::vector<int> negatives{1, 2, 3, 4, 5, 6, 7, 0};
  const EntityEmbeddings entities = encode_entities(model.text(), model.vocab());
  AdamW opt(cfg.optimizer);
  const auto params = model.params().all();
  for (auto _ : state) {
    model.params().zero_grad();
    Graph g;
    g.backward(pretrain_forward(g, model, batch, negatives, cfg, &entities).total);
    opt.step(params, 1e-4);
  }
  state.SetLabel(std::string(to_string(cfg.ablation.grounding)));
}
BENCHMARK(BM_PretrainStep)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);

void BM_GreedyDecode(benchmark::State& state) {
  SynthConfig s;
  s.num_samples = 4;
  const auto records = generate_dataset(s);
  RunConfig cfg;
  Model model(cfg.encoder, cfg.fusion, build_vocabulary(records), 0);
  const auto samples = prepare_samples(records, model);
  for (auto _ : state) {
    benchmark::DoNotOptimize(generate_reports(model, Grounding::kCrossAttention, samples, 48));
  }
  state.SetItemsProcessed(state.iterations() * 4);
}
BENCHMARK(BM_GreedyDecode)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
