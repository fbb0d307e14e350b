#include <benchmark/benchmark.h>

#include "attnlab/fusion.hpp"
#include "attnlab/graph_attention.hpp"
#include "attnlab/model.hpp"
#include "attnlab/ops.hpp"
#include "attnlab/rng.hpp"
#include "attnlab/synthetic.hpp"
#include "attnlab/transformer.hpp"

using namespace attnlab;

namespace {

void bm_matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  SeededRng rng(1);
  const Matrix a = rng.normal_matrix(n, n, 1.0), b = rng.normal_matrix(n, n, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(bm_matmul)->Arg(16)->Arg(64)->Arg(300);

void bm_matmul_nt(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  SeededRng rng(2);
  const Matrix a = rng.normal_matrix(n, n, 1.0), b = rng.normal_matrix(n, n, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(matmul_nt(a, b));
}
BENCHMARK(bm_matmul_nt)->Arg(64)->Arg(300);

void bm_graph_attention_forward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  SeededRng rng(3);
  const auto p = GraphAttentionParams::init(600, 300, rng);
  const Matrix h = rng.normal_matrix(n, 600, 1.0);
  Matrix adj = Matrix::identity(n);
  for (std::size_t i = 0; i + 1 < n; ++i) adj(i, i + 1) = adj(i + 1, i) = 1.0;
  for (auto _ : state) benchmark::DoNotOptimize(graph_attention_forward(h, adj, p));
}
BENCHMARK(bm_graph_attention_forward)->Arg(8)->Arg(32);

void bm_graph_attention_backward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  SeededRng rng(4);
  const auto p = GraphAttentionParams::init(600, 300, rng);
  const auto r = self_attention_forward(rng.normal_matrix(n, 600, 1.0), p);
  const Matrix d = Matrix::ones(n, 300);
  for (auto _ : state) benchmark::DoNotOptimize(graph_attention_backward(r.cache, d));
}
BENCHMARK(bm_graph_attention_backward)->Arg(8)->Arg(32);

void bm_transformer_forward(benchmark::State& state) {
  const auto L = static_cast<std::size_t>(state.range(0));
  SeededRng rng(5);
  const auto p = TransformerParams::init(TransformerConfig{}, rng);
  const Matrix x = rng.normal_matrix(L, 300, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(transformer_forward(x, p));
}
BENCHMARK(bm_transformer_forward)->Arg(16)->Arg(64);

void bm_transformer_backward(benchmark::State& state) {
  const auto L = static_cast<std::size_t>(state.range(0));
  SeededRng rng(6);
  const auto p = TransformerParams::init(TransformerConfig{}, rng);
  const auto r = transformer_forward(rng.normal_matrix(L, 300, 1.0), p);
  const Matrix d = Matrix::ones(L, 300);
  for (auto _ : state) benchmark::DoNotOptimize(transformer_backward(r.cache, d));
}
BENCHMARK(bm_transformer_backward)->Arg(16);

void bm_fusion_block(benchmark::State& state) {
  SeededRng rng(7);
  const std::size_t L = 16;
  const auto a = SpanAssignment::from_spans(L, {{0, 2}, {3, 4}, {5, 7}, {8, 9}, {10, 12}, {13, 15}});
  Matrix adj = Matrix::identity(6);
  for (std::size_t i = 0; i + 1 < 6; i += 2) adj(i, i + 1) = adj(i + 1, i) = 1.0;
  const auto p = FusionParams::init(300, 300, 2, rng);
  const Matrix c = rng.normal_matrix(L, 300, 1.0);
  for (auto _ : state) {
    auto r = fusion_block_forward(c, adj, a, p, AttentionMode::graph);
    benchmark::DoNotOptimize(fusion_block_backward(r.cache, Matrix::ones(L, 300)));
  }
}
BENCHMARK(bm_fusion_block);

void bm_model_step(benchmark::State& state) {
  const auto variant = static_cast<Variant>(state.range(0));
  SyntheticTaskConfig task;
  const auto data = generate_synthetic(task, "train", 24);
  ExperimentConfig cfg;
  cfg.variant = variant;
  Model model;
  model.config = cfg;
  model.vocab = Vocabulary::build(data);
  SeededRng rng(8);
  model.params = ModelParams::init(cfg, model.vocab.size(), rng);
  std::vector<EncodedExample> enc;
  for (const auto& ex : data) enc.push_back(encode_example(ex, model.vocab, cfg));
  for (auto _ : state) {
    ModelParams grads = ModelParams::zeros_like(model.params);
    for (const auto& ex : enc) {
      const auto pass = model_forward(model, ex);
      model_backward(model, ex, pass, grads);
    }
    benchmark::DoNotOptimize(grads);
  }
  state.SetLabel(to_string(variant) + ", batch of 24");
}
BENCHMARK(bm_model_step)
    ->Arg(static_cast<int>(Variant::graph_attention))
    ->Arg(static_cast<int>(Variant::transformer))
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
