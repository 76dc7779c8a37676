#include <benchmark/benchmark.h>

#include "mergenet/data.hpp"
#include "mergenet/lpka.hpp"
#include "mergenet/ops.hpp"
#include "mergenet/param_codec.hpp"
#include "mergenet/transfer.hpp"
#include "mergenet/zoo.hpp"

using namespace mergenet;

namespace {

Tensor random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t = Tensor::zeros({rows, cols});
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = Scalar(rng.normal());
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = random_matrix(n, n, rng), b = random_matrix(n, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(16, 256)->Complexity();

void BM_LpkaForward(benchmark::State& state) {
  const auto cols = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const LpkaAdapter adapter(LpkaDims{8, cols, 2 * cols, 16}, LpkaVariant::full, rng);
  const Tensor at = random_matrix(8, cols, rng), as = random_matrix(8, 2 * cols, rng);
  for (auto _ : state) benchmark::DoNotOptimize(lpka_forward(adapter, at, as));
}
BENCHMARK(BM_LpkaForward)->Arg(16)->Arg(64)->Arg(128);

void BM_TruncatedSvd(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  const Tensor w = random_matrix(n, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(reencode_truncated_svd(w, 8));
}
BENCHMARK(BM_TruncatedSvd)->Arg(16)->Arg(64)->Arg(128);

void BM_SelfLearningStep(benchmark::State& state) {
  SyntheticTask task;
  task.train_size = 512;
  auto data = std::make_shared<const Dataset>(gen_synthetic(task).first);
  ModelSpec spec;
  spec.kind = static_cast<ModelKind>(state.range(0));
  spec.input_dim = task.input_dim;
  spec.classes = task.classes;
  ZooModel model = build_model(spec);
  BatchStream stream(data, 64, 4);
  for (auto _ : state) benchmark::DoNotOptimize(self_learning_step(model, stream.next(), Scalar(0.01)));
}
BENCHMARK(BM_SelfLearningStep)
    ->Arg(static_cast<int>(ModelKind::mlp_small))
    ->Arg(static_cast<int>(ModelKind::mlp_large));

}  // namespace

BENCHMARK_MAIN();
