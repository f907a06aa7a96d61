#include <benchmark/benchmark.h>

#include "adr/attack.hpp"
#include "adr/losses.hpp"
#include "adr/model.hpp"
#include "adr/ops.hpp"
#include "adr/rng.hpp"

namespace {

adr::Tensor random_tensor(adr::Shape shape, std::uint64_t seed) {
  adr::DetRng rng(seed);
  std::vector<double> d(adr::shape_numel(shape));
  for (auto& v : d) v = rng.uniform(-1.0, 1.0);
  return adr::Tensor(std::move(shape), std::move(d));
}

adr::SplitModel toy_model(int M = 4) {
  adr::ArchitectureConfig cfg;
  cfg.preset = "mlp-toy";
  cfg.input_shape = {2};
  cfg.num_classes = M;
  return adr::build_model(cfg, 1);
}

void Conv2dForward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const adr::Tensor x = random_tensor({n, 1, 28, 28}, 1);
  const adr::Tensor w = random_tensor({32, 1, 3, 3}, 2);
  for (auto _ : state) {
    auto y = adr::conv2d(x, w);
    benchmark::DoNotOptimize(y);
  }
  state.SetComplexityN(n);
}
BENCHMARK(Conv2dForward)->RangeMultiplier(2)->Range(1, 16)->Complexity();

void Conv2dBackward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const adr::Tensor x = random_tensor({n, 1, 12, 12}, 1);
  for (auto _ : state) {
    adr::Tape tape;
    const adr::Tensor w = tape.leaf({16, 1, 3, 3},
                                    random_tensor({16, 1, 3, 3}, 2).data());
    tape.backward(adr::sum_all(adr::conv2d(x, w)));
    benchmark::DoNotOptimize(tape.grad(w));
  }
  state.SetComplexityN(n);
}
BENCHMARK(Conv2dBackward)->RangeMultiplier(2)->Range(1, 8)->Complexity();

void PgdAttack(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  const adr::SplitModel model = toy_model();
  adr::DetRng rng(3);
  std::vector<double> xd(static_cast<std::size_t>(batch) * 2);
  for (auto& v : xd) v = rng.uniform01();
  const adr::Tensor x({batch, 2}, xd);
  std::vector<int> y(static_cast<std::size_t>(batch));
  for (auto& v : y) v = static_cast<int>(rng.uniform_index(4));
  adr::AttackConfig cfg;
  cfg.epsilon = 0.3;
  cfg.eta = 0.01;
  cfg.k = 10;
  for (auto _ : state) {
    auto batch_out = adr::iterative_attack(model, x, y, cfg);
    benchmark::DoNotOptimize(batch_out);
  }
  state.SetComplexityN(batch);
}
BENCHMARK(PgdAttack)->RangeMultiplier(2)->Range(8, 128)->Complexity();

void GlobalCompactness(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  const adr::Tensor reps = random_tensor({batch, 32}, 5);
  adr::DetRng rng(6);
  std::vector<int> labels(static_cast<std::size_t>(batch));
  for (auto& v : labels) v = static_cast<int>(rng.uniform_index(4));
  for (auto _ : state) {
    adr::Tape tape;
    const adr::Tensor leaf = tape.leaf(reps.shape(), reps.data());
    tape.backward(adr::global_compactness_term(leaf, labels, 0.99,
                                               adr::PNorm::two));
    benchmark::DoNotOptimize(tape.grad(leaf));
  }
  state.SetComplexityN(batch);
}
BENCHMARK(GlobalCompactness)->RangeMultiplier(2)->Range(16, 128)->Complexity();

void TotalLossStep(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  const adr::SplitModel model = toy_model();
  adr::DetRng rng(7);
  std::vector<double> xd(static_cast<std::size_t>(batch) * 2);
  for (auto& v : xd) v = rng.uniform01();
  const adr::Tensor x({batch, 2}, xd);
  std::vector<int> y(static_cast<std::size_t>(batch));
  for (auto& v : y) v = static_cast<int>(rng.uniform_index(4));
  adr::AttackConfig adv;
  adv.epsilon = 0.3;
  adv.eta = 0.01;
  adv.k = 10;
  adr::LossWeights w;
  w.lambda_lc = 1.0;
  w.lambda_gb = 1.0;
  w.lambda_smt = 1.0;
  for (auto _ : state) {
    auto r = adr::total_loss(model, x, y, adv, w);
    benchmark::DoNotOptimize(r);
  }
  state.SetComplexityN(batch);
}
BENCHMARK(TotalLossStep)->RangeMultiplier(2)->Range(8, 64)->Complexity();

}  // namespace

BENCHMARK_MAIN();
