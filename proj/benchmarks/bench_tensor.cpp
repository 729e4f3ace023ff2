#include <benchmark/benchmark.h>

#include "nl2code/ops.hpp"
#include "nl2code/rng.hpp"
#include "nl2code/tensor.hpp"

namespace {

using namespace nl2code;

Tensor random_matrix(int rows, int cols, Rng& rng, bool requires_grad = false) {
  std::vector<double> values(static_cast<std::size_t>(rows) * cols);
  for (double& v : values) v = rng.uniform(-1.0, 1.0);
  Tensor t = Tensor::from({rows, cols}, std::move(values));
  t.set_requires_grad(requires_grad);
  return t;
}

void BM_matmul(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(1);
  const Tensor a = random_matrix(n, n, rng);
  const Tensor b = random_matrix(n, n, rng);
  NoGradGuard guard;
  for (auto _ : state) {
    Tensor c = matmul(a, b);
    benchmark::DoNotOptimize(c.values().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long long>(n) * n * n);
}
BENCHMARK(BM_matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_softmax_rows(benchmark::State& state) {
  const int rows = static_cast<int>(state.range(0));
  Rng rng(2);
  const Tensor x = random_matrix(rows, 512, rng);
  NoGradGuard guard;
  for (auto _ : state) {
    Tensor s = softmax(x);
    benchmark::DoNotOptimize(s.values().data());
  }
}
BENCHMARK(BM_softmax_rows)->Arg(16)->Arg(128);

void BM_layer_norm(benchmark::State& state) {
  Rng rng(3);
  const Tensor x = random_matrix(128, 128, rng);
  const Tensor gamma = random_matrix(1, 128, rng);
  const Tensor beta = random_matrix(1, 128, rng);
  NoGradGuard guard;
  for (auto _ : state) {
    Tensor y = layer_norm(x, gamma, beta);
    benchmark::DoNotOptimize(y.values().data());
  }
}
BENCHMARK(BM_layer_norm);

// End-to-end cost of recording a small graph and backpropagating through it.
void BM_backward_mlp(benchmark::State& state) {
  Rng rng(4);
  Tensor w1 = random_matrix(64, 128, rng, true);
  Tensor w2 = random_matrix(128, 64, rng, true);
  const Tensor x = random_matrix(8, 64, rng);
  for (auto _ : state) {
    Tensor loss = mean(mul(matmul(relu(matmul(x, w1)), w2), x));
    backward(loss);
    benchmark::DoNotOptimize(w1.grad().data());
    w1.clear_grad();
    w2.clear_grad();
  }
}
BENCHMARK(BM_backward_mlp);

}  // namespace

BENCHMARK_MAIN();
