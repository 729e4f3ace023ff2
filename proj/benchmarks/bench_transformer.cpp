#include <benchmark/benchmark.h>

#include <vector>

#include "nl2code/backtranslation.hpp"
#include "nl2code/beam.hpp"
#include "nl2code/optim.hpp"
#include "nl2code/rng.hpp"
#include "nl2code/tensor.hpp"
#include "nl2code/token_ids.hpp"
#include "nl2code/transformer.hpp"

namespace {

using namespace nl2code;

TransformerConfig bench_config(int d_model, int heads, int layers) {
  TransformerConfig cfg;
  cfg.num_layers = layers;
  cfg.num_heads = heads;
  cfg.d_model = d_model;
  cfg.d_ff = 4 * d_model;
  cfg.dropout = 0.0;
  cfg.src_vocab = 256;
  cfg.tgt_vocab = 256;
  cfg.max_len = 64;
  return cfg;
}

std::vector<int> framed_sequence(int payload_len, Rng& rng) {
  std::vector<int> ids = {kBosId};
  for (int i = 0; i < payload_len; ++i) {
    ids.push_back(4 + static_cast<int>(rng.next_u64() % 200));
  }
  ids.push_back(kEosId);
  return ids;
}

void BM_encode(benchmark::State& state) {
  Rng init(1);
  const TransformerModel model(bench_config(static_cast<int>(state.range(0)), 4, 1), init);
  Rng rng(2);
  const std::vector<int> src = framed_sequence(30, rng);
  NoGradGuard guard;
  for (auto _ : state) {
    Tensor memory = model.encode(src);
    benchmark::DoNotOptimize(memory.values().data());
  }
}
BENCHMARK(BM_encode)->Arg(64)->Arg(128);

void BM_forward_backward_nll(benchmark::State& state) {
  Rng init(1);
  TransformerModel model(bench_config(64, 4, 1), init);
  Rng rng(2);
  const std::vector<int> src = framed_sequence(20, rng);
  const std::vector<int> tgt = framed_sequence(20, rng);
  auto& params = model.parameters();
  for (auto _ : state) {
    Tensor loss = model.forward_nll(src, tgt);
    backward(loss);
    benchmark::DoNotOptimize(loss.value());
    for (auto& [name, p] : params) p.clear_grad();
  }
}
BENCHMARK(BM_forward_backward_nll);

void BM_beam_decode(benchmark::State& state) {
  Rng init(1);
  const TransformerModel model(bench_config(64, 4, 1), init);
  Rng rng(2);
  const std::vector<int> src = framed_sequence(12, rng);
  const int beam = static_cast<int>(state.range(0));
  for (auto _ : state) {
    std::vector<int> out = beam_decode(model, src, beam, 16);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_beam_decode)->Arg(1)->Arg(4);

// Differentiable decoding keeps the whole autoregressive graph alive, so this
// is the expensive step of the reconstruction objective.
void BM_generate_soft(benchmark::State& state) {
  Rng init(1);
  const TransformerConfig cfg = bench_config(64, 4, 1);
  DualModel dual(cfg, cfg, init);
  Rng rng(2);
  const std::vector<int> code = framed_sequence(10, rng);
  for (auto _ : state) {
    SoftSequence seq = generate_soft(dual.G, code, 12);
    benchmark::DoNotOptimize(seq.dists.values().data());
  }
}
BENCHMARK(BM_generate_soft);

}  // namespace

BENCHMARK_MAIN();
