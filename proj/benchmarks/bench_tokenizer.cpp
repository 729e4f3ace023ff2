#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "nl2code/bpe.hpp"
#include "nl2code/rng.hpp"

namespace {

using namespace nl2code;

std::vector<std::string> synthetic_corpus(int lines, std::uint64_t seed) {
  static const char* words[] = {"print",  "return", "value",  "string", "list",
                                "sorted", "lambda", "range",  "items",  "self",
                                "append", "index",  "format", "split",  "join"};
  Rng rng(seed);
  std::vector<std::string> corpus;
  for (int i = 0; i < lines; ++i) {
    std::string line;
    const int n = 4 + static_cast<int>(rng.next_u64() % 8);
    for (int w = 0; w < n; ++w) {
      if (w) line += ' ';
      line += words[rng.next_u64() % (sizeof(words) / sizeof(words[0]))];
    }
    corpus.push_back(std::move(line));
  }
  return corpus;
}

void BM_train_vocab(benchmark::State& state) {
  const std::vector<std::string> corpus = synthetic_corpus(static_cast<int>(state.range(0)), 7);
  for (auto _ : state) {
    Vocab vocab = train_vocab(corpus, 300);
    benchmark::DoNotOptimize(vocab.size());
  }
}
BENCHMARK(BM_train_vocab)->Arg(64)->Arg(256);

void BM_encode_line(benchmark::State& state) {
  const std::vector<std::string> corpus = synthetic_corpus(256, 7);
  const Vocab vocab = train_vocab(corpus, 300);
  const std::string line = "return sorted(items, key=lambda x: x.value)";
  for (auto _ : state) {
    std::vector<int> ids = vocab.encode(line, true);
    benchmark::DoNotOptimize(ids.data());
  }
  state.SetBytesProcessed(state.iterations() * static_cast<long long>(line.size()));
}
BENCHMARK(BM_encode_line);

void BM_decode_line(benchmark::State& state) {
  const std::vector<std::string> corpus = synthetic_corpus(256, 7);
  const Vocab vocab = train_vocab(corpus, 300);
  const std::vector<int> ids = vocab.encode("return sorted(items, key=lambda x: x.value)", true);
  for (auto _ : state) {
    std::string text = vocab.decode(ids);
    benchmark::DoNotOptimize(text.data());
  }
}
BENCHMARK(BM_decode_line);

}  // namespace

BENCHMARK_MAIN();
