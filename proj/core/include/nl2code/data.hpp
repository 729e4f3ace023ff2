#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nl2code/bpe.hpp"
#include "nl2code/rng.hpp"

namespace nl2code {

enum class ExampleSource { annotated, mined };
enum class Split { train, test };

struct Example {
  std::string intent;
  std::optional<std::string> rewritten_intent;  // curated form, annotated data only
  std::string snippet;
  ExampleSource source = ExampleSource::annotated;
  std::optional<long long> question_id;
};

struct Corpus {
  std::vector<Example> examples;
  Split split = Split::train;
};

// Annotated file: one JSON array of records with intent (string),
// rewritten_intent (string or null), snippet (string), question_id (integer).
// Malformed records fail with the record index and field named.
Corpus load_annotated(const std::string& path);

// Mined file: newline-delimited JSON records with at least intent and snippet
// (extra fields ignored). Takes the first `limit` records in file order;
// limit larger than the file is not an error.
Corpus load_mined(const std::string& path, long long limit);

// The training intent: rewritten form when present, raw intent otherwise
// (mined intents count as already rewritten).
const std::string& effective_intent(const Example& ex);

// Token-id view of one example: src = encoded effective intent, tgt = encoded
// snippet, both bos/eos framed.
struct EncodedExample {
  std::vector<int> src;
  std::vector<int> tgt;
  bool mined = false;
};

// Encodes a corpus, truncating sequences above max_len (final token forced
// back to eos) and counting how many rows were cut. The count is also logged.
std::vector<EncodedExample> encode_corpus(const Corpus& corpus, const Vocab& intent_vocab,
                                          const Vocab& snippet_vocab, int max_len,
                                          long long* truncated_count = nullptr);

struct Batch {
  std::vector<std::vector<int>> src;        // padded to the per-batch max length
  std::vector<std::vector<int>> tgt;
  std::vector<std::vector<bool>> src_pad;   // true where src holds pad
  std::vector<std::vector<bool>> tgt_pad;
  std::vector<bool> mined;                  // per-row source tag
  std::vector<double> weights;              // per-row loss weights

  int size() const { return static_cast<int>(src.size()); }
};

// One epoch of batches: deterministic Fisher-Yates shuffle from the seed,
// then consecutive groups of batch_size (final batch may be smaller), padded
// per batch. All weights 1.
std::vector<Batch> make_batches(const std::vector<EncodedExample>& examples, int batch_size,
                                std::uint64_t shuffle_seed);
// Convenience: encode + batch in one call.
std::vector<Batch> make_batches(const Corpus& corpus, const Vocab& intent_vocab,
                                const Vocab& snippet_vocab, int batch_size,
                                std::uint64_t shuffle_seed, int max_len,
                                long long* truncated_count = nullptr);

enum class RegimeKind { mix, sample, finetune };

struct RegimeConfig {
  RegimeKind kind = RegimeKind::mix;
  double alpha = 1.0;              // Sample only: loss weight for mined rows
  long long pretrain_steps = 1000; // Finetune only: length of the mined phase
  long long mined_limit = 100000;  // how many mined records to ingest
};

// Step-driven batch source implementing the three regimes:
//   mix      — continuous stream over the shuffled union, weights 1
//   sample   — ceil(B/2) annotated rows (weight 1) + the rest mined (weight alpha)
//   finetune — mined-only while step <= pretrain_steps, annotated-only after
// Streams reshuffle per epoch; batches always hold exactly batch_size rows.
class RegimeBatcher {
 public:
  RegimeBatcher(const RegimeConfig& cfg, std::vector<EncodedExample> annotated,
                std::vector<EncodedExample> mined, int batch_size, std::uint64_t data_seed);

  // step is the 1-based optimizer step the batch will feed.
  Batch next(long long step);

 private:
  struct Stream {
    std::vector<std::size_t> order;
    std::size_t cursor = 0;
  };
  std::size_t draw(Stream& s, std::size_t pool_size);

  RegimeConfig cfg_;
  std::vector<EncodedExample> annotated_;
  std::vector<EncodedExample> mined_;
  std::vector<const EncodedExample*> union_;  // annotated then mined, for mix
  int batch_size_;
  Rng rng_;
  Stream annotated_stream_, mined_stream_, union_stream_;
};

// Pads rows to a rectangular batch (helper shared with tests).
Batch assemble_batch(const std::vector<const EncodedExample*>& rows,
                     const std::vector<double>& weights);

}  // namespace nl2code
