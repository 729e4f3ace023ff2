#pragma once

#include <string>
#include <vector>

#include "nl2code/bpe.hpp"
#include "nl2code/data.hpp"
#include "nl2code/transformer.hpp"

namespace nl2code {

// Corpus-level BLEU-4 on a 0..100 scale: geometric mean of modified n-gram
// precisions (corpus-summed, n = 1..4) times the brevity penalty
// exp(1 - r/c) for c < r. Precisions for n >= 2 take add-one smoothing on
// numerator and denominator when the raw corpus numerator is zero; zero
// unigram matches or zero total hypothesis length give 0. Exactly one
// reference per hypothesis. Throws on length mismatch or an empty corpus.
double corpus_bleu(const std::vector<std::vector<int>>& references,
                   const std::vector<std::vector<int>>& hypotheses);

// corpus_bleu of the single pair.
double sentence_bleu(const std::vector<int>& reference, const std::vector<int>& hypothesis);

// Corpus-level clipped unigram precision: sum of clipped matching-token
// counts over sum of hypothesis lengths. All-empty hypotheses give 0 with a
// warning rather than an error.
double token_accuracy(const std::vector<std::vector<int>>& references,
                      const std::vector<std::vector<int>>& hypotheses);

struct EvalExample {
  std::string hypothesis;
  std::string reference;
  double sentence_bleu = 0.0;
};

struct EvalReport {
  double corpus_bleu = 0.0;      // 0..100
  double token_accuracy = 0.0;   // 0..1
  std::vector<EvalExample> per_example;
  long long zero_bleu_count = 0;
  // Metric granularity is a design choice, so the report carries it.
  std::string bleu_granularity = "subword tokens of the snippet vocabulary";
};

// Beam-decodes every test intent, detokenizes, re-tokenizes hypothesis and
// reference with the snippet vocabulary, and aggregates the metrics above.
// The test corpus must be non-empty and fully annotated.
EvalReport evaluate(const TransformerModel& model, const Corpus& test, const Vocab& intent_vocab,
                    const Vocab& snippet_vocab, int beam);

// report_path: one structured record with the headline numbers;
// per_example_path: newline-delimited records (hypothesis, reference,
// sentence-bleu) for error analysis.
void write_eval_report(const EvalReport& report, const std::string& report_path,
                       const std::string& per_example_path);

}  // namespace nl2code
