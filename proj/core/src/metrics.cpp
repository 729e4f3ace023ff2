#include "nl2code/metrics.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <unordered_map>

#include <json.hpp>

#include "nl2code/beam.hpp"
#include "nl2code/errors.hpp"

namespace nl2code {

namespace {

// Packs an n-gram into a string key so counting runs on flat hashes.
std::string gram_key(const std::vector<int>& seq, std::size_t start, int n) {
  std::string key;
  key.reserve(static_cast<std::size_t>(n) * sizeof(int));
  for (int i = 0; i < n; ++i) {
    const int id = seq[start + i];
    key.append(reinterpret_cast<const char*>(&id), sizeof(int));
  }
  return key;
}

void check_paired(const std::vector<std::vector<int>>& references,
                  const std::vector<std::vector<int>>& hypotheses, const char* who) {
  if (references.size() != hypotheses.size()) {
    throw std::invalid_argument(std::string(who) + ": " + std::to_string(references.size()) +
                                " references vs " + std::to_string(hypotheses.size()) +
                                " hypotheses");
  }
  if (references.empty()) {
    throw std::invalid_argument(std::string(who) + ": empty corpus");
  }
}

}  // namespace

double corpus_bleu(const std::vector<std::vector<int>>& references,
                   const std::vector<std::vector<int>>& hypotheses) {
  check_paired(references, hypotheses, "corpus_bleu");

  long long total_ref = 0, total_hyp = 0;
  long long matches[5] = {0, 0, 0, 0, 0};
  long long possible[5] = {0, 0, 0, 0, 0};
  for (std::size_t e = 0; e < references.size(); ++e) {
    const auto& ref = references[e];
    const auto& hyp = hypotheses[e];
    total_ref += static_cast<long long>(ref.size());
    total_hyp += static_cast<long long>(hyp.size());
    for (int n = 1; n <= 4; ++n) {
      if (hyp.size() + 1 <= static_cast<std::size_t>(n)) break;
      std::unordered_map<std::string, long long> ref_counts;
      for (std::size_t i = 0; i + n <= ref.size(); ++i) ref_counts[gram_key(ref, i, n)] += 1;
      for (std::size_t i = 0; i + n <= hyp.size(); ++i) {
        possible[n] += 1;
        auto it = ref_counts.find(gram_key(hyp, i, n));
        if (it != ref_counts.end() && it->second > 0) {
          it->second -= 1;  // clipping: each reference n-gram matches once
          matches[n] += 1;
        }
      }
    }
  }

  if (total_hyp == 0) return 0.0;
  if (matches[1] == 0) return 0.0;

  double log_precision_sum = 0.0;
  for (int n = 1; n <= 4; ++n) {
    double num = static_cast<double>(matches[n]);
    double den = static_cast<double>(possible[n]);
    if (n >= 2 && matches[n] == 0) {
      num += 1.0;
      den += 1.0;
    }
    log_precision_sum += std::log(num / den);
  }
  const double brevity =
      total_hyp >= total_ref ? 1.0 : std::exp(1.0 - static_cast<double>(total_ref) / total_hyp);
  return 100.0 * brevity * std::exp(log_precision_sum / 4.0);
}

double sentence_bleu(const std::vector<int>& reference, const std::vector<int>& hypothesis) {
  return corpus_bleu({reference}, {hypothesis});
}

double token_accuracy(const std::vector<std::vector<int>>& references,
                      const std::vector<std::vector<int>>& hypotheses) {
  check_paired(references, hypotheses, "token_accuracy");
  long long matched = 0, total = 0;
  for (std::size_t e = 0; e < references.size(); ++e) {
    std::unordered_map<int, long long> ref_counts;
    for (int id : references[e]) ref_counts[id] += 1;
    for (int id : hypotheses[e]) {
      total += 1;
      auto it = ref_counts.find(id);
      if (it != ref_counts.end() && it->second > 0) {
        it->second -= 1;
        matched += 1;
      }
    }
  }
  if (total == 0) {
    std::cerr << "[metrics] token_accuracy: every hypothesis is empty\n";
    return 0.0;
  }
  return static_cast<double>(matched) / static_cast<double>(total);
}

EvalReport evaluate(const TransformerModel& model, const Corpus& test, const Vocab& intent_vocab,
                    const Vocab& snippet_vocab, int beam) {
  if (test.examples.empty()) throw ValidationError("evaluate: test corpus is empty");
  for (std::size_t i = 0; i < test.examples.size(); ++i) {
    if (test.examples[i].source != ExampleSource::annotated) {
      throw ValidationError("evaluate: test example " + std::to_string(i) + " is not annotated");
    }
  }

  const int max_len = model.config().max_len;
  EvalReport report;
  std::vector<std::vector<int>> refs, hyps;
  refs.reserve(test.examples.size());
  hyps.reserve(test.examples.size());
  for (const Example& ex : test.examples) {
    std::vector<int> src = intent_vocab.encode(effective_intent(ex), /*add_bos_eos=*/true);
    if (static_cast<int>(src.size()) > max_len) {
      src.resize(max_len);
      src.back() = kEosId;
    }
    const std::vector<int> hyp_ids = beam_decode(model, src, beam, max_len - 1);
    EvalExample entry;
    entry.hypothesis = snippet_vocab.decode(hyp_ids);
    entry.reference = ex.snippet;
    // Metrics run on re-tokenized text so hypothesis and reference share a
    // segmentation even when the decoder emitted a non-canonical split.
    std::vector<int> hyp_tokens = snippet_vocab.encode(entry.hypothesis, /*add_bos_eos=*/false);
    std::vector<int> ref_tokens = snippet_vocab.encode(entry.reference, /*add_bos_eos=*/false);
    entry.sentence_bleu = hyp_tokens.empty() ? 0.0 : sentence_bleu(ref_tokens, hyp_tokens);
    if (entry.sentence_bleu == 0.0) report.zero_bleu_count += 1;
    report.per_example.push_back(std::move(entry));
    refs.push_back(std::move(ref_tokens));
    hyps.push_back(std::move(hyp_tokens));
  }
  report.corpus_bleu = corpus_bleu(refs, hyps);
  report.token_accuracy = token_accuracy(refs, hyps);
  return report;
}

void write_eval_report(const EvalReport& report, const std::string& report_path,
                       const std::string& per_example_path) {
  {
    nlohmann::json j;
    j["corpus_bleu"] = report.corpus_bleu;
    j["token_accuracy"] = report.token_accuracy;
    j["zero_bleu_count"] = report.zero_bleu_count;
    j["example_count"] = report.per_example.size();
    j["bleu_granularity"] = report.bleu_granularity;
    std::ofstream out(report_path);
    if (!out) throw std::runtime_error("cannot write report file " + report_path);
    out << j.dump(2) << "\n";
    if (!out.good()) throw std::runtime_error("write failed for " + report_path);
  }
  {
    std::ofstream out(per_example_path);
    if (!out) throw std::runtime_error("cannot write per-example file " + per_example_path);
    for (const EvalExample& e : report.per_example) {
      nlohmann::json j;
      j["hypothesis"] = e.hypothesis;
      j["reference"] = e.reference;
      j["sentence_bleu"] = e.sentence_bleu;
      out << j.dump() << "\n";
    }
    if (!out.good()) throw std::runtime_error("write failed for " + per_example_path);
  }
}

}  // namespace nl2code
