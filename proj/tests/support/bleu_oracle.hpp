#pragma once

// Brute-force corpus BLEU-4, written independently of the library version and
// frozen here as the reference the main implementation must match within 1e-6.
// Semantics fixed by this oracle:
//   - modified n-gram precision per n in 1..4: clipped matches summed over the
//     corpus divided by total hypothesis n-gram count
//   - add-one smoothing on numerator and denominator, applied per n >= 2 only
//     when the raw corpus numerator for that n is zero
//   - zero unigram matches, or zero total hypothesis length, give BLEU 0
//   - brevity penalty exp(1 - r/c) when c < r, else 1
//   - scale 0..100

#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

namespace test_support {

inline double oracle_corpus_bleu(const std::vector<std::vector<int>>& refs,
                                 const std::vector<std::vector<int>>& hyps) {
  if (refs.size() != hyps.size()) throw std::invalid_argument("oracle: list length mismatch");
  if (refs.empty()) throw std::invalid_argument("oracle: empty corpus");

  long long total_ref = 0, total_hyp = 0;
  long long numerators[5] = {0, 0, 0, 0, 0};
  long long denominators[5] = {0, 0, 0, 0, 0};
  for (std::size_t e = 0; e < refs.size(); ++e) {
    const auto& ref = refs[e];
    const auto& hyp = hyps[e];
    total_ref += static_cast<long long>(ref.size());
    total_hyp += static_cast<long long>(hyp.size());
    for (int n = 1; n <= 4; ++n) {
      std::map<std::vector<int>, long long> ref_counts;
      for (std::size_t i = 0; i + n <= ref.size(); ++i) {
        ref_counts[std::vector<int>(ref.begin() + i, ref.begin() + i + n)] += 1;
      }
      std::map<std::vector<int>, long long> hyp_counts;
      for (std::size_t i = 0; i + n <= hyp.size(); ++i) {
        hyp_counts[std::vector<int>(hyp.begin() + i, hyp.begin() + i + n)] += 1;
      }
      for (const auto& [gram, count] : hyp_counts) {
        const auto it = ref_counts.find(gram);
        const long long clipped = it == ref_counts.end() ? 0 : std::min(count, it->second);
        numerators[n] += clipped;
        denominators[n] += count;
      }
    }
  }

  if (total_hyp == 0) return 0.0;
  if (numerators[1] == 0) return 0.0;

  double log_precision_sum = 0.0;
  for (int n = 1; n <= 4; ++n) {
    double num = static_cast<double>(numerators[n]);
    double den = static_cast<double>(denominators[n]);
    if (n >= 2 && numerators[n] == 0) {
      num += 1.0;
      den += 1.0;
    }
    log_precision_sum += std::log(num / den);
  }
  const double bp =
      total_hyp >= total_ref ? 1.0 : std::exp(1.0 - static_cast<double>(total_ref) / total_hyp);
  return 100.0 * bp * std::exp(log_precision_sum / 4.0);
}

}  // namespace test_support
