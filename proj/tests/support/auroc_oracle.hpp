// Brute-force AUROC by pair enumeration: (#concordant + 0.5 #tied) / (P * N).
// The oracle the rank-based production implementation is checked against.
#pragma once

#include <span>

namespace mmv::testing {

inline double auroc_bruteforce(std::span<const float> scores, std::span<const int> labels) {
  long long concordant = 0, tied = 0, positives = 0, negatives = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i]) {
      ++positives;
    } else {
      ++negatives;
    }
  }
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      if (scores[i] > scores[j]) {
        ++concordant;
      } else if (scores[i] == scores[j]) {
        ++tied;
      }
    }
  }
  return (static_cast<double>(concordant) + 0.5 * static_cast<double>(tied)) /
         (static_cast<double>(positives) * static_cast<double>(negatives));
}

}  // namespace mmv::testing
