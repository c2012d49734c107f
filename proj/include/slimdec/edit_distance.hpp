#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

namespace slimdec {

// Levenshtein distance (unit-cost insertions, deletions, substitutions)
// between two token sequences, two-row DP.
template <typename T>
std::size_t edit_distance(std::span<const T> hyp, std::span<const T> ref) {
  std::vector<std::size_t> prev(ref.size() + 1), cur(ref.size() + 1);
  for (std::size_t j = 0; j <= ref.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= hyp.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= ref.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[ref.size()];
}

template <typename T>
std::size_t edit_distance(const std::vector<T> &hyp, const std::vector<T> &ref) {
  return edit_distance<T>(std::span<const T>(hyp), std::span<const T>(ref));
}

}  // namespace slimdec
