#pragma once

// Brute-force references for ROUGE, independent of the dynamic-programming
// and map-based implementations under test.

#include <cstddef>
#include <string>
#include <vector>

namespace pgsum::testing {

// Size of the multiset intersection of the n-grams of a and b, computed by
// repeatedly matching and removing one occurrence at a time.
inline std::size_t brute_ngram_overlap(const std::vector<std::string>& a,
                                       const std::vector<std::string>& b,
                                       std::size_t n) {
  auto grams = [n](const std::vector<std::string>& t) {
    std::vector<std::vector<std::string>> out;
    for (std::size_t i = 0; i + n <= t.size(); ++i) {
      out.emplace_back(t.begin() + static_cast<std::ptrdiff_t>(i),
                       t.begin() + static_cast<std::ptrdiff_t>(i + n));
    }
    return out;
  };
  auto ga = grams(a);
  auto gb = grams(b);
  std::vector<bool> used(gb.size(), false);
  std::size_t overlap = 0;
  for (const auto& g : ga) {
    for (std::size_t j = 0; j < gb.size(); ++j) {
      if (!used[j] && gb[j] == g) {
        used[j] = true;
        ++overlap;
        break;
      }
    }
  }
  return overlap;
}

inline std::size_t ngram_count(const std::vector<std::string>& t,
                               std::size_t n) {
  return t.size() >= n ? t.size() - n + 1 : 0;
}

inline bool is_subsequence(const std::vector<std::string>& sub,
                           const std::vector<std::string>& seq) {
  std::size_t i = 0;
  for (std::size_t j = 0; j < seq.size() && i < sub.size(); ++j) {
    if (sub[i] == seq[j]) ++i;
  }
  return i == sub.size();
}

// Longest common subsequence by enumerating every subsequence of `a`.
inline std::size_t brute_lcs(const std::vector<std::string>& a,
                             const std::vector<std::string>& b) {
  std::size_t best = 0;
  const std::size_t n = a.size();
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    std::vector<std::string> sub;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (std::size_t{1} << i)) sub.push_back(a[i]);
    }
    if (sub.size() > best && is_subsequence(sub, b)) best = sub.size();
  }
  return best;
}

}  // namespace pgsum::testing
