#pragma once

#include <string>
#include <utility>
#include <vector>

namespace pgsum::rouge {

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Builds a score from precision and recall; f1 is 0 when both are 0.
RougeScore make_score(double precision, double recall);

// Clipped n-gram overlap. Empty n-gram sets score 0.
RougeScore rouge_n(const std::vector<std::string>& candidate,
                   const std::vector<std::string>& reference, int n);

// Length of the longest common subsequence of two token lists.
std::size_t lcs_length(const std::vector<std::string>& a,
                       const std::vector<std::string>& b);

// Summary-level ROUGE-L over the flat token sequences.
RougeScore rouge_l(const std::vector<std::string>& candidate,
                   const std::vector<std::string>& reference);

enum class Variant { kRouge1, kRouge2, kRougeL };

std::string variant_name(Variant v);
Variant parse_variant(const std::string& name);

RougeScore score(Variant v, const std::vector<std::string>& candidate,
                 const std::vector<std::string>& reference);

struct CorpusScore {
  Variant variant;
  RougeScore mean;
};

using TokenPair =
    std::pair<std::vector<std::string>, std::vector<std::string>>;

// Arithmetic mean of per-pair precision, recall and F (candidate, reference).
std::vector<CorpusScore> evaluate_corpus(const std::vector<TokenPair>& pairs,
                                         const std::vector<Variant>& variants);

// CSV report `variant,precision,recall,f1`, values x100 with two decimals.
std::string format_report(const std::vector<CorpusScore>& scores);

}  // namespace pgsum::rouge
