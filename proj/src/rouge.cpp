#include "pgsum/rouge.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include "pgsum/errors.hpp"

namespace pgsum::rouge {
namespace {

using NGramCounts = std::map<std::vector<std::string>, int>;

NGramCounts count_ngrams(const std::vector<std::string>& tokens, int n,
                         int* total) {
  NGramCounts counts;
  *total = 0;
  const int len = static_cast<int>(tokens.size());
  for (int i = 0; i + n <= len; ++i) {
    counts[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)]++;
    ++*total;
  }
  return counts;
}

}  // namespace

RougeScore make_score(double precision, double recall) {
  RougeScore s{precision, recall, 0.0};
  if (precision + recall > 0.0) {
    s.f1 = 2.0 * precision * recall / (precision + recall);
  }
  return s;
}

namespace {

// F from counts as 2m / (c + r): one rounding, so 4/7 stays 4/7.
RougeScore count_score(double match, double cand, double ref) {
  RougeScore s{match / cand, match / ref, 0.0};
  if (match > 0) s.f1 = 2.0 * match / (cand + ref);
  return s;
}

}  // namespace

RougeScore rouge_n(const std::vector<std::string>& candidate,
                   const std::vector<std::string>& reference, int n) {
  if (n < 1) throw ContractError("rouge_n: n must be >= 1");
  int cand_total = 0, ref_total = 0;
  const NGramCounts cand = count_ngrams(candidate, n, &cand_total);
  const NGramCounts ref = count_ngrams(reference, n, &ref_total);
  if (cand_total == 0 || ref_total == 0) return {};
  int overlap = 0;
  for (const auto& [gram, count] : cand) {
    auto it = ref.find(gram);
    if (it != ref.end()) overlap += std::min(count, it->second);
  }
  return count_score(overlap, cand_total, ref_total);
}

std::size_t lcs_length(const std::vector<std::string>& a,
                       const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1
                                    : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

RougeScore rouge_l(const std::vector<std::string>& candidate,
                   const std::vector<std::string>& reference) {
  if (candidate.empty() || reference.empty()) return {};
  return count_score(static_cast<double>(lcs_length(candidate, reference)),
                     static_cast<double>(candidate.size()),
                     static_cast<double>(reference.size()));
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kRouge1: return "rouge1";
    case Variant::kRouge2: return "rouge2";
    case Variant::kRougeL: return "rougeL";
  }
  return "unknown";
}

Variant parse_variant(const std::string& name) {
  if (name == "rouge1" || name == "1") return Variant::kRouge1;
  if (name == "rouge2" || name == "2") return Variant::kRouge2;
  if (name == "rougeL" || name == "L" || name == "l") return Variant::kRougeL;
  throw ConfigError("unknown ROUGE variant '" + name + "'");
}

RougeScore score(Variant v, const std::vector<std::string>& candidate,
                 const std::vector<std::string>& reference) {
  switch (v) {
    case Variant::kRouge1: return rouge_n(candidate, reference, 1);
    case Variant::kRouge2: return rouge_n(candidate, reference, 2);
    case Variant::kRougeL: return rouge_l(candidate, reference);
  }
  return {};
}

std::vector<CorpusScore> evaluate_corpus(const std::vector<TokenPair>& pairs,
                                         const std::vector<Variant>& variants) {
  std::vector<CorpusScore> out;
  for (Variant v : variants) {
    RougeScore total;
    for (const auto& [cand, ref] : pairs) {
      const RougeScore s = score(v, cand, ref);
      total.precision += s.precision;
      total.recall += s.recall;
      total.f1 += s.f1;
    }
    if (!pairs.empty()) {
      const double n = static_cast<double>(pairs.size());
      total.precision /= n;
      total.recall /= n;
      total.f1 /= n;
    }
    out.push_back({v, total});
  }
  return out;
}

std::string format_report(const std::vector<CorpusScore>& scores) {
  std::ostringstream out;
  out << "variant,precision,recall,f1\n";
  char buf[128];
  for (const auto& s : scores) {
    std::snprintf(buf, sizeof(buf), "%s,%.2f,%.2f,%.2f\n",
                  variant_name(s.variant).c_str(), 100.0 * s.mean.precision,
                  100.0 * s.mean.recall, 100.0 * s.mean.f1);
    out << buf;
  }
  return out.str();
}

}  // namespace pgsum::rouge
