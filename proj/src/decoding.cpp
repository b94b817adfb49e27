#include "pgsum/decoding.hpp"

#include <ostream>

#include "json.hpp"

namespace pgsum {

double normalized_score(double score, std::size_t length, double p) {
  if (p == 0.0 || length == 0) return score;
  return score / std::pow(static_cast<double>(length), p);
}

std::vector<double> diverse_sibling_scores(double parent_score,
                                           const std::vector<double>& sorted,
                                           double gamma) {
  std::vector<double> out;
  out.reserve(sorted.size());
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    if (k > 0 && sorted[k] > sorted[k - 1]) {
      throw ContractError("diverse_sibling_scores: input not sorted descending");
    }
    out.push_back(parent_score + sorted[k] -
                  gamma * static_cast<double>(k + 1));
  }
  return out;
}

std::vector<DecodedHypothesis> mmi_rerank(
    std::vector<DecodedHypothesis> nbest,
    const std::function<double(const std::vector<int>&)>& backward,
    double lambda, double beta,
    const std::function<double(const std::vector<int>&)>& omega) {
  std::vector<std::pair<double, std::size_t>> keys;
  for (std::size_t i = 0; i < nbest.size(); ++i) {
    const auto& y = nbest[i].tokens;
    double s = nbest[i].score;
    if (lambda != 0.0) s += lambda * backward(y);
    if (beta != 0.0) {
      s += beta * (omega ? omega(y) : static_cast<double>(y.size()));
    }
    keys.emplace_back(s, i);
  }
  std::stable_sort(keys.begin(), keys.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<DecodedHypothesis> out;
  out.reserve(nbest.size());
  for (const auto& [s, i] : keys) out.push_back(std::move(nbest[i]));
  return out;
}

SummarizerModel::SummarizerModel(const ModelParameters& params,
                                 const ExtendedExample& example)
    : params_(&params) {
  NoGradScope no_grad;
  source_ = prepare_source(params, example.source_ids, example.source_ext_ids,
                           example.oov_tokens.size());
  output_size_ = pgsum::output_size(params, source_);
}

DecoderState SummarizerModel::initial_state() const {
  NoGradScope no_grad;
  return pgsum::initial_state(*params_, source_);
}

SearchStep<DecoderState> SummarizerModel::step(const DecoderState& state,
                                               int prev) const {
  NoGradScope no_grad;
  StepOutput out = decoder_step(*params_, source_, state, prev);
  SearchStep<DecoderState> s;
  s.state = std::move(out.state);
  s.log_probs.reserve(output_size_);
  for (double p : out.distribution.data()) s.log_probs.push_back(std::log(p));
  s.attention = out.attention.to_vector();
  return s;
}

void write_nbest_jsonl(std::ostream& out, const NbestRecord& record) {
  nlohmann::json cands = nlohmann::json::array();
  for (const auto& c : record.candidates) {
    cands.push_back(
        {{"tokens", c.tokens}, {"score", c.score}, {"norm_score", c.norm_score}});
  }
  nlohmann::json j = {{"id", record.id}, {"candidates", cands}};
  out << j.dump() << '\n';
}

}  // namespace pgsum
