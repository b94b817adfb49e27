#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <iosfwd>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "pgsum/encdec.hpp"
#include "pgsum/errors.hpp"
#include "pgsum/parameters.hpp"
#include "pgsum/textdata.hpp"

namespace pgsum {

// One decoder step as seen by the search routines.
template <class State>
struct SearchStep {
  State state;
  std::vector<double> log_probs;  // over the extended output range
  std::vector<double> attention;  // encoder attention, may be empty
};

template <class M>
concept StepModel = requires(const M& m, const typename M::State& s, int tok) {
  { m.initial_state() } -> std::convertible_to<typename M::State>;
  { m.step(s, tok) } -> std::convertible_to<SearchStep<typename M::State>>;
  { m.output_size() } -> std::convertible_to<std::size_t>;
};

struct DecodedHypothesis {
  std::vector<int> tokens;  // EOS included when finished
  double score = 0.0;       // sum of step log-probabilities
  double norm_score = 0.0;  // score / len^p
  bool finished = false;
  std::vector<std::vector<double>> attention;  // one row per token
};

struct BeamOptions {
  std::size_t beam = 5;
  std::size_t t_max = 100;
  double length_penalty = 0.0;  // p in S / len^p
  // Sibling-rank penalty gamma; selection only, scores stay pure.
  double sibling_gamma = 0.0;
};

double normalized_score(double score, std::size_t length, double p);

// parent + log P_k - gamma * k for k = 1.. over log-probs sorted descending.
std::vector<double> diverse_sibling_scores(double parent_score,
                                           const std::vector<double>& sorted,
                                           double gamma);

namespace detail {

template <class State>
struct Live {
  DecodedHypothesis hyp;
  State state;
};

struct Candidate {
  std::size_t parent;
  int token;
  double log_prob;
  double select;  // ranking score
};

inline bool candidate_before(const Candidate& a, const Candidate& b) {
  if (a.select != b.select) return a.select > b.select;
  if (a.parent != b.parent) return a.parent < b.parent;
  return a.token < b.token;
}

// Best `k` token ids of one step, highest first, ties to the smallest id.
inline std::vector<int> top_tokens(const std::vector<double>& values,
                                   std::size_t k) {
  std::vector<int> ids(values.size());
  std::iota(ids.begin(), ids.end(), 0);
  k = std::min(k, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + k, ids.end(), [&](int a, int b) {
    if (values[a] != values[b]) return values[a] > values[b];
    return a < b;
  });
  ids.resize(k);
  return ids;
}

// One beam of fixed width. `bonus(token)` adds a selection-only term.
template <StepModel M>
class Beam {
 public:
  using State = typename M::State;

  Beam(const M& model, std::size_t width, const BeamOptions& options)
      : model_(&model), width_(width), options_(options) {
    live_.push_back({DecodedHypothesis{}, model.initial_state()});
  }

  bool done() const { return live_.empty() || finished_.size() >= width_; }

  // Tokens chosen at the last advance, one per surviving selection.
  const std::vector<int>& last_tokens() const { return last_tokens_; }

  template <class Bonus>
  void advance(Bonus&& bonus) {
    last_tokens_.clear();
    if (done()) return;
    std::vector<SearchStep<State>> steps;
    std::vector<Candidate> cands;
    for (std::size_t i = 0; i < live_.size(); ++i) {
      const auto& h = live_[i].hyp;
      const int prev = h.tokens.empty() ? kSosId : h.tokens.back();
      steps.push_back(model_->step(live_[i].state, prev));
      const auto& lp = steps.back().log_probs;
      std::vector<double> select(lp.size());
      for (std::size_t v = 0; v < lp.size(); ++v) {
        select[v] = lp[v] + bonus(static_cast<int>(v));
      }
      const auto ids = top_tokens(select, width_);
      std::vector<double> sorted;
      for (int id : ids) sorted.push_back(select[id]);
      const auto ranked =
          diverse_sibling_scores(h.score, sorted, options_.sibling_gamma);
      for (std::size_t r = 0; r < ids.size(); ++r) {
        cands.push_back({i, ids[r], lp[ids[r]], ranked[r]});
      }
    }
    std::stable_sort(cands.begin(), cands.end(), candidate_before);
    const std::size_t slots = width_ - finished_.size();
    std::vector<Live<State>> next;
    for (std::size_t c = 0; c < cands.size() && c < slots; ++c) {
      const Candidate& k = cands[c];
      Live<State> child{live_[k.parent].hyp, steps[k.parent].state};
      child.hyp.tokens.push_back(k.token);
      child.hyp.score += k.log_prob;
      child.hyp.attention.push_back(steps[k.parent].attention);
      last_tokens_.push_back(k.token);
      if (k.token == kEosId) {
        child.hyp.finished = true;
        finished_.push_back(std::move(child.hyp));
      } else {
        next.push_back(std::move(child));
      }
    }
    live_ = std::move(next);
  }

  // Finished hypotheses padded with the best live ones, then everything
  // sorted by normalized score.
  std::vector<DecodedHypothesis> results() const {
    auto order = [&](std::vector<DecodedHypothesis>& v) {
      for (auto& h : v) {
        h.norm_score =
            normalized_score(h.score, h.tokens.size(), options_.length_penalty);
      }
      std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
        return a.norm_score > b.norm_score;
      });
    };
    std::vector<DecodedHypothesis> out = finished_;
    if (out.size() < width_) {
      std::vector<DecodedHypothesis> rest;
      for (const auto& l : live_) rest.push_back(l.hyp);
      order(rest);
      for (auto& h : rest) {
        if (out.size() >= width_) break;
        out.push_back(std::move(h));
      }
    }
    order(out);
    return out;
  }

 private:
  const M* model_;
  std::size_t width_;
  BeamOptions options_;
  std::vector<Live<State>> live_;
  std::vector<DecodedHypothesis> finished_;
  std::vector<int> last_tokens_;
};

}  // namespace detail

// Argmax each step (ties to the smallest id) until EOS or t_max.
template <StepModel M>
DecodedHypothesis greedy_decode(const M& model, std::size_t t_max) {
  DecodedHypothesis h;
  auto state = model.initial_state();
  int prev = kSosId;
  for (std::size_t t = 0; t < t_max; ++t) {
    auto s = model.step(state, prev);
    const int tok = detail::top_tokens(s.log_probs, 1).front();
    h.tokens.push_back(tok);
    h.score += s.log_probs[tok];
    h.attention.push_back(std::move(s.attention));
    state = std::move(s.state);
    prev = tok;
    if (tok == kEosId) {
      h.finished = true;
      break;
    }
  }
  h.norm_score = h.score;
  return h;
}

// Widths above the output size are allowed; every token is then expanded.
template <StepModel M>
std::vector<DecodedHypothesis> beam_search(const M& model,
                                           const BeamOptions& options) {
  if (options.beam == 0) throw ConfigError("invariant beam size B >= 1 violated");
  if (options.sibling_gamma < 0) {
    throw ConfigError("invariant diversity rate >= 0 violated");
  }
  detail::Beam<M> beam(model, options.beam, options);
  for (std::size_t t = 0; t < options.t_max && !beam.done(); ++t) {
    beam.advance([](int) { return 0.0; });
  }
  return beam.results();
}

// G groups of B/G beams. Group g > 1 adds -lambda per candidate token that
// an earlier group selected at the same step (selection only).
template <StepModel M>
std::vector<std::vector<DecodedHypothesis>> diverse_beam_search(
    const M& model, const BeamOptions& options, std::size_t groups,
    double lambda) {
  if (options.beam == 0) throw ConfigError("invariant beam size B >= 1 violated");
  if (groups == 0 || groups > options.beam) {
    throw ConfigError("invariant 1 <= G <= B violated (G = " +
                      std::to_string(groups) + ", B = " +
                      std::to_string(options.beam) + ")");
  }
  if (options.beam % groups != 0) {
    throw ConfigError("invariant G divides B violated");
  }
  if (!(lambda >= 0)) throw ConfigError("invariant lambda_g >= 0 violated");
  const std::size_t width = options.beam / groups;
  std::vector<detail::Beam<M>> beams;
  for (std::size_t g = 0; g < groups; ++g) beams.emplace_back(model, width, options);
  for (std::size_t t = 0; t < options.t_max; ++t) {
    bool any = false;
    std::vector<int> taken;
    for (auto& b : beams) {
      if (b.done()) continue;
      any = true;
      b.advance([&](int tok) {
        return std::find(taken.begin(), taken.end(), tok) != taken.end()
                   ? -lambda
                   : 0.0;
      });
      const auto& chosen = b.last_tokens();
      taken.insert(taken.end(), chosen.begin(), chosen.end());
    }
    if (!any) break;
  }
  std::vector<std::vector<DecodedHypothesis>> out;
  for (const auto& b : beams) out.push_back(b.results());
  return out;
}

// Stable re-ranking by score + lambda * backward(y) + beta * omega(y).
// omega defaults to the token count.
std::vector<DecodedHypothesis> mmi_rerank(
    std::vector<DecodedHypothesis> nbest,
    const std::function<double(const std::vector<int>&)>& backward,
    double lambda, double beta,
    const std::function<double(const std::vector<int>&)>& omega = {});

// Step model over a trained summarizer and one source article. Steps run
// without recording gradients; states are immutable, so branches share them.
class SummarizerModel {
 public:
  using State = DecoderState;

  SummarizerModel(const ModelParameters& params, const ExtendedExample& example);

  DecoderState initial_state() const;
  SearchStep<DecoderState> step(const DecoderState& state, int prev) const;
  std::size_t output_size() const { return output_size_; }

 private:
  const ModelParameters* params_;
  SourceContext source_;
  std::size_t output_size_;
};

struct NbestRecord {
  std::string id;
  struct Candidate {
    std::vector<std::string> tokens;
    double score = 0.0;
    double norm_score = 0.0;
  };
  std::vector<Candidate> candidates;
};

// {"id", "candidates": [{"tokens", "score", "norm_score"}]} on one line.
void write_nbest_jsonl(std::ostream& out, const NbestRecord& record);

}  // namespace pgsum
