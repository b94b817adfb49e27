#include "pgsum/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "json.hpp"

#include "pgsum/encdec.hpp"
#include "pgsum/errors.hpp"

namespace pgsum {

// ---------------------------------------------------------------------------
// names and schedule

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kXent: return "xent";
    case Strategy::kDad: return "dad";
    case Strategy::kE2e: return "e2e";
    case Strategy::kReinforce: return "reinforce";
    case Strategy::kMixer: return "mixer";
    case Strategy::kScst: return "scst";
  }
  return "?";
}

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

Strategy parse_strategy(const std::string& name) {
  const std::string s = lower(name);
  for (Strategy st : {Strategy::kXent, Strategy::kDad, Strategy::kE2e,
                      Strategy::kReinforce, Strategy::kMixer, Strategy::kScst}) {
    if (strategy_name(st) == s) return st;
  }
  throw ConfigError("unknown strategy '" + name +
                    "' (expected xent, dad, e2e, reinforce, mixer or scst)");
}

std::string dad_decay_name(DadDecay d) {
  switch (d) {
    case DadDecay::kLinear: return "linear";
    case DadDecay::kExponential: return "exponential";
    case DadDecay::kInverseSigmoid: return "inverse_sigmoid";
    case DadDecay::kConstant: return "constant";
  }
  return "?";
}

DadDecay parse_dad_decay(const std::string& name) {
  const std::string s = lower(name);
  for (DadDecay d : {DadDecay::kLinear, DadDecay::kExponential,
                     DadDecay::kInverseSigmoid, DadDecay::kConstant}) {
    if (dad_decay_name(d) == s) return d;
  }
  throw ConfigError("unknown dad decay '" + name + "'");
}

double dad_probability(std::uint64_t k, DadDecay decay, double alpha) {
  const double kd = static_cast<double>(k);
  switch (decay) {
    case DadDecay::kLinear:
      if (!(alpha >= 0.0)) {
        throw ConfigError("invariant linear dad alpha >= 0 violated");
      }
      return std::clamp(1.0 - alpha * kd, 0.0, 1.0);
    case DadDecay::kExponential:
      if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw ConfigError("invariant exponential dad alpha in [0,1] violated");
      }
      return std::pow(alpha, kd);
    case DadDecay::kInverseSigmoid:
      if (!(alpha > 0.0)) {
        throw ConfigError("invariant inverse-sigmoid dad alpha > 0 violated");
      }
      return alpha / (alpha + std::exp(kd / alpha));
    case DadDecay::kConstant:
      if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw ConfigError("invariant constant dad p in [0,1] violated");
      }
      return alpha;
  }
  throw ConfigError("unknown dad decay");
}

void TrainingSchedule::validate() const {
  dad_probability(0, dad_decay, dad_alpha);
  if (mixer_delta < 1) throw ConfigError("invariant mixer delta >= 1 violated");
  if (mixer_period < 1) {
    throw ConfigError("invariant mixer period N >= 1 violated");
  }
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw ConfigError("invariant mixed-loss gamma in (0,1) violated");
  }
  if (e2e_top_k < 1) throw ConfigError("invariant e2e top-k >= 1 violated");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) {
    throw ConfigError("invariant ema decay in [0,1) violated");
  }
  if (!(coverage_weight >= 0.0)) {
    throw ConfigError("invariant coverage weight >= 0 violated");
  }
}

// ---------------------------------------------------------------------------
// sampling helpers

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::size_t sample_index(std::span<const double> weights,
                         std::mt19937_64& rng) {
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw ContractError("sample_index: negative weight");
    total += w;
  }
  if (!(total > 0.0)) throw ContractError("sample_index: no positive weight");
  const double u = uniform01(rng) * total;
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last = i;
    if (u < acc) return i;
  }
  return last;
}

std::size_t argmax_index(std::span<const double> values) {
  if (values.empty()) throw ContractError("argmax_index: empty input");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

int scheduled_input(int y_true, int y_model, double p_dad,
                    std::mt19937_64& rng) {
  return uniform01(rng) < p_dad ? y_true : y_model;
}

Tensor e2e_fused_input(const Tensor& p_vocab, std::size_t k,
                       const Tensor& embedding) {
  const std::size_t V = p_vocab.size();
  if (k == 0 || k > V) {
    throw ContractError("e2e_fused_input: k = " + std::to_string(k) +
                        " outside [1, " + std::to_string(V) + "]");
  }
  auto p = p_vocab.data();
  std::vector<int> order(V);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return p[a] > p[b]; });
  order.resize(k);
  std::vector<Tensor> picked;
  for (int id : order) picked.push_back(pick(p_vocab, static_cast<std::size_t>(id)));
  Tensor w = concat(picked);
  Tensor inv_total = exp(scale(log(sum(w)), -1.0));
  Tensor weights = mul_scalar(w, inv_total);
  return matmul(weights, embedding_lookup(embedding, order));
}

// ---------------------------------------------------------------------------
// losses

const std::vector<int>& scoring_targets(const ModelParameters& params,
                                        const ExtendedExample& example) {
  return params.config().pointer_gen ? example.target_ext_ids
                                     : example.target_ids;
}

namespace {

SourceContext context_for(const ModelParameters& params,
                          const ExtendedExample& ex) {
  return prepare_source(params, ex.source_ids, ex.source_ext_ids,
                        ex.oov_tokens.size());
}

Tensor sum_terms(const std::vector<Tensor>& terms) {
  return terms.empty() ? Tensor::scalar(0.0) : sum(concat(terms));
}

constexpr double kProbFloor = 1e-12;

}  // namespace

LossSum xent_sum(const ModelParameters& params, const ExtendedExample& example,
                 const XentOptions& options, std::mt19937_64* rng) {
  const auto& targets = scoring_targets(params, example);
  if (targets.size() < 2) {
    throw DataError("xent: target needs at least SOS and one token");
  }
  const bool mixes = options.e2e || options.p_dad < 1.0;
  if (mixes && rng == nullptr) {
    throw ContractError("xent: scheduled inputs need a random generator");
  }
  SourceContext ctx = context_for(params, example);
  DecoderState state = initial_state(params, ctx);
  const std::size_t limit = output_size(params, ctx);
  const std::size_t steps = std::min(targets.size() - 1, options.prefix);

  std::vector<Tensor> terms;
  StepOutput prev;
  for (std::size_t t = 0; t < steps; ++t) {
    const int y_true_in = example.target_ext_ids[t];
    Tensor emb;
    if (t == 0 || !mixes) {
      emb = input_embedding(params, y_true_in);
    } else if (options.e2e) {
      emb = uniform01(*rng) < options.p_dad
                ? input_embedding(params, y_true_in)
                : e2e_fused_input(prev.p_vocab, options.e2e_top_k,
                                  params.embedding);
    } else {
      const int y_model =
          static_cast<int>(sample_index(prev.distribution.data(), *rng));
      emb = input_embedding(
          params, scheduled_input(y_true_in, y_model, options.p_dad, *rng));
    }
    StepOutput out = decoder_step_embedded(params, ctx, state, emb);
    const int y = targets[t + 1];
    if (y < 0 || static_cast<std::size_t>(y) >= limit) {
      throw DataError("xent: target id " + std::to_string(y) +
                      " is outside the model's output range [0, " +
                      std::to_string(limit) + ")");
    }
    terms.push_back(scale(
        log_floor(pick(out.distribution, static_cast<std::size_t>(y)),
                  kProbFloor),
        -1.0));
    if (out.coverage_loss.defined() && options.coverage_weight != 0.0) {
      terms.push_back(scale(out.coverage_loss, options.coverage_weight));
    }
    state = out.state;
    prev = std::move(out);
  }
  return {sum_terms(terms), steps};
}

Tensor xent_loss(const ModelParameters& params, const Batch& batch,
                 const XentOptions& options, std::mt19937_64* rng) {
  std::vector<Tensor> sums;
  std::size_t tokens = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    LossSum s = xent_sum(params, batch.example(i), options, rng);
    sums.push_back(s.total);
    tokens += s.tokens;
  }
  if (tokens == 0) throw DataError("xent: batch has no target tokens");
  return scale(sum_terms(sums), 1.0 / static_cast<double>(tokens));
}

Rollout rollout(const ModelParameters& params, const ExtendedExample& example,
                RolloutMode mode, std::size_t t_max, std::mt19937_64* rng,
                std::span<const int> prefix) {
  if (mode == RolloutMode::kSample && rng == nullptr) {
    throw ContractError("rollout: sampling needs a random generator");
  }
  SourceContext ctx = context_for(params, example);
  DecoderState state = initial_state(params, ctx);
  int prev_token = kSosId;
  std::size_t steps = 0;
  for (int forced : prefix) {
    state = decoder_step(params, ctx, state, prev_token).state;
    prev_token = forced;
    ++steps;
  }
  Rollout r;
  std::vector<Tensor> terms;
  for (; steps < t_max; ++steps) {
    StepOutput out = decoder_step(params, ctx, state, prev_token);
    auto probs = out.distribution.data();
    const std::size_t tok = mode == RolloutMode::kSample
                                ? sample_index(probs, *rng)
                                : argmax_index(probs);
    Tensor lp = log_floor(pick(out.distribution, tok), kProbFloor);
    r.log_probs.push_back(lp.item());
    terms.push_back(lp);
    r.tokens.push_back(static_cast<int>(tok));
    r.attention.push_back(out.attention.to_vector());
    state = out.state;
    prev_token = static_cast<int>(tok);
    if (prev_token == kEosId) break;
  }
  r.log_prob_sum = sum_terms(terms);
  return r;
}

std::vector<int> reference_ids(const ExtendedExample& example) {
  const auto& t = example.target_ext_ids;
  if (t.size() < 2) return {};
  return std::vector<int>(t.begin() + 1, t.end() - 1);
}

std::vector<int> strip_eos(const std::vector<int>& ids) {
  auto it = std::find(ids.begin(), ids.end(), kEosId);
  return std::vector<int>(ids.begin(), it);
}

double rouge_reward(const std::vector<std::string>& candidate,
                    const std::vector<std::string>& reference,
                    rouge::Variant variant) {
  return rouge::score(variant, candidate, reference).f1;
}

namespace {

std::vector<std::string> id_strings(const std::vector<int>& ids) {
  std::vector<std::string> out;
  for (int id : strip_eos(ids)) out.push_back(std::to_string(id));
  return out;
}

}  // namespace

double rouge_reward(const std::vector<int>& candidate,
                    const std::vector<int>& reference,
                    rouge::Variant variant) {
  return rouge_reward(id_strings(candidate), id_strings(reference), variant);
}

Tensor policy_gradient_loss(const Tensor& log_prob_sum, double reward,
                            double baseline) {
  return scale(log_prob_sum, -(reward - baseline));
}

Tensor mixed_loss(const Tensor& rl, const Tensor& xent, double gamma) {
  return add(scale(rl, gamma), scale(xent, 1.0 - gamma));
}

std::size_t mixer_plan(std::size_t T, std::size_t delta, std::size_t period,
                       std::size_t epoch, std::size_t warmup) {
  if (delta < 1 || period < 1) {
    throw ConfigError("mixer_plan: delta and period must be >= 1");
  }
  if (epoch < warmup) return T;
  const std::size_t grown = delta * (1 + (epoch - warmup) / period);
  return grown >= T ? 0 : T - grown;
}

ScstTerms scst_terms(const ModelParameters& params,
                     const ExtendedExample& example, std::size_t t_max,
                     std::mt19937_64& rng, rouge::Variant variant) {
  ScstTerms s;
  s.sampled = rollout(params, example, RolloutMode::kSample, t_max, &rng);
  {
    NoGradScope no_grad;
    s.greedy = rollout(params, example, RolloutMode::kGreedy, t_max).tokens;
  }
  const std::vector<int> ref = reference_ids(example);
  s.sampled_reward = rouge_reward(s.sampled.tokens, ref, variant);
  s.greedy_reward = rouge_reward(s.greedy, ref, variant);
  s.loss = policy_gradient_loss(s.sampled.log_prob_sum, s.sampled_reward,
                                s.greedy_reward);
  return s;
}

std::vector<std::vector<int>> greedy_outputs(
    const ModelParameters& params, const std::vector<ExtendedExample>& examples,
    std::size_t t_max) {
  NoGradScope no_grad;
  std::vector<std::vector<int>> out;
  for (const auto& ex : examples) {
    out.push_back(rollout(params, ex, RolloutMode::kGreedy, t_max).tokens);
  }
  return out;
}

CorpusRouge greedy_rouge(const ModelParameters& params,
                         const std::vector<ExtendedExample>& examples,
                         std::size_t t_max) {
  CorpusRouge r;
  if (examples.empty()) return r;
  const auto outputs = greedy_outputs(params, examples, t_max);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto cand = id_strings(outputs[i]);
    const auto ref = id_strings(reference_ids(examples[i]));
    r.rouge1 += rouge::rouge_n(cand, ref, 1).f1;
    r.rouge2 += rouge::rouge_n(cand, ref, 2).f1;
    r.rougeL += rouge::rouge_l(cand, ref).f1;
  }
  const double n = static_cast<double>(examples.size());
  r.rouge1 /= n;
  r.rouge2 /= n;
  r.rougeL /= n;
  return r;
}

// ---------------------------------------------------------------------------
// trainer

Trainer::Trainer(ModelParameters params, TrainerOptions options)
    : params_(std::move(params)), options_(std::move(options)) {
  options_.schedule.validate();
  if (options_.batch_size == 0) {
    throw ConfigError("invariant batch_size >= 1 violated");
  }
  opt_ = OptimizerState::for_parameters(params_, options_.adam);
  params_.set_requires_grad(true);
}

Trainer::Trainer(Checkpoint checkpoint, TrainerOptions options)
    : params_(std::move(checkpoint.params)), options_(std::move(options)) {
  options_.schedule.validate();
  if (options_.batch_size == 0) {
    throw ConfigError("invariant batch_size >= 1 violated");
  }
  opt_ = std::move(checkpoint.optimizer);
  options_.adam = opt_.config;
  progress_ = checkpoint.progress;
  try {
    const auto extra = nlohmann::json::parse(checkpoint.extra_json);
    if (extra.is_object()) {
      ema_ = extra.value("ema", 0.0);
      ema_ready_ = extra.value("ema_ready", false);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint trainer state: ") + e.what());
  }
  params_.set_requires_grad(true);
}

double Trainer::train_batch(std::span<const ExtendedExample> batch,
                            std::mt19937_64& rng) {
  if (batch.empty()) throw ContractError("train_batch: empty batch");
  const TrainingSchedule& sc = options_.schedule;
  const double p_dad = dad_probability(progress_.step, sc.dad_decay,
                                       sc.dad_alpha);
  const std::size_t t_max = options_.max_decode_len;

  XentOptions xo;
  xo.coverage_weight = sc.coverage_weight;
  xo.e2e_top_k = sc.e2e_top_k;
  switch (sc.strategy) {
    case Strategy::kXent: break;
    case Strategy::kE2e: xo.e2e = true; [[fallthrough]];
    default: xo.p_dad = p_dad; break;
  }

  Tape tape;
  Tensor loss;
  {
    Tape::Scope scope(tape);
    std::vector<Tensor> xent_parts, rl_parts;
    std::size_t xent_tokens = 0, rl_tokens = 0, all_tokens = 0;
    for (const ExtendedExample& ex : batch) {
      const std::size_t T = scoring_targets(params_, ex).size() - 1;
      all_tokens += T;
      switch (sc.strategy) {
        case Strategy::kXent:
        case Strategy::kDad:
        case Strategy::kE2e: {
          LossSum s = xent_sum(params_, ex, xo, &rng);
          xent_parts.push_back(s.total);
          xent_tokens += s.tokens;
          break;
        }
        case Strategy::kScst: {
          LossSum s = xent_sum(params_, ex, xo, &rng);
          xent_parts.push_back(s.total);
          xent_tokens += s.tokens;
          ScstTerms st = scst_terms(params_, ex, t_max, rng, sc.reward);
          rl_parts.push_back(st.loss);
          rl_tokens += st.sampled.tokens.size();
          break;
        }
        case Strategy::kReinforce:
        case Strategy::kMixer: {
          std::size_t split = T;
          if (sc.strategy == Strategy::kMixer) {
            split = mixer_plan(T, sc.mixer_delta, sc.mixer_period,
                               progress_.epoch, sc.warmup());
            XentOptions px = xo;
            px.p_dad = 1.0;
            px.prefix = split;
            if (split > 0) {
              LossSum s = xent_sum(params_, ex, px, &rng);
              xent_parts.push_back(s.total);
              xent_tokens += s.tokens;
            }
            if (split >= T) break;
          } else {
            LossSum s = xent_sum(params_, ex, xo, &rng);
            xent_parts.push_back(s.total);
            xent_tokens += s.tokens;
          }
          const auto& tgt = ex.target_ext_ids;
          std::span<const int> prefix;
          if (sc.strategy == Strategy::kMixer) {
            prefix = std::span<const int>(tgt.data() + 1, split);
          }
          Rollout r = rollout(params_, ex, RolloutMode::kSample, t_max, &rng,
                              prefix);
          std::vector<int> full(prefix.begin(), prefix.end());
          full.insert(full.end(), r.tokens.begin(), r.tokens.end());
          const double reward =
              rouge_reward(full, reference_ids(ex), sc.reward);
          const double b = sc.ema_baseline && ema_ready_ ? ema_ : sc.baseline;
          rl_parts.push_back(policy_gradient_loss(r.log_prob_sum, reward, b));
          rl_tokens += r.tokens.size();
          if (sc.ema_baseline) {
            ema_ = ema_ready_ ? sc.ema_decay * ema_ + (1 - sc.ema_decay) * reward
                              : reward;
            ema_ready_ = true;
          }
          break;
        }
      }
    }
    auto mean = [](const std::vector<Tensor>& parts, std::size_t n) {
      return scale(sum_terms(parts), 1.0 / static_cast<double>(std::max<std::size_t>(n, 1)));
    };
    switch (sc.strategy) {
      case Strategy::kXent:
      case Strategy::kDad:
      case Strategy::kE2e:
        loss = mean(xent_parts, xent_tokens);
        break;
      case Strategy::kReinforce:
      case Strategy::kScst:
        loss = mixed_loss(mean(rl_parts, rl_tokens),
                          mean(xent_parts, xent_tokens), sc.gamma);
        break;
      case Strategy::kMixer: {
        std::vector<Tensor> parts = xent_parts;
        parts.insert(parts.end(), rl_parts.begin(), rl_parts.end());
        loss = mean(parts, all_tokens);
        break;
      }
    }
    if (loss.tracked()) tape.backward(loss);
  }
  const double value = loss.item();
  if (!std::isfinite(value)) {
    throw NumericError("training loss is not finite at step " +
                       std::to_string(progress_.step));
  }
  clip_gradients(params_.tensors(), options_.clip_norm);
  adam_step(opt_, params_);
  params_.zero_grad();
  progress_.step += 1;
  return value;
}

EpochMetrics Trainer::run_epoch(const std::vector<ExtendedExample>& train,
                                const std::vector<ExtendedExample>& dev) {
  if (train.empty()) throw ContractError("run_epoch: empty training set");
  std::seed_seq seq{static_cast<std::uint32_t>(options_.seed),
                    static_cast<std::uint32_t>(options_.seed >> 32),
                    static_cast<std::uint32_t>(progress_.epoch),
                    static_cast<std::uint32_t>(progress_.epoch >> 32)};
  std::mt19937_64 rng(seq);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  if (options_.shuffle) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng() % i]);
    }
  }
  double total = 0.0;
  std::size_t batches = 0;
  std::vector<ExtendedExample> batch;
  for (std::size_t start = 0; start < order.size();
       start += options_.batch_size) {
    batch.clear();
    const std::size_t end = std::min(order.size(), start + options_.batch_size);
    for (std::size_t i = start; i < end; ++i) batch.push_back(train[order[i]]);
    total += train_batch(batch, rng);
    ++batches;
  }
  progress_.epoch += 1;
  EpochMetrics m;
  m.epoch = progress_.epoch;
  m.step = progress_.step;
  m.strategy = strategy_name(options_.schedule.strategy);
  m.loss = total / static_cast<double>(batches);
  if (!dev.empty()) {
    CorpusRouge r = greedy_rouge(params_, dev, options_.max_decode_len);
    m.rouge1 = r.rouge1;
    m.rouge2 = r.rouge2;
    m.rougeL = r.rougeL;
  }
  return m;
}

void Trainer::save(const std::string& path) const {
  nlohmann::json extra = {{"ema", ema_}, {"ema_ready", ema_ready_}};
  save_checkpoint_file(path, params_, opt_, progress_, extra.dump());
}

// ---------------------------------------------------------------------------
// metrics log

namespace {

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace

void write_metrics_header(std::ostream& out, const TrainingSchedule& s) {
  out << "# strategy=" << strategy_name(s.strategy)
      << " dad_decay=" << dad_decay_name(s.dad_decay) << " dad=" << num(s.dad_alpha)
      << " gamma=" << num(s.gamma) << " mixer_delta=" << s.mixer_delta
      << " mixer_period=" << s.mixer_period << " mixer_warmup=" << s.warmup()
      << " e2e_top_k=" << s.e2e_top_k
      << " reward=" << rouge::variant_name(s.reward) << '\n';
  out << "epoch,step,strategy,loss,rouge1,rouge2,rougeL\n";
}

void write_metrics_row(std::ostream& out, const EpochMetrics& m) {
  out << m.epoch << ',' << m.step << ',' << m.strategy << ',' << num(m.loss)
      << ',' << num(m.rouge1) << ',' << num(m.rouge2) << ',' << num(m.rougeL)
      << '\n';
}

}  // namespace pgsum
