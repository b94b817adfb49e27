#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pgsum/checkpoint.hpp"
#include "pgsum/optimizer.hpp"
#include "pgsum/parameters.hpp"
#include "pgsum/rouge.hpp"
#include "pgsum/tensor.hpp"
#include "pgsum/textdata.hpp"

namespace pgsum {

enum class Strategy { kXent, kDad, kE2e, kReinforce, kMixer, kScst };
enum class DadDecay { kLinear, kExponential, kInverseSigmoid, kConstant };

std::string strategy_name(Strategy s);
Strategy parse_strategy(const std::string& name);
std::string dad_decay_name(DadDecay d);
DadDecay parse_dad_decay(const std::string& name);

struct TrainingSchedule {
  Strategy strategy = Strategy::kXent;
  // Probability of feeding the ground-truth token. With kConstant the value
  // is dad_alpha itself; 1 means plain teacher forcing.
  DadDecay dad_decay = DadDecay::kConstant;
  double dad_alpha = 1.0;
  std::size_t e2e_top_k = 3;
  std::size_t mixer_delta = 2;
  std::size_t mixer_period = 1;  // epochs per delta increment
  std::size_t mixer_warmup = 0;  // pure-XENT epochs; 0 means mixer_period
  double gamma = 0.99;           // RL weight of the mixed loss
  rouge::Variant reward = rouge::Variant::kRougeL;
  double baseline = 0.0;  // REINFORCE/MIXER constant baseline
  bool ema_baseline = false;
  double ema_decay = 0.9;
  double coverage_weight = 1.0;

  // Throws ConfigError naming the violated invariant.
  void validate() const;
  std::size_t warmup() const { return mixer_warmup ? mixer_warmup : mixer_period; }
};

// Throws ConfigError when alpha cannot keep the schedule inside [0, 1].
double dad_probability(std::uint64_t k, DadDecay decay, double alpha);

// Uniform double in [0, 1) built from the top 53 bits of one draw.
double uniform01(std::mt19937_64& rng);
// Index drawn from an (unnormalized) nonnegative weight vector.
std::size_t sample_index(std::span<const double> weights, std::mt19937_64& rng);
// First index of the maximum.
std::size_t argmax_index(std::span<const double> values);

// Ground truth with probability p_dad, else the model token.
int scheduled_input(int y_true, int y_model, double p_dad,
                    std::mt19937_64& rng);

// Embedding mixture of the k most probable tokens, weights renormalized.
// Throws ContractError for k == 0 or k > |V|.
Tensor e2e_fused_input(const Tensor& p_vocab, std::size_t k,
                       const Tensor& embedding);

struct XentOptions {
  double coverage_weight = 1.0;
  double p_dad = 1.0;  // < 1 mixes in model inputs
  bool e2e = false;    // model inputs are fused top-k embeddings
  std::size_t e2e_top_k = 3;
  // Only the first `prefix` prediction steps are scored.
  std::size_t prefix = static_cast<std::size_t>(-1);
};

struct LossSum {
  Tensor total;  // sum of per-token losses (plus weighted coverage)
  std::size_t tokens = 0;
};

// Target ids used for scoring: extended ids under the pointer, else the
// UNK-mapped ones.
const std::vector<int>& scoring_targets(const ModelParameters& params,
                                        const ExtendedExample& example);

// Summed -log max(P(y_t), 1e-12) over the target steps. Throws DataError for
// a target outside the model's output range. `rng` is needed when model
// inputs can be mixed in.
LossSum xent_sum(const ModelParameters& params, const ExtendedExample& example,
                 const XentOptions& options = {},
                 std::mt19937_64* rng = nullptr);

// Mean per-token loss over every unpadded target position of the batch.
Tensor xent_loss(const ModelParameters& params, const Batch& batch,
                 const XentOptions& options = {},
                 std::mt19937_64* rng = nullptr);

enum class RolloutMode { kSample, kGreedy };

struct Rollout {
  std::vector<int> tokens;  // generated ids, EOS included when emitted
  std::vector<double> log_probs;
  Tensor log_prob_sum;  // differentiable when recorded on a tape
  std::vector<std::vector<double>> attention;
};

// Self-fed decoding; `prefix` ground-truth tokens (after SOS) are forced
// first and are neither scored nor returned.
Rollout rollout(const ModelParameters& params, const ExtendedExample& example,
                RolloutMode mode, std::size_t t_max,
                std::mt19937_64* rng = nullptr,
                std::span<const int> prefix = {});

// Extended reference ids of an example without SOS and EOS.
std::vector<int> reference_ids(const ExtendedExample& example);
// Tokens before the first EOS.
std::vector<int> strip_eos(const std::vector<int>& ids);

double rouge_reward(const std::vector<std::string>& candidate,
                    const std::vector<std::string>& reference,
                    rouge::Variant variant = rouge::Variant::kRougeL);
// Scores id sequences; EOS and anything after it are ignored.
double rouge_reward(const std::vector<int>& candidate,
                    const std::vector<int>& reference,
                    rouge::Variant variant = rouge::Variant::kRougeL);

// -(reward - baseline) * log_prob_sum
Tensor policy_gradient_loss(const Tensor& log_prob_sum, double reward,
                            double baseline);
Tensor mixed_loss(const Tensor& rl, const Tensor& xent, double gamma);

// First step trained with REINFORCE.
std::size_t mixer_plan(std::size_t T, std::size_t delta, std::size_t period,
                       std::size_t epoch, std::size_t warmup);

struct ScstTerms {
  Tensor loss;  // -(R(sample) - R(greedy)) * log P(sample)
  Rollout sampled;
  std::vector<int> greedy;
  double sampled_reward = 0.0;
  double greedy_reward = 0.0;
};

ScstTerms scst_terms(const ModelParameters& params,
                     const ExtendedExample& example, std::size_t t_max,
                     std::mt19937_64& rng,
                     rouge::Variant variant = rouge::Variant::kRougeL);

struct CorpusRouge {
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rougeL = 0.0;
};

std::vector<std::vector<int>> greedy_outputs(
    const ModelParameters& params, const std::vector<ExtendedExample>& examples,
    std::size_t t_max);
// Mean F of greedy outputs against the references.
CorpusRouge greedy_rouge(const ModelParameters& params,
                         const std::vector<ExtendedExample>& examples,
                         std::size_t t_max);

struct TrainerOptions {
  TrainingSchedule schedule;
  AdamConfig adam;
  std::size_t batch_size = 16;
  double clip_norm = 2.0;
  std::size_t max_decode_len = 100;
  std::uint64_t seed = 1;
  bool shuffle = true;
};

struct EpochMetrics {
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;
  std::string strategy;
  double loss = 0.0;
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rougeL = 0.0;
};

class Trainer {
 public:
  Trainer(ModelParameters params, TrainerOptions options);
  // Resumes parameters, moments and counters from a checkpoint.
  Trainer(Checkpoint checkpoint, TrainerOptions options);

  // One pass over `train` in shuffled mini-batches, then greedy ROUGE on
  // `dev` (skipped when empty).
  EpochMetrics run_epoch(const std::vector<ExtendedExample>& train,
                         const std::vector<ExtendedExample>& dev);
  // One update; returns the loss value.
  double train_batch(std::span<const ExtendedExample> batch,
                     std::mt19937_64& rng);

  void save(const std::string& path) const;

  const ModelParameters& params() const { return params_; }
  ModelParameters& params() { return params_; }
  const OptimizerState& optimizer() const { return opt_; }
  const TrainingProgress& progress() const { return progress_; }
  const TrainerOptions& options() const { return options_; }

 private:
  ModelParameters params_;
  TrainerOptions options_;
  OptimizerState opt_;
  TrainingProgress progress_;
  double ema_ = 0.0;
  bool ema_ready_ = false;
};

// `# key=value ...` line naming the schedule, then the CSV header.
void write_metrics_header(std::ostream& out, const TrainingSchedule& schedule);
void write_metrics_row(std::ostream& out, const EpochMetrics& m);

}  // namespace pgsum
