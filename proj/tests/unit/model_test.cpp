#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "pgsum/attention.hpp"
#include "pgsum/encdec.hpp"
#include "pgsum/errors.hpp"
#include "pgsum/parameters.hpp"
#include "pgsum/pointer.hpp"
#include "pgsum/repetition.hpp"
#include "pgsum/textdata.hpp"

namespace pgsum {
namespace {

ModelConfig micro_config() {
  ModelConfig c;
  c.d_emb = 4;
  c.d_hidden = 3;
  c.vocab_size = 10;
  c.alignment = Alignment::kConcat;
  return c;
}

double total(const Tensor& t) {
  auto d = t.data();
  return std::accumulate(d.begin(), d.end(), 0.0);
}

// Independent closed form for the number of scalars in a model.
std::size_t expected_count(const ModelConfig& c) {
  const std::size_t V = c.vocab_size, E = c.d_emb, H = c.d_hidden, D = 2 * H,
                    K = 2 * H, A = c.d_align ? c.d_align : D;
  std::size_t n = V * E;
  n += 2 * (4 * H * (E + H) + 4 * H);
  n += D * 2 * H + D;
  n += 4 * D * (E + D + D) + 4 * D;
  auto align = [&](std::size_t key, bool cov) -> std::size_t {
    switch (c.alignment) {
      case Alignment::kDot: return 0;
      case Alignment::kGeneral: return key * D;
      case Alignment::kConcat: return A * (key + D + (cov ? 1 : 0)) + 2 * A;
    }
    return 0;
  };
  n += align(K, c.coverage);
  if (c.intra_decoder) n += align(D, false);
  n += D * (K + (c.intra_decoder ? D : 0) + D) + D;
  n += c.weight_sharing ? E * D : V * D;
  n += V;
  if (c.pointer_gen) n += K + D + E + 1;
  return n;
}

// ---------------------------------------------------------------------------
// config

TEST(ModelConfig, CoverageRequiresConcat) {
  ModelConfig c = micro_config();
  c.alignment = Alignment::kGeneral;
  c.coverage = true;
  try {
    c.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("coverage => alignment == concat"),
              std::string::npos);
  }
}

TEST(ModelConfig, TemporalAndCoverageNeedOverride) {
  ModelConfig c = micro_config();
  c.coverage = true;
  c.temporal_attn = true;
  EXPECT_THROW(c.validate(), ConfigError);
  c.allow_temporal_with_coverage = true;
  EXPECT_NO_THROW(c.validate());
}

TEST(ModelConfig, ModelIdRoundTrip) {
  ModelConfig c;
  c.apply_model_id("C10101");
  EXPECT_EQ(c.alignment, Alignment::kConcat);
  EXPECT_TRUE(c.pointer_gen);
  EXPECT_FALSE(c.temporal_attn);
  EXPECT_TRUE(c.intra_decoder);
  EXPECT_FALSE(c.weight_sharing);
  EXPECT_TRUE(c.coverage);
  EXPECT_EQ(c.model_id(), "C10101");
  c.apply_model_id("g11010");
  EXPECT_EQ(c.model_id(), "G11010");
  EXPECT_THROW(c.apply_model_id("X10101"), ConfigError);
  EXPECT_THROW(c.apply_model_id("C1010"), ConfigError);
  EXPECT_THROW(c.apply_model_id("C10201"), ConfigError);
}

// ---------------------------------------------------------------------------
// parameters

class ParameterCount : public ::testing::TestWithParam<std::string> {};

TEST_P(ParameterCount, MatchesClosedForm) {
  ModelConfig c = micro_config();
  c.apply_model_id(GetParam());
  ModelParameters p(c);
  EXPECT_EQ(p.count(), expected_count(c));
}

INSTANTIATE_TEST_SUITE_P(Ids, ParameterCount,
                         ::testing::Values("D00000", "G00000", "C00000",
                                           "G10000", "C11000", "C10101",
                                           "G11110", "D10110", "C10011"));

TEST(Parameters, AlignmentCostsFollowFormula) {
  ModelConfig c = micro_config();
  c.d_align = 5;
  const std::size_t K = c.encoder_dim(), D = c.decoder_dim();
  c.alignment = Alignment::kDot;
  const std::size_t dot = ModelParameters(c).count();
  c.alignment = Alignment::kGeneral;
  EXPECT_EQ(ModelParameters(c).count() - dot, K * D);
  c.alignment = Alignment::kConcat;
  EXPECT_EQ(ModelParameters(c).count() - dot, (K + D) * 5 + 2 * 5);
}

TEST(Parameters, SharingSwapsOutputMatrix) {
  ModelConfig c = micro_config();
  const std::size_t plain = ModelParameters(c).count();
  c.weight_sharing = true;
  const std::size_t shared = ModelParameters(c).count();
  EXPECT_EQ(plain - shared, (c.vocab_size - c.d_emb) * c.decoder_dim());
}

TEST(Parameters, NamesAreUnique) {
  ModelConfig c = micro_config();
  c.apply_model_id("C11111");
  c.allow_temporal_with_coverage = true;
  ModelParameters p(c);
  std::set<std::string> names;
  for (auto& [n, t] : p.named()) EXPECT_TRUE(names.insert(n).second) << n;
  EXPECT_THROW(p.get("nope"), IndexError);
  EXPECT_EQ(p.get("embedding").shape(), (Shape{10, 4}));
}

TEST(Parameters, InitIsSeededAndBounded) {
  ModelParameters a(micro_config()), b(micro_config()), c(micro_config());
  a.init_uniform(7, 0.1);
  b.init_uniform(7, 0.1);
  c.init_uniform(8, 0.1);
  EXPECT_EQ(a.embedding.to_vector(), b.embedding.to_vector());
  EXPECT_NE(a.embedding.to_vector(), c.embedding.to_vector());
  for (const Tensor& t : a.tensors()) {
    for (double x : t.data()) EXPECT_LE(std::abs(x), 0.1);
  }
}

TEST(Parameters, CloneIsDeep) {
  ModelParameters a(micro_config());
  a.init_uniform(1);
  ModelParameters b = a.clone();
  Tensor(b.embedding).mutable_data()[0] = 42.0;
  EXPECT_NE(a.embedding.at(0), 42.0);
}

// ---------------------------------------------------------------------------
// lstm / encoder

TEST(Lstm, ZeroWeightsGiveZeroHidden) {
  LstmWeights w{Tensor::zeros({12, 7}), Tensor::zeros({12})};
  LstmState s = lstm_step(w, Tensor::full({4}, 0.7), Tensor::zeros({3}),
                          Tensor::zeros({3}));
  for (double x : s.h.data()) EXPECT_EQ(x, 0.0);
  for (double x : s.c.data()) EXPECT_EQ(x, 0.0);
}

TEST(Lstm, SaturatedForgetKeepsCell) {
  const std::size_t H = 3;
  std::vector<double> bias(4 * H, 0.0);
  for (std::size_t i = 0; i < H; ++i) {
    bias[i] = -60.0;     // input gate closed
    bias[H + i] = 60.0;  // forget gate open
  }
  LstmWeights w{Tensor::zeros({4 * H, 2 + H}), Tensor::vector(bias)};
  Tensor c = Tensor::vector({0.3, -1.2, 2.0});
  LstmState s = lstm_step(w, Tensor::full({2}, 1.0), Tensor::zeros({H}), c);
  for (std::size_t i = 0; i < H; ++i) EXPECT_NEAR(s.c.at(i), c.at(i), 1e-12);
}

TEST(Lstm, RejectsMismatchedDims) {
  LstmWeights w{Tensor::zeros({12, 7}), Tensor::zeros({12})};
  EXPECT_THROW(lstm_step(w, Tensor::zeros({5}), Tensor::zeros({3}),
                         Tensor::zeros({3})),
               DimensionError);
}

TEST(Lstm, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  auto rnd = [&](Shape s) {
    std::vector<double> v(shape_size(s));
    for (double& x : v) x = u(rng);
    return Tensor(s, v);
  };
  LstmWeights w{rnd({12, 5}), rnd({12})};
  Tensor x = rnd({2}), h = rnd({3}), c = rnd({3}), r = rnd({3});
  auto f = [&] {
    LstmState s = lstm_step(w, x, h, c);
    return add(dot(s.h, r), sum(s.c));
  };
  EXPECT_LT(grad_check(f, {w.w, w.b, x, h, c}).max_relative_error, 1e-4);
}

TEST(Encoder, SingleTokenStates) {
  ModelParameters p(micro_config());
  p.init_uniform(2, 0.5);
  const int ids[] = {5};
  EncoderOutput e = encode(p, ids);
  EXPECT_EQ(e.states.shape(), (Shape{1, 6}));
  EXPECT_EQ(e.h0.shape(), (Shape{6}));
  EXPECT_EQ(e.c0.shape(), (Shape{6}));
  EXPECT_THROW(encode(p, std::span<const int>()), ContractError);
}

TEST(Encoder, ReversalSwapsDirectionsWhenWeightsMatch) {
  ModelParameters p(micro_config());
  p.init_uniform(4, 0.5);
  // Same weights both ways: reversing the input swaps the two halves.
  auto bw = Tensor(p.enc_bwd.w).mutable_data();
  auto fw = p.enc_fwd.w.data();
  std::copy(fw.begin(), fw.end(), bw.begin());
  auto bb = Tensor(p.enc_bwd.b).mutable_data();
  auto fb = p.enc_fwd.b.data();
  std::copy(fb.begin(), fb.end(), bb.begin());
  const std::vector<int> ids = {4, 7, 5, 9};
  const std::vector<int> rev(ids.rbegin(), ids.rend());
  EncoderOutput a = encode(p, ids), b = encode(p, rev);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_DOUBLE_EQ(a.c0.at(i), b.c0.at(3 + i));
    EXPECT_DOUBLE_EQ(a.c0.at(3 + i), b.c0.at(i));
  }
  for (std::size_t j = 0; j < 4; ++j) {
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_DOUBLE_EQ(a.states.at(j * 6 + i), b.states.at((3 - j) * 6 + 3 + i));
    }
  }
}

TEST(Encoder, GradientReachesEverySourceEmbedding) {
  ModelParameters p(micro_config());
  p.init_uniform(5, 0.5);
  p.set_requires_grad(true);
  const std::vector<int> ids = {4, 6, 8};
  Tape tape;
  {
    Tape::Scope scope(tape);
    EncoderOutput e = encode(p, ids);
    tape.backward(sum(e.h0));
  }
  auto g = p.embedding.grad();
  for (int id : ids) {
    double norm = 0;
    for (std::size_t k = 0; k < 4; ++k) norm += std::abs(g[id * 4 + k]);
    EXPECT_GT(norm, 0.0) << id;
  }
}

// ---------------------------------------------------------------------------
// attention

TEST(Attention, SingleKeyGetsAllMass) {
  ModelConfig c = micro_config();
  for (const char* id : {"D00000", "G00000", "C00000"}) {
    c.apply_model_id(id);
    ModelParameters p(c);
    p.init_uniform(9, 0.5);
    Tensor keys = Tensor::matrix(1, 6, {1, 2, 3, 4, 5, 6});
    AttentionResult r =
        attend(p.attn, c.alignment, keys, Tensor::full({6}, 0.3));
    EXPECT_DOUBLE_EQ(r.weights.at(0), 1.0);
    EXPECT_EQ(r.context.to_vector(), keys.to_vector());
  }
}

TEST(Attention, EqualScoresGiveUniformMean) {
  Tensor keys = Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 9});
  AttentionResult r =
      attend(AlignmentWeights{}, Alignment::kDot, keys, Tensor::zeros({2}));
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(r.weights.at(j), 1.0 / 3, 1e-15);
  EXPECT_NEAR(r.context.at(0), 3.0, 1e-12);
  EXPECT_NEAR(r.context.at(1), 5.0, 1e-12);
}

TEST(Attention, DotPicksMatchingOrthonormalRow) {
  Tensor keys = Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  AttentionResult r = attend(AlignmentWeights{}, Alignment::kDot, keys,
                             Tensor::vector({0, 1, 0}));
  EXPECT_GT(r.weights.at(1), r.weights.at(0));
  EXPECT_GT(r.weights.at(1), r.weights.at(2));
}

TEST(Attention, DotDimensionMismatchIsConfigError) {
  Tensor keys = Tensor::zeros({3, 4});
  EXPECT_THROW(
      attend(AlignmentWeights{}, Alignment::kDot, keys, Tensor::zeros({3})),
      ConfigError);
}

TEST(Attention, CoverageOnlyWithConcat) {
  Tensor keys = Tensor::zeros({3, 4});
  AlignmentWeights g{Tensor::zeros({4, 4}), {}, {}};
  AttentionMemory m = prepare_attention(g, Alignment::kGeneral, keys);
  EXPECT_THROW(alignment_scores(m, Tensor::zeros({4}), Tensor::zeros({3})),
               ContractError);
}

TEST(Attention, WeightsOnSimplexUnderFuzz) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int trial = 0; trial < 200; ++trial) {
    ModelConfig c = micro_config();
    c.alignment = static_cast<Alignment>(trial % 3);
    c.coverage = c.alignment == Alignment::kConcat && trial % 2;
    ModelParameters p(c);
    p.init_uniform(trial, 2.0);
    const std::size_t J = 1 + trial % 7;
    std::vector<double> kv(J * 6), q(6), cov(J);
    for (double& x : kv) x = u(rng);
    for (double& x : q) x = u(rng);
    for (double& x : cov) x = std::abs(u(rng));
    AttentionResult r =
        attend(p.attn, c.alignment, Tensor({J, 6}, kv), Tensor::vector(q),
               c.coverage ? Tensor::vector(cov) : Tensor());
    for (double a : r.weights.data()) EXPECT_GE(a, 0.0);
    EXPECT_NEAR(total(r.weights), 1.0, 1e-9);
  }
}

// ---------------------------------------------------------------------------
// vocabulary distribution and decoder step

TEST(VocabDistribution, ZeroWeightsAreUniform) {
  ModelParameters p(micro_config());
  Tensor pv = vocab_distribution(p, Tensor::full({6}, 0.4));
  for (double x : pv.data()) EXPECT_DOUBLE_EQ(x, 0.1);
}

TEST(VocabDistribution, SumsToOne) {
  ModelConfig c = micro_config();
  c.weight_sharing = true;
  ModelParameters p(c);
  p.init_uniform(3, 1.0);
  Tensor pv = vocab_distribution(p, Tensor::vector({1, -2, 0.5, 3, 0, -1}));
  EXPECT_NEAR(total(pv), 1.0, 1e-9);
}

TEST(DecoderStep, FirstStepFeedsZeroAttentionHidden) {
  ModelParameters p(micro_config());
  p.init_uniform(6, 0.5);
  const std::vector<int> src = {4, 5, 6};
  SourceContext ctx = prepare_source(p, src);
  DecoderState s = initial_state(p, ctx);
  for (double x : s.feed.data()) EXPECT_EQ(x, 0.0);
  EXPECT_EQ(s.feed.size(), 6u);
}

TEST(DecoderStep, IsDeterministic) {
  ModelConfig c = micro_config();
  c.apply_model_id("C11100");
  ModelParameters p(c);
  p.init_uniform(6, 0.5);
  const std::vector<int> src = {4, 5, 6, 10}, ext = {4, 5, 6, 10};
  SourceContext ctx = prepare_source(p, src, ext, 1);
  DecoderState s = initial_state(p, ctx);
  StepOutput a = decoder_step(p, ctx, s, kSosId);
  StepOutput b = decoder_step(p, ctx, s, kSosId);
  EXPECT_EQ(a.distribution.to_vector(), b.distribution.to_vector());
  StepOutput a2 = decoder_step(p, ctx, a.state, 10);
  StepOutput b2 = decoder_step(p, ctx, b.state, 10);
  EXPECT_EQ(a2.distribution.to_vector(), b2.distribution.to_vector());
}

TEST(DecoderStep, CopiedOovFeedsUnkEmbedding) {
  ModelConfig c = micro_config();
  c.apply_model_id("G10000");
  ModelParameters p(c);
  p.init_uniform(6, 0.5);
  const std::vector<int> src = {4, 3}, ext = {4, 10};
  SourceContext ctx = prepare_source(p, src, ext, 1);
  DecoderState s = initial_state(p, ctx);
  StepOutput a = decoder_step(p, ctx, s, 10);
  StepOutput b = decoder_step(p, ctx, s, kUnkId);
  EXPECT_EQ(a.distribution.to_vector(), b.distribution.to_vector());
  EXPECT_EQ(a.distribution.size(), 11u);
}

TEST(DecoderStep, RejectsOutOfRangeSourceIds) {
  ModelParameters p(micro_config());
  const std::vector<int> src = {4, 3}, ext = {4, 11};
  EXPECT_THROW(prepare_source(p, src, ext, 1), IndexError);
}

// Teacher-forced negative log-likelihood over a few steps, with the
// coverage penalty when enabled.
Tensor rollout_loss(const ModelParameters& p, const std::vector<int>& src,
                    const std::vector<int>& ext, std::size_t oov,
                    const std::vector<int>& target) {
  SourceContext ctx = prepare_source(p, src, ext, oov);
  DecoderState s = initial_state(p, ctx);
  Tensor loss = Tensor::scalar(0.0);
  for (std::size_t t = 0; t + 1 < target.size(); ++t) {
    StepOutput o = decoder_step(p, ctx, s, target[t]);
    loss = sub(loss, log(pick(o.distribution,
                              static_cast<std::size_t>(target[t + 1]))));
    if (o.coverage_loss.defined()) loss = add(loss, o.coverage_loss);
    s = o.state;
  }
  return loss;
}

class RolloutGradient : public ::testing::TestWithParam<std::string> {};

TEST_P(RolloutGradient, MatchesFiniteDifferences) {
  ModelConfig c = micro_config();
  c.apply_model_id(GetParam());
  c.allow_temporal_with_coverage = true;
  ModelParameters p(c);
  p.init_uniform(21, 0.5);
  const std::vector<int> src = {4, 3, 6, 3}, ext = {4, 10, 6, 11};
  const std::vector<int> tgt = {kSosId, 10, 5, 11};
  GradCheckResult r =
      grad_check([&] { return rollout_loss(p, src, ext, 2, tgt); },
                 p.tensors());
  EXPECT_LT(r.max_relative_error, 1e-4)
      << p.named()[r.worst_parameter].first << "[" << r.worst_index
      << "] analytic " << r.analytic << " numeric " << r.numeric;
}

INSTANTIATE_TEST_SUITE_P(Ids, RolloutGradient,
                         ::testing::Values("C10000", "C11000", "C10100",
                                           "C10010", "C10001", "C11111",
                                           "G10110", "D11100"));

// ---------------------------------------------------------------------------
// pointer

TEST(Pointer, ZeroSwitchIsHalf) {
  ModelConfig c = micro_config();
  c.pointer_gen = true;
  ModelParameters p(c);
  Tensor g = generation_probability(p, Tensor::full({6}, 1.0),
                                    Tensor::full({6}, -2.0),
                                    Tensor::full({4}, 3.0));
  EXPECT_DOUBLE_EQ(g.item(), 0.5);
}

TEST(Pointer, SwitchIncreasesWithBias) {
  ModelConfig c = micro_config();
  c.pointer_gen = true;
  ModelParameters p(c);
  p.init_uniform(1, 0.5);
  Tensor z = Tensor::full({6}, 0.2), h = Tensor::full({6}, 0.1),
         e = Tensor::full({4}, 0.3);
  double prev = 0.0;
  for (double b : {-40.0, -1.0, 0.0, 2.0, 40.0}) {
    Tensor(p.switch_b).mutable_data()[0] = b;
    const double g = generation_probability(p, z, h, e).item();
    EXPECT_GE(g, prev);
    prev = g;
  }
  EXPECT_NEAR(prev, 1.0, 1e-12);
}

TEST(Pointer, SwitchBiasDerivative) {
  ModelConfig c = micro_config();
  c.pointer_gen = true;
  ModelParameters p(c);
  p.init_uniform(2, 0.5);
  Tensor z = Tensor::full({6}, 0.2), h = Tensor::full({6}, 0.1),
         e = Tensor::full({4}, 0.3);
  const double g = generation_probability(p, z, h, e).item();
  Tape tape;
  {
    Tape::Scope scope(tape);
    Tensor(p.switch_b).set_requires_grad(true);
    tape.backward(generation_probability(p, z, h, e));
  }
  EXPECT_NEAR(p.switch_b.grad()[0], g * (1 - g), 1e-12);
  Tensor(p.switch_b).zero_grad();
  EXPECT_LT(grad_check([&] { return generation_probability(p, z, h, e); },
                       {p.switch_b})
                .max_relative_error,
            1e-6);
}

TEST(Pointer, FullGenerationPadsVocab) {
  Tensor pv = Tensor::vector({0.1, 0.2, 0.3, 0.4});
  const int ids[] = {1, 4};
  ExtendedDistribution d = extended_distribution(
      pv, Tensor::vector({0.5, 0.5}), Tensor::scalar(1.0), ids, 4, 2);
  EXPECT_EQ(d.probs.to_vector(),
            (std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.0, 0.0}));
}

TEST(Pointer, DuplicateSourceTokensAccumulate) {
  Tensor pv = Tensor::vector({0.25, 0.25, 0.25, 0.25});
  const int ids[] = {5, 5};
  ExtendedDistribution d = extended_distribution(
      pv, Tensor::vector({0.3, 0.7}), Tensor::scalar(0.0), ids, 4, 2);
  EXPECT_DOUBLE_EQ(d.probs.at(5), 1.0);
  EXPECT_DOUBLE_EQ(d.probs.at(4), 0.0);
}

TEST(Pointer, OutOfRangeSourceIdThrows) {
  const int ids[] = {6};
  EXPECT_THROW(extended_distribution(Tensor::full({4}, 0.25),
                                     Tensor::vector({1.0}),
                                     Tensor::scalar(0.5), ids, 4, 2),
               IndexError);
}

TEST(Pointer, FuzzedMixtureSumsToOneAndIsMonotone) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t V = 4 + trial % 5, J = 1 + trial % 6, oov = trial % 3;
    std::vector<double> pv(V), a(J);
    for (double& x : pv) x = u(rng);
    for (double& x : a) x = u(rng);
    const double sp = std::accumulate(pv.begin(), pv.end(), 0.0);
    const double sa = std::accumulate(a.begin(), a.end(), 0.0);
    for (double& x : pv) x /= sp;
    for (double& x : a) x /= sa;
    std::vector<int> ids(J);
    for (int& id : ids) id = static_cast<int>(rng() % (V + oov));
    auto at = [&](double g) {
      return extended_distribution(Tensor::vector(pv), Tensor::vector(a),
                                   Tensor::scalar(g), ids, V, oov)
          .probs.to_vector();
    };
    const auto lo = at(0.4), hi = at(0.6);
    EXPECT_NEAR(std::accumulate(lo.begin(), lo.end(), 0.0), 1.0, 1e-8);
    for (std::size_t w = 0; w < V; ++w) {
      if (std::find(ids.begin(), ids.end(), static_cast<int>(w)) == ids.end()) {
        EXPECT_GE(hi[w], lo[w]);
      }
    }
  }
}

TEST(Pointer, GradientReachesBothBranches) {
  ModelConfig c = micro_config();
  c.apply_model_id("C10000");
  ModelParameters p(c);
  p.init_uniform(8, 0.5);
  p.set_requires_grad(true);
  const std::vector<int> src = {4, 3, 6}, ext = {4, 10, 6};
  Tape tape;
  {
    Tape::Scope scope(tape);
    tape.backward(rollout_loss(p, src, ext, 1, {kSosId, 10, 6}));
  }
  auto nonzero = [](const Tensor& t) {
    for (double g : t.grad()) {
      if (g != 0.0) return true;
    }
    return false;
  };
  EXPECT_TRUE(nonzero(p.d2v_w));
  EXPECT_TRUE(nonzero(p.attn.v));
  EXPECT_TRUE(nonzero(p.switch_b));
}

TEST(ReplaceUnknown, IdentityWithoutUnk) {
  std::vector<std::string> s = {"a", "b"};
  EXPECT_EQ(replace_unknown(s, {}, {"x"}), s);
}

TEST(ReplaceUnknown, UsesAttentionArgmax) {
  std::vector<std::string> s = {"a", kUnkToken};
  std::vector<std::vector<double>> att = {{1, 0, 0, 0}, {0.1, 0.2, 0.1, 0.6}};
  std::vector<std::string> src = {"w", "x", "y", "z"};
  EXPECT_EQ(replace_unknown(s, att, src),
            (std::vector<std::string>{"a", "z"}));
  // ties resolve to the first position
  att[1] = {0.4, 0.4, 0.1, 0.1};
  EXPECT_EQ(replace_unknown(s, att, src)[1], "w");
}

TEST(ReplaceUnknown, MissingRecordIsContractError) {
  std::vector<std::string> s = {kUnkToken, kUnkToken};
  EXPECT_THROW(replace_unknown(s, {{1.0}}, {"w"}), ContractError);
}

TEST(ReplaceUnknown, FuzzedOutputHasNoUnk) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t J = 1 + trial % 5, T = trial % 7;
    std::vector<std::string> src(J), sum(T);
    for (std::size_t j = 0; j < J; ++j) src[j] = "s" + std::to_string(j);
    std::vector<std::vector<double>> att(T, std::vector<double>(J));
    for (std::size_t t = 0; t < T; ++t) {
      sum[t] = rng() % 2 ? kUnkToken : "w";
      for (double& a : att[t]) a = u(rng);
    }
    for (const auto& tok : replace_unknown(sum, att, src)) {
      EXPECT_NE(tok, kUnkToken);
    }
  }
}

// ---------------------------------------------------------------------------
// repetition

TEST(Temporal, FirstStepExample) {
  TemporalResult r =
      temporal_attention(Tensor::vector({0.0, std::log(2.0)}), {});
  EXPECT_NEAR(r.weights.at(0), 1.0 / 3, 1e-15);
  EXPECT_NEAR(r.weights.at(1), 2.0 / 3, 1e-15);
  EXPECT_EQ(r.weights.to_vector(),
            softmax(Tensor::vector({0.0, std::log(2.0)})).to_vector());
}

TEST(Temporal, HeavyPastSuppressesPosition) {
  TemporalHistory h{Tensor::vector({50.0, 0.0})};
  TemporalResult r = temporal_attention(Tensor::vector({1.0, 1.0}), h);
  EXPECT_LT(r.weights.at(0), 1e-15);
  EXPECT_NEAR(r.weights.at(1), 1.0, 1e-15);
}

TEST(Temporal, HistoryGrowsAndWeightsStayOnSimplex) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-20, 20);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t J = 1 + trial % 6;
    TemporalHistory h;
    for (int t = 0; t < 6; ++t) {
      std::vector<double> s(J);
      for (double& x : s) x = u(rng);
      TemporalResult r = temporal_attention(Tensor::vector(s), h);
      EXPECT_NEAR(total(r.weights), 1.0, 1e-9);
      for (double a : r.weights.data()) EXPECT_GE(a, 0.0);
      if (!h.empty()) {
        for (std::size_t j = 0; j < J; ++j) {
          EXPECT_GE(r.history.log_sum.at(j), h.log_sum.at(j));
        }
      }
      h = r.history;
    }
  }
}

TEST(Temporal, SurvivesLargeScores) {
  TemporalHistory h{Tensor::vector({900.0, 1000.0})};
  TemporalResult r = temporal_attention(Tensor::vector({1000.0, 1000.0}), h);
  EXPECT_NEAR(total(r.weights), 1.0, 1e-12);
  EXPECT_TRUE(std::isfinite(r.history.log_sum.at(1)));
}

TEST(Intra, FirstStepHasZeroContext) {
  IntraResult r = intra_decoder_attention(AlignmentWeights{}, Alignment::kDot,
                                          {}, Tensor::full({3}, 1.0));
  EXPECT_FALSE(r.weights.defined());
  EXPECT_EQ(r.context.to_vector(), (std::vector<double>{0, 0, 0}));
}

TEST(Intra, SinglePastState) {
  Tensor h1 = Tensor::vector({0.1, 0.2, 0.3});
  IntraResult r = intra_decoder_attention(AlignmentWeights{}, Alignment::kDot,
                                          {h1}, Tensor::full({3}, 1.0));
  EXPECT_DOUBLE_EQ(r.weights.at(0), 1.0);
  EXPECT_EQ(r.context.to_vector(), h1.to_vector());
}

TEST(Intra, IdenticalPastStatesAreUniform) {
  Tensor h1 = Tensor::vector({0.1, 0.2, 0.3});
  IntraResult r = intra_decoder_attention(
      AlignmentWeights{}, Alignment::kDot, {h1, h1, h1}, Tensor::full({3}, 2.0));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(r.weights.at(i), 1.0 / 3, 1e-15);
}

TEST(Intra, EarlierHiddenChangesLaterWeights) {
  ModelConfig c = micro_config();
  c.intra_decoder = true;
  ModelParameters p(c);
  p.init_uniform(12, 0.8);
  Tensor h1 = Tensor::vector({0.1, 0.2, 0.3, -0.1, 0.5, 0.0});
  Tensor h2 = Tensor::vector({-0.3, 0.1, 0.0, 0.2, 0.2, 0.4});
  Tensor h3 = Tensor::vector({0.2, 0.2, -0.2, 0.1, 0.0, 0.3});
  IntraResult a = intra_decoder_attention(p.intra, c.alignment, {h1, h2}, h3);
  Tensor h1b = add(h1, Tensor::full({6}, 0.05));
  IntraResult b = intra_decoder_attention(p.intra, c.alignment, {h1b, h2}, h3);
  EXPECT_NE(a.weights.at(0), b.weights.at(0));
}

TEST(Coverage, FirstStepLossIsZero) {
  CoverageResult r =
      coverage_step(initial_coverage(3), Tensor::vector({0.2, 0.3, 0.5}));
  EXPECT_EQ(r.loss.item(), 0.0);
  EXPECT_EQ(r.state.coverage.to_vector(), (std::vector<double>{0.2, 0.3, 0.5}));
}

TEST(Coverage, RepeatedAttentionHitsBound) {
  Tensor a = Tensor::vector({0.2, 0.3, 0.5});
  CoverageResult r1 = coverage_step(initial_coverage(3), a);
  CoverageResult r2 = coverage_step(r1.state, a);
  EXPECT_NEAR(r2.loss.item(), 1.0, 1e-15);
  EXPECT_NEAR(r2.state.total_loss.item(), 1.0, 1e-15);
}

TEST(Coverage, NegativeCoverageRejected) {
  CoverageState s = initial_coverage(2);
  s.coverage = Tensor::vector({0.1, -0.1});
  EXPECT_THROW(coverage_step(s, Tensor::vector({0.5, 0.5})), ContractError);
}

TEST(Coverage, FuzzedLossBoundedAndMassAccumulates) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t J = 1 + trial % 8;
    CoverageState s = initial_coverage(J);
    for (int t = 1; t <= 8; ++t) {
      std::vector<double> a(J);
      for (double& x : a) x = u(rng);
      const double z = std::accumulate(a.begin(), a.end(), 0.0);
      for (double& x : a) x /= z;
      CoverageResult r = coverage_step(s, Tensor::vector(a));
      EXPECT_GE(r.loss.item(), 0.0);
      EXPECT_LE(r.loss.item(), 1.0 + 1e-12);
      EXPECT_NEAR(total(r.state.coverage), t, 1e-6);
      s = r.state;
    }
  }
}

}  // namespace
}  // namespace pgsum
