#include "pgsum/encdec.hpp"

#include "pgsum/errors.hpp"
#include "pgsum/pointer.hpp"
#include "pgsum/textdata.hpp"

namespace pgsum {

LstmState lstm_step(const LstmWeights& weights, const Tensor& x,
                    const Tensor& h_prev, const Tensor& c_prev) {
  const std::size_t H = h_prev.size();
  if (weights.w.rank() != 2 || weights.w.dim(0) != 4 * H ||
      weights.w.dim(1) != x.size() + H || c_prev.size() != H) {
    throw DimensionError("lstm_step: weight " +
                         shape_string(weights.w.shape()) +
                         " does not fit input " + shape_string(x.shape()) +
                         " and hidden " + shape_string(h_prev.shape()));
  }
  Tensor gates = add(matmul(weights.w, concat({x, h_prev})), weights.b);
  Tensor i = sigmoid(slice(gates, 0, H));
  Tensor f = sigmoid(slice(gates, H, 2 * H));
  Tensor g = tanh(slice(gates, 2 * H, 3 * H));
  Tensor o = sigmoid(slice(gates, 3 * H, 4 * H));
  LstmState s;
  s.c = add(mul(f, c_prev), mul(i, g));
  s.h = mul(o, tanh(s.c));
  return s;
}

namespace {

int clamp_to_vocab(int id, std::size_t V) {
  return id < 0 || static_cast<std::size_t>(id) >= V ? kUnkId : id;
}

}  // namespace

Tensor input_embedding(const ModelParameters& params, int token) {
  return embedding_row(params.embedding,
                       clamp_to_vocab(token, params.config().vocab_size));
}

EncoderOutput encode(const ModelParameters& params,
                     std::span<const int> source_ids) {
  if (source_ids.empty()) throw ContractError("encode: empty source");
  const std::size_t J = source_ids.size();
  const std::size_t H = params.config().d_hidden;
  std::vector<int> ids(source_ids.begin(), source_ids.end());
  for (int& id : ids) id = clamp_to_vocab(id, params.config().vocab_size);
  Tensor emb = embedding_lookup(params.embedding, ids);

  std::vector<Tensor> fwd(J), bwd(J);
  LstmState f{Tensor::zeros({H}), Tensor::zeros({H})};
  for (std::size_t j = 0; j < J; ++j) {
    f = lstm_step(params.enc_fwd, row(emb, j), f.h, f.c);
    fwd[j] = f.h;
  }
  LstmState b{Tensor::zeros({H}), Tensor::zeros({H})};
  for (std::size_t j = J; j-- > 0;) {
    b = lstm_step(params.enc_bwd, row(emb, j), b.h, b.c);
    bwd[j] = b.h;
  }
  std::vector<Tensor> rows(J);
  for (std::size_t j = 0; j < J; ++j) rows[j] = concat({fwd[j], bwd[j]});

  EncoderOutput out;
  out.states = stack(rows);
  // After the loops f holds position J and b holds position 1.
  out.h0 = tanh(add(matmul(params.bridge_w, concat({f.h, b.h})),
                    params.bridge_b));
  out.c0 = concat({f.c, b.c});
  return out;
}

Tensor attention_hidden(const ModelParameters& params, const Tensor& z_e,
                        const Tensor& z_d, const Tensor& h) {
  Tensor in = z_d.defined() ? concat({z_e, z_d, h}) : concat({z_e, h});
  if (in.size() != params.out_w.dim(1)) {
    throw DimensionError("attention_hidden: input width " +
                         std::to_string(in.size()) + " != " +
                         std::to_string(params.out_w.dim(1)));
  }
  return add(matmul(params.out_w, in), params.out_b);
}

Tensor output_matrix(const ModelParameters& params) {
  if (params.config().weight_sharing) {
    return tanh(matmul(params.embedding, params.proj_w));
  }
  return params.d2v_w;
}

Tensor vocab_distribution(const Tensor& out_matrix, const Tensor& bias,
                          const Tensor& attn_hidden) {
  return softmax(add(matmul(out_matrix, attn_hidden), bias));
}

Tensor vocab_distribution(const ModelParameters& params,
                          const Tensor& attn_hidden) {
  return vocab_distribution(output_matrix(params), params.d2v_b, attn_hidden);
}

SourceContext prepare_source(const ModelParameters& params,
                             std::span<const int> source_ids,
                             std::span<const int> source_ext_ids,
                             std::size_t oov_count) {
  const ModelConfig& cfg = params.config();
  if (!source_ext_ids.empty() && source_ext_ids.size() != source_ids.size()) {
    throw DimensionError("prepare_source: extended ids length differs");
  }
  SourceContext ctx;
  ctx.encoder = encode(params, source_ids);
  ctx.memory = prepare_attention(params.attn, cfg.alignment,
                                 ctx.encoder.states, cfg.coverage);
  ctx.out_matrix = output_matrix(params);
  if (source_ext_ids.empty()) {
    ctx.source_ext_ids.assign(source_ids.begin(), source_ids.end());
  } else {
    ctx.source_ext_ids.assign(source_ext_ids.begin(), source_ext_ids.end());
  }
  ctx.oov_count = oov_count;
  const std::size_t limit = cfg.vocab_size + oov_count;
  for (int id : ctx.source_ext_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= limit) {
      throw IndexError("prepare_source: source id " + std::to_string(id) +
                       " outside extended range [0, " + std::to_string(limit) +
                       ")");
    }
  }
  return ctx;
}

DecoderState initial_state(const ModelParameters& params,
                           const SourceContext& source) {
  DecoderState s;
  s.h = source.encoder.h0;
  s.c = source.encoder.c0;
  s.feed = Tensor::zeros({params.config().decoder_dim()});
  if (params.config().coverage) {
    s.coverage = initial_coverage(source.length());
  }
  return s;
}

std::size_t output_size(const ModelParameters& params,
                        const SourceContext& source) {
  return params.config().vocab_size +
         (params.config().pointer_gen ? source.oov_count : 0);
}

StepOutput decoder_step_embedded(const ModelParameters& params,
                                 const SourceContext& source,
                                 const DecoderState& state,
                                 const Tensor& embedding) {
  const ModelConfig& cfg = params.config();
  StepOutput out;
  DecoderState& next = out.state;
  LstmState lstm =
      lstm_step(params.dec, concat({embedding, state.feed}), state.h, state.c);
  next.h = lstm.h;
  next.c = lstm.c;
  next.step = state.step + 1;

  out.scores = alignment_scores(
      source.memory, lstm.h, cfg.coverage ? state.coverage.coverage : Tensor());
  if (cfg.temporal_attn) {
    TemporalResult t = temporal_attention(out.scores, state.temporal);
    out.attention = t.weights;
    next.temporal = t.history;
  } else {
    out.attention = softmax(out.scores);
  }
  out.context = attention_context(source.memory, out.attention);

  Tensor z_d;
  if (cfg.intra_decoder) {
    IntraResult intra =
        intra_decoder_attention(params.intra, cfg.alignment, state.past, lstm.h);
    out.intra_attention = intra.weights;
    out.intra_context = intra.context;
    z_d = intra.context;
    next.past = state.past;
    next.past.push_back(lstm.h);
  }

  out.attn_hidden = attention_hidden(params, out.context, z_d, lstm.h);
  next.feed = out.attn_hidden;
  out.p_vocab =
      vocab_distribution(source.out_matrix, params.d2v_b, out.attn_hidden);

  if (cfg.pointer_gen) {
    out.p_gen =
        generation_probability(params, out.context, lstm.h, embedding);
    out.distribution =
        extended_distribution(out.p_vocab, out.attention, out.p_gen,
                              source.source_ext_ids, cfg.vocab_size,
                              source.oov_count)
            .probs;
  } else {
    out.distribution = out.p_vocab;
  }

  if (cfg.coverage) {
    CoverageResult c = coverage_step(state.coverage, out.attention);
    out.coverage_loss = c.loss;
    next.coverage = c.state;
  }
  return out;
}

StepOutput decoder_step(const ModelParameters& params,
                        const SourceContext& source, const DecoderState& state,
                        int prev_token) {
  return decoder_step_embedded(params, source, state,
                               input_embedding(params, prev_token));
}

}  // namespace pgsum
