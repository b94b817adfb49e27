#include "pgsum/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <sstream>

#include "pgsum/errors.hpp"

namespace pgsum {

std::string decode_mode_name(DecodeMode m) {
  switch (m) {
    case DecodeMode::kGreedy: return "greedy";
    case DecodeMode::kBeam: return "beam";
    case DecodeMode::kDiverse: return "diverse";
  }
  return "?";
}

DecodeMode parse_decode_mode(const std::string& name) {
  for (DecodeMode m : {DecodeMode::kGreedy, DecodeMode::kBeam,
                       DecodeMode::kDiverse}) {
    if (decode_mode_name(m) == name) return m;
  }
  throw ConfigError("unknown decode mode '" + name +
                    "' (expected greedy, beam or diverse)");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    throw ConfigError(key + ": expected a nonnegative integer, got '" + v + "'");
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

struct Field {
  std::string help;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class Get>
Field size_field(std::string help, Get member) {
  return {std::move(help),
          [member](RunConfig& c, const std::string& k, const std::string& v) {
            member(c) = static_cast<std::size_t>(to_u64(k, v));
          },
          [member](const RunConfig& c) {
            return std::to_string(member(const_cast<RunConfig&>(c)));
          }};
}

template <class Get>
Field double_field(std::string help, Get member) {
  return {std::move(help),
          [member](RunConfig& c, const std::string& k, const std::string& v) {
            member(c) = to_double(k, v);
          },
          [member](const RunConfig& c) {
            return num(member(const_cast<RunConfig&>(c)));
          }};
}

template <class Get>
Field bool_field(std::string help, Get member) {
  return {std::move(help),
          [member](RunConfig& c, const std::string& k, const std::string& v) {
            member(c) = to_bool(k, v);
          },
          [member](const RunConfig& c) {
            return std::string(member(const_cast<RunConfig&>(c)) ? "true"
                                                                 : "false");
          }};
}

template <class Get>
Field string_field(std::string help, Get member) {
  return {std::move(help),
          [member](RunConfig& c, const std::string&, const std::string& v) {
            member(c) = v;
          },
          [member](const RunConfig& c) {
            return member(const_cast<RunConfig&>(c));
          }};
}

#define PG_REF(expr) [](RunConfig& c) -> auto& { return expr; }

const std::vector<std::pair<std::string, Field>>& table() {
  static const std::vector<std::pair<std::string, Field>> fields = {
      // model
      {"model_id",
       {"alignment letter plus five 0/1 flags, e.g. C10101",
        [](RunConfig& c, const std::string&, const std::string& v) {
          c.model.apply_model_id(v);
        },
        [](const RunConfig& c) { return c.model.model_id(); }}},
      {"alignment",
       {"dot, general or concat",
        [](RunConfig& c, const std::string&, const std::string& v) {
          c.model.alignment = parse_alignment(v);
        },
        [](const RunConfig& c) { return alignment_name(c.model.alignment); }}},
      {"pointer", bool_field("pointer-generator copying", PG_REF(c.model.pointer_gen))},
      {"temporal", bool_field("temporal attention", PG_REF(c.model.temporal_attn))},
      {"intra_decoder", bool_field("intra-decoder attention", PG_REF(c.model.intra_decoder))},
      {"weight_sharing", bool_field("share embedding and output matrices", PG_REF(c.model.weight_sharing))},
      {"coverage", bool_field("coverage mechanism", PG_REF(c.model.coverage))},
      {"allow_temporal_with_coverage",
       bool_field("permit temporal attention together with coverage",
                  PG_REF(c.model.allow_temporal_with_coverage))},
      {"d_emb", size_field("embedding width", PG_REF(c.model.d_emb))},
      {"d_hidden", size_field("encoder hidden width per direction", PG_REF(c.model.d_hidden))},
      {"d_align", size_field("concat alignment width (0: decoder width)", PG_REF(c.model.d_align))},
      {"vocab_size", size_field("vocabulary cap", PG_REF(c.model.vocab_size))},
      // data
      {"source_max", size_field("article truncation length", PG_REF(c.limits.source_max))},
      {"target_max", size_field("summary truncation length", PG_REF(c.limits.target_max))},
      // training
      {"strategy",
       {"xent, dad, e2e, reinforce, mixer or scst",
        [](RunConfig& c, const std::string&, const std::string& v) {
          c.trainer.schedule.strategy = parse_strategy(v);
        },
        [](const RunConfig& c) {
          return strategy_name(c.trainer.schedule.strategy);
        }}},
      {"dad_decay",
       {"linear, exponential, inverse_sigmoid or constant",
        [](RunConfig& c, const std::string&, const std::string& v) {
          c.trainer.schedule.dad_decay = parse_dad_decay(v);
        },
        [](const RunConfig& c) {
          return dad_decay_name(c.trainer.schedule.dad_decay);
        }}},
      {"dad", double_field("schedule parameter; ground-truth probability when constant",
                           PG_REF(c.trainer.schedule.dad_alpha))},
      {"e2e_top_k", size_field("tokens fused into the soft input", PG_REF(c.trainer.schedule.e2e_top_k))},
      {"mixer_delta", size_field("steps moved to REINFORCE per increment", PG_REF(c.trainer.schedule.mixer_delta))},
      {"mixer_period", size_field("epochs per increment", PG_REF(c.trainer.schedule.mixer_period))},
      {"mixer_warmup", size_field("cross-entropy epochs before the first increment (0: period)",
                                  PG_REF(c.trainer.schedule.mixer_warmup))},
      {"gamma", double_field("RL weight of the mixed loss", PG_REF(c.trainer.schedule.gamma))},
      {"reward",
       {"rouge1, rouge2 or rougeL",
        [](RunConfig& c, const std::string&, const std::string& v) {
          c.trainer.schedule.reward = rouge::parse_variant(v);
        },
        [](const RunConfig& c) {
          return rouge::variant_name(c.trainer.schedule.reward);
        }}},
      {"baseline", double_field("constant REINFORCE baseline", PG_REF(c.trainer.schedule.baseline))},
      {"ema_baseline", bool_field("moving-average baseline", PG_REF(c.trainer.schedule.ema_baseline))},
      {"ema_decay", double_field("moving-average decay", PG_REF(c.trainer.schedule.ema_decay))},
      {"coverage_weight", double_field("coverage loss weight", PG_REF(c.trainer.schedule.coverage_weight))},
      {"lr", double_field("Adam learning rate", PG_REF(c.trainer.adam.lr))},
      {"beta1", double_field("Adam beta1", PG_REF(c.trainer.adam.beta1))},
      {"beta2", double_field("Adam beta2", PG_REF(c.trainer.adam.beta2))},
      {"eps", double_field("Adam epsilon", PG_REF(c.trainer.adam.eps))},
      {"batch_size", size_field("examples per update", PG_REF(c.trainer.batch_size))},
      {"clip_norm", double_field("global gradient norm cap", PG_REF(c.trainer.clip_norm))},
      {"shuffle", bool_field("shuffle examples each epoch", PG_REF(c.trainer.shuffle))},
      {"epochs", size_field("total training epochs", PG_REF(c.epochs))},
      {"init_scale", double_field("uniform initialization half-width", PG_REF(c.init_scale))},
      {"seed",
       {"random seed",
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.trainer.seed = to_u64(k, v);
        },
        [](const RunConfig& c) { return std::to_string(c.trainer.seed); }}},
      {"max_decode_len",
       {"decoding length limit",
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.trainer.max_decode_len = c.beam.t_max =
              static_cast<std::size_t>(to_u64(k, v));
        },
        [](const RunConfig& c) { return std::to_string(c.beam.t_max); }}},
      // decoding
      {"decode_mode",
       {"greedy, beam or diverse",
        [](RunConfig& c, const std::string&, const std::string& v) {
          c.decode_mode = parse_decode_mode(v);
        },
        [](const RunConfig& c) { return decode_mode_name(c.decode_mode); }}},
      {"beam", size_field("beam size", PG_REF(c.beam.beam))},
      {"length_penalty", double_field("p in score / length^p", PG_REF(c.beam.length_penalty))},
      {"sibling_gamma", double_field("sibling-rank diversity rate", PG_REF(c.beam.sibling_gamma))},
      {"groups", size_field("diverse beam search groups", PG_REF(c.groups))},
      {"diversity_lambda", double_field("diverse beam search penalty", PG_REF(c.diversity_lambda))},
      // paths
      {"train", string_field("training corpus (JSON Lines)", PG_REF(c.train_path))},
      {"dev", string_field("development corpus (JSON Lines)", PG_REF(c.dev_path))},
      {"vocab", string_field("vocabulary file", PG_REF(c.vocab_path))},
      {"input", string_field("corpus to decode (JSON Lines)", PG_REF(c.input_path))},
      {"checkpoint", string_field("checkpoint to decode with", PG_REF(c.checkpoint_path))},
      {"resume", string_field("checkpoint to resume training from", PG_REF(c.resume_path))},
      {"output_dir", string_field("directory for outputs", PG_REF(c.output_dir))},
  };
  return fields;
}

#undef PG_REF

const Field& field(const std::string& key) {
  for (const auto& [k, f] : table()) {
    if (k == key) return f;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

RunConfig::RunConfig() {
  trainer.max_decode_len = beam.t_max;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  field(key).set(*this, key, trim(value));
}

std::string RunConfig::get(const std::string& key) const {
  return field(key).get(*this);
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> out = [] {
    std::vector<std::string> k;
    for (const auto& [name, f] : table()) k.push_back(name);
    return k;
  }();
  return out;
}

std::string RunConfig::help(const std::string& key) { return field(key).help; }

void RunConfig::read(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key = value");
    }
    set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

void RunConfig::read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingFileError("cannot open config " + path);
  read(in);
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  for (const auto& [k, f] : table()) out << k << " = " << f.get(*this) << '\n';
  return out.str();
}

void RunConfig::validate() const {
  model.validate();
  trainer.schedule.validate();
  if (trainer.batch_size == 0) {
    throw ConfigError("invariant batch_size >= 1 violated");
  }
  if (!(init_scale > 0)) throw ConfigError("invariant init_scale > 0 violated");
  if (!(trainer.clip_norm > 0)) {
    throw ConfigError("invariant clip_norm > 0 violated");
  }
  if (beam.beam == 0) throw ConfigError("invariant beam size B >= 1 violated");
  if (decode_mode == DecodeMode::kDiverse) {
    if (groups == 0 || groups > beam.beam || beam.beam % groups != 0) {
      throw ConfigError("invariant G divides B and G <= B violated");
    }
    if (!(diversity_lambda >= 0)) {
      throw ConfigError("invariant lambda_g >= 0 violated");
    }
  }
  if (!(trainer.adam.lr > 0)) throw ConfigError("invariant lr > 0 violated");
}

}  // namespace pgsum
