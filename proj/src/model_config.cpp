#include "pgsum/model_config.hpp"

#include <algorithm>
#include <cctype>

#include "json.hpp"

#include "pgsum/errors.hpp"

namespace pgsum {

std::string alignment_name(Alignment a) {
  switch (a) {
    case Alignment::kDot: return "dot";
    case Alignment::kGeneral: return "general";
    case Alignment::kConcat: return "concat";
  }
  return "?";
}

Alignment parse_alignment(const std::string& name) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (s == "dot") return Alignment::kDot;
  if (s == "general") return Alignment::kGeneral;
  if (s == "concat") return Alignment::kConcat;
  throw ConfigError("unknown alignment '" + name +
                    "' (expected dot, general or concat)");
}

std::size_t ModelConfig::output_feed_input() const {
  return encoder_dim() + (intra_decoder ? decoder_dim() : 0) + decoder_dim();
}

void ModelConfig::validate() const {
  if (d_emb == 0) throw ConfigError("invariant d_emb > 0 violated");
  if (d_hidden == 0) throw ConfigError("invariant d_hidden > 0 violated");
  if (vocab_size < 4) {
    throw ConfigError("invariant vocab_size >= 4 violated (reserved tokens)");
  }
  if (coverage && alignment != Alignment::kConcat) {
    throw ConfigError(
        "invariant coverage => alignment == concat violated (alignment is " +
        alignment_name(alignment) + ")");
  }
  if (alignment == Alignment::kDot && encoder_dim() != decoder_dim()) {
    throw ConfigError(
        "invariant dot => encoder dim == decoder dim violated");
  }
  if (coverage && temporal_attn && !allow_temporal_with_coverage) {
    throw ConfigError(
        "invariant not (coverage and temporal_attn) violated; set "
        "allow_temporal_with_coverage to override");
  }
}

std::string ModelConfig::model_id() const {
  std::string id;
  switch (alignment) {
    case Alignment::kDot: id = "D"; break;
    case Alignment::kGeneral: id = "G"; break;
    case Alignment::kConcat: id = "C"; break;
  }
  for (bool f : {pointer_gen, temporal_attn, intra_decoder, weight_sharing,
                 coverage}) {
    id += f ? '1' : '0';
  }
  return id;
}

void ModelConfig::apply_model_id(const std::string& id) {
  if (id.size() != 6) {
    throw ConfigError("model id '" + id + "' must be a letter and five flags");
  }
  switch (std::toupper(static_cast<unsigned char>(id[0]))) {
    case 'D': alignment = Alignment::kDot; break;
    case 'G': alignment = Alignment::kGeneral; break;
    case 'C': alignment = Alignment::kConcat; break;
    default:
      throw ConfigError("model id '" + id + "' must start with D, G or C");
  }
  bool* flags[] = {&pointer_gen, &temporal_attn, &intra_decoder,
                   &weight_sharing, &coverage};
  for (std::size_t i = 0; i < 5; ++i) {
    const char c = id[i + 1];
    if (c != '0' && c != '1') {
      throw ConfigError("model id '" + id + "' flags must be 0 or 1");
    }
    *flags[i] = c == '1';
  }
}

std::string ModelConfig::to_json() const {
  nlohmann::json j = {
      {"d_emb", d_emb},
      {"d_hidden", d_hidden},
      {"vocab_size", vocab_size},
      {"d_align", d_align},
      {"alignment", alignment_name(alignment)},
      {"pointer_gen", pointer_gen},
      {"temporal_attn", temporal_attn},
      {"intra_decoder", intra_decoder},
      {"weight_sharing", weight_sharing},
      {"coverage", coverage},
      {"allow_temporal_with_coverage", allow_temporal_with_coverage},
  };
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  ModelConfig c;
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    c.d_emb = j.at("d_emb").get<std::size_t>();
    c.d_hidden = j.at("d_hidden").get<std::size_t>();
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.d_align = j.value("d_align", std::size_t{0});
    c.alignment = parse_alignment(j.at("alignment").get<std::string>());
    c.pointer_gen = j.at("pointer_gen").get<bool>();
    c.temporal_attn = j.at("temporal_attn").get<bool>();
    c.intra_decoder = j.at("intra_decoder").get<bool>();
    c.weight_sharing = j.at("weight_sharing").get<bool>();
    c.coverage = j.at("coverage").get<bool>();
    c.allow_temporal_with_coverage =
        j.value("allow_temporal_with_coverage", false);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  }
  return c;
}

}  // namespace pgsum
