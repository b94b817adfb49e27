#include "pgsum/textdata.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "pgsum/errors.hpp"

namespace pgsum {

std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

CorpusRecord parse_corpus_line(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("corpus line is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("article") || !j["article"].is_string()) {
    throw DataError("corpus record lacks a string \"article\" field");
  }
  CorpusRecord r;
  r.article = split_tokens(j["article"].get<std::string>());
  if (j.contains("summary")) {
    if (!j["summary"].is_string()) {
      throw DataError("corpus record \"summary\" must be a string");
    }
    r.summary = split_tokens(j["summary"].get<std::string>());
  }
  if (j.contains("id")) {
    r.id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
  }
  return r;
}

std::vector<CorpusRecord> read_corpus(std::istream& in) {
  std::vector<CorpusRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_corpus_line(line));
    if (out.back().id.empty()) out.back().id = std::to_string(out.size() - 1);
  }
  return out;
}

std::vector<CorpusRecord> read_corpus_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingFileError("cannot open corpus file " + path);
  return read_corpus(in);
}

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

namespace {

bool is_reserved(const std::string& token) {
  return token == kPadToken || token == kSosToken || token == kEosToken ||
         token == kUnkToken;
}

}  // namespace

Vocabulary::Vocabulary() {
  add(kPadToken, 0);
  add(kSosToken, 0);
  add(kEosToken, 0);
  add(kUnkToken, 0);
}

void Vocabulary::add(const std::string& token, std::uint64_t count) {
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
  counts_.push_back(count);
}

Vocabulary Vocabulary::from_counts(
    const std::unordered_map<std::string, std::uint64_t>& counts,
    std::size_t cap) {
  if (cap < kReservedCount) {
    throw ConfigError("vocabulary cap " + std::to_string(cap) +
                      " cannot hold the " + std::to_string(kReservedCount) +
                      " reserved tokens");
  }
  std::vector<std::pair<std::string, std::uint64_t>> sorted;
  sorted.reserve(counts.size());
  for (const auto& [tok, c] : counts) {
    if (!is_reserved(tok)) sorted.emplace_back(tok, c);
  }
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v;
  for (const auto& [tok, c] : sorted) {
    if (v.size() >= cap) break;
    v.add(tok, c);
  }
  return v;
}

Vocabulary Vocabulary::load(std::istream& in, std::size_t cap) {
  Vocabulary v;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw DataError("vocabulary line " + std::to_string(lineno) +
                      " is not token<TAB>count");
    }
    const std::string tok = line.substr(0, tab);
    std::uint64_t count = 0;
    try {
      count = std::stoull(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw DataError("vocabulary line " + std::to_string(lineno) +
                      " has a malformed count");
    }
    if (is_reserved(tok) || v.contains(tok)) continue;
    if (cap != 0 && v.size() >= cap) break;
    v.add(tok, count);
  }
  return v;
}

Vocabulary Vocabulary::load_file(const std::string& path, std::size_t cap) {
  std::ifstream in(path);
  if (!in) throw MissingFileError("cannot open vocabulary file " + path);
  return load(in, cap);
}

void Vocabulary::save(std::ostream& out) const {
  for (std::size_t i = kReservedCount; i < tokens_.size(); ++i) {
    out << tokens_[i] << '\t' << counts_[i] << '\n';
  }
}

void Vocabulary::save_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write vocabulary file " + path);
  save(out);
}

bool Vocabulary::contains(const std::string& token) const {
  return index_.count(token) != 0;
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw IndexError("token id " + std::to_string(id) + " outside [0, " +
                     std::to_string(tokens_.size()) + ")");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::uint64_t Vocabulary::count(int id) const {
  token(id);
  return counts_[static_cast<std::size_t>(id)];
}

Vocabulary build_vocab(const std::vector<CorpusRecord>& corpus,
                       std::size_t cap) {
  if (corpus.empty()) throw ContractError("build_vocab: empty corpus");
  std::unordered_map<std::string, std::uint64_t> counts;
  for (const auto& r : corpus) {
    for (const auto& t : r.article) counts[t]++;
    for (const auto& t : r.summary) counts[t]++;
  }
  return Vocabulary::from_counts(counts, cap);
}

Vocabulary build_vocab(std::istream& jsonl, std::size_t cap) {
  return build_vocab(read_corpus(jsonl), cap);
}

// ---------------------------------------------------------------------------
// Examples and batches
// ---------------------------------------------------------------------------

ExtendedExample encode_example(const std::vector<std::string>& article,
                               const std::vector<std::string>& summary,
                               const Vocabulary& vocab,
                               const EncodeLimits& limits) {
  if (limits.source_max == 0 || limits.target_max == 0) {
    throw ContractError("encode_example: length limits must be positive");
  }
  if (article.empty()) throw ContractError("encode_example: empty article");

  ExtendedExample ex;
  const std::size_t J = std::min(article.size(), limits.source_max);
  ex.source_tokens.assign(article.begin(),
                          article.begin() + static_cast<std::ptrdiff_t>(J));
  const std::size_t T = std::min(summary.size(), limits.target_max);
  ex.target_tokens.assign(summary.begin(),
                          summary.begin() + static_cast<std::ptrdiff_t>(T));

  const int V = static_cast<int>(vocab.size());
  for (const auto& tok : ex.source_tokens) {
    const int id = vocab.id(tok);
    ex.source_ids.push_back(id);
    if (id != kUnkId || tok == kUnkToken) {
      ex.source_ext_ids.push_back(id);
      continue;
    }
    auto it = std::find(ex.oov_tokens.begin(), ex.oov_tokens.end(), tok);
    if (it == ex.oov_tokens.end()) {
      ex.oov_tokens.push_back(tok);
      it = ex.oov_tokens.end() - 1;
    }
    ex.source_ext_ids.push_back(
        V + static_cast<int>(it - ex.oov_tokens.begin()));
  }

  ex.target_ids.push_back(kSosId);
  ex.target_ext_ids.push_back(kSosId);
  for (const auto& tok : ex.target_tokens) {
    const int id = vocab.id(tok);
    ex.target_ids.push_back(id);
    if (id != kUnkId || tok == kUnkToken) {
      ex.target_ext_ids.push_back(id);
      continue;
    }
    auto it = std::find(ex.oov_tokens.begin(), ex.oov_tokens.end(), tok);
    ex.target_ext_ids.push_back(
        it == ex.oov_tokens.end()
            ? kUnkId
            : V + static_cast<int>(it - ex.oov_tokens.begin()));
  }
  ex.target_ids.push_back(kEosId);
  ex.target_ext_ids.push_back(kEosId);
  return ex;
}

Batch make_batch(std::span<const ExtendedExample> examples,
                 std::size_t batch_size) {
  if (examples.empty() || examples.size() > batch_size) {
    throw ContractError("make_batch: need between 1 and " +
                        std::to_string(batch_size) + " examples, got " +
                        std::to_string(examples.size()));
  }
  Batch b;
  std::size_t J = 0, T = 0;
  for (const auto& ex : examples) {
    J = std::max(J, ex.source_ids.size());
    T = std::max(T, ex.target_ids.size());
    b.max_oov_count = std::max(b.max_oov_count, ex.oov_tokens.size());
  }
  auto padded = [](const std::vector<int>& v, std::size_t n) {
    std::vector<int> out(v);
    out.resize(n, kPadId);
    return out;
  };
  for (const auto& ex : examples) {
    b.source.push_back(padded(ex.source_ids, J));
    b.source_ext.push_back(padded(ex.source_ext_ids, J));
    b.source_lengths.push_back(ex.source_ids.size());
    b.target.push_back(padded(ex.target_ids, T));
    b.target_ext.push_back(padded(ex.target_ext_ids, T));
    b.target_lengths.push_back(ex.target_ids.size());
    b.oov_tokens.push_back(ex.oov_tokens);
    b.source_tokens.push_back(ex.source_tokens);
    b.references.push_back(ex.target_tokens);
  }
  return b;
}

ExtendedExample Batch::example(std::size_t i) const {
  if (i >= size()) {
    throw IndexError("batch row " + std::to_string(i) + " out of range");
  }
  auto trim = [](const std::vector<int>& v, std::size_t n) {
    return std::vector<int>(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n));
  };
  ExtendedExample ex;
  ex.source_tokens = source_tokens[i];
  ex.target_tokens = references[i];
  ex.source_ids = trim(source[i], source_lengths[i]);
  ex.source_ext_ids = trim(source_ext[i], source_lengths[i]);
  ex.oov_tokens = oov_tokens[i];
  ex.target_ids = trim(target[i], target_lengths[i]);
  ex.target_ext_ids = trim(target_ext[i], target_lengths[i]);
  return ex;
}

std::vector<std::string> decode_ids(std::span<const int> ids,
                                    const Vocabulary& vocab,
                                    const std::vector<std::string>& oov_tokens) {
  const int V = static_cast<int>(vocab.size());
  const int limit = V + static_cast<int>(oov_tokens.size());
  std::vector<std::string> out;
  for (int id : ids) {
    if (id < 0 || id >= limit) {
      throw IndexError("decode_ids: id " + std::to_string(id) +
                       " outside extended range [0, " + std::to_string(limit) +
                       ")");
    }
    if (id == kEosId) break;
    if (id == kPadId || id == kSosId) continue;
    out.push_back(id >= V ? oov_tokens[static_cast<std::size_t>(id - V)]
                          : vocab.token(id));
  }
  return out;
}

}  // namespace pgsum
