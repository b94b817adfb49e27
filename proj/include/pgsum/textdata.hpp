#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace pgsum {

inline constexpr int kPadId = 0;
inline constexpr int kSosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kUnkId = 3;
inline constexpr std::size_t kReservedCount = 4;

inline constexpr const char* kPadToken = "<pad>";
inline constexpr const char* kSosToken = "<s>";
inline constexpr const char* kEosToken = "</s>";
inline constexpr const char* kUnkToken = "<unk>";

// One article/summary pair, pre-tokenized on whitespace.
struct CorpusRecord {
  std::string id;
  std::vector<std::string> article;
  std::vector<std::string> summary;
};

std::vector<std::string> split_tokens(const std::string& text);
std::string join_tokens(const std::vector<std::string>& tokens);

// Parses one JSON Lines record with string fields "article" and "summary"
// (and optional "id").
CorpusRecord parse_corpus_line(const std::string& line);
std::vector<CorpusRecord> read_corpus(std::istream& in);
std::vector<CorpusRecord> read_corpus_file(const std::string& path);

// Closed token <-> id map. Ids 0..3 are PAD, SOS, EOS and UNK; the size,
// reserved ids included, never exceeds the cap it was built with.
class Vocabulary {
 public:
  Vocabulary();

  // Keeps the cap - 4 most frequent tokens, ties broken lexicographically.
  static Vocabulary from_counts(
      const std::unordered_map<std::string, std::uint64_t>& counts,
      std::size_t cap);

  // Reads `token<TAB>count` lines in file order; reserved tokens are injected.
  static Vocabulary load(std::istream& in, std::size_t cap = 0);
  static Vocabulary load_file(const std::string& path, std::size_t cap = 0);
  void save(std::ostream& out) const;
  void save_file(const std::string& path) const;

  std::size_t size() const { return tokens_.size(); }
  bool contains(const std::string& token) const;
  // Id of `token`, or UNK when absent.
  int id(const std::string& token) const;
  const std::string& token(int id) const;
  std::uint64_t count(int id) const;

 private:
  void add(const std::string& token, std::uint64_t count);

  std::unordered_map<std::string, int> index_;
  std::vector<std::string> tokens_;
  std::vector<std::uint64_t> counts_;
};

// Counts article and summary tokens of every record. Throws ContractError on
// an empty corpus.
Vocabulary build_vocab(const std::vector<CorpusRecord>& corpus,
                       std::size_t cap);
Vocabulary build_vocab(std::istream& jsonl, std::size_t cap);

struct EncodeLimits {
  std::size_t source_max = 400;
  std::size_t target_max = 100;
};

// An example over the fixed vocabulary plus its own source OOVs. The k-th
// distinct OOV of the article (by first occurrence) gets temporary id |V|+k.
struct ExtendedExample {
  std::vector<std::string> source_tokens;  // truncated article
  std::vector<std::string> target_tokens;  // truncated summary, no SOS/EOS
  std::vector<int> source_ids;
  std::vector<int> source_ext_ids;
  std::vector<std::string> oov_tokens;
  std::vector<int> target_ids;      // SOS ... EOS, OOVs as UNK
  std::vector<int> target_ext_ids;  // SOS ... EOS, source OOVs as temp ids
};

ExtendedExample encode_example(const std::vector<std::string>& article,
                               const std::vector<std::string>& summary,
                               const Vocabulary& vocab,
                               const EncodeLimits& limits);

struct Batch {
  std::vector<std::vector<int>> source;      // B x J, PAD padded
  std::vector<std::vector<int>> source_ext;  // B x J, PAD padded
  std::vector<std::size_t> source_lengths;
  std::vector<std::vector<int>> target;      // B x T, PAD padded
  std::vector<std::vector<int>> target_ext;  // B x T, PAD padded
  std::vector<std::size_t> target_lengths;
  std::size_t max_oov_count = 0;
  std::vector<std::vector<std::string>> oov_tokens;
  std::vector<std::vector<std::string>> source_tokens;
  std::vector<std::vector<std::string>> references;

  std::size_t size() const { return source.size(); }
  // Unpadded view of row i as an ExtendedExample.
  ExtendedExample example(std::size_t i) const;
};

Batch make_batch(std::span<const ExtendedExample> examples,
                 std::size_t batch_size);

// Maps ids back to tokens: ids >= |V| go through `oov_tokens`, EOS stops,
// PAD and SOS are dropped.
std::vector<std::string> decode_ids(std::span<const int> ids,
                                    const Vocabulary& vocab,
                                    const std::vector<std::string>& oov_tokens);

}  // namespace pgsum
