#include "pgsum/cli.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"

#include "pgsum/checkpoint.hpp"
#include "pgsum/decoding.hpp"
#include "pgsum/errors.hpp"
#include "pgsum/pointer.hpp"
#include "pgsum/rouge.hpp"
#include "pgsum/run_config.hpp"
#include "pgsum/textdata.hpp"
#include "pgsum/training.hpp"

namespace pgsum {

namespace fs = std::filesystem;

namespace {

struct ConfigArgs {
  std::string config_file;
  std::map<std::string, std::string> overrides;
  std::vector<std::string> sets;
};

// Every RunConfig key becomes a --key flag; --config reads a file first.
void add_config_flags(CLI::App& app, ConfigArgs& args) {
  app.add_option("--config", args.config_file, "key = value config file");
  app.add_option("--set", args.sets, "extra key=value override (repeatable)");
  for (const std::string& key : RunConfig::keys()) {
    app.add_option_function<std::string>(
        "--" + key,
        [&args, key](const std::string& v) { args.overrides[key] = v; },
        RunConfig::help(key));
  }
}

RunConfig resolve(const ConfigArgs& args) {
  RunConfig cfg;
  if (!args.config_file.empty()) cfg.read_file(args.config_file);
  for (const auto& [k, v] : args.overrides) cfg.set(k, v);
  for (const auto& kv : args.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    }
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

void require(const std::string& value, const std::string& key) {
  if (value.empty()) throw ConfigError("missing required setting '" + key + "'");
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void write_resolved(const RunConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  open_out(dir / "config.resolved") << cfg.to_text();
}

std::vector<ExtendedExample> encode_all(const std::vector<CorpusRecord>& records,
                                        const Vocabulary& vocab,
                                        const EncodeLimits& limits) {
  std::vector<ExtendedExample> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    out.push_back(encode_example(r.article, r.summary, vocab, limits));
  }
  return out;
}

// Token strings before EOS with their attention rows; PAD and SOS dropped.
struct Rendered {
  std::vector<std::string> tokens;
  std::vector<std::vector<double>> attention;
};

Rendered render(const DecodedHypothesis& h, const Vocabulary& vocab,
                const ExtendedExample& ex) {
  Rendered r;
  const int V = static_cast<int>(vocab.size());
  for (std::size_t t = 0; t < h.tokens.size(); ++t) {
    const int id = h.tokens[t];
    if (id == kEosId) break;
    if (id == kPadId || id == kSosId) continue;
    r.tokens.push_back(id < V ? vocab.token(id)
                              : ex.oov_tokens.at(static_cast<std::size_t>(id - V)));
    r.attention.push_back(t < h.attention.size() ? h.attention[t]
                                                 : std::vector<double>{});
  }
  return r;
}

// ---------------------------------------------------------------------------

int cmd_vocab(const std::string& input, std::size_t cap,
              const std::string& output, std::ostream& out) {
  if (cap < kReservedCount) {
    throw ConfigError("invariant vocabulary cap >= " +
                      std::to_string(kReservedCount) + " violated");
  }
  const auto corpus = read_corpus_file(input);
  Vocabulary vocab = build_vocab(corpus, cap);
  if (fs::path(output).has_parent_path()) {
    fs::create_directories(fs::path(output).parent_path());
  }
  vocab.save_file(output);
  out << "wrote " << vocab.size() << " entries to " << output << '\n';
  return kExitOk;
}

int cmd_train(RunConfig cfg, std::ostream& out) {
  cfg.validate();
  require(cfg.train_path, "train");
  const fs::path dir = cfg.output_dir;
  const auto train_records = read_corpus_file(cfg.train_path);
  std::vector<CorpusRecord> dev_records;
  if (!cfg.dev_path.empty()) dev_records = read_corpus_file(cfg.dev_path);

  Vocabulary vocab = cfg.vocab_path.empty()
                         ? build_vocab(train_records, cfg.model.vocab_size)
                         : Vocabulary::load_file(cfg.vocab_path, cfg.model.vocab_size);
  cfg.model.vocab_size = vocab.size();
  cfg.validate();
  write_resolved(cfg, dir);
  if (cfg.vocab_path.empty()) vocab.save_file((dir / "vocab.txt").string());

  const auto train = encode_all(train_records, vocab, cfg.limits);
  const auto dev = encode_all(dev_records, vocab, cfg.limits);

  std::unique_ptr<Trainer> trainer;
  if (!cfg.resume_path.empty()) {
    trainer = std::make_unique<Trainer>(
        load_checkpoint_file(cfg.resume_path, &cfg.model), cfg.trainer);
  } else {
    ModelParameters params(cfg.model);
    params.init_uniform(cfg.trainer.seed, cfg.init_scale);
    trainer = std::make_unique<Trainer>(std::move(params), cfg.trainer);
  }

  auto metrics = open_out(dir / "metrics.csv");
  write_metrics_header(metrics, cfg.trainer.schedule);
  const fs::path ck = dir / "checkpoint.bin";
  while (trainer->progress().epoch < cfg.epochs) {
    const EpochMetrics m = trainer->run_epoch(train, dev);
    write_metrics_row(metrics, m);
    metrics.flush();
    trainer->save(ck.string());
    out << "epoch " << m.epoch << " step " << m.step << " loss " << m.loss
        << " rougeL " << m.rougeL << '\n';
  }
  if (!fs::exists(ck)) trainer->save(ck.string());
  return kExitOk;
}

int cmd_decode(RunConfig cfg, std::ostream& out) {
  require(cfg.checkpoint_path, "checkpoint");
  require(cfg.vocab_path, "vocab");
  require(cfg.input_path, "input");
  cfg.validate();
  Checkpoint ck = load_checkpoint_file(cfg.checkpoint_path);
  const Vocabulary vocab = Vocabulary::load_file(cfg.vocab_path);
  if (vocab.size() != ck.params.config().vocab_size) {
    throw ConfigError("vocabulary has " + std::to_string(vocab.size()) +
                      " entries but the checkpoint expects " +
                      std::to_string(ck.params.config().vocab_size));
  }
  cfg.model = ck.params.config();
  cfg.validate();
  const fs::path dir = cfg.output_dir;
  write_resolved(cfg, dir);

  const auto records = read_corpus_file(cfg.input_path);
  auto nbest = open_out(dir / "nbest.jsonl");
  auto summaries = open_out(dir / "summaries.txt");
  for (std::size_t i = 0; i < records.size(); ++i) {
    const ExtendedExample ex =
        encode_example(records[i].article, records[i].summary, vocab, cfg.limits);
    SummarizerModel model(ck.params, ex);
    std::vector<DecodedHypothesis> hyps;
    switch (cfg.decode_mode) {
      case DecodeMode::kGreedy:
        hyps.push_back(greedy_decode(model, cfg.beam.t_max));
        break;
      case DecodeMode::kBeam:
        hyps = beam_search(model, cfg.beam);
        break;
      case DecodeMode::kDiverse:
        for (auto& g : diverse_beam_search(model, cfg.beam, cfg.groups,
                                           cfg.diversity_lambda)) {
          hyps.insert(hyps.end(), g.begin(), g.end());
        }
        break;
    }
    NbestRecord rec;
    rec.id = records[i].id.empty() ? std::to_string(i) : records[i].id;
    for (const auto& h : hyps) {
      rec.candidates.push_back({render(h, vocab, ex).tokens, h.score, h.norm_score});
    }
    write_nbest_jsonl(nbest, rec);
    const Rendered best = render(hyps.front(), vocab, ex);
    summaries << join_tokens(replace_unknown(best.tokens, best.attention,
                                             ex.source_tokens))
              << '\n';
  }
  out << "decoded " << records.size() << " articles into " << dir.string()
      << '\n';
  return kExitOk;
}

std::vector<std::vector<std::string>> read_references(const std::string& path) {
  std::vector<std::vector<std::string>> refs;
  if (fs::path(path).extension() == ".jsonl") {
    for (const auto& r : read_corpus_file(path)) refs.push_back(r.summary);
    return refs;
  }
  std::ifstream in(path);
  if (!in) throw MissingFileError("cannot open " + path);
  std::string line;
  while (std::getline(in, line)) refs.push_back(split_tokens(line));
  return refs;
}

int cmd_eval(const std::string& candidates, const std::string& reference,
             const std::string& output, std::ostream& out) {
  std::ifstream in(candidates);
  if (!in) throw MissingFileError("cannot open " + candidates);
  std::vector<std::vector<std::string>> cands;
  std::string line;
  while (std::getline(in, line)) cands.push_back(split_tokens(line));
  const auto refs = read_references(reference);
  if (cands.size() != refs.size()) {
    throw DataError(std::to_string(cands.size()) + " candidates but " +
                    std::to_string(refs.size()) + " references");
  }
  std::vector<rouge::TokenPair> pairs;
  for (std::size_t i = 0; i < cands.size(); ++i) pairs.emplace_back(cands[i], refs[i]);
  const std::string report = rouge::format_report(rouge::evaluate_corpus(
      pairs, {rouge::Variant::kRouge1, rouge::Variant::kRouge2,
              rouge::Variant::kRougeL}));
  if (output.empty()) {
    out << report;
  } else {
    open_out(output) << report;
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Abstractive summarization: vocabulary, training, decoding, "
               "evaluation",
               "pgsum"};
  app.require_subcommand(1);

  std::string vocab_input, vocab_output = "vocab.txt";
  std::size_t vocab_cap = 50000;
  CLI::App* vocab = app.add_subcommand("vocab", "build a vocabulary file");
  vocab->add_option("--input", vocab_input, "training corpus (JSON Lines)")
      ->required();
  vocab->add_option("--cap", vocab_cap, "maximum entries, reserved included");
  vocab->add_option("--output", vocab_output, "vocabulary file to write");

  ConfigArgs train_args, decode_args;
  CLI::App* train = app.add_subcommand("train", "train a model");
  add_config_flags(*train, train_args);
  CLI::App* decode = app.add_subcommand("decode", "summarize a corpus");
  add_config_flags(*decode, decode_args);
  decode->add_flag_function(
      "--greedy",
      [&](std::int64_t) { decode_args.overrides["decode_mode"] = "greedy"; },
      "greedy decoding");

  std::string cand_path, ref_path, eval_output;
  CLI::App* eval = app.add_subcommand("eval", "score summaries with ROUGE");
  eval->add_option("--candidates", cand_path, "one summary per line")->required();
  eval->add_option("--reference", ref_path,
                   "references: JSON Lines corpus or one summary per line")
      ->required();
  eval->add_option("--output", eval_output, "CSV file (default: stdout)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "pgsum: error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (vocab->parsed()) return cmd_vocab(vocab_input, vocab_cap, vocab_output, out);
    if (train->parsed()) return cmd_train(resolve(train_args), out);
    if (decode->parsed()) {
      RunConfig cfg = resolve(decode_args);
      if (cfg.decode_mode == DecodeMode::kGreedy) cfg.beam.beam = 1;
      return cmd_decode(cfg, out);
    }
    if (eval->parsed()) return cmd_eval(cand_path, ref_path, eval_output, out);
  } catch (const ConfigError& e) {
    err << "pgsum: config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const MissingFileError& e) {
    err << "pgsum: missing file: " << e.what() << '\n';
    return kExitMissingFile;
  } catch (const std::exception& e) {
    err << "pgsum: error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace pgsum
