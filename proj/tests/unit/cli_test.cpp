#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "pgsum/cli.hpp"
#include "pgsum/errors.hpp"
#include "pgsum/run_config.hpp"

namespace pgsum {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::path(::testing::TempDir()) /
           ("pgsum_cli_" +
            std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream corpus(dir_ / "train.jsonl");
    const char* names[] = {"zorblax", "quintara", "velmor"};
    for (int i = 0; i < 6; ++i) {
      corpus << R"({"id":"d)" << i << R"(","article":"the city team said )"
             << names[i % 3] << R"( won on report","summary":")" << names[i % 3]
             << R"( won"})" << '\n';
    }
  }

  int run(std::vector<std::string> args) {
    out_.str("");
    err_.str("");
    return run_cli(args, out_, err_);
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
  std::ostringstream out_, err_;
};

TEST(RunConfig, ParsesFileAndRoundTrips) {
  std::istringstream in(
      "# comment\n"
      "model_id = C10101   # trailing comment\n"
      "d_emb=16\n"
      "strategy = scst\n"
      "dad = 0.75\n"
      "max_decode_len = 12\n");
  RunConfig c;
  c.read(in);
  EXPECT_EQ(c.model.model_id(), "C10101");
  EXPECT_EQ(c.model.d_emb, 16u);
  EXPECT_EQ(c.trainer.schedule.strategy, Strategy::kScst);
  EXPECT_EQ(c.trainer.schedule.dad_alpha, 0.75);
  EXPECT_EQ(c.beam.t_max, 12u);
  EXPECT_EQ(c.trainer.max_decode_len, 12u);
  EXPECT_NO_THROW(c.validate());

  RunConfig back;
  std::istringstream text(c.to_text());
  back.read(text);
  EXPECT_EQ(back.to_text(), c.to_text());
  EXPECT_EQ(back.model, c.model);
}

TEST(RunConfig, DefaultsMatchTrainingSetup) {
  RunConfig c;
  EXPECT_EQ(c.trainer.adam.lr, 1e-4);
  EXPECT_EQ(c.trainer.schedule.gamma, 0.99);
  EXPECT_EQ(c.beam.beam, 5u);
  EXPECT_EQ(c.model.vocab_size, 50000u);
}

TEST(RunConfig, RejectsBadInput) {
  RunConfig c;
  EXPECT_THROW(c.set("no_such_key", "1"), ConfigError);
  EXPECT_THROW(c.set("d_emb", "-3"), ConfigError);
  EXPECT_THROW(c.set("lr", "fast"), ConfigError);
  EXPECT_THROW(c.set("pointer", "maybe"), ConfigError);
  std::istringstream bad("d_emb 4\n");
  EXPECT_THROW(c.read(bad), ConfigError);
  EXPECT_THROW(c.read_file("/nonexistent/run.cfg"), MissingFileError);
}

TEST(RunConfig, ValidationNamesInvariant) {
  RunConfig c;
  c.set("model_id", "G10001");
  try {
    c.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("coverage => alignment == concat"),
              std::string::npos);
  }
  c = RunConfig();
  c.set("decode_mode", "diverse");
  c.set("beam", "4");
  c.set("groups", "3");
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST_F(CliTest, VocabRespectsCap) {
  EXPECT_EQ(run({"vocab", "--input", path("train.jsonl"), "--cap", "8",
                 "--output", path("vocab.txt")}),
            kExitOk);
  std::ifstream in(path("vocab.txt"));
  std::size_t lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  EXPECT_LE(lines, 8u);
  EXPECT_GT(lines, 0u);
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(run({"train", "--train", path("train.jsonl"), "--model_id", "G10001"}),
            kExitConfig);
  EXPECT_NE(err_.str().find("coverage => alignment == concat"), std::string::npos);
  EXPECT_EQ(err_.str().find('\n'), err_.str().size() - 1);  // one line
  EXPECT_EQ(run({"train", "--train", path("missing.jsonl")}), kExitMissingFile);
  EXPECT_EQ(run({"vocab", "--input", path("missing.jsonl")}), kExitMissingFile);
  EXPECT_EQ(run({"train", "--no-such-flag"}), kExitConfig);
  EXPECT_EQ(run({"frobnicate"}), kExitConfig);
  EXPECT_EQ(run({"train", "--config", path("missing.cfg")}), kExitMissingFile);
}

TEST_F(CliTest, TrainDecodeEvalPipeline) {
  {
    std::ofstream cfg(dir_ / "run.cfg");
    cfg << "model_id = G10000\nd_emb = 6\nd_hidden = 5\nepochs = 2\n"
        << "batch_size = 3\nlr = 0.01\nmax_decode_len = 6\n";
  }
  const std::vector<std::string> train = {
      "train",        "--config",     path("run.cfg"), "--train",
      path("train.jsonl"), "--dev",   path("train.jsonl"), "--strategy",
      "scst",         "--dad",        "0.75",          "--output_dir",
      path("run")};
  ASSERT_EQ(run(train), kExitOk) << err_.str();
  const std::string metrics = slurp(dir_ / "run" / "metrics.csv");
  EXPECT_EQ(metrics.rfind("# strategy=scst", 0), 0u);
  EXPECT_NE(metrics.find("dad=0.75"), std::string::npos);
  EXPECT_NE(metrics.find("epoch,step,strategy,loss,rouge1,rouge2,rougeL"),
            std::string::npos);
  const std::string resolved = slurp(dir_ / "run" / "config.resolved");
  EXPECT_NE(resolved.find("strategy = scst"), std::string::npos);
  EXPECT_NE(resolved.find("d_hidden = 5"), std::string::npos);
  ASSERT_TRUE(fs::exists(dir_ / "run" / "checkpoint.bin"));
  ASSERT_TRUE(fs::exists(dir_ / "run" / "vocab.txt"));

  // same seed, same config: identical metrics
  auto again = train;
  again.back() = path("run2");
  ASSERT_EQ(run(again), kExitOk);
  EXPECT_EQ(slurp(dir_ / "run2" / "metrics.csv"), metrics);

  const std::vector<std::string> decode = {
      "decode",  "--checkpoint", path("run/checkpoint.bin"), "--vocab",
      path("run/vocab.txt"), "--input", path("train.jsonl"),
      "--max_decode_len", "6"};
  auto beam1 = decode;
  beam1.insert(beam1.end(), {"--beam", "1", "--output_dir", path("dec_beam")});
  auto greedy = decode;
  greedy.insert(greedy.end(), {"--greedy", "--output_dir", path("dec_greedy")});
  ASSERT_EQ(run(beam1), kExitOk) << err_.str();
  ASSERT_EQ(run(greedy), kExitOk) << err_.str();
  EXPECT_EQ(slurp(dir_ / "dec_beam" / "summaries.txt"),
            slurp(dir_ / "dec_greedy" / "summaries.txt"));
  EXPECT_TRUE(fs::exists(dir_ / "dec_beam" / "config.resolved"));
  const std::string nbest = slurp(dir_ / "dec_beam" / "nbest.jsonl");
  EXPECT_EQ(std::count(nbest.begin(), nbest.end(), '\n'), 6);
  EXPECT_NE(nbest.find("\"candidates\""), std::string::npos);

  auto beam3 = decode;
  beam3.insert(beam3.end(), {"--beam", "3", "--output_dir", path("dec3")});
  ASSERT_EQ(run(beam3), kExitOk);
  auto dbs = decode;
  dbs.insert(dbs.end(), {"--decode_mode", "diverse", "--beam", "4", "--groups",
                         "2", "--diversity_lambda", "5", "--output_dir",
                         path("dbs")});
  ASSERT_EQ(run(dbs), kExitOk) << err_.str();

  ASSERT_EQ(run({"eval", "--candidates", path("dec3/summaries.txt"),
                 "--reference", path("train.jsonl"), "--output",
                 path("rouge.csv")}),
            kExitOk)
      << err_.str();
  const std::string report = slurp(dir_ / "rouge.csv");
  EXPECT_EQ(report.rfind("variant,precision,recall,f1\n", 0), 0u);
  EXPECT_NE(report.find("rougeL,"), std::string::npos);

  // resuming at the final epoch trains nothing further but still succeeds
  auto resume = train;
  resume.back() = path("run3");
  resume.insert(resume.end(), {"--resume", path("run/checkpoint.bin")});
  EXPECT_EQ(run(resume), kExitOk) << err_.str();
}

TEST_F(CliTest, EvalIdenticalIsPerfect) {
  {
    std::ofstream a(dir_ / "cand.txt");
    a << "a b c\nx y\n";
  }
  ASSERT_EQ(run({"eval", "--candidates", path("cand.txt"), "--reference",
                 path("cand.txt")}),
            kExitOk);
  EXPECT_NE(out_.str().find("rouge1,100.00,100.00,100.00"), std::string::npos);
}

}  // namespace
}  // namespace pgsum
