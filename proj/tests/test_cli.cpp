#include "tcf/cli.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using namespace tcf;

namespace {

const std::string fixtures = TCF_FIXTURES;

struct Result {
    int code;
    std::string out, err;
};

Result invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "tcf");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir = fs::temp_directory_path() /
              ("tcf_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }

    std::vector<std::string> inputs(const std::string& out) const {
        return {"--config",  fixtures + "/config.json",    "--ratings", fixtures + "/ratings.txt",
                "--clicks",  fixtures + "/clicks.txt",     "--documents", fixtures + "/documents.txt",
                "--output",  (dir / out).string()};
    }
    Result step(const std::string& cmd, const std::string& out, std::vector<std::string> extra = {}) const {
        auto args = inputs(out);
        args.insert(args.begin(), cmd);
        args.insert(args.end(), extra.begin(), extra.end());
        return invoke(args);
    }

    fs::path dir;
};

}  // namespace

TEST_F(CliTest, MissingRatingsPathExitsTwoAndNamesPath) {
    const std::string missing = (dir / "nope.txt").string();
    const auto r = invoke({"ingest", "--ratings", missing, "--output", (dir / "o").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find(missing), std::string::npos);
}

TEST_F(CliTest, IngestWritesCacheAndLogsCounts) {
    const auto r = step("ingest", "run");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.err.find("84 ratings"), std::string::npos) << r.err;
    EXPECT_NE(r.err.find("70 clicks"), std::string::npos) << r.err;
    EXPECT_NE(r.err.find("14 documents"), std::string::npos) << r.err;
    for (auto f : {"manifest.json", "ratings.txt", "users.txt", "items.txt", "documents.txt", "vocab.txt", "clicks.txt"})
        EXPECT_TRUE(fs::exists(dir / "run" / "cache" / f)) << f;
}

TEST_F(CliTest, TrainWithoutIngestIsUsageError) { EXPECT_EQ(step("train", "run").code, 2); }

TEST_F(CliTest, DryRunWritesNothing) {
    const auto r = step("train", "run", {"--dry-run"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("fingerprint="), std::string::npos);
    EXPECT_NE(r.out.find("latent_dim=2"), std::string::npos);
    EXPECT_NE(r.out.find("\"lambda_s\": 0.5"), std::string::npos);
    EXPECT_FALSE(fs::exists(dir / "run"));
}

TEST_F(CliTest, TrainTwiceIsByteIdentical) {
    for (auto out : {"a", "b"}) {
        ASSERT_EQ(step("ingest", out).code, 0);
        const auto r = step("train", out, {"--deterministic"});
        ASSERT_EQ(r.code, 0) << r.err;
    }
    for (auto f : {"checkpoint.tcf", "trace.csv", "train_report.txt", "ppmi.txt"})
        EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
    EXPECT_FALSE(slurp(dir / "a" / "checkpoint.tcf").empty());
}

TEST_F(CliTest, PmfDegenerateLabel) {
    const auto cfg = dir / "pmf.json";
    std::ofstream(cfg) << R"({"model": {"latent_dim": 2, "lambda_s": 0, "text": false, "max_epochs": 3}})";
    const std::vector<std::string> base{"--config", cfg.string(), "--ratings", fixtures + "/ratings.txt",
                                        "--output", (dir / "pmf").string()};
    auto args = base;
    args.insert(args.begin(), "ingest");
    ASSERT_EQ(invoke(args).code, 0);
    args[0] = "train";
    const auto r = invoke(args);
    ASSERT_EQ(r.code, 0) << r.err;
    const auto trace = slurp(dir / "pmf" / "trace.csv");
    EXPECT_EQ(trace.substr(trace.find('\n') + 1, 15), "pmf-degenerate,");
}

TEST_F(CliTest, EvalReportsBothModes) {
    ASSERT_EQ(step("ingest", "run").code, 0);
    ASSERT_EQ(step("train", "run").code, 0);
    const auto in = step("eval", "run");
    ASSERT_EQ(in.code, 0) << in.err;
    EXPECT_NE(in.out.find("mode=in_matrix"), std::string::npos);
    EXPECT_NE(in.out.find("fingerprint="), std::string::npos);
    EXPECT_TRUE(fs::exists(dir / "run" / "eval_in_matrix.csv"));

    ASSERT_EQ(step("train", "run", {"--mode", "out"}).code, 0);
    const auto out = step("eval", "run", {"--mode", "out"});
    ASSERT_EQ(out.code, 0) << out.err;
    EXPECT_NE(out.out.find("mode=out_of_matrix"), std::string::npos);
    EXPECT_NE(out.out.find("n_missing_text="), std::string::npos);
}

TEST_F(CliTest, SweepWritesCurves) {
    const auto data = (dir / "syn").string();
    ASSERT_EQ(invoke({"synth", "--output", data, "--users", "60", "--items", "80", "--latent-dim", "2", "--vocab", "20",
                      "--density", "0.3"})
                  .code,
              0);
    const std::vector<std::string> base{"--config", data + "/config.json", "--output", (dir / "run").string()};
    auto args = base;
    args.insert(args.begin(), "ingest");
    ASSERT_EQ(invoke(args).code, 0);
    args[0] = "sweep";
    for (auto extra : {"--lambda-s-grid", "0.1,1,10", "--sparsity-grid", "10,20,50,80"}) args.push_back(extra);
    const auto r = invoke(args);
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream sweep(slurp(dir / "run" / "sweep.csv"));
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(sweep, line)) lines.push_back(line);
    ASSERT_EQ(lines.size(), 4u);
    EXPECT_EQ(lines[0], "mode,lambda_s,epoch,rmse,validation_rmse,run,fingerprint");
    const auto sparsity = slurp(dir / "run" / "sparsity.csv");
    for (auto label : {"MT-10,", "MT-20,", "MT-50,", "MT-80,"}) EXPECT_NE(sparsity.find(label), std::string::npos);
}

TEST_F(CliTest, UsageErrors) {
    EXPECT_EQ(invoke({}).code, 2);
    EXPECT_EQ(invoke({"train", "--bogus"}).code, 2);
    EXPECT_EQ(invoke({"train", "--mode", "sideways"}).code, 2);
    EXPECT_EQ(invoke({"--help"}).code, 0);
    const auto cfg = dir / "bad.json";
    std::ofstream(cfg) << R"({"ratings": "x", "lamda_s": 1})";
    const auto r = invoke({"ingest", "--config", cfg.string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("lamda_s"), std::string::npos);
}

TEST_F(CliTest, FlagsOverrideConfig) {
    const auto r = step("train", "run", {"--dry-run", "--seed", "11", "--lambda-s", "2"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("\"seed\": 11"), std::string::npos);
    EXPECT_NE(r.out.find("\"lambda_s\": 2.0"), std::string::npos);
}

TEST_F(CliTest, SynthThenFullPipeline) {
    const auto out = (dir / "syn").string();
    ASSERT_EQ(invoke({"synth", "--output", out, "--users", "30", "--items", "40", "--latent-dim", "3", "--vocab",
                      "20", "--density", "0.2"})
                  .code,
              0);
    const std::string cfg = out + "/config.json";
    for (auto cmd : {"ingest", "train", "eval"}) {
        const auto r = invoke({cmd, "--config", cfg});
        ASSERT_EQ(r.code, 0) << cmd << ": " << r.err;
    }
    EXPECT_TRUE(fs::exists(fs::path(out) / "run" / "eval_in_matrix.txt"));
}
