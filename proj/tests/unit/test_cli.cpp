#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lgeq/cli/app.hpp"

namespace fs = std::filesystem;
using namespace lgeq;
using nlohmann::json;

namespace {

struct RunResult {
  int code;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("lgeq_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  RunResult run(const std::string& args) const {
    const auto out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd = "cd '" + dir_.string() + "' && '" + std::string(LGEQ_CLI_PATH) + "' " + args + " >'" +
                            out.string() + "' 2>'" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
  }

  /// Small but complete configuration; `extra` is merged on top.
  fs::path config(const json& extra = json::object(), const std::string& name = "cfg.json") const {
    json j = {{"manifests", {"corpus/corpus.json"}},
              {"model_dir", "models"},
              {"phantom",
               {{"count", 4}, {"balanced", true}, {"mvo_rate", 0.5}, {"dims", {64, 64, 2}}, {"inner_radius_mm", 14}, {"outer_radius_mm", 22}}},
              {"detect", {{"input", 29}, {"widths", {4, 4, 8, 16}}, {"train", {{"epochs", 2}}}}},
              {"refine",
               {{"members", 3}, {"patch", 25}, {"widths", {2, 2, 2, 4}}, {"max_patches_per_member", 64}, {"train", {{"epochs", 1}}}}},
              {"evaluate", {{"folds", 2}}},
              {"permtest", {{"splits", 2}}}};
    j.merge_patch(extra);
    const auto p = dir_ / name;
    std::ofstream(p) << j.dump();
    return p;
  }

  void make_corpus(const std::string& cfg = "cfg.json") const {
    ASSERT_EQ(run("phantom gen --config " + cfg + " --out corpus").code, 0);
  }

  fs::path dir_;
};

void expect_single_line_error(const RunResult& r, int code) {
  EXPECT_EQ(r.code, code);
  ASSERT_FALSE(r.err.empty());
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1) << r.err;
  EXPECT_EQ(r.err.rfind("lgeq: error code=" + std::to_string(code) + " kind=", 0), 0u) << r.err;
}

}  // namespace

TEST(CliConfig, RoundTripsThroughJson) {
  cli::RunConfig c;
  c.jobs = 3;
  c.detect.widths[2] = 7;
  c.refine.max_patches_per_member = 99;
  c.segment.mvo = false;
  c.seeds.permtest = 17;
  c.corpus.base.dims = {40, 41, 3};
  c.manifests = {"a.json", "b/c.json"};
  const auto j = cli::to_json(c);
  EXPECT_EQ(cli::to_json(cli::from_json(j)), j);
  EXPECT_EQ(cli::config_hash(cli::from_json(j)), cli::config_hash(c));
  c.seeds.permtest = 18;
  EXPECT_NE(cli::config_hash(c), cli::config_hash(cli::from_json(j)));
}

TEST(CliConfig, RejectsUnknownKeysAndWrongTypes) {
  EXPECT_THROW(cli::from_json({{"bogus", 1}}), ConfigError);
  EXPECT_THROW(cli::from_json({{"refine", {{"memberz", 3}}}}), ConfigError);
  EXPECT_THROW(cli::from_json({{"jobs", "many"}}), ConfigError);
  EXPECT_THROW(cli::from_json({{"detect", {{"widths", {1, 2}}}}}), ConfigError);
}

TEST(CliConfig, Fnv1aReferenceValues) {
  EXPECT_EQ(cli::fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(cli::fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(cli::fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(CliConfig, FoldsPartitionCases) {
  const auto f = cli::fold_of_cases(30, 5, 9);
  std::array<int, 5> n{};
  for (int x : f) ++n[static_cast<std::size_t>(x)];
  for (int k : n) EXPECT_EQ(k, 6);
  EXPECT_EQ(cli::fold_of_cases(30, 5, 9), f);
}

TEST_F(CliTest, MissingManifestIsAUsageError) {
  config({{"manifests", {"nowhere.json"}}});
  expect_single_line_error(run("baselines --config cfg.json"), 1);
}

TEST_F(CliTest, UsageErrors) {
  expect_single_line_error(run(""), 1);
  expect_single_line_error(run("phantom"), 1);
  expect_single_line_error(run("segment --jobs notanumber"), 1);
  expect_single_line_error(run("segment --config missing.json"), 1);
  config({{"unknown_key", true}});
  expect_single_line_error(run("baselines --config cfg.json"), 1);
  EXPECT_EQ(run("--help").code, 0);
}

TEST_F(CliTest, UnreadableDataIsADataError) {
  config();
  make_corpus();
  std::ofstream(dir_ / "corpus" / "case000_image.mhd") << "NDims = 2\n";
  expect_single_line_error(run("baselines --config cfg.json --out b"), 2);
}

TEST_F(CliTest, DivergentTrainingIsANumericError) {
  config({{"refine", {{"train", {{"learning_rate", 1e300}, {"momentum", 0.0}, {"dropout", 0.0}, {"l2", 0.0}, {"epochs", 3}}}}}});
  make_corpus();
  expect_single_line_error(run("train refine --config cfg.json"), 3);
}

TEST_F(CliTest, HealthyPhantomWithDetectionGivesEmptyMasks) {
  config();
  make_corpus();
  ASSERT_EQ(run("train detect --config cfg.json").code, 0);
  ASSERT_EQ(run("train refine --config cfg.json").code, 0);
  ASSERT_EQ(run("detect --config cfg.json --out det").code, 0);
  // Healthy cases are the even indices of a balanced corpus.
  config({{"manifests", {"corpus/case000.json", "corpus/case002.json"}}}, "healthy.json");
  const auto r = run("segment --config healthy.json --out seg");
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* id : {"case000", "case002"})
    for (const char* suffix : {"hyper", "mvo", "final"})
      EXPECT_EQ(count_nonzero(vio::read_mask(dir_ / "seg" / (std::string(id) + "_" + suffix + ".mhd"))), 0u);
  const auto report = vio::read_report(dir_ / "seg" / "segment.csv");
  ASSERT_EQ(report.rows.size(), 2u);
  for (const auto& row : report.rows) EXPECT_EQ(row.scar_volume_cm3, 0.0);
}

TEST_F(CliTest, CoarseOnlyNeedsNoModels) {
  config();
  make_corpus();
  const auto r = run("segment --config cfg.json --out seg --no-detect --no-refine --no-mvo");
  ASSERT_EQ(r.code, 0) << r.err;
  for (int i = 0; i < 4; ++i) {
    const std::string id = "case00" + std::to_string(i);
    EXPECT_EQ(count_nonzero(vio::read_mask(dir_ / "seg" / (id + "_mvo.mhd"))), 0u);
    EXPECT_EQ(vio::read_mask(dir_ / "seg" / (id + "_final.mhd")), vio::read_mask(dir_ / "seg" / (id + "_hyper.mhd")));
  }
  expect_single_line_error(run("segment --config cfg.json --out seg2 --no-detect"), 1);
}

TEST_F(CliTest, RerunsAreByteIdentical) {
  config();
  make_corpus();
  for (const char* tag : {"a", "b"}) {
    const std::string jobs = tag[0] == 'a' ? "1" : "2";
    const std::string m = std::string("models_") + tag;
    config({{"model_dir", m}}, std::string("cfg_") + tag + ".json");
    const std::string c = std::string("--config cfg_") + tag + ".json --jobs " + jobs;
    ASSERT_EQ(run("train detect " + c).code, 0);
    ASSERT_EQ(run("train refine " + c).code, 0);
    ASSERT_EQ(run("segment " + c + " --out seg_" + tag).code, 0);
    ASSERT_EQ(run("baselines " + c + " --out base_" + tag).code, 0);
  }
  for (const char* f : {"detector.json", "ensemble.json"})
    EXPECT_EQ(slurp(dir_ / "models_a" / f), slurp(dir_ / "models_b" / f)) << f;
  for (const auto& e : fs::directory_iterator(dir_ / "seg_a")) {
    if (e.path().filename() == "segment.provenance.json") continue;
    EXPECT_EQ(slurp(e.path()), slurp(dir_ / "seg_b" / e.path().filename())) << e.path();
  }
  for (const auto& e : fs::directory_iterator(dir_ / "base_a")) {
    if (e.path().filename() == "baselines.provenance.json") continue;
    EXPECT_EQ(slurp(e.path()), slurp(dir_ / "base_b" / e.path().filename())) << e.path();
  }
}

TEST_F(CliTest, ProvenanceRecordsHashesAndSeeds) {
  config();
  make_corpus();
  ASSERT_EQ(run("baselines --config cfg.json --out base --seed 42").code, 0);
  const auto p = vio::read_json(dir_ / "base" / "baselines.provenance.json");
  EXPECT_EQ(p["version"], cli::kVersion);
  for (const auto& [k, v] : p["seeds"].items()) EXPECT_EQ(v.get<std::uint64_t>(), 42u) << k;
  EXPECT_EQ(p["config_hash"].get<std::string>(), cli::config_hash(cli::from_json(p["config"])));
  ASSERT_FALSE(p["artifacts"].empty());
  for (const auto& a : p["artifacts"])
    EXPECT_EQ(a["fnv1a64"].get<std::string>(), cli::hex64(cli::fnv1a64(slurp(dir_ / "base" / a["path"].get<std::string>()))));
  const auto report = vio::read_report(dir_ / "base" / "baselines.csv");
  EXPECT_EQ(report.rows.size(), 4u * 9u);
}

TEST_F(CliTest, PermtestAndEvaluateWriteReports) {
  // Three cases per class leave one of each for every test partition.
  config({{"phantom", {{"count", 6}}}});
  make_corpus();
  ASSERT_EQ(run("permtest --config cfg.json --out pt").code, 0);
  const auto s = vio::read_json(dir_ / "pt" / "permtest_summary.json");
  EXPECT_EQ(s["n"], 2);
  const auto csv = slurp(dir_ / "pt" / "permtest.csv");
  EXPECT_EQ(csv.rfind("split,auc_unpermuted,auc_permuted\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  ASSERT_EQ(run("evaluate --config cfg.json --out ev --no-detect").code, 0);
  const auto ev = vio::read_report(dir_ / "ev" / "evaluate.csv");
  EXPECT_EQ(ev.rows.size(), 6u * 11u);
  const auto sum = vio::read_json(dir_ / "ev" / "evaluate_summary.json");
  EXPECT_EQ(sum["folds"].size(), 2u);
}
