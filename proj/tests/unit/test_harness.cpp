#include <gtest/gtest.h>

#include <fstream>

#include "nobox/harness.hpp"

using namespace nobox;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("nobox-harness-" + name + "-" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ModelSpec tiny_spec(Family f, std::uint64_t seed) {
  ModelSpec s;
  s.model.family = f;
  s.model.secret_length = 16;
  s.model.width = 16;
  s.model.height = 16;
  s.model.channels = 4;
  s.train.epochs = 1;
  s.train.batch_size = 4;
  s.init_seed = seed;
  s.train_images = 8;
  s.val_images = 4;
  return s;
}

ExperimentConfig tiny_config(const fs::path& dir) {
  ExperimentConfig c;
  c.name = "tiny";
  c.width = 16;
  c.height = 16;
  c.n_images = 6;
  c.seed = 3;
  c.models["victim"] = tiny_spec(Family::kHiddenCnn, 1);
  c.models["s1"] = tiny_spec(Family::kHiddenCnn, 2);
  c.models["s2"] = tiny_spec(Family::kUnetShortcut, 3);
  c.victim = "victim";
  c.surrogates = {"s1", "s2"};
  c.attack.name = "oft";
  c.cache_dir = dir / "cache";
  c.output_dir = dir / "out";
  return c;
}

json without_wall(json j) {
  j.erase("wall_seconds");
  return j;
}

}  // namespace

TEST(Harness, ConfigJsonRoundTrip) {
  const auto c = tiny_config("/tmp/x");
  const auto j = to_json(c);
  EXPECT_EQ(to_json(experiment_config_from_json(j)), j);
  EXPECT_EQ(config_hash(experiment_config_from_json(j)), config_hash(c));
}

TEST(Harness, RejectsUnknownKeys) {
  auto j = to_json(tiny_config("/tmp/x"));
  j["colour"] = 1;
  EXPECT_THROW(experiment_config_from_json(j), Error);
  j = to_json(tiny_config("/tmp/x"));
  j["attack"]["radius"] = 0.1;
  EXPECT_THROW(experiment_config_from_json(j), Error);
  j = to_json(tiny_config("/tmp/x"));
  j["attack"]["name"] = "jpeg_magic";
  EXPECT_THROW(experiment_config_from_json(j), Error);
  j = to_json(tiny_config("/tmp/x"));
  j["attack"]["k"] = 3;
  EXPECT_THROW(experiment_config_from_json(j), Error);
}

TEST(Harness, HashIgnoresDirectoriesAndName) {
  auto a = tiny_config("/tmp/a");
  auto b = tiny_config("/tmp/b");
  b.name = "other";
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
  b.attack.r = 0.2;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(json_hash(json::object()), "08f44b07b5901a25");  // FNV-1a 64 of "{}"
}

TEST(Harness, SweepAxes) {
  const auto c = tiny_config("/tmp/x");
  EXPECT_EQ(with_axis_value(c, "k", 2).attack.k, 2);
  EXPECT_DOUBLE_EQ(with_axis_value(c, "r", 0.1).attack.r, 0.1);
  EXPECT_EQ(with_axis_value(c, "aggregation", "MEDIAN").attack.aggregation,
            Aggregation::kMedian);
  EXPECT_THROW(with_axis_value(c, "colour", 1), Error);
  EXPECT_THROW(with_axis_value(c, "k", 5), Error);
  for (const auto& a : sweep_axes()) EXPECT_FALSE(a.empty());
}

TEST(Harness, ComparisonOrder) {
  std::vector<json> rows = {
      {{"method", "oft"}, {"k", 2}, {"config_hash", "b"}},
      {{"method", "diffpure"}, {"k", 0}, {"config_hash", "z"}},
      {{"method", "oft"}, {"k", 1}, {"config_hash", "c"}},
      {{"method", "oft"}, {"k", 1}, {"config_hash", "a"}},
  };
  const auto sorted = comparison_order(rows);
  std::vector<std::string> hashes;
  for (const auto& r : sorted) hashes.push_back(r.at("config_hash"));
  EXPECT_EQ(hashes, (std::vector<std::string>{"z", "a", "c", "b"}));
}

TEST(Harness, RunIsReproducibleAndReported) {
  const auto dir = scratch_dir("run");
  const auto cfg = tiny_config(dir);
  auto first = run_experiment(cfg);
  EXPECT_TRUE(fs::exists(model_cache_path(cfg, "victim") / "manifest.json"));
  EXPECT_TRUE(fs::exists(model_cache_path(cfg, "victim") / "train_report.json"));
  auto second = run_experiment(cfg);
  EXPECT_EQ(without_wall(run_json(first)).dump(), without_wall(run_json(second)).dump());
  EXPECT_EQ(first.config_hash, config_hash(cfg));
  EXPECT_EQ(first.outcome.images.size(), 6u);
  for (const auto& im : first.outcome.images) EXPECT_LE(im.linf, 0.25);

  std::vector<RunRecord> records{first};
  const auto files = emit_report(records, cfg.output_dir);
  ASSERT_EQ(files.json.size(), 1u);
  EXPECT_TRUE(fs::exists(files.json[0]));
  EXPECT_TRUE(fs::exists(files.csv[0]));
  EXPECT_TRUE(fs::exists(files.table));
  EXPECT_EQ(files.plots.size(), 3u);
  for (const auto& p : files.plots) EXPECT_TRUE(fs::exists(p));
  const auto back = read_report(cfg.output_dir);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0], run_json(first));
  fs::remove_all(dir);
}

TEST(Harness, SweepOverK) {
  const auto dir = scratch_dir("sweep");
  const auto cfg = tiny_config(dir);
  const auto recs = sweep(cfg, "k", {1, 2});
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].outcome.k, 1);
  EXPECT_EQ(recs[1].outcome.k, 2);
  EXPECT_NE(recs[0].config_hash, recs[1].config_hash);
  fs::remove_all(dir);
}

TEST(Harness, InfeasiblePolicyIsRejected) {
  const auto dir = scratch_dir("infeasible");
  auto cfg = tiny_config(dir);
  cfg.fpr_budget = 1e-6;  // no threshold on 16 bits achieves this
  try {
    run_experiment(cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInfeasible);
  }
  fs::remove_all(dir);
}

TEST(Harness, LoadAnchorsRelativeDirectories) {
  const auto dir = scratch_dir("load");
  auto j = to_json(tiny_config(dir));
  j["cache_dir"] = "c";
  j["output_dir"] = "o";
  {
    std::ofstream(dir / "cfg.json") << j.dump(2);
  }
  const auto c = load_experiment_config(dir / "cfg.json");
  EXPECT_EQ(c.cache_dir, dir / "c");
  EXPECT_EQ(c.output_dir, dir / "o");
  fs::remove_all(dir);
}
