#pragma once

// Config-driven experiments. A configuration names a victim and surrogates
// (trained on demand from inline model specs and cached by content hash, or
// loaded from checkpoint directories), an attack with its parameters, the
// detection budget and the test-set size. Running it watermarks fresh test
// images with the victim, attacks them, detects with the calibrated policy
// and collects an AttackOutcome.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "nobox/attacks.hpp"
#include "nobox/checkpoint.hpp"
#include "nobox/data.hpp"
#include "nobox/detection.hpp"
#include "nobox/metrics.hpp"
#include "nobox/training.hpp"

namespace nobox {

// A watermark model trained from scratch on synthetic data.
struct ModelSpec {
  ModelConfig model;
  TrainConfig train;
  std::uint64_t init_seed = 0;
  std::uint64_t data_seed = 1;
  std::int64_t train_images = 2000;
  std::int64_t val_images = 200;
};

struct DenoiserSpec {
  DenoiserConfig model;
  DenoiserTrainConfig train;
  std::uint64_t init_seed = 0;
  std::uint64_t data_seed = 1;
  std::int64_t train_images = 2000;
};

struct AttackSpec {
  // none | oft | opt_transfer | regen | diffpure | gaussian | crop_resize
  std::string name = "oft";
  std::int64_t k = 1;  // surrogates used, taken in list order
  double r = 0.25;
  bool normalize = true;
  Aggregation aggregation = Aggregation::kMean;
  double gamma = 0.2;
  std::int64_t max_iters = 200;
  double t = 0.1;
  double steps_per_unit_t = 500.0;
  double sigma = 0.1;  // regen, gaussian
  double crop_fraction = 0.8;
  RegenMode mode = RegenMode::kETN;
  std::string denoiser;  // regen, diffpure
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::int64_t width = 32;
  std::int64_t height = 32;
  PixelRange range{};
  std::int64_t n_images = 200;
  std::uint64_t seed = 0;
  // Test images come from the synthetic generator unless a directory is set.
  std::uint64_t test_data_seed = 9001;
  std::filesystem::path test_data_dir;

  std::map<std::string, ModelSpec> models;
  std::map<std::string, DenoiserSpec> denoisers;
  // A key of `models` or a checkpoint directory.
  std::string victim;
  std::vector<std::string> surrogates;
  AttackSpec attack;
  double fpr_budget = 1e-4;
  Tails tails = Tails::kOne;

  std::filesystem::path cache_dir = "nobox-cache";
  std::filesystem::path output_dir = "nobox-out";

  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
// Missing fields keep their defaults; unknown top-level keys are rejected.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& file);

// FNV-1a (64 bit) of the canonical JSON of everything that influences the
// numbers: directories are excluded. Rendered as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);
std::string json_hash(const nlohmann::json& j);

// Trains (or loads from `cache_dir`) the model behind a reference.
std::shared_ptr<WatermarkModel> resolve_model(const ExperimentConfig& cfg,
                                              const std::string& ref);
std::shared_ptr<Denoiser> resolve_denoiser(const ExperimentConfig& cfg,
                                           const std::string& ref);
std::filesystem::path model_cache_path(const ExperimentConfig& cfg,
                                       const std::string& name);

struct RunRecord {
  std::string config_hash;
  nlohmann::json config;  // fully resolved
  AttackOutcome outcome;
  DetectionPolicy policy;
  std::filesystem::path csv_path;  // set by emit_report
  std::string started_at;          // ISO-8601 UTC
  std::string finished_at;
  std::string code_version;
};

RunRecord run_experiment(const ExperimentConfig& cfg);

// Axes a sweep may vary.
const std::vector<std::string>& sweep_axes();
ExperimentConfig with_axis_value(const ExperimentConfig& cfg,
                                 const std::string& axis,
                                 const nlohmann::json& value);
std::vector<RunRecord> sweep(const ExperimentConfig& cfg, const std::string& axis,
                             const std::vector<nlohmann::json>& values);

// The aggregate record of one run: the fixed metric fields plus the secret
// length, detection threshold, resolved config and config hash. Every field
// except wall_seconds is a deterministic function of (config, seed).
nlohmann::json run_json(const RunRecord& record);

// Aggregates (as produced by run_json) sorted by (attack, k), then by
// config hash.
std::vector<nlohmann::json> comparison_order(std::vector<nlohmann::json> aggregates);
std::string comparison_table_csv(const std::vector<nlohmann::json>& aggregates);

struct ReportFiles {
  std::vector<std::filesystem::path> json;
  std::vector<std::filesystem::path> csv;
  std::filesystem::path table;
  std::vector<std::filesystem::path> plots;
};

// Writes <hash>.json and <hash>.csv per record, comparison.csv, and the SVG
// plots evasion_vs_k.svg, ba_vs_k.svg and runtime.svg into `dir`.
ReportFiles emit_report(std::vector<RunRecord>& records,
                        const std::filesystem::path& dir);

// comparison.csv plus the three plots from aggregate records alone.
ReportFiles write_summary(const std::vector<nlohmann::json>& aggregates,
                          const std::filesystem::path& dir);

// Reads back the <hash>.json aggregates of a report directory.
std::vector<nlohmann::json> read_report(const std::filesystem::path& dir);

}  // namespace nobox
