// nobox: command-line front end for training, calibration, attacks, sweeps
// and reports. Exit code 0 on success; otherwise the ErrorKind value
// (2 invalid argument, 3 infeasible, 4 I/O, 5 divergence, 6 unavailable) or
// 1 for anything unexpected.

#include <CLI11.hpp>
#include <torch/torch.h>

#include <cstdio>
#include <iostream>
#include <optional>

#include "nobox/harness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool config_required = true) {
  auto* opt = cmd->add_option("--config", c.config, "experiment config (JSON)");
  if (config_required) opt->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "overrides the config seed");
  cmd->add_option("--out", c.out, "output directory");
}

nobox::ExperimentConfig load(const Common& c) {
  auto cfg = nobox::load_experiment_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.output_dir = c.out;
  return cfg;
}

json parse_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception&) {
    return text;
  }
}

void print_summary(const std::vector<nobox::RunRecord>& records) {
  for (const auto& r : records) {
    const auto& o = r.outcome;
    std::printf("%s %-12s k=%-3lld evasion=%.4f avg_ba=%.4f linf=%.4f ssim=%.4f time=%.3fs\n",
                r.config_hash.c_str(), o.method.c_str(), static_cast<long long>(o.k),
                o.evasion_rate, o.avg_ba, o.mean_linf, o.mean_ssim, o.wall_seconds);
  }
}

int cmd_train(const Common& c) {
  auto cfg = load(c);
  if (c.seed) {
    for (auto& [_, spec] : cfg.models) {
      spec.init_seed += *c.seed;
      spec.train.seed += *c.seed;
    }
    for (auto& [_, spec] : cfg.denoisers) {
      spec.init_seed += *c.seed;
      spec.train.seed += *c.seed;
    }
  }
  json summary = json::object();
  for (const auto& [name, spec] : cfg.models) {
    nobox::resolve_model(cfg, name);
    const auto dir = nobox::model_cache_path(cfg, name);
    const auto report = nobox::read_json_file(dir / "train_report.json");
    summary[name] = {{"checkpoint", dir.string()},
                     {"final_val_ba", report.at("final_val_ba")},
                     {"final_val_mse", report.at("final_val_mse")}};
    std::printf("%-20s val_ba=%.4f val_mse=%.5f  %s\n", name.c_str(),
                report.at("final_val_ba").get<double>(),
                report.at("final_val_mse").get<double>(), dir.string().c_str());
  }
  for (const auto& [name, spec] : cfg.denoisers) {
    nobox::resolve_denoiser(cfg, name);
    summary[name] = {{"denoiser", true}};
    std::printf("%-20s denoiser ready\n", name.c_str());
  }
  fs::create_directories(cfg.output_dir);
  nobox::write_json_file(cfg.output_dir / "train_summary.json", summary);
  return 0;
}

int cmd_calibrate(const Common& c, std::optional<std::int64_t> length) {
  std::int64_t ell = 0;
  double budget = 1e-4;
  nobox::Tails tails = nobox::Tails::kOne;
  fs::path out = c.out;
  if (!c.config.empty()) {
    const auto cfg = load(c);
    budget = cfg.fpr_budget;
    tails = cfg.tails;
    out = cfg.output_dir;
    if (auto it = cfg.models.find(cfg.victim); it != cfg.models.end())
      ell = it->second.model.secret_length;
    else
      ell = nobox::resolve_model(cfg, cfg.victim)->secret_length();
  }
  if (length) ell = *length;
  nobox::require(ell >= 1, "calibrate needs --config or --length");
  const auto p = nobox::calibrate_threshold(ell, budget, tails);
  const json j = {{"secret_length", p.secret_length}, {"fpr_budget", p.fpr_budget},
                  {"tails", std::string(nobox::to_string(p.tails))}, {"tau", p.tau},
                  {"delta", p.delta()}, {"fpr", p.fpr}, {"feasible", p.feasible}};
  std::printf("%s\n", j.dump(2).c_str());
  if (!out.empty()) {
    fs::create_directories(out);
    nobox::write_json_file(out / "calibration.json", j);
  }
  return p.feasible ? 0 : static_cast<int>(nobox::ErrorKind::kInfeasible);
}

int cmd_attack(const Common& c) {
  const auto cfg = load(c);
  std::vector<nobox::RunRecord> records{nobox::run_experiment(cfg)};
  nobox::emit_report(records, cfg.output_dir);
  print_summary(records);
  return 0;
}

int cmd_sweep(const Common& c, const std::string& axis,
              const std::vector<std::string>& raw_values) {
  const auto cfg = load(c);
  std::vector<json> values;
  for (const auto& v : raw_values) values.push_back(parse_value(v));
  auto records = nobox::sweep(cfg, axis, values);
  nobox::emit_report(records, cfg.output_dir);

  std::string table = axis + ",attack,k,evasion_rate,avg_ba,mean_linf,mean_ssim,"
                             "wall_seconds,config_hash\n";
  char buf[256];
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& o = records[i].outcome;
    std::snprintf(buf, sizeof(buf), ",%s,%lld,%.6f,%.6f,%.6f,%.6f,%.6f,%s\n",
                  o.method.c_str(), static_cast<long long>(o.k), o.evasion_rate, o.avg_ba,
                  o.mean_linf, o.mean_ssim, o.wall_seconds,
                  records[i].config_hash.c_str());
    const auto v = values[i].is_string() ? values[i].get<std::string>() : values[i].dump();
    table += "\"" + v + "\"" + buf;
  }
  std::FILE* f = std::fopen((cfg.output_dir / ("sweep_" + axis + ".csv")).c_str(), "wb");
  if (!f) nobox::fail(nobox::ErrorKind::kIo, "cannot write the sweep table");
  std::fputs(table.c_str(), f);
  std::fclose(f);
  print_summary(records);
  return 0;
}

int cmd_report(const Common& c, const std::vector<std::string>& inputs) {
  fs::path out = c.out;
  std::vector<std::string> dirs = inputs;
  if (!c.config.empty()) {
    const auto cfg = load(c);
    if (dirs.empty()) dirs.push_back(cfg.output_dir.string());
    if (out.empty()) out = cfg.output_dir;
  }
  nobox::require(!dirs.empty(), "report needs --config or --in");
  if (out.empty()) out = dirs.front();
  std::vector<json> aggregates;
  for (const auto& d : dirs)
    for (auto& j : nobox::read_report(d)) aggregates.push_back(std::move(j));
  nobox::require(!aggregates.empty(), "no run records found");
  const auto files = nobox::write_summary(aggregates, out);
  std::printf("%s", nobox::comparison_table_csv(aggregates).c_str());
  std::printf("wrote %s\n", files.table.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  at::set_num_threads(1);
  CLI::App app{"No-box watermark evasion benchmark"};
  app.require_subcommand(1);

  Common train_c, cal_c, attack_c, sweep_c, report_c;
  auto* train = app.add_subcommand("train", "train and cache every model in the config");
  add_common(train, train_c);

  auto* cal = app.add_subcommand("calibrate", "detection threshold for the victim");
  add_common(cal, cal_c, false);
  std::optional<std::int64_t> length;
  cal->add_option("--length", length, "secret length (overrides the victim's)");

  auto* attack = app.add_subcommand("attack", "run one experiment");
  add_common(attack, attack_c);

  auto* sw = app.add_subcommand("sweep", "run one experiment per axis value");
  add_common(sw, sweep_c);
  std::string axis;
  std::vector<std::string> values;
  sw->add_option("--axis", axis, "config field to vary")->required();
  sw->add_option("--values", values, "values (JSON literals)")->required()->delimiter(',');

  auto* report = app.add_subcommand("report", "comparison table and plots from runs");
  add_common(report, report_c, false);
  std::vector<std::string> inputs;
  report->add_option("--in", inputs, "run directories to collect");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(nobox::ErrorKind::kInvalidArgument);
  }

  try {
    if (*train) return cmd_train(train_c);
    if (*cal) return cmd_calibrate(cal_c, length);
    if (*attack) return cmd_attack(attack_c);
    if (*sw) return cmd_sweep(sweep_c, axis, values);
    if (*report) return cmd_report(report_c, inputs);
  } catch (const nobox::Error& e) {
    std::fprintf(stderr, "error [%s]: %s\n", nobox::to_string(e.kind()), e.what());
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error [internal]: %s\n", e.what());
    return 1;
  }
  return 0;
}
