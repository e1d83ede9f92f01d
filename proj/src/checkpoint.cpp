#include "nobox/checkpoint.hpp"

#include <fstream>

namespace nobox {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

json range_json(PixelRange r) { return json::array({r.lo, r.hi}); }

PixelRange range_from_json(const json& j) {
  return {j.at(0).get<float>(), j.at(1).get<float>()};
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create directory " + dir.string());
}

void write_tensors(const std::vector<std::pair<std::string, torch::Tensor>>& named,
                   const fs::path& file) {
  torch::serialize::OutputArchive archive;
  for (const auto& [name, t] : named) archive.write(name, t.detach().clone());
  try {
    archive.save_to(file.string());
  } catch (const c10::Error& e) {
    fail(ErrorKind::kIo, "cannot write " + file.string() + ": " + e.what_without_backtrace());
  }
}

void read_tensors(std::vector<std::pair<std::string, torch::Tensor>>& named,
                  const fs::path& file) {
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(file.string());
  } catch (const c10::Error& e) {
    fail(ErrorKind::kIo, "cannot read " + file.string() + ": " + e.what_without_backtrace());
  }
  torch::NoGradGuard no_grad;
  for (auto& [name, t] : named) {
    torch::Tensor stored;
    if (!archive.try_read(name, stored))
      fail(ErrorKind::kIo, file.string() + " lacks tensor '" + name + "'");
    require(stored.sizes() == t.sizes(), "tensor '" + name + "' has the wrong shape");
    t.copy_(stored);
  }
}

json tensor_names(const std::vector<std::pair<std::string, torch::Tensor>>& named) {
  json names = json::array();
  for (const auto& [name, t] : named) names.push_back(name);
  return names;
}

}  // namespace

json read_json_file(const fs::path& file) {
  std::ifstream in(file);
  if (!in) fail(ErrorKind::kIo, "cannot open " + file.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::kInvalidArgument, file.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& file, const json& j) {
  if (file.has_parent_path()) ensure_dir(file.parent_path());
  std::ofstream out(file);
  if (!out) fail(ErrorKind::kIo, "cannot write " + file.string());
  out << j.dump(2) << '\n';
}

json to_json(const ModelConfig& c) {
  return {{"family", std::string(to_string(c.family))},
          {"secret_length", c.secret_length},
          {"width", c.width},
          {"height", c.height},
          {"channels", c.channels},
          {"pixel_range", range_json(c.pixel_range)},
          {"with_critic", c.with_critic},
          {"mbrs_alignment", c.mbrs_alignment}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.family = family_from_string(j.value("family", std::string("HIDDEN_CNN")));
  c.secret_length = j.value("secret_length", c.secret_length);
  c.width = j.value("width", c.width);
  c.height = j.value("height", c.height);
  c.channels = j.value("channels", c.channels);
  if (j.contains("pixel_range")) c.pixel_range = range_from_json(j.at("pixel_range"));
  c.with_critic = j.value("with_critic", false);
  c.mbrs_alignment = j.value("mbrs_alignment", false);
  c.validate();
  return c;
}

json to_json(const DenoiserConfig& c) {
  return {{"width", c.width},
          {"height", c.height},
          {"channels", c.channels},
          {"depth", c.depth},
          {"pixel_range", range_json(c.pixel_range)}};
}

DenoiserConfig denoiser_config_from_json(const json& j) {
  DenoiserConfig c;
  c.width = j.value("width", c.width);
  c.height = j.value("height", c.height);
  c.channels = j.value("channels", c.channels);
  c.depth = j.value("depth", c.depth);
  if (j.contains("pixel_range")) c.pixel_range = range_from_json(j.at("pixel_range"));
  c.validate();
  return c;
}

bool is_checkpoint_dir(const fs::path& dir) {
  return fs::is_regular_file(dir / "manifest.json") &&
         fs::is_regular_file(dir / "weights.pt");
}

void save_checkpoint(const WatermarkModel& model, const fs::path& dir) {
  ensure_dir(dir);
  const auto named = model.named_state();
  const auto& meta = model.meta();
  json manifest = {
      {"format", "nobox-watermark-model"},
      {"version", kFormatVersion},
      {"config", to_json(model.config())},
      {"training_meta",
       {{"dataset_id", meta.dataset_id},
        {"seed", meta.seed},
        {"epochs", meta.epochs},
        {"optimizer", meta.optimizer}}},
      {"tensors", tensor_names(named)}};
  write_tensors(named, dir / "weights.pt");
  write_json_file(dir / "manifest.json", manifest);
}

WatermarkModel load_checkpoint(const fs::path& dir) {
  if (!is_checkpoint_dir(dir))
    fail(ErrorKind::kIo, "not a checkpoint directory: " + dir.string());
  const auto manifest = read_json_file(dir / "manifest.json");
  if (manifest.value("format", std::string()) != "nobox-watermark-model")
    fail(ErrorKind::kIo, dir.string() + " holds a different checkpoint format");
  const auto config = model_config_from_json(manifest.at("config"));
  const auto& m = manifest.at("training_meta");
  TrainingMeta meta{m.value("dataset_id", std::string()), m.value("seed", std::uint64_t{0}),
                    m.value("epochs", std::int64_t{0}), m.value("optimizer", std::string())};

  auto model = build_model(config, meta.seed);
  auto named = model.named_state();
  read_tensors(named, dir / "weights.pt");
  model.set_meta(meta);
  model.set_training(false);
  return model;
}

void save_denoiser(const Denoiser& denoiser, const fs::path& dir) {
  ensure_dir(dir);
  std::vector<std::pair<std::string, torch::Tensor>> named;
  for (const auto& p : denoiser.net().named_parameters()) named.emplace_back(p.key(), p.value());
  json manifest = {{"format", "nobox-denoiser"},
                   {"version", kFormatVersion},
                   {"config", to_json(denoiser.config())},
                   {"tensors", tensor_names(named)}};
  write_tensors(named, dir / "weights.pt");
  write_json_file(dir / "manifest.json", manifest);
}

Denoiser load_denoiser(const fs::path& dir) {
  if (!is_checkpoint_dir(dir))
    fail(ErrorKind::kIo, "not a checkpoint directory: " + dir.string());
  const auto manifest = read_json_file(dir / "manifest.json");
  if (manifest.value("format", std::string()) != "nobox-denoiser")
    fail(ErrorKind::kIo, dir.string() + " does not hold a denoiser");
  Denoiser d(denoiser_config_from_json(manifest.at("config")), 0);
  std::vector<std::pair<std::string, torch::Tensor>> named;
  for (const auto& p : d.net().named_parameters()) named.emplace_back(p.key(), p.value());
  read_tensors(named, dir / "weights.pt");
  d.net().eval();
  return d;
}

}  // namespace nobox
