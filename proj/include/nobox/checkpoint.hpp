#pragma once

// A checkpoint is a directory holding `manifest.json` (family, l, w, h,
// pixel range, seed, training metadata, tensor names) and `weights.pt`, a
// LibTorch archive of every named parameter and buffer.

#include <filesystem>

#include "json.hpp"
#include "nobox/denoiser.hpp"
#include "nobox/models.hpp"

namespace nobox {

void save_checkpoint(const WatermarkModel& model, const std::filesystem::path& dir);
WatermarkModel load_checkpoint(const std::filesystem::path& dir);

void save_denoiser(const Denoiser& denoiser, const std::filesystem::path& dir);
Denoiser load_denoiser(const std::filesystem::path& dir);

bool is_checkpoint_dir(const std::filesystem::path& dir);

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DenoiserConfig& config);
DenoiserConfig denoiser_config_from_json(const nlohmann::json& j);

nlohmann::json read_json_file(const std::filesystem::path& file);
void write_json_file(const std::filesystem::path& file, const nlohmann::json& j);

}  // namespace nobox
