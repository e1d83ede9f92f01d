#pragma once

// Joint encoder/decoder training. The loss is
//   w_enc * MSE(x_wm, x) + w_dec * MSE((Dec(noise(x_wm)) + 1) / 2, s)
//   + w_critic * BCE(critic(x_wm), "clean")
// with a fresh random secret per sample and one noise layer drawn per batch.

#include "json.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "nobox/data.hpp"
#include "nobox/denoiser.hpp"
#include "nobox/models.hpp"

namespace nobox {

struct TrainConfig {
  double encoder_loss_weight = 0.7;
  double decoder_loss_weight = 4.0;
  double critic_loss_weight = 0.0;
  double learning_rate = 1e-3;
  std::int64_t epochs = 100;
  std::int64_t batch_size = 32;
  // Cosine decay of the learning rate from its initial value to 0 over the
  // epochs; constant otherwise.
  bool cosine_decay = false;
  // The image loss weight grows linearly from 0 to encoder_loss_weight over
  // this many epochs, letting the decoder lock on before fidelity dominates.
  std::int64_t image_loss_ramp_epochs = 0;
  std::vector<NoiseLayerSpec> noise_layers;  // empty means identity only
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochStats {
  double message_loss = 0.0;  // mean over the epoch's batches
  double image_mse = 0.0;     // mean over the epoch's batches
  double val_ba = 0.0;
  double val_mse = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  double final_val_ba = 0.0;
  double final_val_mse = 0.0;
};

struct Fidelity {
  double ba = 0.0;
  double mse = 0.0;
};

// Trains `model` in place and returns per-epoch statistics. Throws
// ErrorKind::kDivergence on a non-finite loss.
using EpochObserver = std::function<void(std::int64_t epoch, const EpochStats&)>;

TrainReport train(WatermarkModel& model, const ImageSet& train_set,
                  const ImageSet& val_set, const TrainConfig& cfg,
                  const EpochObserver& observer = {});

// Mean BA and per-pixel MSE of clamped watermarked images over `set`, with
// secrets drawn from `seed`.
Fidelity evaluate_fidelity(const Watermarker& model, const ImageSet& set,
                           std::uint64_t seed);

inline constexpr double kMaxWatermarkMse = 0.02;

struct GridCandidate {
  TrainConfig config;
  Fidelity fidelity;
};

// Highest validation BA among candidates with MSE < 0.02; kInfeasible when
// none qualifies.
std::size_t select_grid_winner(const std::vector<GridCandidate>& candidates);

struct GridSearchResult {
  std::vector<GridCandidate> candidates;
  std::size_t best = 0;
  const TrainConfig& best_config() const { return candidates[best].config; }
};

GridSearchResult grid_search(const std::function<WatermarkModel()>& factory,
                             const ImageSet& train_set, const ImageSet& val_set,
                             const std::vector<TrainConfig>& grid);

// The encoder-weight x decoder-weight grid used for HiDDeN-CNN tuning.
std::vector<TrainConfig> hidden_loss_weight_grid(const TrainConfig& base);

struct DenoiserTrainConfig {
  double max_sigma = 1.0;
  double learning_rate = 1e-3;
  std::int64_t epochs = 10;
  std::int64_t batch_size = 32;
  std::uint64_t seed = 0;
};

// Trains on (x + sigma z, x) pairs with sigma ~ U(0, max_sigma); returns the
// per-epoch mean reconstruction MSE.
std::vector<double> train_denoiser(Denoiser& denoiser, const ImageSet& train_set,
                                   const DenoiserTrainConfig& cfg);

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainReport& report);
TrainReport train_report_from_json(const nlohmann::json& j);

}  // namespace nobox
