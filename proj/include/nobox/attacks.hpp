#pragma once

// No-box evasion attacks. All batched entry points take (N, 3, w, h)
// watermarked images in `range` and return attacked images clamped to it.

#include <torch/torch.h>

#include <functional>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "nobox/core.hpp"
#include "nobox/denoiser.hpp"
#include "nobox/models.hpp"

namespace nobox {

struct AttackBudget {
  double r = 0.25;
  bool normalize = true;

  void validate() const;
};

enum class Aggregation { kMean, kMedian };

std::string_view to_string(Aggregation a);
Aggregation aggregation_from_string(std::string_view name);

struct SurrogateEnsemble {
  std::vector<std::shared_ptr<const Watermarker>> models;
  Aggregation aggregation = Aggregation::kMean;

  std::size_t size() const { return models.size(); }
  // Non-empty; every model shares (w, h, pixel range) with the images.
  void validate(std::int64_t width, std::int64_t height, PixelRange range) const;
};

// Optimization-free transfer: each surrogate decodes x_wm, flips the bits,
// and re-embeds the flipped secret into x_wm; the residuals are aggregated
// pixel-wise, optionally clamped to [-r, r], and added back. Exactly one
// decode and one embed call per surrogate.
torch::Tensor oft_attack(const torch::Tensor& x_wm, const SurrogateEnsemble& ens,
                         const AttackBudget& budget, PixelRange range);
ImageTensor oft_attack(const ImageTensor& x_wm, const SurrogateEnsemble& ens,
                       const AttackBudget& budget);

struct TransferOptConfig {
  double r = 0.25;
  double gamma = 0.2;  // stop once mean BA to the flipped targets > 1 - gamma
  std::int64_t max_iters = 200;
  std::optional<double> step_size;  // defaults to r / 10

  double step() const { return step_size.value_or(r / 10.0); }
  void validate() const;
};

struct TransferOptResult {
  torch::Tensor images;            // attacked, clamped
  torch::Tensor perturbation;      // images - x_wm before pixel clamping
  std::vector<bool> converged;     // BA constraint met
  std::vector<std::int64_t> iterations;
};

// Observer sees every iterate of the perturbation (after projection).
using IterateObserver = std::function<void(std::int64_t, const torch::Tensor&)>;

// Projected sign-gradient descent on
//   mean_i MSE(sigmoid(Dec_i(x_wm + eps)), flip(Dec_i(x_wm)))
// over ||eps||_inf <= r, per image, until the mean BA to the flipped targets
// exceeds 1 - gamma. Images that never meet it keep their lowest-objective
// iterate.
TransferOptResult opt_transfer_attack(const torch::Tensor& x_wm,
                                      const SurrogateEnsemble& ens,
                                      const TransferOptConfig& cfg,
                                      PixelRange range,
                                      const IterateObserver& observer = {});

using ImageMap = std::function<torch::Tensor(const torch::Tensor&)>;

enum class RegenMode { kNR, kNTE, kETN };

std::string_view to_string(RegenMode mode);
RegenMode regen_mode_from_string(std::string_view name);

// NR: A(phi(x)); NTE: A(phi(x + eta)); ETN: A(phi(x) + eta), eta ~ N(0, s^2).
torch::Tensor regenerate(const torch::Tensor& x_wm, RegenMode mode, double sigma,
                         const ImageMap& denoiser, const ImageMap& projector,
                         PixelRange range, torch::Generator& gen);

// Alpha-bar schedule on t in [0, 1]: 1 at t = 0, 0 at t = 1, decreasing.
using AlphaBarSchedule = std::function<double(double)>;
AlphaBarSchedule linear_alpha_bar();

struct DiffPureConfig {
  double t = 0.1;
  AlphaBarSchedule alpha_bar = linear_alpha_bar();
  std::shared_ptr<const Denoiser> denoiser;
  // Deterministic reverse steps per unit of t (at least one step).
  double steps_per_unit_t = 500.0;

  void validate() const;
  std::int64_t reverse_steps() const;
};

// x_t ~ N(sqrt(ab) x, (1 - ab) I).
torch::Tensor diffusion_noise(const torch::Tensor& x, double alpha_bar,
                              torch::Generator& gen);

// Runs the reverse process from time t to 0 with the denoiser (DDIM updates)
// and returns the final clean estimate, clamped.
torch::Tensor reverse_diffusion(const torch::Tensor& x_t, const DiffPureConfig& cfg,
                                PixelRange range);

torch::Tensor diffpure_attack(const torch::Tensor& x_wm, const DiffPureConfig& cfg,
                              PixelRange range, std::uint64_t seed);
ImageTensor diffpure_attack(const ImageTensor& x_wm, const DiffPureConfig& cfg,
                            std::uint64_t seed);

// Non-learning distortions share the noise-layer semantics.
torch::Tensor distortion_attack(const torch::Tensor& x_wm,
                                const NoiseLayerSpec& spec, PixelRange range,
                                std::uint64_t seed);
ImageTensor distortion_attack(const ImageTensor& x_wm, const NoiseLayerSpec& spec,
                              std::uint64_t seed);

// JPEG and other codecs are not bundled; an application may register one.
using ExternalCodec = std::function<torch::Tensor(const torch::Tensor&, int quality)>;

class CodecSlot {
 public:
  void register_codec(ExternalCodec codec) { codec_ = std::move(codec); }
  bool available() const { return static_cast<bool>(codec_); }
  // Throws ErrorKind::kUnavailable when no codec is registered.
  torch::Tensor apply(const torch::Tensor& x, int quality, PixelRange range) const;

 private:
  ExternalCodec codec_;
};

}  // namespace nobox
