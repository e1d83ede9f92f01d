#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <memory>

#include "nobox/core.hpp"

namespace nobox {

struct DenoiserConfig {
  std::int64_t width = 32;
  std::int64_t height = 32;
  std::int64_t channels = 32;
  std::int64_t depth = 4;  // hidden conv layers
  PixelRange pixel_range{};

  void validate() const;
};

// Noise-level-conditioned denoising autoencoder: given y = x + sigma * z it
// predicts x. Stands in for a pre-trained diffusion model's denoiser.
struct DenoiserNet : torch::nn::Module {
  explicit DenoiserNet(const DenoiserConfig& config);
  torch::Tensor forward(torch::Tensor noisy, torch::Tensor sigma);

  torch::nn::Sequential body;
};

class Denoiser {
 public:
  Denoiser(DenoiserConfig config, std::uint64_t seed);

  const DenoiserConfig& config() const { return config_; }
  DenoiserNet& net() const { return *net_; }

  // (N,3,w,h) with per-image noise level; no grad, unclamped.
  torch::Tensor denoise(const torch::Tensor& noisy, double sigma) const;
  torch::Tensor denoise(const torch::Tensor& noisy, const torch::Tensor& sigma) const;

 private:
  DenoiserConfig config_;
  std::shared_ptr<DenoiserNet> net_;
};

}  // namespace nobox
