#include "nobox/denoiser.hpp"

#include <mutex>

namespace nobox {

namespace nn = torch::nn;

void DenoiserConfig::validate() const {
  require(width >= kMinImageSide && height >= kMinImageSide,
          "image sides must be at least 8");
  require(channels >= 1 && depth >= 1, "denoiser width and depth must be positive");
  require(pixel_range.lo < pixel_range.hi, "pixel range must have lo < hi");
}

DenoiserNet::DenoiserNet(const DenoiserConfig& config) {
  const auto c = config.channels;
  body->push_back(nn::Conv2d(nn::Conv2dOptions(4, c, 3).padding(1)));
  body->push_back(nn::ReLU());
  for (std::int64_t i = 1; i < config.depth; ++i) {
    body->push_back(nn::Conv2d(nn::Conv2dOptions(c, c, 3).padding(1)));
    body->push_back(nn::ReLU());
  }
  body->push_back(nn::Conv2d(nn::Conv2dOptions(c, 3, 3).padding(1)));
  register_module("body", body);
}

torch::Tensor DenoiserNet::forward(torch::Tensor noisy, torch::Tensor sigma) {
  auto level = sigma.view({-1, 1, 1, 1}).expand(
      {noisy.size(0), 1, noisy.size(2), noisy.size(3)});
  return noisy + body->forward(torch::cat({noisy, level}, 1));
}

Denoiser::Denoiser(DenoiserConfig config, std::uint64_t seed)
    : config_(config) {
  config_.validate();
  static std::mutex init_mutex;
  std::lock_guard lock(init_mutex);
  torch::manual_seed(seed);
  net_ = std::make_shared<DenoiserNet>(config_);
  net_->eval();
}

torch::Tensor Denoiser::denoise(const torch::Tensor& noisy, double sigma) const {
  return denoise(noisy, torch::full({noisy.size(0)}, sigma, torch::kFloat32));
}

torch::Tensor Denoiser::denoise(const torch::Tensor& noisy,
                                const torch::Tensor& sigma) const {
  require(noisy.dim() == 4 && noisy.size(1) == 3 &&
              noisy.size(2) == config_.width && noisy.size(3) == config_.height,
          "image batch does not match the denoiser's (3, w, h)");
  torch::NoGradGuard no_grad;
  return net_->forward(noisy, sigma.to(torch::kFloat32));
}

}  // namespace nobox
