#pragma once

// Network definitions behind build_model. Internal to the library.

#include <torch/torch.h>

#include "nobox/models.hpp"

namespace nobox::detail {

// Conv(3x3, stride 1) -> BatchNorm -> ReLU (the ReLU is optional).
struct ConvBnReluImpl : torch::nn::Module {
  ConvBnReluImpl(std::int64_t in, std::int64_t out, bool relu = true);
  torch::Tensor forward(torch::Tensor x);

  torch::nn::Conv2d conv{nullptr};
  torch::nn::BatchNorm2d bn{nullptr};
  bool relu = true;
};
TORCH_MODULE(ConvBnRelu);

// e: (Conv-BN-ReLU)^n on the image; g: spatial replication of s;
// h: channel concatenation; f: Conv-BN-ReLU then a 1x1 Conv2D on (x_h || x).
struct HiddenEncoder : EncoderNet {
  HiddenEncoder(const ModelConfig& config, int image_blocks);
  torch::Tensor forward(torch::Tensor images, torch::Tensor secrets) override;

  torch::nn::Sequential features;
  ConvBnRelu merge{nullptr};
  torch::nn::Conv2d out{nullptr};
};

// (Conv-BN-ReLU)^7 at width C, one Conv-BN block down to l channels, adaptive
// average pooling to a 4x4 grid and a linear head.
struct HiddenCnnDecoder : DecoderNet {
  static constexpr std::int64_t kPoolGrid = 4;

  explicit HiddenCnnDecoder(const ModelConfig& config);
  torch::Tensor forward(torch::Tensor images) override;

  torch::nn::Sequential blocks;
  torch::nn::Linear head{nullptr};
};

struct BasicBlockImpl : torch::nn::Module {
  BasicBlockImpl(std::int64_t in, std::int64_t out, std::int64_t stride);
  torch::Tensor forward(torch::Tensor x);

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr};
  torch::nn::Sequential shortcut{nullptr};
};
TORCH_MODULE(BasicBlock);

// Reduced residual classifier: stem, four stages of widths 16/32/64/128.
struct ResnetDecoder : DecoderNet {
  explicit ResnetDecoder(const ModelConfig& config);
  torch::Tensor forward(torch::Tensor images) override;

  torch::nn::Sequential stem;
  torch::nn::Sequential stages;
  torch::nn::Linear head{nullptr};
};

// U-Net residual encoder: the secret is projected by a linear layer,
// reshaped to 3 x w/8 x h/8 and upsampled, then concatenated with the
// centered image. Ten Conv2D layers, four of them after an up-sampling,
// with shortcuts from every down level.
struct UnetEncoder : EncoderNet {
  explicit UnetEncoder(const ModelConfig& config);
  torch::Tensor forward(torch::Tensor images, torch::Tensor secrets) override;

  ModelConfig config;
  torch::nn::Linear secret_fc{nullptr};
  torch::nn::Conv2d c0{nullptr}, d1{nullptr}, d2{nullptr}, d3{nullptr},
      d4{nullptr};
  torch::nn::Conv2d u4{nullptr}, u3{nullptr}, u2{nullptr}, u1{nullptr};
  torch::nn::Conv2d out{nullptr};
};

// Strided Conv2D-ReLU stack followed by Linear-ReLU-Linear.
struct ConvStackDecoder : DecoderNet {
  explicit ConvStackDecoder(const ModelConfig& config);
  torch::Tensor forward(torch::Tensor images) override;

  float center;
  torch::nn::Sequential convs;
  torch::nn::Sequential head;
};

struct HiddenCritic : CriticNet {
  explicit HiddenCritic(const ModelConfig& config);
  torch::Tensor forward(torch::Tensor images) override;

  torch::nn::Sequential blocks;
  torch::nn::Linear head{nullptr};
};

}  // namespace nobox::detail
