#include "networks.hpp"

namespace nobox::detail {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace {

nn::Conv2d conv3x3(std::int64_t in, std::int64_t out, std::int64_t stride = 1) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

torch::Tensor upsample2(const torch::Tensor& x) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .scale_factor(std::vector<double>{2.0, 2.0})
                               .mode(torch::kNearest));
}

}  // namespace

ConvBnReluImpl::ConvBnReluImpl(std::int64_t in, std::int64_t out, bool relu)
    : conv(register_module("conv", conv3x3(in, out))),
      bn(register_module("bn", nn::BatchNorm2d(out))),
      relu(relu) {}

torch::Tensor ConvBnReluImpl::forward(torch::Tensor x) {
  auto y = bn(conv(x));
  return relu ? torch::relu(y) : y;
}

HiddenEncoder::HiddenEncoder(const ModelConfig& config, int image_blocks) {
  const auto c = config.channels;
  features->push_back(ConvBnRelu(3, c));
  for (int i = 1; i < image_blocks; ++i) features->push_back(ConvBnRelu(c, c));
  register_module("features", features);
  merge = register_module("merge",
                          ConvBnRelu(c + config.secret_length + 3, c));
  out = register_module("out", nn::Conv2d(nn::Conv2dOptions(c, 3, 1)));
}

torch::Tensor HiddenEncoder::forward(torch::Tensor images, torch::Tensor secrets) {
  auto x_e = features->forward(images);
  // Bits enter as +-1 planes.
  auto s_g = (secrets * 2 - 1).view({secrets.size(0), secrets.size(1), 1, 1})
                 .expand({-1, -1, images.size(2), images.size(3)});
  return out(merge(torch::cat({x_e, s_g, images}, 1)));
}

HiddenCnnDecoder::HiddenCnnDecoder(const ModelConfig& config) {
  const auto c = config.channels;
  blocks->push_back(ConvBnRelu(3, c));
  for (int i = 1; i < 7; ++i) blocks->push_back(ConvBnRelu(c, c));
  blocks->push_back(ConvBnRelu(c, config.secret_length, false));
  register_module("blocks", blocks);
  head = register_module(
      "head", nn::Linear(config.secret_length * kPoolGrid * kPoolGrid,
                         config.secret_length));
}

torch::Tensor HiddenCnnDecoder::forward(torch::Tensor images) {
  auto x = blocks->forward(images);
  x = F::adaptive_avg_pool2d(x, F::AdaptiveAvgPool2dFuncOptions(kPoolGrid)).flatten(1);
  return head(x);
}

BasicBlockImpl::BasicBlockImpl(std::int64_t in, std::int64_t out,
                               std::int64_t stride)
    : conv1(register_module("conv1", conv3x3(in, out, stride))),
      conv2(register_module("conv2", conv3x3(out, out))),
      bn1(register_module("bn1", nn::BatchNorm2d(out))),
      bn2(register_module("bn2", nn::BatchNorm2d(out))) {
  if (stride != 1 || in != out) {
    shortcut = register_module(
        "shortcut",
        nn::Sequential(
            nn::Conv2d(nn::Conv2dOptions(in, out, 1).stride(stride)),
            nn::BatchNorm2d(out)));
  }
}

torch::Tensor BasicBlockImpl::forward(torch::Tensor x) {
  auto y = bn2(conv2(torch::relu(bn1(conv1(x)))));
  return torch::relu(y + (shortcut ? shortcut->forward(x) : x));
}

ResnetDecoder::ResnetDecoder(const ModelConfig& config) {
  stem->push_back(conv3x3(3, 16));
  stem->push_back(nn::BatchNorm2d(16));
  stem->push_back(nn::ReLU());
  register_module("stem", stem);
  stages->push_back(BasicBlock(16, 16, 1));
  stages->push_back(BasicBlock(16, 32, 2));
  stages->push_back(BasicBlock(32, 64, 2));
  stages->push_back(BasicBlock(64, 128, 2));
  register_module("stages", stages);
  head = register_module("head", nn::Linear(128, config.secret_length));
}

torch::Tensor ResnetDecoder::forward(torch::Tensor images) {
  auto x = stages->forward(stem->forward(images));
  x = F::adaptive_avg_pool2d(x, F::AdaptiveAvgPool2dFuncOptions(1)).flatten(1);
  return head(x);
}

UnetEncoder::UnetEncoder(const ModelConfig& cfg) : config(cfg) {
  const auto c = cfg.channels;
  const auto proj = 3 * (cfg.width / 8) * (cfg.height / 8);
  secret_fc = register_module("secret_fc", nn::Linear(cfg.secret_length, proj));
  c0 = register_module("c0", conv3x3(6, c));
  d1 = register_module("d1", conv3x3(c, c, 2));
  d2 = register_module("d2", conv3x3(c, 2 * c, 2));
  d3 = register_module("d3", conv3x3(2 * c, 2 * c, 2));
  d4 = register_module("d4", conv3x3(2 * c, 4 * c, 2));
  u4 = register_module("u4", conv3x3(4 * c, 2 * c));
  u3 = register_module("u3", conv3x3(4 * c, 2 * c));
  u2 = register_module("u2", conv3x3(4 * c, c));
  u1 = register_module("u1", conv3x3(2 * c, c));
  out = register_module("out", nn::Conv2d(nn::Conv2dOptions(2 * c + 6, 3, 1)));
  nn::init::kaiming_normal_(secret_fc->weight);
}

torch::Tensor UnetEncoder::forward(torch::Tensor images, torch::Tensor secrets) {
  const float center = 0.5f * (config.pixel_range.lo + config.pixel_range.hi);
  auto s_g = secret_fc(secrets - 0.5)
                 .view({secrets.size(0), 3, config.width / 8, config.height / 8});
  s_g = F::interpolate(s_g, F::InterpolateFuncOptions()
                                .size(std::vector<std::int64_t>{config.width,
                                                                config.height})
                                .mode(torch::kNearest));
  auto input = torch::cat({images - center, s_g}, 1);
  auto x0 = torch::relu(c0(input));
  auto x1 = torch::relu(d1(x0));
  auto x2 = torch::relu(d2(x1));
  auto x3 = torch::relu(d3(x2));
  auto x4 = torch::relu(d4(x3));
  auto y = torch::cat({torch::relu(u4(upsample2(x4))), x3}, 1);
  y = torch::cat({torch::relu(u3(upsample2(y))), x2}, 1);
  y = torch::cat({torch::relu(u2(upsample2(y))), x1}, 1);
  y = torch::cat({torch::relu(u1(upsample2(y))), x0, input}, 1);
  return images + out(y);
}

ConvStackDecoder::ConvStackDecoder(const ModelConfig& config)
    : center(0.5f * (config.pixel_range.lo + config.pixel_range.hi)) {
  const auto c = config.channels;
  const std::int64_t widths[7][3] = {{3, c, 2},         {c, c, 1},
                                     {c, 2 * c, 2},     {2 * c, 2 * c, 1},
                                     {2 * c, 4 * c, 2}, {4 * c, 4 * c, 1},
                                     {4 * c, 4 * c, 2}};
  for (const auto& w : widths) {
    convs->push_back(conv3x3(w[0], w[1], w[2]));
    convs->push_back(nn::BatchNorm2d(w[1]));
    convs->push_back(nn::ReLU());
  }
  register_module("convs", convs);
  const auto flat = 4 * c * (config.width / 16) * (config.height / 16);
  head->push_back(nn::Linear(flat, 4 * c));
  head->push_back(nn::ReLU());
  head->push_back(nn::Linear(4 * c, config.secret_length));
  register_module("head", head);
}

torch::Tensor ConvStackDecoder::forward(torch::Tensor images) {
  return head->forward(convs->forward(images - center).flatten(1));
}

HiddenCritic::HiddenCritic(const ModelConfig& config) {
  const auto c = config.channels;
  blocks->push_back(ConvBnRelu(3, c));
  blocks->push_back(ConvBnRelu(c, c));
  blocks->push_back(ConvBnRelu(c, c));
  register_module("blocks", blocks);
  head = register_module("head", nn::Linear(c, 1));
}

torch::Tensor HiddenCritic::forward(torch::Tensor images) {
  auto x = blocks->forward(images);
  x = F::adaptive_avg_pool2d(x, F::AdaptiveAvgPool2dFuncOptions(1)).flatten(1);
  return head(x);
}

}  // namespace nobox::detail
