#include "nobox/models.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <mutex>

#include "networks.hpp"

namespace nobox {

namespace F = torch::nn::functional;

std::string_view to_string(Family family) {
  switch (family) {
    case Family::kHiddenCnn: return "HIDDEN_CNN";
    case Family::kHiddenResnet: return "HIDDEN_RESNET";
    case Family::kUnetShortcut: return "UNET_SHORTCUT";
  }
  return "UNKNOWN";
}

Family family_from_string(std::string_view name) {
  if (name == "HIDDEN_CNN") return Family::kHiddenCnn;
  if (name == "HIDDEN_RESNET") return Family::kHiddenResnet;
  if (name == "UNET_SHORTCUT") return Family::kUnetShortcut;
  fail(ErrorKind::kInvalidArgument,
       "unknown model family '" + std::string(name) + "'");
}

bool is_mbrs_alignable_length(std::int64_t secret_length) {
  for (std::int64_t v = 1, k = 0; k <= 7; ++k, v *= 4)
    if (v == secret_length) return true;
  return false;
}

void ModelConfig::validate() const {
  require(secret_length >= 1, "secret length must be at least 1");
  require(width >= kMinImageSide && height >= kMinImageSide,
          "image sides must be at least 8");
  require(channels >= 1, "channel width must be positive");
  require(pixel_range.lo < pixel_range.hi, "pixel range must have lo < hi");
  if (family == Family::kUnetShortcut) {
    require(width % 16 == 0 && height % 16 == 0,
            "UNET_SHORTCUT needs image sides divisible by 16");
  }
  if (mbrs_alignment) {
    require(is_mbrs_alignable_length(secret_length),
            "MBRS alignment needs a secret length in {4^0, ..., 4^7}");
  }
}

torch::Tensor Watermarker::decode_bits(const torch::Tensor& images) const {
  torch::NoGradGuard no_grad;
  return decode_logits(images).ge(0.0).to(torch::kFloat32);
}

WatermarkModel::WatermarkModel(ModelConfig config,
                               std::shared_ptr<EncoderNet> encoder,
                               std::shared_ptr<DecoderNet> decoder,
                               std::shared_ptr<CriticNet> critic)
    : config_(std::move(config)),
      encoder_(std::move(encoder)),
      decoder_(std::move(decoder)),
      critic_(std::move(critic)) {}

CriticNet& WatermarkModel::critic() const {
  if (!critic_) fail(ErrorKind::kInvalidArgument, "model has no critic");
  return *critic_;
}

namespace {

void check_batch(const Watermarker& m, const torch::Tensor& images) {
  require(images.dim() == 4 && images.size(1) == 3 &&
              images.size(2) == m.width() && images.size(3) == m.height(),
          "image batch does not match the model's (3, w, h)");
}

}  // namespace

torch::Tensor WatermarkModel::embed(const torch::Tensor& images,
                                    const torch::Tensor& secrets) const {
  check_batch(*this, images);
  require(secrets.dim() == 2 && secrets.size(0) == images.size(0) &&
              secrets.size(1) == config_.secret_length,
          "secret batch does not match the model's secret length");
  torch::NoGradGuard no_grad;
  return encoder_->forward(images, secrets)
      .clamp(config_.pixel_range.lo, config_.pixel_range.hi);
}

torch::Tensor WatermarkModel::decode_logits(const torch::Tensor& images) const {
  check_batch(*this, images);
  return decoder_->forward(images);
}

torch::Tensor WatermarkModel::critic_scores(const torch::Tensor& images) const {
  check_batch(*this, images);
  torch::NoGradGuard no_grad;
  return torch::sigmoid(critic().forward(images)).squeeze(1);
}

void WatermarkModel::set_training(bool on) const {
  encoder_->train(on);
  decoder_->train(on);
  if (critic_) critic_->train(on);
}

std::vector<std::pair<std::string, torch::Tensor>> WatermarkModel::named_state()
    const {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  auto collect = [&out](const std::string& prefix, torch::nn::Module& m) {
    for (const auto& p : m.named_parameters()) out.emplace_back(prefix + p.key(), p.value());
    for (const auto& b : m.named_buffers()) out.emplace_back(prefix + b.key(), b.value());
  };
  collect("encoder.", *encoder_);
  collect("decoder.", *decoder_);
  if (critic_) collect("critic.", *critic_);
  return out;
}

WatermarkModel WatermarkModel::clone() const {
  auto copy = build_model(config_, 0);
  copy.set_meta(meta_);
  auto dst = copy.named_state();
  auto src = named_state();
  torch::NoGradGuard no_grad;
  for (std::size_t i = 0; i < src.size(); ++i) dst[i].second.copy_(src[i].second);
  return copy;
}

WatermarkModel build_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  // Module constructors draw from the global generator.
  static std::mutex init_mutex;
  std::lock_guard lock(init_mutex);
  torch::manual_seed(seed);

  std::shared_ptr<EncoderNet> encoder;
  std::shared_ptr<DecoderNet> decoder;
  switch (config.family) {
    case Family::kHiddenCnn:
      encoder = std::make_shared<detail::HiddenEncoder>(config, 4);
      decoder = std::make_shared<detail::HiddenCnnDecoder>(config);
      break;
    case Family::kHiddenResnet:
      encoder = std::make_shared<detail::HiddenEncoder>(config, 7);
      decoder = std::make_shared<detail::ResnetDecoder>(config);
      break;
    case Family::kUnetShortcut:
      encoder = std::make_shared<detail::UnetEncoder>(config);
      decoder = std::make_shared<detail::ConvStackDecoder>(config);
      break;
  }
  std::shared_ptr<CriticNet> critic;
  if (config.with_critic) critic = std::make_shared<detail::HiddenCritic>(config);

  WatermarkModel model(config, std::move(encoder), std::move(decoder),
                       std::move(critic));
  model.set_training(false);
  TrainingMeta meta;
  meta.seed = seed;
  model.set_meta(meta);
  return model;
}

namespace {

void check_image(const WatermarkModel& m, const ImageTensor& x) {
  require(x.width() == m.width() && x.height() == m.height(),
          "image dimensions do not match the model");
  require(x.range() == m.pixel_range(), "image pixel range differs from model");
}

}  // namespace

ImageTensor encode(const WatermarkModel& m, const ImageTensor& x,
                   const SecretMessage& s) {
  check_image(m, x);
  require(static_cast<std::int64_t>(s.length()) == m.secret_length(),
          "secret length does not match the model");
  const std::vector<SecretMessage> one{s};
  auto out = m.embed(x.as_batch(), secrets_to_tensor(one));
  return ImageTensor::from_tensor(out.squeeze(0), m.pixel_range());
}

SecretMessage decode(const WatermarkModel& m, const ImageTensor& x) {
  check_image(m, x);
  return tensor_to_secrets(m.decode_bits(x.as_batch())).front();
}

double critic_score(const WatermarkModel& m, const ImageTensor& x) {
  check_image(m, x);
  return m.critic_scores(x.as_batch()).item<double>();
}

// -- noise layers -----------------------------------------------------------

std::string_view to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::kIdentity: return "IDENTITY";
    case NoiseKind::kGaussian: return "GAUSSIAN";
    case NoiseKind::kCropResize: return "CROP_RESIZE";
  }
  return "UNKNOWN";
}

NoiseKind noise_kind_from_string(std::string_view name) {
  if (name == "IDENTITY") return NoiseKind::kIdentity;
  if (name == "GAUSSIAN") return NoiseKind::kGaussian;
  if (name == "CROP_RESIZE") return NoiseKind::kCropResize;
  fail(ErrorKind::kInvalidArgument,
       "unknown noise layer '" + std::string(name) + "'");
}

void NoiseLayerSpec::validate() const {
  require(sigma >= 0.0, "noise sigma must be nonnegative");
  require(crop_fraction > 0.0 && crop_fraction <= 1.0,
          "crop fraction must lie in (0, 1]");
}

torch::Generator make_generator(std::uint64_t seed) {
  return at::make_generator<at::CPUGeneratorImpl>(seed);
}

torch::Tensor apply_noise_layer(const NoiseLayerSpec& spec,
                                const torch::Tensor& images, PixelRange range,
                                torch::Generator& gen) {
  spec.validate();
  switch (spec.kind) {
    case NoiseKind::kIdentity:
      return images;
    case NoiseKind::kGaussian: {
      if (spec.sigma == 0.0) return images.clamp(range.lo, range.hi);
      auto noise = torch::randn(images.sizes(), gen, images.options());
      return (images + spec.sigma * noise).clamp(range.lo, range.hi);
    }
    case NoiseKind::kCropResize: {
      const auto w = images.size(2);
      const auto h = images.size(3);
      const auto cw = std::max<std::int64_t>(1, std::llround(spec.crop_fraction * w));
      const auto ch = std::max<std::int64_t>(1, std::llround(spec.crop_fraction * h));
      if (cw == w && ch == h) return images;
      const auto ow = (w - cw) / 2;
      const auto oh = (h - ch) / 2;
      auto crop = images.narrow(2, ow, cw).narrow(3, oh, ch);
      return F::interpolate(crop, F::InterpolateFuncOptions()
                                      .size(std::vector<std::int64_t>{w, h})
                                      .mode(torch::kBilinear)
                                      .align_corners(false));
    }
  }
  return images;
}

ImageTensor apply_noise_layer(const NoiseLayerSpec& spec, const ImageTensor& x,
                              std::uint64_t seed) {
  auto gen = make_generator(seed);
  auto out = apply_noise_layer(spec, x.as_batch(), x.range(), gen).squeeze(0);
  return clamp_pixels(out, x.range());
}

}  // namespace nobox
