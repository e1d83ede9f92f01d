#pragma once

// Encoder/decoder watermark models. Two architecture families are provided:
// HiDDeN-style (CNN or residual decoder; secret replicated spatially and
// concatenated with image features) and a U-Net encoder with shortcuts whose
// secret enters through a linear projection.

#include <torch/torch.h>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "nobox/core.hpp"

namespace nobox {

enum class Family { kHiddenCnn, kHiddenResnet, kUnetShortcut };

std::string_view to_string(Family family);
Family family_from_string(std::string_view name);

struct ModelConfig {
  Family family = Family::kHiddenCnn;
  std::int64_t secret_length = 30;
  std::int64_t width = 32;
  std::int64_t height = 32;
  std::int64_t channels = 64;
  PixelRange pixel_range{};
  bool with_critic = false;
  // Request the MBRS message-expansion constraint: the secret is reshaped to a
  // square and doubled per side by each expansion layer, so l must be 4^k.
  bool mbrs_alignment = false;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

bool is_mbrs_alignable_length(std::int64_t secret_length);

struct TrainingMeta {
  std::string dataset_id;
  std::uint64_t seed = 0;
  std::int64_t epochs = 0;
  std::string optimizer;
};

// What an attack may see of a watermarking scheme. Surrogates and victims
// both implement it; tests substitute counting stubs.
class Watermarker {
 public:
  virtual ~Watermarker() = default;

  virtual std::int64_t secret_length() const = 0;
  virtual std::int64_t width() const = 0;
  virtual std::int64_t height() const = 0;
  virtual PixelRange pixel_range() const = 0;

  // (N,3,w,h) x (N,l) -> (N,3,w,h), clamped to the pixel range, no grad.
  virtual torch::Tensor embed(const torch::Tensor& images,
                              const torch::Tensor& secrets) const = 0;
  // Pre-sigmoid decoder head, (N,l). Differentiable w.r.t. `images` when
  // `differentiable()`.
  virtual torch::Tensor decode_logits(const torch::Tensor& images) const = 0;
  virtual bool differentiable() const { return true; }

  // Hard bits: sigmoid(head) >= 0.5, i.e. head >= 0.
  torch::Tensor decode_bits(const torch::Tensor& images) const;
};

// Trainable encoder. Returns the raw (unclamped) watermarked image.
struct EncoderNet : torch::nn::Module {
  virtual torch::Tensor forward(torch::Tensor images, torch::Tensor secrets) = 0;
};

struct DecoderNet : torch::nn::Module {
  virtual torch::Tensor forward(torch::Tensor images) = 0;
};

struct CriticNet : torch::nn::Module {
  virtual torch::Tensor forward(torch::Tensor images) = 0;  // logits (N,1)
};

class WatermarkModel : public Watermarker {
 public:
  WatermarkModel(ModelConfig config, std::shared_ptr<EncoderNet> encoder,
                 std::shared_ptr<DecoderNet> decoder,
                 std::shared_ptr<CriticNet> critic);

  const ModelConfig& config() const { return config_; }
  const TrainingMeta& meta() const { return meta_; }
  void set_meta(TrainingMeta meta) { meta_ = std::move(meta); }

  EncoderNet& encoder() const { return *encoder_; }
  DecoderNet& decoder() const { return *decoder_; }
  bool has_critic() const { return critic_ != nullptr; }
  CriticNet& critic() const;

  std::int64_t secret_length() const override { return config_.secret_length; }
  std::int64_t width() const override { return config_.width; }
  std::int64_t height() const override { return config_.height; }
  PixelRange pixel_range() const override { return config_.pixel_range; }

  torch::Tensor embed(const torch::Tensor& images,
                      const torch::Tensor& secrets) const override;
  torch::Tensor decode_logits(const torch::Tensor& images) const override;
  torch::Tensor critic_scores(const torch::Tensor& images) const;

  // Switches encoder, decoder and critic between batch and running BN stats.
  void set_training(bool on) const;
  // All named tensors (parameters and buffers), prefixed by sub-network.
  std::vector<std::pair<std::string, torch::Tensor>> named_state() const;
  // Deep copy through the state dictionary.
  WatermarkModel clone() const;

 private:
  ModelConfig config_;
  TrainingMeta meta_;
  std::shared_ptr<EncoderNet> encoder_;
  std::shared_ptr<DecoderNet> decoder_;
  std::shared_ptr<CriticNet> critic_;
};

// Deterministic initialization for fixed (config, seed).
WatermarkModel build_model(const ModelConfig& config, std::uint64_t seed);

ImageTensor encode(const WatermarkModel& m, const ImageTensor& x,
                   const SecretMessage& s);
SecretMessage decode(const WatermarkModel& m, const ImageTensor& x);
double critic_score(const WatermarkModel& m, const ImageTensor& x);

// -- noise layers -----------------------------------------------------------

enum class NoiseKind { kIdentity, kGaussian, kCropResize };

std::string_view to_string(NoiseKind kind);
NoiseKind noise_kind_from_string(std::string_view name);

struct NoiseLayerSpec {
  NoiseKind kind = NoiseKind::kIdentity;
  double sigma = 0.0;          // kGaussian
  double crop_fraction = 1.0;  // kCropResize, fraction of each side kept

  void validate() const;
};

// Batched and differentiable; `range` is the clamp target for kGaussian.
torch::Tensor apply_noise_layer(const NoiseLayerSpec& spec,
                                const torch::Tensor& images, PixelRange range,
                                torch::Generator& gen);
ImageTensor apply_noise_layer(const NoiseLayerSpec& spec, const ImageTensor& x,
                              std::uint64_t seed);

torch::Generator make_generator(std::uint64_t seed);

}  // namespace nobox
