#pragma once

// Domain types shared by every module: images in a declared pixel range,
// binary secrets, additive perturbations, and the elementary operations on
// them (bit-wise accuracy, flipping, clamping).

#include <torch/torch.h>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "nobox/error.hpp"

namespace nobox {

struct PixelRange {
  float lo = -1.0f;
  float hi = 1.0f;

  float width() const { return hi - lo; }
  bool operator==(const PixelRange&) const = default;
};

inline constexpr std::int64_t kMinImageSide = 8;

// A single 3 x w x h image. Holds a contiguous float32 CPU tensor whose
// elements all lie in `range()`.
class ImageTensor {
 public:
  // Validates shape and range; throws on violation.
  static ImageTensor from_tensor(torch::Tensor data, PixelRange range = {});

  const torch::Tensor& data() const { return data_; }
  PixelRange range() const { return range_; }
  std::int64_t width() const { return data_.size(1); }
  std::int64_t height() const { return data_.size(2); }

  // Adds a leading batch dimension.
  torch::Tensor as_batch() const { return data_.unsqueeze(0); }

 private:
  ImageTensor(torch::Tensor data, PixelRange range)
      : data_(std::move(data)), range_(range) {}

  torch::Tensor data_;
  PixelRange range_;
};

class SecretMessage {
 public:
  SecretMessage() = default;
  explicit SecretMessage(std::vector<std::uint8_t> bits);

  static SecretMessage from_string(std::string_view bits);  // "0110"

  std::size_t length() const { return bits_.size(); }
  std::uint8_t operator[](std::size_t i) const { return bits_[i]; }
  std::span<const std::uint8_t> bits() const { return bits_; }
  std::string to_string() const;

  bool operator==(const SecretMessage&) const = default;

 private:
  std::vector<std::uint8_t> bits_;
};

// Additive perturbation with an optional l-infinity budget.
struct Perturbation {
  torch::Tensor data;
  std::optional<float> budget;

  // Element-wise clamp into [-r, r]; records r as the budget.
  Perturbation clamped(float r) const;
  float linf() const;
};

double bitwise_accuracy(const SecretMessage& a, const SecretMessage& b);
std::size_t matched_bit_count(const SecretMessage& a, const SecretMessage& b);
SecretMessage flip_secret(const SecretMessage& s);

// Clips every element into `range`; the result is a valid ImageTensor.
ImageTensor clamp_pixels(const torch::Tensor& raw, PixelRange range = {});
ImageTensor clamp_pixels(const ImageTensor& x);

SecretMessage random_secret(std::int64_t length, std::uint64_t seed);

// Batched forms used by models and attacks. Secrets travel as (N, l) float
// tensors holding exact 0/1 values.
torch::Tensor secrets_to_tensor(std::span<const SecretMessage> secrets);
std::vector<SecretMessage> tensor_to_secrets(const torch::Tensor& bits);
torch::Tensor random_secret_batch(std::int64_t n, std::int64_t length,
                                  std::uint64_t seed);
// Row-wise matched-bit counts between two (N, l) bit tensors, as int64.
torch::Tensor matched_bits_rows(const torch::Tensor& a, const torch::Tensor& b);

}  // namespace nobox
