#include "nobox/core.hpp"

#include <algorithm>
#include <random>
#include <sstream>

namespace nobox {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid-argument";
    case ErrorKind::kInfeasible: return "infeasible";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kDivergence: return "divergence";
    case ErrorKind::kUnavailable: return "unavailable";
  }
  return "unknown";
}

ImageTensor ImageTensor::from_tensor(torch::Tensor data, PixelRange range) {
  require(range.lo < range.hi, "pixel range must have lo < hi");
  require(data.dim() == 3 && data.size(0) == 3,
          "image tensor must have shape (3, w, h)");
  require(data.size(1) >= kMinImageSide && data.size(2) >= kMinImageSide,
          "image sides must be at least 8");
  data = data.to(torch::kFloat32).contiguous();
  const auto lo = data.min().item<float>();
  const auto hi = data.max().item<float>();
  require(lo >= range.lo && hi <= range.hi,
          "image elements must lie within the declared pixel range");
  return ImageTensor(std::move(data), range);
}

SecretMessage::SecretMessage(std::vector<std::uint8_t> bits)
    : bits_(std::move(bits)) {
  require(!bits_.empty(), "secret length must be at least 1");
  require(std::all_of(bits_.begin(), bits_.end(),
                      [](std::uint8_t b) { return b <= 1; }),
          "secret entries must be 0 or 1");
}

SecretMessage SecretMessage::from_string(std::string_view bits) {
  std::vector<std::uint8_t> out;
  out.reserve(bits.size());
  for (char c : bits) {
    require(c == '0' || c == '1', "secret string must contain only 0/1");
    out.push_back(static_cast<std::uint8_t>(c - '0'));
  }
  return SecretMessage(std::move(out));
}

std::string SecretMessage::to_string() const {
  std::string out(bits_.size(), '0');
  for (std::size_t i = 0; i < bits_.size(); ++i) out[i] = bits_[i] ? '1' : '0';
  return out;
}

Perturbation Perturbation::clamped(float r) const {
  require(r >= 0.0f, "perturbation budget must be nonnegative");
  return {data.clamp(-r, r), r};
}

float Perturbation::linf() const {
  return data.numel() == 0 ? 0.0f : data.abs().max().item<float>();
}

std::size_t matched_bit_count(const SecretMessage& a, const SecretMessage& b) {
  require(a.length() == b.length(), "secret lengths differ");
  std::size_t matched = 0;
  for (std::size_t i = 0; i < a.length(); ++i) matched += a[i] == b[i];
  return matched;
}

double bitwise_accuracy(const SecretMessage& a, const SecretMessage& b) {
  const auto matched = matched_bit_count(a, b);
  return static_cast<double>(matched) / static_cast<double>(a.length());
}

SecretMessage flip_secret(const SecretMessage& s) {
  std::vector<std::uint8_t> out(s.bits().begin(), s.bits().end());
  for (auto& b : out) b ^= 1u;
  return SecretMessage(std::move(out));
}

ImageTensor clamp_pixels(const torch::Tensor& raw, PixelRange range) {
  return ImageTensor::from_tensor(raw.clamp(range.lo, range.hi), range);
}

ImageTensor clamp_pixels(const ImageTensor& x) {
  return clamp_pixels(x.data(), x.range());
}

namespace {

// Draws bits from the raw 64-bit output of mt19937_64 so the stream does not
// depend on the standard library's distribution implementations.
class BitStream {
 public:
  explicit BitStream(std::uint64_t seed) : engine_(seed) {}

  std::uint8_t next() {
    if (left_ == 0) {
      word_ = engine_();
      left_ = 64;
    }
    const auto bit = static_cast<std::uint8_t>(word_ & 1u);
    word_ >>= 1;
    --left_;
    return bit;
  }

 private:
  std::mt19937_64 engine_;
  std::uint64_t word_ = 0;
  int left_ = 0;
};

}  // namespace

SecretMessage random_secret(std::int64_t length, std::uint64_t seed) {
  require(length >= 1, "secret length must be at least 1");
  BitStream stream(seed);
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(length));
  for (auto& b : bits) b = stream.next();
  return SecretMessage(std::move(bits));
}

torch::Tensor random_secret_batch(std::int64_t n, std::int64_t length,
                                  std::uint64_t seed) {
  require(length >= 1, "secret length must be at least 1");
  require(n >= 0, "batch size must be nonnegative");
  BitStream stream(seed);
  auto out = torch::empty({n, length}, torch::kFloat32);
  auto acc = out.accessor<float, 2>();
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < length; ++j) acc[i][j] = stream.next();
  return out;
}

torch::Tensor secrets_to_tensor(std::span<const SecretMessage> secrets) {
  require(!secrets.empty(), "no secrets given");
  const auto len = static_cast<std::int64_t>(secrets.front().length());
  auto out = torch::empty({static_cast<std::int64_t>(secrets.size()), len},
                          torch::kFloat32);
  auto acc = out.accessor<float, 2>();
  for (std::size_t i = 0; i < secrets.size(); ++i) {
    require(static_cast<std::int64_t>(secrets[i].length()) == len,
            "secrets in a batch must share one length");
    for (std::int64_t j = 0; j < len; ++j)
      acc[static_cast<std::int64_t>(i)][j] = secrets[i][static_cast<std::size_t>(j)];
  }
  return out;
}

std::vector<SecretMessage> tensor_to_secrets(const torch::Tensor& bits) {
  require(bits.dim() == 2, "secret tensor must be (N, l)");
  auto b = bits.to(torch::kFloat32).contiguous();
  auto acc = b.accessor<float, 2>();
  std::vector<SecretMessage> out;
  out.reserve(static_cast<std::size_t>(b.size(0)));
  for (std::int64_t i = 0; i < b.size(0); ++i) {
    std::vector<std::uint8_t> row(static_cast<std::size_t>(b.size(1)));
    for (std::int64_t j = 0; j < b.size(1); ++j)
      row[static_cast<std::size_t>(j)] = acc[i][j] >= 0.5f ? 1 : 0;
    out.emplace_back(std::move(row));
  }
  return out;
}

torch::Tensor matched_bits_rows(const torch::Tensor& a, const torch::Tensor& b) {
  require(a.sizes() == b.sizes() && a.dim() == 2,
          "secret batches must have equal (N, l) shapes");
  return a.eq(b).sum(1).to(torch::kInt64);
}

}  // namespace nobox
