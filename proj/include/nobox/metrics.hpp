#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "nobox/core.hpp"

namespace nobox {

struct ImageOutcome {
  std::int64_t matched_bits = 0;
  double ba = 0.0;
  bool detected = false;
  double linf = 0.0;
  double ssim = 0.0;
  std::optional<double> perceptual;
};

struct AttackOutcome {
  std::string method;
  std::int64_t k = 0;
  double r = 0.0;
  bool normalize = false;
  std::uint64_t seed = 0;
  std::int64_t secret_length = 0;
  std::vector<ImageOutcome> images;

  double evasion_rate = 0.0;
  double avg_ba = 0.0;  // unconditional mean over all images
  double mean_linf = 0.0;
  double mean_ssim = 0.0;
  std::optional<double> mean_perceptual;  // nullopt: no scorer registered
  double wall_seconds = 0.0;

  // Recomputes the aggregate fields from `images`.
  void aggregate();
};

double evasion_rate(const std::vector<bool>& detected);
std::int64_t matched_bits(const SecretMessage& s, const SecretMessage& decoded);
double linf_distance(const ImageTensor& a, const ImageTensor& b);

// Mean SSIM over all valid 11x11 Gaussian windows (sigma 1.5) and the three
// channels, after mapping the pixel range onto [0, 1]; C1 = (0.01)^2,
// C2 = (0.03)^2.
double ssim(const ImageTensor& a, const ImageTensor& b);

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

// Wall-clock seconds spent in `invocation`.
double time_attack(const std::function<void()>& invocation);

// Optional perceptual distance (e.g. LPIPS) supplied by the embedding
// application. Absent scorer yields nullopt, reported as "unavailable".
class PerceptualMetricSlot {
 public:
  using Scorer = std::function<double(const ImageTensor&, const ImageTensor&)>;

  void register_scorer(Scorer scorer) { scorer_ = std::move(scorer); }
  void clear() { scorer_ = nullptr; }
  bool available() const { return static_cast<bool>(scorer_); }
  std::optional<double> score(const ImageTensor& a, const ImageTensor& b) const;

 private:
  Scorer scorer_;
};

// Aggregate record with fixed field names; the perceptual field is the
// string "unavailable" when no scorer was registered.
nlohmann::json aggregate_json(const AttackOutcome& outcome);
// One row per image: index,matched_bits,ba,detected,linf,ssim,perceptual
std::string per_image_csv(const AttackOutcome& outcome);

}  // namespace nobox
