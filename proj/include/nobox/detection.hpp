#pragma once

// Bit-accuracy detection. Under the no-watermark null the matched-bit count
// between the owner's secret and a decoded secret is Binomial(l, 1/2); the
// detector threshold tau is the smallest count whose exact null tail
// probability fits the false-positive budget.

#include <cstdint>
#include <string_view>

#include "nobox/core.hpp"
#include "nobox/models.hpp"

namespace nobox {

enum class Tails { kOne, kTwo };

std::string_view to_string(Tails tails);
Tails tails_from_string(std::string_view name);

struct DetectionPolicy {
  std::int64_t secret_length = 0;
  double fpr_budget = 1e-4;
  Tails tails = Tails::kOne;
  // Matched-bit threshold. tau == l + 1 means no count is detectable within
  // the budget; `feasible` is false in that case.
  std::int64_t tau = 0;
  double fpr = 0.0;  // exact null FPR at tau
  bool feasible = true;

  // Equivalent BA threshold: detect when BA >= 1 - delta.
  double delta() const {
    return 1.0 - static_cast<double>(tau) / static_cast<double>(secret_length);
  }
  bool detects(std::int64_t matched) const;
};

// Exact null false-positive rate of threshold `tau`, summed in log space.
// ONE: P(X >= tau). TWO: P(X >= tau or X <= l - tau).
double null_fpr(std::int64_t secret_length, std::int64_t tau, Tails tails);

// Smallest tau with null_fpr(tau) <= budget. When even tau = l exceeds the
// budget the policy is returned with feasible == false and tau = l + 1.
DetectionPolicy calibrate_threshold(std::int64_t secret_length,
                                    double fpr_budget = 1e-4,
                                    Tails tails = Tails::kOne);

// Policy with an explicit tau (no calibration); fpr is filled in.
DetectionPolicy policy_with_threshold(std::int64_t secret_length,
                                      std::int64_t tau, Tails tails);

bool detect(const DetectionPolicy& policy, const SecretMessage& s,
            const SecretMessage& decoded);

struct SmoothingConfig {
  std::int64_t copies = 5;  // N
  double sigma = 0.05;

  void validate() const;
};

// Decodes N Gaussian-noised copies of x, takes the median bit-wise accuracy
// (lower median for even N) and applies the policy's tail rule to it.
bool smoothed_detect(const DetectionPolicy& policy, const SmoothingConfig& cfg,
                     const Watermarker& model, const SecretMessage& s,
                     const ImageTensor& x, std::uint64_t seed);

// Fraction of independent uniformly random (s, s') pairs that the policy
// flags.
double empirical_fpr(const DetectionPolicy& policy, std::int64_t trials,
                     std::uint64_t seed);

}  // namespace nobox
