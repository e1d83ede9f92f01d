#include "nobox/detection.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <random>

namespace nobox {

std::string_view to_string(Tails tails) {
  return tails == Tails::kOne ? "ONE" : "TWO";
}

Tails tails_from_string(std::string_view name) {
  if (name == "ONE") return Tails::kOne;
  if (name == "TWO") return Tails::kTwo;
  fail(ErrorKind::kInvalidArgument, "tails must be ONE or TWO");
}

namespace {

// log P(X >= k) for X ~ Binomial(n, 1/2), k in [0, n].
long double log_upper_tail(std::int64_t n, std::int64_t k) {
  const long double log_n_fact = std::lgammal(static_cast<long double>(n) + 1.0L);
  long double peak = -std::numeric_limits<long double>::infinity();
  std::vector<long double> terms;
  terms.reserve(static_cast<std::size_t>(n - k + 1));
  for (std::int64_t j = k; j <= n; ++j) {
    const long double t = log_n_fact -
                          std::lgammal(static_cast<long double>(j) + 1.0L) -
                          std::lgammal(static_cast<long double>(n - j) + 1.0L);
    terms.push_back(t);
    peak = std::max(peak, t);
  }
  long double sum = 0.0L;
  for (auto t : terms) sum += std::exp(t - peak);
  return peak + std::log(sum) - static_cast<long double>(n) * std::log(2.0L);
}

double upper_tail(std::int64_t n, std::int64_t k) {
  if (k <= 0) return 1.0;
  if (k > n) return 0.0;
  return static_cast<double>(std::exp(log_upper_tail(n, k)));
}

}  // namespace

double null_fpr(std::int64_t secret_length, std::int64_t tau, Tails tails) {
  require(secret_length >= 1, "secret length must be at least 1");
  const double upper = upper_tail(secret_length, tau);
  if (tails == Tails::kOne) return upper;
  const auto low = secret_length - tau;  // detect when matched <= low
  if (low < 0) return upper;
  if (low >= tau - 1) return 1.0;  // the two regions cover every count
  // P(X <= low) == P(X >= l - low) by symmetry.
  return upper + upper_tail(secret_length, secret_length - low);
}

bool DetectionPolicy::detects(std::int64_t matched) const {
  if (matched >= tau) return true;
  return tails == Tails::kTwo && matched <= secret_length - tau;
}

DetectionPolicy policy_with_threshold(std::int64_t secret_length,
                                      std::int64_t tau, Tails tails) {
  require(secret_length >= 1, "secret length must be at least 1");
  DetectionPolicy p;
  p.secret_length = secret_length;
  p.tails = tails;
  p.tau = tau;
  p.fpr = null_fpr(secret_length, tau, tails);
  p.fpr_budget = p.fpr;
  p.feasible = tau <= secret_length;
  return p;
}

DetectionPolicy calibrate_threshold(std::int64_t secret_length, double fpr_budget,
                                    Tails tails) {
  require(secret_length >= 1, "secret length must be at least 1");
  require(fpr_budget > 0.0 && fpr_budget < 1.0, "FPR budget must lie in (0, 1)");
  DetectionPolicy p;
  p.secret_length = secret_length;
  p.fpr_budget = fpr_budget;
  p.tails = tails;
  // FPR is nonincreasing in tau; scan from the top down.
  std::int64_t tau = secret_length + 1;
  while (tau - 1 >= 0 && null_fpr(secret_length, tau - 1, tails) <= fpr_budget) --tau;
  p.tau = tau;
  p.fpr = null_fpr(secret_length, tau, tails);
  p.feasible = tau <= secret_length;
  return p;
}

bool detect(const DetectionPolicy& policy, const SecretMessage& s,
            const SecretMessage& decoded) {
  require(static_cast<std::int64_t>(s.length()) == policy.secret_length &&
              static_cast<std::int64_t>(decoded.length()) == policy.secret_length,
          "secret lengths do not match the detection policy");
  return policy.detects(static_cast<std::int64_t>(matched_bit_count(s, decoded)));
}

void SmoothingConfig::validate() const {
  require(copies >= 1, "smoothing needs at least one noisy copy");
  require(sigma >= 0.0, "smoothing sigma must be nonnegative");
}

bool smoothed_detect(const DetectionPolicy& policy, const SmoothingConfig& cfg,
                     const Watermarker& model, const SecretMessage& s,
                     const ImageTensor& x, std::uint64_t seed) {
  cfg.validate();
  require(static_cast<std::int64_t>(s.length()) == policy.secret_length,
          "secret length does not match the detection policy");
  auto gen = make_generator(seed);
  auto batch = x.as_batch().expand({cfg.copies, -1, -1, -1});
  if (cfg.sigma > 0.0)
    batch = batch + cfg.sigma * torch::randn(batch.sizes(), gen, batch.options());
  const std::vector<SecretMessage> one{s};
  const auto target = secrets_to_tensor(one).expand({cfg.copies, -1});
  auto matched = matched_bits_rows(model.decode_bits(batch.contiguous()), target);
  std::vector<std::int64_t> counts(matched.data_ptr<std::int64_t>(),
                                   matched.data_ptr<std::int64_t>() + cfg.copies);
  const auto mid = counts.begin() + (cfg.copies - 1) / 2;
  std::nth_element(counts.begin(), mid, counts.end());
  return policy.detects(*mid);
}

double empirical_fpr(const DetectionPolicy& policy, std::int64_t trials,
                     std::uint64_t seed) {
  require(trials >= 1, "trial count must be positive");
  const auto ell = policy.secret_length;
  std::mt19937_64 engine(seed);
  std::int64_t hits = 0;
  for (std::int64_t t = 0; t < trials; ++t) {
    std::int64_t matched = 0;
    for (std::int64_t done = 0; done < ell; done += 64) {
      const auto bits = std::min<std::int64_t>(64, ell - done);
      const std::uint64_t mask = bits == 64 ? ~0ull : ((1ull << bits) - 1);
      const std::uint64_t s = engine() & mask;
      const std::uint64_t s_decoded = engine() & mask;
      matched += bits - std::popcount(s ^ s_decoded);
    }
    hits += policy.detects(matched);
  }
  return static_cast<double>(hits) / static_cast<double>(trials);
}

}  // namespace nobox
