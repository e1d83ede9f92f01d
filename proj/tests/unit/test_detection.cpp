#include <gtest/gtest.h>

#include <boost/multiprecision/cpp_int.hpp>

#include <random>

#include "nobox/detection.hpp"
#include "stubs.hpp"

using namespace nobox;
using boost::multiprecision::cpp_int;

namespace {

// Exact oracle: count of outcomes with X >= tau (or X <= l - tau) over 2^l.
cpp_int binom(int n, int k) {
  cpp_int r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

cpp_int detected_count(int ell, int tau, Tails tails) {
  cpp_int total = 0;
  for (int j = 0; j <= ell; ++j) {
    const bool hit = j >= tau || (tails == Tails::kTwo && j <= ell - tau);
    if (hit) total += binom(ell, j);
  }
  return total;
}

// fpr <= budget  <=>  count <= budget * 2^l, with budget = num / den exactly.
bool within_budget(const cpp_int& count, int ell, const cpp_int& num,
                   const cpp_int& den) {
  return count * den <= num * (cpp_int(1) << ell);
}

double as_double(const cpp_int& count, int ell) {
  // count / 2^l; both fit a long double after shifting.
  const int shift = std::max(0, ell - 60);
  const cpp_int scaled = count >> shift;
  return std::ldexp(static_cast<double>(scaled.convert_to<long double>()), -(ell - shift));
}

}  // namespace

TEST(Detection, SpotValues) {
  EXPECT_EQ(calibrate_threshold(30, 1e-4).tau, 26);
  EXPECT_EQ(calibrate_threshold(20, 1e-4).tau, 19);
  EXPECT_NEAR(null_fpr(30, 26, Tails::kOne), 2.9738061e-5, 1e-12);
  EXPECT_NEAR(null_fpr(30, 25, Tails::kOne), 1.6245712e-4, 1e-11);
  EXPECT_EQ(calibrate_threshold(30, 1e-4, Tails::kTwo).tau, 26);
  EXPECT_NEAR(null_fpr(30, 26, Tails::kTwo), 2.0 * 2.9738061e-5, 2e-12);
}

TEST(Detection, ExactAgainstRationalOracle) {
  const cpp_int num = 1, den = 10000;  // 1e-4
  for (int ell = 8; ell <= 256; ++ell) {
    for (auto tails : {Tails::kOne, Tails::kTwo}) {
      const auto p = calibrate_threshold(ell, 1e-4, tails);
      SCOPED_TRACE("l=" + std::to_string(ell));
      if (!p.feasible) {
        EXPECT_EQ(p.tau, ell + 1);
        EXPECT_FALSE(within_budget(detected_count(ell, ell, tails), ell, num, den));
        continue;
      }
      const auto at = detected_count(ell, static_cast<int>(p.tau), tails);
      const auto below = detected_count(ell, static_cast<int>(p.tau) - 1, tails);
      EXPECT_TRUE(within_budget(at, ell, num, den));
      EXPECT_FALSE(within_budget(below, ell, num, den));
      EXPECT_NEAR(p.fpr, as_double(at, ell), 1e-12 + 1e-9 * as_double(at, ell));
    }
  }
}

TEST(Detection, ShortSecretsAreInfeasible) {
  for (int ell = 8; ell <= 13; ++ell) {
    const auto p = calibrate_threshold(ell, 1e-4);
    EXPECT_FALSE(p.feasible);
    EXPECT_EQ(p.tau, ell + 1);
    EXPECT_FALSE(p.detects(ell));
  }
  EXPECT_TRUE(calibrate_threshold(14, 1e-4).feasible);
}

TEST(Detection, FprMonotoneInTau) {
  for (std::int64_t ell : {20, 30, 64, 256}) {
    for (auto tails : {Tails::kOne, Tails::kTwo}) {
      double prev = 2.0;
      for (std::int64_t tau = 0; tau <= ell + 1; ++tau) {
        const double f = null_fpr(ell, tau, tails);
        EXPECT_LE(f, prev);
        EXPECT_GE(f, 0.0);
        EXPECT_LE(f, 1.0);
        prev = f;
      }
    }
  }
}

TEST(Detection, TauNonincreasingInBudget) {
  std::int64_t prev = 1000;
  for (double b : {1e-8, 1e-6, 1e-4, 1e-3, 1e-2, 0.1, 0.5}) {
    const auto tau = calibrate_threshold(64, b).tau;
    EXPECT_LE(tau, prev);
    prev = tau;
  }
}

TEST(Detection, RejectsBadArguments) {
  EXPECT_THROW(calibrate_threshold(0, 1e-4), Error);
  EXPECT_THROW(calibrate_threshold(30, 0.0), Error);
  EXPECT_THROW(calibrate_threshold(30, 1.0), Error);
  EXPECT_THROW(tails_from_string("THREE"), Error);
}

TEST(Detection, DetectUsesThreshold) {
  const auto p = calibrate_threshold(30, 1e-4);
  const auto s = random_secret(30, 1);
  EXPECT_TRUE(detect(p, s, s));
  EXPECT_FALSE(detect(p, s, flip_secret(s)));
  const auto two = calibrate_threshold(30, 1e-4, Tails::kTwo);
  EXPECT_TRUE(detect(two, s, flip_secret(s)));
  EXPECT_THROW(detect(p, s, random_secret(20, 1)), Error);
}

TEST(Detection, EmpiricalFprMatchesExact) {
  const auto p = calibrate_threshold(30, 1e-4);
  const double f = empirical_fpr(p, 1000000, 2024);
  const double se = std::sqrt(p.fpr * (1.0 - p.fpr) / 1e6);
  EXPECT_NEAR(f, p.fpr, 3.0 * se);
}

TEST(Detection, PolicyWithThreshold) {
  const auto p = policy_with_threshold(30, 26, Tails::kOne);
  EXPECT_EQ(p.tau, 26);
  EXPECT_DOUBLE_EQ(p.fpr, null_fpr(30, 26, Tails::kOne));
  EXPECT_NEAR(p.delta(), 4.0 / 30.0, 1e-15);
}

TEST(Smoothing, SigmaZeroAgreesWithPlainDetect) {
  stubs::ThresholdDecoder dec(30);
  std::mt19937_64 rng(5);
  for (auto tails : {Tails::kOne, Tails::kTwo}) {
    const auto p = calibrate_threshold(30, 1e-4, tails);
    for (int i = 0; i < 200; ++i) {
      const auto x = stubs::random_image(rng(), 16, 16);
      const auto decoded = tensor_to_secrets(dec.decode_bits(x.as_batch()))[0];
      // Owner secret at a random Hamming distance from the decoded one.
      std::vector<std::uint8_t> bits(decoded.bits().begin(), decoded.bits().end());
      const auto flips = rng() % 31;
      for (std::size_t b = 0; b < flips; ++b) bits[b] ^= 1u;
      const SecretMessage s(bits);
      const bool plain = detect(p, s, decoded);
      EXPECT_EQ(smoothed_detect(p, {5, 0.0}, dec, s, x, rng()), plain);
    }
  }
}

TEST(Smoothing, RejectsBadConfig) {
  stubs::ThresholdDecoder dec(30);
  const auto p = calibrate_threshold(30, 1e-4);
  const auto x = stubs::random_image(1, 16, 16);
  EXPECT_THROW(smoothed_detect(p, {0, 0.05}, dec, random_secret(30, 1), x, 1), Error);
  EXPECT_THROW(smoothed_detect(p, {5, -1.0}, dec, random_secret(30, 1), x, 1), Error);
}

TEST(Smoothing, Deterministic) {
  stubs::ThresholdDecoder dec(30);
  const auto p = calibrate_threshold(30, 0.2);
  const auto x = stubs::random_image(3, 16, 16);
  const auto s = random_secret(30, 3);
  EXPECT_EQ(smoothed_detect(p, {7, 0.3}, dec, s, x, 9),
            smoothed_detect(p, {7, 0.3}, dec, s, x, 9));
}
