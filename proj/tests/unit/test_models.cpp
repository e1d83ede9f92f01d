#include <gtest/gtest.h>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/chi_squared.hpp>

#include "nobox/models.hpp"
#include "stubs.hpp"

using namespace nobox;

namespace {

ModelConfig small_config(Family f = Family::kHiddenCnn, std::int64_t ell = 30) {
  ModelConfig c;
  c.family = f;
  c.secret_length = ell;
  c.width = 32;
  c.height = 32;
  c.channels = 16;
  return c;
}

bool same_state(const WatermarkModel& a, const WatermarkModel& b) {
  const auto sa = a.named_state();
  const auto sb = b.named_state();
  if (sa.size() != sb.size()) return false;
  for (std::size_t i = 0; i < sa.size(); ++i)
    if (sa[i].first != sb[i].first || !torch::equal(sa[i].second, sb[i].second)) return false;
  return true;
}

// Pearson chi-square p-value of observed counts against Binomial(l, 1/2),
// pooling tail bins until each expected count is at least 5.
double binomial_gof_pvalue(const std::vector<std::int64_t>& counts, std::int64_t ell) {
  const double n = static_cast<double>(counts.size());
  std::vector<double> obs(static_cast<std::size_t>(ell + 1), 0.0), exp(obs.size());
  for (auto c : counts) obs[static_cast<std::size_t>(c)] += 1.0;
  boost::math::binomial_distribution<double> bin(static_cast<double>(ell), 0.5);
  for (std::int64_t k = 0; k <= ell; ++k)
    exp[static_cast<std::size_t>(k)] = n * boost::math::pdf(bin, static_cast<double>(k));
  std::vector<std::pair<double, double>> bins;
  double o = 0, e = 0;
  for (std::size_t k = 0; k < obs.size(); ++k) {
    o += obs[k];
    e += exp[k];
    if (e >= 5.0) {
      bins.emplace_back(o, e);
      o = e = 0;
    }
  }
  if (e > 0) {
    bins.back().first += o;
    bins.back().second += e;
  }
  double stat = 0;
  for (const auto& [ob, ex] : bins) stat += (ob - ex) * (ob - ex) / ex;
  boost::math::chi_squared_distribution<double> chi(static_cast<double>(bins.size() - 1));
  return boost::math::cdf(boost::math::complement(chi, stat));
}

}  // namespace

TEST(Models, FamilyNames) {
  for (auto f : {Family::kHiddenCnn, Family::kHiddenResnet, Family::kUnetShortcut})
    EXPECT_EQ(family_from_string(to_string(f)), f);
  EXPECT_THROW(family_from_string("RIVAGAN"), Error);
}

TEST(Models, ConfigValidation) {
  auto c = small_config(Family::kUnetShortcut);
  c.width = 24;
  EXPECT_THROW(build_model(c, 1), Error);
  c = small_config();
  c.secret_length = 0;
  EXPECT_THROW(build_model(c, 1), Error);
  c = small_config();
  c.mbrs_alignment = true;
  EXPECT_THROW(c.validate(), Error);
  c.secret_length = 64;
  EXPECT_NO_THROW(c.validate());
  EXPECT_TRUE(is_mbrs_alignable_length(256));
  EXPECT_FALSE(is_mbrs_alignable_length(30));
}

TEST(Models, DeterministicInitialization) {
  for (auto f : {Family::kHiddenCnn, Family::kHiddenResnet, Family::kUnetShortcut}) {
    EXPECT_TRUE(same_state(build_model(small_config(f), 5), build_model(small_config(f), 5)));
    EXPECT_FALSE(same_state(build_model(small_config(f), 5), build_model(small_config(f), 6)));
  }
}

TEST(Models, ShapesAndBinarization) {
  for (auto f : {Family::kHiddenCnn, Family::kHiddenResnet, Family::kUnetShortcut}) {
    const auto m = build_model(small_config(f), 1);
    const auto x = stubs::random_image(1, 32, 32);
    const auto s = random_secret(30, 2);
    const auto y = encode(m, x, s);
    EXPECT_EQ(y.data().sizes(), x.data().sizes());
    EXPECT_LE(y.data().max().item<float>(), 1.0f);
    EXPECT_GE(y.data().min().item<float>(), -1.0f);
    EXPECT_TRUE(torch::equal(y.data(), encode(m, x, s).data()));
    const auto d = decode(m, y);
    EXPECT_EQ(d.length(), 30u);
    const auto logits = m.decode_logits(stubs::random_batch(2, 4, 32, 32));
    EXPECT_EQ(logits.sizes(), (std::vector<std::int64_t>{4, 30}));
  }
}

TEST(Models, RejectsMismatchedInputs) {
  const auto m = build_model(small_config(), 1);
  EXPECT_THROW(encode(m, stubs::random_image(1, 16, 16), random_secret(30, 1)), Error);
  EXPECT_THROW(encode(m, stubs::random_image(1, 32, 32), random_secret(20, 1)), Error);
  EXPECT_THROW(decode(m, stubs::random_image(1, 32, 16)), Error);
  EXPECT_THROW(critic_score(m, stubs::random_image(1, 32, 32)), Error);
}

TEST(Models, UntrainedBitAccuracyNearHalf) {
  const auto m = build_model(small_config(), 3);
  const auto x = stubs::random_batch(4, 100, 32, 32);
  const auto s = random_secret_batch(100, 30, 5);
  const auto matched = matched_bits_rows(m.decode_bits(m.embed(x, s)), s);
  EXPECT_NEAR(matched.to(torch::kFloat64).mean().item<double>() / 30.0, 0.5, 0.05);
}

TEST(Models, UntrainedMatchedBitsAreBinomial) {
  const auto m = build_model(small_config(), 4);
  const std::int64_t n = 2000;
  const auto x = stubs::random_batch(6, n, 32, 32);
  const auto s = random_secret_batch(n, 30, 7);
  const auto matched = matched_bits_rows(m.decode_bits(x), s);
  std::vector<std::int64_t> counts(matched.data_ptr<std::int64_t>(),
                                   matched.data_ptr<std::int64_t>() + n);
  EXPECT_GT(binomial_gof_pvalue(counts, 30), 0.01);
}

TEST(Models, FamilyDivergence) {
  const auto cnn = build_model(small_config(Family::kHiddenCnn), 9);
  const auto unet = build_model(small_config(Family::kUnetShortcut), 9);
  const auto x = stubs::random_image(8, 32, 32);
  const auto s = random_secret(30, 8);
  EXPECT_FALSE(torch::allclose(encode(cnn, x, s).data(), encode(unet, x, s).data()));
}

TEST(Models, CriticScores) {
  auto c = small_config();
  c.with_critic = true;
  const auto m = build_model(c, 2);
  ASSERT_TRUE(m.has_critic());
  double sum = 0;
  for (std::uint64_t i = 0; i < 50; ++i) {
    const double v = critic_score(m, stubs::random_image(100 + i, 32, 32));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    sum += v;
  }
  EXPECT_NEAR(sum / 50, 0.5, 0.1);
  const auto x = stubs::random_image(1, 32, 32);
  EXPECT_EQ(critic_score(m, x), critic_score(m, x));
}

TEST(Models, CloneCopiesWeights) {
  const auto m = build_model(small_config(), 11);
  const auto c = m.clone();
  EXPECT_TRUE(same_state(m, c));
  EXPECT_NE(m.named_state()[0].second.data_ptr(), c.named_state()[0].second.data_ptr());
}

TEST(NoiseLayers, Semantics) {
  const auto x = stubs::random_image(3, 32, 32);
  EXPECT_TRUE(torch::equal(apply_noise_layer({NoiseKind::kIdentity, 0, 1}, x, 1).data(), x.data()));
  EXPECT_TRUE(torch::equal(apply_noise_layer({NoiseKind::kGaussian, 0, 1}, x, 1).data(), x.data()));
  const auto a = apply_noise_layer({NoiseKind::kGaussian, 0.1, 1}, x, 4);
  EXPECT_TRUE(torch::equal(a.data(), apply_noise_layer({NoiseKind::kGaussian, 0.1, 1}, x, 4).data()));
  EXPECT_FALSE(torch::equal(a.data(), x.data()));
  EXPECT_TRUE(torch::equal(apply_noise_layer({NoiseKind::kCropResize, 0, 1.0}, x, 1).data(), x.data()));
  const auto cropped = apply_noise_layer({NoiseKind::kCropResize, 0, 0.5}, x, 1);
  EXPECT_EQ(cropped.data().sizes(), x.data().sizes());
  EXPECT_THROW(apply_noise_layer({NoiseKind::kGaussian, -1, 1}, x, 1), Error);
  EXPECT_THROW(apply_noise_layer({NoiseKind::kCropResize, 0, 0.0}, x, 1), Error);
  EXPECT_THROW(noise_kind_from_string("JPEG"), Error);
}

TEST(NoiseLayers, CropResizeOfConstantImageIsConstant) {
  const auto x = ImageTensor::from_tensor(torch::full({3, 32, 32}, 0.25f));
  const auto y = apply_noise_layer({NoiseKind::kCropResize, 0, 0.6}, x, 1);
  EXPECT_TRUE(torch::allclose(y.data(), x.data()));
}
