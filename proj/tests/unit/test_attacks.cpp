#include <gtest/gtest.h>

#include "nobox/attacks.hpp"
#include "stubs.hpp"

using namespace nobox;

namespace {

SurrogateEnsemble ensemble(std::vector<std::shared_ptr<const Watermarker>> models,
                           Aggregation agg = Aggregation::kMean) {
  SurrogateEnsemble e;
  e.models = std::move(models);
  e.aggregation = agg;
  return e;
}

// Mid-gray batch so constant shifts never hit the pixel bounds.
torch::Tensor gray_batch(std::int64_t n) { return torch::zeros({n, 3, 16, 16}); }

// Denoiser whose output ignores its input and the noise level.
std::shared_ptr<Denoiser> untrained_denoiser(std::uint64_t seed = 1) {
  DenoiserConfig c;
  c.width = 16;
  c.height = 16;
  c.channels = 8;
  c.depth = 2;
  return std::make_shared<Denoiser>(c, seed);
}

}  // namespace

TEST(Oft, IdentityEncoderGivesZeroPerturbation) {
  auto id = std::make_shared<stubs::ThresholdDecoder>(8);
  const auto x = stubs::random_batch(1, 4, 16, 16);
  const auto out = oft_attack(x, ensemble({id}), {0.25, true}, {});
  EXPECT_TRUE(torch::equal(out, x));
}

TEST(Oft, MedianExample) {
  auto a = std::make_shared<stubs::ConstantShift>(0.3f);
  auto b = std::make_shared<stubs::ConstantShift>(-0.5f);
  auto c = std::make_shared<stubs::ConstantShift>(0.1f);
  const auto x = gray_batch(1);
  const auto out = oft_attack(x, ensemble({a, b, c}, Aggregation::kMedian), {0.25, true}, {});
  EXPECT_TRUE(torch::allclose(out, torch::full_like(x, 0.1f)));
  const auto mean = oft_attack(x, ensemble({a, b, c}), {0.25, true}, {});
  EXPECT_TRUE(torch::allclose(mean, torch::full_like(x, (0.3f - 0.5f + 0.1f) / 3.0f)));
}

TEST(Oft, ClampsToBudgetOnlyWhenNormalized) {
  auto a = std::make_shared<stubs::ConstantShift>(0.4f);
  const auto x = gray_batch(2);
  EXPECT_NEAR(oft_attack(x, ensemble({a}), {0.25, true}, {}).max().item<float>(), 0.25f, 1e-7);
  EXPECT_NEAR(oft_attack(x, ensemble({a}), {0.25, false}, {}).max().item<float>(), 0.4f, 1e-6);
}

TEST(Oft, AggregationDegeneracy) {
  auto a = std::make_shared<stubs::ConstantShift>(0.2f);
  auto b = std::make_shared<stubs::ConstantShift>(0.2f);
  const auto x = stubs::random_batch(3, 2, 16, 16);
  for (const auto& ens : {std::vector<std::shared_ptr<const Watermarker>>{a},
                          std::vector<std::shared_ptr<const Watermarker>>{a, b}}) {
    EXPECT_TRUE(torch::equal(oft_attack(x, ensemble(ens, Aggregation::kMean), {0.25, true}, {}),
                             oft_attack(x, ensemble(ens, Aggregation::kMedian), {0.25, true}, {})));
  }
}

TEST(Oft, OneEncodeAndOneDecodePerSurrogateWithoutGradients) {
  std::vector<std::shared_ptr<stubs::ConstantShift>> models;
  std::vector<std::shared_ptr<const Watermarker>> ens;
  for (int i = 0; i < 5; ++i) {
    models.push_back(std::make_shared<stubs::ConstantShift>(0.05f * i));
    ens.push_back(models.back());
  }
  const auto x = stubs::random_batch(4, 3, 16, 16).requires_grad_(false);
  const auto out = oft_attack(x, ensemble(ens), {0.25, true}, {});
  EXPECT_FALSE(out.requires_grad());
  for (const auto& m : models) {
    EXPECT_EQ(m->embed_calls.load(), 1);
    EXPECT_EQ(m->decode_calls.load(), 1);
  }
}

TEST(Oft, BudgetExactOnRandomInputs) {
  torch::manual_seed(0);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = std::make_shared<stubs::ConstantShift>(0.9f - 0.09f * trial);
    auto b = std::make_shared<stubs::ConstantShift>(-0.7f + 0.05f * trial);
    const auto x = stubs::random_batch(100 + trial, 4, 16, 16);
    for (double r : {0.25, 0.1, 1.0 / 3.0, 0.017}) {
      const auto out = oft_attack(x, ensemble({a, b}), {r, true}, {});
      EXPECT_LE((out - x).abs().max().item<float>(), static_cast<float>(r));
      EXPECT_LE(out.max().item<float>(), 1.0f);
      EXPECT_GE(out.min().item<float>(), -1.0f);
    }
  }
}

TEST(Oft, RejectsInvalidInput) {
  auto a = std::make_shared<stubs::ConstantShift>(0.1f);
  const auto x = gray_batch(1);
  EXPECT_THROW(oft_attack(x, ensemble({}), {0.25, true}, {}), Error);
  EXPECT_THROW(oft_attack(x, ensemble({a}), {-0.1, true}, {}), Error);
  EXPECT_THROW(oft_attack(torch::zeros({1, 3, 16, 8}), ensemble({a}), {0.25, true}, {}), Error);
  EXPECT_THROW(aggregation_from_string("MODE"), Error);
}

TEST(Oft, SingleImageOverload) {
  auto a = std::make_shared<stubs::ConstantShift>(0.1f);
  const auto x = stubs::random_image(2, 16, 16);
  const auto out = oft_attack(x, ensemble({a}), {0.25, true});
  EXPECT_TRUE(torch::equal(out.data(),
                           oft_attack(x.as_batch(), ensemble({a}), {0.25, true}, {}).squeeze(0)));
}

TEST(OptTransfer, EveryIterateWithinBudget) {
  auto a = std::make_shared<stubs::ThresholdDecoder>(16, 16, 16, 1);
  auto b = std::make_shared<stubs::ThresholdDecoder>(16, 16, 16, 2);
  const auto x = stubs::random_batch(5, 3, 16, 16);
  TransferOptConfig cfg;
  cfg.r = 0.05;
  cfg.max_iters = 30;
  cfg.gamma = 0.01;
  int calls = 0;
  const auto res = opt_transfer_attack(
      x, ensemble({a, b}), cfg, {}, [&](std::int64_t, const torch::Tensor& eps) {
        ++calls;
        EXPECT_LE(eps.abs().max().item<float>(), 0.05f);
        EXPECT_LE((x + eps).max().item<float>(), 1.0f);
        EXPECT_GE((x + eps).min().item<float>(), -1.0f);
      });
  EXPECT_GT(calls, 1);
  EXPECT_LE((res.images - x).abs().max().item<float>(), 0.05f);
  EXPECT_LE(res.perturbation.abs().max().item<float>(), 0.05f);
  EXPECT_EQ(res.converged.size(), 3u);
}

TEST(OptTransfer, ConvergesOnLinearSurrogate) {
  // A linear decoder is easy to flip within a generous budget.
  auto a = std::make_shared<stubs::ThresholdDecoder>(16, 16, 16, 3);
  const auto x = stubs::random_batch(6, 4, 16, 16) * 0.5;
  TransferOptConfig cfg;
  cfg.r = 0.5;
  const auto res = opt_transfer_attack(x, ensemble({a}), cfg, {});
  const auto before = a->decode_bits(x);
  const auto after = a->decode_bits(res.images);
  for (std::int64_t i = 0; i < 4; ++i) {
    EXPECT_TRUE(res.converged[static_cast<std::size_t>(i)]);
    const double flipped =
        1.0 - before[i].eq(after[i]).to(torch::kFloat64).mean().item<double>();
    EXPECT_GT(flipped, 1.0 - cfg.gamma);
    EXPECT_LT(res.iterations[static_cast<std::size_t>(i)], cfg.max_iters);
  }
}

TEST(OptTransfer, NonConvergenceIsFlagged) {
  auto a = std::make_shared<stubs::ThresholdDecoder>(16, 16, 16, 3);
  const auto x = stubs::random_batch(7, 2, 16, 16);
  TransferOptConfig cfg;
  cfg.r = 1e-6;
  cfg.max_iters = 5;
  const auto res = opt_transfer_attack(x, ensemble({a}), cfg, {});
  EXPECT_FALSE(res.converged[0]);
  EXPECT_FALSE(res.converged[1]);
  EXPECT_EQ(res.iterations[0], 5);
}

TEST(OptTransfer, RejectsNonDifferentiableSurrogate) {
  auto a = std::make_shared<stubs::ThresholdDecoder>(16);
  a->set_differentiable(false);
  EXPECT_THROW(opt_transfer_attack(gray_batch(1), ensemble({a}), {}, {}), Error);
  TransferOptConfig bad;
  bad.gamma = 1.0;
  auto b = std::make_shared<stubs::ThresholdDecoder>(16);
  EXPECT_THROW(opt_transfer_attack(gray_batch(1), ensemble({b}), bad, {}), Error);
  bad.gamma = 0.2;
  bad.step_size = 0.0;
  EXPECT_THROW(opt_transfer_attack(gray_batch(1), ensemble({b}), bad, {}), Error);
}

TEST(OptTransfer, DefaultsFollowBudget) {
  TransferOptConfig cfg;
  EXPECT_DOUBLE_EQ(cfg.step(), 0.025);
  EXPECT_EQ(cfg.max_iters, 200);
  EXPECT_DOUBLE_EQ(cfg.gamma, 0.2);
}

TEST(Regenerate, IdentityMapsLeaveImageUnchanged) {
  const auto x = stubs::random_batch(8, 2, 16, 16);
  ImageMap id = [](const torch::Tensor& t) { return t; };
  auto gen = make_generator(1);
  EXPECT_TRUE(torch::equal(regenerate(x, RegenMode::kNR, 0.1, id, id, {}, gen), x));
}

TEST(Regenerate, ZeroNoiseCollapsesToNr) {
  const auto x = stubs::random_batch(9, 2, 16, 16);
  auto d = untrained_denoiser();
  ImageMap A = [&](const torch::Tensor& t) { return d->denoise(t, 0.0); };
  ImageMap phi = [](const torch::Tensor& t) { return t * 0.9; };
  auto g1 = make_generator(1), g2 = make_generator(2), g3 = make_generator(3);
  const auto nr = regenerate(x, RegenMode::kNR, 0.0, A, phi, {}, g1);
  EXPECT_TRUE(torch::equal(regenerate(x, RegenMode::kNTE, 0.0, A, phi, {}, g2), nr));
  EXPECT_TRUE(torch::equal(regenerate(x, RegenMode::kETN, 0.0, A, phi, {}, g3), nr));
}

TEST(Regenerate, NoiseModesDifferAndRejectNegativeSigma) {
  const auto x = gray_batch(1);
  ImageMap id = [](const torch::Tensor& t) { return t; };
  ImageMap half = [](const torch::Tensor& t) { return t * 0.5; };
  auto g1 = make_generator(4), g2 = make_generator(4);
  const auto nte = regenerate(x, RegenMode::kNTE, 0.2, id, half, {}, g1);
  const auto etn = regenerate(x, RegenMode::kETN, 0.2, id, half, {}, g2);
  // Same draw: NTE halves the noise, ETN keeps it.
  EXPECT_TRUE(torch::allclose(nte * 2.0, etn.clamp(-1, 1), 1e-5, 1e-6) ||
              (etn.abs().max().item<float>() >= 1.0f));
  auto g3 = make_generator(5);
  EXPECT_THROW(regenerate(x, RegenMode::kNR, -0.1, id, id, {}, g3), Error);
  EXPECT_THROW(regen_mode_from_string("XYZ"), Error);
}

TEST(DiffPure, ScheduleEndpoints) {
  const auto ab = linear_alpha_bar();
  EXPECT_EQ(ab(0.0), 1.0);
  EXPECT_EQ(ab(1.0), 0.0);
  for (double t = 0.0; t < 1.0; t += 0.1) EXPECT_GT(ab(t), ab(t + 0.1));
}

TEST(DiffPure, ZeroVarianceDrawIsIdentity) {
  const auto x = stubs::random_batch(10, 2, 16, 16);
  auto gen = make_generator(1);
  EXPECT_TRUE(torch::equal(diffusion_noise(x, 1.0, gen), x));
}

TEST(DiffPure, AlphaOneLimitIsPlainDenoise) {
  const auto x = stubs::random_batch(11, 2, 16, 16);
  DiffPureConfig cfg;
  cfg.denoiser = untrained_denoiser();
  cfg.alpha_bar = [](double) { return 1.0; };
  cfg.t = 0.1;
  const auto out = diffpure_attack(x, cfg, {}, 3);
  EXPECT_TRUE(torch::allclose(out, cfg.denoiser->denoise(x, 0.0).clamp(-1, 1)));
}

TEST(DiffPure, ReproducibleAndValidated) {
  const auto x = stubs::random_batch(12, 2, 16, 16);
  DiffPureConfig cfg;
  cfg.denoiser = untrained_denoiser();
  cfg.steps_per_unit_t = 50;
  EXPECT_TRUE(torch::equal(diffpure_attack(x, cfg, {}, 7), diffpure_attack(x, cfg, {}, 7)));
  EXPECT_FALSE(torch::equal(diffpure_attack(x, cfg, {}, 7), diffpure_attack(x, cfg, {}, 8)));
  EXPECT_EQ(cfg.reverse_steps(), 5);
  auto bad = cfg;
  bad.t = 0.0;
  EXPECT_THROW(diffpure_attack(x, bad, {}, 1), Error);
  bad.t = 1.5;
  EXPECT_THROW(diffpure_attack(x, bad, {}, 1), Error);
  bad = cfg;
  bad.denoiser = nullptr;
  EXPECT_THROW(diffpure_attack(x, bad, {}, 1), Error);
  const auto out = diffpure_attack(x, cfg, {}, 1);
  EXPECT_LE(out.max().item<float>(), 1.0f);
  EXPECT_GE(out.min().item<float>(), -1.0f);
}

TEST(DiffPure, FullNoiseIsFinite) {
  DiffPureConfig cfg;
  cfg.denoiser = untrained_denoiser();
  cfg.t = 1.0;
  cfg.steps_per_unit_t = 20;
  const auto out = diffpure_attack(gray_batch(2), cfg, {}, 1);
  EXPECT_TRUE(torch::isfinite(out).all().item<bool>());
}

TEST(Distortion, NeutralSettingsLeaveImageUnchanged) {
  const auto x = stubs::random_image(13, 16, 16);
  EXPECT_TRUE(torch::equal(distortion_attack(x, {NoiseKind::kGaussian, 0.0, 1.0}, 1).data(),
                           x.data()));
  EXPECT_TRUE(torch::allclose(
      distortion_attack(x, {NoiseKind::kCropResize, 0.0, 1.0}, 1).data(), x.data()));
  EXPECT_TRUE(torch::equal(distortion_attack(x, {NoiseKind::kGaussian, 0.1, 1.0}, 4).data(),
                           distortion_attack(x, {NoiseKind::kGaussian, 0.1, 1.0}, 4).data()));
}

TEST(Codec, UnavailableUntilRegistered) {
  CodecSlot slot;
  const auto x = gray_batch(1);
  EXPECT_FALSE(slot.available());
  try {
    slot.apply(x, 75, {});
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kUnavailable);
  }
  slot.register_codec([](const torch::Tensor& t, int q) { return t + q * 1e-3; });
  EXPECT_TRUE(torch::allclose(slot.apply(x, 50, {}), x + 0.05));
  EXPECT_THROW(slot.apply(x, 0, {}), Error);
}
