#include "nobox/attacks.hpp"

#include <algorithm>
#include <cmath>

namespace nobox {

void AttackBudget::validate() const {
  require(std::isfinite(r) && r >= 0.0, "budget radius must be finite and >= 0");
}

std::string_view to_string(Aggregation a) {
  return a == Aggregation::kMean ? "MEAN" : "MEDIAN";
}

Aggregation aggregation_from_string(std::string_view name) {
  if (name == "MEAN") return Aggregation::kMean;
  if (name == "MEDIAN") return Aggregation::kMedian;
  fail(ErrorKind::kInvalidArgument, "aggregation must be MEAN or MEDIAN");
}

void SurrogateEnsemble::validate(std::int64_t width, std::int64_t height,
                                 PixelRange range) const {
  require(!models.empty(), "surrogate ensemble is empty");
  for (const auto& m : models) {
    require(m != nullptr, "surrogate ensemble holds a null model");
    require(m->width() == width && m->height() == height,
            "surrogate dimensions differ from the images");
    require(m->pixel_range() == range, "surrogate pixel range differs from the images");
  }
}

namespace {

void check_images(const torch::Tensor& x, PixelRange range) {
  require(x.dim() == 4 && x.size(1) == 3, "expected an (N, 3, w, h) image batch");
  require(x.size(0) >= 1, "image batch is empty");
  require(x.scalar_type() == torch::kFloat32, "images must be float32");
  require(range.lo < range.hi, "pixel range must have lo < hi");
}

// Pulls every element of x_a that sits further than r from x_wm (by float
// rounding in x_wm + eps) one ulp at a time back toward x_wm.
torch::Tensor enforce_linf(torch::Tensor x_a, const torch::Tensor& x_wm, float r) {
  for (int pass = 0; pass < 8; ++pass) {
    const auto over = (x_a - x_wm).abs() > r;
    if (!over.any().item<bool>()) break;
    x_a = torch::where(over, torch::nextafter(x_a, x_wm), x_a);
  }
  return x_a;
}

ImageTensor single(const torch::Tensor& batch, PixelRange range) {
  return ImageTensor::from_tensor(batch.squeeze(0).contiguous(), range);
}

}  // namespace

torch::Tensor oft_attack(const torch::Tensor& x_wm, const SurrogateEnsemble& ens,
                         const AttackBudget& budget, PixelRange range) {
  check_images(x_wm, range);
  budget.validate();
  ens.validate(x_wm.size(2), x_wm.size(3), range);
  torch::NoGradGuard no_grad;

  std::vector<torch::Tensor> residuals;
  residuals.reserve(ens.size());
  for (const auto& m : ens.models) {
    const auto target = 1.0f - m->decode_bits(x_wm);
    residuals.push_back(m->embed(x_wm, target) - x_wm);
  }
  torch::Tensor eps;
  if (residuals.size() == 1) {
    eps = residuals.front();
  } else {
    const auto stacked = torch::stack(residuals);
    eps = ens.aggregation == Aggregation::kMean
              ? stacked.mean(0)
              : std::get<0>(stacked.median(0));
  }
  if (!budget.normalize) return (x_wm + eps).clamp(range.lo, range.hi);
  const auto r = static_cast<float>(budget.r);
  auto x_a = (x_wm + eps.clamp(-r, r)).clamp(range.lo, range.hi);
  return enforce_linf(x_a, x_wm, r);
}

ImageTensor oft_attack(const ImageTensor& x_wm, const SurrogateEnsemble& ens,
                       const AttackBudget& budget) {
  return single(oft_attack(x_wm.as_batch(), ens, budget, x_wm.range()), x_wm.range());
}

void TransferOptConfig::validate() const {
  require(std::isfinite(r) && r >= 0.0, "radius must be finite and >= 0");
  require(gamma > 0.0 && gamma < 1.0, "gamma must lie in (0, 1)");
  require(max_iters >= 0, "max_iters must be nonnegative");
  require(step() > 0.0 && std::isfinite(step()), "step size must be positive");
}

TransferOptResult opt_transfer_attack(const torch::Tensor& x_wm,
                                      const SurrogateEnsemble& ens,
                                      const TransferOptConfig& cfg,
                                      PixelRange range,
                                      const IterateObserver& observer) {
  check_images(x_wm, range);
  cfg.validate();
  ens.validate(x_wm.size(2), x_wm.size(3), range);
  for (const auto& m : ens.models)
    require(m->differentiable(), "opt_transfer needs differentiable surrogates");

  const auto n = x_wm.size(0);
  const auto r = static_cast<float>(cfg.r);
  const auto step = static_cast<float>(cfg.step());
  const auto k = static_cast<double>(ens.size());

  // Targets in the decoder head's +-1 encoding.
  std::vector<torch::Tensor> targets, target_bits;
  {
    torch::NoGradGuard no_grad;
    for (const auto& m : ens.models) {
      target_bits.push_back(1.0f - m->decode_bits(x_wm));
      targets.push_back(target_bits.back() * 2.0f - 1.0f);
    }
  }

  // Rounding in the subtraction can leave eps an ulp outside the ball or
  // x_wm + eps an ulp outside the box; shrink such entries toward zero.
  auto project = [&](const torch::Tensor& e) {
    auto p = ((x_wm + e.clamp(-r, r)).clamp(range.lo, range.hi) - x_wm).clamp(-r, r);
    for (int pass = 0; pass < 8; ++pass) {
      const auto x = x_wm + p;
      const auto out = (x > range.hi) | (x < range.lo);
      if (!out.any().item<bool>()) break;
      p = torch::where(out, torch::nextafter(p, torch::zeros_like(p)), p);
    }
    return p;
  };

  auto eps = torch::zeros_like(x_wm);
  auto best_eps = eps.clone();
  auto best_obj = torch::full({n}, std::numeric_limits<float>::infinity());
  auto active = torch::ones({n}, torch::kBool);
  auto done = torch::zeros({n}, torch::kBool);
  std::vector<std::int64_t> iterations(static_cast<std::size_t>(n), cfg.max_iters);
  if (observer) observer(0, eps);

  for (std::int64_t it = 0;; ++it) {
    auto x = (x_wm + eps).detach().requires_grad_(true);
    auto objective = torch::zeros({n});
    auto ba = torch::zeros({n});
    for (std::size_t i = 0; i < ens.size(); ++i) {
      const auto logits = ens.models[i]->decode_logits(x);
      objective = objective + (logits - targets[i]).pow(2).mean(1);
      const auto bits = logits.detach().ge(0.0).to(torch::kFloat32);
      ba = ba + bits.eq(target_bits[i]).to(torch::kFloat32).mean(1);
    }
    objective = objective / k;
    ba = ba / k;

    const auto obj_now = objective.detach();
    const auto improved = active & (obj_now < best_obj);
    best_obj = torch::where(improved, obj_now, best_obj);
    best_eps = torch::where(improved.view({-1, 1, 1, 1}), eps, best_eps);

    const auto met = active & (ba > 1.0 - cfg.gamma);
    if (met.any().item<bool>()) {
      best_eps = torch::where(met.view({-1, 1, 1, 1}), eps, best_eps);
      const auto* m = met.data_ptr<bool>();
      for (std::int64_t j = 0; j < n; ++j)
        if (m[j]) iterations[static_cast<std::size_t>(j)] = it;
      done = done | met;
      active = active & ~met;
    }
    if (it == cfg.max_iters || !active.any().item<bool>()) break;

    const auto grad = torch::autograd::grad({objective.sum()}, {x})[0];
    const auto mask = active.view({-1, 1, 1, 1}).to(torch::kFloat32);
    eps = project(eps - step * mask * grad.sign()).detach();
    if (observer) observer(it + 1, eps);
  }

  TransferOptResult out;
  out.perturbation = best_eps;
  out.images = enforce_linf((x_wm + best_eps).clamp(range.lo, range.hi), x_wm, r);
  const auto* d = done.data_ptr<bool>();
  out.converged.assign(d, d + n);
  out.iterations = std::move(iterations);
  return out;
}

std::string_view to_string(RegenMode mode) {
  switch (mode) {
    case RegenMode::kNR: return "NR";
    case RegenMode::kNTE: return "NTE";
    case RegenMode::kETN: return "ETN";
  }
  return "NR";
}

RegenMode regen_mode_from_string(std::string_view name) {
  if (name == "NR") return RegenMode::kNR;
  if (name == "NTE") return RegenMode::kNTE;
  if (name == "ETN") return RegenMode::kETN;
  fail(ErrorKind::kInvalidArgument, "regeneration mode must be NR, NTE or ETN");
}

torch::Tensor regenerate(const torch::Tensor& x_wm, RegenMode mode, double sigma,
                         const ImageMap& denoiser, const ImageMap& projector,
                         PixelRange range, torch::Generator& gen) {
  check_images(x_wm, range);
  require(std::isfinite(sigma) && sigma >= 0.0, "sigma must be finite and >= 0");
  require(denoiser && projector, "regeneration needs a denoiser and a projector");
  torch::NoGradGuard no_grad;
  auto noisy = [&](const torch::Tensor& t) {
    if (sigma == 0.0) return t;
    return t + sigma * torch::randn(t.sizes(), gen, t.options());
  };
  torch::Tensor out;
  switch (mode) {
    case RegenMode::kNR: out = denoiser(projector(x_wm)); break;
    case RegenMode::kNTE: out = denoiser(projector(noisy(x_wm))); break;
    case RegenMode::kETN: out = denoiser(noisy(projector(x_wm))); break;
  }
  require(out.sizes() == x_wm.sizes(), "regeneration changed the image shape");
  return out.clamp(range.lo, range.hi);
}

AlphaBarSchedule linear_alpha_bar() {
  return [](double t) { return 1.0 - t; };
}

void DiffPureConfig::validate() const {
  require(t > 0.0 && t <= 1.0, "diffusion time t must lie in (0, 1]");
  require(static_cast<bool>(alpha_bar), "alpha-bar schedule is missing");
  require(denoiser != nullptr, "DiffPure needs a trained denoiser");
  require(steps_per_unit_t > 0.0, "steps per unit t must be positive");
}

std::int64_t DiffPureConfig::reverse_steps() const {
  return std::max<std::int64_t>(1, std::llround(t * steps_per_unit_t));
}

namespace {

constexpr double kMinAlphaBar = 1e-4;

double alpha_at(const AlphaBarSchedule& ab, double t) {
  const double a = ab(t);
  require(std::isfinite(a) && a >= 0.0 && a <= 1.0, "alpha-bar must lie in [0, 1]");
  return std::max(a, kMinAlphaBar);
}

// Clean estimate from x_t via the noise-level-conditioned denoiser:
// x_t / sqrt(ab) = x0 + sigma z with sigma = sqrt((1 - ab) / ab).
torch::Tensor predict_clean(const Denoiser& d, const torch::Tensor& x_t, double ab) {
  const double sigma = std::sqrt((1.0 - ab) / ab);
  return d.denoise(x_t / std::sqrt(ab), sigma);
}

}  // namespace

torch::Tensor diffusion_noise(const torch::Tensor& x, double alpha_bar,
                              torch::Generator& gen) {
  require(alpha_bar >= 0.0 && alpha_bar <= 1.0, "alpha-bar must lie in [0, 1]");
  if (alpha_bar == 1.0) return x.clone();
  return std::sqrt(alpha_bar) * x +
         std::sqrt(1.0 - alpha_bar) * torch::randn(x.sizes(), gen, x.options());
}

torch::Tensor reverse_diffusion(const torch::Tensor& x_t, const DiffPureConfig& cfg,
                                PixelRange range) {
  cfg.validate();
  torch::NoGradGuard no_grad;
  const auto& d = *cfg.denoiser;
  const auto steps = cfg.reverse_steps();
  auto x = x_t;
  torch::Tensor x0;
  for (std::int64_t i = steps; i >= 1; --i) {
    const double t_now = cfg.t * static_cast<double>(i) / static_cast<double>(steps);
    const double t_next = cfg.t * static_cast<double>(i - 1) / static_cast<double>(steps);
    const double ab = alpha_at(cfg.alpha_bar, t_now);
    x0 = predict_clean(d, x, ab);
    const double ab_next = alpha_at(cfg.alpha_bar, t_next);
    if (i == 1 || ab_next >= 1.0) break;
    const auto eps = ab < 1.0 ? (x - std::sqrt(ab) * x0) / std::sqrt(1.0 - ab)
                              : torch::zeros_like(x);
    x = std::sqrt(ab_next) * x0 + std::sqrt(1.0 - ab_next) * eps;
  }
  return x0.clamp(range.lo, range.hi);
}

torch::Tensor diffpure_attack(const torch::Tensor& x_wm, const DiffPureConfig& cfg,
                              PixelRange range, std::uint64_t seed) {
  check_images(x_wm, range);
  cfg.validate();
  require(cfg.denoiser->config().width == x_wm.size(2) &&
              cfg.denoiser->config().height == x_wm.size(3),
          "denoiser dimensions differ from the images");
  auto gen = make_generator(seed);
  const double ab = cfg.alpha_bar(cfg.t);
  require(ab >= 0.0 && ab <= 1.0, "alpha-bar must lie in [0, 1]");
  torch::NoGradGuard no_grad;
  return reverse_diffusion(diffusion_noise(x_wm, ab, gen), cfg, range);
}

ImageTensor diffpure_attack(const ImageTensor& x_wm, const DiffPureConfig& cfg,
                            std::uint64_t seed) {
  return single(diffpure_attack(x_wm.as_batch(), cfg, x_wm.range(), seed),
                x_wm.range());
}

torch::Tensor distortion_attack(const torch::Tensor& x_wm,
                                const NoiseLayerSpec& spec, PixelRange range,
                                std::uint64_t seed) {
  check_images(x_wm, range);
  spec.validate();
  auto gen = make_generator(seed);
  torch::NoGradGuard no_grad;
  return apply_noise_layer(spec, x_wm, range, gen).clamp(range.lo, range.hi);
}

ImageTensor distortion_attack(const ImageTensor& x_wm, const NoiseLayerSpec& spec,
                              std::uint64_t seed) {
  return single(distortion_attack(x_wm.as_batch(), spec, x_wm.range(), seed),
                x_wm.range());
}

torch::Tensor CodecSlot::apply(const torch::Tensor& x, int quality,
                               PixelRange range) const {
  if (!codec_) fail(ErrorKind::kUnavailable, "no external codec is registered");
  require(quality >= 1 && quality <= 100, "codec quality must lie in [1, 100]");
  auto out = codec_(x, quality);
  require(out.sizes() == x.sizes(), "codec changed the image shape");
  return out.clamp(range.lo, range.hi);
}

}  // namespace nobox
