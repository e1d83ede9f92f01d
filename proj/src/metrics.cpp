#include "nobox/metrics.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace nobox {

using nlohmann::json;

void AttackOutcome::aggregate() {
  require(!images.empty(), "outcome holds no images");
  const auto n = static_cast<double>(images.size());
  std::vector<bool> detected;
  double ba = 0.0, linf = 0.0, s = 0.0, perc = 0.0;
  bool have_perc = true;
  for (const auto& im : images) {
    detected.push_back(im.detected);
    ba += im.ba;
    linf += im.linf;
    s += im.ssim;
    if (im.perceptual) perc += *im.perceptual; else have_perc = false;
  }
  evasion_rate = nobox::evasion_rate(detected);
  avg_ba = ba / n;
  mean_linf = linf / n;
  mean_ssim = s / n;
  mean_perceptual = have_perc ? std::optional<double>(perc / n) : std::nullopt;
}

double evasion_rate(const std::vector<bool>& detected) {
  require(!detected.empty(), "evasion rate of an empty list");
  std::size_t evaded = 0;
  for (bool d : detected) evaded += !d;
  return static_cast<double>(evaded) / static_cast<double>(detected.size());
}

std::int64_t matched_bits(const SecretMessage& s, const SecretMessage& decoded) {
  return static_cast<std::int64_t>(matched_bit_count(s, decoded));
}

double linf_distance(const ImageTensor& a, const ImageTensor& b) {
  require(a.data().sizes() == b.data().sizes(), "image shapes differ");
  require(a.range() == b.range(), "image pixel ranges differ");
  return (a.data() - b.data()).abs().max().item<double>();
}

namespace {

std::vector<double> gaussian_window() {
  std::vector<double> w(kSsimWindow);
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    w[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    sum += w[i];
  }
  for (auto& v : w) v /= sum;
  return w;
}

// Valid-region separable filtering of a rows x cols plane.
std::vector<double> filter_valid(const std::vector<double>& plane, int rows,
                                 int cols, const std::vector<double>& w) {
  const int out_r = rows - kSsimWindow + 1;
  const int out_c = cols - kSsimWindow + 1;
  std::vector<double> tmp(static_cast<std::size_t>(rows * out_c));
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < out_c; ++c) {
      double acc = 0.0;
      for (int k = 0; k < kSsimWindow; ++k) acc += w[k] * plane[r * cols + c + k];
      tmp[r * out_c + c] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(out_r * out_c));
  for (int r = 0; r < out_r; ++r)
    for (int c = 0; c < out_c; ++c) {
      double acc = 0.0;
      for (int k = 0; k < kSsimWindow; ++k) acc += w[k] * tmp[(r + k) * out_c + c];
      out[r * out_c + c] = acc;
    }
  return out;
}

}  // namespace

double ssim(const ImageTensor& a, const ImageTensor& b) {
  require(a.data().sizes() == b.data().sizes(), "image shapes differ");
  require(a.range() == b.range(), "image pixel ranges differ");
  const int rows = static_cast<int>(a.width());
  const int cols = static_cast<int>(a.height());
  require(rows >= kSsimWindow && cols >= kSsimWindow,
          "images are smaller than the 11x11 SSIM window");

  constexpr double c1 = (0.01 * 1.0) * (0.01 * 1.0);
  constexpr double c2 = (0.03 * 1.0) * (0.03 * 1.0);
  const auto w = gaussian_window();
  const auto range = a.range();
  auto unit = [range](const torch::Tensor& t) {
    return ((t.to(torch::kFloat64) - range.lo) / range.width()).contiguous();
  };
  const auto ua = unit(a.data());
  const auto ub = unit(b.data());
  const std::size_t plane = static_cast<std::size_t>(rows * cols);

  double total = 0.0;
  std::size_t count = 0;
  for (int ch = 0; ch < 3; ++ch) {
    const double* pa = ua.data_ptr<double>() + ch * plane;
    const double* pb = ub.data_ptr<double>() + ch * plane;
    std::vector<double> x(pa, pa + plane), y(pb, pb + plane), xx(plane), yy(plane), xy(plane);
    for (std::size_t i = 0; i < plane; ++i) {
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, rows, cols, w);
    const auto my = filter_valid(y, rows, cols, w);
    const auto exx = filter_valid(xx, rows, cols, w);
    const auto eyy = filter_valid(yy, rows, cols, w);
    const auto exy = filter_valid(xy, rows, cols, w);
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double sxx = exx[i] - mx[i] * mx[i];
      const double syy = eyy[i] - my[i] * my[i];
      const double sxy = exy[i] - mx[i] * my[i];
      total += ((2.0 * mx[i] * my[i] + c1) * (2.0 * sxy + c2)) /
               ((mx[i] * mx[i] + my[i] * my[i] + c1) * (sxx + syy + c2));
    }
    count += mx.size();
  }
  return total / static_cast<double>(count);
}

double time_attack(const std::function<void()>& invocation) {
  const auto t0 = std::chrono::steady_clock::now();
  invocation();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::optional<double> PerceptualMetricSlot::score(const ImageTensor& a,
                                                  const ImageTensor& b) const {
  if (!scorer_) return std::nullopt;
  return scorer_(a, b);
}

json aggregate_json(const AttackOutcome& o) {
  json j = {{"method", o.method},
            {"k", o.k},
            {"r", o.r},
            {"normalize", o.normalize},
            {"evasion_rate", o.evasion_rate},
            {"avg_ba", o.avg_ba},
            {"mean_linf", o.mean_linf},
            {"mean_ssim", o.mean_ssim},
            {"wall_seconds", o.wall_seconds},
            {"seed", o.seed}};
  if (o.mean_perceptual) j["perceptual"] = *o.mean_perceptual;
  else j["perceptual"] = "unavailable";
  return j;
}

std::string per_image_csv(const AttackOutcome& o) {
  std::ostringstream os;
  os << "index,matched_bits,ba,detected,linf,ssim,perceptual\n";
  char buf[160];
  for (std::size_t i = 0; i < o.images.size(); ++i) {
    const auto& im = o.images[i];
    std::snprintf(buf, sizeof(buf), "%zu,%lld,%.6f,%d,%.6f,%.6f,", i,
                  static_cast<long long>(im.matched_bits), im.ba,
                  im.detected ? 1 : 0, im.linf, im.ssim);
    os << buf;
    if (im.perceptual) {
      std::snprintf(buf, sizeof(buf), "%.6f", *im.perceptual);
      os << buf;
    } else {
      os << "unavailable";
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace nobox
