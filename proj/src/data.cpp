#include "nobox/data.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

namespace nobox {

namespace fs = std::filesystem;

ImageSet ImageSet::slice(std::int64_t begin, std::int64_t count) const {
  require(begin >= 0 && count >= 0 && begin + count <= size(),
          "image set slice out of bounds");
  return {images.narrow(0, begin, count), range, id};
}

ImageTensor ImageSet::at(std::int64_t i) const {
  require(i >= 0 && i < size(), "image index out of bounds");
  return ImageTensor::from_tensor(images[i].clone(), range);
}

namespace {

class Uniform {
 public:
  explicit Uniform(std::uint64_t seed) : engine_(seed) {}
  // [0, 1) from the top 53 bits of the raw engine output.
  double next() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double range(double lo, double hi) { return lo + (hi - lo) * next(); }
  int integer(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(next() * (hi - lo + 1));
  }

 private:
  std::mt19937_64 engine_;
};

using Color = std::array<double, 3>;

Color random_color(Uniform& u) { return {u.next(), u.next(), u.next()}; }

// One procedural image: a two-color gradient modulated by a few random
// sinusoidal textures, per-pixel grain, and 2-5 filled rectangles or discs.
Rgb8Image synthesize(std::int64_t w, std::int64_t h, Uniform& u) {
  std::vector<double> px(static_cast<std::size_t>(w * h * 3));
  const Color a = random_color(u);
  const Color b = random_color(u);
  const double angle = u.range(0.0, 2.0 * std::numbers::pi);
  const double gx = std::cos(angle), gy = std::sin(angle);

  struct Wave { double fx, fy, phase, amp; };
  std::array<Wave, 3> waves;
  for (auto& wv : waves) {
    wv = {u.range(0.5, 6.0), u.range(0.5, 6.0),
          u.range(0.0, 2.0 * std::numbers::pi), u.range(0.02, 0.12)};
  }
  const double grain = u.range(0.0, 0.06);

  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      const double fx = static_cast<double>(x) / w;
      const double fy = static_cast<double>(y) / h;
      const double t = std::clamp(0.5 + 0.7 * ((fx - 0.5) * gx + (fy - 0.5) * gy), 0.0, 1.0);
      double tex = 0.0;
      for (const auto& wv : waves)
        tex += wv.amp * std::sin(2.0 * std::numbers::pi * (wv.fx * fx + wv.fy * fy) + wv.phase);
      for (int c = 0; c < 3; ++c) {
        const double v = (1.0 - t) * a[c] + t * b[c] + tex + grain * (u.next() - 0.5);
        px[static_cast<std::size_t>((y * w + x) * 3 + c)] = v;
      }
    }
  }

  const int shapes = u.integer(2, 5);
  for (int s = 0; s < shapes; ++s) {
    const Color col = random_color(u);
    const bool disc = u.next() < 0.5;
    const double cx = u.range(0.0, w), cy = u.range(0.0, h);
    const double rx = u.range(0.08, 0.3) * w, ry = u.range(0.08, 0.3) * h;
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < w; ++x) {
        const double dx = (x + 0.5 - cx) / rx, dy = (y + 0.5 - cy) / ry;
        const bool inside = disc ? dx * dx + dy * dy <= 1.0
                                 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
        if (!inside) continue;
        for (int c = 0; c < 3; ++c)
          px[static_cast<std::size_t>((y * w + x) * 3 + c)] = col[c];
      }
    }
  }

  Rgb8Image img{w, h, std::vector<std::uint8_t>(px.size())};
  for (std::size_t i = 0; i < px.size(); ++i)
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(px[i], 0.0, 1.0) * 255.0));
  return img;
}

// (3, w, h) tensor of 8-bit levels 0..255 as floats.
torch::Tensor to_levels(const Rgb8Image& img) {
  auto hwc = torch::from_blob(const_cast<std::uint8_t*>(img.pixels.data()),
                              {img.height, img.width, 3}, torch::kUInt8);
  return hwc.permute({2, 1, 0}).to(torch::kFloat32).contiguous();
}

torch::Tensor levels_to_range(const torch::Tensor& levels, PixelRange range) {
  return levels / 255.0f * range.width() + range.lo;
}

Rgb8Image from_range(const torch::Tensor& chw, PixelRange range) {
  auto levels = ((chw - range.lo) / range.width() * 255.0f)
                    .round()
                    .clamp(0, 255)
                    .to(torch::kUInt8)
                    .permute({2, 1, 0})
                    .contiguous();
  Rgb8Image img{chw.size(1), chw.size(2), {}};
  img.pixels.assign(levels.data_ptr<std::uint8_t>(),
                    levels.data_ptr<std::uint8_t>() + levels.numel());
  return img;
}

Rgb8Image read_ppm(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + file.string());
  auto token = [&in]() {
    std::string t;
    while (in >> t) {
      if (t[0] == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      return t;
    }
    fail(ErrorKind::kIo, "truncated PPM header");
  };
  if (token() != "P6") fail(ErrorKind::kIo, file.string() + " is not a binary PPM");
  const auto w = std::stoll(token());
  const auto h = std::stoll(token());
  const auto maxval = std::stoi(token());
  if (maxval != 255) fail(ErrorKind::kIo, "only 8-bit PPM is supported");
  in.get();
  Rgb8Image img{w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w * h * 3))};
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (!in) fail(ErrorKind::kIo, "truncated PPM data in " + file.string());
  return img;
}

Rgb8Image read_png(const fs::path& file) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, file.c_str()))
    fail(ErrorKind::kIo, "cannot read " + file.string() + ": " + image.message);
  image.format = PNG_FORMAT_RGB;
  Rgb8Image img{image.width, image.height,
                std::vector<std::uint8_t>(PNG_IMAGE_SIZE(image))};
  if (!png_image_finish_read(&image, nullptr, img.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    fail(ErrorKind::kIo, "cannot decode " + file.string() + ": " + image.message);
  }
  return img;
}

bool is_image_file(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  return ext == ".png" || ext == ".ppm";
}

}  // namespace

Rgb8Image read_image_file(const fs::path& file) {
  auto ext = file.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  return ext == ".ppm" ? read_ppm(file) : read_png(file);
}

void write_png(const fs::path& file, const Rgb8Image& img) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, file.c_str(), 0, img.pixels.data(), 0,
                               nullptr))
    fail(ErrorKind::kIo, "cannot write " + file.string() + ": " + image.message);
}

ImageSet ingest_dataset(const DatasetSource& source, std::int64_t width,
                        std::int64_t height, std::int64_t n, PixelRange range) {
  require(n >= 1, "dataset size must be at least 1");
  require(width >= kMinImageSide && height >= kMinImageSide,
          "image sides must be at least 8");
  ImageSet set;
  set.range = range;
  set.images = torch::empty({n, 3, width, height}, torch::kFloat32);

  if (const auto* syn = std::get_if<SyntheticSource>(&source)) {
    set.id = "synthetic:" + std::to_string(syn->seed);
    std::seed_seq seq{static_cast<std::uint32_t>(syn->seed),
                      static_cast<std::uint32_t>(syn->seed >> 32)};
    std::array<std::uint64_t, 1> base{};
    seq.generate(reinterpret_cast<std::uint32_t*>(base.data()),
                 reinterpret_cast<std::uint32_t*>(base.data() + 1));
    for (std::int64_t i = 0; i < n; ++i) {
      Uniform u(base[0] + 0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(i + 1));
      set.images[i] = levels_to_range(to_levels(synthesize(width, height, u)), range);
    }
    return set;
  }

  const auto& dir = std::get<DirectorySource>(source).path;
  if (!fs::is_directory(dir))
    fail(ErrorKind::kIo, "dataset directory not readable: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) fail(ErrorKind::kIo, "no usable images in " + dir.string());
  if (static_cast<std::int64_t>(files.size()) < n)
    fail(ErrorKind::kInvalidArgument,
         "requested " + std::to_string(n) + " images but " + dir.string() +
             " holds only " + std::to_string(files.size()));
  set.id = "dir:" + dir.string();

  namespace F = torch::nn::functional;
  for (std::int64_t i = 0; i < n; ++i) {
    auto levels = to_levels(read_image_file(files[static_cast<std::size_t>(i)]));
    if (levels.size(1) != width || levels.size(2) != height) {
      levels = F::interpolate(levels.unsqueeze(0),
                              F::InterpolateFuncOptions()
                                  .size(std::vector<std::int64_t>{width, height})
                                  .mode(torch::kBilinear)
                                  .align_corners(false))
                   .squeeze(0)
                   .round()
                   .clamp(0, 255);
    }
    set.images[i] = levels_to_range(levels, range);
  }
  return set;
}

void save_dataset(const ImageSet& set, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create " + dir.string());
  for (std::int64_t i = 0; i < set.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "img_%05lld.png", static_cast<long long>(i));
    write_png(dir / name, from_range(set.images[i], set.range));
  }
}

}  // namespace nobox
