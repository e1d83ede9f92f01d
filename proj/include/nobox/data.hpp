#pragma once

// Image sources: a procedural generator (colored shapes over noise textures)
// and directories of PNG / binary PPM files. Every image is quantized to
// 8-bit levels before being mapped into the pixel range, so saving and
// re-ingesting a set reproduces it exactly.

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>

#include "nobox/core.hpp"

namespace nobox {

struct ImageSet {
  torch::Tensor images;  // (N, 3, w, h), float32
  PixelRange range{};
  std::string id;

  std::int64_t size() const { return images.size(0); }
  ImageSet slice(std::int64_t begin, std::int64_t count) const;
  ImageTensor at(std::int64_t i) const;
};

struct SyntheticSource {
  std::uint64_t seed = 1;
};

struct DirectorySource {
  std::filesystem::path path;
};

using DatasetSource = std::variant<SyntheticSource, DirectorySource>;

ImageSet ingest_dataset(const DatasetSource& source, std::int64_t width,
                        std::int64_t height, std::int64_t n,
                        PixelRange range = {});

// Writes img_00000.png, img_00001.png, ... into `dir`.
void save_dataset(const ImageSet& set, const std::filesystem::path& dir);

// 8-bit RGB raster, row-major, rows = height.
struct Rgb8Image {
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::vector<std::uint8_t> pixels;
};

Rgb8Image read_image_file(const std::filesystem::path& file);
void write_png(const std::filesystem::path& file, const Rgb8Image& image);

}  // namespace nobox
