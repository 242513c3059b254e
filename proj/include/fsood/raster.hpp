#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "fsood/geometry.hpp"

namespace fsood {

/// 8-bit interleaved image, 1 or 3 channels.
class ImageRaster {
 public:
  ImageRaster() = default;
  /// Throws std::invalid_argument for non-positive sizes or channels not in {1, 3}.
  ImageRaster(int width, int height, int channels, std::uint8_t fill = 0);
  ImageRaster(int width, int height, int channels, std::vector<std::uint8_t> pixels);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }

  std::uint8_t& at(int x, int y, int c) { return pixels_[index(x, y, c)]; }
  std::uint8_t at(int x, int y, int c) const { return pixels_[index(x, y, c)]; }

  std::span<const std::uint8_t> pixels() const { return pixels_; }
  bool operator==(const ImageRaster&) const = default;

 private:
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) * static_cast<std::size_t>(channels_) +
           static_cast<std::size_t>(c);
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<std::uint8_t> pixels_;
};

struct BlurParams {
  double sigma = 8.0;
  int radius = 16;  ///< kernel half-width in pixels; 2 * sigma by default

  static BlurParams from_sigma(double sigma);
  void validate() const;
};

/// Normalized 1-D Gaussian taps for offsets -radius..radius.
std::vector<double> gaussian_kernel(const BlurParams& params);

/// Replaces every pixel whose center lies inside one of `regions` with the
/// Gaussian-blurred value at that pixel (separable kernel, reflect-101
/// borders, rounded to nearest). Every other pixel is copied unchanged.
ImageRaster apply_gaussian_mask(const ImageRaster& raster, std::span<const OrientedBox> regions,
                                const BlurParams& params);

/// Reads 8-bit gray or RGB; alpha is dropped, palettes expanded, 16-bit stripped.
ImageRaster read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const ImageRaster& raster);
/// Width and height from the header without decoding pixels.
std::pair<int, int> read_png_size(const std::filesystem::path& path);

}  // namespace fsood
