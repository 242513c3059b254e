#include "fsood/raster.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <string>

namespace fsood {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw std::runtime_error("cannot open " + path.string());
  return f;
}

// x86-64 builds carry unwind tables for C code, so throwing through libpng
// frames is safe there.
[[noreturn]] void png_fail(png_structp, png_const_charp msg) {
  throw std::runtime_error(std::string("libpng: ") + msg);
}

void png_warn(png_structp, png_const_charp) {}

// Owns a read struct; libpng errors surface as exceptions from png_fail.
class PngReader {
 public:
  explicit PngReader(const std::filesystem::path& path) : file_(open_file(path, "rb")) {
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, file_.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
      throw std::runtime_error(path.string() + " is not a PNG file");
    }
    png_ = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
    if (png_ == nullptr) throw std::runtime_error("png_create_read_struct failed");
    info_ = png_create_info_struct(png_);
    if (info_ == nullptr) {
      png_destroy_read_struct(&png_, nullptr, nullptr);
      throw std::runtime_error("png_create_info_struct failed");
    }
    png_init_io(png_, file_.get());
    png_set_sig_bytes(png_, 8);
    png_read_info(png_, info_);
  }
  ~PngReader() { png_destroy_read_struct(&png_, &info_, nullptr); }
  PngReader(const PngReader&) = delete;
  PngReader& operator=(const PngReader&) = delete;

  png_structp png() const { return png_; }
  png_infop info() const { return info_; }

 private:
  FilePtr file_;
  png_structp png_ = nullptr;
  png_infop info_ = nullptr;
};

int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

}  // namespace

ImageRaster::ImageRaster(int width, int height, int channels, std::uint8_t fill)
    : ImageRaster(width, height, channels,
                  std::vector<std::uint8_t>(static_cast<std::size_t>(std::max(width, 0)) *
                                                static_cast<std::size_t>(std::max(height, 0)) *
                                                static_cast<std::size_t>(std::max(channels, 0)),
                                            fill)) {}

ImageRaster::ImageRaster(int width, int height, int channels, std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), channels_(channels), pixels_(std::move(pixels)) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("ImageRaster: dimensions must be positive");
  if (channels != 1 && channels != 3) throw std::invalid_argument("ImageRaster: channels must be 1 or 3");
  if (pixels_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height) *
                            static_cast<std::size_t>(channels)) {
    throw std::invalid_argument("ImageRaster: pixel buffer size does not match dimensions");
  }
}

BlurParams BlurParams::from_sigma(double sigma) {
  return {sigma, std::max(1, static_cast<int>(std::lround(2.0 * sigma)))};
}

void BlurParams::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("blur sigma must be > 0");
  if (radius < 1) throw std::invalid_argument("blur radius must be >= 1");
}

std::vector<double> gaussian_kernel(const BlurParams& params) {
  params.validate();
  std::vector<double> taps(static_cast<std::size_t>(2 * params.radius + 1));
  double sum = 0.0;
  for (int k = -params.radius; k <= params.radius; ++k) {
    const double v = std::exp(-static_cast<double>(k * k) / (2.0 * params.sigma * params.sigma));
    taps[static_cast<std::size_t>(k + params.radius)] = v;
    sum += v;
  }
  for (double& t : taps) t /= sum;
  return taps;
}

ImageRaster apply_gaussian_mask(const ImageRaster& raster, std::span<const OrientedBox> regions,
                                const BlurParams& params) {
  params.validate();
  ImageRaster out = raster;
  if (regions.empty()) return out;

  const int w = raster.width();
  const int h = raster.height();
  const int ch = raster.channels();

  // Pixels to replace, and their bounding rectangle.
  std::vector<std::uint8_t> inside(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0);
  int x0 = w, y0 = h, x1 = -1, y1 = -1;
  for (const OrientedBox& box : regions) {
    const ConvexPolygon poly = obb_to_polygon(box);
    const AxisAlignedBox env = obb_to_hbb(box);
    const int bx0 = std::max(0, static_cast<int>(std::floor(env.xmin())));
    const int by0 = std::max(0, static_cast<int>(std::floor(env.ymin())));
    const int bx1 = std::min(w - 1, static_cast<int>(std::ceil(env.xmax())));
    const int by1 = std::min(h - 1, static_cast<int>(std::ceil(env.ymax())));
    for (int y = by0; y <= by1; ++y) {
      for (int x = bx0; x <= bx1; ++x) {
        if (poly.contains({x + 0.5, y + 0.5})) {
          inside[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) +
                 static_cast<std::size_t>(x)] = 1;
          x0 = std::min(x0, x);
          y0 = std::min(y0, y);
          x1 = std::max(x1, x);
          y1 = std::max(y1, y);
        }
      }
    }
  }
  if (x1 < 0) return out;

  const std::vector<double> taps = gaussian_kernel(params);
  const int r = params.radius;
  const int roi_w = x1 - x0 + 1;

  // Horizontal pass over every row, restricted to the ROI columns.
  std::vector<double> horiz(static_cast<std::size_t>(h) * static_cast<std::size_t>(roi_w) *
                            static_cast<std::size_t>(ch));
  auto hidx = [&](int y, int x, int c) {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(roi_w) +
            static_cast<std::size_t>(x - x0)) * static_cast<std::size_t>(ch) +
           static_cast<std::size_t>(c);
  };
  for (int y = 0; y < h; ++y) {
    for (int x = x0; x <= x1; ++x) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int k = -r; k <= r; ++k) {
          acc += taps[static_cast<std::size_t>(k + r)] * raster.at(reflect101(x + k, w), y, c);
        }
        horiz[hidx(y, x, c)] = acc;
      }
    }
  }

  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      if (!inside[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) +
                  static_cast<std::size_t>(x)]) {
        continue;
      }
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int k = -r; k <= r; ++k) {
          acc += taps[static_cast<std::size_t>(k + r)] * horiz[hidx(reflect101(y + k, h), x, c)];
        }
        out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(acc), 0L, 255L));
      }
    }
  }
  return out;
}

ImageRaster read_png(const std::filesystem::path& path) {
  PngReader reader(path);
  png_structp png = reader.png();
  png_infop info = reader.info();

  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (depth == 16) png_set_strip_16(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  // Transparency chunks are ignored; masking works on color values only.
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) {
    throw std::runtime_error(path.string() + ": unsupported channel count " + std::to_string(channels));
  }
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) *
                                   static_cast<std::size_t>(channels));
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) {
    rows[static_cast<std::size_t>(y)] =
        pixels.data() + static_cast<std::size_t>(y) * static_cast<std::size_t>(width) *
                            static_cast<std::size_t>(channels);
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  return ImageRaster(width, height, channels, std::move(pixels));
}

std::pair<int, int> read_png_size(const std::filesystem::path& path) {
  PngReader reader(path);
  return {static_cast<int>(png_get_image_width(reader.png(), reader.info())),
          static_cast<int>(png_get_image_height(reader.png(), reader.info()))};
}

void write_png(const std::filesystem::path& path, const ImageRaster& raster) {
  FilePtr file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  if (png == nullptr) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* png;
    png_infop* info;
    ~Guard() { png_destroy_write_struct(png, info); }
  } guard{&png, &info};
  if (info == nullptr) throw std::runtime_error("png_create_info_struct failed");

  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(raster.width()),
               static_cast<png_uint_32>(raster.height()), 8,
               raster.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(raster.width()) *
                             static_cast<std::size_t>(raster.channels());
  const auto pixels = raster.pixels();
  for (int y = 0; y < raster.height(); ++y) {
    png_write_row(png, pixels.data() + static_cast<std::size_t>(y) * stride);
  }
  png_write_end(png, nullptr);
}

}  // namespace fsood
