#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace lucenet {

/// Row-major grayscale raster with values in [0,1].
struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;

  GrayImage() = default;
  GrayImage(std::size_t h, std::size_t w, float fill = 0.0f)
      : height(h), width(w), pixels(h * w, fill) {}

  float& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
  float at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
  bool operator==(const GrayImage&) const = default;
};

/// Row-major interleaved RGB raster, channels in [0,1].
struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;  // size 3*height*width

  RgbImage() = default;
  RgbImage(std::size_t h, std::size_t w, float fill = 0.0f)
      : height(h), width(w), pixels(3 * h * w, fill) {}

  float* at(std::size_t y, std::size_t x) { return &pixels[3 * (y * width + x)]; }
  const float* at(std::size_t y, std::size_t x) const { return &pixels[3 * (y * width + x)]; }
  bool operator==(const RgbImage&) const = default;
};

/// Boolean raster stored as 0/1 bytes.
struct Mask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(std::size_t h, std::size_t w) : height(h), width(w), bits(h * w, 0) {}

  std::uint8_t& at(std::size_t y, std::size_t x) { return bits[y * width + x]; }
  std::uint8_t at(std::size_t y, std::size_t x) const { return bits[y * width + x]; }
  std::size_t count() const;
  bool operator==(const Mask&) const = default;
};

// Binary netpbm (P5 grayscale / P6 color), maxval 255. Values are written as
// round(v * 255) after clamping to [0,1] and read back as byte / 255.
void save_pgm(const GrayImage& image, const std::filesystem::path& path);
GrayImage load_pgm(const std::filesystem::path& path);
void save_ppm(const RgbImage& image, const std::filesystem::path& path);
RgbImage load_ppm(const std::filesystem::path& path);

std::vector<char> encode_pgm(const GrayImage& image);
GrayImage decode_pgm(const std::vector<char>& bytes);
std::vector<char> encode_ppm(const RgbImage& image);
RgbImage decode_ppm(const std::vector<char>& bytes);

/// Masks are stored as PGM with 0 / 255.
void save_mask(const Mask& mask, const std::filesystem::path& path);
Mask load_mask(const std::filesystem::path& path);

}  // namespace lucenet
