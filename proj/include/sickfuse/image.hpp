#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace sickfuse {

/// Single-channel image, row-major.
template <typename T>
struct Plane {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<T> data;

  Plane() = default;
  Plane(std::size_t w, std::size_t h, T fill = T{}) : width(w), height(h), data(w * h, fill) {}

  T& at(std::size_t x, std::size_t y) { return data[y * width + x]; }
  const T& at(std::size_t x, std::size_t y) const { return data[y * width + x]; }

  friend bool operator==(const Plane&, const Plane&) = default;
};

/// Interleaved 8-bit RGB image.
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // width * height * 3

  RgbImage() = default;
  RgbImage(std::size_t w, std::size_t h) : width(w), height(h), pixels(w * h * 3, 0) {}

  std::uint8_t* pixel(std::size_t x, std::size_t y) { return pixels.data() + (y * width + x) * 3; }
  const std::uint8_t* pixel(std::size_t x, std::size_t y) const {
    return pixels.data() + (y * width + x) * 3;
  }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// Luma with BT.601 weights, in [0, 255].
Plane<float> to_gray(const RgbImage& image);

/// Writes intensities in [0, 1] as a binary 8-bit PGM (P5).
void write_pgm(const std::filesystem::path& path, const Plane<double>& intensity);
Plane<std::uint8_t> read_pgm(const std::filesystem::path& path);

}  // namespace sickfuse
