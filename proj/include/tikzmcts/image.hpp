#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace tikzmcts {

/// 8-bit RGB raster, row-major, no padding.
struct RasterImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  static RasterImage filled(int width, int height, std::uint8_t gray);

  bool empty() const { return width <= 0 || height <= 0; }

  std::uint8_t* pixel(int x, int y) { return &rgb[(static_cast<std::size_t>(y) * width + x) * 3]; }
  const std::uint8_t* pixel(int x, int y) const {
    return &rgb[(static_cast<std::size_t>(y) * width + x) * 3];
  }

  /// Luma in [0,1] (ITU-R BT.601 weights).
  double gray(int x, int y) const;

  bool operator==(const RasterImage&) const = default;
};

/// PNG codec backed by libpng. Any color type / bit depth is normalized to RGB8
/// with alpha composited over white.
RasterImage decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const RasterImage& image, int compression_level = 6);

RasterImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RasterImage& image);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace tikzmcts
