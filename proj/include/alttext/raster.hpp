#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace alttext {

/// A decoded 8-bit raster, row-major, interleaved channels (1 = gray, 3 = RGB).
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> pixels;

  Raster() = default;
  Raster(int w, int h, int c, std::uint8_t fill = 0);

  std::uint8_t& at(int x, int y, int c = 0) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c = 0) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool valid() const noexcept;
};

/// Reads binary PGM (P5) or PPM (P6) with maxval 255.
/// Throws Error(UndecodableImage) on anything else.
Raster load_pnm(const std::filesystem::path& path);
Raster decode_pnm(const std::vector<std::uint8_t>& bytes);
void save_pnm(const Raster& image, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_pnm(const Raster& image);

/// Scales so the shorter side equals `side` (bilinear, pixel-centre aligned),
/// centre-crops to side x side and converts to grayscale with
/// 0.299R + 0.587G + 0.114B rounded half-up. Row-major output.
std::vector<std::uint8_t> square_gray(const Raster& image, int side);

}  // namespace alttext
