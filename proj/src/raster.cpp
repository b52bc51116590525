#include "alttext/raster.hpp"

#include <cctype>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "alttext/error.hpp"

namespace alttext {

Raster::Raster(int w, int h, int c, std::uint8_t fill)
    : width(w), height(h), channels(c),
      pixels(static_cast<std::size_t>(w) * h * c, fill) {}

bool Raster::valid() const noexcept {
  return width > 0 && height > 0 && (channels == 1 || channels == 3) &&
         pixels.size() == static_cast<std::size_t>(width) * height * channels;
}

namespace {

// Reads one header integer, skipping whitespace and '#' comments.
bool read_header_int(const std::vector<std::uint8_t>& b, std::size_t& pos, int& value) {
  while (pos < b.size()) {
    if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (std::isspace(b[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  if (pos >= b.size() || !std::isdigit(b[pos])) return false;
  long v = 0;
  while (pos < b.size() && std::isdigit(b[pos])) {
    v = v * 10 + (b[pos] - '0');
    if (v > 1'000'000) return false;
    ++pos;
  }
  value = static_cast<int>(v);
  return true;
}

}  // namespace

Raster decode_pnm(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw Error(Errc::UndecodableImage, "not a binary PGM/PPM");
  }
  const int channels = bytes[1] == '5' ? 1 : 3;
  std::size_t pos = 2;
  int w = 0, h = 0, maxval = 0;
  if (!read_header_int(bytes, pos, w) || !read_header_int(bytes, pos, h) ||
      !read_header_int(bytes, pos, maxval)) {
    throw Error(Errc::UndecodableImage, "truncated PNM header");
  }
  if (w <= 0 || h <= 0 || maxval != 255) {
    throw Error(Errc::UndecodableImage, "unsupported PNM dimensions or maxval");
  }
  ++pos;  // single whitespace byte after maxval
  Raster img(w, h, channels);
  if (bytes.size() < pos + img.pixels.size()) {
    throw Error(Errc::UndecodableImage, "truncated PNM raster");
  }
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(pos), img.pixels.size(),
              img.pixels.begin());
  return img;
}

Raster load_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::UndecodableImage, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_pnm(bytes);
}

std::vector<std::uint8_t> encode_pnm(const Raster& image) {
  if (!image.valid()) throw Error(Errc::InvalidArgument, "invalid raster");
  const std::string header = std::string(image.channels == 1 ? "P5" : "P6") + "\n" +
                             std::to_string(image.width) + " " +
                             std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

void save_pnm(const Raster& image, const std::filesystem::path& path) {
  const auto bytes = encode_pnm(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint8_t> square_gray(const Raster& image, int side) {
  if (!image.valid()) throw Error(Errc::UndecodableImage, "raster has no pixels");
  if (side <= 0) throw Error(Errc::InvalidArgument, "side must be positive");

  const int w = image.width, h = image.height;
  int scaled_w, scaled_h;
  if (w <= h) {
    scaled_w = side;
    scaled_h = std::max(side, static_cast<int>(std::lround(static_cast<double>(h) * side / w)));
  } else {
    scaled_h = side;
    scaled_w = std::max(side, static_cast<int>(std::lround(static_cast<double>(w) * side / h)));
  }
  const int off_x = (scaled_w - side) / 2;
  const int off_y = (scaled_h - side) / 2;
  const double sx = static_cast<double>(w) / scaled_w;
  const double sy = static_cast<double>(h) / scaled_h;

  auto sample_coord = [](double dst, double scale, int limit, int& i0, int& i1, double& frac) {
    double src = (dst + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(limit - 1));
    i0 = static_cast<int>(std::floor(src));
    i1 = std::min(i0 + 1, limit - 1);
    frac = src - i0;
  };

  std::vector<std::uint8_t> out(static_cast<std::size_t>(side) * side);
  for (int y = 0; y < side; ++y) {
    int y0, y1;
    double fy;
    sample_coord(y + off_y, sy, h, y0, y1, fy);
    for (int x = 0; x < side; ++x) {
      int x0, x1;
      double fx;
      sample_coord(x + off_x, sx, w, x0, x1, fx);
      double rgb[3] = {0.0, 0.0, 0.0};
      for (int c = 0; c < image.channels; ++c) {
        const double top = image.at(x0, y0, c) * (1.0 - fx) + image.at(x1, y0, c) * fx;
        const double bot = image.at(x0, y1, c) * (1.0 - fx) + image.at(x1, y1, c) * fx;
        rgb[c] = top * (1.0 - fy) + bot * fy;
      }
      const double luma = image.channels == 1
                              ? rgb[0]
                              : 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2];
      out[static_cast<std::size_t>(y) * side + x] =
          static_cast<std::uint8_t>(std::clamp(std::floor(luma + 0.5), 0.0, 255.0));
    }
  }
  return out;
}

}  // namespace alttext
