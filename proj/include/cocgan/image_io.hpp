#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cocgan/data.hpp"
#include "cocgan/error.hpp"
#include "cocgan/tensor.hpp"

#ifdef COCGAN_HAVE_PNG
#include <png.h>
#endif

namespace cocgan {

// 8-bit raster, 1 (gray) or 3 (RGB) bytes per pixel.
struct Raster {
  std::size_t height = 0, width = 0, channels = 1;
  std::vector<std::uint8_t> pixels;

  Raster() = default;
  Raster(std::size_t h, std::size_t w, std::size_t ch, std::uint8_t fill = 0)
      : height(h), width(w), channels(ch), pixels(h * w * ch, fill) {}
  std::uint8_t* at(std::size_t r, std::size_t c) { return pixels.data() + (r * width + c) * channels; }
  const std::uint8_t* at(std::size_t r, std::size_t c) const { return pixels.data() + (r * width + c) * channels; }
};

// Binary PGM (P5) or PPM (P6) by channel count.
inline void write_pnm(const std::string& path, const Raster& img) {
  if (img.channels != 1 && img.channels != 3) throw ConfigError("pnm: 1 or 3 channels required");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw LoadError("pnm: cannot open '" + path + "' for writing");
  f << (img.channels == 1 ? "P5" : "P6") << "\n" << img.width << " " << img.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!f) throw LoadError("pnm: write failed for '" + path + "'");
}

inline Raster read_pnm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw LoadError("pnm: cannot open '" + path + "'");
  std::string magic;
  std::size_t w = 0, h = 0, maxv = 0;
  f >> magic >> w >> h >> maxv;
  if ((magic != "P5" && magic != "P6") || maxv != 255 || !f) throw LoadError("pnm: '" + path + "' is not an 8-bit P5/P6 file");
  f.get();
  Raster img(h, w, magic == "P5" ? 1 : 3);
  f.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (f.gcount() != static_cast<std::streamsize>(img.pixels.size())) throw LoadError("pnm: '" + path + "' truncated");
  return img;
}

inline constexpr bool kPngSupport =
#ifdef COCGAN_HAVE_PNG
    true;
#else
    false;
#endif

inline void write_png(const std::string& path, const Raster& img) {
#ifdef COCGAN_HAVE_PNG
  if (img.channels != 1 && img.channels != 3) throw ConfigError("png: 1 or 3 channels required");
  png_image out{};
  out.version = PNG_IMAGE_VERSION;
  out.width = static_cast<png_uint_32>(img.width);
  out.height = static_cast<png_uint_32>(img.height);
  out.format = img.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&out, path.c_str(), 0, img.pixels.data(), 0, nullptr))
    throw LoadError("png: cannot write '" + path + "': " + out.message);
#else
  (void)img;
  throw ConfigError("png: '" + path + "' needs a build with libpng; use .pgm/.ppm");
#endif
}

// PNG for a ".png" extension, binary PNM otherwise.
inline void write_image(const std::string& path, const Raster& img) {
  if (std::filesystem::path(path).extension() == ".png")
    write_png(path, img);
  else
    write_pnm(path, img);
}

// Tiles images [n, h, w, ch] in [-1, 1] into a rows x cols grid with a
// `pad`-pixel black border between tiles. Missing tiles stay black.
template <class T>
Raster image_grid(const Tensor<T>& images, std::size_t rows, std::size_t cols, std::size_t pad = 1) {
  if (images.rank() != 4) throw ConfigError("image_grid: expected [n, h, w, ch] images");
  const auto n = images.dim(0), h = images.dim(1), w = images.dim(2), ch = images.dim(3);
  if (ch != 1 && ch != 3) throw ConfigError("image_grid: 1 or 3 channels required");
  Raster out(rows * h + (rows + 1) * pad, cols * w + (cols + 1) * pad, ch);
  for (std::size_t k = 0; k < std::min(n, rows * cols); ++k) {
    const auto r0 = pad + (k / cols) * (h + pad), c0 = pad + (k % cols) * (w + pad);
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c)
        for (std::size_t q = 0; q < ch; ++q)
          out.at(r0 + r, c0 + c)[q] = denormalize_pixel(images[((k * h + r) * w + c) * ch + q]);
  }
  return out;
}

inline constexpr std::array<std::array<std::uint8_t, 3>, 16> kClusterPalette = {{
    {230, 25, 75},  {60, 180, 75},   {255, 225, 25}, {0, 130, 200},  {245, 130, 48}, {145, 30, 180},
    {70, 240, 240}, {240, 50, 230},  {210, 245, 60}, {250, 190, 212}, {0, 128, 128},  {220, 190, 255},
    {170, 110, 40}, {255, 250, 200}, {128, 0, 0},    {170, 255, 195},
}};

inline std::array<std::uint8_t, 3> palette_color(std::size_t k) { return kClusterPalette[k % kClusterPalette.size()]; }

}  // namespace cocgan
