#pragma once

#include <zlib.h>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "cocgan/error.hpp"
#include "cocgan/random.hpp"
#include "cocgan/tensor.hpp"

namespace cocgan {

inline constexpr std::uint32_t kIdxImageMagic = 2051;  // 0x00000803
inline constexpr std::uint32_t kIdxLabelMagic = 2049;  // 0x00000801

// Images are stored normalized to [-1, 1], row-major [count, h, w, ch].
struct Dataset {
  std::vector<float> images;
  std::vector<int> labels;
  std::size_t count = 0, height = 28, width = 28, channels = 1;
  std::size_t n_classes = 10;
  std::string source;

  std::size_t image_size() const { return height * width * channels; }

  template <class T = float>
  Tensor<T> batch(const std::vector<std::size_t>& idx) const {
    std::vector<T> v;
    v.reserve(idx.size() * image_size());
    for (auto i : idx) {
      if (i >= count) throw ContractError("dataset: index " + std::to_string(i) + " out of range");
      const float* p = images.data() + i * image_size();
      v.insert(v.end(), p, p + image_size());
    }
    return Tensor<T>({idx.size(), height, width, channels}, std::move(v));
  }

  std::vector<int> batch_labels(const std::vector<std::size_t>& idx) const {
    std::vector<int> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(labels.at(i));
    return out;
  }
};

inline float normalize_pixel(std::uint8_t v) { return static_cast<float>(v) / 127.5f - 1.0f; }
inline std::uint8_t denormalize_pixel(double v) {
  const double b = std::round(127.5 * (v + 1.0));
  return static_cast<std::uint8_t>(std::clamp(b, 0.0, 255.0));
}

namespace detail {

// gzread handles plain and gzip-compressed files alike.
inline std::string read_maybe_gz(const std::string& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw LoadError("idx: cannot open '" + path + "'");
  std::string out;
  char buf[1 << 16];
  int n;
  while ((n = gzread(f, buf, sizeof buf)) > 0) out.append(buf, static_cast<std::size_t>(n));
  const bool bad = n < 0;
  gzclose(f);
  if (bad) throw LoadError("idx: decompression failed for '" + path + "'");
  return out;
}

inline void write_maybe_gz(const std::string& path, const std::string& bytes) {
  const bool gz = path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
  gzFile f = gzopen(path.c_str(), gz ? "wb9" : "wbT");
  if (!f) throw LoadError("idx: cannot open '" + path + "' for writing");
  const int n = gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
  gzclose(f);
  if (n != static_cast<int>(bytes.size())) throw LoadError("idx: write failed for '" + path + "'");
}

inline std::uint32_t be32(const std::string& b, std::size_t off, const std::string& path, const char* what) {
  if (off + 4 > b.size())
    throw LoadError("idx: '" + path + "' truncated reading " + what + " at offset " + std::to_string(off));
  return (std::uint32_t(std::uint8_t(b[off])) << 24) | (std::uint32_t(std::uint8_t(b[off + 1])) << 16) |
         (std::uint32_t(std::uint8_t(b[off + 2])) << 8) | std::uint32_t(std::uint8_t(b[off + 3]));
}

inline void put_be32(std::string& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<char>((v >> s) & 0xff));
}

}  // namespace detail

// Reads an IDX image/label pair (optionally gzip-compressed).
inline Dataset read_idx(const std::string& images_path, const std::string& labels_path) {
  const auto ib = detail::read_maybe_gz(images_path);
  const auto lb = detail::read_maybe_gz(labels_path);
  const auto im = detail::be32(ib, 0, images_path, "magic");
  if (im != kIdxImageMagic)
    throw LoadError("idx: '" + images_path + "' bad image magic " + std::to_string(im) + " at offset 0 (expected 2051)");
  const auto lm = detail::be32(lb, 0, labels_path, "magic");
  if (lm != kIdxLabelMagic)
    throw LoadError("idx: '" + labels_path + "' bad label magic " + std::to_string(lm) + " at offset 0 (expected 2049)");
  const auto n = detail::be32(ib, 4, images_path, "count");
  const auto rows = detail::be32(ib, 8, images_path, "rows");
  const auto cols = detail::be32(ib, 12, images_path, "cols");
  const auto nl = detail::be32(lb, 4, labels_path, "count");
  if (rows != 28 || cols != 28)
    throw LoadError("idx: '" + images_path + "' has " + std::to_string(rows) + "x" + std::to_string(cols) +
                    " images at offset 8, expected 28x28");
  if (n != nl)
    throw LoadError("idx: image count " + std::to_string(n) + " (offset 4 of '" + images_path + "') != label count " +
                    std::to_string(nl) + " (offset 4 of '" + labels_path + "')");
  const std::size_t need = 16 + std::size_t(n) * rows * cols;
  if (ib.size() != need)
    throw LoadError("idx: '" + images_path + "' payload " + (ib.size() < need ? "truncated" : "has trailing bytes") +
                    " at offset " + std::to_string(std::min(ib.size(), need)) + " (expected " + std::to_string(need) +
                    " bytes)");
  if (lb.size() != 8 + std::size_t(n))
    throw LoadError("idx: '" + labels_path + "' payload " + (lb.size() < 8 + std::size_t(n) ? "truncated" : "has trailing bytes") +
                    " at offset " + std::to_string(std::min<std::size_t>(lb.size(), 8 + n)));
  Dataset ds;
  ds.count = n;
  ds.height = rows;
  ds.width = cols;
  ds.source = images_path;
  ds.images.resize(std::size_t(n) * rows * cols);
  for (std::size_t i = 0; i < ds.images.size(); ++i) ds.images[i] = normalize_pixel(static_cast<std::uint8_t>(ib[16 + i]));
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    ds.labels[i] = static_cast<std::uint8_t>(lb[8 + i]);
    if (static_cast<std::size_t>(ds.labels[i]) >= ds.n_classes)
      throw LoadError("idx: label " + std::to_string(ds.labels[i]) + " at offset " + std::to_string(8 + i) +
                      " exceeds class count");
  }
  return ds;
}

// Writes a single-channel dataset back to IDX; ".gz" paths are compressed.
inline void write_idx(const std::string& images_path, const std::string& labels_path, const Dataset& ds) {
  if (ds.channels != 1) throw ConfigError("idx: only single-channel datasets can be written");
  std::string ib, lb;
  detail::put_be32(ib, kIdxImageMagic);
  detail::put_be32(ib, static_cast<std::uint32_t>(ds.count));
  detail::put_be32(ib, static_cast<std::uint32_t>(ds.height));
  detail::put_be32(ib, static_cast<std::uint32_t>(ds.width));
  for (float v : ds.images) ib.push_back(static_cast<char>(denormalize_pixel(v)));
  detail::put_be32(lb, kIdxLabelMagic);
  detail::put_be32(lb, static_cast<std::uint32_t>(ds.count));
  for (int y : ds.labels) lb.push_back(static_cast<char>(y));
  detail::write_maybe_gz(images_path, ib);
  detail::write_maybe_gz(labels_path, lb);
}

// Rows [first, first + n) as a new dataset.
inline Dataset slice(const Dataset& ds, std::size_t first, std::size_t n) {
  if (first + n > ds.count) throw ConfigError("dataset: slice beyond " + std::to_string(ds.count) + " images");
  Dataset out = ds;
  out.count = n;
  out.images.assign(ds.images.begin() + first * ds.image_size(), ds.images.begin() + (first + n) * ds.image_size());
  out.labels.assign(ds.labels.begin() + first, ds.labels.begin() + first + n);
  return out;
}

// Per-epoch shuffled index batches; the last short batch is dropped.
inline std::vector<std::vector<std::size_t>> batch_iter(std::size_t count, std::size_t batch, std::uint64_t seed,
                                                        std::uint64_t epoch) {
  if (batch == 0) throw ConfigError("batch_iter: batch must be >= 1");
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  Rng rng(seed ^ (0x9E3779B97F4A7C15ull * (epoch + 1)));
  rng.shuffle(order.begin(), order.end());
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t b = 0; b + batch <= count; b += batch) out.emplace_back(order.begin() + b, order.begin() + b + batch);
  return out;
}

// Center of class k's blob: evenly spaced on a circle around the image center.
inline std::pair<double, double> blob_center(std::size_t k, std::size_t n_classes) {
  const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n_classes);
  return {13.5 + 8.0 * std::sin(a), 13.5 - 8.0 * std::cos(a)};
}

// Image i belongs to class i % n_classes: a Gaussian blob (sigma 2.5 px) at
// that class's center, jittered by up to 1 px, on a -1 background.
inline Dataset synthetic_blobs(std::size_t n, std::size_t n_classes, std::uint64_t seed) {
  if (n_classes == 0 || n < n_classes) throw ConfigError("synthetic_blobs: need n >= n_classes >= 1");
  Dataset ds;
  ds.count = n;
  ds.n_classes = n_classes;
  ds.source = "synthetic_blobs(seed=" + std::to_string(seed) + ")";
  ds.images.resize(n * 784);
  ds.labels.resize(n);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = i % n_classes;
    ds.labels[i] = static_cast<int>(k);
    auto [cy, cx] = blob_center(k, n_classes);
    cy += rng.uniform(-1, 1);
    cx += rng.uniform(-1, 1);
    for (std::size_t r = 0; r < 28; ++r)
      for (std::size_t c = 0; c < 28; ++c) {
        const double d2 = (r - cy) * (r - cy) + (c - cx) * (c - cx);
        ds.images[i * 784 + r * 28 + c] = static_cast<float>(-1.0 + 2.0 * std::exp(-d2 / (2 * 2.5 * 2.5)));
      }
  }
  return ds;
}

}  // namespace cocgan
