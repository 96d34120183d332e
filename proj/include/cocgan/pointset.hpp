#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cocgan/error.hpp"
#include "cocgan/ops.hpp"
#include "cocgan/tensor.hpp"

namespace cocgan {

// A batch of images held as points: `features` is [batch * height * width, d]
// in raster order per image; `positions` is the shared [n, 2] grid in
// [-0.5, 0.5]^2, rebuilt whenever the grid changes.
template <class T>
struct PointSet {
  Tensor<T> features;
  Tensor<T> positions;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t batch = 1;
  bool batched = true;  // false when built from a single rank-3 image

  std::size_t points() const { return height * width; }
  std::size_t channels() const { return features.dim(1); }
};

// (x, y) of pixel (i, j) = ((j + 0.5) / width - 0.5, (i + 0.5) / height - 0.5).
template <class T>
Tensor<T> grid_positions(std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw ConfigError("grid_positions: empty grid");
  std::vector<T> v;
  v.reserve(height * width * 2);
  for (std::size_t i = 0; i < height; ++i)
    for (std::size_t j = 0; j < width; ++j) {
      v.push_back(static_cast<T>((static_cast<double>(j) + 0.5) / static_cast<double>(width) - 0.5));
      v.push_back(static_cast<T>((static_cast<double>(i) + 0.5) / static_cast<double>(height) - 0.5));
    }
  return Tensor<T>({height * width, 2}, std::move(v));
}

template <class T>
PointSet<T> make_pointset(Tensor<T> features, std::size_t height, std::size_t width) {
  if (features.rank() != 2 || features.dim(0) % (height * width))
    throw ConfigError("pointset: feature rows " + to_string(features.shape()) + " do not tile a " +
                      std::to_string(height) + "x" + std::to_string(width) + " grid");
  PointSet<T> ps;
  ps.batch = features.dim(0) / (height * width);
  ps.features = std::move(features);
  ps.positions = grid_positions<T>(height, width);
  ps.height = height;
  ps.width = width;
  return ps;
}

// Accepts [h, w, ch] or [batch, h, w, ch].
template <class T>
PointSet<T> image_to_points(const Tensor<T>& image) {
  if (image.rank() == 3) {
    auto ps = make_pointset(reshape(image, {image.dim(0) * image.dim(1), image.dim(2)}), image.dim(0), image.dim(1));
    ps.batched = false;
    return ps;
  }
  if (image.rank() == 4)
    return make_pointset(reshape(image, {image.dim(0) * image.dim(1) * image.dim(2), image.dim(3)}), image.dim(1),
                         image.dim(2));
  throw ConfigError("image_to_points: expected [h,w,ch] or [b,h,w,ch], got " + to_string(image.shape()));
}

template <class T>
Tensor<T> points_to_image(const PointSet<T>& ps, std::size_t channels) {
  if (ps.features.dim(1) != channels)
    throw ContractError("points_to_image: point width " + std::to_string(ps.features.dim(1)) + " but " +
                        std::to_string(channels) + " channels requested");
  if (ps.features.dim(0) != ps.batch * ps.points()) throw ContractError("points_to_image: grid inconsistent with point count");
  if (!ps.batched) return reshape(ps.features, {ps.height, ps.width, channels});
  return reshape(ps.features, {ps.batch, ps.height, ps.width, channels});
}

// Positions repeated for every image of the batch: [batch * n, 2].
template <class T>
Tensor<T> tiled_positions(const PointSet<T>& ps) {
  const auto n = ps.points();
  std::vector<T> v(ps.batch * n * 2);
  for (std::size_t b = 0; b < ps.batch; ++b)
    std::copy(ps.positions.data().begin(), ps.positions.data().end(), v.begin() + static_cast<std::ptrdiff_t>(b * n * 2));
  return Tensor<T>({ps.batch * n, 2}, std::move(v));
}

}  // namespace cocgan
