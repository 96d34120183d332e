#include <filesystem>
#include <set>
#include <string>

#include <gtest/gtest.h>

#include "cocgan/data.hpp"
#include "cocgan/image_io.hpp"

using namespace cocgan;
namespace fs = std::filesystem;

namespace {

const std::string kImages = std::string(COCGAN_TEST_DATA) + "/mnist-10k-images-idx3-ubyte.gz";
const std::string kLabels = std::string(COCGAN_TEST_DATA) + "/mnist-10k-labels-idx1-ubyte.gz";

std::string temp_path(const std::string& name) {
  auto dir = fs::temp_directory_path() / "cocgan_data_test";
  fs::create_directories(dir);
  return (dir / name).string();
}

std::string load_error(const std::string& images, const std::string& labels) {
  try {
    read_idx(images, labels);
  } catch (const LoadError& e) {
    return e.what();
  }
  return "";
}

Dataset tiny(std::size_t n) {
  Dataset ds;
  ds.count = n;
  ds.images.resize(n * 784);
  ds.labels.resize(n);
  for (std::size_t i = 0; i < ds.images.size(); ++i) ds.images[i] = normalize_pixel(static_cast<std::uint8_t>(i * 7 % 256));
  for (std::size_t i = 0; i < n; ++i) ds.labels[i] = static_cast<int>(i % 10);
  return ds;
}

}  // namespace

TEST(Idx, MnistSubsetLoads) {
  auto ds = read_idx(kImages, kLabels);
  EXPECT_EQ(ds.count, 10000u);
  EXPECT_EQ(ds.images.size(), 10000u * 784u);
  EXPECT_EQ(ds.labels.size(), 10000u);
  std::set<int> classes(ds.labels.begin(), ds.labels.end());
  EXPECT_EQ(classes.size(), 10u);
  for (float v : ds.images) {
    ASSERT_GE(v, -1.0f);
    ASSERT_LE(v, 1.0f);
  }
}

TEST(Idx, MagicBytesOnDisk) {
  const auto raw = detail::read_maybe_gz(kImages);
  ASSERT_GE(raw.size(), 4u);
  EXPECT_EQ(static_cast<unsigned char>(raw[0]), 0x00);
  EXPECT_EQ(static_cast<unsigned char>(raw[1]), 0x00);
  EXPECT_EQ(static_cast<unsigned char>(raw[2]), 0x08);
  EXPECT_EQ(static_cast<unsigned char>(raw[3]), 0x03);
  const auto lab = detail::read_maybe_gz(kLabels);
  EXPECT_EQ(static_cast<unsigned char>(lab[3]), 0x01);
}

TEST(Idx, PixelMapEndpointsAndInverse) {
  EXPECT_EQ(normalize_pixel(255), 1.0f);
  EXPECT_EQ(normalize_pixel(0), -1.0f);
  for (int b = 0; b < 256; ++b) EXPECT_EQ(denormalize_pixel(normalize_pixel(static_cast<std::uint8_t>(b))), b);
}

TEST(Idx, WriteReadRoundTrip) {
  auto ds = tiny(5);
  const auto im = temp_path("rt-images.gz"), lb = temp_path("rt-labels");
  write_idx(im, lb, ds);
  auto back = read_idx(im, lb);
  EXPECT_EQ(back.count, 5u);
  EXPECT_EQ(back.images, ds.images);
  EXPECT_EQ(back.labels, ds.labels);
}

TEST(Idx, Errors) {
  auto ds = tiny(3);
  const auto im = temp_path("e-images"), lb = temp_path("e-labels");
  write_idx(im, lb, ds);
  auto raw = detail::read_maybe_gz(im);
  auto lab = detail::read_maybe_gz(lb);

  detail::write_maybe_gz(temp_path("bad-magic"), std::string("\0\0\x08\x04", 4) + raw.substr(4));
  auto msg = load_error(temp_path("bad-magic"), lb);
  EXPECT_NE(msg.find("magic"), std::string::npos) << msg;
  EXPECT_NE(msg.find("offset 0"), std::string::npos) << msg;

  detail::write_maybe_gz(temp_path("short"), raw.substr(0, raw.size() - 10));
  msg = load_error(temp_path("short"), lb);
  EXPECT_NE(msg.find("truncated"), std::string::npos) << msg;
  EXPECT_NE(msg.find("offset"), std::string::npos) << msg;

  auto two = lab;
  two[7] = 2;
  two.pop_back();
  detail::write_maybe_gz(temp_path("two-labels"), two);
  msg = load_error(im, temp_path("two-labels"));
  EXPECT_NE(msg.find("count"), std::string::npos) << msg;

  detail::write_maybe_gz(temp_path("tiny-header"), raw.substr(0, 6));
  EXPECT_NE(load_error(temp_path("tiny-header"), lb).find("truncated"), std::string::npos);
  EXPECT_THROW(read_idx(temp_path("missing"), lb), LoadError);
}

TEST(BatchIter, CountsAndDropLast) {
  auto b = batch_iter(2000, 256, 1, 1);
  EXPECT_EQ(b.size(), 7u);
  std::set<std::size_t> seen;
  for (const auto& batch : b) {
    EXPECT_EQ(batch.size(), 256u);
    seen.insert(batch.begin(), batch.end());
  }
  EXPECT_EQ(seen.size(), 7u * 256u);
  EXPECT_TRUE(batch_iter(10, 20, 1, 1).empty());
  EXPECT_THROW(batch_iter(10, 0, 1, 1), ConfigError);
}

TEST(BatchIter, DeterministicPerSeedAndEpoch) {
  EXPECT_EQ(batch_iter(500, 50, 9, 3), batch_iter(500, 50, 9, 3));
  std::set<std::vector<std::vector<std::size_t>>> epochs;
  for (std::uint64_t e = 1; e <= 5; ++e) epochs.insert(batch_iter(500, 50, 9, e));
  EXPECT_EQ(epochs.size(), 5u);
  EXPECT_NE(batch_iter(500, 50, 9, 1), batch_iter(500, 50, 10, 1));
}

TEST(SyntheticBlobs, OnePerClassWithDistinctCenters) {
  auto ds = synthetic_blobs(10, 10, 3);
  EXPECT_EQ(ds.count, 10u);
  std::set<std::pair<std::size_t, std::size_t>> peaks;
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(ds.labels[i], static_cast<int>(i));
    std::size_t best = 0;
    for (std::size_t p = 1; p < 784; ++p)
      if (ds.images[i * 784 + p] > ds.images[i * 784 + best]) best = p;
    const auto [cy, cx] = blob_center(i, 10);
    EXPECT_LE(std::abs(double(best / 28) - cy), 2.0);
    EXPECT_LE(std::abs(double(best % 28) - cx), 2.0);
    peaks.insert({best / 28, best % 28});
  }
  EXPECT_EQ(peaks.size(), 10u);
}

TEST(SyntheticBlobs, RangeAndDeterminism) {
  auto a = synthetic_blobs(50, 10, 4), b = synthetic_blobs(50, 10, 4);
  EXPECT_EQ(a.images, b.images);
  for (float v : a.images) {
    EXPECT_GE(v, -1.0f);
    EXPECT_LE(v, 1.0f);
  }
  EXPECT_NE(synthetic_blobs(50, 10, 5).images, a.images);
  EXPECT_THROW(synthetic_blobs(5, 10, 1), ConfigError);
}

TEST(DatasetBatch, GathersImagesAndLabels) {
  auto ds = tiny(4);
  auto t = ds.batch<float>({2, 0});
  EXPECT_EQ(t.shape(), (Shape{2, 28, 28, 1}));
  EXPECT_EQ(t[0], ds.images[2 * 784]);
  EXPECT_EQ(ds.batch_labels({2, 0}), (std::vector<int>{2, 0}));
  auto s = slice(ds, 1, 2);
  EXPECT_EQ(s.count, 2u);
  EXPECT_EQ(s.labels, (std::vector<int>{1, 2}));
}

TEST(Pnm, GridRoundTrip) {
  std::vector<float> v(2 * 4 * 3 * 1);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = (i % 2) ? 1.0f : -1.0f;
  auto grid = image_grid(Tensor<float>({2, 4, 3, 1}, v), 1, 2);
  EXPECT_EQ(grid.height, 6u);
  EXPECT_EQ(grid.width, 9u);
  EXPECT_EQ(grid.at(0, 0)[0], 0);
  EXPECT_EQ(grid.at(1, 1)[0], 0);
  EXPECT_EQ(grid.at(1, 2)[0], 255);
  const auto path = temp_path("grid.pgm");
  write_pnm(path, grid);
  auto back = read_pnm(path);
  EXPECT_EQ(back.pixels, grid.pixels);
  EXPECT_EQ(back.channels, 1u);
}
