#include <gtest/gtest.h>

#include <filesystem>

#include "ldn/error.h"
#include "ldn/image.h"
#include "ldn/random.h"

namespace ldn {
namespace {

Image random_image(int h, int w, int c, std::uint64_t seed) {
  Rng rng(seed);
  Image img(h, w, c);
  for (double& v : img.data()) v = rng.uniform();
  return img;
}

TEST(Image, CropThenPasteRestores) {
  const Image img = random_image(12, 9, 3, 1);
  const Rect r{2, 3, 4, 5};
  const Image part = crop(img, r);
  EXPECT_EQ(part.height(), 5);
  EXPECT_EQ(part.width(), 4);
  EXPECT_EQ(part.at(0, 0, 2), img.at(3, 2, 2));

  Image copy(12, 9, 3, 0.0);
  paste(copy, part, r.x, r.y);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 9; ++x)
      EXPECT_EQ(copy.at(y, x, 1), r.contains(x, y) ? img.at(y, x, 1) : 0.0);
}

TEST(Image, CropOutsideThrows) {
  const Image img(4, 4, 1);
  EXPECT_THROW(crop(img, {2, 2, 3, 1}), DimensionError);
}

TEST(Image, ResampleIdentity) {
  const Image img = random_image(7, 10, 3, 2);
  EXPECT_EQ(resize_bilinear(img, 7, 10), img);
}

TEST(Image, ResampleKeepsConstantsExact) {
  const Image img(5, 5, 1, 0.3);
  const Image out = resample(img, {0.7, 1.2, 3.1, 2.9}, 11, 6);
  for (double v : out.data()) EXPECT_EQ(v, 0.3);
}

TEST(Image, ResampleMidpointIsAverage) {
  // Upsampling 2 pixels to 4: interior samples sit a quarter of the way.
  Image img(1, 2, 1);
  img.at(0, 0) = 0.0;
  img.at(0, 1) = 1.0;
  const Image out = resize_bilinear(img, 1, 4);
  EXPECT_DOUBLE_EQ(out.at(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(out.at(0, 1), 0.25);
  EXPECT_DOUBLE_EQ(out.at(0, 2), 0.75);
  EXPECT_DOUBLE_EQ(out.at(0, 3), 1.0);
}

TEST(Image, DownsampleAreaAverages) {
  Image img(2, 4, 1);
  const double v[] = {0, 1, 2, 3, 4, 5, 6, 7};
  for (int i = 0; i < 8; ++i) img.data()[i] = v[i];
  const Image out = downsample_area(img, 2);
  ASSERT_EQ(out.width(), 2);
  EXPECT_DOUBLE_EQ(out.at(0, 0), 2.5);
  EXPECT_DOUBLE_EQ(out.at(0, 1), 4.5);
  EXPECT_THROW(downsample_area(img, 3), DimensionError);
}

TEST(Image, GrayscaleUsesRec601) {
  Image img(1, 1, 3);
  img.at(0, 0, 0) = 1.0;
  img.at(0, 0, 1) = 0.5;
  img.at(0, 0, 2) = 0.25;
  EXPECT_NEAR(to_grayscale(img).at(0, 0), 0.299 + 0.587 * 0.5 + 0.114 * 0.25,
              1e-15);
}

TEST(Image, InkBbox) {
  Image img(6, 6, 1);
  img.at(1, 2) = 0.9;
  img.at(4, 3) = 0.6;
  img.at(5, 5) = 0.4;
  EXPECT_EQ(ink_bbox(img, 0.5), (Rect{2, 1, 2, 4}));
  EXPECT_EQ(ink_bbox(img, 0.0), (Rect{2, 1, 4, 5}));
  EXPECT_TRUE(ink_bbox(img, 0.95).empty());
}

TEST(Image, FitToCellCentersSquareInk) {
  Image img(20, 20, 1);
  for (int y = 5; y < 15; ++y)
    for (int x = 5; x < 15; ++x) img.at(y, x) = 1.0;
  const Image cell = fit_to_cell(img, {5, 5, 10, 10}, 10, 0.1, 4);
  // Ink covers [1, 9) in both axes.
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) {
      const bool inside = x >= 1 && x < 9 && y >= 1 && y < 9;
      EXPECT_NEAR(cell.at(y, x), inside ? 1.0 : 0.0, 0.5) << y << "," << x;
    }
  EXPECT_NEAR(cell.at(5, 5), 1.0, 1e-12);
  EXPECT_LT(cell.at(0, 0), 0.02);
}

TEST(Image, PngRoundTripQuantizes) {
  const auto path = std::filesystem::temp_directory_path() / "ldn_image_test.png";
  const Image img = random_image(5, 6, 3, 4);
  write_png(img, path);
  const Image back = read_png(path);
  ASSERT_TRUE(back.same_shape(img));
  for (std::size_t i = 0; i < img.size(); ++i) {
    EXPECT_NEAR(back.data()[i], img.data()[i], 0.5 / 255 + 1e-12);
  }
  write_png(back, path);
  EXPECT_EQ(read_png(path), back);
  std::filesystem::remove(path);
}

TEST(Image, MissingPngThrowsIoError) {
  EXPECT_THROW(read_png("/nonexistent/ldn.png"), IoError);
}

}  // namespace
}  // namespace ldn
