#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace ldn {

// Axis-aligned integer rectangle, half-open: [x, x+w) x [y, y+h).
struct Rect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  int right() const { return x + w; }
  int bottom() const { return y + h; }
  bool empty() const { return w <= 0 || h <= 0; }
  bool contains(int px, int py) const {
    return px >= x && px < right() && py >= y && py < bottom();
  }
  bool inside(const Rect& outer) const {
    return x >= outer.x && y >= outer.y && right() <= outer.right() &&
           bottom() <= outer.bottom();
  }
  bool operator==(const Rect&) const = default;
};

Rect unite(const Rect& a, const Rect& b);

// Real-valued rectangle used for resampling and layout.
struct RectF {
  double x = 0;
  double y = 0;
  double w = 0;
  double h = 0;

  double right() const { return x + w; }
  double bottom() const { return y + h; }
};

// Row-major H x W x C raster of doubles; pixel values nominally in [0,1].
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels, double fill = 0.0);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  Rect bounds() const { return {0, 0, width_, height_}; }

  double& at(int y, int x, int c = 0) {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  double at(int y, int x, int c = 0) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool same_shape(const Image& o) const {
    return height_ == o.height_ && width_ == o.width_ &&
           channels_ == o.channels_;
  }
  bool operator==(const Image&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

// Rec. 601 luma for RGB, identity for one channel.
Image to_grayscale(const Image& img);
Image gray_to_rgb(const Image& gray);

Image crop(const Image& img, const Rect& r);
void paste(Image& dst, const Image& src, int x, int y);

// Bilinear resampling of the real-valued source rectangle `src` to an
// out_h x out_w raster (pixel centers, edge-clamped).
Image resample(const Image& img, const RectF& src, int out_h, int out_w);
Image resize_bilinear(const Image& img, int out_h, int out_w);
// Box-filter reduction by an integer factor.
Image downsample_area(const Image& img, int factor);

// Maps the tight box `box` of `img` into a size x size cell, aspect
// preserved and centered with `margin` (fraction of the cell) left empty
// per side. Each output pixel averages supersample^2 bilinear samples;
// samples outside `img` read as zero.
Image fit_to_cell(const Image& img, const Rect& box, int size, double margin,
                  int supersample);

// Tight bounding box of pixels with channel-0 value strictly above
// `threshold`; empty Rect when none.
Rect ink_bbox(const Image& img, double threshold);

Image clamp01(Image img);

// 8-bit PNG, grayscale or RGB. Values are quantized with round-to-nearest.
Image read_png(const std::filesystem::path& path);
void write_png(const Image& img, const std::filesystem::path& path);

}  // namespace ldn
