#include "ldn/image.h"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "ldn/error.h"

namespace ldn {

Rect unite(const Rect& a, const Rect& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  const int x0 = std::min(a.x, b.x);
  const int y0 = std::min(a.y, b.y);
  const int x1 = std::max(a.right(), b.right());
  const int y1 = std::max(a.bottom(), b.bottom());
  return {x0, y0, x1 - x0, y1 - y0};
}

Image::Image(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 0 || width < 0 || channels <= 0) {
    throw DimensionError("invalid image shape " + std::to_string(height) +
                         "x" + std::to_string(width) + "x" +
                         std::to_string(channels));
  }
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

Image to_grayscale(const Image& img) {
  if (img.channels() == 1) return img;
  if (img.channels() != 3) {
    throw DimensionError("to_grayscale expects 1 or 3 channels");
  }
  Image out(img.height(), img.width(), 1);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      out.at(y, x) = 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) +
                     0.114 * img.at(y, x, 2);
    }
  }
  return out;
}

Image gray_to_rgb(const Image& gray) {
  if (gray.channels() != 1) throw DimensionError("gray_to_rgb expects 1 channel");
  Image out(gray.height(), gray.width(), 3);
  for (int y = 0; y < gray.height(); ++y)
    for (int x = 0; x < gray.width(); ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = gray.at(y, x);
  return out;
}

Image crop(const Image& img, const Rect& r) {
  if (r.empty() || !r.inside(img.bounds())) {
    throw DimensionError("crop rectangle outside image");
  }
  Image out(r.h, r.w, img.channels());
  for (int y = 0; y < r.h; ++y)
    for (int x = 0; x < r.w; ++x)
      for (int c = 0; c < img.channels(); ++c)
        out.at(y, x, c) = img.at(r.y + y, r.x + x, c);
  return out;
}

void paste(Image& dst, const Image& src, int x, int y) {
  if (dst.channels() != src.channels()) {
    throw DimensionError("paste channel mismatch");
  }
  if (!Rect{x, y, src.width(), src.height()}.inside(dst.bounds())) {
    throw DimensionError("paste target outside image");
  }
  for (int yy = 0; yy < src.height(); ++yy)
    for (int xx = 0; xx < src.width(); ++xx)
      for (int c = 0; c < src.channels(); ++c)
        dst.at(y + yy, x + xx, c) = src.at(yy, xx, c);
}

namespace {

struct Tap {
  int i0;
  int i1;
  double w1;
};

// Source taps for each output coordinate along one axis.
std::vector<Tap> axis_taps(double origin, double extent, int out_n, int src_n) {
  std::vector<Tap> taps(out_n);
  const double step = extent / out_n;
  for (int i = 0; i < out_n; ++i) {
    double s = origin + (i + 0.5) * step - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src_n - 1));
    const int i0 = static_cast<int>(std::floor(s));
    const int i1 = std::min(i0 + 1, src_n - 1);
    taps[i] = {i0, i1, s - i0};
  }
  return taps;
}

}  // namespace

Image resample(const Image& img, const RectF& src, int out_h, int out_w) {
  if (img.empty() || out_h <= 0 || out_w <= 0) {
    throw DimensionError("resample of empty image or to empty size");
  }
  const auto ty = axis_taps(src.y, src.h, out_h, img.height());
  const auto tx = axis_taps(src.x, src.w, out_w, img.width());
  Image out(out_h, out_w, img.channels());
  for (int y = 0; y < out_h; ++y) {
    const Tap& a = ty[y];
    for (int x = 0; x < out_w; ++x) {
      const Tap& b = tx[x];
      for (int c = 0; c < img.channels(); ++c) {
        // a + w (b - a) keeps constant regions exact.
        const double p00 = img.at(a.i0, b.i0, c), p01 = img.at(a.i0, b.i1, c);
        const double p10 = img.at(a.i1, b.i0, c), p11 = img.at(a.i1, b.i1, c);
        const double top = p00 + b.w1 * (p01 - p00);
        const double bot = p10 + b.w1 * (p11 - p10);
        out.at(y, x, c) = top + a.w1 * (bot - top);
      }
    }
  }
  return out;
}

Image resize_bilinear(const Image& img, int out_h, int out_w) {
  return resample(img, {0, 0, double(img.width()), double(img.height())},
                  out_h, out_w);
}

Image downsample_area(const Image& img, int factor) {
  if (factor <= 0 || img.height() % factor || img.width() % factor) {
    throw DimensionError("downsample factor must divide the image size");
  }
  Image out(img.height() / factor, img.width() / factor, img.channels());
  const double norm = 1.0 / (factor * factor);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) {
        double s = 0;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx)
            s += img.at(y * factor + dy, x * factor + dx, c);
        out.at(y, x, c) = s * norm;
      }
  return out;
}

namespace {

double bilinear_zero(const Image& img, double x, double y, int c) {
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0, fy = y - y0;
  auto px = [&](int yy, int xx) {
    if (xx < 0 || yy < 0 || xx >= img.width() || yy >= img.height()) return 0.0;
    return img.at(yy, xx, c);
  };
  return (px(y0, x0) * (1 - fx) + px(y0, x0 + 1) * fx) * (1 - fy) +
         (px(y0 + 1, x0) * (1 - fx) + px(y0 + 1, x0 + 1) * fx) * fy;
}

}  // namespace

Image fit_to_cell(const Image& img, const Rect& box, int size, double margin,
                  int supersample) {
  if (box.empty()) throw DimensionError("fit_to_cell of an empty box");
  const int ss = std::max(1, supersample);
  const double inner = size * (1.0 - 2.0 * margin);
  const double s = inner / std::max(box.w, box.h);
  const double off_x = (size - box.w * s) / 2;
  const double off_y = (size - box.h * s) / 2;
  Image out(size, size, img.channels());
  const double inv = 1.0 / (ss * ss);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      for (int c = 0; c < img.channels(); ++c) {
        double acc = 0;
        for (int sy = 0; sy < ss; ++sy) {
          const double cy = y + (sy + 0.5) / ss;
          const double src_y = box.y + (cy - off_y) / s - 0.5;
          for (int sx = 0; sx < ss; ++sx) {
            const double cx = x + (sx + 0.5) / ss;
            const double src_x = box.x + (cx - off_x) / s - 0.5;
            acc += bilinear_zero(img, src_x, src_y, c);
          }
        }
        out.at(y, x, c) = acc * inv;
      }
    }
  }
  return out;
}

Rect ink_bbox(const Image& img, double threshold) {
  int x0 = img.width(), y0 = img.height(), x1 = -1, y1 = -1;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      if (img.at(y, x) > threshold) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
  if (x1 < 0) return {};
  return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

Image clamp01(Image img) {
  for (double& v : img.data()) v = std::clamp(v, 0.0, 1.0);
  return img;
}

Image read_png(const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw IoError("cannot read PNG '" + path.string() + "': " + png.message);
  }
  const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
    throw IoError("cannot decode PNG '" + path.string() + "': " + png.message);
  }
  const int channels = color ? 3 : 1;
  Image img(static_cast<int>(png.height), static_cast<int>(png.width),
            channels);
  auto data = img.data();
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = buf[i] / 255.0;
  return img;
}

void write_png(const Image& img, const std::filesystem::path& path) {
  if (img.channels() != 1 && img.channels() != 3) {
    throw DimensionError("PNG output needs 1 or 3 channels");
  }
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width());
  png.height = static_cast<png_uint_32>(img.height());
  png.format = img.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buf(img.size());
  auto data = img.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    buf[i] = static_cast<std::uint8_t>(
        std::lround(std::clamp(data[i], 0.0, 1.0) * 255.0));
  }
  if (!png_image_write_to_file(&png, path.c_str(), 0, buf.data(), 0,
                               nullptr)) {
    throw IoError("cannot write PNG '" + path.string() + "': " + png.message);
  }
}

}  // namespace ldn
