#include "ldn/font.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <mutex>
#include <sstream>

#define STB_TRUETYPE_IMPLEMENTATION
#define STBTT_STATIC
#include "stb_truetype.h"

#include "ldn/error.h"

namespace ldn {

namespace {

constexpr double kDilationPerWeight = 0.02;  // fraction of em height

std::string stem_of(const std::filesystem::path& p) {
  return p.stem().string();
}

}  // namespace

std::string FontDescriptor::id() const {
  std::string id = stem_of(path);
  if (!variant.is_plain()) {
    id += "~b" + std::to_string(variant.weight) + "~s" +
          std::to_string(variant.slant_pct) + "~w" +
          std::to_string(variant.width_pct);
  }
  return id;
}

FontDescriptor parse_font_id(const std::string& id,
                             const std::filesystem::path& dir) {
  FontDescriptor out;
  const auto tilde = id.find('~');
  const std::string stem = id.substr(0, tilde);
  if (stem.empty()) throw IoError("empty font id");
  for (const char* ext : {".ttf", ".otf", ".TTF", ".OTF"}) {
    auto candidate = dir / (stem + ext);
    if (std::filesystem::exists(candidate)) {
      out.path = candidate;
      break;
    }
  }
  if (out.path.empty()) {
    throw IoError("font '" + stem + "' not found in " + dir.string());
  }
  if (tilde != std::string::npos) {
    int b = 0, s = 0, w = 100;
    if (std::sscanf(id.c_str() + tilde, "~b%d~s%d~w%d", &b, &s, &w) != 3) {
      throw IoError("malformed font id '" + id + "'");
    }
    out.variant = {b, s, w};
  }
  return out;
}

std::vector<std::filesystem::path> list_font_files(
    const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw IoError("font directory '" + dir.string() + "' does not exist");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".ttf" || ext == ".otf") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) {
              return a.filename().string() < b.filename().string();
            });
  return files;
}

const std::vector<FontVariant>& variant_grid() {
  static const std::vector<FontVariant> grid = {
      {0, 0, 100},  {1, 0, 100},  {0, 15, 100}, {0, 0, 85},
      {2, 0, 100},  {1, 15, 100}, {0, 15, 85},  {1, 0, 85},
      {2, 15, 100}, {2, 0, 85},   {1, 15, 85},  {2, 15, 85},
  };
  return grid;
}

std::vector<FontDescriptor> enumerate_fonts(
    const std::vector<std::filesystem::path>& files, int n) {
  std::vector<FontDescriptor> out;
  if (files.empty()) return out;
  for (const FontVariant& v : variant_grid()) {
    for (const auto& f : files) {
      if (static_cast<int>(out.size()) == n) return out;
      out.push_back({f, v});
    }
  }
  return out;
}

struct FontFace::Impl {
  std::vector<unsigned char> bytes;
  stbtt_fontinfo info{};
};

FontFace::FontFace() : impl_(std::make_unique<Impl>()) {}
FontFace::~FontFace() = default;

std::shared_ptr<const FontFace> FontFace::load(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open font file '" + path.string() + "'");
  std::shared_ptr<FontFace> face(new FontFace());
  face->impl_->bytes.assign(std::istreambuf_iterator<char>(in),
                            std::istreambuf_iterator<char>());
  auto& bytes = face->impl_->bytes;
  const int offset =
      bytes.size() < 12 ? -1 : stbtt_GetFontOffsetForIndex(bytes.data(), 0);
  if (offset < 0 ||
      !stbtt_InitFont(&face->impl_->info, bytes.data(), offset)) {
    throw IoError("'" + path.string() + "' is not a readable TrueType font");
  }
  return face;
}

bool FontFace::has_glyph(char ch) const {
  const int glyph = stbtt_FindGlyphIndex(&impl_->info, ch);
  return glyph != 0 && !stbtt_IsGlyphEmpty(&impl_->info, glyph);
}

namespace {

// Separable square max filter of radius r.
Image dilate(const Image& src, int r) {
  if (r <= 0) return src;
  Image tmp(src.height(), src.width(), 1);
  for (int y = 0; y < src.height(); ++y)
    for (int x = 0; x < src.width(); ++x) {
      double m = 0;
      for (int d = std::max(0, x - r); d <= std::min(src.width() - 1, x + r);
           ++d)
        m = std::max(m, src.at(y, d));
      tmp.at(y, x) = m;
    }
  Image out(src.height(), src.width(), 1);
  for (int y = 0; y < src.height(); ++y)
    for (int x = 0; x < src.width(); ++x) {
      double m = 0;
      for (int d = std::max(0, y - r); d <= std::min(src.height() - 1, y + r);
           ++d)
        m = std::max(m, tmp.at(d, x));
      out.at(y, x) = m;
    }
  return out;
}

double sample_bilinear_zero(const Image& img, double x, double y) {
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0, fy = y - y0;
  auto px = [&](int yy, int xx) {
    if (xx < 0 || yy < 0 || xx >= img.width() || yy >= img.height()) return 0.0;
    return img.at(yy, xx);
  };
  return (px(y0, x0) * (1 - fx) + px(y0, x0 + 1) * fx) * (1 - fy) +
         (px(y0 + 1, x0) * (1 - fx) + px(y0 + 1, x0 + 1) * fx) * fy;
}

// Applies u' = ws*u - slant*v about the pen origin (v grows downwards).
GlyphRaster shear_scale(const GlyphRaster& in, double ws, double slant) {
  if (ws == 1.0 && slant == 0.0) return in;
  const int h = in.coverage.height();
  const int w = in.coverage.width();
  double umin = 1e300, umax = -1e300;
  for (int cy : {0, h}) {
    for (int cx : {0, w}) {
      const double u = cx - in.origin_x, v = cy - in.origin_y;
      const double up = ws * u - slant * v;
      umin = std::min(umin, up);
      umax = std::max(umax, up);
    }
  }
  const int left = static_cast<int>(std::floor(umin)) - 1;
  const int right = static_cast<int>(std::ceil(umax)) + 1;
  GlyphRaster out;
  out.coverage = Image(h, right - left, 1);
  out.origin_x = -left;
  out.origin_y = in.origin_y;
  for (int y = 0; y < h; ++y) {
    const double v = y + 0.5 - in.origin_y;
    for (int x = 0; x < out.coverage.width(); ++x) {
      const double up = x + 0.5 - out.origin_x;
      const double u = (up + slant * v) / ws;
      out.coverage.at(y, x) = std::clamp(
          sample_bilinear_zero(in.coverage, u + in.origin_x - 0.5, y), 0.0,
          1.0);
    }
  }
  return out;
}

}  // namespace

GlyphRaster FontFace::render(char ch, double pixel_height,
                             const FontVariant& variant,
                             const std::string& font_id) const {
  const stbtt_fontinfo* info = &impl_->info;
  const int glyph = stbtt_FindGlyphIndex(info, ch);
  if (glyph == 0 || stbtt_IsGlyphEmpty(info, glyph)) {
    throw MissingGlyphError(font_id, ch);
  }
  const float scale = stbtt_ScaleForPixelHeight(info, float(pixel_height));
  int x0, y0, x1, y1;
  stbtt_GetGlyphBitmapBox(info, glyph, scale, scale, &x0, &y0, &x1, &y1);
  const int w = x1 - x0, h = y1 - y0;
  if (w <= 0 || h <= 0) throw MissingGlyphError(font_id, ch);

  // One pixel of padding keeps edge coverage away from the raster border.
  const int pad = 1;
  std::vector<unsigned char> bitmap(static_cast<std::size_t>(w) * h);
  stbtt_MakeGlyphBitmap(info, bitmap.data(), w, h, w, scale, scale, glyph);
  GlyphRaster r;
  r.coverage = Image(h + 2 * pad, w + 2 * pad, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      r.coverage.at(y + pad, x + pad) = bitmap[y * w + x] / 255.0;
  r.origin_x = pad - x0;
  r.origin_y = pad - y0;

  r = shear_scale(r, variant.width_pct / 100.0, variant.slant_pct / 100.0);
  const int radius = static_cast<int>(
      std::lround(variant.weight * kDilationPerWeight * pixel_height / 2));
  if (radius > 0) {
    GlyphRaster padded;
    padded.coverage = Image(r.coverage.height() + 2 * radius,
                            r.coverage.width() + 2 * radius, 1);
    paste(padded.coverage, r.coverage, radius, radius);
    padded.coverage = dilate(padded.coverage, radius);
    padded.origin_x = r.origin_x + radius;
    padded.origin_y = r.origin_y + radius;
    r = std::move(padded);
  }
  return r;
}

std::shared_ptr<const FontFace> open_font(const FontDescriptor& font) {
  static std::mutex mu;
  static std::map<std::filesystem::path, std::shared_ptr<const FontFace>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(font.path);
  if (it != cache.end()) return it->second;
  auto face = FontFace::load(font.path);
  cache.emplace(font.path, face);
  return face;
}

}  // namespace ldn
