#include "ldn/dataset_forge.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>
#include "ldn/charset.h"
#include "ldn/error.h"

namespace ldn::forge {

using nlohmann::json;

double ink_coverage(const Image& gray, double threshold) {
  if (gray.empty()) return 0;
  std::size_t ink = 0;
  for (int y = 0; y < gray.height(); ++y)
    for (int x = 0; x < gray.width(); ++x)
      if (gray.at(y, x) > threshold) ++ink;
  return static_cast<double>(ink) / (gray.height() * gray.width());
}

void ColorGradientSpec::validate() const {
  auto in01 = [](double v) { return v >= 0 && v <= 1; };
  for (int c = 0; c < 3; ++c) {
    if (!in01(color_top[c]) || !in01(color_bottom[c])) {
      throw DomainError("gradient color component outside [0,1]");
    }
  }
  if (!in01(highlight_strength)) {
    throw DomainError("highlight_strength outside [0,1]");
  }
}

GlyphImage rasterize_glyph(const FontDescriptor& font, char ch, int size,
                           const ForgeOptions& opt) {
  char_index(ch);
  if (size < 8) throw DomainError("glyph size must be at least 8");
  const std::string id = font.id();
  auto face = open_font(font);
  const int ss = std::max(1, opt.supersample);
  const GlyphRaster r = face->render(ch, double(size) * ss, font.variant, id);
  const Rect box = ink_bbox(r.coverage, 0.0);
  if (box.empty()) throw MissingGlyphError(id, ch);

  GlyphImage out{clamp01(fit_to_cell(r.coverage, box, size, opt.margin, ss)),
                 ch, id};
  return out;
}

Image gradient_ramp(const ColorGradientSpec& spec, const Rect& box, int size_h,
                    int size_w, const ForgeOptions& opt) {
  Image ramp(size_h, size_w, 3);
  if (box.empty()) return ramp;
  for (int y = 0; y < size_h; ++y) {
    const double tv = (y + 0.5 - box.y) / box.h;
    double lift = 0;
    if (tv >= 0 && tv < opt.highlight_extent) {
      lift = spec.highlight_strength * (1.0 - tv / opt.highlight_extent);
    }
    for (int x = 0; x < size_w; ++x) {
      const double th = (x + 0.5 - box.x) / box.w;
      const double t = std::clamp(
          spec.axis == GradientAxis::kVertical ? tv : th, 0.0, 1.0);
      for (int c = 0; c < 3; ++c) {
        const double base =
            spec.color_top[c] + t * (spec.color_bottom[c] - spec.color_top[c]);
        ramp.at(y, x, c) = std::min(1.0, base + lift);
      }
    }
  }
  return ramp;
}

GlyphImage apply_color_gradient(const GlyphImage& glyph,
                                const ColorGradientSpec& spec,
                                const ForgeOptions& opt) {
  if (glyph.pixels.channels() != 1) {
    throw DimensionError("apply_color_gradient expects a grayscale glyph");
  }
  spec.validate();
  const Image& g = glyph.pixels;
  const Rect box = ink_bbox(g, opt.threshold);
  const Image ramp = gradient_ramp(spec, box, g.height(), g.width(), opt);
  GlyphImage out{Image(g.height(), g.width(), 3), glyph.ch, glyph.font_id};
  for (int y = 0; y < g.height(); ++y)
    for (int x = 0; x < g.width(); ++x) {
      const double v = g.at(y, x);
      if (v <= opt.threshold) continue;
      for (int c = 0; c < 3; ++c) out.pixels.at(y, x, c) = v * ramp.at(y, x, c);
    }
  return out;
}

ColorGradientSpec draw_gradient_spec(std::uint64_t seed) {
  Rng rng(seed);
  ColorGradientSpec spec;
  for (double& c : spec.color_top) c = 0.2 + 0.8 * rng.uniform();
  for (double& c : spec.color_bottom) c = 0.2 + 0.8 * rng.uniform();
  spec.axis = rng.uniform() < 0.5 ? GradientAxis::kVertical
                                  : GradientAxis::kHorizontal;
  spec.highlight_strength = 0.5 * rng.uniform();
  return spec;
}

std::uint64_t font_seed(std::uint64_t seed, const std::string& font_id) {
  return derive_seed(seed, font_id);
}

std::vector<std::string> DatasetManifest::font_ids() const {
  std::vector<std::string> ids;
  for (const auto& r : records) {
    if (ids.empty() || ids.back() != r.font_id) ids.push_back(r.font_id);
  }
  return ids;
}

namespace {

std::string glyph_file(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02d.png", index);
  return buf;
}

json spec_to_json(const ColorGradientSpec& s) {
  return {{"color_top", s.color_top},
          {"color_bottom", s.color_bottom},
          {"axis", s.axis == GradientAxis::kVertical ? "vertical" : "horizontal"},
          {"highlight_strength", s.highlight_strength}};
}

struct FontJob {
  std::string font_id;
  std::uint64_t seed = 0;
  std::vector<GlyphImage> glyphs;
  std::vector<GlyphImage> shapes;
  ColorGradientSpec style;
  std::string error;
};

void render_font(const FontDescriptor& font, bool color,
                 std::uint64_t master_seed, const ForgeOptions& opt,
                 const std::optional<ColorGradientSpec>& fixed_style,
                 FontJob& job) {
  job.font_id = font.id();
  job.seed = font_seed(master_seed, job.font_id);
  try {
    if (color) job.style = fixed_style ? *fixed_style : draw_gradient_spec(job.seed);
    for (int i = 0; i < kNumSymbols; ++i) {
      GlyphImage g = rasterize_glyph(font, char_at(i), opt.glyph_size, opt);
      const double cov = ink_coverage(g.pixels, opt.threshold);
      if (!(cov > 0 && cov < 0.95)) {
        throw Error("glyph '" + std::string(1, char_at(i)) +
                    "' has ink coverage " + std::to_string(cov));
      }
      if (color) {
        GlyphImage colored = apply_color_gradient(g, job.style, opt);
        job.shapes.push_back(std::move(g));
        g = std::move(colored);
      }
      job.glyphs.push_back(std::move(g));
    }
  } catch (const Error& e) {
    job.glyphs.clear();
    job.shapes.clear();
    job.error = e.what();
  }
}

}  // namespace

BuildResult build_font_dataset(const std::vector<FontDescriptor>& fonts,
                               const std::filesystem::path& out_dir,
                               bool color, std::uint64_t seed,
                               const ForgeOptions& opt, int workers,
                               const std::optional<ColorGradientSpec>& fixed_style) {
  if (fixed_style) fixed_style->validate();
  if (fonts.empty()) throw Error("no fonts given");
  {
    std::set<std::string> ids;
    for (const auto& f : fonts) {
      if (!ids.insert(f.id()).second) {
        throw Error("duplicate font id '" + f.id() + "'");
      }
    }
  }
  std::vector<FontJob> jobs(fonts.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < fonts.size(); i = next++) {
      render_font(fonts[i], color, seed, opt, fixed_style, jobs[i]);
    }
  };
  {
    std::vector<std::jthread> pool;
    const int n = std::clamp(workers, 1, static_cast<int>(fonts.size()));
    for (int t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
  }

  BuildResult result;
  std::vector<const FontJob*> accepted;
  for (const auto& job : jobs) {
    if (job.error.empty()) {
      accepted.push_back(&job);
    } else {
      result.rejects.push_back({job.font_id, job.error});
    }
  }
  if (accepted.empty()) throw Error("dataset is empty: every font was rejected");

  const int n = static_cast<int>(accepted.size());
  const int n_train =
      std::clamp(static_cast<int>(std::lround(n * opt.train_fraction)), 1, n);
  const int n_val = std::clamp(
      static_cast<int>(std::lround(n * opt.val_fraction)), 0, n - n_train);

  std::filesystem::create_directories(out_dir / "glyphs");
  result.manifest.glyph_size = opt.glyph_size;
  result.manifest.color = color;
  for (int f = 0; f < n; ++f) {
    const FontJob& job = *accepted[f];
    const std::string split =
        f < n_train ? "train" : (f < n_train + n_val ? "val" : "test");
    const auto font_dir = std::filesystem::path("glyphs") / job.font_id;
    std::filesystem::create_directories(out_dir / font_dir);
    for (int i = 0; i < kNumSymbols; ++i) {
      const auto rel = font_dir / glyph_file(i);
      write_png(job.glyphs[i].pixels, out_dir / rel);
      if (color) {
        const auto shape_dir = out_dir / "shapes" / job.font_id;
        std::filesystem::create_directories(shape_dir);
        write_png(job.shapes[i].pixels, shape_dir / glyph_file(i));
      }
      result.manifest.records.push_back(
          {job.font_id, char_at(i), rel.generic_string(), split, job.seed});
    }
    if (color) result.styles.push_back(job.style);
  }

  std::ofstream manifest(out_dir / "manifest.jsonl", std::ios::binary);
  for (const auto& r : result.manifest.records) {
    json line = {{"font_id", r.font_id},
                 {"char", std::string(1, r.ch)},
                 {"path", r.path},
                 {"split", r.split},
                 {"seed", r.seed}};
    manifest << line.dump() << '\n';
  }
  if (!manifest) throw IoError("cannot write manifest in " + out_dir.string());

  json header = {{"schema_version", kManifestSchemaVersion},
                 {"char_set", std::string(kCharSet)},
                 {"glyph_size", opt.glyph_size},
                 {"color", color}};
  std::ofstream(out_dir / "header.json", std::ios::binary)
      << header.dump(2) << '\n';

  if (color) {
    std::ofstream styles(out_dir / "styles.jsonl", std::ios::binary);
    for (int f = 0; f < n; ++f) {
      json line = spec_to_json(result.styles[f]);
      line["font_id"] = accepted[f]->font_id;
      styles << line.dump() << '\n';
    }
  }
  return result;
}

DatasetManifest read_manifest(const std::filesystem::path& dir) {
  std::ifstream hin(dir / "header.json");
  if (!hin) throw IoError("missing header.json in " + dir.string());
  json header = json::parse(hin, nullptr, false);
  if (header.is_discarded()) throw IoError("malformed header.json");
  if (header.value("schema_version", -1) != kManifestSchemaVersion) {
    throw SchemaError("unsupported manifest schema version");
  }
  if (header.value("char_set", std::string()) != kCharSet) {
    throw SchemaError("manifest character set differs");
  }
  DatasetManifest m;
  m.glyph_size = header.at("glyph_size").get<int>();
  m.color = header.value("color", false);
  std::ifstream in(dir / "manifest.jsonl");
  if (!in) throw IoError("missing manifest.jsonl in " + dir.string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw IoError("malformed manifest line");
    const auto ch = j.at("char").get<std::string>();
    if (ch.size() != 1) throw IoError("manifest char must be one symbol");
    m.records.push_back({j.at("font_id").get<std::string>(), ch[0],
                         j.at("path").get<std::string>(),
                         j.at("split").get<std::string>(),
                         j.at("seed").get<std::uint64_t>()});
  }
  return m;
}

std::vector<FontGlyphs> load_fonts(const std::filesystem::path& dir,
                                   const std::string& split) {
  const DatasetManifest m = read_manifest(dir);
  std::vector<FontGlyphs> fonts;
  for (const auto& r : m.records) {
    if (!split.empty() && r.split != split) continue;
    if (fonts.empty() || fonts.back().font_id != r.font_id) {
      fonts.push_back({r.font_id, r.split, std::vector<Image>(kNumSymbols), {}});
      if (m.color) fonts.back().shapes.resize(kNumSymbols);
    }
    Image img = read_png(dir / r.path);
    if (img.height() != m.glyph_size || img.width() != m.glyph_size) {
      throw DimensionError("glyph " + r.path + " has the wrong size");
    }
    const int slot = char_index(r.ch);
    if (m.color) {
      const auto shape_path = dir / "shapes" / r.font_id / glyph_file(slot);
      if (std::filesystem::exists(shape_path)) {
        fonts.back().shapes[slot] = read_png(shape_path);
      }
    }
    fonts.back().glyphs[slot] = std::move(img);
  }
  for (const auto& f : fonts) {
    for (const auto& g : f.glyphs) {
      if (g.empty()) throw IoError("font " + f.font_id + " is incomplete");
    }
  }
  return fonts;
}

namespace {

double luma(const std::array<double, 3>& c) {
  return 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2];
}

// Coverage at scene resolution; origin lands on an integer pixel.
GlyphRaster render_scene_glyph(const FontFace& face, const FontDescriptor& font,
                               char ch, double scale, int ss) {
  GlyphRaster hi = face.render(ch, scale * ss, font.variant, font.id());
  const int pad_l = ((hi.origin_x % ss) + ss) % ss == 0
                        ? 0
                        : ss - ((hi.origin_x % ss) + ss) % ss;
  const int pad_t = ((hi.origin_y % ss) + ss) % ss == 0
                        ? 0
                        : ss - ((hi.origin_y % ss) + ss) % ss;
  const int w = hi.coverage.width() + pad_l;
  const int h = hi.coverage.height() + pad_t;
  Image padded((h + ss - 1) / ss * ss, (w + ss - 1) / ss * ss, 1);
  paste(padded, hi.coverage, pad_l, pad_t);
  GlyphRaster lo;
  lo.coverage = downsample_area(padded, ss);
  lo.origin_x = (hi.origin_x + pad_l) / ss;
  lo.origin_y = (hi.origin_y + pad_t) / ss;
  return lo;
}

}  // namespace

SceneSample synth_scene(const Image& background, const std::string& text,
                        const FontDescriptor& font, Point origin, double scale,
                        double spacing, std::uint64_t seed,
                        const ForgeOptions& opt) {
  validate_text(text);
  if (background.channels() != 3) {
    throw DimensionError("scene background must be RGB");
  }
  if (scale <= 0) throw DomainError("scale must be positive");
  auto face = open_font(font);

  struct Placed {
    GlyphRaster raster;
    Rect ink;  // tight box in raster coordinates
  };
  std::vector<Placed> glyphs;
  int ascent = 0;  // max rows above the baseline over all characters
  for (char ch : text) {
    Placed p;
    p.raster = render_scene_glyph(*face, font, ch, scale, opt.supersample);
    p.ink = ink_bbox(p.raster.coverage, 0.0);
    if (p.ink.empty()) throw MissingGlyphError(font.id(), ch);
    ascent = std::max(ascent, p.raster.origin_y - p.ink.y);
    glyphs.push_back(std::move(p));
  }

  const int baseline = origin.y + ascent;
  const int gap = static_cast<int>(std::lround(spacing));
  SceneSample out;
  out.text = text;
  out.font_id = font.id();
  int cursor = origin.x;
  for (const Placed& p : glyphs) {
    const int top = baseline - (p.raster.origin_y - p.ink.y);
    out.char_boxes.push_back({cursor, top, p.ink.w, p.ink.h});
    cursor += p.ink.w + gap;
  }
  Rect extent;
  for (const Rect& r : out.char_boxes) extent = unite(extent, r);
  if (!extent.inside(background.bounds())) {
    const bool horizontal =
        extent.x < 0 || extent.right() > background.width();
    throw LayoutError(
        "rendered word does not fit the image",
        horizontal ? extent.right() : extent.bottom(),
        horizontal ? background.width() : background.height());
  }

  std::array<double, 3> bg_mean{0, 0, 0};
  const double npx = double(background.height()) * background.width();
  for (int y = 0; y < background.height(); ++y)
    for (int x = 0; x < background.width(); ++x)
      for (int c = 0; c < 3; ++c) bg_mean[c] += background.at(y, x, c) / npx;
  Rng rng(derive_seed(seed, "text-color"));
  std::array<double, 3> color{};
  bool found = false;
  for (int attempt = 0; attempt < 64 && !found; ++attempt) {
    for (double& c : color) c = rng.uniform();
    found = std::abs(luma(color) - luma(bg_mean)) >= 0.35;
  }
  if (!found) color = luma(bg_mean) > 0.5 ? std::array<double, 3>{0, 0, 0}
                                          : std::array<double, 3>{1, 1, 1};
  out.text_color = color;

  out.image = background;
  for (std::size_t i = 0; i < glyphs.size(); ++i) {
    const Placed& p = glyphs[i];
    const Rect& box = out.char_boxes[i];
    for (int y = 0; y < p.ink.h; ++y)
      for (int x = 0; x < p.ink.w; ++x) {
        const double a = p.raster.coverage.at(p.ink.y + y, p.ink.x + x);
        if (a <= 0) continue;
        for (int c = 0; c < 3; ++c) {
          double& px = out.image.at(box.y + y, box.x + x, c);
          px = (1 - a) * px + a * color[c];
        }
      }
  }

  const int pad = std::max(2, static_cast<int>(std::lround(0.15 * scale)));
  const int x0 = std::max(0, extent.x - pad);
  const int y0 = std::max(0, extent.y - pad);
  const int x1 = std::min(background.width(), extent.right() + pad);
  const int y1 = std::min(background.height(), extent.bottom() + pad);
  out.word_box = {x0, y0, x1 - x0, y1 - y0};
  return out;
}

Image flat_background(int height, int width, std::array<double, 3> color) {
  Image img(height, width, 3);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = color[c];
  return img;
}

Image make_background(BackgroundKind kind, Rng& rng, int height, int width) {
  std::array<double, 3> a{}, b{};
  for (double& v : a) v = rng.uniform(0.1, 0.9);
  for (double& v : b) v = rng.uniform(0.1, 0.9);
  Image img(height, width, 3);
  switch (kind) {
    case BackgroundKind::kFlat:
      return flat_background(height, width, a);
    case BackgroundKind::kLinear: {
      const double angle = rng.uniform(0, 2 * std::numbers::pi);
      const double dx = std::cos(angle), dy = std::sin(angle);
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
          const double u = (x / double(width) - 0.5) * dx +
                           (y / double(height) - 0.5) * dy;
          const double t = std::clamp(u + 0.5, 0.0, 1.0);
          for (int c = 0; c < 3; ++c)
            img.at(y, x, c) = (1 - t) * a[c] + t * b[c];
        }
      return img;
    }
    case BackgroundKind::kRadial: {
      const double cx = rng.uniform(0.2, 0.8), cy = rng.uniform(0.2, 0.8);
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
          const double d = std::hypot(x / double(width) - cx,
                                      y / double(height) - cy);
          const double t = std::clamp(d / 0.8, 0.0, 1.0);
          for (int c = 0; c < 3; ++c)
            img.at(y, x, c) = (1 - t) * a[c] + t * b[c];
        }
      return img;
    }
    case BackgroundKind::kWaves: {
      const double fx = rng.uniform(0.5, 2.0), fy = rng.uniform(0.5, 2.0);
      const double phase = rng.uniform(0, 2 * std::numbers::pi);
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
          const double t =
              0.5 + 0.5 * std::sin(2 * std::numbers::pi *
                                       (fx * x / width + fy * y / height) +
                                   phase);
          for (int c = 0; c < 3; ++c)
            img.at(y, x, c) = (1 - t) * a[c] + t * b[c];
        }
      return img;
    }
  }
  return img;
}

}  // namespace ldn::forge
