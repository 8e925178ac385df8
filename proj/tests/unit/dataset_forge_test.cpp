#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#define STBTT_STATIC
#define STB_TRUETYPE_IMPLEMENTATION
#include "stb_truetype.h"

#include "ldn/charset.h"
#include "ldn/dataset_forge.h"
#include "ldn/error.h"
#include "support/oracles.h"

namespace ldn::forge {
namespace {

namespace fs = std::filesystem;

const fs::path kFontDir = LDN_TEST_FONT_DIR;

FontDescriptor sans() { return {kFontDir / "DejaVuSansMono.ttf", {}}; }
FontDescriptor serif() { return {kFontDir / "DejaVuSerif.ttf", {}}; }

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("ldn_forge_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Ink fraction of a 64 cell computed straight from the font outlines: the
// area of a large rendering scaled into the inner cell.
double reference_coverage(const fs::path& font, char ch, int size, double margin) {
  const std::string bytes = slurp(font);
  stbtt_fontinfo info;
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
  EXPECT_TRUE(stbtt_InitFont(&info, data, stbtt_GetFontOffsetForIndex(data, 0)));
  int w = 0, h = 0, xo = 0, yo = 0;
  const float scale = stbtt_ScaleForPixelHeight(&info, 512);
  unsigned char* bmp =
      stbtt_GetCodepointBitmap(&info, scale, scale, ch, &w, &h, &xo, &yo);
  double area = 0;
  int x0 = w, y0 = h, x1 = -1, y1 = -1;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int v = bmp[y * w + x];
      if (!v) continue;
      area += v / 255.0;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  stbtt_FreeBitmap(bmp, nullptr);
  const double s = size * (1 - 2 * margin) / std::max(x1 - x0 + 1, y1 - y0 + 1);
  return area * s * s / (double(size) * size);
}

TEST(RasterizeGlyph, ShapeAndRange) {
  const GlyphImage g = rasterize_glyph(sans(), 'A', 64);
  EXPECT_EQ(g.pixels.height(), 64);
  EXPECT_EQ(g.pixels.width(), 64);
  EXPECT_EQ(g.pixels.channels(), 1);
  for (double v : g.pixels.data()) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
  EXPECT_EQ(g.ch, 'A');
  EXPECT_EQ(g.font_id, "DejaVuSansMono");
}

TEST(RasterizeGlyph, RejectsSymbolOutsideSet) {
  EXPECT_THROW(rasterize_glyph(sans(), ' ', 64), DomainError);
}

TEST(RasterizeGlyph, CoverageAgreesWithOutlineArea) {
  for (const FontDescriptor& f : {sans(), serif()}) {
    const double ref_i = reference_coverage(f.path, 'I', 64, 0.1);
    const double ref_w = reference_coverage(f.path, 'W', 64, 0.1);
    ASSERT_LT(ref_i, ref_w);
    const double got_i = ink_coverage(rasterize_glyph(f, 'I', 64).pixels, 0.5);
    const double got_w = ink_coverage(rasterize_glyph(f, 'W', 64).pixels, 0.5);
    EXPECT_NEAR(got_i, ref_i, 0.03) << f.id();
    EXPECT_NEAR(got_w, ref_w, 0.03) << f.id();
    EXPECT_LT(got_i, got_w) << f.id();
  }
}

TEST(RasterizeGlyph, InkStaysInsideMargin) {
  const Image g = rasterize_glyph(serif(), 'W', 64).pixels;
  const Rect box = ink_bbox(g, 0.0);
  EXPECT_GE(box.x, 6);
  EXPECT_LE(box.right(), 58);
  // The longer side spans the inner cell.
  EXPECT_GE(std::max(box.w, box.h), 50);
}

TEST(ColorGradient, BackgroundStaysBlack) {
  GlyphImage blank{Image(16, 16, 1), 'A', "x"};
  ColorGradientSpec spec;
  spec.color_top = {0.9, 0.1, 0.3};
  const GlyphImage out = apply_color_gradient(blank, spec);
  for (double v : out.pixels.data()) EXPECT_EQ(v, 0.0);
}

TEST(ColorGradient, FlatSpecGivesFlatInk) {
  const GlyphImage g = rasterize_glyph(sans(), 'M', 32);
  ColorGradientSpec spec;
  spec.color_top = spec.color_bottom = {0.25, 0.5, 0.75};
  const GlyphImage out = apply_color_gradient(g, spec);
  int full = 0;
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      if (g.pixels.at(y, x) != 1.0) continue;
      ++full;
      for (int c = 0; c < 3; ++c) EXPECT_EQ(out.pixels.at(y, x, c), spec.color_top[c]);
    }
  EXPECT_GT(full, 0);
}

TEST(ColorGradient, VerticalMidpointIsMeanColor) {
  // Ink rows 10..30 give a 21-row box whose middle row (20) has its center
  // at exactly half the box height.
  GlyphImage g{Image(40, 40, 1), 'A', "x"};
  for (int y = 10; y <= 30; ++y)
    for (int x = 12; x < 28; ++x) g.pixels.at(y, x) = 1.0;
  ColorGradientSpec spec;
  spec.color_top = {0.9, 0.2, 0.4};
  spec.color_bottom = {0.3, 0.8, 0.6};
  spec.axis = GradientAxis::kVertical;
  const GlyphImage out = apply_color_gradient(g, spec);
  for (int c = 0; c < 3; ++c) {
    EXPECT_NEAR(out.pixels.at(20, 20, c),
                (spec.color_top[c] + spec.color_bottom[c]) / 2, 1.0 / 255);
  }
}

TEST(ColorGradient, RejectsOutOfRangeSpec) {
  ColorGradientSpec spec;
  spec.color_top[1] = 1.5;
  EXPECT_THROW(spec.validate(), DomainError);
}

TEST(GradientSpec, ReplaysDocumentedDrawOrder) {
  for (std::uint64_t seed : {0ull, 7ull, 123456789ull}) {
    const std::uint64_t fs_seed = font_seed(seed, "DejaVuSerif");
    std::mt19937_64 ref(fs_seed);
    auto u = [&] { return double(ref() >> 11) / 9007199254740992.0; };
    ColorGradientSpec expect;
    for (double& c : expect.color_top) c = 0.2 + 0.8 * u();
    for (double& c : expect.color_bottom) c = 0.2 + 0.8 * u();
    expect.axis = u() < 0.5 ? GradientAxis::kVertical : GradientAxis::kHorizontal;
    expect.highlight_strength = 0.5 * u();
    EXPECT_EQ(draw_gradient_spec(fs_seed), expect);
  }
}

TEST(BuildDataset, TwoFontsGive124RecordsAndSplits) {
  const fs::path dir = fresh_dir("build");
  const BuildResult r = build_font_dataset({sans(), serif()}, dir, false, 5);
  EXPECT_EQ(r.manifest.records.size(), 124u);
  EXPECT_TRUE(r.rejects.empty());
  const DatasetManifest back = read_manifest(dir);
  ASSERT_EQ(back.records.size(), 124u);
  EXPECT_EQ(back.records[63].font_id, "DejaVuSerif");
  EXPECT_EQ(back.records[63].ch, '1');
  // Two fonts: round(1.6) = 2 train, no validation or test fonts.
  for (const auto& rec : back.records) EXPECT_EQ(rec.split, "train");
  EXPECT_TRUE(fs::exists(dir / back.records[10].path));
  const auto fonts = load_fonts(dir);
  ASSERT_EQ(fonts.size(), 2u);
  EXPECT_EQ(fonts[0].glyphs.size(), 62u);
  fs::remove_all(dir);
}

TEST(BuildDataset, SplitsFollowFractions) {
  const auto files = list_font_files(kFontDir);
  ASSERT_EQ(files.size(), 2u);
  const fs::path dir = fresh_dir("splits");
  ForgeOptions opt;
  opt.glyph_size = 16;
  const BuildResult r =
      build_font_dataset(enumerate_fonts(files, 10), dir, false, 1, opt, 4);
  std::map<std::string, std::set<std::string>> by_split;
  for (const auto& rec : r.manifest.records) by_split[rec.split].insert(rec.font_id);
  EXPECT_EQ(by_split["train"].size(), 8u);
  EXPECT_EQ(by_split["val"].size(), 1u);
  EXPECT_EQ(by_split["test"].size(), 1u);
  fs::remove_all(dir);
}

TEST(BuildDataset, DeterministicAcrossRunsAndWorkers) {
  const auto fonts = enumerate_fonts(list_font_files(kFontDir), 4);
  ForgeOptions opt;
  opt.glyph_size = 16;
  const fs::path a = fresh_dir("det_a"), b = fresh_dir("det_b");
  build_font_dataset(fonts, a, true, 9, opt, 1);
  build_font_dataset(fonts, b, true, 9, opt, 3);
  for (const char* f : {"manifest.jsonl", "header.json", "styles.jsonl"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  EXPECT_EQ(slurp(a / "glyphs" / fonts[2].id() / "17.png"),
            slurp(b / "glyphs" / fonts[2].id() / "17.png"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(BuildDataset, ColorSetStoresStylesAndShapes) {
  const fs::path dir = fresh_dir("color");
  ForgeOptions opt;
  opt.glyph_size = 16;
  const BuildResult r = build_font_dataset({serif()}, dir, true, 3, opt);
  ASSERT_EQ(r.styles.size(), 1u);
  EXPECT_EQ(r.styles[0], draw_gradient_spec(font_seed(3, "DejaVuSerif")));
  const auto fonts = load_fonts(dir);
  ASSERT_EQ(fonts.size(), 1u);
  ASSERT_EQ(fonts[0].shapes.size(), 62u);
  EXPECT_EQ(fonts[0].glyphs[0].channels(), 3);
  EXPECT_EQ(fonts[0].shapes[0].channels(), 1);
  fs::remove_all(dir);
}

TEST(BuildDataset, EmptyFontListThrows) {
  EXPECT_THROW(build_font_dataset({}, fresh_dir("empty"), false, 1), Error);
}

TEST(BuildDataset, UnreadableFontIsRejected) {
  const fs::path dir = fresh_dir("reject");
  fs::create_directories(dir);
  const fs::path bogus = dir / "Bogus.ttf";
  std::ofstream(bogus) << "not a font";
  ForgeOptions opt;
  opt.glyph_size = 16;
  const BuildResult r = build_font_dataset({{bogus, {}}, sans()}, dir / "out", false, 1, opt);
  ASSERT_EQ(r.rejects.size(), 1u);
  EXPECT_EQ(r.rejects[0].font_id, "Bogus");
  EXPECT_EQ(r.manifest.records.size(), 62u);
  fs::remove_all(dir);
}

TEST(SynthScene, OnlyCharBoxesChange) {
  const Image bg = flat_background(64, 96, {0.5, 0.5, 0.5});
  const SceneSample s = synth_scene(bg, "A1", sans(), {10, 12}, 32, 5, 2);
  ASSERT_EQ(s.char_boxes.size(), 2u);
  int changed = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 96; ++x) {
      const bool in_box = s.char_boxes[0].contains(x, y) || s.char_boxes[1].contains(x, y);
      for (int c = 0; c < 3; ++c) {
        if (!in_box) {
          ASSERT_EQ(s.image.at(y, x, c), bg.at(y, x, c));
        } else if (s.image.at(y, x, c) != bg.at(y, x, c)) {
          ++changed;
        }
      }
    }
  EXPECT_GT(changed, 0);
  for (const Rect& r : s.char_boxes) EXPECT_TRUE(r.inside(s.word_box));
}

TEST(SynthScene, GapMatchesSpacing) {
  const Image bg = flat_background(64, 120, {0.2, 0.3, 0.4});
  const int spacing = 6;
  const SceneSample s = synth_scene(bg, "AB", serif(), {8, 10}, 36, spacing, 4);
  // Columns with any changed pixel, measured on the image itself.
  std::vector<bool> ink(120, false);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 120; ++x)
      for (int c = 0; c < 3; ++c)
        if (s.image.at(y, x, c) != bg.at(y, x, c)) ink[x] = true;
  int first_end = -1, second_start = -1;
  for (int x = 0; x < 120; ++x) {
    if (ink[x] && second_start < 0 && first_end >= 0 && !ink[x - 1]) second_start = x;
    if (ink[x] && second_start < 0) first_end = x;
  }
  ASSERT_GE(second_start, 0);
  EXPECT_NEAR(second_start - first_end - 1, spacing, 1);
}

TEST(SynthScene, Errors) {
  const Image bg = flat_background(32, 32, {0.5, 0.5, 0.5});
  EXPECT_THROW(synth_scene(bg, "", sans(), {0, 0}, 20, 2, 1), DomainError);
  EXPECT_THROW(synth_scene(bg, "ABCDEFG", sans(), {0, 0}, 20, 2, 1), LayoutError);
}

TEST(SynthScene, TextColorContrast) {
  const Image bg = flat_background(48, 64, {0.8, 0.8, 0.8});
  const SceneSample s = synth_scene(bg, "Q", sans(), {8, 4}, 30, 2, 17);
  const auto& c = s.text_color;
  EXPECT_GE(std::abs(0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2] - 0.8), 0.35);
}

}  // namespace
}  // namespace ldn::forge
