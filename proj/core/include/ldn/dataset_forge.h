#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ldn/font.h"
#include "ldn/image.h"
#include "ldn/random.h"

// Glyph datasets (grayscale and gradient-colored) and synthetic scenes with
// known ground truth.
namespace ldn::forge {

inline constexpr int kManifestSchemaVersion = 1;

struct ForgeOptions {
  int glyph_size = 64;
  double margin = 0.1;           // fraction of the cell left empty per side
  double threshold = 0.5;        // ink binarization threshold
  int supersample = 4;           // rendering oversampling factor
  double highlight_extent = 0.3; // top fraction of the glyph box lit up
  double train_fraction = 0.8;
  double val_fraction = 0.1;
};

struct GlyphImage {
  Image pixels;  // 1 channel (shape) or 3 channels (color)
  char ch = 0;
  std::string font_id;
};

double ink_coverage(const Image& gray, double threshold);

enum class GradientAxis { kVertical, kHorizontal };

struct ColorGradientSpec {
  std::array<double, 3> color_top{1, 1, 1};
  std::array<double, 3> color_bottom{1, 1, 1};
  GradientAxis axis = GradientAxis::kVertical;
  double highlight_strength = 0;

  // Throws DomainError when a component lies outside [0,1].
  void validate() const;
  bool operator==(const ColorGradientSpec&) const = default;
};

// Renders `ch` and fits its tight ink box, aspect preserved, into a
// size x size cell with the configured margin. Ink is high on a zero
// background.
GlyphImage rasterize_glyph(const FontDescriptor& font, char ch, int size,
                           const ForgeOptions& opt = {});

// The unscaled per-pixel style color (gradient plus highlight, clamped to
// 1) over the bounding box `box` of a size_h x size_w glyph.
Image gradient_ramp(const ColorGradientSpec& spec, const Rect& box, int size_h,
                    int size_w, const ForgeOptions& opt = {});

// Ink pixels (value > threshold) become value * ramp color; all other
// pixels keep the black background.
GlyphImage apply_color_gradient(const GlyphImage& glyph,
                                const ColorGradientSpec& spec,
                                const ForgeOptions& opt = {});

// The documented per-font draw sequence on Rng(font_seed):
//   color_top[r,g,b]    = 0.2 + 0.8 * uniform()   (three draws)
//   color_bottom[r,g,b] = 0.2 + 0.8 * uniform()   (three draws)
//   axis                = uniform() < 0.5 ? vertical : horizontal
//   highlight_strength  = 0.5 * uniform()
ColorGradientSpec draw_gradient_spec(std::uint64_t font_seed);

std::uint64_t font_seed(std::uint64_t seed, const std::string& font_id);

struct ManifestRecord {
  std::string font_id;
  char ch = 0;
  std::string path;   // relative to the manifest directory
  std::string split;  // train | val | test
  std::uint64_t seed = 0;
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;
  int glyph_size = 64;
  bool color = false;

  std::vector<std::string> font_ids() const;
};

struct FontReject {
  std::string font_id;
  std::string reason;
};

struct BuildResult {
  DatasetManifest manifest;
  std::vector<FontReject> rejects;
  std::vector<ColorGradientSpec> styles;  // one per accepted font when color
};

// Renders 62 glyphs per font under out_dir/glyphs/<font_id>/NN.png and
// writes out_dir/manifest.jsonl plus out_dir/header.json. Color sets also
// get styles.jsonl and the grayscale shapes under out_dir/shapes/<font_id>/.
// A given `fixed_style` replaces the per-font draws (which still consume
// their seeds). Fonts that fail to render are reported in `rejects`.
// Rendering runs on up to `workers` threads; output bytes do not depend on
// the worker count. Throws Error when no font survives.
BuildResult build_font_dataset(const std::vector<FontDescriptor>& fonts,
                               const std::filesystem::path& out_dir,
                               bool color, std::uint64_t seed,
                               const ForgeOptions& opt = {}, int workers = 1,
                               const std::optional<ColorGradientSpec>&
                                   fixed_style = std::nullopt);

DatasetManifest read_manifest(const std::filesystem::path& dir);

// All 62 glyphs of one font, slot i holding char_at(i).
struct FontGlyphs {
  std::string font_id;
  std::string split;
  std::vector<Image> glyphs;
  std::vector<Image> shapes;  // grayscale masks; color sets only
};

// Loads every font of a manifest (optionally only one split), with the
// stored shapes for color sets.
std::vector<FontGlyphs> load_fonts(const std::filesystem::path& dir,
                                   const std::string& split = "");

struct SceneSample {
  Image image;  // H x W x 3
  Rect word_box;
  std::vector<Rect> char_boxes;
  std::string text;
  std::string font_id;
  std::array<double, 3> text_color{0, 0, 0};
};

struct Point {
  int x = 0;
  int y = 0;
};

// Draws `text` with `font` on `background`. `origin` is the top-left of the
// word's ink, `scale` the em height in pixels, `spacing` the gap in pixels
// between consecutive tight character boxes. The text color is drawn from
// `seed` with at least 0.35 luma contrast against the background mean.
// Pixels outside the character boxes are left untouched.
SceneSample synth_scene(const Image& background, const std::string& text,
                        const FontDescriptor& font, Point origin, double scale,
                        double spacing, std::uint64_t seed,
                        const ForgeOptions& opt = {});

enum class BackgroundKind { kFlat, kLinear, kRadial, kWaves };

// Smooth synthetic backgrounds for inpainting data and scenes.
Image make_background(BackgroundKind kind, Rng& rng, int height, int width);
Image flat_background(int height, int width, std::array<double, 3> color);

}  // namespace ldn::forge
