#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "ldn/image.h"

namespace ldn {

// Synthetic style applied on top of a font file's outlines.
struct FontVariant {
  int weight = 0;       // stroke dilation level, 0 = as designed
  int slant_pct = 0;    // horizontal shear, percent of height
  int width_pct = 100;  // horizontal scale, percent

  bool is_plain() const {
    return weight == 0 && slant_pct == 0 && width_pct == 100;
  }
  bool operator==(const FontVariant&) const = default;
};

// A font file plus a variant. The id is "<file stem>" for the plain
// variant and "<stem>~b<weight>~s<slant>~w<width>" otherwise.
struct FontDescriptor {
  std::filesystem::path path;
  FontVariant variant;

  std::string id() const;
};

// Parses an id produced by FontDescriptor::id() back into a descriptor
// whose file is looked up as <dir>/<stem>.ttf (or .otf).
FontDescriptor parse_font_id(const std::string& id,
                             const std::filesystem::path& dir);

// Font files (*.ttf, *.otf) in `dir`, sorted by file name.
std::vector<std::filesystem::path> list_font_files(
    const std::filesystem::path& dir);

// The first `n` descriptors of the deterministic enumeration
// variant-major over `files`: every file in its plain variant first, then
// every file in the next variant of kVariantGrid, and so on.
std::vector<FontDescriptor> enumerate_fonts(
    const std::vector<std::filesystem::path>& files, int n);

const std::vector<FontVariant>& variant_grid();

// Coverage raster of one rendered character. (origin_x, origin_y) is the
// pen origin on the baseline in raster coordinates.
struct GlyphRaster {
  Image coverage;  // one channel, [0,1]
  int origin_x = 0;
  int origin_y = 0;
};

class FontFace {
 public:
  // Throws IoError when the file cannot be read or parsed as a font.
  static std::shared_ptr<const FontFace> load(const std::filesystem::path& path);

  bool has_glyph(char ch) const;

  // Renders `ch` with an em pixel height of `pixel_height`, then applies
  // the variant (width scale and slant about the baseline, then dilation).
  // Throws MissingGlyphError when the font has no outline for `ch`.
  GlyphRaster render(char ch, double pixel_height, const FontVariant& variant,
                     const std::string& font_id) const;

  ~FontFace();
  FontFace(const FontFace&) = delete;
  FontFace& operator=(const FontFace&) = delete;

 private:
  FontFace();
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Loads the face for a descriptor, caching faces by path.
std::shared_ptr<const FontFace> open_font(const FontDescriptor& font);

}  // namespace ldn
