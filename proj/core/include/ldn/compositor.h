#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ldn/background_restorer.h"
#include "ldn/dataset_forge.h"
#include "ldn/glyph_transfer.h"
#include "ldn/image.h"

// Word edits: erase and restore the word box, synthesize target glyphs in
// the source style, lay them out with the source spacing and composite.
namespace ldn::compose {

inline constexpr const char* kStage = "compositor_pipeline";

struct EditRequest {
  Image image;  // H x W x 3
  Rect word_box;
  std::vector<Rect> char_boxes;
  std::string source_text;
  std::string target_text;

  // Throws DomainError/DimensionError when an invariant does not hold.
  void validate() const;
};

struct Placement {
  Rect rect;
  double scale = 1.0;

  bool operator==(const Placement&) const = default;
};

struct LayoutOptions {
  double overflow_slack = 0.1;  // fraction of the word box width
  double min_scale = 0.5;
  // Gap used when the source has a single character, as a fraction of its
  // height.
  double lone_gap = 0.1;
};

// Equal lengths reuse the source boxes. Otherwise every target cell gets
// the median source width and height, cells are separated by the median
// source gap, the run is centered on the word box and bottom-aligned to
// the median source bottom, and the whole run is scaled down uniformly to
// fit word_box.w * (1 + slack). Throws LayoutError when even min_scale does
// not fit.
std::vector<Placement> layout_targets(const Rect& word_box,
                                      const std::vector<Rect>& char_boxes,
                                      const std::string& source_text,
                                      const std::string& target_text,
                                      const LayoutOptions& opt = {});

// Draws the glyph cell into `placement`: the mask's ink box is scaled to
// fit the placement with its aspect kept and centered, and
//   out = (1 - a) * background + a * color
// with a the resampled mask. Pixels outside the placement (and outside
// `clip` when given) are untouched.
Image composite(const Image& background, const Image& glyph_color,
                const Image& mask, const Placement& placement,
                const std::optional<Rect>& clip = std::nullopt);

struct EditModels {
  inpaint::InpaintModel inpainter;
  glyph::GlyphNet glyphnet;
  glyph::OrnaNet ornanet;
  std::string inpaint_id;
  std::string glyph_id;
  std::string orna_id;
};

struct ExpectedHashes {
  std::optional<std::string> inpaint;
  std::optional<std::string> glyphnet;
  std::optional<std::string> ornanet;
};

// Loads <dir>/inpaint, <dir>/glyphnet and <dir>/ornanet.
EditModels load_edit_models(const std::filesystem::path& dir,
                            const ExpectedHashes& expected = {});

struct EditOptions {
  int adapt_steps = 200;
  double adapt_lr = 3e-3;
  LayoutOptions layout;
  forge::ForgeOptions forge;
  std::uint64_t seed = 0;
};

struct EditedImage {
  Image image;
  Image restored;  // the restored word box region
  std::vector<Placement> placements;
  nlohmann::json audit;
};

// Full pipeline. Failures are rethrown as StageError naming the stage
// (glyph_transfer, background_restorer, compositor_pipeline).
EditedImage edit_text(const EditRequest& request, const EditModels& models,
                      const EditOptions& opt = {});

}  // namespace ldn::compose
