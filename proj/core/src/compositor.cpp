#include "ldn/compositor.h"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "ldn/charset.h"
#include "ldn/error.h"

namespace ldn::compose {

void EditRequest::validate() const {
  if (target_text.empty()) throw DomainError("target text is empty");
  validate_text(source_text);
  validate_text(target_text);
  if (image.channels() != 3) throw DimensionError("edit image must be RGB");
  if (char_boxes.size() != source_text.size()) {
    throw DimensionError(std::to_string(char_boxes.size()) +
                         " character boxes for source text of length " +
                         std::to_string(source_text.size()));
  }
  if (word_box.empty() || !word_box.inside(image.bounds())) {
    throw DimensionError("word box lies outside the image");
  }
  for (const Rect& b : char_boxes) {
    if (b.empty() || !b.inside(image.bounds())) {
      throw DimensionError("character box lies outside the image");
    }
  }
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int round_px(double v) { return static_cast<int>(std::lround(v)); }

}  // namespace

std::vector<Placement> layout_targets(const Rect& word_box,
                                      const std::vector<Rect>& char_boxes,
                                      const std::string& source_text,
                                      const std::string& target_text,
                                      const LayoutOptions& opt) {
  if (target_text.empty()) throw DomainError("target text is empty");
  validate_text(source_text);
  validate_text(target_text);
  if (char_boxes.size() != source_text.size()) {
    throw DimensionError("character boxes do not match the source text");
  }
  for (const Rect& b : char_boxes) {
    if (b.empty()) throw DomainError("empty character box");
  }
  std::vector<Placement> out;
  if (target_text.size() == source_text.size()) {
    for (const Rect& b : char_boxes) out.push_back({b, 1.0});
    return out;
  }

  std::vector<double> widths, heights, bottoms, gaps;
  for (std::size_t i = 0; i < char_boxes.size(); ++i) {
    const Rect& b = char_boxes[i];
    widths.push_back(b.w);
    heights.push_back(b.h);
    bottoms.push_back(b.bottom());
    if (i > 0) gaps.push_back(b.x - char_boxes[i - 1].right());
  }
  const double w = median(widths), h = median(heights), bottom = median(bottoms);
  const double gap = gaps.empty() ? opt.lone_gap * h : median(gaps);
  const int n = static_cast<int>(target_text.size());
  const double natural = n * w + (n - 1) * gap;
  const double available = word_box.w * (1.0 + opt.overflow_slack);
  double s = natural > available ? available / natural : 1.0;
  if (s < opt.min_scale) {
    throw LayoutError("target text does not fit the word box at " +
                          std::to_string(opt.min_scale) + " scale",
                      natural * opt.min_scale, available);
  }
  const double cw = w * s, ch = h * s, g = gap * s;
  const double run = n * cw + (n - 1) * g;
  const double x0 = word_box.x + word_box.w / 2.0 - run / 2.0;
  const double y0 = bottom - ch;
  for (int i = 0; i < n; ++i) {
    const double x = x0 + i * (cw + g);
    const int left = round_px(x), top = round_px(y0);
    out.push_back({{left, top, round_px(x + cw) - left, round_px(bottom) - top}, s});
  }
  return out;
}

namespace {

// Bilinear sample with edge clamping; a + t (b - a) keeps constants exact.
double sample(const Image& img, double x, double y, int c) {
  x = std::clamp(x, 0.0, img.width() - 1.0);
  y = std::clamp(y, 0.0, img.height() - 1.0);
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const int y1 = std::min(y0 + 1, img.height() - 1);
  const double fx = x - x0, fy = y - y0;
  const double p00 = img.at(y0, x0, c), p01 = img.at(y0, x1, c);
  const double p10 = img.at(y1, x0, c), p11 = img.at(y1, x1, c);
  const double top = p00 + fx * (p01 - p00);
  const double bot = p10 + fx * (p11 - p10);
  return top + fy * (bot - top);
}

}  // namespace

Image composite(const Image& background, const Image& glyph_color,
                const Image& mask, const Placement& placement,
                const std::optional<Rect>& clip) {
  const Rect& p = placement.rect;
  if (p.empty() || !p.inside(background.bounds())) {
    throw DimensionError("placement (" + std::to_string(p.x) + "," +
                         std::to_string(p.y) + "," + std::to_string(p.w) + "," +
                         std::to_string(p.h) + ") lies outside the image");
  }
  if (mask.channels() != 1 || glyph_color.height() != mask.height() ||
      glyph_color.width() != mask.width() ||
      glyph_color.channels() != background.channels()) {
    throw DimensionError("glyph color and mask do not match");
  }
  Rect box = ink_bbox(mask, 0.5);
  if (box.empty()) box = ink_bbox(mask, 0.0);
  Image out = background;
  if (box.empty()) return out;

  const double k = std::min(double(p.w) / box.w, double(p.h) / box.h);
  const double ox = p.x + (p.w - box.w * k) / 2;
  const double oy = p.y + (p.h - box.h * k) / 2;
  Rect area = p;
  if (clip) {
    const int x0 = std::max(p.x, clip->x), y0 = std::max(p.y, clip->y);
    const int x1 = std::min(p.right(), clip->right());
    const int y1 = std::min(p.bottom(), clip->bottom());
    area = {x0, y0, x1 - x0, y1 - y0};
    if (area.empty()) return out;
  }
  for (int y = area.y; y < area.bottom(); ++y) {
    const double sy = box.y + (y + 0.5 - oy) / k - 0.5;
    for (int x = area.x; x < area.right(); ++x) {
      const double sx = box.x + (x + 0.5 - ox) / k - 0.5;
      const double a = std::clamp(sample(mask, sx, sy, 0), 0.0, 1.0);
      if (a == 0.0) continue;
      for (int c = 0; c < out.channels(); ++c) {
        const double col = sample(glyph_color, sx, sy, c);
        out.at(y, x, c) = (1.0 - a) * background.at(y, x, c) + a * col;
      }
    }
  }
  return out;
}

EditModels load_edit_models(const std::filesystem::path& dir,
                            const ExpectedHashes& expected) {
  std::string inpaint_id, glyph_id, orna_id;
  inpaint::InpaintModel inpainter = [&] {
    try {
      return inpaint::load_model(dir / "inpaint", expected.inpaint, &inpaint_id);
    } catch (const Error& e) {
      throw StageError(inpaint::kStage, e.what());
    }
  }();
  try {
    glyph::GlyphNet glyphnet =
        glyph::load_glyphnet(dir / glyph::kGlyphNetKind, expected.glyphnet, &glyph_id);
    glyph::OrnaNet ornanet =
        glyph::load_ornanet(dir / glyph::kOrnaNetKind, expected.ornanet, &orna_id);
    if (glyphnet.config().glyph_size != ornanet.config().glyph_size) {
      throw SchemaError("GlyphNet and OrnaNet glyph sizes differ");
    }
    return {std::move(inpainter), std::move(glyphnet), std::move(ornanet),
            inpaint_id, glyph_id, orna_id};
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(glyph::kStage, e.what());
  }
}

namespace {

template <typename F>
auto run_stage(const char* stage, nlohmann::json& timings, F&& f) {
  const auto start = std::chrono::steady_clock::now();
  auto record = [&] {
    const std::chrono::duration<double, std::milli> ms =
        std::chrono::steady_clock::now() - start;
    timings[stage] = timings.value(stage, 0.0) + ms.count();
  };
  try {
    auto result = f();
    record();
    return result;
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

nlohmann::json rect_json(const Rect& r) {
  return {{"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}};
}

}  // namespace

EditedImage edit_text(const EditRequest& request, const EditModels& models,
                      const EditOptions& opt) {
  nlohmann::json timings = nlohmann::json::object();
  run_stage(kStage, timings, [&] {
    request.validate();
    return 0;
  });
  const int size = models.glyphnet.config().glyph_size;

  const glyph::ExtractedGlyphs extracted = run_stage(glyph::kStage, timings, [&] {
    return glyph::extract_source_glyphs(request.image, request.char_boxes,
                                        request.source_text, size, opt.forge);
  });

  const Image restored_full = run_stage(inpaint::kStage, timings, [&] {
    return inpaint::restore_box(models.inpainter, request.image, request.word_box);
  });

  struct Styled {
    std::vector<Image> shapes;
    glyph::Ornamented colors;
  };
  const Styled styled = run_stage(glyph::kStage, timings, [&] {
    const glyph::GlyphStack input = glyph::assemble_input(extracted.shapes);
    Styled s;
    s.shapes = glyph::predict_glyph_shapes(models.glyphnet, input);
    const glyph::GlyphStack exemplars = glyph::assemble_input(extracted.colors);
    glyph::OrnaNet adapted(models.ornanet.config());
    adapted.copy_from(models.ornanet);
    glyph::adapt_ornanet(adapted, exemplars, input.glyphs, opt.adapt_steps,
                         opt.adapt_lr);
    s.colors = glyph::ornament(adapted, s.shapes, exemplars, &input.glyphs);
    return s;
  });

  EditedImage result;
  result.restored = crop(restored_full, request.word_box);
  result.placements = run_stage(kStage, timings, [&] {
    return layout_targets(request.word_box, request.char_boxes,
                          request.source_text, request.target_text, opt.layout);
  });
  result.image = run_stage(kStage, timings, [&] {
    Image out = restored_full;
    for (std::size_t i = 0; i < request.target_text.size(); ++i) {
      const int slot = char_index(request.target_text[i]);
      out = composite(out, styled.colors.fields[slot], styled.shapes[slot],
                      result.placements[i], request.word_box);
    }
    return out;
  });

  nlohmann::json placements = nlohmann::json::array();
  for (std::size_t i = 0; i < result.placements.size(); ++i) {
    nlohmann::json p = rect_json(result.placements[i].rect);
    p["char"] = std::string(1, request.target_text[i]);
    p["scale"] = result.placements[i].scale;
    placements.push_back(std::move(p));
  }
  result.audit = {
      {"placements", placements},
      {"checkpoints",
       {{"inpaint", models.inpaint_id},
        {"glyphnet", models.glyph_id},
        {"ornanet", models.orna_id}}},
      {"seeds", {{"edit", opt.seed}}},
      {"stage_timings_ms", timings},
      {"restored_box", rect_json(request.word_box)},
      {"source_text", request.source_text},
      {"target_text", request.target_text},
      {"adapt_steps", opt.adapt_steps},
  };
  return result;
}

}  // namespace ldn::compose
