#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ldn/charset.h"
#include "ldn/checkpoint.h"
#include "ldn/dataset_forge.h"
#include "ldn/image.h"
#include "ldn/nn/layers.h"
#include "ldn/random.h"

// Few-shot font style transfer over 62-slot glyph stacks: GlyphNet predicts
// every glyph mask from a few observed ones, OrnaNet colors them.
namespace ldn::glyph {

inline constexpr const char* kStage = "glyph_transfer";
inline constexpr const char* kGlyphNetKind = "glyphnet";
inline constexpr const char* kOrnaNetKind = "ornanet";

// One slot per symbol, indexed by char_index. Unobserved slots are zero.
struct GlyphStack {
  std::vector<Image> glyphs;
  std::array<bool, kNumSymbols> observed{};

  int size() const { return glyphs.empty() ? 0 : glyphs.front().height(); }
  int channels() const { return glyphs.empty() ? 0 : glyphs.front().channels(); }
  int observed_count() const;
};

// Throws on an empty list, a duplicate symbol, or mixed glyph shapes.
GlyphStack assemble_input(const std::vector<forge::GlyphImage>& observed);

// Stack over `all` (62 glyphs) keeping only the slots flagged in `observed`.
GlyphStack partial_stack(const std::vector<Image>& all,
                         const std::array<bool, kNumSymbols>& observed);

// --- GlyphNet -----------------------------------------------------------------

struct GlyphNetConfig {
  int glyph_size = 64;
  int base_channels = 32;
  int depth = 3;  // stride-2 stages; the bottleneck is size / 2^depth
  int latent_dim = 256;  // dense code between encoder and decoder
  double threshold = 0.5;

  nlohmann::json to_json() const;
  static GlyphNetConfig from_json(const nlohmann::json& j);
  std::string hash() const;
  void validate() const;
};

// Maps a (n, 62, H, W) stack to (n, 62, H, W) masks through a strided
// convolutional encoder, a dense code and an upsampling decoder with sigmoid
// output.
// Observed inputs are binarized at the threshold before encoding.
class GlyphNet {
 public:
  explicit GlyphNet(const GlyphNetConfig& config);
  GlyphNet(GlyphNet&&) = default;
  GlyphNet& operator=(GlyphNet&&) = default;

  const GlyphNetConfig& config() const { return config_; }
  void init(std::uint64_t seed);

  nn::Tensor forward(const nn::Tensor& stack, nn::Sequential::Tape* tape) const;
  void backward(const nn::Tensor& grad, const nn::Sequential::Tape& tape);

  const nn::ParameterList& params() const { return params_; }
  void copy_from(const GlyphNet& other);

 private:
  GlyphNetConfig config_;
  nn::Sequential net_;
  nn::ParameterList params_;
};

nn::Tensor stack_tensor(const GlyphStack& stack);

// 62 masks of the configured size, values in [0,1].
std::vector<Image> predict_glyph_shapes(const GlyphNet& net,
                                        const GlyphStack& input);

// --- OrnaNet ------------------------------------------------------------------

// Summary of the observed color exemplars: mean unpremultiplied ink color
// (color / shape) over the top, bottom, left and right thirds of each
// exemplar's ink box, averaged over exemplars. Regions without ink fall
// back to the overall mean.
using StyleFeatures = std::array<double, 12>;

StyleFeatures style_features(const std::vector<Image>& colors,
                             const std::vector<Image>& shapes,
                             const std::array<bool, kNumSymbols>& observed,
                             double threshold);

struct OrnaNetConfig {
  int glyph_size = 64;
  int hidden = 32;
  double threshold = 0.5;

  nlohmann::json to_json() const;
  static OrnaNetConfig from_json(const nlohmann::json& j);
  std::string hash() const;
  void validate() const;
};

// Per-pixel color network over [mask, position in the mask's ink box,
// broadcast style features]. The output is gate(mask) * mask * color where
// gate is 1 above the threshold and 0 elsewhere, so background pixels stay
// exactly at the black background.
class OrnaNet {
 public:
  static constexpr int kInputChannels = 3 + 12;

  explicit OrnaNet(const OrnaNetConfig& config);
  OrnaNet(OrnaNet&&) = default;
  OrnaNet& operator=(OrnaNet&&) = default;

  const OrnaNetConfig& config() const { return config_; }
  void init(std::uint64_t seed);

  struct Tape {
    nn::Sequential::Tape net;
    nn::Tensor masks;  // (k, 1, H, W)
    nn::Tensor color;  // sigmoid color field (k, 3, H, W)
  };
  // masks (k, 1, H, W) and one feature vector per mask.
  nn::Tensor forward(const nn::Tensor& masks,
                     const std::vector<StyleFeatures>& features,
                     Tape* tape) const;
  // Accumulates parameter gradients; returns d loss / d masks.
  nn::Tensor backward(const nn::Tensor& grad, const Tape& tape);

  const nn::ParameterList& params() const { return params_; }
  void copy_from(const OrnaNet& other);

 private:
  nn::Tensor build_input(const nn::Tensor& masks,
                         const std::vector<StyleFeatures>& features) const;

  OrnaNetConfig config_;
  nn::Sequential net_;
  nn::ParameterList params_;
};

struct Ornamented {
  std::vector<Image> colors;  // gated, premultiplied by the mask
  std::vector<Image> fields;  // ungated color field
};

// Colors all 62 `shapes` in the style of the observed slots of
// `exemplars`; exemplar_shapes defaults to `shapes`. Throws when no
// exemplar is observed.
Ornamented ornament(const OrnaNet& net, const std::vector<Image>& shapes,
                    const GlyphStack& exemplars,
                    const std::vector<Image>* exemplar_shapes = nullptr);

// Scene-time fit: `steps` Adam updates of color L1 on the exemplars' ink.
std::vector<double> adapt_ornanet(OrnaNet& net, const GlyphStack& exemplars,
                                  const std::vector<Image>& exemplar_shapes,
                                  int steps, double lr);

// --- training -----------------------------------------------------------------

struct TrainConfig {
  int steps = 1500;
  int batch_size = 4;
  double lr = 1e-3;
  double orna_lr = 1e-3;
  double disc_lr = 2e-4;
  int observed_min = 1;
  int observed_max = 8;
  double lambda_shape = 1.0;
  double lambda_color = 1.0;
  double lambda_adv = 0.0;
  int color_slots = 8;  // slots per sample colored in finetuning
  int disc_channels = 16;
};

struct LossReport {
  int step = 0;
  double shape = 0;
  double color = 0;
  double adv_g = 0;
  double adv_d = 0;
  double total = 0;

  nlohmann::json to_json() const;
  bool operator==(const LossReport&) const = default;
};

// One training sample: the font and its observed slots.
struct Observation {
  int font = 0;
  std::array<bool, kNumSymbols> observed{};
};

// The documented draw for one sample from Rng(derive_seed(seed,
// "glyph-batches")), repeated batch_size times per step:
//   font  = index(n_fonts)
//   count = lo + index(hi - lo + 1)
//   perm  = shuffle(0..61);  observed = perm[0 .. count)
Observation draw_observation(Rng& rng, int n_fonts, int lo, int hi);

using ProgressFn = std::function<void(const LossReport&)>;

struct PretrainResult {
  Checkpoint checkpoint;
  std::vector<LossReport> history;
};

// Shape-only training on grayscale fonts; writes a glyphnet checkpoint to
// out_dir. Starts from `init` when given, else from net.init(seed).
PretrainResult pretrain_glyphnet(const std::vector<forge::FontGlyphs>& fonts,
                                 const GlyphNetConfig& arch,
                                 const TrainConfig& train, std::uint64_t seed,
                                 const std::filesystem::path& out_dir,
                                 const GlyphNet* init = nullptr,
                                 const ProgressFn& progress = {});

struct FinetuneResult {
  Checkpoint glyph_checkpoint;
  Checkpoint orna_checkpoint;
  std::vector<LossReport> history;
};

// Joint training of GlyphNet and OrnaNet on color fonts (with stored
// shapes). Loss = lambda_shape * shape L1 + lambda_color * color L1 on ink
// pixels + lambda_adv * non-saturating adversarial term on colored glyphs.
// Color slots are drawn from Rng(derive_seed(seed, "color-slots")) so the
// observation draws match pretraining. Writes out_dir/glyphnet and
// out_dir/ornanet.
FinetuneResult finetune_pipeline(const GlyphNet& glyph_init,
                                 const std::vector<forge::FontGlyphs>& fonts,
                                 const OrnaNetConfig& orna_arch,
                                 const TrainConfig& train, std::uint64_t seed,
                                 const std::filesystem::path& out_dir,
                                 const ProgressFn& progress = {});

// Loss of one batch, exposed for gradient checks. Gradients are
// accumulated into the parameters of both nets (and the discriminator when
// lambda_adv is nonzero).
class PipelineLoss {
 public:
  // `orna` may be null for shape-only training.
  PipelineLoss(GlyphNet& glyph, OrnaNet* orna, const TrainConfig& train,
               std::uint64_t disc_seed);

  struct Batch {
    nn::Tensor input;         // (n, 62, H, W) observed shapes
    nn::Tensor target_shape;  // (n, 62, H, W)
    std::vector<std::vector<int>> color_slots;
    std::vector<Image> color_targets;  // per sample and slot, in order
    std::vector<StyleFeatures> features;  // per sample
  };

  // gen_grads accumulates d total into both nets; disc_grads accumulates
  // d adv_d into the discriminator.
  LossReport evaluate(const Batch& batch, bool gen_grads, bool disc_grads);
  nn::ParameterList disc_params() const;

 private:
  GlyphNet& glyph_;
  OrnaNet* orna_;
  TrainConfig train_;
  nn::Sequential disc_;
  nn::ParameterList disc_params_;
};

// Training batch for the given observations. Color batches take their
// targets from the font glyphs at `color_slots` and their shapes from the
// stored shapes; grayscale batches ignore `color_slots`.
PipelineLoss::Batch make_batch(const std::vector<forge::FontGlyphs>& fonts,
                               const std::vector<Observation>& obs,
                               const std::vector<std::vector<int>>& color_slots,
                               int size, double threshold, bool color);

CheckpointMeta glyphnet_meta(const GlyphNet& net, const TrainConfig& train,
                             std::uint64_t seed, long step);
CheckpointMeta ornanet_meta(const OrnaNet& net, std::uint64_t seed, long step);

GlyphNet load_glyphnet(const std::filesystem::path& dir,
                       const std::optional<std::string>& expected_hash =
                           std::nullopt,
                       std::string* checkpoint_id = nullptr);
OrnaNet load_ornanet(const std::filesystem::path& dir,
                     const std::optional<std::string>& expected_hash =
                         std::nullopt,
                     std::string* checkpoint_id = nullptr);

// --- scene glyph extraction ---------------------------------------------------

struct ExtractedGlyphs {
  std::vector<forge::GlyphImage> shapes;  // binary, first occurrence order
  std::vector<forge::GlyphImage> colors;  // shape * scene color
  std::array<double, 3> background{0, 0, 0};
};

// Otsu's threshold over a 256-bin histogram of values in [0,1]; returns
// the upper edge of the lower class.
double otsu_threshold(const Image& gray);

// Crops each box, separates ink from background with Otsu's threshold
// (ink is the class away from the pixels bordering the box), fits the
// ink box into a glyph cell like rasterize_glyph, and binarizes the cell
// with Otsu's threshold again. Repeated symbols keep the first occurrence.
ExtractedGlyphs extract_source_glyphs(const Image& image,
                                      const std::vector<Rect>& char_boxes,
                                      const std::string& text, int glyph_size,
                                      const forge::ForgeOptions& opt = {});

}  // namespace ldn::glyph
