#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ldn/checkpoint.h"
#include "ldn/image.h"
#include "ldn/nn/layers.h"

// Context-encoder inpainting: encoder, fully connected bottleneck, upsampling
// decoder for the hole, and a discriminator that only sees the hole.
namespace ldn::inpaint {

inline constexpr const char* kStage = "background_restorer";
inline constexpr const char* kCheckpointKind = "inpainter";

// One-channel {0,1} image; 1 marks pixels to erase and restore.
using RegionMask = Image;

Image center_mask(int height, int width, int hole);

struct MaskedImage {
  Image image;  // masked pixels hold `fill`
  RegionMask mask;
  std::optional<Image> original;
  double fill = 0.5;
};

MaskedImage mask_region(const Image& image, const RegionMask& mask,
                        double fill);

// Everything that fixes the parameter layout.
struct ArchConfig {
  int input_size = 128;
  int hole_size = 64;
  int latent_dim = 512;
  int base_channels = 16;
  int max_channels = 64;
  int disc_channels = 16;

  nlohmann::json to_json() const;
  static ArchConfig from_json(const nlohmann::json& j);
  std::string hash() const;
  void validate() const;
};

struct TrainConfig {
  int steps = 2000;
  int batch_size = 8;
  double lr = 1e-3;
  double disc_lr = 2e-4;
  // Cosine decay of both rates down to this fraction of their start value.
  // 1 keeps them constant.
  double lr_floor = 0.05;
  double lambda_rec = 0.999;
  double lambda_adv = 0.001;
  // Hole fill; negative means the mean intensity of the training set.
  double fill = -1;
  // Checkpoint every this many steps (0: only at the end).
  int checkpoint_every = 0;
};

struct LossReport {
  int step = 0;
  double recon = 0;
  double adv_g = 0;
  double adv_d = 0;
  double total = 0;

  nlohmann::json to_json() const;
  bool operator==(const LossReport&) const = default;
};

// Mean absolute difference over masked pixels of all channels; 0 for an
// empty mask. `mask` is one channel of the images' height and width.
double recon_loss(const Image& pred, const Image& target,
                  const RegionMask& mask);

struct AdversarialLosses {
  double adv_g = 0;  // softplus(-D(fake)), non-saturating
  double adv_d = 0;  // softplus(-D(real)) + softplus(D(fake))
};

class InpaintModel {
 public:
  explicit InpaintModel(const ArchConfig& config);
  InpaintModel(InpaintModel&&) = default;
  InpaintModel& operator=(InpaintModel&&) = default;

  const ArchConfig& config() const { return config_; }
  // He-normal initialization from `seed` in the order encoder, bottleneck,
  // decoder, discriminator.
  void init(std::uint64_t seed);

  // Latent code of shape (1, latent_dim, 1, 1).
  nn::Tensor encode(const MaskedImage& masked) const;
  // Decoder prediction for the centered hole, hole x hole x 3.
  Image predict_hole(const MaskedImage& masked) const;
  // Decoder output inside the mask, input pixels elsewhere. Mask pixels must
  // lie within the centered hole.
  Image inpaint(const MaskedImage& masked) const;

  AdversarialLosses adversarial_losses(const Image& pred_region,
                                       const Image& real_region) const;

  // Batched building blocks used by training and gradient checks.
  // `images` are (n, 3, S, S) masked inputs; returns (n, 3, hole, hole).
  struct GenTape {
    nn::Sequential::Tape enc, bott, dec;
    nn::Tensor out;   // sigmoid output
    nn::Tensor bias;  // per-sample, per-channel logit offset
  };
  nn::Tensor generate(const nn::Tensor& images, const nn::Tensor& masks,
                      GenTape* tape) const;
  // Accumulates generator parameter gradients.
  void generate_backward(const nn::Tensor& grad_out, const GenTape& tape);

  // Discriminator logits (n, 1, 1, 1) for (n, 3, hole, hole) regions.
  nn::Tensor discriminate(const nn::Tensor& regions,
                          nn::Sequential::Tape* tape) const;
  nn::Tensor discriminate_backward(const nn::Tensor& grad,
                                   const nn::Sequential::Tape& tape);

  const nn::ParameterList& generator_params() const { return gen_params_; }
  const nn::ParameterList& discriminator_params() const { return disc_params_; }
  nn::ParameterList all_params() const;

  Rect hole_rect() const;
  double fill() const { return fill_; }
  void set_fill(double f) { fill_ = f; }

 private:
  void check_input(const MaskedImage& masked) const;
  nn::Tensor context_means(const nn::Tensor& images,
                           const nn::Tensor& masks) const;
  nn::Tensor encoder_input(const nn::Tensor& images, const nn::Tensor& masks,
                           const nn::Tensor& means) const;

  ArchConfig config_;
  double fill_ = 0.5;
  int top_channels_ = 0;
  nn::Sequential encoder_, bottleneck_, decoder_, disc_;
  nn::ParameterList gen_params_, disc_params_;
};

CheckpointMeta make_meta(const InpaintModel& model, std::uint64_t seed,
                         long step);
InpaintModel load_model(const std::filesystem::path& dir,
                        const std::optional<std::string>& expected_hash =
                            std::nullopt,
                        std::string* checkpoint_id = nullptr);

// One training batch: masked inputs and masks (n, 3|1, S, S) and the true
// hole contents (n, 3, hole, hole).
struct Batch {
  nn::Tensor images;
  nn::Tensor masks;
  nn::Tensor real;
};

// Training objective lambda_rec * recon + lambda_adv * adv_g. With
// gen_grads the generator gradient of the total is accumulated; with
// disc_grads the discriminator gradient of adv_d (prediction held fixed).
// The adversarial terms are skipped (reported as 0) when lambda_adv is 0.
LossReport evaluate_loss(InpaintModel& model, const Batch& batch,
                         double lambda_rec, double lambda_adv, bool gen_grads,
                         bool disc_grads);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LossReport> history;
};

using ProgressFn = std::function<void(const LossReport&)>;

// Trains on 3-channel images (resized to the input size when needed) with
// centered holes. Batches are drawn by reshuffling the image order each
// epoch with Rng(derive_seed(seed, "inpaint-batches")). On a non-finite
// loss the last good parameters are saved to `out_dir` and NumericError is
// thrown with the step number.
TrainResult train_inpainter(const std::vector<Image>& images,
                            const ArchConfig& arch, const TrainConfig& train,
                            std::uint64_t seed,
                            const std::filesystem::path& out_dir,
                            const ProgressFn& progress = {});

// Erases `box` of `image` and restores it: the box, grown by
// input/hole around its center, is resampled to the model input, the
// centered hole is inpainted, and the hole is resampled back onto the box.
// Pixels outside `box` are returned unchanged.
Image restore_box(const InpaintModel& model, const Image& image,
                  const Rect& box);

std::vector<Image> load_image_dir(const std::filesystem::path& dir);

}  // namespace ldn::inpaint
