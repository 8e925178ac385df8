#include "ldn/background_restorer.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "ldn/digest.h"
#include "ldn/error.h"
#include "ldn/nn/image_tensor.h"
#include "ldn/nn/loss.h"
#include "ldn/nn/optim.h"
#include "ldn/random.h"

namespace ldn::inpaint {

using nn::Tensor;

Image center_mask(int height, int width, int hole) {
  Image m(height, width, 1);
  const int y0 = (height - hole) / 2, x0 = (width - hole) / 2;
  for (int y = std::max(0, y0); y < std::min(height, y0 + hole); ++y)
    for (int x = std::max(0, x0); x < std::min(width, x0 + hole); ++x)
      m.at(y, x) = 1.0;
  return m;
}

MaskedImage mask_region(const Image& image, const RegionMask& mask,
                        double fill) {
  if (mask.channels() != 1 || mask.height() != image.height() ||
      mask.width() != image.width()) {
    throw DimensionError("mask is " + std::to_string(mask.height()) + "x" +
                         std::to_string(mask.width()) + "x" +
                         std::to_string(mask.channels()) + ", image is " +
                         std::to_string(image.height()) + "x" +
                         std::to_string(image.width()));
  }
  if (!(fill >= 0 && fill <= 1)) throw DomainError("fill outside [0,1]");
  MaskedImage out{image, mask, image, fill};
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x) {
      const double m = mask.at(y, x);
      if (m != 0.0 && m != 1.0) throw DomainError("mask values must be 0 or 1");
      if (m == 1.0) {
        for (int c = 0; c < image.channels(); ++c) out.image.at(y, x, c) = fill;
      }
    }
  return out;
}

// --- configuration ------------------------------------------------------------

nlohmann::json ArchConfig::to_json() const {
  return {{"input_size", input_size},       {"hole_size", hole_size},
          {"latent_dim", latent_dim},       {"base_channels", base_channels},
          {"max_channels", max_channels},   {"disc_channels", disc_channels}};
}

ArchConfig ArchConfig::from_json(const nlohmann::json& j) {
  ArchConfig c;
  c.input_size = j.at("input_size").get<int>();
  c.hole_size = j.at("hole_size").get<int>();
  c.latent_dim = j.at("latent_dim").get<int>();
  c.base_channels = j.at("base_channels").get<int>();
  c.max_channels = j.at("max_channels").get<int>();
  c.disc_channels = j.at("disc_channels").get<int>();
  c.validate();
  return c;
}

std::string ArchConfig::hash() const {
  return sha256_hex(std::string_view(to_json().dump()));
}

namespace {

bool pow2(int v) { return v > 0 && (v & (v - 1)) == 0; }

}  // namespace

void ArchConfig::validate() const {
  if (!pow2(input_size) || !pow2(hole_size) || hole_size < 8 ||
      input_size < 2 * hole_size) {
    throw DomainError(
        "inpainter sizes must be powers of two with input >= 2 * hole >= 16");
  }
  if (latent_dim < 1 || base_channels < 1 || max_channels < base_channels ||
      disc_channels < 1) {
    throw DomainError("inpainter widths must be positive");
  }
}

nlohmann::json LossReport::to_json() const {
  return {{"step", step},   {"recon", recon}, {"adv_g", adv_g},
          {"adv_d", adv_d}, {"total", total}};
}

double recon_loss(const Image& pred, const Image& target,
                  const RegionMask& mask) {
  if (!pred.same_shape(target) || mask.channels() != 1 ||
      mask.height() != pred.height() || mask.width() != pred.width()) {
    throw DimensionError("recon_loss shape mismatch");
  }
  double sum = 0;
  std::size_t n = 0;
  for (int y = 0; y < pred.height(); ++y)
    for (int x = 0; x < pred.width(); ++x) {
      if (mask.at(y, x) <= 0.5) continue;
      for (int c = 0; c < pred.channels(); ++c) {
        sum += std::abs(pred.at(y, x, c) - target.at(y, x, c));
        ++n;
      }
    }
  return n ? sum / n : 0.0;
}

// --- model --------------------------------------------------------------------

namespace {

double logit(double p) {
  p = std::clamp(p, 0.01, 0.99);
  return std::log(p / (1 - p));
}

}  // namespace

InpaintModel::InpaintModel(const ArchConfig& config) : config_(config) {
  config_.validate();
  const int S = config_.input_size;
  // Channel width at a spatial resolution, shared by encoder and decoder.
  auto width = [&](int res) {
    return std::min(config_.base_channels * (S / 2) / res, config_.max_channels);
  };

  int in_c = 4, res = S, i = 0;
  while (res > 4) {
    res /= 2;
    const int out_c = width(res);
    encoder_.add<nn::Conv2d>("enc" + std::to_string(i++), in_c, out_c, 4, 2, 1);
    encoder_.add<nn::LeakyRelu>();
    in_c = out_c;
  }
  top_channels_ = in_c;
  const int feat = top_channels_ * 16;
  encoder_.add<nn::Linear>("enc_fc", feat, config_.latent_dim);

  bottleneck_.add<nn::LeakyRelu>();
  bottleneck_.add<nn::Linear>("bottleneck", config_.latent_dim, feat);
  bottleneck_.add<nn::LeakyRelu>();
  bottleneck_.add<nn::Reshape>(top_channels_, 4, 4);

  in_c = top_channels_;
  res = 4;
  i = 0;
  while (res < config_.hole_size) {
    res *= 2;
    const int out_c = width(res);
    decoder_.add<nn::Upsample2x>();
    decoder_.add<nn::Conv2d>("dec" + std::to_string(i++), in_c, out_c, 3, 1, 1);
    decoder_.add<nn::LeakyRelu>();
    in_c = out_c;
  }
  decoder_.add<nn::Conv2d>("dec_out", in_c, 3, 3, 1, 1);

  in_c = 3;
  res = config_.hole_size;
  i = 0;
  int dc = config_.disc_channels;
  while (res > 4) {
    res /= 2;
    disc_.add<nn::Conv2d>("disc" + std::to_string(i++), in_c, dc, 4, 2, 1);
    disc_.add<nn::LeakyRelu>();
    in_c = dc;
    dc = std::min(dc * 2, config_.max_channels);
  }
  disc_.add<nn::Linear>("disc_fc", in_c * 16, 1);

  encoder_.collect(gen_params_);
  bottleneck_.collect(gen_params_);
  decoder_.collect(gen_params_);
  disc_.collect(disc_params_);
}

void InpaintModel::init(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "inpaint-init"));
  encoder_.init(rng);
  bottleneck_.init(rng);
  decoder_.init(rng);
  disc_.init(rng);
}

nn::ParameterList InpaintModel::all_params() const {
  nn::ParameterList all = gen_params_;
  all.insert(all.end(), disc_params_.begin(), disc_params_.end());
  return all;
}

Rect InpaintModel::hole_rect() const {
  const int o = (config_.input_size - config_.hole_size) / 2;
  return {o, o, config_.hole_size, config_.hole_size};
}

void InpaintModel::check_input(const MaskedImage& masked) const {
  const int S = config_.input_size;
  if (masked.image.height() != S || masked.image.width() != S ||
      masked.image.channels() != 3) {
    throw DimensionError("inpainter expects " + std::to_string(S) + "x" +
                         std::to_string(S) + "x3 input, got " +
                         std::to_string(masked.image.height()) + "x" +
                         std::to_string(masked.image.width()) + "x" +
                         std::to_string(masked.image.channels()));
  }
  if (masked.mask.channels() != 1 || masked.mask.height() != S ||
      masked.mask.width() != S) {
    throw DimensionError("mask does not match the inpainter input");
  }
}

Tensor InpaintModel::context_means(const Tensor& images,
                                   const Tensor& masks) const {
  Tensor means({images.n(), 3, 1, 1});
  for (int n = 0; n < images.n(); ++n)
    for (int c = 0; c < 3; ++c) {
      double sum = 0;
      int count = 0;
      for (int y = 0; y < images.h(); ++y)
        for (int x = 0; x < images.w(); ++x)
          if (masks.at(n, 0, y, x) <= 0.5) {
            sum += images.at(n, c, y, x);
            ++count;
          }
      means.at(n, c, 0, 0) = count ? sum / count : fill_;
    }
  return means;
}

// Masked input with the per-channel context mean removed, plus the mask.
Tensor InpaintModel::encoder_input(const Tensor& images, const Tensor& masks,
                                   const Tensor& means) const {
  Tensor centered = images;
  for (int n = 0; n < images.n(); ++n)
    for (int c = 0; c < 3; ++c) {
      const double mean = means.at(n, c, 0, 0);
      for (int y = 0; y < images.h(); ++y)
        for (int x = 0; x < images.w(); ++x) centered.at(n, c, y, x) -= mean;
    }
  return nn::concat_channels({&centered, &masks});
}

Tensor InpaintModel::generate(const Tensor& images, const Tensor& masks,
                              GenTape* tape) const {
  const Tensor means = context_means(images, masks);
  const Tensor in = encoder_input(images, masks, means);
  // The decoder predicts a residual logit on top of the context mean.
  Tensor bias = means;
  for (double& v : bias.values()) v = logit(v);

  const Tensor code = encoder_.forward(in, tape ? &tape->enc : nullptr);
  const Tensor top = bottleneck_.forward(code, tape ? &tape->bott : nullptr);
  Tensor out = decoder_.forward(top, tape ? &tape->dec : nullptr);
  for (int n = 0; n < out.n(); ++n)
    for (int c = 0; c < 3; ++c) {
      const double b = bias.at(n, c, 0, 0);
      for (int y = 0; y < out.h(); ++y)
        for (int x = 0; x < out.w(); ++x) {
          double& v = out.at(n, c, y, x);
          v = 1.0 / (1.0 + std::exp(-(v + b)));
        }
    }
  if (tape) {
    tape->out = out;
    tape->bias = bias;
  }
  return out;
}

void InpaintModel::generate_backward(const Tensor& grad_out,
                                     const GenTape& tape) {
  Tensor g = grad_out;
  auto ys = tape.out.values();
  auto gs = g.values();
  for (std::size_t i = 0; i < gs.size(); ++i) gs[i] *= ys[i] * (1.0 - ys[i]);
  const Tensor g_top = decoder_.backward(g, tape.dec);
  const Tensor g_code = bottleneck_.backward(g_top, tape.bott);
  encoder_.backward(g_code, tape.enc);
}

Tensor InpaintModel::discriminate(const Tensor& regions,
                                  nn::Sequential::Tape* tape) const {
  return disc_.forward(regions, tape);
}

Tensor InpaintModel::discriminate_backward(const Tensor& grad,
                                           const nn::Sequential::Tape& tape) {
  return disc_.backward(grad, tape);
}

Tensor InpaintModel::encode(const MaskedImage& masked) const {
  check_input(masked);
  const Tensor x = nn::to_tensor(masked.image);
  const Tensor m = nn::to_tensor(masked.mask);
  const Tensor in = encoder_input(x, m, context_means(x, m));
  return encoder_.forward(in, nullptr);
}

Image InpaintModel::predict_hole(const MaskedImage& masked) const {
  check_input(masked);
  const Tensor out = generate(nn::to_tensor(masked.image),
                              nn::to_tensor(masked.mask), nullptr);
  for (double v : out.values()) {
    if (!std::isfinite(v)) throw NumericError("inpainter produced a non-finite value");
  }
  return nn::to_image(out);
}

Image InpaintModel::inpaint(const MaskedImage& masked) const {
  check_input(masked);
  const Rect hole = hole_rect();
  bool any = false;
  for (int y = 0; y < masked.mask.height(); ++y)
    for (int x = 0; x < masked.mask.width(); ++x)
      if (masked.mask.at(y, x) > 0.5) {
        if (!hole.contains(x, y)) {
          throw DimensionError("mask pixel (" + std::to_string(x) + "," +
                               std::to_string(y) +
                               ") lies outside the inpaint region");
        }
        any = true;
      }
  Image out = masked.image;
  if (!any) return out;
  const Image pred = predict_hole(masked);
  for (int y = hole.y; y < hole.bottom(); ++y)
    for (int x = hole.x; x < hole.right(); ++x) {
      if (masked.mask.at(y, x) <= 0.5) continue;
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = pred.at(y - hole.y, x - hole.x, c);
    }
  return out;
}

AdversarialLosses InpaintModel::adversarial_losses(const Image& pred_region,
                                                   const Image& real_region) const {
  if (!pred_region.same_shape(real_region)) {
    throw DimensionError("adversarial_losses: regions differ in shape");
  }
  const Tensor fake = discriminate(nn::to_tensor(pred_region), nullptr);
  const Tensor real = discriminate(nn::to_tensor(real_region), nullptr);
  AdversarialLosses out;
  out.adv_g = nn::bce_with_logits(fake, 1.0).value;
  out.adv_d = nn::bce_with_logits(real, 1.0).value +
              nn::bce_with_logits(fake, 0.0).value;
  return out;
}

// --- checkpoints --------------------------------------------------------------

CheckpointMeta make_meta(const InpaintModel& model, std::uint64_t seed,
                         long step) {
  CheckpointMeta meta;
  meta.kind = kCheckpointKind;
  meta.config_hash = model.config().hash();
  meta.seed = seed;
  meta.step = step;
  meta.extra = {{"arch", model.config().to_json()},
                {"input_size", model.config().input_size},
                {"latent_dim", model.config().latent_dim},
                {"fill", model.fill()}};
  return meta;
}

InpaintModel load_model(const std::filesystem::path& dir,
                        const std::optional<std::string>& expected_hash,
                        std::string* checkpoint_id) {
  const Checkpoint ck = load_checkpoint(dir, kCheckpointKind, expected_hash);
  const ArchConfig arch = ArchConfig::from_json(ck.meta.extra.at("arch"));
  if (arch.hash() != ck.meta.config_hash) {
    throw SchemaError("inpainter architecture does not match its config hash");
  }
  InpaintModel model(arch);
  model.set_fill(ck.meta.extra.value("fill", 0.5));
  ck.apply_to(model.all_params());
  if (checkpoint_id) *checkpoint_id = ck.id();
  return model;
}

// --- training -----------------------------------------------------------------

namespace {

bool finite_grads(const nn::ParameterList& params) {
  for (const nn::Parameter* p : params)
    for (double v : p->grad.values())
      if (!std::isfinite(v)) return false;
  return true;
}

Tensor crop_tensor(const Tensor& t, const Rect& r) {
  Tensor out({t.n(), t.c(), r.h, r.w});
  for (int n = 0; n < t.n(); ++n)
    for (int c = 0; c < t.c(); ++c)
      for (int y = 0; y < r.h; ++y)
        for (int x = 0; x < r.w; ++x)
          out.at(n, c, y, x) = t.at(n, c, r.y + y, r.x + x);
  return out;
}

}  // namespace

LossReport evaluate_loss(InpaintModel& model, const Batch& batch,
                         double lambda_rec, double lambda_adv, bool gen_grads,
                         bool disc_grads) {
  const bool taped = gen_grads || disc_grads;
  InpaintModel::GenTape gtape;
  const Tensor pred = model.generate(batch.images, batch.masks,
                                     taped ? &gtape : nullptr);
  const nn::LossValue rec = nn::masked_l1(pred, batch.real);
  LossReport rep;
  rep.recon = rec.value;
  Tensor grad = rec.grad;
  grad *= lambda_rec;

  if (lambda_adv != 0) {
    nn::Sequential::Tape treal, tfake;
    const Tensor lr = model.discriminate(batch.real, taped ? &treal : nullptr);
    const Tensor lf = model.discriminate(pred, taped ? &tfake : nullptr);
    const nn::LossValue d_real = nn::bce_with_logits(lr, 1.0);
    const nn::LossValue d_fake = nn::bce_with_logits(lf, 0.0);
    const nn::LossValue g_adv = nn::bce_with_logits(lf, 1.0);
    rep.adv_d = d_real.value + d_fake.value;
    rep.adv_g = g_adv.value;
    if (disc_grads) {
      // The discriminator sees the prediction as a constant.
      model.discriminate_backward(d_real.grad, treal);
      model.discriminate_backward(d_fake.grad, tfake);
    }
    if (gen_grads) {
      std::vector<Tensor> saved;
      for (const nn::Parameter* p : model.discriminator_params()) {
        saved.push_back(p->grad);
      }
      Tensor g_pred = model.discriminate_backward(g_adv.grad, tfake);
      for (std::size_t i = 0; i < saved.size(); ++i) {
        model.discriminator_params()[i]->grad = std::move(saved[i]);
      }
      g_pred *= lambda_adv;
      grad += g_pred;
    }
  }
  rep.total = lambda_rec * rep.recon + lambda_adv * rep.adv_g;
  if (gen_grads) model.generate_backward(grad, gtape);
  return rep;
}

namespace {

double cosine_scale(int step, int steps, double floor) {
  const double t = steps > 1 ? double(step) / (steps - 1) : 0.0;
  return floor + (1 - floor) * 0.5 * (1 + std::cos(std::numbers::pi * t));
}

}  // namespace

TrainResult train_inpainter(const std::vector<Image>& images,
                            const ArchConfig& arch, const TrainConfig& train,
                            std::uint64_t seed,
                            const std::filesystem::path& out_dir,
                            const ProgressFn& progress) {
  if (images.empty()) throw Error("inpainter training set is empty");
  if (train.steps < 1 || train.batch_size < 1) {
    throw DomainError("steps and batch_size must be positive");
  }
  if (!(train.lr_floor > 0 && train.lr_floor <= 1)) {
    throw DomainError("lr_floor must be in (0, 1]");
  }
  const int S = arch.input_size;
  std::vector<Image> data;
  double sum = 0;
  std::size_t count = 0;
  for (const Image& img : images) {
    if (img.channels() != 3) throw DimensionError("training images must be RGB");
    Image im = (img.height() == S && img.width() == S)
                   ? img
                   : resize_bilinear(img, S, S);
    for (double v : im.data()) sum += v;
    count += im.size();
    data.push_back(std::move(im));
  }

  InpaintModel model(arch);
  model.init(seed);
  const double fill = train.fill >= 0 ? train.fill : sum / count;
  model.set_fill(fill);

  const RegionMask mask = center_mask(S, S, arch.hole_size);
  std::vector<MaskedImage> masked;
  for (const Image& img : data) masked.push_back(mask_region(img, mask, fill));

  nn::Adam gen_opt(model.generator_params(), {.lr = train.lr});
  nn::Adam disc_opt(model.discriminator_params(), {.lr = train.disc_lr});
  const Rect hole = model.hole_rect();

  Rng batch_rng(derive_seed(seed, "inpaint-batches"));
  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  TrainResult result;
  auto save = [&](long step) {
    return save_checkpoint(out_dir, model.all_params(),
                           make_meta(model, seed, step));
  };
  const nn::ParameterList params = model.all_params();
  std::vector<Tensor> good = nn::snapshot(params);
  long good_step = 0;

  for (int step = 0; step < train.steps; ++step) {
    std::vector<const Image*> in_imgs, in_masks, reals;
    for (int b = 0; b < train.batch_size; ++b) {
      if (cursor == order.size()) {
        batch_rng.shuffle(order);
        cursor = 0;
      }
      const int idx = order[cursor++];
      in_imgs.push_back(&masked[idx].image);
      in_masks.push_back(&mask);
      reals.push_back(&data[idx]);
    }
    const Tensor x = nn::stack_images(in_imgs);
    const Tensor m = nn::stack_images(in_masks);
    const Tensor real = crop_tensor(nn::stack_images(reals), hole);

    gen_opt.zero_grad();
    disc_opt.zero_grad();
    LossReport rep;
    std::string failure;
    try {
      rep = evaluate_loss(model, {x, m, real}, train.lambda_rec,
                          train.lambda_adv, true, train.lambda_adv != 0);
      if (!std::isfinite(rep.total) || !std::isfinite(rep.adv_d)) {
        failure = "loss became non-finite";
      } else if (!finite_grads(model.generator_params()) ||
                 !finite_grads(model.discriminator_params())) {
        failure = "gradient became non-finite";
      }
    } catch (const NumericError& e) {
      failure = e.what();
    }
    rep.step = step;
    if (!failure.empty()) {
      // Roll back to the parameters of the last finite step.
      nn::restore(params, good);
      save(good_step);
      throw NumericError("inpainter training diverged at step " +
                         std::to_string(step) + " (" + failure +
                         "); saved step " + std::to_string(good_step));
    }
    good = nn::snapshot(params);
    good_step = step;
    const double decay = cosine_scale(step, train.steps, train.lr_floor);
    gen_opt.set_lr(train.lr * decay);
    disc_opt.set_lr(train.disc_lr * decay);
    gen_opt.step();
    if (train.lambda_adv != 0) disc_opt.step();

    result.history.push_back(rep);
    if (progress) progress(rep);
    if (train.checkpoint_every > 0 && (step + 1) % train.checkpoint_every == 0 &&
        step + 1 < train.steps) {
      save(step + 1);
    }
  }
  result.checkpoint = save(train.steps);
  return result;
}

Image restore_box(const InpaintModel& model, const Image& image,
                  const Rect& box) {
  if (image.channels() != 3) throw DimensionError("restore_box expects RGB");
  if (box.empty() || !box.inside(image.bounds())) {
    throw DimensionError("word box lies outside the image");
  }
  const ArchConfig& a = model.config();
  const double grow = double(a.input_size) / a.hole_size;
  const double cx = box.x + box.w / 2.0, cy = box.y + box.h / 2.0;
  const RectF context{cx - box.w * grow / 2, cy - box.h * grow / 2,
                      box.w * grow, box.h * grow};
  const Image crop = resample(image, context, a.input_size, a.input_size);
  const MaskedImage masked = mask_region(
      crop, center_mask(a.input_size, a.input_size, a.hole_size), model.fill());
  const Image hole = model.predict_hole(masked);
  const Image back = resize_bilinear(hole, box.h, box.w);
  Image out = image;
  paste(out, clamp01(back), box.x, box.y);
  return out;
}

std::vector<Image> load_image_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw IoError("not a directory: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") {
      files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<Image> images;
  for (const auto& f : files) {
    Image img = read_png(f);
    images.push_back(img.channels() == 3 ? std::move(img) : gray_to_rgb(img));
  }
  return images;
}

}  // namespace ldn::inpaint
