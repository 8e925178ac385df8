#include "ldn/glyph_transfer.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "ldn/digest.h"
#include "ldn/error.h"
#include "ldn/nn/image_tensor.h"
#include "ldn/nn/loss.h"
#include "ldn/nn/optim.h"

namespace ldn::glyph {

using nn::Tensor;

int GlyphStack::observed_count() const {
  return static_cast<int>(std::count(observed.begin(), observed.end(), true));
}

GlyphStack assemble_input(const std::vector<forge::GlyphImage>& observed) {
  if (observed.empty()) throw DomainError("no observed glyphs given");
  const Image& first = observed.front().pixels;
  GlyphStack stack;
  stack.glyphs.assign(kNumSymbols,
                      Image(first.height(), first.width(), first.channels()));
  for (const auto& g : observed) {
    const int slot = char_index(g.ch);
    if (stack.observed[slot]) {
      throw DomainError("symbol '" + std::string(1, g.ch) + "' given twice");
    }
    if (!g.pixels.same_shape(first)) {
      throw DimensionError("observed glyphs differ in size");
    }
    stack.glyphs[slot] = g.pixels;
    stack.observed[slot] = true;
  }
  return stack;
}

GlyphStack partial_stack(const std::vector<Image>& all,
                         const std::array<bool, kNumSymbols>& observed) {
  if (all.size() != kNumSymbols) throw DimensionError("stack needs 62 glyphs");
  GlyphStack stack;
  stack.observed = observed;
  for (int i = 0; i < kNumSymbols; ++i) {
    stack.glyphs.push_back(observed[i] ? all[i]
                                       : Image(all[i].height(), all[i].width(),
                                               all[i].channels()));
  }
  return stack;
}

namespace {

bool pow2(int v) { return v > 0 && (v & (v - 1)) == 0; }

bool finite_grads(const nn::ParameterList& params) {
  for (const nn::Parameter* p : params)
    for (double v : p->grad.values())
      if (!std::isfinite(v)) return false;
  return true;
}

void copy_values(const nn::ParameterList& from, const nn::ParameterList& to) {
  if (from.size() != to.size()) throw SchemaError("parameter lists differ");
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (!(from[i]->value.shape() == to[i]->value.shape())) {
      throw SchemaError("parameter " + to[i]->name + " differs in shape");
    }
    to[i]->value = from[i]->value;
  }
}

}  // namespace

// --- GlyphNet -----------------------------------------------------------------

nlohmann::json GlyphNetConfig::to_json() const {
  return {{"glyph_size", glyph_size},
          {"base_channels", base_channels},
          {"depth", depth},
          {"latent_dim", latent_dim},
          {"threshold", threshold}};
}

GlyphNetConfig GlyphNetConfig::from_json(const nlohmann::json& j) {
  GlyphNetConfig c;
  c.glyph_size = j.at("glyph_size").get<int>();
  c.base_channels = j.at("base_channels").get<int>();
  c.depth = j.at("depth").get<int>();
  c.latent_dim = j.at("latent_dim").get<int>();
  c.threshold = j.at("threshold").get<double>();
  c.validate();
  return c;
}

std::string GlyphNetConfig::hash() const {
  return sha256_hex(std::string_view(to_json().dump()));
}

void GlyphNetConfig::validate() const {
  if (!pow2(glyph_size) || glyph_size < 8) {
    throw DomainError("glyph size must be a power of two >= 8");
  }
  if (depth < 1 || (glyph_size >> depth) < 2) {
    throw DomainError("GlyphNet depth leaves no spatial extent");
  }
  if (base_channels < 1 || latent_dim < 1) {
    throw DomainError("GlyphNet widths must be positive");
  }
}

GlyphNet::GlyphNet(const GlyphNetConfig& config) : config_(config) {
  config_.validate();
  const int C = config_.base_channels;
  auto width = [&](int level) { return C * std::min(1 << (level - 1), 2); };
  int in_c = kNumSymbols;
  for (int l = 1; l <= config_.depth; ++l) {
    net_.add<nn::Conv2d>("g_enc" + std::to_string(l), in_c, width(l), 4, 2, 1);
    net_.add<nn::LeakyRelu>();
    in_c = width(l);
  }
  // The dense code sees every slot at once, which is what lets a few
  // observed glyphs decide the shape of all the others.
  const int res = config_.glyph_size >> config_.depth;
  const int feat = in_c * res * res;
  net_.add<nn::Linear>("g_code", feat, config_.latent_dim);
  net_.add<nn::LeakyRelu>();
  net_.add<nn::Linear>("g_expand", config_.latent_dim, feat);
  net_.add<nn::LeakyRelu>();
  net_.add<nn::Reshape>(in_c, res, res);
  for (int l = config_.depth - 1; l >= 1; --l) {
    net_.add<nn::Upsample2x>();
    net_.add<nn::Conv2d>("g_dec" + std::to_string(l), in_c, width(l), 3, 1, 1);
    net_.add<nn::LeakyRelu>();
    in_c = width(l);
  }
  net_.add<nn::Upsample2x>();
  net_.add<nn::Conv2d>("g_out", in_c, kNumSymbols, 3, 1, 1);
  net_.add<nn::Sigmoid>();
  net_.collect(params_);
}

void GlyphNet::init(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "glyphnet-init"));
  net_.init(rng);
}

Tensor GlyphNet::forward(const Tensor& stack, nn::Sequential::Tape* tape) const {
  const int S = config_.glyph_size;
  if (stack.c() != kNumSymbols || stack.h() != S || stack.w() != S) {
    throw DimensionError("GlyphNet expects (n,62," + std::to_string(S) + "," +
                         std::to_string(S) + "), got " + stack.shape().str());
  }
  Tensor x = stack;
  for (double& v : x.values()) v = v > config_.threshold ? 1.0 : 0.0;
  return net_.forward(x, tape);
}

void GlyphNet::backward(const Tensor& grad, const nn::Sequential::Tape& tape) {
  net_.backward(grad, tape);
}

void GlyphNet::copy_from(const GlyphNet& other) {
  if (other.config_.hash() != config_.hash()) {
    throw SchemaError("GlyphNet configurations differ");
  }
  copy_values(other.params_, params_);
}

Tensor stack_tensor(const GlyphStack& stack) {
  if (stack.glyphs.size() != kNumSymbols) {
    throw DimensionError("glyph stack must have 62 slots");
  }
  const int S = stack.size();
  Tensor t({1, kNumSymbols, S, S});
  for (int i = 0; i < kNumSymbols; ++i) {
    if (!stack.observed[i]) continue;
    const Image& g = stack.glyphs[i];
    if (g.height() != S || g.width() != S || g.channels() != 1) {
      throw DimensionError("glyph stack slots must be one-channel and equal");
    }
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x) t.at(0, i, y, x) = g.at(y, x);
  }
  return t;
}

std::vector<Image> predict_glyph_shapes(const GlyphNet& net,
                                        const GlyphStack& input) {
  if (input.size() != net.config().glyph_size || input.channels() != 1) {
    throw DimensionError("glyph stack is " + std::to_string(input.size()) +
                         " px, GlyphNet expects " +
                         std::to_string(net.config().glyph_size));
  }
  const Tensor out = net.forward(stack_tensor(input), nullptr);
  std::vector<Image> masks;
  const int S = out.h();
  for (int i = 0; i < kNumSymbols; ++i) {
    Image m(S, S, 1);
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x) m.at(y, x) = out.at(0, i, y, x);
    masks.push_back(std::move(m));
  }
  return masks;
}

// --- OrnaNet ------------------------------------------------------------------

StyleFeatures style_features(const std::vector<Image>& colors,
                             const std::vector<Image>& shapes,
                             const std::array<bool, kNumSymbols>& observed,
                             double threshold) {
  // top, bottom, left, right, all
  std::array<std::array<double, 3>, 5> sum{};
  std::array<std::size_t, 5> count{};
  for (int i = 0; i < kNumSymbols; ++i) {
    if (!observed[i]) continue;
    const Image& s = shapes.at(i);
    const Image& c = colors.at(i);
    const Rect box = ink_bbox(s, threshold);
    if (box.empty()) continue;
    for (int y = box.y; y < box.bottom(); ++y) {
      const double ty = (y + 0.5 - box.y) / box.h;
      for (int x = box.x; x < box.right(); ++x) {
        const double v = s.at(y, x);
        if (v <= threshold) continue;
        const double tx = (x + 0.5 - box.x) / box.w;
        const bool region[5] = {ty < 1.0 / 3, ty >= 2.0 / 3, tx < 1.0 / 3,
                                tx >= 2.0 / 3, true};
        for (int r = 0; r < 5; ++r) {
          if (!region[r]) continue;
          for (int ch = 0; ch < 3; ++ch) {
            sum[r][ch] += std::clamp(c.at(y, x, ch) / v, 0.0, 1.0);
          }
          ++count[r];
        }
      }
    }
  }
  StyleFeatures f{};
  for (int r = 0; r < 4; ++r)
    for (int ch = 0; ch < 3; ++ch) {
      const int src = count[r] ? r : 4;
      f[r * 3 + ch] = count[src] ? sum[src][ch] / count[src] : 0.0;
    }
  return f;
}

nlohmann::json OrnaNetConfig::to_json() const {
  return {{"glyph_size", glyph_size}, {"hidden", hidden}, {"threshold", threshold}};
}

OrnaNetConfig OrnaNetConfig::from_json(const nlohmann::json& j) {
  OrnaNetConfig c;
  c.glyph_size = j.at("glyph_size").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.threshold = j.at("threshold").get<double>();
  c.validate();
  return c;
}

std::string OrnaNetConfig::hash() const {
  return sha256_hex(std::string_view(to_json().dump()));
}

void OrnaNetConfig::validate() const {
  if (glyph_size < 8) throw DomainError("glyph size must be at least 8");
  if (hidden < 1) throw DomainError("OrnaNet width must be positive");
}

OrnaNet::OrnaNet(const OrnaNetConfig& config) : config_(config) {
  config_.validate();
  net_.add<nn::Conv2d>("o_in", kInputChannels, config_.hidden, 1, 1, 0);
  net_.add<nn::LeakyRelu>();
  net_.add<nn::Conv2d>("o_mid", config_.hidden, config_.hidden, 1, 1, 0);
  net_.add<nn::LeakyRelu>();
  net_.add<nn::Conv2d>("o_out", config_.hidden, 3, 1, 1, 0);
  net_.collect(params_);
}

void OrnaNet::init(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "ornanet-init"));
  net_.init(rng);
}

void OrnaNet::copy_from(const OrnaNet& other) {
  if (other.config_.hash() != config_.hash()) {
    throw SchemaError("OrnaNet configurations differ");
  }
  copy_values(other.params_, params_);
}

Tensor OrnaNet::build_input(const Tensor& masks,
                            const std::vector<StyleFeatures>& features) const {
  const int k = masks.n(), H = masks.h(), W = masks.w();
  if (masks.c() != 1 || static_cast<int>(features.size()) != k) {
    throw DimensionError("OrnaNet needs (k,1,H,W) masks and k feature sets");
  }
  Tensor in({k, kInputChannels, H, W});
  for (int n = 0; n < k; ++n) {
    int y0 = H, y1 = -1, x0 = W, x1 = -1;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        if (masks.at(n, 0, y, x) > config_.threshold) {
          y0 = std::min(y0, y);
          y1 = std::max(y1, y);
          x0 = std::min(x0, x);
          x1 = std::max(x1, x);
        }
    if (y1 < 0) {
      y0 = 0, y1 = H - 1, x0 = 0, x1 = W - 1;
    }
    const double bh = y1 - y0 + 1, bw = x1 - x0 + 1;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        in.at(n, 0, y, x) = masks.at(n, 0, y, x);
        in.at(n, 1, y, x) = (y + 0.5 - y0) / bh;
        in.at(n, 2, y, x) = (x + 0.5 - x0) / bw;
        for (int f = 0; f < 12; ++f) in.at(n, 3 + f, y, x) = features[n][f];
      }
  }
  return in;
}

Tensor OrnaNet::forward(const Tensor& masks,
                        const std::vector<StyleFeatures>& features,
                        Tape* tape) const {
  const Tensor in = build_input(masks, features);
  Tensor color = net_.forward(in, tape ? &tape->net : nullptr);
  for (double& v : color.values()) v = 1.0 / (1.0 + std::exp(-v));
  Tensor out = color;
  for (int n = 0; n < out.n(); ++n)
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < out.h(); ++y)
        for (int x = 0; x < out.w(); ++x) {
          const double m = masks.at(n, 0, y, x);
          out.at(n, c, y, x) = m > config_.threshold ? m * color.at(n, c, y, x) : 0.0;
        }
  if (tape) {
    tape->masks = masks;
    tape->color = std::move(color);
  }
  return out;
}

Tensor OrnaNet::backward(const Tensor& grad, const Tape& tape) {
  const Tensor& m = tape.masks;
  const Tensor& color = tape.color;
  Tensor dz(color.shape());
  Tensor dm(m.shape());
  for (int n = 0; n < grad.n(); ++n)
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < grad.h(); ++y)
        for (int x = 0; x < grad.w(); ++x) {
          const double mv = m.at(n, 0, y, x);
          if (mv <= config_.threshold) continue;
          const double g = grad.at(n, c, y, x);
          const double col = color.at(n, c, y, x);
          dz.at(n, c, y, x) = g * mv * col * (1.0 - col);
          dm.at(n, 0, y, x) += g * col;
        }
  const Tensor din = net_.backward(dz, tape.net);
  for (int n = 0; n < dm.n(); ++n)
    for (int y = 0; y < dm.h(); ++y)
      for (int x = 0; x < dm.w(); ++x) dm.at(n, 0, y, x) += din.at(n, 0, y, x);
  return dm;
}

namespace {

Tensor masks_tensor(const std::vector<Image>& shapes,
                    const std::vector<int>& slots) {
  std::vector<const Image*> ptrs;
  for (int s : slots) ptrs.push_back(&shapes.at(s));
  return nn::stack_images(ptrs);
}

std::vector<int> observed_slots(const GlyphStack& stack) {
  std::vector<int> slots;
  for (int i = 0; i < kNumSymbols; ++i)
    if (stack.observed[i]) slots.push_back(i);
  return slots;
}

}  // namespace

Ornamented ornament(const OrnaNet& net, const std::vector<Image>& shapes,
                    const GlyphStack& exemplars,
                    const std::vector<Image>* exemplar_shapes) {
  if (shapes.size() != kNumSymbols) throw DimensionError("ornament needs 62 shapes");
  if (exemplars.observed_count() == 0) {
    throw DomainError("ornament needs at least one observed color exemplar");
  }
  if (exemplars.channels() != 3) throw DimensionError("exemplars must be RGB");
  const int S = net.config().glyph_size;
  for (const Image& s : shapes) {
    if (s.height() != S || s.width() != S || s.channels() != 1) {
      throw DimensionError("shape masks must be " + std::to_string(S) + "x" +
                           std::to_string(S) + "x1");
    }
  }
  const StyleFeatures f =
      style_features(exemplars.glyphs, exemplar_shapes ? *exemplar_shapes : shapes,
                     exemplars.observed, net.config().threshold);
  std::vector<int> all(kNumSymbols);
  std::iota(all.begin(), all.end(), 0);
  OrnaNet::Tape tape;
  const Tensor out = net.forward(masks_tensor(shapes, all),
                                 std::vector<StyleFeatures>(kNumSymbols, f), &tape);
  Ornamented result;
  for (int i = 0; i < kNumSymbols; ++i) {
    result.colors.push_back(clamp01(nn::to_image(out, i)));
    result.fields.push_back(nn::to_image(tape.color, i));
  }
  return result;
}

std::vector<double> adapt_ornanet(OrnaNet& net, const GlyphStack& exemplars,
                                  const std::vector<Image>& exemplar_shapes,
                                  int steps, double lr) {
  if (exemplars.observed_count() == 0) {
    throw DomainError("scene adaptation needs at least one exemplar");
  }
  const double thr = net.config().threshold;
  const StyleFeatures f =
      style_features(exemplars.glyphs, exemplar_shapes, exemplars.observed, thr);
  const std::vector<int> slots = observed_slots(exemplars);
  const Tensor masks = masks_tensor(exemplar_shapes, slots);
  const Tensor target = masks_tensor(exemplars.glyphs, slots);
  Tensor ink = masks;
  for (double& v : ink.values()) v = v > thr ? 1.0 : 0.0;
  const std::vector<StyleFeatures> feats(slots.size(), f);

  nn::Adam opt(net.params(), {.lr = lr});
  std::vector<double> history;
  for (int step = 0; step < steps; ++step) {
    opt.zero_grad();
    OrnaNet::Tape tape;
    const Tensor out = net.forward(masks, feats, &tape);
    const nn::LossValue loss = nn::masked_l1(out, target, &ink);
    if (!std::isfinite(loss.value)) {
      throw NumericError("scene adaptation diverged at step " +
                         std::to_string(step));
    }
    history.push_back(loss.value);
    net.backward(loss.grad, tape);
    opt.step();
  }
  return history;
}

// --- training -----------------------------------------------------------------

nlohmann::json LossReport::to_json() const {
  return {{"step", step},   {"shape", shape}, {"color", color},
          {"adv_g", adv_g}, {"adv_d", adv_d}, {"total", total}};
}

Observation draw_observation(Rng& rng, int n_fonts, int lo, int hi) {
  Observation o;
  o.font = rng.index(n_fonts);
  const int count = lo + rng.index(hi - lo + 1);
  std::vector<int> perm(kNumSymbols);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  for (int j = 0; j < count; ++j) o.observed[perm[j]] = true;
  return o;
}

PipelineLoss::PipelineLoss(GlyphNet& glyph, OrnaNet* orna,
                           const TrainConfig& train, std::uint64_t disc_seed)
    : glyph_(glyph), orna_(orna), train_(train) {
  int res = glyph_.config().glyph_size, in_c = 3, dc = train_.disc_channels, i = 0;
  while (res > 4) {
    res /= 2;
    disc_.add<nn::Conv2d>("gd" + std::to_string(i++), in_c, dc, 4, 2, 1);
    disc_.add<nn::LeakyRelu>();
    in_c = dc;
    dc = std::min(dc * 2, 4 * train_.disc_channels);
  }
  disc_.add<nn::Linear>("gd_fc", in_c * res * res, 1);
  disc_.collect(disc_params_);
  Rng rng(derive_seed(disc_seed, "glyph-disc-init"));
  disc_.init(rng);
}

nn::ParameterList PipelineLoss::disc_params() const { return disc_params_; }

LossReport PipelineLoss::evaluate(const Batch& batch, bool gen_grads,
                                  bool disc_grads) {
  const bool taped = gen_grads || disc_grads;
  const double thr = glyph_.config().threshold;
  LossReport rep;

  nn::Sequential::Tape gtape;
  const Tensor m = glyph_.forward(batch.input, taped ? &gtape : nullptr);
  const nn::LossValue shape = nn::masked_l1(m, batch.target_shape);
  rep.shape = shape.value;
  Tensor dm = shape.grad;
  dm *= train_.lambda_shape;

  const bool colored =
      orna_ && (train_.lambda_color != 0 || train_.lambda_adv != 0);
  if (colored) {
    const int n = m.n(), S = m.h();
    std::vector<std::pair<int, int>> index;  // (sample, slot)
    std::vector<StyleFeatures> feats;
    for (int b = 0; b < n; ++b)
      for (int s : batch.color_slots.at(b)) {
        index.emplace_back(b, s);
        feats.push_back(batch.features.at(b));
      }
    const int k = static_cast<int>(index.size());
    if (static_cast<int>(batch.color_targets.size()) != k) {
      throw DimensionError("color targets do not match the color slots");
    }
    Tensor slot_masks({k, 1, S, S}), ink({k, 1, S, S});
    for (int j = 0; j < k; ++j) {
      const auto [b, s] = index[j];
      for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x) {
          slot_masks.at(j, 0, y, x) = m.at(b, s, y, x);
          ink.at(j, 0, y, x) = batch.target_shape.at(b, s, y, x) > thr ? 1.0 : 0.0;
        }
    }
    std::vector<const Image*> targets;
    for (const Image& t : batch.color_targets) targets.push_back(&t);
    const Tensor target = nn::stack_images(targets);

    OrnaNet::Tape otape;
    const Tensor out = orna_->forward(slot_masks, feats, taped ? &otape : nullptr);
    const nn::LossValue color = nn::masked_l1(out, target, &ink);
    rep.color = color.value;
    Tensor dout = color.grad;
    dout *= train_.lambda_color;

    if (train_.lambda_adv != 0) {
      nn::Sequential::Tape treal, tfake;
      const Tensor lr = disc_.forward(target, taped ? &treal : nullptr);
      const Tensor lf = disc_.forward(out, taped ? &tfake : nullptr);
      const nn::LossValue d_real = nn::bce_with_logits(lr, 1.0);
      const nn::LossValue d_fake = nn::bce_with_logits(lf, 0.0);
      const nn::LossValue g_adv = nn::bce_with_logits(lf, 1.0);
      rep.adv_d = d_real.value + d_fake.value;
      rep.adv_g = g_adv.value;
      if (disc_grads) {
        disc_.backward(d_real.grad, treal);
        disc_.backward(d_fake.grad, tfake);
      }
      if (gen_grads) {
        std::vector<Tensor> keep;
        for (const nn::Parameter* p : disc_params_) keep.push_back(p->grad);
        Tensor g = disc_.backward(g_adv.grad, tfake);
        for (std::size_t i = 0; i < keep.size(); ++i) {
          disc_params_[i]->grad = std::move(keep[i]);
        }
        g *= train_.lambda_adv;
        dout += g;
      }
    }
    if (gen_grads) {
      const Tensor dslots = orna_->backward(dout, otape);
      for (int j = 0; j < k; ++j) {
        const auto [b, s] = index[j];
        for (int y = 0; y < S; ++y)
          for (int x = 0; x < S; ++x) dm.at(b, s, y, x) += dslots.at(j, 0, y, x);
      }
    }
  }
  rep.total = train_.lambda_shape * rep.shape + train_.lambda_color * rep.color +
              train_.lambda_adv * rep.adv_g;
  if (gen_grads) glyph_.backward(dm, gtape);
  return rep;
}

CheckpointMeta glyphnet_meta(const GlyphNet& net, const TrainConfig& train,
                             std::uint64_t seed, long step) {
  CheckpointMeta meta;
  meta.kind = kGlyphNetKind;
  meta.config_hash = net.config().hash();
  meta.seed = seed;
  meta.step = step;
  meta.extra = {{"arch", net.config().to_json()},
                {"char_set", std::string(kCharSet)},
                {"glyph_size", net.config().glyph_size},
                {"observed_count_range", {train.observed_min, train.observed_max}}};
  return meta;
}

CheckpointMeta ornanet_meta(const OrnaNet& net, std::uint64_t seed, long step) {
  CheckpointMeta meta;
  meta.kind = kOrnaNetKind;
  meta.config_hash = net.config().hash();
  meta.seed = seed;
  meta.step = step;
  meta.extra = {{"arch", net.config().to_json()},
                {"char_set", std::string(kCharSet)},
                {"glyph_size", net.config().glyph_size}};
  return meta;
}

namespace {

void check_charset(const Checkpoint& ck) {
  if (ck.meta.extra.value("char_set", std::string()) != kCharSet) {
    throw SchemaError("checkpoint " + ck.id() + " uses another character set");
  }
}

}  // namespace

GlyphNet load_glyphnet(const std::filesystem::path& dir,
                       const std::optional<std::string>& expected_hash,
                       std::string* checkpoint_id) {
  const Checkpoint ck = load_checkpoint(dir, kGlyphNetKind, expected_hash);
  check_charset(ck);
  GlyphNet net(GlyphNetConfig::from_json(ck.meta.extra.at("arch")));
  if (net.config().hash() != ck.meta.config_hash) {
    throw SchemaError("GlyphNet architecture does not match its config hash");
  }
  ck.apply_to(net.params());
  if (checkpoint_id) *checkpoint_id = ck.id();
  return net;
}

OrnaNet load_ornanet(const std::filesystem::path& dir,
                     const std::optional<std::string>& expected_hash,
                     std::string* checkpoint_id) {
  const Checkpoint ck = load_checkpoint(dir, kOrnaNetKind, expected_hash);
  check_charset(ck);
  OrnaNet net(OrnaNetConfig::from_json(ck.meta.extra.at("arch")));
  if (net.config().hash() != ck.meta.config_hash) {
    throw SchemaError("OrnaNet architecture does not match its config hash");
  }
  ck.apply_to(net.params());
  if (checkpoint_id) *checkpoint_id = ck.id();
  return net;
}

namespace {

void check_fonts(const std::vector<forge::FontGlyphs>& fonts, int size,
                 bool need_color) {
  if (fonts.empty()) throw Error("glyph training set is empty");
  for (const auto& f : fonts) {
    const auto& shapes = need_color ? f.shapes : f.glyphs;
    if (shapes.size() != kNumSymbols ||
        (need_color && f.glyphs.size() != kNumSymbols)) {
      throw DimensionError("font " + f.font_id + " lacks " +
                           (need_color ? "stored shapes" : "glyphs"));
    }
    for (const Image& g : shapes) {
      if (g.height() != size || g.width() != size || g.channels() != 1) {
        throw DimensionError("font " + f.font_id + " has glyphs of the wrong size");
      }
    }
  }
}

void check_train(const TrainConfig& t) {
  if (t.steps < 1 || t.batch_size < 1) {
    throw DomainError("steps and batch_size must be positive");
  }
  if (t.observed_min < 1 || t.observed_max < t.observed_min ||
      t.observed_max > kNumSymbols) {
    throw DomainError("observed count range must satisfy 1 <= min <= max <= 62");
  }
  if (t.color_slots < 1 || t.color_slots > kNumSymbols) {
    throw DomainError("color_slots must lie in [1, 62]");
  }
}

// Shapes of font `f`: the glyphs for grayscale sets, stored shapes for color.
const std::vector<Image>& font_shapes(const forge::FontGlyphs& f) {
  return f.shapes.empty() ? f.glyphs : f.shapes;
}

}  // namespace

PipelineLoss::Batch make_batch(const std::vector<forge::FontGlyphs>& fonts,
                               const std::vector<Observation>& obs,
                               const std::vector<std::vector<int>>& color_slots,
                               int size, double threshold, bool color) {
  PipelineLoss::Batch batch;
  const int n = static_cast<int>(obs.size());
  batch.input = Tensor({n, kNumSymbols, size, size});
  batch.target_shape = Tensor({n, kNumSymbols, size, size});
  for (int b = 0; b < n; ++b) {
    const auto& font = fonts[obs[b].font];
    const auto& shapes = font_shapes(font);
    for (int s = 0; s < kNumSymbols; ++s)
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          const double v = shapes[s].at(y, x);
          batch.target_shape.at(b, s, y, x) = v;
          if (obs[b].observed[s]) batch.input.at(b, s, y, x) = v;
        }
    if (color) {
      batch.color_slots.push_back(color_slots[b]);
      for (int s : color_slots[b]) batch.color_targets.push_back(font.glyphs[s]);
      batch.features.push_back(
          style_features(font.glyphs, shapes, obs[b].observed, threshold));
    } else {
      batch.color_slots.emplace_back();
      batch.features.push_back({});
    }
  }
  return batch;
}

PretrainResult pretrain_glyphnet(const std::vector<forge::FontGlyphs>& fonts,
                                 const GlyphNetConfig& arch,
                                 const TrainConfig& train, std::uint64_t seed,
                                 const std::filesystem::path& out_dir,
                                 const GlyphNet* init,
                                 const ProgressFn& progress) {
  check_train(train);
  check_fonts(fonts, arch.glyph_size, false);
  GlyphNet net(arch);
  if (init) {
    net.copy_from(*init);
  } else {
    net.init(seed);
  }
  TrainConfig shape_only = train;
  shape_only.lambda_color = 0;
  shape_only.lambda_adv = 0;
  PipelineLoss loss(net, nullptr, shape_only, seed);
  nn::Adam opt(net.params(), {.lr = train.lr});
  Rng rng(derive_seed(seed, "glyph-batches"));
  const int n_fonts = static_cast<int>(fonts.size());

  PretrainResult result;
  auto save = [&](long step) {
    return save_checkpoint(out_dir, net.params(),
                           glyphnet_meta(net, train, seed, step));
  };
  std::vector<nn::Tensor> good = nn::snapshot(net.params());
  long good_step = 0;
  for (int step = 0; step < train.steps; ++step) {
    std::vector<Observation> obs;
    for (int b = 0; b < train.batch_size; ++b) {
      obs.push_back(draw_observation(rng, n_fonts, train.observed_min,
                                     train.observed_max));
    }
    const auto batch =
        make_batch(fonts, obs, {}, arch.glyph_size, arch.threshold, false);
    opt.zero_grad();
    LossReport rep;
    bool finite = false;
    std::string failure = "non-finite loss or gradient";
    try {
      rep = loss.evaluate(batch, true, false);
      finite = std::isfinite(rep.total) && finite_grads(net.params());
    } catch (const NumericError& e) {
      failure = e.what();
    }
    rep.step = step;
    if (!finite) {
      nn::restore(net.params(), good);
      save(good_step);
      throw NumericError("GlyphNet pretraining diverged at step " +
                         std::to_string(step) + " (" + failure +
                         "); saved step " + std::to_string(good_step));
    }
    good = nn::snapshot(net.params());
    good_step = step;
    opt.step();
    result.history.push_back(rep);
    if (progress) progress(rep);
  }
  result.checkpoint = save(train.steps);
  return result;
}

FinetuneResult finetune_pipeline(const GlyphNet& glyph_init,
                                 const std::vector<forge::FontGlyphs>& fonts,
                                 const OrnaNetConfig& orna_arch,
                                 const TrainConfig& train, std::uint64_t seed,
                                 const std::filesystem::path& out_dir,
                                 const ProgressFn& progress) {
  check_train(train);
  const GlyphNetConfig& arch = glyph_init.config();
  if (orna_arch.glyph_size != arch.glyph_size) {
    throw SchemaError("OrnaNet and GlyphNet glyph sizes differ");
  }
  check_fonts(fonts, arch.glyph_size, true);
  GlyphNet glyph(arch);
  glyph.copy_from(glyph_init);
  OrnaNet orna(orna_arch);
  orna.init(seed);
  PipelineLoss loss(glyph, &orna, train, seed);

  nn::Adam glyph_opt(glyph.params(), {.lr = train.lr});
  nn::Adam orna_opt(orna.params(), {.lr = train.orna_lr});
  nn::Adam disc_opt(loss.disc_params(), {.lr = train.disc_lr});
  Rng rng(derive_seed(seed, "glyph-batches"));
  Rng slot_rng(derive_seed(seed, "color-slots"));
  const int n_fonts = static_cast<int>(fonts.size());

  FinetuneResult result;
  auto save = [&](long step) {
    result.glyph_checkpoint = save_checkpoint(
        out_dir / kGlyphNetKind, glyph.params(), glyphnet_meta(glyph, train, seed, step));
    result.orna_checkpoint = save_checkpoint(out_dir / kOrnaNetKind, orna.params(),
                                             ornanet_meta(orna, seed, step));
  };
  std::vector<nn::Tensor> good_glyph = nn::snapshot(glyph.params());
  std::vector<nn::Tensor> good_orna = nn::snapshot(orna.params());
  long good_step = 0;
  std::vector<int> perm(kNumSymbols);
  for (int step = 0; step < train.steps; ++step) {
    std::vector<Observation> obs;
    std::vector<std::vector<int>> slots;
    for (int b = 0; b < train.batch_size; ++b) {
      obs.push_back(draw_observation(rng, n_fonts, train.observed_min,
                                     train.observed_max));
      std::iota(perm.begin(), perm.end(), 0);
      slot_rng.shuffle(perm);
      slots.emplace_back(perm.begin(), perm.begin() + train.color_slots);
    }
    const auto batch =
        make_batch(fonts, obs, slots, arch.glyph_size, arch.threshold, true);
    glyph_opt.zero_grad();
    orna_opt.zero_grad();
    disc_opt.zero_grad();
    LossReport rep;
    bool finite = false;
    std::string failure = "non-finite loss or gradient";
    try {
      rep = loss.evaluate(batch, true, train.lambda_adv != 0);
      finite = std::isfinite(rep.total) && std::isfinite(rep.adv_d) &&
               finite_grads(glyph.params()) && finite_grads(orna.params());
    } catch (const NumericError& e) {
      failure = e.what();
    }
    rep.step = step;
    if (!finite) {
      nn::restore(glyph.params(), good_glyph);
      nn::restore(orna.params(), good_orna);
      save(good_step);
      throw NumericError("pipeline finetuning diverged at step " +
                         std::to_string(step) + " (" + failure +
                         "); saved step " + std::to_string(good_step));
    }
    good_glyph = nn::snapshot(glyph.params());
    good_orna = nn::snapshot(orna.params());
    good_step = step;
    glyph_opt.step();
    orna_opt.step();
    if (train.lambda_adv != 0) disc_opt.step();
    result.history.push_back(rep);
    if (progress) progress(rep);
  }
  save(train.steps);
  return result;
}

// --- scene glyph extraction ---------------------------------------------------

double otsu_threshold(const Image& gray) {
  std::array<double, 256> hist{};
  for (double v : gray.data()) {
    const int bin = std::clamp(static_cast<int>(v * 255.0 + 0.5), 0, 255);
    hist[bin] += 1;
  }
  const double total = static_cast<double>(gray.size());
  double sum_all = 0;
  for (int i = 0; i < 256; ++i) sum_all += i * hist[i];
  double w0 = 0, sum0 = 0, best = -1;
  int best_t = 127;
  for (int t = 0; t < 255; ++t) {
    w0 += hist[t];
    sum0 += t * hist[t];
    const double w1 = total - w0;
    if (w0 == 0 || w1 == 0) continue;
    const double m0 = sum0 / w0, m1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      best_t = t;
    }
  }
  return (best_t + 0.5) / 255.0;
}

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0;
  const auto mid = v.begin() + v.size() / 2;
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

// Pixels of the one-pixel ring around `box`, clipped to the image; the box
// border itself when the ring is empty.
std::vector<std::pair<int, int>> ring(const Image& img, const Rect& box) {
  std::vector<std::pair<int, int>> pts;
  for (int y = box.y - 1; y <= box.bottom(); ++y)
    for (int x = box.x - 1; x <= box.right(); ++x) {
      if (box.contains(x, y) || !img.bounds().contains(x, y)) continue;
      pts.emplace_back(y, x);
    }
  if (pts.empty()) {
    for (int y = box.y; y < box.bottom(); ++y)
      for (int x = box.x; x < box.right(); ++x)
        if (y == box.y || x == box.x || y == box.bottom() - 1 || x == box.right() - 1)
          pts.emplace_back(y, x);
  }
  return pts;
}

}  // namespace

ExtractedGlyphs extract_source_glyphs(const Image& image,
                                      const std::vector<Rect>& char_boxes,
                                      const std::string& text, int glyph_size,
                                      const forge::ForgeOptions& opt) {
  validate_text(text);
  if (char_boxes.size() != text.size()) {
    throw DimensionError(std::to_string(char_boxes.size()) + " boxes for " +
                         std::to_string(text.size()) + " characters");
  }
  if (image.channels() != 3) throw DimensionError("scene image must be RGB");
  for (const Rect& b : char_boxes) {
    if (b.empty()) throw DomainError("character box is empty");
    if (!b.inside(image.bounds())) {
      throw DimensionError("character box (" + std::to_string(b.x) + "," +
                           std::to_string(b.y) + "," + std::to_string(b.w) + "," +
                           std::to_string(b.h) + ") lies outside the image");
    }
  }
  const Image gray = to_grayscale(image);
  ExtractedGlyphs out;
  std::array<std::vector<double>, 3> bg_samples;
  std::set<char> seen;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const Rect& box = char_boxes[i];
    std::vector<double> ring_gray;
    for (auto [y, x] : ring(image, box)) {
      ring_gray.push_back(gray.at(y, x));
      for (int c = 0; c < 3; ++c) bg_samples[c].push_back(image.at(y, x, c));
    }
    if (!seen.insert(text[i]).second) continue;

    const Image g = crop(gray, box);
    const double bg = median(ring_gray);
    const double t = otsu_threshold(g);
    const bool ink_high = bg <= t;
    double ink_sum = 0;
    int ink_n = 0;
    for (double v : g.data()) {
      if ((v > t) == ink_high) {
        ink_sum += v;
        ++ink_n;
      }
    }
    if (ink_n == 0) {
      throw DomainError("no ink found in the box of '" + std::string(1, text[i]) + "'");
    }
    const double level = ink_sum / ink_n;
    // Ink-high soft coverage relative to the background.
    Image soft(g.height(), g.width(), 1);
    for (int y = 0; y < g.height(); ++y)
      for (int x = 0; x < g.width(); ++x) {
        const double v = g.at(y, x);
        soft.at(y, x) = std::abs(level - bg) > 1e-9
                            ? std::clamp((v - bg) / (level - bg), 0.0, 1.0)
                            : ((v > t) == ink_high ? 1.0 : 0.0);
      }
    const Rect ink = ink_bbox(soft, 0.5);
    if (ink.empty()) {
      throw DomainError("no ink found in the box of '" + std::string(1, text[i]) + "'");
    }
    Image cell = fit_to_cell(soft, ink, glyph_size, opt.margin, opt.supersample);
    const double t2 = otsu_threshold(cell);
    for (double& v : cell.data()) v = v > t2 ? 1.0 : 0.0;

    const Rect abs_ink{box.x + ink.x, box.y + ink.y, ink.w, ink.h};
    Image color = fit_to_cell(image, abs_ink, glyph_size, opt.margin, opt.supersample);
    for (int y = 0; y < glyph_size; ++y)
      for (int x = 0; x < glyph_size; ++x)
        for (int c = 0; c < 3; ++c) color.at(y, x, c) *= cell.at(y, x);

    out.shapes.push_back({std::move(cell), text[i], ""});
    out.colors.push_back({clamp01(std::move(color)), text[i], ""});
  }
  for (int c = 0; c < 3; ++c) out.background[c] = median(bg_samples[c]);
  return out;
}

}  // namespace ldn::glyph
