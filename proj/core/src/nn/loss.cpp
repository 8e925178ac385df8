#include "ldn/nn/loss.h"

#include <cmath>

#include "ldn/error.h"

namespace ldn::nn {

double softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

LossValue masked_l1(const Tensor& pred, const Tensor& target,
                    const Tensor* mask) {
  check_same_shape(pred, target, "masked_l1");
  const bool broadcast = mask && mask->c() == 1 && pred.c() != 1;
  if (mask) {
    const Shape ms = mask->shape();
    const Shape ps = pred.shape();
    const bool ok = ms == ps || (broadcast && ms.n == ps.n && ms.h == ps.h &&
                                 ms.w == ps.w);
    if (!ok) {
      throw DimensionError("masked_l1 mask " + ms.str() + " vs " + ps.str());
    }
  }
  LossValue out{0, Tensor(pred.shape())};
  auto selected = [&](int n, int c, int y, int x) {
    if (!mask) return true;
    return mask->at(n, broadcast ? 0 : c, y, x) > 0.5;
  };
  std::size_t count = 0;
  double sum = 0;
  const Shape s = pred.shape();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          if (!selected(n, c, y, x)) continue;
          const double d = pred.at(n, c, y, x) - target.at(n, c, y, x);
          sum += std::abs(d);
          out.grad.at(n, c, y, x) = (d > 0) - (d < 0);
          ++count;
        }
  if (count == 0) return out;
  out.value = sum / count;
  out.grad *= 1.0 / count;
  return out;
}

LossValue bce_with_logits(const Tensor& logits, double label) {
  LossValue out{0, Tensor(logits.shape())};
  const double inv = 1.0 / logits.size();
  auto ls = logits.values();
  auto gs = out.grad.values();
  for (std::size_t i = 0; i < ls.size(); ++i) {
    const double l = ls[i];
    if (!std::isfinite(l)) throw NumericError("non-finite discriminator logit");
    const double p = 1.0 / (1.0 + std::exp(-l));
    out.value += label * softplus(-l) + (1 - label) * softplus(l);
    gs[i] = (p - label) * inv;
  }
  out.value *= inv;
  return out;
}

}  // namespace ldn::nn
