#pragma once

#include "ldn/nn/tensor.h"

namespace ldn::nn {

struct LossValue {
  double value = 0;
  Tensor grad;  // d value / d input
};

// Mean absolute difference over the selected elements. `mask` is either
// null (all elements), the same shape as `pred`, or (n, 1, h, w) broadcast
// over channels; an element is selected when its mask value exceeds 0.5.
// An empty selection yields value 0 and a zero gradient.
LossValue masked_l1(const Tensor& pred, const Tensor& target,
                    const Tensor* mask = nullptr);

// Mean binary cross-entropy of sigmoid(logits) against a constant label,
// computed stably as softplus(-l) for label 1 and softplus(l) for label 0.
LossValue bce_with_logits(const Tensor& logits, double label);

double softplus(double x);

}  // namespace ldn::nn
