#pragma once

#include <vector>

#include "ldn/nn/layers.h"

namespace ldn::nn {

struct AdamOptions {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(ParameterList params, AdamOptions opt);

  // Applies one update from the accumulated gradients.
  void step();
  void zero_grad() { zero_grads(params_); }
  long steps() const { return t_; }
  double lr() const { return opt_.lr; }
  void set_lr(double lr) { opt_.lr = lr; }

 private:
  ParameterList params_;
  AdamOptions opt_;
  std::vector<Tensor> m_, v_;
  long t_ = 0;
};

}  // namespace ldn::nn
