#include "ldn/nn/optim.h"

#include <cmath>

namespace ldn::nn {

Adam::Adam(ParameterList params, AdamOptions opt)
    : params_(std::move(params)), opt_(opt) {
  for (const Parameter* p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(opt_.beta1, double(t_));
  const double c2 = 1.0 - std::pow(opt_.beta2, double(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto w = params_[i]->value.values();
    auto g = params_[i]->grad.values();
    auto m = m_[i].values();
    auto v = v_[i].values();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = opt_.beta1 * m[k] + (1 - opt_.beta1) * g[k];
      v[k] = opt_.beta2 * v[k] + (1 - opt_.beta2) * g[k] * g[k];
      w[k] -= opt_.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + opt_.eps);
    }
  }
}

}  // namespace ldn::nn
