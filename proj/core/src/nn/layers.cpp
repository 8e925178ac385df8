#include "ldn/nn/layers.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "ldn/error.h"

namespace ldn::nn {

namespace {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

const Tensor& saved(const Cache& cache, std::size_t i) {
  if (cache.saved.size() <= i) {
    throw Error("backward() called without a forward cache");
  }
  return cache.saved[i];
}

void he_normal(Tensor& t, int fan_in, Rng& rng) {
  const double gain = std::sqrt(2.0 / (1.0 + 0.2 * 0.2));
  const double std = gain / std::sqrt(static_cast<double>(fan_in));
  for (double& v : t.values()) v = std * rng.normal();
}

struct ConvGeom {
  int c, h, w, k, s, p, ho, wo;
};

void im2col(const double* x, const ConvGeom& g, double* col) {
  const int plane = g.ho * g.wo;
  for (int c = 0; c < g.c; ++c)
    for (int ki = 0; ki < g.k; ++ki)
      for (int kj = 0; kj < g.k; ++kj) {
        double* row = col + static_cast<std::size_t>((c * g.k + ki) * g.k + kj) * plane;
        const double* src = x + static_cast<std::size_t>(c) * g.h * g.w;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.s - g.p + ki;
          double* dst = row + oy * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.wo, 0.0);
            continue;
          }
          const double* line = src + iy * g.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.s - g.p + kj;
            dst[ox] = (ix >= 0 && ix < g.w) ? line[ix] : 0.0;
          }
        }
      }
}

void col2im(const double* col, const ConvGeom& g, double* x) {
  const int plane = g.ho * g.wo;
  for (int c = 0; c < g.c; ++c)
    for (int ki = 0; ki < g.k; ++ki)
      for (int kj = 0; kj < g.k; ++kj) {
        const double* row =
            col + static_cast<std::size_t>((c * g.k + ki) * g.k + kj) * plane;
        double* dst = x + static_cast<std::size_t>(c) * g.h * g.w;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.s - g.p + ki;
          if (iy < 0 || iy >= g.h) continue;
          double* line = dst + iy * g.w;
          const double* src = row + oy * g.wo;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.s - g.p + kj;
            if (ix >= 0 && ix < g.w) line[ix] += src[ox];
          }
        }
      }
}

}  // namespace

void zero_grads(const ParameterList& params) {
  for (Parameter* p : params) p->grad.fill(0.0);
}

std::size_t count_parameters(const ParameterList& params) {
  std::size_t n = 0;
  for (const Parameter* p : params) n += p->value.size();
  return n;
}

bool all_finite(const Tensor& t) {
  for (double v : t.values())
    if (!std::isfinite(v)) return false;
  return true;
}

std::vector<Tensor> snapshot(const ParameterList& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const Parameter* p : params) out.push_back(p->value);
  return out;
}

void restore(const ParameterList& params, const std::vector<Tensor>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

// --- Conv2d -----------------------------------------------------------------

Conv2d::Conv2d(std::string name, int in_channels, int out_channels, int kernel,
               int stride, int padding)
    : in_(in_channels),
      out_(out_channels),
      kernel_(kernel),
      stride_(stride),
      padding_(padding) {
  const Shape ws{out_, in_ * kernel_ * kernel_, 1, 1};
  weight_ = {name + ".weight", Tensor(ws), Tensor(ws)};
  bias_ = {name + ".bias", Tensor({out_, 1, 1, 1}), Tensor({out_, 1, 1, 1})};
}

Tensor Conv2d::forward(const Tensor& x, Cache* cache) const {
  if (x.c() != in_) {
    throw DimensionError(weight_.name + ": expected " + std::to_string(in_) +
                         " input channels, got " + x.shape().str());
  }
  const ConvGeom g{in_, x.h(), x.w(), kernel_, stride_, padding_,
                   out_size(x.h()), out_size(x.w())};
  if (g.ho <= 0 || g.wo <= 0) {
    throw DimensionError(weight_.name + ": input " + x.shape().str() +
                         " too small");
  }
  const int K = in_ * kernel_ * kernel_;
  const int P = g.ho * g.wo;
  Tensor y({x.n(), out_, g.ho, g.wo});
  std::vector<double> col(static_cast<std::size_t>(K) * P);
  CMapR W(weight_.value.data(), out_, K);
  Eigen::Map<const Eigen::VectorXd> b(bias_.value.data(), out_);
  for (int n = 0; n < x.n(); ++n) {
    im2col(x.sample(n), g, col.data());
    MapR Y(y.sample(n), out_, P);
    Y.noalias() = W * CMapR(col.data(), K, P);
    Y.colwise() += b;
  }
  if (cache) cache->saved = {x};
  return y;
}

Tensor Conv2d::backward(const Tensor& grad, const Cache& cache) {
  const Tensor& x = saved(cache, 0);
  const ConvGeom g{in_, x.h(), x.w(), kernel_, stride_, padding_,
                   out_size(x.h()), out_size(x.w())};
  const int K = in_ * kernel_ * kernel_;
  const int P = g.ho * g.wo;
  Tensor dx(x.shape());
  std::vector<double> col(static_cast<std::size_t>(K) * P);
  std::vector<double> dcol(static_cast<std::size_t>(K) * P);
  CMapR W(weight_.value.data(), out_, K);
  MapR dW(weight_.grad.data(), out_, K);
  for (int n = 0; n < x.n(); ++n) {
    im2col(x.sample(n), g, col.data());
    CMapR G(grad.sample(n), out_, P);
    dW.noalias() += G * CMapR(col.data(), K, P).transpose();
    // Plain loops: Eigen's vectorized sums depend on the buffer's alignment.
    for (int o = 0; o < out_; ++o) {
      const double* row = grad.sample(n) + static_cast<std::size_t>(o) * P;
      double sum = 0;
      for (int p = 0; p < P; ++p) sum += row[p];
      bias_.grad.data()[o] += sum;
    }
    MapR(dcol.data(), K, P).noalias() = W.transpose() * G;
    col2im(dcol.data(), g, dx.sample(n));
  }
  return dx;
}

void Conv2d::collect(ParameterList& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

void Conv2d::init(Rng& rng) {
  he_normal(weight_.value, in_ * kernel_ * kernel_, rng);
  bias_.value.fill(0.0);
}

// --- Linear -----------------------------------------------------------------

Linear::Linear(std::string name, int in_features, int out_features)
    : in_(in_features), out_(out_features) {
  const Shape ws{out_, in_, 1, 1};
  weight_ = {name + ".weight", Tensor(ws), Tensor(ws)};
  bias_ = {name + ".bias", Tensor({out_, 1, 1, 1}), Tensor({out_, 1, 1, 1})};
}

Tensor Linear::forward(const Tensor& x, Cache* cache) const {
  if (static_cast<int>(x.shape().per_sample()) != in_) {
    throw DimensionError(weight_.name + ": expected " + std::to_string(in_) +
                         " features, got " + x.shape().str());
  }
  Tensor y({x.n(), out_, 1, 1});
  CMapR X(x.data(), x.n(), in_);
  CMapR W(weight_.value.data(), out_, in_);
  MapR Y(y.data(), x.n(), out_);
  Y.noalias() = X * W.transpose();
  Y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias_.value.data(), out_);
  if (cache) cache->saved = {x};
  return y;
}

Tensor Linear::backward(const Tensor& grad, const Cache& cache) {
  const Tensor& x = saved(cache, 0);
  CMapR X(x.data(), x.n(), in_);
  CMapR G(grad.data(), x.n(), out_);
  MapR(weight_.grad.data(), out_, in_).noalias() += G.transpose() * X;
  for (int i = 0; i < x.n(); ++i)
    for (int o = 0; o < out_; ++o) bias_.grad.data()[o] += grad.data()[i * out_ + o];
  Tensor dx(x.shape());
  MapR(dx.data(), x.n(), in_).noalias() =
      G * CMapR(weight_.value.data(), out_, in_);
  return dx;
}

void Linear::collect(ParameterList& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

void Linear::init(Rng& rng) {
  he_normal(weight_.value, in_, rng);
  bias_.value.fill(0.0);
}

// --- activations and reshapes -----------------------------------------------

Tensor LeakyRelu::forward(const Tensor& x, Cache* cache) const {
  Tensor y = x;
  for (double& v : y.values()) v = v > 0 ? v : slope_ * v;
  if (cache) cache->saved = {x};
  return y;
}

Tensor LeakyRelu::backward(const Tensor& grad, const Cache& cache) {
  const Tensor& x = saved(cache, 0);
  Tensor dx = grad;
  auto xs = x.values();
  auto ds = dx.values();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (xs[i] <= 0) ds[i] *= slope_;
  }
  return dx;
}

Tensor Sigmoid::forward(const Tensor& x, Cache* cache) const {
  Tensor y = x;
  for (double& v : y.values()) v = 1.0 / (1.0 + std::exp(-v));
  if (cache) cache->saved = {y};
  return y;
}

Tensor Sigmoid::backward(const Tensor& grad, const Cache& cache) {
  const Tensor& y = saved(cache, 0);
  Tensor dx = grad;
  auto ys = y.values();
  auto ds = dx.values();
  for (std::size_t i = 0; i < ds.size(); ++i) ds[i] *= ys[i] * (1.0 - ys[i]);
  return dx;
}

Tensor Reshape::forward(const Tensor& x, Cache* cache) const {
  if (cache) cache->input_shape = x.shape();
  return x.reshaped({x.n(), c_, h_, w_});
}

Tensor Reshape::backward(const Tensor& grad, const Cache& cache) {
  return grad.reshaped(cache.input_shape);
}

namespace {

struct Taps {
  std::vector<int> i0, i1;
  std::vector<double> w1;
};

Taps upsample_taps(int in) {
  Taps t;
  const int out = 2 * in;
  t.i0.resize(out);
  t.i1.resize(out);
  t.w1.resize(out);
  for (int o = 0; o < out; ++o) {
    double s = (o + 0.5) / 2.0 - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    const int a = static_cast<int>(std::floor(s));
    t.i0[o] = a;
    t.i1[o] = std::min(a + 1, in - 1);
    t.w1[o] = s - a;
  }
  return t;
}

}  // namespace

Tensor Upsample2x::forward(const Tensor& x, Cache* cache) const {
  const Taps ty = upsample_taps(x.h()), tx = upsample_taps(x.w());
  Tensor y({x.n(), x.c(), 2 * x.h(), 2 * x.w()});
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int oy = 0; oy < y.h(); ++oy) {
        const int a0 = ty.i0[oy], a1 = ty.i1[oy];
        const double wa = ty.w1[oy];
        for (int ox = 0; ox < y.w(); ++ox) {
          const int b0 = tx.i0[ox], b1 = tx.i1[ox];
          const double wb = tx.w1[ox];
          const double top = x.at(n, c, a0, b0) * (1 - wb) + x.at(n, c, a0, b1) * wb;
          const double bot = x.at(n, c, a1, b0) * (1 - wb) + x.at(n, c, a1, b1) * wb;
          y.at(n, c, oy, ox) = top * (1 - wa) + bot * wa;
        }
      }
  if (cache) cache->input_shape = x.shape();
  return y;
}

Tensor Upsample2x::backward(const Tensor& grad, const Cache& cache) {
  const Shape in = cache.input_shape;
  const Taps ty = upsample_taps(in.h), tx = upsample_taps(in.w);
  Tensor dx(in);
  for (int n = 0; n < in.n; ++n)
    for (int c = 0; c < in.c; ++c)
      for (int oy = 0; oy < grad.h(); ++oy) {
        const int a0 = ty.i0[oy], a1 = ty.i1[oy];
        const double wa = ty.w1[oy];
        for (int ox = 0; ox < grad.w(); ++ox) {
          const int b0 = tx.i0[ox], b1 = tx.i1[ox];
          const double wb = tx.w1[ox];
          const double g = grad.at(n, c, oy, ox);
          dx.at(n, c, a0, b0) += g * (1 - wa) * (1 - wb);
          dx.at(n, c, a0, b1) += g * (1 - wa) * wb;
          dx.at(n, c, a1, b0) += g * wa * (1 - wb);
          dx.at(n, c, a1, b1) += g * wa * wb;
        }
      }
  return dx;
}

Tensor AvgPool::forward(const Tensor& x, Cache* cache) const {
  const int f = factor_;
  if (x.h() % f || x.w() % f) {
    throw DimensionError("AvgPool factor must divide " + x.shape().str());
  }
  Tensor y({x.n(), x.c(), x.h() / f, x.w() / f});
  const double norm = 1.0 / (f * f);
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int y0 = 0; y0 < y.h(); ++y0)
        for (int x0 = 0; x0 < y.w(); ++x0) {
          double s = 0;
          for (int dy = 0; dy < f; ++dy)
            for (int dx = 0; dx < f; ++dx) s += x.at(n, c, y0 * f + dy, x0 * f + dx);
          y.at(n, c, y0, x0) = s * norm;
        }
  if (cache) cache->input_shape = x.shape();
  return y;
}

Tensor AvgPool::backward(const Tensor& grad, const Cache& cache) {
  const Shape in = cache.input_shape;
  const int f = factor_;
  const double norm = 1.0 / (f * f);
  Tensor dx(in);
  for (int n = 0; n < in.n; ++n)
    for (int c = 0; c < in.c; ++c)
      for (int y = 0; y < in.h; ++y)
        for (int x = 0; x < in.w; ++x)
          dx.at(n, c, y, x) = grad.at(n, c, y / f, x / f) * norm;
  return dx;
}

// --- Sequential -------------------------------------------------------------

Tensor Sequential::forward(const Tensor& x, Tape* tape) const {
  if (tape) tape->assign(layers_.size(), Cache{});
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i]->forward(h, tape ? &(*tape)[i] : nullptr);
  }
  return h;
}

Tensor Sequential::backward(const Tensor& grad, const Tape& tape) {
  if (tape.size() != layers_.size()) {
    throw Error("Sequential::backward tape does not match the layers");
  }
  Tensor g = grad;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    g = layers_[i]->backward(g, tape[i]);
  }
  return g;
}

void Sequential::collect(ParameterList& out) {
  for (auto& l : layers_) l->collect(out);
}

void Sequential::init(Rng& rng) {
  for (auto& l : layers_) l->init(rng);
}

}  // namespace ldn::nn
