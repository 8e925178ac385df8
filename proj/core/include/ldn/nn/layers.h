#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ldn/nn/tensor.h"
#include "ldn/random.h"

namespace ldn::nn {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

using ParameterList = std::vector<Parameter*>;

void zero_grads(const ParameterList& params);
std::size_t count_parameters(const ParameterList& params);
bool all_finite(const Tensor& t);

// Copies of the parameter values, for rolling back a failed update.
std::vector<Tensor> snapshot(const ParameterList& params);
void restore(const ParameterList& params, const std::vector<Tensor>& values);

// Activations a layer keeps from forward() for its backward().
struct Cache {
  std::vector<Tensor> saved;
  Shape input_shape;
};

// forward() is const so that inference can run concurrently over shared
// parameters; training passes a Cache and later calls backward(), which
// accumulates parameter gradients and returns the input gradient.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, Cache* cache) const = 0;
  virtual Tensor backward(const Tensor& grad, const Cache& cache) = 0;
  virtual void collect(ParameterList& /*out*/) {}
  virtual void init(Rng& /*rng*/) {}
};

class Conv2d : public Layer {
 public:
  Conv2d(std::string name, int in_channels, int out_channels, int kernel,
         int stride, int padding);

  Tensor forward(const Tensor& x, Cache* cache) const override;
  Tensor backward(const Tensor& grad, const Cache& cache) override;
  void collect(ParameterList& out) override;
  // He-normal weights for a leaky-ReLU (slope 0.2) successor, zero bias.
  void init(Rng& rng) override;

  int out_size(int in) const { return (in + 2 * padding_ - kernel_) / stride_ + 1; }

 private:
  int in_, out_, kernel_, stride_, padding_;
  Parameter weight_;  // (out, in*k*k, 1, 1)
  Parameter bias_;    // (out, 1, 1, 1)
};

// Fully connected map over the flattened sample; output (n, out, 1, 1).
class Linear : public Layer {
 public:
  Linear(std::string name, int in_features, int out_features);

  Tensor forward(const Tensor& x, Cache* cache) const override;
  Tensor backward(const Tensor& grad, const Cache& cache) override;
  void collect(ParameterList& out) override;
  void init(Rng& rng) override;

 private:
  int in_, out_;
  Parameter weight_;  // (out, in, 1, 1)
  Parameter bias_;
};

class LeakyRelu : public Layer {
 public:
  explicit LeakyRelu(double slope = 0.2) : slope_(slope) {}
  Tensor forward(const Tensor& x, Cache* cache) const override;
  Tensor backward(const Tensor& grad, const Cache& cache) override;

 private:
  double slope_;
};

class Sigmoid : public Layer {
 public:
  Tensor forward(const Tensor& x, Cache* cache) const override;
  Tensor backward(const Tensor& grad, const Cache& cache) override;
};

// Per-sample reshape to (c, h, w).
class Reshape : public Layer {
 public:
  Reshape(int c, int h, int w) : c_(c), h_(h), w_(w) {}
  Tensor forward(const Tensor& x, Cache* cache) const override;
  Tensor backward(const Tensor& grad, const Cache& cache) override;

 private:
  int c_, h_, w_;
};

// Bilinear 2x upsampling with half-pixel centers, edge clamped.
class Upsample2x : public Layer {
 public:
  Tensor forward(const Tensor& x, Cache* cache) const override;
  Tensor backward(const Tensor& grad, const Cache& cache) override;
};

// Non-overlapping average pooling by `factor`.
class AvgPool : public Layer {
 public:
  explicit AvgPool(int factor) : factor_(factor) {}
  Tensor forward(const Tensor& x, Cache* cache) const override;
  Tensor backward(const Tensor& grad, const Cache& cache) override;

 private:
  int factor_;
};

class Sequential {
 public:
  using Tape = std::vector<Cache>;

  Sequential() = default;
  Sequential(Sequential&&) = default;
  Sequential& operator=(Sequential&&) = default;

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  // With a tape, records every layer's cache for backward().
  Tensor forward(const Tensor& x, Tape* tape = nullptr) const;
  Tensor backward(const Tensor& grad, const Tape& tape);
  void collect(ParameterList& out);
  void init(Rng& rng);
  std::size_t size() const { return layers_.size(); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace ldn::nn
