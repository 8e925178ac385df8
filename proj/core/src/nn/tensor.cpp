#include "ldn/nn/tensor.h"

#include <algorithm>
#include <cstring>

#include "ldn/error.h"

namespace ldn::nn {

std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
         std::to_string(h) + "," + std::to_string(w) + ")";
}

Tensor Tensor::reshaped(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(shape);
}

Tensor Tensor::reshaped(Shape shape) && {
  if (shape.count() != data_.size()) {
    throw DimensionError("cannot reshape " + shape_.str() + " to " +
                         shape.str());
  }
  shape_ = shape;
  return std::move(*this);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& o) {
  check_same_shape(*this, o, "tensor +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!(a.shape() == b.shape())) {
    throw DimensionError(std::string(what) + ": shape " + a.shape().str() +
                         " vs " + b.shape().str());
  }
}

Tensor concat_channels(const std::vector<const Tensor*>& parts) {
  if (parts.empty()) throw DimensionError("concat of nothing");
  const Shape first = parts.front()->shape();
  int channels = 0;
  for (const Tensor* p : parts) {
    const Shape s = p->shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw DimensionError("concat_channels: " + s.str() + " vs " +
                           first.str());
    }
    channels += s.c;
  }
  Tensor out({first.n, channels, first.h, first.w});
  const std::size_t plane = static_cast<std::size_t>(first.h) * first.w;
  for (int n = 0; n < first.n; ++n) {
    double* dst = out.sample(n);
    for (const Tensor* p : parts) {
      const std::size_t len = p->c() * plane;
      std::memcpy(dst, p->sample(n), len * sizeof(double));
      dst += len;
    }
  }
  return out;
}

Tensor slice_channels(const Tensor& t, int begin, int count) {
  if (begin < 0 || count < 0 || begin + count > t.c()) {
    throw DimensionError("slice_channels out of range");
  }
  Tensor out({t.n(), count, t.h(), t.w()});
  const std::size_t plane = static_cast<std::size_t>(t.h()) * t.w();
  for (int n = 0; n < t.n(); ++n) {
    std::memcpy(out.sample(n), t.sample(n) + begin * plane,
                count * plane * sizeof(double));
  }
  return out;
}

Tensor slice_batch(const Tensor& t, int begin, int count) {
  if (begin < 0 || count < 0 || begin + count > t.n()) {
    throw DimensionError("slice_batch out of range");
  }
  Shape s = t.shape();
  s.n = count;
  Tensor out(s);
  if (count > 0) {
    std::memcpy(out.data(), t.sample(begin), s.count() * sizeof(double));
  }
  return out;
}

}  // namespace ldn::nn
