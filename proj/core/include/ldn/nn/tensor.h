#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ldn::nn {

// Batch x channels x height x width.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 1;
  int w = 1;

  std::size_t count() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t per_sample() const { return static_cast<std::size_t>(c) * h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

// Dense NCHW float64 tensor with value semantics.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(shape), data_(shape.count(), fill) {}

  const Shape& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double* sample(int i) { return data_.data() + i * shape_.per_sample(); }
  const double* sample(int i) const {
    return data_.data() + i * shape_.per_sample();
  }

  double& at(int n, int c, int y, int x) {
    return data_[((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) *
                     shape_.w + x];
  }
  double at(int n, int c, int y, int x) const {
    return data_[((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) *
                     shape_.w + x];
  }

  // Same data, new shape with equal element count.
  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  void fill(double v);
  Tensor& operator+=(const Tensor& o);
  Tensor& operator*=(double s);
  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Throws DimensionError naming `what` when the shapes differ.
void check_same_shape(const Tensor& a, const Tensor& b, const char* what);

// Concatenates along channels; all inputs share n, h, w.
Tensor concat_channels(const std::vector<const Tensor*>& parts);
// Splits channels [begin, begin+count).
Tensor slice_channels(const Tensor& t, int begin, int count);

// Sample range [begin, begin+count).
Tensor slice_batch(const Tensor& t, int begin, int count);

}  // namespace ldn::nn
