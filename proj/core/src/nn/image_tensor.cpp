#include "ldn/nn/image_tensor.h"

#include "ldn/error.h"

namespace ldn::nn {

Tensor to_tensor(const Image& img) {
  return stack_images({&img});
}

Image to_image(const Tensor& t, int sample) {
  Image img(t.h(), t.w(), t.c());
  for (int c = 0; c < t.c(); ++c)
    for (int y = 0; y < t.h(); ++y)
      for (int x = 0; x < t.w(); ++x) img.at(y, x, c) = t.at(sample, c, y, x);
  return img;
}

Tensor stack_images(const std::vector<const Image*>& imgs) {
  if (imgs.empty()) throw DimensionError("stack_images needs at least one image");
  const Image& first = *imgs.front();
  Tensor t({static_cast<int>(imgs.size()), first.channels(), first.height(),
            first.width()});
  for (std::size_t n = 0; n < imgs.size(); ++n) {
    const Image& img = *imgs[n];
    if (!img.same_shape(first)) {
      throw DimensionError("stack_images: images differ in shape");
    }
    for (int c = 0; c < img.channels(); ++c)
      for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
          t.at(static_cast<int>(n), c, y, x) = img.at(y, x, c);
  }
  return t;
}

}  // namespace ldn::nn
