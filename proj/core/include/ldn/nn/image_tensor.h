#pragma once

#include <vector>

#include "ldn/image.h"
#include "ldn/nn/tensor.h"

namespace ldn::nn {

// HWC image to a (1, C, H, W) tensor and back.
Tensor to_tensor(const Image& img);
Image to_image(const Tensor& t, int sample = 0);

// Stacks equally sized images into one (N, C, H, W) batch.
Tensor stack_images(const std::vector<const Image*>& imgs);

}  // namespace ldn::nn
