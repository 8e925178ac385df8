#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "ldn/image.h"
#include "ldn/nn/layers.h"

// Metrics and numeric verification shared by the trainers. All metrics are
// evaluated in float64.
namespace ldn::eval {

enum class Region { kMasked, kInk, kFull };

struct MetricReport {
  std::string name;
  double value = 0;
  Region region = Region::kFull;
  int sample_count = 1;

  nlohmann::json to_json() const;
};

const char* region_name(Region r);

// Mean absolute difference over all channels of the pixels where `region`
// (one channel, broadcast over channels) exceeds 0.5; whole image when no
// region is given. Empty region yields 0.
double l1_metric(const Image& a, const Image& b,
                 const Image* region = nullptr);

struct SsimOptions {
  int window = 7;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

// Mean structural similarity over every fully contained window x window
// block of two single-channel images, using uniform weights and population
// (1/N) moments:
//   ssim = (2 mx my + C1)(2 sxy + C2) / ((mx^2 + my^2 + C1)(sx^2 + sy^2 + C2))
// with C1 = (k1 L)^2, C2 = (k2 L)^2. Throws DimensionError when the images
// differ in shape, are not single channel, or are smaller than the window.
double ssim(const Image& a, const Image& b, const SsimOptions& opt = {});

// Binarized ink agreement; pixels count as ink when above `threshold`.
double ink_iou(const Image& a, const Image& b, double threshold = 0.5);

struct GradcheckOptions {
  // Balances truncation against float64 roundoff in the loss.
  double epsilon = 1e-5;
  double tolerance = 1e-3;
  // Relative errors divide by max(|analytic|, |numeric|, floor).
  double floor = 1e-7;
  // Above this many scalars a seeded subsample of this size is checked.
  std::size_t max_checked = 10000;
  std::uint64_t seed = 0;
};

struct GradcheckResult {
  bool passed = false;
  double max_rel_err = 0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0;
  double worst_numeric = 0;
  std::size_t checked = 0;
};

// Compares central differences of `loss` against the analytic gradient
// written into the parameters' grad tensors by `compute_grads` (which must
// zero them first). Passes iff max relative error < tolerance. Throws
// NumericError naming the parameter and index on non-finite values.
GradcheckResult gradcheck(const std::function<double()>& loss,
                          const std::function<void()>& compute_grads,
                          const nn::ParameterList& params,
                          const GradcheckOptions& opt = {});

}  // namespace ldn::eval
