#include "ldn/eval.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "ldn/error.h"
#include "ldn/random.h"

namespace ldn::eval {

const char* region_name(Region r) {
  switch (r) {
    case Region::kMasked:
      return "masked";
    case Region::kInk:
      return "ink";
    case Region::kFull:
      return "full";
  }
  return "full";
}

nlohmann::json MetricReport::to_json() const {
  if (sample_count < 1 || !std::isfinite(value)) {
    throw NumericError("metric '" + name + "' is not reportable");
  }
  return {{"name", name},
          {"value", value},
          {"region", region_name(region)},
          {"sample_count", sample_count}};
}

double l1_metric(const Image& a, const Image& b, const Image* region) {
  if (!a.same_shape(b)) throw DimensionError("l1_metric shape mismatch");
  if (region && (region->channels() != 1 || region->height() != a.height() ||
                 region->width() != a.width())) {
    throw DimensionError("l1_metric region shape mismatch");
  }
  double sum = 0;
  std::size_t count = 0;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) {
      if (region && region->at(y, x) <= 0.5) continue;
      for (int c = 0; c < a.channels(); ++c) {
        sum += std::abs(a.at(y, x, c) - b.at(y, x, c));
        ++count;
      }
    }
  return count ? sum / count : 0.0;
}

namespace {

// Summed-area table with one row and column of zero padding.
std::vector<double> integral(const Image& img,
                             const std::function<double(int, int)>& f) {
  const int h = img.height(), w = img.width();
  std::vector<double> s(static_cast<std::size_t>(h + 1) * (w + 1), 0.0);
  for (int y = 0; y < h; ++y) {
    double row = 0;
    for (int x = 0; x < w; ++x) {
      row += f(y, x);
      s[(y + 1) * (w + 1) + x + 1] = s[y * (w + 1) + x + 1] + row;
    }
  }
  return s;
}

double box_sum(const std::vector<double>& s, int w, int y, int x, int k) {
  const int W = w + 1;
  return s[(y + k) * W + x + k] - s[y * W + x + k] - s[(y + k) * W + x] +
         s[y * W + x];
}

}  // namespace

double ssim(const Image& a, const Image& b, const SsimOptions& opt) {
  if (!a.same_shape(b) || a.channels() != 1) {
    throw DimensionError("ssim needs two single-channel images of one shape");
  }
  const int k = opt.window;
  if (a.height() < k || a.width() < k) {
    throw DimensionError("ssim image smaller than the " + std::to_string(k) +
                         "x" + std::to_string(k) + " window");
  }
  const double c1 = std::pow(opt.k1 * opt.dynamic_range, 2);
  const double c2 = std::pow(opt.k2 * opt.dynamic_range, 2);
  const int w = a.width();
  const auto sa = integral(a, [&](int y, int x) { return a.at(y, x); });
  const auto sb = integral(b, [&](int y, int x) { return b.at(y, x); });
  const auto saa = integral(a, [&](int y, int x) { return a.at(y, x) * a.at(y, x); });
  const auto sbb = integral(b, [&](int y, int x) { return b.at(y, x) * b.at(y, x); });
  const auto sab = integral(a, [&](int y, int x) { return a.at(y, x) * b.at(y, x); });
  const double n = double(k) * k;
  double total = 0;
  int windows = 0;
  for (int y = 0; y + k <= a.height(); ++y) {
    for (int x = 0; x + k <= w; ++x) {
      const double mx = box_sum(sa, w, y, x, k) / n;
      const double my = box_sum(sb, w, y, x, k) / n;
      const double vx = box_sum(saa, w, y, x, k) / n - mx * mx;
      const double vy = box_sum(sbb, w, y, x, k) / n - my * my;
      const double cxy = box_sum(sab, w, y, x, k) / n - mx * my;
      total += ((2 * mx * my + c1) * (2 * cxy + c2)) /
               ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++windows;
    }
  }
  return total / windows;
}

double ink_iou(const Image& a, const Image& b, double threshold) {
  if (!a.same_shape(b) || a.channels() != 1) {
    throw DimensionError("ink_iou needs two single-channel images of one shape");
  }
  std::size_t inter = 0, uni = 0;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) {
      const bool ia = a.at(y, x) > threshold;
      const bool ib = b.at(y, x) > threshold;
      inter += ia && ib;
      uni += ia || ib;
    }
  return uni ? double(inter) / uni : 1.0;
}

GradcheckResult gradcheck(const std::function<double()>& loss,
                          const std::function<void()>& compute_grads,
                          const nn::ParameterList& params,
                          const GradcheckOptions& opt) {
  compute_grads();
  struct Slot {
    std::size_t param;
    std::size_t index;
  };
  std::vector<Slot> slots;
  std::vector<double> analytic;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto g = params[p]->grad.values();
    for (std::size_t i = 0; i < g.size(); ++i) {
      slots.push_back({p, i});
      analytic.push_back(g[i]);
    }
  }
  std::vector<std::size_t> order(slots.size());
  std::iota(order.begin(), order.end(), 0);
  if (order.size() > opt.max_checked) {
    Rng rng(opt.seed);
    rng.shuffle(order);
    order.resize(opt.max_checked);
    std::sort(order.begin(), order.end());
  }

  GradcheckResult res;
  for (std::size_t k : order) {
    const Slot& s = slots[k];
    nn::Parameter& param = *params[s.param];
    double& w = param.value.values()[s.index];
    const double a = analytic[k];
    if (!std::isfinite(a)) {
      throw NumericError("non-finite analytic gradient at " + param.name +
                         "[" + std::to_string(s.index) + "]");
    }
    const double orig = w;
    w = orig + opt.epsilon;
    const double up = loss();
    w = orig - opt.epsilon;
    const double down = loss();
    w = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("non-finite loss while perturbing " + param.name +
                         "[" + std::to_string(s.index) + "]");
    }
    const double numeric = (up - down) / (2 * opt.epsilon);
    const double denom = std::max({std::abs(a), std::abs(numeric), opt.floor});
    const double rel = std::abs(a - numeric) / denom;
    if (res.checked == 0 || rel > res.max_rel_err) {
      res.max_rel_err = rel;
      res.worst_parameter = param.name;
      res.worst_index = s.index;
      res.worst_analytic = a;
      res.worst_numeric = numeric;
    }
    ++res.checked;
  }
  res.passed = res.max_rel_err < opt.tolerance;
  return res;
}

}  // namespace ldn::eval
