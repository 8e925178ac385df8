#include <benchmark/benchmark.h>

#include "ldn/dataset_forge.h"
#include "ldn/eval.h"
#include "ldn/font.h"
#include "ldn/image.h"
#include "ldn/nn/layers.h"
#include "ldn/random.h"

namespace {

using namespace ldn;

void BM_ConvForward(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const int channels = static_cast<int>(state.range(1));
  Rng rng(1);
  nn::Conv2d conv("bench", channels, channels, 3, 1, 1);
  conv.init(rng);
  nn::Tensor x({8, channels, size, size});
  for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(conv.forward(x, nullptr));
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_ConvForward)->Args({32, 16})->Args({64, 32});

void BM_ConvBackward(benchmark::State& state) {
  Rng rng(2);
  nn::Conv2d conv("bench", 16, 16, 3, 1, 1);
  conv.init(rng);
  nn::Tensor x({8, 16, 32, 32});
  for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  nn::Cache cache;
  const nn::Tensor y = conv.forward(x, &cache);
  for (auto _ : state) benchmark::DoNotOptimize(conv.backward(y, cache));
}
BENCHMARK(BM_ConvBackward);

void BM_RasterizeGlyph(benchmark::State& state) {
  const auto fonts = enumerate_fonts(
      {std::filesystem::path(LDN_BENCH_FONT_DIR) / "DejaVuSerif.ttf"}, 1);
  const int size = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(forge::rasterize_glyph(fonts[0], 'g', size));
  }
}
BENCHMARK(BM_RasterizeGlyph)->Arg(32)->Arg(64);

void BM_Ssim(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  Rng rng(3);
  Image a(size, size, 1), b(size, size, 1);
  for (double& v : a.data()) v = rng.uniform();
  for (double& v : b.data()) v = rng.uniform();
  for (auto _ : state) benchmark::DoNotOptimize(eval::ssim(a, b));
}
BENCHMARK(BM_Ssim)->Arg(64)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
