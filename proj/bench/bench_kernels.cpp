// Reference vs parallel kernels on PFNet-sized layers, plus one full
// forward/backward step of the tiny-encoder network.

#include <benchmark/benchmark.h>

#include <random>

#include "pfnet/kernels.hpp"
#include "pfnet/losses.hpp"
#include "pfnet/model.hpp"

namespace {

using namespace pfnet;
namespace k = pfnet::kernels;

Tensor random_tensor(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t(s);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

// args: channels, spatial extent, kernel size
struct ConvCase {
  Tensor x, w, dy;
  k::ConvGeometry g;
  Tensor out, dx, dw;

  explicit ConvCase(const benchmark::State& state) {
    const int c = static_cast<int>(state.range(0)), hw = static_cast<int>(state.range(1));
    const int kernel = static_cast<int>(state.range(2));
    x = random_tensor({2, c, hw, hw}, 1);
    w = random_tensor({c, c, kernel, kernel}, 2);
    g.pad = kernel / 2;
    out = Tensor(k::conv_out_shape(x.shape(), w.shape(), g));
    dy = random_tensor(out.shape(), 3);
    dx = Tensor(x.shape());
    dw = Tensor(w.shape());
  }
};

void conv_args(benchmark::internal::Benchmark* b) {
  b->Args({16, 32, 3})->Args({32, 16, 3})->Args({16, 16, 7})->Unit(benchmark::kMillisecond);
}

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  ConvCase c(state);
  for (auto _ : state) {
    if constexpr (Parallel) k::parallel::conv2d_forward(c.x, c.w, nullptr, c.g, c.out);
    else k::reference::conv2d_forward(c.x, c.w, nullptr, c.g, c.out);
    benchmark::DoNotOptimize(c.out.data());
  }
}

template <bool Parallel>
void BM_ConvBackwardInput(benchmark::State& state) {
  ConvCase c(state);
  for (auto _ : state) {
    if constexpr (Parallel) k::parallel::conv2d_backward_input(c.dy, c.w, c.g, c.dx);
    else k::reference::conv2d_backward_input(c.dy, c.w, c.g, c.dx);
    benchmark::DoNotOptimize(c.dx.data());
  }
}

template <bool Parallel>
void BM_ConvBackwardWeight(benchmark::State& state) {
  ConvCase c(state);
  for (auto _ : state) {
    if constexpr (Parallel) k::parallel::conv2d_backward_weight(c.dy, c.x, c.g, c.dw);
    else k::reference::conv2d_backward_weight(c.dy, c.x, c.g, c.dw);
    benchmark::DoNotOptimize(c.dw.data());
  }
}

template <bool Parallel>
void BM_Bilinear(benchmark::State& state) {
  const int hw = static_cast<int>(state.range(0));
  const Tensor x = random_tensor({2, 16, hw, hw}, 4);
  Tensor out(Shape{2, 16, 4 * hw, 4 * hw});
  for (auto _ : state) {
    if constexpr (Parallel) k::parallel::bilinear_forward(x, out);
    else k::reference::bilinear_forward(x, out);
    benchmark::DoNotOptimize(out.data());
  }
}

// Spatial-attention sized product: (N x C') * (C' x N).
template <bool Parallel>
void BM_AttentionMatmul(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Tensor a = random_tensor({2, 1, 16, n}, 5), b = random_tensor({2, 1, 16, n}, 6);
  Tensor c(Shape{2, 1, n, n});
  for (auto _ : state) {
    if constexpr (Parallel) k::parallel::batched_matmul(a, true, b, false, c);
    else k::reference::batched_matmul(a, true, b, false, c);
    benchmark::DoNotOptimize(c.data());
  }
}

void BM_TrainStep(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  PFNet net(ModelConfig{}, 1);
  const Tensor image = random_tensor({2, 3, size, size}, 7);
  Tensor mask(Shape{2, 1, size, size});
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = (i / size) % 3 == 0 ? 1.0 : 0.0;
  for (auto _ : state) {
    const ForwardOutput out = net.forward(constant(image));
    const std::vector<Var> fm{out.fm[2].data, out.fm[1].data, out.fm[0].data};
    backward(losses::overall_loss(out.pm.data, fm, mask));
    net.zero_grad();
  }
}

BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/reference")->Apply(conv_args);
BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/parallel")->Apply(conv_args);
BENCHMARK(BM_ConvBackwardInput<false>)->Name("conv_backward_input/reference")->Apply(conv_args);
BENCHMARK(BM_ConvBackwardInput<true>)->Name("conv_backward_input/parallel")->Apply(conv_args);
BENCHMARK(BM_ConvBackwardWeight<false>)->Name("conv_backward_weight/reference")->Apply(conv_args);
BENCHMARK(BM_ConvBackwardWeight<true>)->Name("conv_backward_weight/parallel")->Apply(conv_args);
BENCHMARK(BM_Bilinear<false>)->Name("bilinear/reference")->Arg(16)->Arg(32);
BENCHMARK(BM_Bilinear<true>)->Name("bilinear/parallel")->Arg(16)->Arg(32);
BENCHMARK(BM_AttentionMatmul<false>)->Name("attention_matmul/reference")->Arg(64)->Arg(256);
BENCHMARK(BM_AttentionMatmul<true>)->Name("attention_matmul/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_TrainStep)->Name("train_step/tiny_encoder")->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
