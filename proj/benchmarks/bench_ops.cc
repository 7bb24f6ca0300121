#include <benchmark/benchmark.h>

#include "pvn/ops.hpp"

using namespace pvn;

namespace {

TensorPtr<float> random_f(Shape shape, Rng& rng, bool grad = false) {
  std::vector<float> d(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : d) v = static_cast<float>(rng.uniform(-1, 1));
  return make_tensor<float>(std::move(shape), std::move(d), grad);
}

void BM_Conv2dForward(benchmark::State& state) {
  Rng rng(1);
  auto x = random_f({48, 32, 32}, rng);
  auto k = random_f({32, 48, 3, 3}, rng);
  for (auto _ : state) {
    auto y = conv2d<float>(nullptr, x, k, 2, 1);
    benchmark::DoNotOptimize(y->data.data());
  }
}
BENCHMARK(BM_Conv2dForward);

void BM_Conv2dBackward(benchmark::State& state) {
  Rng rng(2);
  auto x = random_f({48, 32, 32}, rng, true);
  auto k = random_f({32, 48, 3, 3}, rng, true);
  for (auto _ : state) {
    Tape<float> tape;
    auto loss = sum(&tape, conv2d(&tape, x, k, 2, 1));
    tape.backward(loss);
    benchmark::DoNotOptimize(k->grad.data());
    x->zero_grad();
    k->zero_grad();
  }
}
BENCHMARK(BM_Conv2dBackward);

void BM_Deconv2dForward(benchmark::State& state) {
  Rng rng(3);
  auto x = random_f({64, 16, 16}, rng);
  auto k = random_f({64, 32, 4, 4}, rng);
  for (auto _ : state) {
    auto y = deconv2d<float>(nullptr, x, k, 2, 1);
    benchmark::DoNotOptimize(y->data.data());
  }
}
BENCHMARK(BM_Deconv2dForward);

void BM_ChannelSoftmax(benchmark::State& state) {
  Rng rng(4);
  auto x = random_f({2, 64, 64}, rng);
  for (auto _ : state) {
    auto y = channel_softmax<float>(nullptr, x);
    benchmark::DoNotOptimize(y->data.data());
  }
}
BENCHMARK(BM_ChannelSoftmax);

void BM_LstmCell(benchmark::State& state) {
  Rng rng(5);
  LstmWeights<float> w;
  w.w_ih = random_f({256, 32}, rng);
  w.w_hh = random_f({256, 64}, rng);
  w.bias = random_f({256}, rng);
  auto x = random_f({32}, rng);
  auto h = random_f({64}, rng);
  auto c = random_f({64}, rng);
  for (auto _ : state) {
    auto out = lstm_cell<float>(nullptr, x, h, c, w);
    benchmark::DoNotOptimize(out.h->data.data());
  }
}
BENCHMARK(BM_LstmCell);

}  // namespace
