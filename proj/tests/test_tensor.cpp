#include <cmath>
#include <cstring>

#include "doctest.h"
#include "gradcheck.hpp"
#include "pvn/adam.hpp"
#include "pvn/checkpoint.hpp"
#include "pvn/config.hpp"
#include "pvn/ops.hpp"

using namespace pvn;
using pvn::testing::random_tensor;

namespace {

/// Independent cross-correlation oracle: literal translation of the output
/// formula, one output element at a time.
std::vector<double> conv_oracle(const Tensor<double>& in, const Tensor<double>& k, int stride, int pad,
                                std::int64_t& ho_out, std::int64_t& wo_out) {
  const std::int64_t cin = in.shape[0], h = in.shape[1], w = in.shape[2];
  const std::int64_t cout = k.shape[0], kh = k.shape[2], kw = k.shape[3];
  const std::int64_t ho = (h + 2 * pad - kh) / stride + 1;
  const std::int64_t wo = (w + 2 * pad - kw) / stride + 1;
  std::vector<double> out(static_cast<std::size_t>(cout * ho * wo), 0.0);
  for (std::int64_t co = 0; co < cout; ++co)
    for (std::int64_t y = 0; y < ho; ++y)
      for (std::int64_t x = 0; x < wo; ++x) {
        double acc = 0;
        for (std::int64_t ci = 0; ci < cin; ++ci)
          for (std::int64_t ky = 0; ky < kh; ++ky)
            for (std::int64_t kx = 0; kx < kw; ++kx) {
              const std::int64_t iy = y * stride - pad + ky;
              const std::int64_t ix = x * stride - pad + kx;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += in.data[static_cast<std::size_t>((ci * h + iy) * w + ix)] *
                     k.data[static_cast<std::size_t>(((co * cin + ci) * kh + ky) * kw + kx)];
            }
        out[static_cast<std::size_t>((co * ho + y) * wo + x)] = acc;
      }
  ho_out = ho;
  wo_out = wo;
  return out;
}

/// Scalar LSTM oracle: per-element gate arithmetic with plain doubles.
void lstm_oracle(const std::vector<double>& x, const std::vector<double>& h_prev,
                 const std::vector<double>& c_prev, const Tensor<double>& w_ih,
                 const Tensor<double>& w_hh, const Tensor<double>& bias, std::vector<double>& h_out,
                 std::vector<double>& c_out) {
  const std::size_t hidden = h_prev.size();
  const std::size_t d = x.size();
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  h_out.resize(hidden);
  c_out.resize(hidden);
  for (std::size_t j = 0; j < hidden; ++j) {
    double z[4];
    for (int g = 0; g < 4; ++g) {
      const std::size_t row = static_cast<std::size_t>(g) * hidden + j;
      double acc = bias.data[row];
      for (std::size_t i = 0; i < d; ++i) acc += w_ih.data[row * d + i] * x[i];
      for (std::size_t i = 0; i < hidden; ++i) acc += w_hh.data[row * hidden + i] * h_prev[i];
      z[g] = acc;
    }
    const double gi = sig(z[0]), gf = sig(z[1]), gc = std::tanh(z[2]), go = sig(z[3]);
    c_out[j] = gf * c_prev[j] + gi * gc;
    h_out[j] = go * std::tanh(c_out[j]);
  }
}

}  // namespace

TEST_CASE("conv2d scalar product and identity kernel") {
  auto in = make_tensor<double>({1, 1, 1}, {2.0});
  auto k = make_tensor<double>({1, 1, 1, 1}, {3.0});
  auto out = conv2d<double>(nullptr, in, k, 1, 0);
  CHECK(out->data[0] == doctest::Approx(6.0));

  Rng rng(7);
  auto img = random_tensor({2, 4, 5}, rng);
  auto ident = make_tensor<double>({2, 2, 1, 1}, {1.0, 0.0, 0.0, 1.0});
  auto same = conv2d<double>(nullptr, img, ident, 1, 0);
  for (std::size_t i = 0; i < img->data.size(); ++i) CHECK(same->data[i] == doctest::Approx(img->data[i]));
}

TEST_CASE("conv2d matches the nested-loop oracle") {
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    auto in = random_tensor({2, 5, 5}, rng);
    auto k = random_tensor({3, 2, 3, 3}, rng);
    const int stride = 1 + trial % 2, pad = trial % 3;
    std::int64_t ho = 0, wo = 0;
    const auto expect = conv_oracle(*in, *k, stride, pad, ho, wo);
    auto out = conv2d<double>(nullptr, in, k, stride, pad);
    REQUIRE(out->shape == Shape{3, ho, wo});
    for (std::size_t i = 0; i < expect.size(); ++i)
      CHECK(std::abs(out->data[i] - expect[i]) < 1e-6);
  }
}

TEST_CASE("conv2d rejects channel mismatch") {
  auto in = make_tensor<double>({2, 3, 3}, std::vector<double>(18, 0.0));
  auto k = make_tensor<double>({1, 3, 2, 2}, std::vector<double>(12, 0.0));
  CHECK_THROWS_AS((void)conv2d<double>(nullptr, in, k, 1, 0), std::invalid_argument);
}

TEST_CASE("deconv2d shape formula and scalar kernel") {
  // 1x1 kernel value k, stride 1: output = k * input
  Rng rng(3);
  auto in = random_tensor({1, 3, 3}, rng);
  auto k = make_tensor<double>({1, 1, 1, 1}, {2.5});
  auto out = deconv2d<double>(nullptr, in, k, 1, 0);
  REQUIRE(out->shape == in->shape);
  for (std::size_t i = 0; i < in->data.size(); ++i)
    CHECK(out->data[i] == doctest::Approx(2.5 * in->data[i]));

  // input width 3, kernel 2, stride 2, pad 0 -> output width 6
  auto in2 = random_tensor({1, 3, 3}, rng);
  auto k2 = random_tensor({1, 1, 2, 2}, rng);
  auto out2 = deconv2d<double>(nullptr, in2, k2, 2, 0);
  CHECK(out2->shape == Shape{1, 6, 6});
}

TEST_CASE("conv2d/deconv2d adjoint identity") {
  // stride/kernel/padding combinations whose shapes round-trip exactly
  struct Config {
    int stride, kernel, pad;
  };
  const Config configs[] = {{1, 3, 0}, {1, 3, 1}, {2, 4, 1}, {2, 2, 0}};
  Rng rng(19);
  for (const auto& cfg : configs) {
    auto x = random_tensor({2, 6, 6}, rng);
    auto k = random_tensor({3, 2, cfg.kernel, cfg.kernel}, rng);  // conv kernel [Cout,Cin,kh,kw]
    auto cx = conv2d<double>(nullptr, x, k, cfg.stride, cfg.pad);
    auto y = random_tensor(cx->shape, rng);
    // <conv(x), y> must equal <x, deconv(y)> with the shared kernel buffer
    auto dy = deconv2d<double>(nullptr, y, k, cfg.stride, cfg.pad);
    REQUIRE(dy->shape == x->shape);
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < y->data.size(); ++i) lhs += cx->data[i] * y->data[i];
    for (std::size_t i = 0; i < x->data.size(); ++i) rhs += x->data[i] * dy->data[i];
    CHECK(std::abs(lhs - rhs) < 1e-4);
  }
}

TEST_CASE("lstm_cell closed form with zero weights") {
  const int hidden = 4, d = 3;
  LstmWeights<double> w;
  w.w_ih = zeros<double>({4 * hidden, d});
  w.w_hh = zeros<double>({4 * hidden, hidden});
  w.bias = zeros<double>({4 * hidden});
  auto x = zeros<double>({d});
  auto h0 = zeros<double>({hidden});
  auto c0 = make_tensor<double>({hidden}, {0.4, -0.2, 1.0, 0.0});
  auto state = lstm_cell<double>(nullptr, x, h0, c0, w);
  for (int j = 0; j < hidden; ++j) {
    const double c = 0.5 * c0->data[static_cast<std::size_t>(j)];
    CHECK(state.c->data[static_cast<std::size_t>(j)] == doctest::Approx(c));
    CHECK(state.h->data[static_cast<std::size_t>(j)] == doctest::Approx(0.5 * std::tanh(c)));
  }
  // c_prev = 0, x = 0 -> h = 0.5*tanh(0) = 0
  auto state0 = lstm_cell<double>(nullptr, x, h0, zeros<double>({hidden}), w);
  for (int j = 0; j < hidden; ++j) CHECK(state0.h->data[static_cast<std::size_t>(j)] == doctest::Approx(0.0));
}

TEST_CASE("lstm_cell matches the scalar oracle") {
  Rng rng(23);
  const int hidden = 5, d = 4;
  LstmWeights<double> w;
  w.w_ih = random_tensor({4 * hidden, d}, rng);
  w.w_hh = random_tensor({4 * hidden, hidden}, rng);
  w.bias = random_tensor({4 * hidden}, rng);
  auto x = random_tensor({d}, rng);
  auto h0 = random_tensor({hidden}, rng);
  auto c0 = random_tensor({hidden}, rng);
  auto state = lstm_cell<double>(nullptr, x, h0, c0, w);
  std::vector<double> h_exp, c_exp;
  lstm_oracle(x->data, h0->data, c0->data, *w.w_ih, *w.w_hh, *w.bias, h_exp, c_exp);
  for (int j = 0; j < hidden; ++j) {
    CHECK(std::abs(state.h->data[static_cast<std::size_t>(j)] - h_exp[static_cast<std::size_t>(j)]) < 1e-6);
    CHECK(std::abs(state.c->data[static_cast<std::size_t>(j)] - c_exp[static_cast<std::size_t>(j)]) < 1e-6);
  }
}

TEST_CASE("channel_softmax properties") {
  auto flat = full<double>({2, 3, 3}, 1.7);
  auto sm = channel_softmax<double>(nullptr, flat);
  for (double v : sm->data) CHECK(v == doctest::Approx(1.0 / 9.0));

  Rng rng(5);
  auto logits = random_tensor({2, 4, 4}, rng, 3.0);
  auto base = channel_softmax<double>(nullptr, logits);
  // per-channel shift invariance
  auto shifted = make_tensor<double>(logits->shape, logits->data);
  for (int i = 0; i < 16; ++i) shifted->data[static_cast<std::size_t>(i)] += 5.0;
  for (int i = 16; i < 32; ++i) shifted->data[static_cast<std::size_t>(i)] -= 2.0;
  auto sm2 = channel_softmax<double>(nullptr, shifted);
  for (std::size_t i = 0; i < base->data.size(); ++i)
    CHECK(sm2->data[i] == doctest::Approx(base->data[i]));
  // sums to one per channel, values in (0,1)
  for (int ch = 0; ch < 2; ++ch) {
    double total = 0;
    for (int i = 0; i < 16; ++i) {
      const double v = base->data[static_cast<std::size_t>(ch * 16 + i)];
      CHECK(v > 0.0);
      CHECK(v < 1.0);
      total += v;
    }
    CHECK(std::abs(total - 1.0) < 1e-6);
  }
}

TEST_CASE("kl_loss hand evaluations") {
  auto p = make_tensor<double>({2}, {0.5, 0.5});
  CHECK(kl_loss<double>(nullptr, {0.5, 0.5}, p)->data[0] == doctest::Approx(0.0));
  CHECK(kl_loss<double>(nullptr, {1.0, 0.0}, p)->data[0] == doctest::Approx(std::log(2.0)));
  // asymmetry
  auto q = make_tensor<double>({2}, {0.5, 0.5});
  auto pq = kl_loss<double>(nullptr, {0.9, 0.1}, q)->data[0];
  auto p2 = make_tensor<double>({2}, {0.9, 0.1});
  auto qp = kl_loss<double>(nullptr, {0.5, 0.5}, p2)->data[0];
  CHECK(pq != doctest::Approx(qp));
  // target mass where predicted underflows: large but finite
  auto tiny = make_tensor<double>({2}, {0.0, 1.0});
  const double penalty = kl_loss<double>(nullptr, {1.0, 0.0}, tiny)->data[0];
  CHECK(std::isfinite(penalty));
  CHECK(penalty > 10.0);
}

TEST_CASE("backward: sum of squares and unrelated parameters") {
  auto x = make_tensor<double>({3}, {1.0, -2.0, 3.0}, true);
  auto unrelated = make_tensor<double>({2}, {5.0, 5.0}, true);
  Tape<double> tape;
  auto loss = sum(&tape, mul(&tape, x, x));
  tape.backward(loss);
  CHECK(x->grad[0] == doctest::Approx(2.0));
  CHECK(x->grad[1] == doctest::Approx(-4.0));
  CHECK(x->grad[2] == doctest::Approx(6.0));
  CHECK(unrelated->grad[0] == doctest::Approx(0.0));
  CHECK(unrelated->grad[1] == doctest::Approx(0.0));
}

TEST_CASE("backward rejects non-scalar loss") {
  auto x = make_tensor<double>({3}, {1.0, 2.0, 3.0}, true);
  Tape<double> tape;
  auto y = mul(&tape, x, x);
  CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);
}

TEST_CASE("forward determinism: identical seeds give identical bits") {
  auto run = [] {
    Rng rng(99);
    auto x = random_tensor({2, 6, 6}, rng);
    auto k = random_tensor({3, 2, 3, 3}, rng);
    Tape<double> tape;
    auto loss = sum(&tape, channel_softmax(&tape, conv2d(&tape, x, k, 2, 1)));
    tape.backward(loss);
    return std::make_pair(loss->data[0], k->grad);
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("adam: paper-profile defaults and update rule") {
  const RunConfig paper = RunConfig::paper();
  CHECK(paper.lr == 0.001);
  CHECK(paper.weight_decay == 1e-6);
  AdamState<double> adam;
  CHECK(adam.lr == doctest::Approx(0.001));
  CHECK(adam.weight_decay == doctest::Approx(1e-6));

  SUBCASE("zero gradient: only weight decay moves the parameter") {
    auto p = make_tensor<double>({2}, {4.0, -8.0}, true);
    ParamList<double> params{{"p", p}};
    adam.step(params);
    CHECK(p->data[0] == doctest::Approx(4.0 * (1.0 - adam.lr * adam.weight_decay)));
    CHECK(p->data[1] == doctest::Approx(-8.0 * (1.0 - adam.lr * adam.weight_decay)));
  }

  SUBCASE("constant gradient, first step: per-element step is about lr") {
    auto p = make_tensor<double>({2}, {1.0, 1.0}, true);
    p->grad = {0.3, -0.7};
    AdamState<double> fresh;
    fresh.weight_decay = 0;
    ParamList<double> params{{"p", p}};
    fresh.step(params);
    CHECK(std::abs(1.0 - p->data[0]) == doctest::Approx(fresh.lr).epsilon(1e-3));
    CHECK(std::abs(1.0 - p->data[1]) == doctest::Approx(fresh.lr).epsilon(1e-3));
    CHECK(p->data[0] < 1.0);  // moves against the gradient sign
    CHECK(p->data[1] > 1.0);
  }

  SUBCASE("non-finite gradient aborts naming the parameter") {
    auto p = make_tensor<double>({1}, {1.0}, true);
    p->grad = {std::nan("")};
    ParamList<double> params{{"culprit", p}};
    try {
      adam.step(params);
      FAIL("expected adam_step to throw");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("culprit") != std::string::npos);
    }
  }
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  std::vector<CheckpointEntry> entries;
  entries.push_back({"a.w", {2, 3}, {1.f, -2.f, 0.5f, 1e-30f, 3.14159f, -0.f}});
  entries.push_back({"b", {4}, {0.f, 1.f, 2.f, 3.f}});
  const std::string path = "/tmp/pvn_test_ckpt.pvnckpt";
  save_checkpoint(path, entries);
  const auto loaded = load_checkpoint(path);
  REQUIRE(loaded.size() == entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    CHECK(loaded[i].name == entries[i].name);
    CHECK(loaded[i].shape == entries[i].shape);
    REQUIRE(loaded[i].data.size() == entries[i].data.size());
    for (std::size_t j = 0; j < entries[i].data.size(); ++j) {
      // bit-exact comparison
      CHECK(std::memcmp(&loaded[i].data[j], &entries[i].data[j], 4) == 0);
    }
  }
}
