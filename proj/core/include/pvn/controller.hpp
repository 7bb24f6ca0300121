#pragma once

#include "pvn/mapper.hpp"
#include "pvn/ops.hpp"

namespace pvn {

/// Bilinear sample table for the egocentric K x K crop: rotate the map into
/// the agent frame (heading along crop +x), agent at the crop center.
/// Positions outside the map read as exact zeros.
struct CropTable {
  struct CellSample {
    std::int32_t idx[4] = {-1, -1, -1, -1};  // map flat indices, -1 = outside
    float w[4] = {0, 0, 0, 0};
  };
  std::vector<CellSample> cells;  // K*K row-major
  int k = 0;
};

CropTable build_crop(const Pose& pose, const MapFrame& frame, int k);

/// dists: [2,N,N] -> flattened [2*K*K] vector, d^p crop then d^g crop.
template <class T>
TensorPtr<T> apply_crop(Tape<T>* tape, const TensorPtr<T>& dists, const CropTable& table) {
  if (dists->rank() != 3 || dists->dim(0) != 2) throw std::invalid_argument("apply_crop: expects [2,N,N]");
  const std::int64_t hw = dists->dim(1) * dists->dim(2);
  const std::int64_t kk = static_cast<std::int64_t>(table.k) * table.k;
  auto out = zeros<T>({2 * kk});
  for (std::int64_t ch = 0; ch < 2; ++ch) {
    const T* src = &dists->data[static_cast<std::size_t>(ch * hw)];
    T* dst = &out->data[static_cast<std::size_t>(ch * kk)];
    for (std::int64_t i = 0; i < kk; ++i) {
      const auto& s = table.cells[static_cast<std::size_t>(i)];
      T v(0);
      for (int j = 0; j < 4; ++j)
        if (s.idx[j] >= 0) v += static_cast<T>(s.w[j]) * src[s.idx[j]];
      dst[i] = v;
    }
  }
  if (!tape) return out;
  return tape->record("egocentric_crop", {dists}, out, [dists, out, cells = table.cells, hw, kk] {
    for (std::int64_t ch = 0; ch < 2; ++ch) {
      T* src_g = &dists->grad[static_cast<std::size_t>(ch * hw)];
      const T* dst_g = &out->grad[static_cast<std::size_t>(ch * kk)];
      for (std::int64_t i = 0; i < kk; ++i) {
        const auto& s = cells[static_cast<std::size_t>(i)];
        const T g = dst_g[i];
        if (g == T(0)) continue;
        for (int j = 0; j < 4; ++j)
          if (s.idx[j] >= 0) src_g[s.idx[j]] += static_cast<T>(s.w[j]) * g;
      }
    }
  });
}

/// Plain-buffer crop for the inference path (d^p and d^g as float arrays).
std::vector<float> crop_distributions(const std::vector<float>& dp, const std::vector<float>& dg,
                                      int cells, const CropTable& table);

struct ControlOutput {
  double e_stop = 0, v = 0, omega = 0;
  double p_stop = 0.5;  // sigmoid(e_stop)
};

/// Stop iff p_stop strictly exceeds kappa, else a velocity action. The
/// simulator clamps velocities at its own boundary; act() outputs are raw.
Action stop_decision(const ControlOutput& out, double kappa);

/// Two-layer plan-execution head with input skip:
/// (e_stop, v, omega) = W2 [x; LeakyReLU(W1 x + b1)] + b2.
template <class T>
struct ActHead {
  TensorPtr<T> w1, b1;  // [hidden, 2K^2], [hidden]
  TensorPtr<T> w2, b2;  // [3, 2K^2 + hidden], [3]
  int input = 288, hidden = 64;
  T slope = T(0.01);

  static ActHead make(int input, int hidden, Rng& rng) {
    ActHead a;
    a.input = input;
    a.hidden = hidden;
    a.w1 = uniform_init<T>({hidden, input}, static_cast<T>(std::sqrt(1.0 / input)), rng);
    a.b1 = zeros<T>({hidden}, true);
    a.w2 = uniform_init<T>({3, input + hidden}, static_cast<T>(std::sqrt(1.0 / (input + hidden))), rng);
    a.b2 = zeros<T>({3}, true);
    return a;
  }

  /// x: [2K^2] -> [3] = (e_stop, v, omega).
  TensorPtr<T> forward(Tape<T>* tape, const TensorPtr<T>& x) const {
    if (x->numel() != input)
      throw std::invalid_argument("act: expected input length " + std::to_string(input) + ", got " +
                                  std::to_string(x->numel()));
    auto hid = leaky_relu(tape, add(tape, matvec(tape, w1, x), b1), slope);
    return add(tape, matvec(tape, w2, concat_vec(tape, x, hid)), b2);
  }

  ControlOutput act(const std::vector<T>& x) const {
    auto xt = make_tensor<T>({static_cast<std::int64_t>(x.size())}, x);
    auto y = forward(nullptr, xt);
    ControlOutput out;
    out.e_stop = static_cast<double>(y->data[0]);
    out.v = static_cast<double>(y->data[1]);
    out.omega = static_cast<double>(y->data[2]);
    out.p_stop = 1.0 / (1.0 + std::exp(-out.e_stop));
    return out;
  }

  ParamList<T> params() const {
    return {{"stage2.act.w1", w1}, {"stage2.act.b1", b1}, {"stage2.act.w2", w2}, {"stage2.act.b2", b2}};
  }
};

}  // namespace pvn
