#pragma once

#include <functional>
#include <vector>

#include "pvn/tensor.hpp"

namespace pvn::testing {

/// Central finite-difference gradient oracle (64-bit). `loss_fn` must build
/// the full forward pass from the current parameter values; it is evaluated
/// without a tape for the numeric side, so the oracle never exercises the
/// backward code it is checking.
struct GradCheckResult {
  double max_rel_error = 0;
  double worst_analytic = 0, worst_numeric = 0;
  std::string worst_param;
  std::size_t checked = 0, skipped_nonsmooth = 0;
};

inline GradCheckResult gradcheck(const std::function<TensorPtr<double>(Tape<double>*)>& loss_fn,
                                 const ParamList<double>& params, double h = 1e-4) {
  // analytic gradients
  for (const auto& np : params) {
    np.tensor->ensure_grad();
    np.tensor->zero_grad();
  }
  Tape<double> tape;
  auto loss = loss_fn(&tape);
  tape.backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& np : params) analytic.push_back(np.tensor->grad);

  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& tensor = *params[pi].tensor;
    for (std::size_t i = 0; i < tensor.data.size(); ++i) {
      const double saved = tensor.data[i];
      auto central = [&](double step) {
        tensor.data[i] = saved + step;
        const double up = loss_fn(nullptr)->data[0];
        tensor.data[i] = saved - step;
        const double down = loss_fn(nullptr)->data[0];
        tensor.data[i] = saved;
        return (up - down) / (2.0 * step);
      };
      const double n_h = central(h);
      const double n_h2 = central(h / 2);
      // a leaky-ReLU kink inside the difference window makes the two
      // estimates disagree grossly; the central difference is not a
      // derivative oracle at such points
      if (std::abs(n_h - n_h2) > 1e-3 * std::max(1.0, std::abs(n_h))) {
        ++result.skipped_nonsmooth;
        continue;
      }
      const double numeric = (4.0 * n_h2 - n_h) / 3.0;  // Richardson, O(h^4)
      const double a = analytic[pi][i];
      // relative error with an absolute floor: coordinates with near-zero
      // gradients are only certifiable to the oracle's truncation level
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-2});
      const double rel = std::abs(a - numeric) / denom;
      ++result.checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
        result.worst_param = params[pi].name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return result;
}

inline TensorPtr<double> random_tensor(Shape shape, Rng& rng, double scale = 1.0,
                                       bool requires_grad = true) {
  std::vector<double> d(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : d) v = rng.uniform(-scale, scale);
  return make_tensor<double>(std::move(shape), std::move(d), requires_grad);
}

}  // namespace pvn::testing
