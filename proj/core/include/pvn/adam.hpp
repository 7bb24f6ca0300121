#pragma once

#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "pvn/tensor.hpp"

namespace pvn {

/// Adam with decoupled weight decay. Defaults follow the training profile
/// (lr 1e-3, weight decay 1e-6).
template <class T>
class AdamState {
 public:
  T lr = T(1e-3);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
  T weight_decay = T(1e-6);

  std::int64_t step_count() const { return step_; }

  /// One update over all parameters. Weight decay is applied as
  /// p -= lr*wd*p before the moment update; moments are bias-corrected.
  /// A non-finite gradient aborts with the offending parameter's name.
  void step(const ParamList<T>& params) {
    ++step_;
    const T bc1 = T(1) - std::pow(beta1, static_cast<T>(step_));
    const T bc2 = T(1) - std::pow(beta2, static_cast<T>(step_));
    for (const auto& np : params) {
      Tensor<T>& p = *np.tensor;
      if (p.grad.size() != p.data.size())
        throw std::runtime_error("adam_step: parameter '" + np.name + "' has no gradient");
      auto& m = moments_[np.tensor.get()];
      if (m.first.size() != p.data.size()) {
        m.first.assign(p.data.size(), T(0));
        m.second.assign(p.data.size(), T(0));
      }
      for (std::size_t i = 0; i < p.data.size(); ++i) {
        const T g = p.grad[i];
        if (!std::isfinite(static_cast<double>(g)))
          throw std::runtime_error("adam_step: non-finite gradient in parameter '" + np.name + "'");
        p.data[i] -= lr * weight_decay * p.data[i];
        m.first[i] = beta1 * m.first[i] + (T(1) - beta1) * g;
        m.second[i] = beta2 * m.second[i] + (T(1) - beta2) * g * g;
        const T mhat = m.first[i] / bc1;
        const T vhat = m.second[i] / bc2;
        p.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }

  void zero_grads(const ParamList<T>& params) {
    for (const auto& np : params) np.tensor->zero_grad();
  }

 private:
  std::int64_t step_ = 0;
  // first/second moment buffers keyed by parameter identity
  std::unordered_map<const Tensor<T>*, std::pair<std::vector<T>, std::vector<T>>> moments_;
};

}  // namespace pvn
