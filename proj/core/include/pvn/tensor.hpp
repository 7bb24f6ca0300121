#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "pvn/rng.hpp"

namespace pvn {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

/// Dense row-major tensor. T is float for training, double for gradient
/// checking. `grad` is allocated lazily: parameters allocate it up front via
/// requires_grad, intermediates get one during backward if they are on the
/// path from the loss.
template <class T>
struct Tensor {
  Shape shape;
  std::vector<T> data;
  bool requires_grad = false;
  std::vector<T> grad;  // empty or data.size()
  std::string name;

  Tensor() = default;
  Tensor(Shape s, std::vector<T> d, bool rg = false)
      : shape(std::move(s)), data(std::move(d)), requires_grad(rg) {
    if (static_cast<std::int64_t>(data.size()) != shape_numel(shape))
      throw std::invalid_argument("tensor data size does not match shape " + shape_str(shape));
    if (requires_grad) grad.assign(data.size(), T(0));
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  std::int64_t dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  int rank() const { return static_cast<int>(shape.size()); }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }
};

template <class T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

template <class T>
TensorPtr<T> make_tensor(Shape shape, std::vector<T> data, bool requires_grad = false) {
  return std::make_shared<Tensor<T>>(std::move(shape), std::move(data), requires_grad);
}

template <class T>
TensorPtr<T> zeros(Shape shape, bool requires_grad = false) {
  std::vector<T> d(static_cast<std::size_t>(shape_numel(shape)), T(0));
  return make_tensor<T>(std::move(shape), std::move(d), requires_grad);
}

template <class T>
TensorPtr<T> full(Shape shape, T value, bool requires_grad = false) {
  std::vector<T> d(static_cast<std::size_t>(shape_numel(shape)), value);
  return make_tensor<T>(std::move(shape), std::move(d), requires_grad);
}

template <class T>
TensorPtr<T> scalar_tensor(T value, bool requires_grad = false) {
  return make_tensor<T>(Shape{}, std::vector<T>{value}, requires_grad);
}

/// Uniform init in [-bound, bound]; the usual fan-in scaling is picked by the
/// caller.
template <class T>
TensorPtr<T> uniform_init(Shape shape, T bound, Rng& rng, bool requires_grad = true) {
  std::vector<T> d(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : d) v = static_cast<T>(rng.uniform(-static_cast<double>(bound), static_cast<double>(bound)));
  return make_tensor<T>(std::move(shape), std::move(d), requires_grad);
}

/// One recorded operation: forward already ran, `backward` scatters
/// output->grad into the inputs' grads.
template <class T>
struct TapeOp {
  const char* op_name;
  std::vector<TensorPtr<T>> inputs;
  TensorPtr<T> output;
  std::function<void()> backward;
};

/// Reverse-mode tape. Ops append themselves during the forward pass, so the
/// list is topologically ordered by construction; backward() replays it once
/// in reverse. One tape per episode/example; not thread-safe, but independent
/// tapes are.
template <class T>
class Tape {
 public:
  TensorPtr<T> record(const char* op_name, std::vector<TensorPtr<T>> inputs, TensorPtr<T> output,
                      std::function<void()> backward) {
    ops_.push_back(TapeOp<T>{op_name, std::move(inputs), output, std::move(backward)});
    return output;
  }

  /// Accumulates d(loss)/d(x) into x->grad for every tensor on the path from
  /// the recorded graph to `loss`. Tensors off the path keep zero grads.
  void backward(const TensorPtr<T>& loss) {
    if (loss->numel() != 1)
      throw std::invalid_argument("backward: loss must be a scalar, got " + shape_str(loss->shape));
    loss->ensure_grad();
    loss->grad[0] += T(1);
    std::unordered_set<const Tensor<T>*> needed;
    needed.insert(loss.get());
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
      if (!needed.count(it->output.get())) continue;
      for (const auto& in : it->inputs) {
        in->ensure_grad();
        needed.insert(in.get());
      }
      it->backward();
    }
  }

  std::size_t size() const { return ops_.size(); }
  void clear() { ops_.clear(); }

 private:
  std::vector<TapeOp<T>> ops_;
};

/// Named parameter list used by the optimizer and the checkpoint writer.
template <class T>
struct NamedParam {
  std::string name;
  TensorPtr<T> tensor;
};

template <class T>
using ParamList = std::vector<NamedParam<T>>;

}  // namespace pvn
