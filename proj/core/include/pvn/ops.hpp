#pragma once

#include <algorithm>
#include <cmath>

#include "pvn/tensor.hpp"

namespace pvn {

/// Differentiable tensor ops. Every function runs its forward pass
/// immediately; when `tape` is non-null it also records the backward closure.
/// Passing tape == nullptr gives plain inference with no graph bookkeeping.

namespace detail {
template <class T>
inline void check_same_shape(const TensorPtr<T>& a, const TensorPtr<T>& b, const char* op) {
  if (a->shape != b->shape)
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a->shape) + " vs " +
                                shape_str(b->shape));
}
}  // namespace detail

// ---- elementwise ----

template <class T>
TensorPtr<T> add(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  detail::check_same_shape(a, b, "add");
  auto out = zeros<T>(a->shape);
  for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = a->data[i] + b->data[i];
  if (!tape) return out;
  return tape->record("add", {a, b}, out, [a, b, out] {
    for (std::size_t i = 0; i < out->data.size(); ++i) {
      a->grad[i] += out->grad[i];
      b->grad[i] += out->grad[i];
    }
  });
}

template <class T>
TensorPtr<T> sub(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  detail::check_same_shape(a, b, "sub");
  auto out = zeros<T>(a->shape);
  for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = a->data[i] - b->data[i];
  if (!tape) return out;
  return tape->record("sub", {a, b}, out, [a, b, out] {
    for (std::size_t i = 0; i < out->data.size(); ++i) {
      a->grad[i] += out->grad[i];
      b->grad[i] -= out->grad[i];
    }
  });
}

template <class T>
TensorPtr<T> mul(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  detail::check_same_shape(a, b, "mul");
  auto out = zeros<T>(a->shape);
  for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = a->data[i] * b->data[i];
  if (!tape) return out;
  return tape->record("mul", {a, b}, out, [a, b, out] {
    for (std::size_t i = 0; i < out->data.size(); ++i) {
      a->grad[i] += b->data[i] * out->grad[i];
      b->grad[i] += a->data[i] * out->grad[i];
    }
  });
}

template <class T>
TensorPtr<T> scale(Tape<T>* tape, const TensorPtr<T>& a, T factor) {
  auto out = zeros<T>(a->shape);
  for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = factor * a->data[i];
  if (!tape) return out;
  return tape->record("scale", {a}, out, [a, out, factor] {
    for (std::size_t i = 0; i < out->data.size(); ++i) a->grad[i] += factor * out->grad[i];
  });
}

template <class T>
TensorPtr<T> leaky_relu(Tape<T>* tape, const TensorPtr<T>& x, T slope = T(0.01)) {
  auto out = zeros<T>(x->shape);
  for (std::size_t i = 0; i < out->data.size(); ++i)
    out->data[i] = x->data[i] > T(0) ? x->data[i] : slope * x->data[i];
  if (!tape) return out;
  return tape->record("leaky_relu", {x}, out, [x, out, slope] {
    for (std::size_t i = 0; i < out->data.size(); ++i)
      x->grad[i] += (x->data[i] > T(0) ? T(1) : slope) * out->grad[i];
  });
}

template <class T>
TensorPtr<T> sigmoid(Tape<T>* tape, const TensorPtr<T>& x) {
  auto out = zeros<T>(x->shape);
  for (std::size_t i = 0; i < out->data.size(); ++i)
    out->data[i] = T(1) / (T(1) + std::exp(-x->data[i]));
  if (!tape) return out;
  return tape->record("sigmoid", {x}, out, [x, out] {
    for (std::size_t i = 0; i < out->data.size(); ++i) {
      const T s = out->data[i];
      x->grad[i] += s * (T(1) - s) * out->grad[i];
    }
  });
}

template <class T>
TensorPtr<T> tanh_op(Tape<T>* tape, const TensorPtr<T>& x) {
  auto out = zeros<T>(x->shape);
  for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = std::tanh(x->data[i]);
  if (!tape) return out;
  return tape->record("tanh", {x}, out, [x, out] {
    for (std::size_t i = 0; i < out->data.size(); ++i) {
      const T th = out->data[i];
      x->grad[i] += (T(1) - th * th) * out->grad[i];
    }
  });
}

// ---- reductions / losses ----

template <class T>
TensorPtr<T> sum(Tape<T>* tape, const TensorPtr<T>& x) {
  T acc(0);
  for (T v : x->data) acc += v;
  auto out = scalar_tensor<T>(acc);
  if (!tape) return out;
  return tape->record("sum", {x}, out, [x, out] {
    for (std::size_t i = 0; i < x->data.size(); ++i) x->grad[i] += out->grad[0];
  });
}

/// KL(target || predicted) over flat distributions, with 0*log0 := 0 and the
/// predicted side floored at eps before the log so early-training underflow
/// yields a large finite penalty instead of Inf.
template <class T>
TensorPtr<T> kl_loss(Tape<T>* tape, const std::vector<T>& target, const TensorPtr<T>& predicted,
                     T eps = T(1e-9)) {
  if (target.size() != predicted->data.size())
    throw std::invalid_argument("kl_loss: size mismatch");
  T acc(0);
  for (std::size_t i = 0; i < target.size(); ++i) {
    const T t = target[i];
    if (t <= T(0)) continue;
    const T p = std::max(predicted->data[i], eps);
    acc += t * (std::log(t) - std::log(p));
  }
  auto out = scalar_tensor<T>(acc);
  if (!tape) return out;
  auto tgt = target;  // keep a copy alive in the closure
  return tape->record("kl_loss", {predicted}, out, [predicted, out, tgt = std::move(tgt), eps] {
    const T g = out->grad[0];
    for (std::size_t i = 0; i < tgt.size(); ++i) {
      const T t = tgt[i];
      if (t <= T(0)) continue;
      if (predicted->data[i] > eps) predicted->grad[i] -= g * t / predicted->data[i];
    }
  });
}

template <class T>
TensorPtr<T> mse_loss(Tape<T>* tape, const TensorPtr<T>& pred, const std::vector<T>& target) {
  if (target.size() != pred->data.size()) throw std::invalid_argument("mse_loss: size mismatch");
  const T inv_n = T(1) / T(target.size());
  T acc(0);
  for (std::size_t i = 0; i < target.size(); ++i) {
    const T d = pred->data[i] - target[i];
    acc += d * d;
  }
  auto out = scalar_tensor<T>(acc * inv_n);
  if (!tape) return out;
  auto tgt = target;
  return tape->record("mse_loss", {pred}, out, [pred, out, tgt = std::move(tgt), inv_n] {
    const T g = out->grad[0];
    for (std::size_t i = 0; i < tgt.size(); ++i)
      pred->grad[i] += g * T(2) * inv_n * (pred->data[i] - tgt[i]);
  });
}

/// Mean binary cross-entropy on logits against constant 0/1 targets
/// (numerically stable log-sum-exp form).
template <class T>
TensorPtr<T> bce_with_logits(Tape<T>* tape, const TensorPtr<T>& logits, const std::vector<T>& target) {
  if (target.size() != logits->data.size())
    throw std::invalid_argument("bce_with_logits: size mismatch");
  const T inv_n = T(1) / T(target.size());
  T acc(0);
  for (std::size_t i = 0; i < target.size(); ++i) {
    const T z = logits->data[i];
    // max(z,0) - z*y + log(1 + exp(-|z|))
    acc += std::max(z, T(0)) - z * target[i] + std::log1p(std::exp(-std::abs(z)));
  }
  auto out = scalar_tensor<T>(acc * inv_n);
  if (!tape) return out;
  auto tgt = target;
  return tape->record("bce_with_logits", {logits}, out, [logits, out, tgt = std::move(tgt), inv_n] {
    const T g = out->grad[0];
    for (std::size_t i = 0; i < tgt.size(); ++i) {
      const T s = T(1) / (T(1) + std::exp(-logits->data[i]));
      logits->grad[i] += g * inv_n * (s - tgt[i]);
    }
  });
}

/// -log softmax(logits)[label].
template <class T>
TensorPtr<T> softmax_cross_entropy(Tape<T>* tape, const TensorPtr<T>& logits, int label) {
  const auto n = logits->numel();
  if (label < 0 || label >= n) throw std::invalid_argument("softmax_cross_entropy: label out of range");
  T mx = logits->data[0];
  for (T v : logits->data) mx = std::max(mx, v);
  T z(0);
  for (T v : logits->data) z += std::exp(v - mx);
  const T logz = std::log(z) + mx;
  auto out = scalar_tensor<T>(logz - logits->data[static_cast<std::size_t>(label)]);
  if (!tape) return out;
  return tape->record("softmax_xent", {logits}, out, [logits, out, label, logz] {
    const T g = out->grad[0];
    for (std::int64_t i = 0; i < logits->numel(); ++i) {
      const T p = std::exp(logits->data[static_cast<std::size_t>(i)] - logz);
      logits->grad[static_cast<std::size_t>(i)] += g * (p - (i == label ? T(1) : T(0)));
    }
  });
}

// ---- linear algebra ----

/// w: [M,N], x: [N] -> [M]
template <class T>
TensorPtr<T> matvec(Tape<T>* tape, const TensorPtr<T>& w, const TensorPtr<T>& x) {
  if (w->rank() != 2 || x->rank() != 1 || w->dim(1) != x->dim(0))
    throw std::invalid_argument("matvec: incompatible shapes " + shape_str(w->shape) + " * " +
                                shape_str(x->shape));
  const std::int64_t m = w->dim(0), n = w->dim(1);
  auto out = zeros<T>({m});
  for (std::int64_t i = 0; i < m; ++i) {
    const T* row = &w->data[static_cast<std::size_t>(i * n)];
    T acc(0);
    for (std::int64_t j = 0; j < n; ++j) acc += row[j] * x->data[static_cast<std::size_t>(j)];
    out->data[static_cast<std::size_t>(i)] = acc;
  }
  if (!tape) return out;
  return tape->record("matvec", {w, x}, out, [w, x, out, m, n] {
    for (std::int64_t i = 0; i < m; ++i) {
      const T g = out->grad[static_cast<std::size_t>(i)];
      if (g == T(0)) continue;
      const T* row = &w->data[static_cast<std::size_t>(i * n)];
      T* wg = &w->grad[static_cast<std::size_t>(i * n)];
      for (std::int64_t j = 0; j < n; ++j) {
        wg[j] += g * x->data[static_cast<std::size_t>(j)];
        x->grad[static_cast<std::size_t>(j)] += g * row[j];
      }
    }
  });
}

// ---- shape plumbing ----

template <class T>
TensorPtr<T> concat_vec(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  if (a->rank() != 1 || b->rank() != 1) throw std::invalid_argument("concat_vec: expects vectors");
  auto out = zeros<T>({a->dim(0) + b->dim(0)});
  std::copy(a->data.begin(), a->data.end(), out->data.begin());
  std::copy(b->data.begin(), b->data.end(), out->data.begin() + a->numel());
  if (!tape) return out;
  return tape->record("concat_vec", {a, b}, out, [a, b, out] {
    const std::size_t na = a->data.size();
    for (std::size_t i = 0; i < na; ++i) a->grad[i] += out->grad[i];
    for (std::size_t i = 0; i < b->data.size(); ++i) b->grad[i] += out->grad[na + i];
  });
}

template <class T>
TensorPtr<T> slice_vec(Tape<T>* tape, const TensorPtr<T>& x, std::int64_t start, std::int64_t len) {
  if (x->rank() != 1 || start < 0 || start + len > x->dim(0))
    throw std::invalid_argument("slice_vec: range out of bounds");
  auto out = zeros<T>({len});
  std::copy(x->data.begin() + start, x->data.begin() + start + len, out->data.begin());
  if (!tape) return out;
  return tape->record("slice_vec", {x}, out, [x, out, start] {
    for (std::size_t i = 0; i < out->data.size(); ++i)
      x->grad[static_cast<std::size_t>(start) + i] += out->grad[i];
  });
}

template <class T>
TensorPtr<T> concat_channels(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  if (a->rank() != 3 || b->rank() != 3 || a->dim(1) != b->dim(1) || a->dim(2) != b->dim(2))
    throw std::invalid_argument("concat_channels: spatial dims differ");
  auto out = zeros<T>({a->dim(0) + b->dim(0), a->dim(1), a->dim(2)});
  std::copy(a->data.begin(), a->data.end(), out->data.begin());
  std::copy(b->data.begin(), b->data.end(), out->data.begin() + a->numel());
  if (!tape) return out;
  return tape->record("concat_channels", {a, b}, out, [a, b, out] {
    const std::size_t na = a->data.size();
    for (std::size_t i = 0; i < na; ++i) a->grad[i] += out->grad[i];
    for (std::size_t i = 0; i < b->data.size(); ++i) b->grad[i] += out->grad[na + i];
  });
}

/// Rows of `table` ([V,D]) gathered into [n,D]; backward scatter-adds.
template <class T>
TensorPtr<T> embedding_lookup(Tape<T>* tape, const TensorPtr<T>& table, const std::vector<int>& ids) {
  if (table->rank() != 2) throw std::invalid_argument("embedding_lookup: table must be [V,D]");
  const std::int64_t v = table->dim(0), d = table->dim(1);
  auto out = zeros<T>({static_cast<std::int64_t>(ids.size()), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= v) throw std::invalid_argument("embedding_lookup: id out of range");
    std::copy_n(table->data.begin() + ids[i] * d, d, out->data.begin() + static_cast<std::int64_t>(i) * d);
  }
  if (!tape) return out;
  auto idcopy = ids;
  return tape->record("embedding_lookup", {table}, out, [table, out, idcopy = std::move(idcopy), d] {
    for (std::size_t i = 0; i < idcopy.size(); ++i)
      for (std::int64_t j = 0; j < d; ++j)
        table->grad[static_cast<std::size_t>(idcopy[i] * d + j)] +=
            out->grad[i * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)];
  });
}

template <class T>
TensorPtr<T> reshape(Tape<T>* tape, const TensorPtr<T>& x, Shape new_shape) {
  if (shape_numel(new_shape) != x->numel()) throw std::invalid_argument("reshape: numel mismatch");
  auto out = make_tensor<T>(std::move(new_shape), x->data);
  if (!tape) return out;
  return tape->record("reshape", {x}, out, [x, out] {
    for (std::size_t i = 0; i < x->data.size(); ++i) x->grad[i] += out->grad[i];
  });
}

// ---- convolution family ----

/// Cross-correlation (no kernel flip). input [Cin,H,W], kernel
/// [Cout,Cin,kh,kw] -> [Cout,H',W'] with H' = (H + 2p - kh)/stride + 1.
template <class T>
TensorPtr<T> conv2d(Tape<T>* tape, const TensorPtr<T>& input, const TensorPtr<T>& kernel, int stride,
                    int padding) {
  if (input->rank() != 3 || kernel->rank() != 4)
    throw std::invalid_argument("conv2d: expects input [Cin,H,W], kernel [Cout,Cin,kh,kw]");
  const std::int64_t cin = input->dim(0), h = input->dim(1), w = input->dim(2);
  const std::int64_t cout = kernel->dim(0), kh = kernel->dim(2), kw = kernel->dim(3);
  if (kernel->dim(1) != cin)
    throw std::invalid_argument("conv2d: input channels " + std::to_string(cin) +
                                " do not match kernel channels " + std::to_string(kernel->dim(1)));
  const std::int64_t ho = (h + 2 * padding - kh) / stride + 1;
  const std::int64_t wo = (w + 2 * padding - kw) / stride + 1;
  if (h + 2 * padding < kh || w + 2 * padding < kw)
    throw std::invalid_argument("conv2d: kernel does not fit padded input");
  auto out = zeros<T>({cout, ho, wo});

  // kernel value hoisted, inner loop runs along the output row
  for (std::int64_t co = 0; co < cout; ++co)
    for (std::int64_t ci = 0; ci < cin; ++ci)
      for (std::int64_t ky = 0; ky < kh; ++ky)
        for (std::int64_t kx = 0; kx < kw; ++kx) {
          const T kval = kernel->data[static_cast<std::size_t>(((co * cin + ci) * kh + ky) * kw + kx)];
          if (kval == T(0)) continue;
          for (std::int64_t y = 0; y < ho; ++y) {
            const std::int64_t iy = y * stride - padding + ky;
            if (iy < 0 || iy >= h) continue;
            const T* irow = &input->data[static_cast<std::size_t>((ci * h + iy) * w)];
            T* orow = &out->data[static_cast<std::size_t>((co * ho + y) * wo)];
            const std::int64_t x0 = std::max<std::int64_t>(0, (padding - kx + stride - 1) / stride);
            const std::int64_t x1 = std::min(wo, (w - 1 + padding - kx) / stride + 1);
            for (std::int64_t x = x0; x < x1; ++x) orow[x] += kval * irow[x * stride - padding + kx];
          }
        }
  if (!tape) return out;
  return tape->record("conv2d", {input, kernel}, out,
                      [input, kernel, out, stride, padding, cin, cout, h, w, kh, kw, ho, wo] {
    for (std::int64_t co = 0; co < cout; ++co)
      for (std::int64_t ci = 0; ci < cin; ++ci)
        for (std::int64_t ky = 0; ky < kh; ++ky)
          for (std::int64_t kx = 0; kx < kw; ++kx) {
            const std::size_t kidx = static_cast<std::size_t>(((co * cin + ci) * kh + ky) * kw + kx);
            const T kval = kernel->data[kidx];
            T kgrad(0);
            for (std::int64_t y = 0; y < ho; ++y) {
              const std::int64_t iy = y * stride - padding + ky;
              if (iy < 0 || iy >= h) continue;
              const T* irow = &input->data[static_cast<std::size_t>((ci * h + iy) * w)];
              T* igrow = &input->grad[static_cast<std::size_t>((ci * h + iy) * w)];
              const T* ogrow = &out->grad[static_cast<std::size_t>((co * ho + y) * wo)];
              const std::int64_t x0 = std::max<std::int64_t>(0, (padding - kx + stride - 1) / stride);
              const std::int64_t x1 = std::min(wo, (w - 1 + padding - kx) / stride + 1);
              for (std::int64_t x = x0; x < x1; ++x) {
                const T g = ogrow[x];
                kgrad += g * irow[x * stride - padding + kx];
                igrow[x * stride - padding + kx] += g * kval;
              }
            }
            kernel->grad[kidx] += kgrad;
          }
  });
}

/// Transposed convolution, the adjoint of conv2d under the same stride and
/// padding. input [Cin,H,W], kernel [Cin,Cout,kh,kw] -> [Cout,H',W'] with
/// H' = (H-1)*stride - 2p + kh.
template <class T>
TensorPtr<T> deconv2d(Tape<T>* tape, const TensorPtr<T>& input, const TensorPtr<T>& kernel, int stride,
                      int padding) {
  if (input->rank() != 3 || kernel->rank() != 4)
    throw std::invalid_argument("deconv2d: expects input [Cin,H,W], kernel [Cin,Cout,kh,kw]");
  const std::int64_t cin = input->dim(0), h = input->dim(1), w = input->dim(2);
  const std::int64_t cout = kernel->dim(1), kh = kernel->dim(2), kw = kernel->dim(3);
  if (kernel->dim(0) != cin)
    throw std::invalid_argument("deconv2d: input channels " + std::to_string(cin) +
                                " do not match kernel channels " + std::to_string(kernel->dim(0)));
  const std::int64_t ho = (h - 1) * stride - 2 * padding + kh;
  const std::int64_t wo = (w - 1) * stride - 2 * padding + kw;
  if (ho <= 0 || wo <= 0) throw std::invalid_argument("deconv2d: empty output");
  auto out = zeros<T>({cout, ho, wo});
  for (std::int64_t ci = 0; ci < cin; ++ci)
    for (std::int64_t co = 0; co < cout; ++co)
      for (std::int64_t ky = 0; ky < kh; ++ky)
        for (std::int64_t kx = 0; kx < kw; ++kx) {
          const T kval = kernel->data[static_cast<std::size_t>(((ci * cout + co) * kh + ky) * kw + kx)];
          if (kval == T(0)) continue;
          for (std::int64_t y = 0; y < h; ++y) {
            const std::int64_t oy = y * stride - padding + ky;
            if (oy < 0 || oy >= ho) continue;
            const T* irow = &input->data[static_cast<std::size_t>((ci * h + y) * w)];
            T* orow = &out->data[static_cast<std::size_t>((co * ho + oy) * wo)];
            for (std::int64_t x = 0; x < w; ++x) {
              const std::int64_t ox = x * stride - padding + kx;
              if (ox < 0 || ox >= wo) continue;
              orow[ox] += kval * irow[x];
            }
          }
        }
  if (!tape) return out;
  return tape->record("deconv2d", {input, kernel}, out,
                      [input, kernel, out, stride, padding, cin, cout, h, w, kh, kw, ho, wo] {
    for (std::int64_t ci = 0; ci < cin; ++ci)
      for (std::int64_t co = 0; co < cout; ++co)
        for (std::int64_t ky = 0; ky < kh; ++ky)
          for (std::int64_t kx = 0; kx < kw; ++kx) {
            const std::size_t kidx = static_cast<std::size_t>(((ci * cout + co) * kh + ky) * kw + kx);
            const T kval = kernel->data[kidx];
            T kgrad(0);
            for (std::int64_t y = 0; y < h; ++y) {
              const std::int64_t oy = y * stride - padding + ky;
              if (oy < 0 || oy >= ho) continue;
              const T* irow = &input->data[static_cast<std::size_t>((ci * h + y) * w)];
              T* igrow = &input->grad[static_cast<std::size_t>((ci * h + y) * w)];
              const T* ogrow = &out->grad[static_cast<std::size_t>((co * ho + oy) * wo)];
              for (std::int64_t x = 0; x < w; ++x) {
                const std::int64_t ox = x * stride - padding + kx;
                if (ox < 0 || ox >= wo) continue;
                kgrad += ogrow[ox] * irow[x];
                igrow[x] += ogrow[ox] * kval;
              }
            }
            kernel->grad[kidx] += kgrad;
          }
  });
}

/// 1x1 convolution where the kernel itself is a graph tensor ([Cout,Cin]),
/// e.g. predicted from the instruction embedding.
template <class T>
TensorPtr<T> conv1x1(Tape<T>* tape, const TensorPtr<T>& input, const TensorPtr<T>& kernel) {
  if (input->rank() != 3 || kernel->rank() != 2 || kernel->dim(1) != input->dim(0))
    throw std::invalid_argument("conv1x1: expects input [Cin,H,W], kernel [Cout,Cin]");
  const std::int64_t cin = input->dim(0), hw = input->dim(1) * input->dim(2);
  const std::int64_t cout = kernel->dim(0);
  auto out = zeros<T>({cout, input->dim(1), input->dim(2)});
  for (std::int64_t co = 0; co < cout; ++co)
    for (std::int64_t ci = 0; ci < cin; ++ci) {
      const T kval = kernel->data[static_cast<std::size_t>(co * cin + ci)];
      if (kval == T(0)) continue;
      const T* in = &input->data[static_cast<std::size_t>(ci * hw)];
      T* o = &out->data[static_cast<std::size_t>(co * hw)];
      for (std::int64_t i = 0; i < hw; ++i) o[i] += kval * in[i];
    }
  if (!tape) return out;
  return tape->record("conv1x1", {input, kernel}, out, [input, kernel, out, cin, cout, hw] {
    for (std::int64_t co = 0; co < cout; ++co)
      for (std::int64_t ci = 0; ci < cin; ++ci) {
        const std::size_t kidx = static_cast<std::size_t>(co * cin + ci);
        const T kval = kernel->data[kidx];
        const T* in = &input->data[static_cast<std::size_t>(ci * hw)];
        T* ig = &input->grad[static_cast<std::size_t>(ci * hw)];
        const T* og = &out->grad[static_cast<std::size_t>(co * hw)];
        T kgrad(0);
        for (std::int64_t i = 0; i < hw; ++i) {
          kgrad += og[i] * in[i];
          ig[i] += og[i] * kval;
        }
        kernel->grad[kidx] += kgrad;
      }
  });
}

/// Per-channel bias over a [C,H,W] tensor.
template <class T>
TensorPtr<T> bias_channels(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& bias) {
  if (x->rank() != 3 || bias->rank() != 1 || bias->dim(0) != x->dim(0))
    throw std::invalid_argument("bias_channels: bias must match channel count");
  const std::int64_t c = x->dim(0), hw = x->dim(1) * x->dim(2);
  auto out = zeros<T>(x->shape);
  for (std::int64_t ci = 0; ci < c; ++ci) {
    const T b = bias->data[static_cast<std::size_t>(ci)];
    for (std::int64_t i = 0; i < hw; ++i)
      out->data[static_cast<std::size_t>(ci * hw + i)] = x->data[static_cast<std::size_t>(ci * hw + i)] + b;
  }
  if (!tape) return out;
  return tape->record("bias_channels", {x, bias}, out, [x, bias, out, c, hw] {
    for (std::int64_t ci = 0; ci < c; ++ci) {
      T acc(0);
      for (std::int64_t i = 0; i < hw; ++i) {
        const T g = out->grad[static_cast<std::size_t>(ci * hw + i)];
        x->grad[static_cast<std::size_t>(ci * hw + i)] += g;
        acc += g;
      }
      bias->grad[static_cast<std::size_t>(ci)] += acc;
    }
  });
}

/// Softmax over the H*W cells of each channel independently; each output
/// channel is a valid distribution for any finite logits.
template <class T>
TensorPtr<T> channel_softmax(Tape<T>* tape, const TensorPtr<T>& logits) {
  if (logits->rank() != 3) throw std::invalid_argument("channel_softmax: expects [C,H,W]");
  const std::int64_t c = logits->dim(0), hw = logits->dim(1) * logits->dim(2);
  auto out = zeros<T>(logits->shape);
  for (std::int64_t ci = 0; ci < c; ++ci) {
    const T* in = &logits->data[static_cast<std::size_t>(ci * hw)];
    T* o = &out->data[static_cast<std::size_t>(ci * hw)];
    T mx = in[0];
    for (std::int64_t i = 1; i < hw; ++i) mx = std::max(mx, in[i]);
    T z(0);
    for (std::int64_t i = 0; i < hw; ++i) {
      o[i] = std::exp(in[i] - mx);
      z += o[i];
    }
    const T inv = T(1) / z;
    for (std::int64_t i = 0; i < hw; ++i) o[i] *= inv;
  }
  if (!tape) return out;
  return tape->record("channel_softmax", {logits}, out, [logits, out, c, hw] {
    for (std::int64_t ci = 0; ci < c; ++ci) {
      const T* p = &out->data[static_cast<std::size_t>(ci * hw)];
      const T* og = &out->grad[static_cast<std::size_t>(ci * hw)];
      T* ig = &logits->grad[static_cast<std::size_t>(ci * hw)];
      T dot(0);
      for (std::int64_t i = 0; i < hw; ++i) dot += og[i] * p[i];
      for (std::int64_t i = 0; i < hw; ++i) ig[i] += p[i] * (og[i] - dot);
    }
  });
}

/// Channel vector at one spatial cell of a [C,H,W] tensor -> [C].
template <class T>
TensorPtr<T> gather_cell(Tape<T>* tape, const TensorPtr<T>& x, int row, int col) {
  if (x->rank() != 3) throw std::invalid_argument("gather_cell: expects [C,H,W]");
  const std::int64_t c = x->dim(0), h = x->dim(1), w = x->dim(2);
  if (row < 0 || row >= h || col < 0 || col >= w)
    throw std::invalid_argument("gather_cell: cell out of bounds");
  auto out = zeros<T>({c});
  for (std::int64_t ci = 0; ci < c; ++ci)
    out->data[static_cast<std::size_t>(ci)] = x->data[static_cast<std::size_t>((ci * h + row) * w + col)];
  if (!tape) return out;
  return tape->record("gather_cell", {x}, out, [x, out, row, col, c, h, w] {
    for (std::int64_t ci = 0; ci < c; ++ci)
      x->grad[static_cast<std::size_t>((ci * h + row) * w + col)] +=
          out->grad[static_cast<std::size_t>(ci)];
  });
}

/// Bilinear rotation of a [C,H,W] tensor about the grid center by `angle`
/// radians (counter-clockwise in (col,row) coordinates); samples falling
/// outside the grid read as zero.
template <class T>
TensorPtr<T> rotate_bilinear(Tape<T>* tape, const TensorPtr<T>& x, double angle) {
  if (x->rank() != 3) throw std::invalid_argument("rotate_bilinear: expects [C,H,W]");
  const std::int64_t c = x->dim(0), h = x->dim(1), w = x->dim(2);
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  const double ca = std::cos(-angle), sa = std::sin(-angle);
  // per output cell: source cell + 4 bilinear weights (shared across channels)
  struct Samp {
    std::int32_t idx00, idx01, idx10, idx11;
    T w00, w01, w10, w11;
  };
  std::vector<Samp> table(static_cast<std::size_t>(h * w));
  for (std::int64_t r = 0; r < h; ++r)
    for (std::int64_t col = 0; col < w; ++col) {
      const double dx = static_cast<double>(col) - cx, dy = static_cast<double>(r) - cy;
      const double sxf = ca * dx - sa * dy + cx;
      const double syf = sa * dx + ca * dy + cy;
      Samp s{-1, -1, -1, -1, T(0), T(0), T(0), T(0)};
      const std::int64_t x0 = static_cast<std::int64_t>(std::floor(sxf));
      const std::int64_t y0 = static_cast<std::int64_t>(std::floor(syf));
      const double fx = sxf - static_cast<double>(x0), fy = syf - static_cast<double>(y0);
      auto at = [&](std::int64_t yy, std::int64_t xx) -> std::int32_t {
        if (yy < 0 || yy >= h || xx < 0 || xx >= w) return -1;
        return static_cast<std::int32_t>(yy * w + xx);
      };
      s.idx00 = at(y0, x0);
      s.idx01 = at(y0, x0 + 1);
      s.idx10 = at(y0 + 1, x0);
      s.idx11 = at(y0 + 1, x0 + 1);
      s.w00 = static_cast<T>((1 - fx) * (1 - fy));
      s.w01 = static_cast<T>(fx * (1 - fy));
      s.w10 = static_cast<T>((1 - fx) * fy);
      s.w11 = static_cast<T>(fx * fy);
      table[static_cast<std::size_t>(r * w + col)] = s;
    }
  auto out = zeros<T>(x->shape);
  const std::int64_t hw = h * w;
  for (std::int64_t ci = 0; ci < c; ++ci) {
    const T* in = &x->data[static_cast<std::size_t>(ci * hw)];
    T* o = &out->data[static_cast<std::size_t>(ci * hw)];
    for (std::int64_t i = 0; i < hw; ++i) {
      const Samp& s = table[static_cast<std::size_t>(i)];
      T v(0);
      if (s.idx00 >= 0) v += s.w00 * in[s.idx00];
      if (s.idx01 >= 0) v += s.w01 * in[s.idx01];
      if (s.idx10 >= 0) v += s.w10 * in[s.idx10];
      if (s.idx11 >= 0) v += s.w11 * in[s.idx11];
      o[i] = v;
    }
  }
  if (!tape) return out;
  return tape->record("rotate_bilinear", {x}, out, [x, out, table = std::move(table), c, hw] {
    for (std::int64_t ci = 0; ci < c; ++ci) {
      T* ig = &x->grad[static_cast<std::size_t>(ci * hw)];
      const T* og = &out->grad[static_cast<std::size_t>(ci * hw)];
      for (std::int64_t i = 0; i < hw; ++i) {
        const auto& s = table[static_cast<std::size_t>(i)];
        const T g = og[i];
        if (g == T(0)) continue;
        if (s.idx00 >= 0) ig[s.idx00] += s.w00 * g;
        if (s.idx01 >= 0) ig[s.idx01] += s.w01 * g;
        if (s.idx10 >= 0) ig[s.idx10] += s.w10 * g;
        if (s.idx11 >= 0) ig[s.idx11] += s.w11 * g;
      }
    }
  });
}

// ---- LSTM ----

template <class T>
struct LstmWeights {
  TensorPtr<T> w_ih;  // [4H, D] gate order: input, forget, cell, output
  TensorPtr<T> w_hh;  // [4H, H]
  TensorPtr<T> bias;  // [4H]
};

template <class T>
struct LstmState {
  TensorPtr<T> h;
  TensorPtr<T> c;
};

/// Standard LSTM cell: sigmoid input/forget/output gates, tanh candidate.
template <class T>
LstmState<T> lstm_cell(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& h_prev,
                       const TensorPtr<T>& c_prev, const LstmWeights<T>& w) {
  const std::int64_t hidden = h_prev->dim(0);
  if (w.w_ih->dim(0) != 4 * hidden || w.w_hh->dim(0) != 4 * hidden || w.w_hh->dim(1) != hidden ||
      w.bias->dim(0) != 4 * hidden || c_prev->dim(0) != hidden)
    throw std::invalid_argument("lstm_cell: inconsistent hidden sizes");
  auto z = add(tape, add(tape, matvec(tape, w.w_ih, x), matvec(tape, w.w_hh, h_prev)), w.bias);
  auto gate_i = sigmoid(tape, slice_vec(tape, z, 0, hidden));
  auto gate_f = sigmoid(tape, slice_vec(tape, z, hidden, hidden));
  auto cand = tanh_op(tape, slice_vec(tape, z, 2 * hidden, hidden));
  auto gate_o = sigmoid(tape, slice_vec(tape, z, 3 * hidden, hidden));
  auto c = add(tape, mul(tape, gate_f, c_prev), mul(tape, gate_i, cand));
  auto h = mul(tape, gate_o, tanh_op(tape, c));
  return {h, c};
}

}  // namespace pvn
