#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "ssltsc/core/autograd.hpp"

// Differentiable operations over Var<T>. Layouts: series batches are
// (batch, channels, time); feature matrices are (batch, features).

namespace ssltsc::nn {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
void check_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw InternalError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
  }
}

template <typename T>
void accumulate(const typename Node<T>::Ptr& p, const Tensor<T>& g, T scale = T{1}) {
  if (!p->requires_grad) return;
  auto& dst = p->grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += scale * g[i];
}

// Row-wise log-sum-exp of a (rows, cols) matrix.
template <typename T>
std::vector<T> row_logsumexp(const Tensor<T>& x) {
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<T> out(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const T* r = x.data() + i * cols;
    const T m = *std::max_element(r, r + cols);
    T s = 0;
    for (std::size_t k = 0; k < cols; ++k) s += std::exp(r[k] - m);
    out[i] = m + std::log(s);
  }
  return out;
}

}  // namespace detail

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::check_same_shape(a, b, "add");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](const Tensor<T>& g, const auto& ps) {
    detail::accumulate<T>(ps[0], g);
    detail::accumulate<T>(ps[1], g);
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  detail::check_same_shape(a, b, "sub");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](const Tensor<T>& g, const auto& ps) {
    detail::accumulate<T>(ps[0], g);
    detail::accumulate<T>(ps[1], g, T{-1});
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::check_same_shape(a, b, "mul");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](const Tensor<T>& g, const auto& ps) {
    if (ps[0]->requires_grad) {
      auto& d = ps[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * ps[1]->value[i];
    }
    if (ps[1]->requires_grad) {
      auto& d = ps[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * ps[0]->value[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v *= s;
  return make_result<T>(std::move(out), {a}, [s](const Tensor<T>& g, const auto& ps) {
    detail::accumulate<T>(ps[0], g, s);
  });
}

/// a + c for a constant tensor c (noise injection, fixed offsets).
template <typename T>
Var<T> add_constant(const Var<T>& a, const Tensor<T>& c) {
  return add(a, Var<T>::constant(c));
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  T s = 0;
  for (T v : a.value().values()) s += v;
  return make_result<T>(Tensor<T>(Shape{}, s), {a}, [](const Tensor<T>& g, const auto& ps) {
    if (!ps[0]->requires_grad) return;
    auto& d = ps[0]->grad_buffer();
    for (auto& v : d.values()) v += g[0];
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  return scale(sum(a), T{1} / static_cast<T>(a.value().size()));
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  return make_result<T>(a.value().reshaped(std::move(shape)), {a},
                        [](const Tensor<T>& g, const auto& ps) { detail::accumulate<T>(ps[0], g); });
}

/// Concatenation along the leading (batch) dimension.
template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  std::vector<Tensor<T>> values;
  values.reserve(parts.size());
  for (const auto& p : parts) values.push_back(p.value());
  Tensor<T> out = ssltsc::concat_rows<T>(values);
  return make_result<T>(std::move(out), parts, [](const Tensor<T>& g, const auto& ps) {
    std::size_t offset = 0;
    for (const auto& p : ps) {
      const std::size_t n = p->value.size();
      if (p->requires_grad) {
        auto& d = p->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) d[i] += g[offset + i];
      }
      offset += n;
    }
  });
}

/// Rows [begin, end) of the leading dimension.
template <typename T>
Var<T> slice_rows(const Var<T>& a, std::size_t begin, std::size_t end) {
  const std::size_t stride = a.value().size() / a.dim(0);
  return make_result<T>(a.value().slice(begin, end), {a},
                        [begin, stride](const Tensor<T>& g, const auto& ps) {
                          if (!ps[0]->requires_grad) return;
                          auto& d = ps[0]->grad_buffer();
                          for (std::size_t i = 0; i < g.size(); ++i) d[begin * stride + i] += g[i];
                        });
}

/// Same-length 1-D convolution: x (b, cin, t), w (cout, cin, k), bias (cout).
/// Zero padding of (k-1)/2 on the left and the remainder on the right.
template <typename T>
Var<T> conv1d_same(const Var<T>& x, const Var<T>& w, const Var<T>& bias) {
  const std::size_t batch = x.dim(0), cin = x.dim(1), len = x.dim(2);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  if (w.dim(1) != cin) throw InternalError("conv1d_same: channel mismatch");
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>((k - 1) / 2);
  const std::size_t cols_w = batch * len;

  auto cols = std::make_shared<Tensor<T>>(Shape{cin * k, cols_w});
  const Tensor<T>& xv = x.value();
  for (std::size_t ci = 0; ci < cin; ++ci) {
    for (std::size_t j = 0; j < k; ++j) {
      T* row = cols->data() + (ci * k + j) * cols_w;
      const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - pad;
      for (std::size_t n = 0; n < batch; ++n) {
        const T* src = xv.data() + (n * cin + ci) * len;
        T* dst = row + n * len;
        for (std::size_t tau = 0; tau < len; ++tau) {
          const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(tau) + shift;
          dst[tau] = (s >= 0 && s < static_cast<std::ptrdiff_t>(len)) ? src[s] : T{0};
        }
      }
    }
  }

  detail::RowMat<T> y =
      detail::ConstMatMap<T>(w.value().data(), cout, cin * k) * detail::ConstMatMap<T>(cols->data(), cin * k, cols_w);
  Tensor<T> out(Shape{batch, cout, len});
  for (std::size_t co = 0; co < cout; ++co) {
    const T b = bias.value()[co];
    for (std::size_t n = 0; n < batch; ++n) {
      const T* src = y.data() + co * cols_w + n * len;
      T* dst = out.data() + (n * cout + co) * len;
      for (std::size_t tau = 0; tau < len; ++tau) dst[tau] = src[tau] + b;
    }
  }

  return make_result<T>(
      std::move(out), {x, w, bias},
      [cols, batch, cin, len, cout, k, pad, cols_w](const Tensor<T>& g, const auto& ps) {
        detail::RowMat<T> gm(cout, cols_w);
        for (std::size_t co = 0; co < cout; ++co) {
          for (std::size_t n = 0; n < batch; ++n) {
            std::copy_n(g.data() + (n * cout + co) * len, len, gm.data() + co * cols_w + n * len);
          }
        }
        if (ps[1]->requires_grad) {
          detail::MatMap<T>(ps[1]->grad_buffer().data(), cout, cin * k).noalias() +=
              gm * detail::ConstMatMap<T>(cols->data(), cin * k, cols_w).transpose();
        }
        if (ps[2]->requires_grad) {
          auto& db = ps[2]->grad_buffer();
          for (std::size_t co = 0; co < cout; ++co) db[co] += gm.row(co).sum();
        }
        if (ps[0]->requires_grad) {
          detail::RowMat<T> dcols =
              detail::ConstMatMap<T>(ps[1]->value.data(), cout, cin * k).transpose() * gm;
          auto& dx = ps[0]->grad_buffer();
          for (std::size_t ci = 0; ci < cin; ++ci) {
            for (std::size_t j = 0; j < k; ++j) {
              const T* row = dcols.data() + (ci * k + j) * cols_w;
              const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - pad;
              for (std::size_t n = 0; n < batch; ++n) {
                T* dst = dx.data() + (n * cin + ci) * len;
                const T* src = row + n * len;
                for (std::size_t tau = 0; tau < len; ++tau) {
                  const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(tau) + shift;
                  if (s >= 0 && s < static_cast<std::ptrdiff_t>(len)) dst[s] += src[tau];
                }
              }
            }
          }
        }
      });
}

/// Per-channel statistics of a (b, c, t) batch over the batch and time axes.
template <typename T>
struct ChannelStats {
  std::vector<T> mean;
  std::vector<T> var;  // biased
  std::size_t count = 0;
};

template <typename T>
ChannelStats<T> channel_stats(const Tensor<T>& x) {
  const std::size_t batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
  ChannelStats<T> s{std::vector<T>(ch, 0), std::vector<T>(ch, 0), batch * len};
  for (std::size_t c = 0; c < ch; ++c) {
    double acc = 0;
    for (std::size_t n = 0; n < batch; ++n) {
      const T* r = x.data() + (n * ch + c) * len;
      for (std::size_t t = 0; t < len; ++t) acc += r[t];
    }
    const double m = acc / static_cast<double>(s.count);
    double sq = 0;
    for (std::size_t n = 0; n < batch; ++n) {
      const T* r = x.data() + (n * ch + c) * len;
      for (std::size_t t = 0; t < len; ++t) sq += (r[t] - m) * (r[t] - m);
    }
    s.mean[c] = static_cast<T>(m);
    s.var[c] = static_cast<T>(sq / static_cast<double>(s.count));
  }
  return s;
}

/// Batch normalization without affine transform, using the batch's own
/// per-channel statistics (training mode). Statistics are returned through
/// `stats` when non-null.
template <typename T>
Var<T> normalize_batch(const Var<T>& x, T eps, ChannelStats<T>* stats = nullptr) {
  const std::size_t batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
  ChannelStats<T> s = channel_stats(x.value());
  std::vector<T> inv_std(ch);
  for (std::size_t c = 0; c < ch; ++c) inv_std[c] = T{1} / std::sqrt(s.var[c] + eps);
  Tensor<T> out(x.shape());
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t c = 0; c < ch; ++c) {
      const T* src = x.value().data() + (n * ch + c) * len;
      T* dst = out.data() + (n * ch + c) * len;
      for (std::size_t t = 0; t < len; ++t) dst[t] = (src[t] - s.mean[c]) * inv_std[c];
    }
  }
  if (stats) *stats = s;
  auto y = std::make_shared<Tensor<T>>(out);
  return make_result<T>(std::move(out), {x}, [y, inv_std, batch, ch, len](const Tensor<T>& g, const auto& ps) {
    if (!ps[0]->requires_grad) return;
    auto& dx = ps[0]->grad_buffer();
    const T count = static_cast<T>(batch * len);
    for (std::size_t c = 0; c < ch; ++c) {
      T sum_g = 0, sum_gy = 0;
      for (std::size_t n = 0; n < batch; ++n) {
        const std::size_t off = (n * ch + c) * len;
        for (std::size_t t = 0; t < len; ++t) {
          sum_g += g[off + t];
          sum_gy += g[off + t] * (*y)[off + t];
        }
      }
      for (std::size_t n = 0; n < batch; ++n) {
        const std::size_t off = (n * ch + c) * len;
        for (std::size_t t = 0; t < len; ++t) {
          dx[off + t] += inv_std[c] / count * (count * g[off + t] - sum_g - (*y)[off + t] * sum_gy);
        }
      }
    }
  });
}

/// Normalization with fixed (running) statistics, evaluation mode.
template <typename T>
Var<T> normalize_fixed(const Var<T>& x, std::span<const T> mean, std::span<const T> var, T eps) {
  const std::size_t batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
  std::vector<T> inv_std(ch);
  for (std::size_t c = 0; c < ch; ++c) inv_std[c] = T{1} / std::sqrt(var[c] + eps);
  Tensor<T> out(x.shape());
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t c = 0; c < ch; ++c) {
      const T* src = x.value().data() + (n * ch + c) * len;
      T* dst = out.data() + (n * ch + c) * len;
      for (std::size_t t = 0; t < len; ++t) dst[t] = (src[t] - mean[c]) * inv_std[c];
    }
  }
  return make_result<T>(std::move(out), {x}, [inv_std, batch, ch, len](const Tensor<T>& g, const auto& ps) {
    if (!ps[0]->requires_grad) return;
    auto& dx = ps[0]->grad_buffer();
    for (std::size_t n = 0; n < batch; ++n) {
      for (std::size_t c = 0; c < ch; ++c) {
        const std::size_t off = (n * ch + c) * len;
        for (std::size_t t = 0; t < len; ++t) dx[off + t] += g[off + t] * inv_std[c];
      }
    }
  });
}

/// y[n,c,t] = gamma[c] * x[n,c,t] + beta[c]
template <typename T>
Var<T> channel_affine(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta) {
  const std::size_t batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
  Tensor<T> out(x.shape());
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t off = (n * ch + c) * len;
      for (std::size_t t = 0; t < len; ++t) out[off + t] = gamma.value()[c] * x.value()[off + t] + beta.value()[c];
    }
  }
  return make_result<T>(std::move(out), {x, gamma, beta}, [batch, ch, len](const Tensor<T>& g, const auto& ps) {
    for (std::size_t n = 0; n < batch; ++n) {
      for (std::size_t c = 0; c < ch; ++c) {
        const std::size_t off = (n * ch + c) * len;
        T sg = 0, sgx = 0;
        for (std::size_t t = 0; t < len; ++t) {
          sg += g[off + t];
          sgx += g[off + t] * ps[0]->value[off + t];
        }
        if (ps[1]->requires_grad) ps[1]->grad_buffer()[c] += sgx;
        if (ps[2]->requires_grad) ps[2]->grad_buffer()[c] += sg;
        if (ps[0]->requires_grad) {
          auto& dx = ps[0]->grad_buffer();
          const T gm = ps[1]->value[c];
          for (std::size_t t = 0; t < len; ++t) dx[off + t] += gm * g[off + t];
        }
      }
    }
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out = x.value();
  for (auto& v : out.values()) v = v < T{0} ? T{0} : v;  // NaN passes through
  return make_result<T>(std::move(out), {x}, [](const Tensor<T>& g, const auto& ps) {
    if (!ps[0]->requires_grad) return;
    auto& dx = ps[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (ps[0]->value[i] > T{0}) dx[i] += g[i];
    }
  });
}

/// Mean over the time axis: (b, c, t) -> (b, c).
template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  const std::size_t batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
  Tensor<T> out(Shape{batch, ch});
  for (std::size_t i = 0; i < batch * ch; ++i) {
    T s = 0;
    for (std::size_t t = 0; t < len; ++t) s += x.value()[i * len + t];
    out[i] = s / static_cast<T>(len);
  }
  return make_result<T>(std::move(out), {x}, [batch, ch, len](const Tensor<T>& g, const auto& ps) {
    if (!ps[0]->requires_grad) return;
    auto& dx = ps[0]->grad_buffer();
    for (std::size_t i = 0; i < batch * ch; ++i) {
      const T v = g[i] / static_cast<T>(len);
      for (std::size_t t = 0; t < len; ++t) dx[i * len + t] += v;
    }
  });
}

/// Repeats (b, c) along a new time axis: -> (b, c, t).
template <typename T>
Var<T> broadcast_time(const Var<T>& x, std::size_t len) {
  const std::size_t batch = x.dim(0), ch = x.dim(1);
  Tensor<T> out(Shape{batch, ch, len});
  for (std::size_t i = 0; i < batch * ch; ++i) {
    std::fill_n(out.data() + i * len, len, x.value()[i]);
  }
  return make_result<T>(std::move(out), {x}, [batch, ch, len](const Tensor<T>& g, const auto& ps) {
    if (!ps[0]->requires_grad) return;
    auto& dx = ps[0]->grad_buffer();
    for (std::size_t i = 0; i < batch * ch; ++i) {
      T s = 0;
      for (std::size_t t = 0; t < len; ++t) s += g[i * len + t];
      dx[i] += s;
    }
  });
}

/// x (b, f) * w (f, k) + bias (k).
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias) {
  const std::size_t batch = x.dim(0), in = x.dim(1), out_dim = w.dim(1);
  if (w.dim(0) != in) throw InternalError("linear: feature mismatch " + shape_str(x.shape()) + " x " + shape_str(w.shape()));
  Tensor<T> out(Shape{batch, out_dim});
  detail::MatMap<T> om(out.data(), batch, out_dim);
  om.noalias() = detail::ConstMatMap<T>(x.value().data(), batch, in) * detail::ConstMatMap<T>(w.value().data(), in, out_dim);
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t k = 0; k < out_dim; ++k) om(n, k) += bias.value()[k];
  }
  return make_result<T>(std::move(out), {x, w, bias}, [batch, in, out_dim](const Tensor<T>& g, const auto& ps) {
    detail::ConstMatMap<T> gm(g.data(), batch, out_dim);
    if (ps[0]->requires_grad) {
      detail::MatMap<T>(ps[0]->grad_buffer().data(), batch, in).noalias() +=
          gm * detail::ConstMatMap<T>(ps[1]->value.data(), in, out_dim).transpose();
    }
    if (ps[1]->requires_grad) {
      detail::MatMap<T>(ps[1]->grad_buffer().data(), in, out_dim).noalias() +=
          detail::ConstMatMap<T>(ps[0]->value.data(), batch, in).transpose() * gm;
    }
    if (ps[2]->requires_grad) {
      auto& db = ps[2]->grad_buffer();
      for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t k = 0; k < out_dim; ++k) db[k] += gm(n, k);
      }
    }
  });
}

/// Row-wise softmax of plain values, no graph.
template <typename T>
Tensor<T> softmax_values(const Tensor<T>& logits) {
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  const auto lse = detail::row_logsumexp(logits);
  Tensor<T> out(logits.shape());
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t k = 0; k < cols; ++k) out[i * cols + k] = std::exp(logits[i * cols + k] - lse[i]);
  }
  return out;
}

template <typename T>
Var<T> softmax(const Var<T>& logits) {
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  Tensor<T> out = softmax_values(logits.value());
  auto s = std::make_shared<Tensor<T>>(out);
  return make_result<T>(std::move(out), {logits}, [s, rows, cols](const Tensor<T>& g, const auto& ps) {
    if (!ps[0]->requires_grad) return;
    auto& dx = ps[0]->grad_buffer();
    for (std::size_t i = 0; i < rows; ++i) {
      T dot = 0;
      for (std::size_t k = 0; k < cols; ++k) dot += g[i * cols + k] * (*s)[i * cols + k];
      for (std::size_t k = 0; k < cols; ++k) dx[i * cols + k] += (*s)[i * cols + k] * (g[i * cols + k] - dot);
    }
  });
}

/// Mean over rows of the cross-entropy between soft targets q (rows sum to
/// any nonnegative mass) and softmax(logits).
template <typename T>
Var<T> soft_cross_entropy(const Var<T>& logits, const Tensor<T>& targets) {
  if (logits.shape() != targets.shape()) throw InternalError("soft_cross_entropy: shape mismatch");
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  if (rows == 0) throw EmptyBatchError("soft_cross_entropy: empty batch");
  const auto lse = detail::row_logsumexp(logits.value());
  T loss = 0;
  std::vector<T> mass(rows, 0);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t k = 0; k < cols; ++k) {
      const T q = targets[i * cols + k];
      mass[i] += q;
      loss += q * (lse[i] - logits.value()[i * cols + k]);
    }
  }
  loss /= static_cast<T>(rows);
  auto tgt = std::make_shared<Tensor<T>>(targets);
  return make_result<T>(Tensor<T>(Shape{}, loss), {logits},
                        [tgt, lse, mass, rows, cols](const Tensor<T>& g, const auto& ps) {
                          if (!ps[0]->requires_grad) return;
                          auto& dx = ps[0]->grad_buffer();
                          const T f = g[0] / static_cast<T>(rows);
                          for (std::size_t i = 0; i < rows; ++i) {
                            for (std::size_t k = 0; k < cols; ++k) {
                              const T p = std::exp(ps[0]->value[i * cols + k] - lse[i]);
                              dx[i * cols + k] += f * (p * mass[i] - (*tgt)[i * cols + k]);
                            }
                          }
                        });
}

template <typename T>
Tensor<T> one_hot(std::span<const int> labels, std::size_t n_classes) {
  Tensor<T> out(Shape{labels.size(), n_classes});
  for (std::size_t i = 0; i < labels.size(); ++i) out[i * n_classes + static_cast<std::size_t>(labels[i])] = T{1};
  return out;
}

/// Mean cross-entropy against integer labels.
template <typename T>
Var<T> cross_entropy(const Var<T>& logits, std::span<const int> labels) {
  return soft_cross_entropy(logits, one_hot<T>(labels, logits.dim(1)));
}

/// Mean over rows of KL(p || softmax(logits)); p is a constant target.
template <typename T>
Var<T> kl_divergence(const Tensor<T>& p, const Var<T>& logits) {
  T entropy_term = 0;
  for (T v : p.values()) {
    if (v > T{0}) entropy_term += v * std::log(v);
  }
  entropy_term /= static_cast<T>(p.dim(0));
  auto ce = soft_cross_entropy(logits, p);
  return add(ce, Var<T>::constant(Tensor<T>(Shape{}, entropy_term)));
}

/// Mean over rows of the squared Euclidean distance to a constant target.
/// With probability-vector inputs this is the multi-class Brier score.
template <typename T>
Var<T> row_squared_error(const Var<T>& a, const Tensor<T>& target) {
  if (a.shape() != target.shape()) throw InternalError("row_squared_error: shape mismatch");
  auto diff = sub(a, Var<T>::constant(target));
  return scale(sum(mul(diff, diff)), T{1} / static_cast<T>(a.dim(0)));
}

/// Mean over all elements of (a - b)^2.
template <typename T>
Var<T> mse(const Var<T>& a, const Var<T>& b) {
  auto diff = sub(a, b);
  return mean(mul(diff, diff));
}

/// Channel-wise Gaussian denoising combinator of a Ladder decoder layer.
/// z_tilde: lateral noisy activation (b, c, t); u: top-down signal (b, c, t);
/// a: (c, 10) parameters a1..a10.
///   mu = a1*sig(a2*u + a3) + a4*u + a5
///   v  = a6*sig(a7*u + a8) + a9*u + a10
///   z_hat = (z_tilde - mu) * v + mu
template <typename T>
Var<T> ladder_combinator(const Var<T>& z_tilde, const Var<T>& u, const Var<T>& a) {
  detail::check_same_shape(z_tilde, u, "ladder_combinator");
  const std::size_t batch = u.dim(0), ch = u.dim(1), len = u.dim(2);
  if (a.dim(0) != ch || a.dim(1) != 10) throw InternalError("ladder_combinator: parameter shape");
  auto sig = [](T v) { return T{1} / (T{1} + std::exp(-v)); };
  Tensor<T> out(u.shape());
  const auto& av = a.value();
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t c = 0; c < ch; ++c) {
      const T* p = av.data() + c * 10;
      const std::size_t off = (n * ch + c) * len;
      for (std::size_t t = 0; t < len; ++t) {
        const T uu = u.value()[off + t];
        const T mu = p[0] * sig(p[1] * uu + p[2]) + p[3] * uu + p[4];
        const T v = p[5] * sig(p[6] * uu + p[7]) + p[8] * uu + p[9];
        out[off + t] = (z_tilde.value()[off + t] - mu) * v + mu;
      }
    }
  }
  return make_result<T>(std::move(out), {z_tilde, u, a}, [sig, batch, ch, len](const Tensor<T>& g, const auto& ps) {
    const auto& zt = ps[0]->value;
    const auto& uv = ps[1]->value;
    const auto& av = ps[2]->value;
    for (std::size_t n = 0; n < batch; ++n) {
      for (std::size_t c = 0; c < ch; ++c) {
        const T* p = av.data() + c * 10;
        const std::size_t off = (n * ch + c) * len;
        T da[10] = {0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
        for (std::size_t t = 0; t < len; ++t) {
          const T uu = uv[off + t];
          const T s1 = sig(p[1] * uu + p[2]);
          const T s2 = sig(p[6] * uu + p[7]);
          const T mu = p[0] * s1 + p[3] * uu + p[4];
          const T v = p[5] * s2 + p[8] * uu + p[9];
          const T gg = g[off + t];
          const T d_mu = gg * (T{1} - v);
          const T d_v = gg * (zt[off + t] - mu);
          if (ps[0]->requires_grad) ps[0]->grad_buffer()[off + t] += gg * v;
          if (ps[1]->requires_grad) {
            const T dmu_du = p[0] * s1 * (T{1} - s1) * p[1] + p[3];
            const T dv_du = p[5] * s2 * (T{1} - s2) * p[6] + p[8];
            ps[1]->grad_buffer()[off + t] += d_mu * dmu_du + d_v * dv_du;
          }
          const T ds1 = s1 * (T{1} - s1);
          const T ds2 = s2 * (T{1} - s2);
          da[0] += d_mu * s1;
          da[1] += d_mu * p[0] * ds1 * uu;
          da[2] += d_mu * p[0] * ds1;
          da[3] += d_mu * uu;
          da[4] += d_mu;
          da[5] += d_v * s2;
          da[6] += d_v * p[5] * ds2 * uu;
          da[7] += d_v * p[5] * ds2;
          da[8] += d_v * uu;
          da[9] += d_v;
        }
        if (ps[2]->requires_grad) {
          auto& dA = ps[2]->grad_buffer();
          for (int i = 0; i < 10; ++i) dA[c * 10 + i] += da[i];
        }
      }
    }
  });
}

}  // namespace ssltsc::nn
