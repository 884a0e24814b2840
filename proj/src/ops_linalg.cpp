// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <cmath>

#include "ide/ops.hpp"

namespace ide {

namespace {

std::atomic<bool> g_corrupt_matmul{false};

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MapC = Eigen::Map<const RowMat<S>>;
template <typename S>
using Map = Eigen::Map<RowMat<S>>;

void check_finite_or_throw(bool ok, const char* op) {
  if (!ok) throw NumericError(std::string(op) + ": non-finite input");
}

}  // namespace

void set_matmul_grad_corruption(bool enabled) { g_corrupt_matmul = enabled; }

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw DimensionError("matmul: incompatible shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
  }
  const Index m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  typename Tensor<S>::Array out(m * n);
  Map<S>(out.data(), m, n).noalias() = MapC<S>(a.data(), m, k) * MapC<S>(b.data(), k, n);
  return make_result<S>({m, n}, std::move(out), {a, b}, "matmul", [m, k, n](const Node<S>& self) {
    Node<S>& na = *self.parents[0];
    Node<S>& nb = *self.parents[1];
    MapC<S> g(self.grad.data(), m, n);
    if (na.requires_grad) {
      Map<S> ga(na.grad_buffer().data(), m, k);
      ga.noalias() += g * MapC<S>(nb.value.data(), k, n).transpose();
      if (g_corrupt_matmul) ga.array() *= S(1.01);
    }
    if (nb.requires_grad) {
      Map<S> gb(nb.grad_buffer().data(), k, n);
      gb.noalias() += MapC<S>(na.value.data(), m, k).transpose() * g;
    }
  });
}

template <typename S>
Tensor<S> bmm(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.shape()[0] != b.shape()[0] || a.shape()[2] != b.shape()[1]) {
    throw DimensionError("bmm: incompatible shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
  }
  const Index batch = a.shape()[0], m = a.shape()[1], k = a.shape()[2], n = b.shape()[2];
  typename Tensor<S>::Array out(batch * m * n);
  for (Index i = 0; i < batch; ++i) {
    Map<S>(out.data() + i * m * n, m, n).noalias() =
        MapC<S>(a.data() + i * m * k, m, k) * MapC<S>(b.data() + i * k * n, k, n);
  }
  return make_result<S>({batch, m, n}, std::move(out), {a, b}, "bmm", [batch, m, k, n](const Node<S>& self) {
    Node<S>& na = *self.parents[0];
    Node<S>& nb = *self.parents[1];
    for (Index i = 0; i < batch; ++i) {
      MapC<S> g(self.grad.data() + i * m * n, m, n);
      if (na.requires_grad) {
        Map<S>(na.grad_buffer().data() + i * m * k, m, k).noalias() +=
            g * MapC<S>(nb.value.data() + i * k * n, k, n).transpose();
      }
      if (nb.requires_grad) {
        Map<S>(nb.grad_buffer().data() + i * k * n, k, n).noalias() +=
            MapC<S>(na.value.data() + i * m * k, m, k).transpose() * g;
      }
    }
  });
}

template <typename S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias) {
  if (x.rank() < 1 || w.rank() != 2 || x.shape().back() != w.shape()[0]) {
    throw DimensionError("linear: input " + to_string(x.shape()) + " does not match weight " + to_string(w.shape()));
  }
  const Index k = w.shape()[0], n = w.shape()[1];
  Shape out_shape = x.shape();
  out_shape.back() = n;
  Tensor<S> y = matmul(reshape(x, {x.size() / k, k}), w);
  if (bias.defined()) y = add(y, bias);
  return reshape(y, out_shape);
}

namespace {

// Softmax-family along an arbitrary axis: data viewed as [outer x K x inner].
struct AxisView {
  Index outer = 1, k = 1, inner = 1;
};

template <typename S>
AxisView axis_view(const Tensor<S>& x, int axis) {
  const int r = x.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw DimensionError("softmax: axis out of range for " + to_string(x.shape()));
  AxisView v;
  for (int i = 0; i < axis; ++i) v.outer *= x.shape()[i];
  for (int i = axis + 1; i < r; ++i) v.inner *= x.shape()[i];
  v.k = x.shape()[axis];
  return v;
}

template <typename S>
typename Tensor<S>::Array softmax_values(const Tensor<S>& x, const AxisView& v, bool log_space) {
  typename Tensor<S>::Array out(x.size());
  const S* xv = x.data();
  for (Index o = 0; o < v.outer; ++o) {
    for (Index i = 0; i < v.inner; ++i) {
      const Index base = o * v.k * v.inner + i;
      S mx = xv[base];
      for (Index j = 0; j < v.k; ++j) {
        const S val = xv[base + j * v.inner];
        check_finite_or_throw(std::isfinite(val), "softmax");
        mx = std::max(mx, val);
      }
      S total = 0;
      for (Index j = 0; j < v.k; ++j) {
        const S e = std::exp(xv[base + j * v.inner] - mx);
        out[base + j * v.inner] = e;
        total += e;
      }
      if (log_space) {
        const S lse = std::log(total);
        for (Index j = 0; j < v.k; ++j) out[base + j * v.inner] = xv[base + j * v.inner] - mx - lse;
      } else {
        const S inv = S(1) / total;
        for (Index j = 0; j < v.k; ++j) out[base + j * v.inner] *= inv;
      }
    }
  }
  return out;
}

}  // namespace

template <typename S>
Tensor<S> softmax(const Tensor<S>& x, int axis) {
  const AxisView v = axis_view(x, axis);
  auto out = softmax_values(x, v, false);
  return make_result<S>(x.shape(), std::move(out), {x}, "softmax", [v](const Node<S>& self) {
    auto& gx = self.parents[0]->grad_buffer();
    const auto& y = self.value;
    const auto& g = self.grad;
    for (Index o = 0; o < v.outer; ++o) {
      for (Index i = 0; i < v.inner; ++i) {
        const Index base = o * v.k * v.inner + i;
        S dot = 0;
        for (Index j = 0; j < v.k; ++j) dot += g[base + j * v.inner] * y[base + j * v.inner];
        for (Index j = 0; j < v.k; ++j) {
          const Index p = base + j * v.inner;
          gx[p] += y[p] * (g[p] - dot);
        }
      }
    }
  });
}

template <typename S>
Tensor<S> log_softmax(const Tensor<S>& x, int axis) {
  const AxisView v = axis_view(x, axis);
  auto out = softmax_values(x, v, true);
  return make_result<S>(x.shape(), std::move(out), {x}, "log_softmax", [v](const Node<S>& self) {
    auto& gx = self.parents[0]->grad_buffer();
    const auto& y = self.value;
    const auto& g = self.grad;
    for (Index o = 0; o < v.outer; ++o) {
      for (Index i = 0; i < v.inner; ++i) {
        const Index base = o * v.k * v.inner + i;
        S total = 0;
        for (Index j = 0; j < v.k; ++j) total += g[base + j * v.inner];
        for (Index j = 0; j < v.k; ++j) {
          const Index p = base + j * v.inner;
          gx[p] += g[p] - std::exp(y[p]) * total;
        }
      }
    }
  });
}

namespace {

// Shared normalization kernel: `rows` groups of `len` contiguous elements.
// Channel of element e within group r is channel_of(r, e); affine per channel.
template <typename S, typename ChannelOf>
Tensor<S> normalize_groups(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta, S eps, Index rows,
                           Index len, ChannelOf channel_of, const char* name) {
  using Array = typename Tensor<S>::Array;
  auto xhat = std::make_shared<Array>(x.size());
  auto inv_std = std::make_shared<Array>(rows);
  Array out(x.size());
  const S* xv = x.data();
  const S* gv = gamma.data();
  const S* bv = beta.data();
  for (Index r = 0; r < rows; ++r) {
    const S* row = xv + r * len;
    S mu = 0;
    for (Index e = 0; e < len; ++e) mu += row[e];
    mu /= static_cast<S>(len);
    S var = 0;
    for (Index e = 0; e < len; ++e) var += (row[e] - mu) * (row[e] - mu);
    var /= static_cast<S>(len);
    const S is = S(1) / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (Index e = 0; e < len; ++e) {
      const S h = (row[e] - mu) * is;
      (*xhat)[r * len + e] = h;
      const Index c = channel_of(r, e);
      out[r * len + e] = h * gv[c] + bv[c];
    }
  }
  return make_result<S>(x.shape(), std::move(out), {x, gamma, beta}, name,
                        [xhat, inv_std, rows, len, channel_of](const Node<S>& self) {
                          Node<S>& nx = *self.parents[0];
                          Node<S>& ng = *self.parents[1];
                          Node<S>& nb = *self.parents[2];
                          const auto& g = self.grad;
                          const S* gam = ng.value.data();
                          if (ng.requires_grad || nb.requires_grad) {
                            auto* gg = ng.requires_grad ? &ng.grad_buffer() : nullptr;
                            auto* gb = nb.requires_grad ? &nb.grad_buffer() : nullptr;
                            for (Index r = 0; r < rows; ++r)
                              for (Index e = 0; e < len; ++e) {
                                const Index p = r * len + e;
                                const Index c = channel_of(r, e);
                                if (gg) (*gg)[c] += g[p] * (*xhat)[p];
                                if (gb) (*gb)[c] += g[p];
                              }
                          }
                          if (!nx.requires_grad) return;
                          auto& gx = nx.grad_buffer();
                          for (Index r = 0; r < rows; ++r) {
                            S m1 = 0, m2 = 0;
                            for (Index e = 0; e < len; ++e) {
                              const Index p = r * len + e;
                              const S gh = g[p] * gam[channel_of(r, e)];
                              m1 += gh;
                              m2 += gh * (*xhat)[p];
                            }
                            m1 /= static_cast<S>(len);
                            m2 /= static_cast<S>(len);
                            const S is = (*inv_std)[r];
                            for (Index e = 0; e < len; ++e) {
                              const Index p = r * len + e;
                              const S gh = g[p] * gam[channel_of(r, e)];
                              gx[p] += is * (gh - m1 - (*xhat)[p] * m2);
                            }
                          }
                        });
}

}  // namespace

template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta, S eps) {
  const Index c = x.shape().back();
  if (gamma.size() != c || beta.size() != c) {
    throw DimensionError("layer_norm: affine size does not match " + to_string(x.shape()));
  }
  return normalize_groups<S>(x, gamma, beta, eps, x.size() / c, c, [](Index, Index e) { return e; }, "layer_norm");
}

template <typename S>
Tensor<S> group_norm(const Tensor<S>& x, int groups, const Tensor<S>& gamma, const Tensor<S>& beta, S eps) {
  if (x.rank() != 4) throw DimensionError("group_norm expects [N x C x H x W], got " + to_string(x.shape()));
  const Index n = x.shape()[0], c = x.shape()[1], hw = x.shape()[2] * x.shape()[3];
  if (groups <= 0 || c % groups != 0) throw DimensionError("group_norm: channels not divisible by groups");
  if (gamma.size() != c || beta.size() != c) throw DimensionError("group_norm: affine size mismatch");
  const Index per = c / groups;
  const Index len = per * hw;
  return normalize_groups<S>(
      x, gamma, beta, eps, n * groups, len,
      [groups, per, hw](Index r, Index e) { return (r % groups) * per + e / hw; }, "group_norm");
}

#define IDE_INSTANTIATE(S)                                                                         \
  template Tensor<S> matmul<S>(const Tensor<S>&, const Tensor<S>&);                                \
  template Tensor<S> bmm<S>(const Tensor<S>&, const Tensor<S>&);                                   \
  template Tensor<S> linear<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);              \
  template Tensor<S> softmax<S>(const Tensor<S>&, int);                                            \
  template Tensor<S> log_softmax<S>(const Tensor<S>&, int);                                        \
  template Tensor<S> layer_norm<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, S);       \
  template Tensor<S> group_norm<S>(const Tensor<S>&, int, const Tensor<S>&, const Tensor<S>&, S);

IDE_INSTANTIATE(float)
IDE_INSTANTIATE(double)

}  // namespace ide
