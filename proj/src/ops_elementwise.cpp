// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "ide/ops.hpp"

namespace ide {

namespace {

// Offsets of every output element into each broadcast operand.
struct BroadcastPlan {
  Shape out;
  bool same = false;
  std::shared_ptr<std::vector<Index>> ia, ib;
};

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const Index da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const Index db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw DimensionError("cannot broadcast " + to_string(a) + " with " + to_string(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

std::vector<Index> broadcast_offsets(const Shape& in, const Shape& out) {
  const std::size_t r = out.size();
  std::vector<Index> stride(r, 0);
  Index s = 1;
  for (std::size_t k = 0; k < in.size(); ++k) {
    const std::size_t axis_in = in.size() - 1 - k;
    const std::size_t axis_out = r - 1 - k;
    stride[axis_out] = in[axis_in] == 1 ? 0 : s;
    s *= in[axis_in];
  }
  const Index n = numel(out);
  std::vector<Index> offsets(n);
  std::vector<Index> idx(r, 0);
  Index off = 0;
  for (Index i = 0; i < n; ++i) {
    offsets[i] = off;
    for (int axis = static_cast<int>(r) - 1; axis >= 0; --axis) {
      if (++idx[axis] < out[axis]) {
        off += stride[axis];
        break;
      }
      off -= stride[axis] * (out[axis] - 1);
      idx[axis] = 0;
    }
  }
  return offsets;
}

BroadcastPlan plan(const Shape& a, const Shape& b) {
  BroadcastPlan p;
  if (a == b) {
    p.out = a;
    p.same = true;
    return p;
  }
  p.out = broadcast_shape(a, b);
  p.ia = std::make_shared<std::vector<Index>>(broadcast_offsets(a, p.out));
  p.ib = std::make_shared<std::vector<Index>>(broadcast_offsets(b, p.out));
  return p;
}

enum class BinOp { Add, Sub, Mul, Div };

template <typename S>
Tensor<S> binary(const Tensor<S>& a, const Tensor<S>& b, BinOp op, const char* name) {
  using Array = typename Tensor<S>::Array;
  BroadcastPlan p = plan(a.shape(), b.shape());
  Array out;
  if (p.same) {
    switch (op) {
      case BinOp::Add: out = a.value() + b.value(); break;
      case BinOp::Sub: out = a.value() - b.value(); break;
      case BinOp::Mul: out = a.value() * b.value(); break;
      case BinOp::Div: out = a.value() / b.value(); break;
    }
  } else {
    const auto& ia = *p.ia;
    const auto& ib = *p.ib;
    const Index n = numel(p.out);
    out.resize(n);
    const S* av = a.data();
    const S* bv = b.data();
    switch (op) {
      case BinOp::Add: for (Index i = 0; i < n; ++i) out[i] = av[ia[i]] + bv[ib[i]]; break;
      case BinOp::Sub: for (Index i = 0; i < n; ++i) out[i] = av[ia[i]] - bv[ib[i]]; break;
      case BinOp::Mul: for (Index i = 0; i < n; ++i) out[i] = av[ia[i]] * bv[ib[i]]; break;
      case BinOp::Div: for (Index i = 0; i < n; ++i) out[i] = av[ia[i]] / bv[ib[i]]; break;
    }
  }
  return make_result<S>(p.out, std::move(out), {a, b}, name, [p, op](const Node<S>& self) {
    Node<S>& na = *self.parents[0];
    Node<S>& nb = *self.parents[1];
    const auto& g = self.grad;
    const auto& av = na.value;
    const auto& bv = nb.value;
    if (p.same) {
      if (na.requires_grad) {
        auto& ga = na.grad_buffer();
        switch (op) {
          case BinOp::Add: case BinOp::Sub: ga += g; break;
          case BinOp::Mul: ga += g * bv; break;
          case BinOp::Div: ga += g / bv; break;
        }
      }
      if (nb.requires_grad) {
        auto& gb = nb.grad_buffer();
        switch (op) {
          case BinOp::Add: gb += g; break;
          case BinOp::Sub: gb -= g; break;
          case BinOp::Mul: gb += g * av; break;
          case BinOp::Div: gb -= g * av / (bv * bv); break;
        }
      }
      return;
    }
    const auto& ia = *p.ia;
    const auto& ib = *p.ib;
    const Index n = g.size();
    if (na.requires_grad) {
      auto& ga = na.grad_buffer();
      for (Index i = 0; i < n; ++i) {
        switch (op) {
          case BinOp::Add: case BinOp::Sub: ga[ia[i]] += g[i]; break;
          case BinOp::Mul: ga[ia[i]] += g[i] * bv[ib[i]]; break;
          case BinOp::Div: ga[ia[i]] += g[i] / bv[ib[i]]; break;
        }
      }
    }
    if (nb.requires_grad) {
      auto& gb = nb.grad_buffer();
      for (Index i = 0; i < n; ++i) {
        const S y = bv[ib[i]];
        switch (op) {
          case BinOp::Add: gb[ib[i]] += g[i]; break;
          case BinOp::Sub: gb[ib[i]] -= g[i]; break;
          case BinOp::Mul: gb[ib[i]] += g[i] * av[ia[i]]; break;
          case BinOp::Div: gb[ib[i]] -= g[i] * av[ia[i]] / (y * y); break;
        }
      }
    }
  });
}

// Unary op whose derivative is expressed through input x and output y.
template <typename S, typename Fwd, typename Deriv>
Tensor<S> unary(const Tensor<S>& x, const char* name, Fwd fwd, Deriv deriv) {
  typename Tensor<S>::Array out = fwd(x.value());
  return make_result<S>(x.shape(), std::move(out), {x}, name, [deriv](const Node<S>& self) {
    Node<S>& nx = *self.parents[0];
    nx.grad_buffer() += deriv(nx.value, self.value, self.grad);
  });
}

}  // namespace

template <typename S> Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) { return binary(a, b, BinOp::Add, "add"); }
template <typename S> Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) { return binary(a, b, BinOp::Sub, "sub"); }
template <typename S> Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) { return binary(a, b, BinOp::Mul, "mul"); }
template <typename S> Tensor<S> div(const Tensor<S>& a, const Tensor<S>& b) { return binary(a, b, BinOp::Div, "div"); }

template <typename S>
Tensor<S> neg(const Tensor<S>& x) {
  return scale(x, S(-1));
}

template <typename S>
Tensor<S> scale(const Tensor<S>& x, S factor) {
  typename Tensor<S>::Array out = x.value() * factor;
  return make_result<S>(x.shape(), std::move(out), {x}, "scale", [factor](const Node<S>& self) {
    self.parents[0]->grad_buffer() += self.grad * factor;
  });
}

template <typename S>
Tensor<S> add_scalar(const Tensor<S>& x, S offset) {
  typename Tensor<S>::Array out = x.value() + offset;
  return make_result<S>(x.shape(), std::move(out), {x}, "add_scalar",
                        [](const Node<S>& self) { self.parents[0]->grad_buffer() += self.grad; });
}

template <typename S>
Tensor<S> exp(const Tensor<S>& x) {
  return unary(x, "exp", [](const auto& v) { return v.exp().eval(); },
               [](const auto&, const auto& y, const auto& g) { return (g * y).eval(); });
}

template <typename S>
Tensor<S> log(const Tensor<S>& x) {
  return unary(x, "log", [](const auto& v) { return v.log().eval(); },
               [](const auto& v, const auto&, const auto& g) { return (g / v).eval(); });
}

template <typename S>
Tensor<S> tanh(const Tensor<S>& x) {
  return unary(x, "tanh", [](const auto& v) { return v.tanh().eval(); },
               [](const auto&, const auto& y, const auto& g) { return (g * (S(1) - y * y)).eval(); });
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  return unary(x, "sigmoid", [](const auto& v) { return (S(1) / (S(1) + (-v).exp())).eval(); },
               [](const auto&, const auto& y, const auto& g) { return (g * y * (S(1) - y)).eval(); });
}

template <typename S>
Tensor<S> silu(const Tensor<S>& x) {
  return unary(
      x, "silu", [](const auto& v) { return (v / (S(1) + (-v).exp())).eval(); },
      [](const auto& v, const auto&, const auto& g) {
        const auto s = (S(1) / (S(1) + (-v).exp())).eval();
        return (g * s * (S(1) + v * (S(1) - s))).eval();
      });
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  return unary(x, "relu", [](const auto& v) { return v.max(S(0)).eval(); },
               [](const auto& v, const auto&, const auto& g) { return (v > S(0)).select(g, S(0)).eval(); });
}

template <typename S>
Tensor<S> square(const Tensor<S>& x) {
  return unary(x, "square", [](const auto& v) { return v.square().eval(); },
               [](const auto& v, const auto&, const auto& g) { return (S(2) * g * v).eval(); });
}

template <typename S>
Tensor<S> abs(const Tensor<S>& x) {
  return unary(x, "abs", [](const auto& v) { return v.abs().eval(); },
               [](const auto& v, const auto&, const auto& g) { return (g * v.sign()).eval(); });
}

template <typename S>
Tensor<S> sqrt(const Tensor<S>& x) {
  return unary(x, "sqrt", [](const auto& v) { return v.sqrt().eval(); },
               [](const auto&, const auto& y, const auto& g) { return (g / (S(2) * y)).eval(); });
}

template <typename S>
Tensor<S> clamp(const Tensor<S>& x, S lo, S hi) {
  return unary(x, "clamp", [lo, hi](const auto& v) { return v.max(lo).min(hi).eval(); },
               [lo, hi](const auto& v, const auto&, const auto& g) {
                 return ((v > lo) && (v < hi)).select(g, S(0)).eval();
               });
}

template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
  typename Tensor<S>::Array out(1);
  out[0] = x.value().sum();
  return make_result<S>({1}, std::move(out), {x}, "sum",
                        [](const Node<S>& self) { self.parents[0]->grad_buffer() += self.grad[0]; });
}

template <typename S>
Tensor<S> mean(const Tensor<S>& x) {
  const S inv = S(1) / static_cast<S>(x.size());
  typename Tensor<S>::Array out(1);
  out[0] = x.value().sum() * inv;
  return make_result<S>({1}, std::move(out), {x}, "mean", [inv](const Node<S>& self) {
    self.parents[0]->grad_buffer() += self.grad[0] * inv;
  });
}

template <typename S>
Tensor<S> mean_axis(const Tensor<S>& x, int axis) {
  const int r = x.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw DimensionError("mean_axis: bad axis for " + to_string(x.shape()));
  Index outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.shape()[i];
  for (int i = axis + 1; i < r; ++i) inner *= x.shape()[i];
  const Index k = x.shape()[axis];
  Shape out_shape;
  for (int i = 0; i < r; ++i)
    if (i != axis) out_shape.push_back(x.shape()[i]);
  if (out_shape.empty()) out_shape.push_back(1);
  typename Tensor<S>::Array out = Tensor<S>::Array::Zero(outer * inner);
  const S* xv = x.data();
  for (Index o = 0; o < outer; ++o)
    for (Index j = 0; j < k; ++j)
      for (Index i = 0; i < inner; ++i) out[o * inner + i] += xv[(o * k + j) * inner + i];
  out /= static_cast<S>(k);
  return make_result<S>(out_shape, std::move(out), {x}, "mean_axis", [outer, inner, k](const Node<S>& self) {
    auto& gx = self.parents[0]->grad_buffer();
    const S inv = S(1) / static_cast<S>(k);
    for (Index o = 0; o < outer; ++o)
      for (Index j = 0; j < k; ++j)
        for (Index i = 0; i < inner; ++i) gx[(o * k + j) * inner + i] += self.grad[o * inner + i] * inv;
  });
}

template <typename S>
Tensor<S> broadcast_to(const Tensor<S>& x, const Shape& shape) {
  if (broadcast_shape(x.shape(), shape) != shape) {
    throw DimensionError("broadcast_to: " + to_string(x.shape()) + " does not expand to " + to_string(shape));
  }
  if (x.shape() == shape) return reshape(x, shape);
  auto offsets = std::make_shared<std::vector<Index>>(broadcast_offsets(x.shape(), shape));
  const Index n = numel(shape);
  typename Tensor<S>::Array out(n);
  for (Index i = 0; i < n; ++i) out[i] = x.value()[(*offsets)[i]];
  return make_result<S>(shape, std::move(out), {x}, "broadcast_to", [offsets](const Node<S>& self) {
    auto& gx = self.parents[0]->grad_buffer();
    for (Index i = 0; i < self.grad.size(); ++i) gx[(*offsets)[i]] += self.grad[i];
  });
}

#define IDE_INSTANTIATE(S)                                                   \
  template Tensor<S> add<S>(const Tensor<S>&, const Tensor<S>&);             \
  template Tensor<S> sub<S>(const Tensor<S>&, const Tensor<S>&);             \
  template Tensor<S> mul<S>(const Tensor<S>&, const Tensor<S>&);             \
  template Tensor<S> div<S>(const Tensor<S>&, const Tensor<S>&);             \
  template Tensor<S> neg<S>(const Tensor<S>&);                               \
  template Tensor<S> scale<S>(const Tensor<S>&, S);                          \
  template Tensor<S> add_scalar<S>(const Tensor<S>&, S);                     \
  template Tensor<S> exp<S>(const Tensor<S>&);                               \
  template Tensor<S> log<S>(const Tensor<S>&);                               \
  template Tensor<S> tanh<S>(const Tensor<S>&);                              \
  template Tensor<S> sigmoid<S>(const Tensor<S>&);                           \
  template Tensor<S> silu<S>(const Tensor<S>&);                              \
  template Tensor<S> relu<S>(const Tensor<S>&);                              \
  template Tensor<S> square<S>(const Tensor<S>&);                            \
  template Tensor<S> abs<S>(const Tensor<S>&);                               \
  template Tensor<S> sqrt<S>(const Tensor<S>&);                              \
  template Tensor<S> clamp<S>(const Tensor<S>&, S, S);                       \
  template Tensor<S> sum<S>(const Tensor<S>&);                               \
  template Tensor<S> mean<S>(const Tensor<S>&);                              \
  template Tensor<S> mean_axis<S>(const Tensor<S>&, int);                    \
  template Tensor<S> broadcast_to<S>(const Tensor<S>&, const Shape&);

IDE_INSTANTIATE(float)
IDE_INSTANTIATE(double)

}  // namespace ide
