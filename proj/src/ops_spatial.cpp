// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include "ide/ops.hpp"
#include "ide/parallel.hpp"

namespace ide {

namespace {

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MapC = Eigen::Map<const RowMat<S>>;
template <typename S>
using Map = Eigen::Map<RowMat<S>>;

struct ConvGeom {
  Index n, cin, h, w, cout, k, ho, wo;
  int stride, pad;
  Index patch() const { return cin * k * k; }
  Index plane() const { return ho * wo; }
};

// Column matrix [cin*k*k x n*ho*wo], row-major.
template <typename S>
RowMat<S> im2col(const S* x, const ConvGeom& g) {
  RowMat<S> cols(g.patch(), g.n * g.plane());
  const Index ncols = g.n * g.plane();
  parallel_for(g.n, [&](Index n) {
    const S* xn = x + n * g.cin * g.h * g.w;
    for (Index c = 0; c < g.cin; ++c)
      for (Index ki = 0; ki < g.k; ++ki)
        for (Index kj = 0; kj < g.k; ++kj) {
          S* row = cols.data() + ((c * g.k + ki) * g.k + kj) * ncols + n * g.plane();
          for (Index oy = 0; oy < g.ho; ++oy) {
            const Index iy = oy * g.stride - g.pad + ki;
            for (Index ox = 0; ox < g.wo; ++ox) {
              const Index ix = ox * g.stride - g.pad + kj;
              row[oy * g.wo + ox] =
                  (iy >= 0 && iy < g.h && ix >= 0 && ix < g.w) ? xn[(c * g.h + iy) * g.w + ix] : S(0);
            }
          }
        }
  });
  return cols;
}

template <typename S>
void col2im_add(const RowMat<S>& cols, const ConvGeom& g, S* dx) {
  const Index ncols = g.n * g.plane();
  parallel_for(g.n, [&](Index n) {
    S* dn = dx + n * g.cin * g.h * g.w;
    for (Index c = 0; c < g.cin; ++c)
      for (Index ki = 0; ki < g.k; ++ki)
        for (Index kj = 0; kj < g.k; ++kj) {
          const S* row = cols.data() + ((c * g.k + ki) * g.k + kj) * ncols + n * g.plane();
          for (Index oy = 0; oy < g.ho; ++oy) {
            const Index iy = oy * g.stride - g.pad + ki;
            if (iy < 0 || iy >= g.h) continue;
            for (Index ox = 0; ox < g.wo; ++ox) {
              const Index ix = ox * g.stride - g.pad + kj;
              if (ix >= 0 && ix < g.w) dn[(c * g.h + iy) * g.w + ix] += row[oy * g.wo + ox];
            }
          }
        }
  });
}

template <typename S>
Tensor<S> as_batch(const Tensor<S>& x, const char* op) {
  if (x.rank() == 4) return x;
  if (x.rank() == 3) return reshape(x, {1, x.shape()[0], x.shape()[1], x.shape()[2]});
  throw DimensionError(std::string(op) + ": expected [C x H x W] or [N x C x H x W], got " + to_string(x.shape()));
}

template <typename S>
Tensor<S> restore_rank(const Tensor<S>& y, int rank) {
  if (rank == 4) return y;
  return reshape(y, {y.shape()[1], y.shape()[2], y.shape()[3]});
}

}  // namespace

template <typename S>
Tensor<S> conv2d(const Tensor<S>& input, const Tensor<S>& w, const Tensor<S>& bias, int stride, int pad) {
  const Tensor<S> x = as_batch(input, "conv2d");
  if (w.rank() != 4 || w.shape()[2] != w.shape()[3] || w.shape()[1] != x.shape()[1]) {
    throw DimensionError("conv2d: weight " + to_string(w.shape()) + " incompatible with input " +
                         to_string(x.shape()));
  }
  if (w.shape()[2] % 2 == 0) throw DimensionError("conv2d: kernel size must be odd");
  if (stride < 1 || pad < 0) throw DimensionError("conv2d: invalid stride/padding");
  ConvGeom g{x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3], w.shape()[0], w.shape()[2], 0, 0, stride, pad};
  if (g.k > g.h + 2 * pad || g.k > g.w + 2 * pad) {
    throw DimensionError("conv2d: kernel " + std::to_string(g.k) + " larger than padded input " +
                         to_string(x.shape()));
  }
  if (bias.defined() && bias.size() != g.cout) throw DimensionError("conv2d: bias size mismatch");
  g.ho = (g.h + 2 * pad - g.k) / stride + 1;
  g.wo = (g.w + 2 * pad - g.k) / stride + 1;

  const RowMat<S> cols = im2col(x.data(), g);
  RowMat<S> prod(g.cout, g.n * g.plane());
  prod.noalias() = MapC<S>(w.data(), g.cout, g.patch()) * cols;
  typename Tensor<S>::Array out(g.n * g.cout * g.plane());
  for (Index n = 0; n < g.n; ++n)
    for (Index co = 0; co < g.cout; ++co) {
      auto dst = out.segment((n * g.cout + co) * g.plane(), g.plane());
      dst = prod.row(co).segment(n * g.plane(), g.plane()).transpose().array();
      if (bias.defined()) dst += bias.value()[co];
    }

  std::vector<Tensor<S>> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  Tensor<S> y = make_result<S>({g.n, g.cout, g.ho, g.wo}, std::move(out), inputs, "conv2d", [g](const Node<S>& self) {
    Node<S>& nx = *self.parents[0];
    Node<S>& nw = *self.parents[1];
    Node<S>* nb = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
    RowMat<S> grad(g.cout, g.n * g.plane());
    for (Index n = 0; n < g.n; ++n)
      for (Index co = 0; co < g.cout; ++co)
        grad.row(co).segment(n * g.plane(), g.plane()) =
            self.grad.segment((n * g.cout + co) * g.plane(), g.plane()).matrix().transpose();
    if (nb && nb->requires_grad) nb->grad_buffer() += grad.rowwise().sum().array();
    if (nw.requires_grad) {
      const RowMat<S> cols = im2col(nx.value.data(), g);
      Map<S>(nw.grad_buffer().data(), g.cout, g.patch()).noalias() += grad * cols.transpose();
    }
    if (nx.requires_grad) {
      RowMat<S> dcols(g.patch(), g.n * g.plane());
      dcols.noalias() = MapC<S>(nw.value.data(), g.cout, g.patch()).transpose() * grad;
      col2im_add(dcols, g, nx.grad_buffer().data());
    }
  });
  return restore_rank(y, input.rank());
}

template <typename S>
Tensor<S> upsample_nearest2x(const Tensor<S>& input) {
  const Tensor<S> x = as_batch(input, "upsample_nearest2x");
  const Index nc = x.shape()[0] * x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  typename Tensor<S>::Array out(nc * 4 * h * w);
  const S* xv = x.data();
  for (Index p = 0; p < nc; ++p)
    for (Index i = 0; i < 2 * h; ++i)
      for (Index j = 0; j < 2 * w; ++j) out[(p * 2 * h + i) * 2 * w + j] = xv[(p * h + i / 2) * w + j / 2];
  Tensor<S> y = make_result<S>({x.shape()[0], x.shape()[1], 2 * h, 2 * w}, std::move(out), {x}, "upsample",
                               [nc, h, w](const Node<S>& self) {
                                 auto& gx = self.parents[0]->grad_buffer();
                                 for (Index p = 0; p < nc; ++p)
                                   for (Index i = 0; i < 2 * h; ++i)
                                     for (Index j = 0; j < 2 * w; ++j)
                                       gx[(p * h + i / 2) * w + j / 2] += self.grad[(p * 2 * h + i) * 2 * w + j];
                               });
  return restore_rank(y, input.rank());
}

namespace {

// Bilinear tap for one output location.
template <typename S>
struct Tap {
  Index x0, x1, y0, y1;
  S wx, wy;            // fractional weights toward x1 / y1
  bool clamp_x, clamp_y;  // sample position clamped to the border
};

template <typename S>
Tap<S> make_tap(S px, S py, Index h, Index w) {
  Tap<S> t{};
  t.clamp_x = px < S(0) || px > S(w - 1);
  t.clamp_y = py < S(0) || py > S(h - 1);
  px = std::clamp(px, S(0), S(w - 1));
  py = std::clamp(py, S(0), S(h - 1));
  const S fx = std::floor(px), fy = std::floor(py);
  t.x0 = static_cast<Index>(fx);
  t.y0 = static_cast<Index>(fy);
  t.x1 = std::min(t.x0 + 1, w - 1);
  t.y1 = std::min(t.y0 + 1, h - 1);
  t.wx = px - fx;
  t.wy = py - fy;
  return t;
}

}  // namespace

template <typename S>
Tensor<S> grid_sample_bilinear(const Tensor<S>& src_in, const Tensor<S>& flow_in) {
  const Tensor<S> src = as_batch(src_in, "grid_sample_bilinear");
  const Tensor<S> flow = as_batch(flow_in, "grid_sample_bilinear");
  const Index n = src.shape()[0], c = src.shape()[1], h = src.shape()[2], w = src.shape()[3];
  if (flow.shape() != Shape{n, 2, h, w}) {
    throw DimensionError("grid_sample_bilinear: flow " + to_string(flow.shape()) + " does not match source " +
                         to_string(src.shape()));
  }
  const S sx = S(w) / S(2), sy = S(h) / S(2);
  const Index hw = h * w;
  typename Tensor<S>::Array out(src.size());
  const S* sv = src.data();
  const S* fv = flow.data();
  parallel_for(n, [&](Index b) {
    for (Index i = 0; i < h; ++i)
      for (Index j = 0; j < w; ++j) {
        const Index p = i * w + j;
        const Tap<S> t = make_tap<S>(S(j) + fv[(b * 2) * hw + p] * sx, S(i) + fv[(b * 2 + 1) * hw + p] * sy, h, w);
        for (Index ch = 0; ch < c; ++ch) {
          const S* plane = sv + (b * c + ch) * hw;
          const S top = plane[t.y0 * w + t.x0] * (S(1) - t.wx) + plane[t.y0 * w + t.x1] * t.wx;
          const S bot = plane[t.y1 * w + t.x0] * (S(1) - t.wx) + plane[t.y1 * w + t.x1] * t.wx;
          out[(b * c + ch) * hw + p] = top * (S(1) - t.wy) + bot * t.wy;
        }
      }
  });
  Tensor<S> y = make_result<S>(src.shape(), std::move(out), {src, flow}, "grid_sample",
                               [n, c, h, w, sx, sy](const Node<S>& self) {
    Node<S>& ns = *self.parents[0];
    Node<S>& nf = *self.parents[1];
    const Index hw = h * w;
    const S* sv = ns.value.data();
    const S* fv = nf.value.data();
    S* gs = ns.requires_grad ? ns.grad_buffer().data() : nullptr;
    S* gf = nf.requires_grad ? nf.grad_buffer().data() : nullptr;
    const auto& g = self.grad;
    parallel_for(n, [&](Index b) {
      for (Index i = 0; i < h; ++i)
        for (Index j = 0; j < w; ++j) {
          const Index p = i * w + j;
          const Tap<S> t =
              make_tap<S>(S(j) + fv[(b * 2) * hw + p] * sx, S(i) + fv[(b * 2 + 1) * hw + p] * sy, h, w);
          S dpx = 0, dpy = 0;
          for (Index ch = 0; ch < c; ++ch) {
            const S go = g[(b * c + ch) * hw + p];
            if (go == S(0)) continue;
            if (gs) {
              S* plane = gs + (b * c + ch) * hw;
              plane[t.y0 * w + t.x0] += go * (S(1) - t.wx) * (S(1) - t.wy);
              plane[t.y0 * w + t.x1] += go * t.wx * (S(1) - t.wy);
              plane[t.y1 * w + t.x0] += go * (S(1) - t.wx) * t.wy;
              plane[t.y1 * w + t.x1] += go * t.wx * t.wy;
            }
            if (gf) {
              const S* plane = sv + (b * c + ch) * hw;
              const S v00 = plane[t.y0 * w + t.x0], v01 = plane[t.y0 * w + t.x1];
              const S v10 = plane[t.y1 * w + t.x0], v11 = plane[t.y1 * w + t.x1];
              dpx += go * ((v01 - v00) * (S(1) - t.wy) + (v11 - v10) * t.wy);
              dpy += go * ((v10 - v00) * (S(1) - t.wx) + (v11 - v01) * t.wx);
            }
          }
          if (gf) {
            if (!t.clamp_x) gf[(b * 2) * hw + p] += dpx * sx;
            if (!t.clamp_y) gf[(b * 2 + 1) * hw + p] += dpy * sy;
          }
        }
    });
  });
  return restore_rank(y, src_in.rank());
}

#define IDE_INSTANTIATE(S)                                                                      \
  template Tensor<S> conv2d<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, int, int); \
  template Tensor<S> upsample_nearest2x<S>(const Tensor<S>&);                                   \
  template Tensor<S> grid_sample_bilinear<S>(const Tensor<S>&, const Tensor<S>&);

IDE_INSTANTIATE(float)
IDE_INSTANTIATE(double)

}  // namespace ide
