// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <numeric>

#include "ide/ops.hpp"

namespace ide {

namespace {

int normalize_axis(int axis, int rank, const char* op) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw DimensionError(std::string(op) + ": axis out of range");
  return axis;
}

}  // namespace

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, const Shape& shape) {
  Shape target = shape;
  Index known = 1;
  int infer = -1;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] == -1) {
      if (infer >= 0) throw DimensionError("reshape: more than one inferred extent");
      infer = static_cast<int>(i);
    } else {
      known *= target[i];
    }
  }
  if (infer >= 0) target[infer] = known > 0 ? x.size() / known : 0;
  if (numel(target) != x.size()) {
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  return make_result<S>(target, x.value(), {x}, "reshape",
                        [](const Node<S>& self) { self.parents[0]->grad_buffer() += self.grad; });
}

template <typename S>
Tensor<S> permute(const Tensor<S>& x, const std::vector<int>& perm) {
  const int r = x.rank();
  if (static_cast<int>(perm.size()) != r) throw DimensionError("permute: permutation rank mismatch");
  std::vector<int> check(perm);
  std::sort(check.begin(), check.end());
  for (int i = 0; i < r; ++i)
    if (check[i] != i) throw DimensionError("permute: not a permutation");

  const Shape& in = x.shape();
  std::vector<Index> in_stride(r);
  Index s = 1;
  for (int i = r - 1; i >= 0; --i) {
    in_stride[i] = s;
    s *= in[i];
  }
  Shape out(r);
  std::vector<Index> stride(r);
  for (int i = 0; i < r; ++i) {
    out[i] = in[perm[i]];
    stride[i] = in_stride[perm[i]];
  }
  // offsets[j] = position in x of output element j
  auto offsets = std::make_shared<std::vector<Index>>(x.size());
  {
    std::vector<Index> idx(r, 0);
    Index off = 0;
    for (Index j = 0; j < x.size(); ++j) {
      (*offsets)[j] = off;
      for (int a = r - 1; a >= 0; --a) {
        if (++idx[a] < out[a]) {
          off += stride[a];
          break;
        }
        off -= stride[a] * (out[a] - 1);
        idx[a] = 0;
      }
    }
  }
  typename Tensor<S>::Array v(x.size());
  const S* xv = x.data();
  for (Index j = 0; j < x.size(); ++j) v[j] = xv[(*offsets)[j]];
  return make_result<S>(out, std::move(v), {x}, "permute", [offsets](const Node<S>& self) {
    auto& gx = self.parents[0]->grad_buffer();
    for (Index j = 0; j < self.grad.size(); ++j) gx[(*offsets)[j]] += self.grad[j];
  });
}

template <typename S>
Tensor<S> transpose(const Tensor<S>& x) {
  if (x.rank() != 2) throw DimensionError("transpose expects rank 2, got " + to_string(x.shape()));
  return permute(x, {1, 0});
}

template <typename S>
Tensor<S> concat(const std::vector<Tensor<S>>& parts, int axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const int r = parts[0].rank();
  axis = normalize_axis(axis, r, "concat");
  Shape out = parts[0].shape();
  out[axis] = 0;
  for (const auto& p : parts) {
    if (p.rank() != r) throw DimensionError("concat: rank mismatch");
    for (int i = 0; i < r; ++i) {
      if (i != axis && p.shape()[i] != parts[0].shape()[i]) {
        throw DimensionError("concat: " + to_string(p.shape()) + " vs " + to_string(parts[0].shape()));
      }
    }
    out[axis] += p.shape()[axis];
  }
  Index outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= out[i];
  for (int i = axis + 1; i < r; ++i) inner *= out[i];
  const Index row = out[axis] * inner;
  typename Tensor<S>::Array v(numel(out));
  std::vector<Index> widths;
  Index offset = 0;
  for (const auto& p : parts) {
    const Index w = p.shape()[axis] * inner;
    widths.push_back(w);
    for (Index o = 0; o < outer; ++o) v.segment(o * row + offset, w) = p.value().segment(o * w, w);
    offset += w;
  }
  return make_result<S>(out, std::move(v), parts, "concat", [outer, row, widths](const Node<S>& self) {
    Index offset = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      const Index w = widths[k];
      Node<S>& p = *self.parents[k];
      if (p.requires_grad) {
        auto& g = p.grad_buffer();
        for (Index o = 0; o < outer; ++o) g.segment(o * w, w) += self.grad.segment(o * row + offset, w);
      }
      offset += w;
    }
  });
}

template <typename S>
Tensor<S> slice(const Tensor<S>& x, int axis, Index start, Index length) {
  const int r = x.rank();
  axis = normalize_axis(axis, r, "slice");
  if (start < 0 || length <= 0 || start + length > x.shape()[axis]) {
    throw DimensionError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") outside " + to_string(x.shape()));
  }
  Shape out = x.shape();
  out[axis] = length;
  Index outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= out[i];
  for (int i = axis + 1; i < r; ++i) inner *= out[i];
  const Index src_row = x.shape()[axis] * inner;
  const Index w = length * inner;
  const Index off = start * inner;
  typename Tensor<S>::Array v(numel(out));
  for (Index o = 0; o < outer; ++o) v.segment(o * w, w) = x.value().segment(o * src_row + off, w);
  return make_result<S>(out, std::move(v), {x}, "slice", [outer, src_row, w, off](const Node<S>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (Index o = 0; o < outer; ++o) g.segment(o * src_row + off, w) += self.grad.segment(o * w, w);
  });
}

template <typename S>
Tensor<S> gather_rows(const Tensor<S>& table, const std::vector<int>& ids) {
  if (table.rank() != 2) throw DimensionError("gather_rows expects a rank-2 table");
  if (ids.empty()) throw DimensionError("gather_rows: empty id list");
  const Index v = table.shape()[0], c = table.shape()[1];
  for (int id : ids) {
    if (id < 0 || id >= v) throw DimensionError("gather_rows: id " + std::to_string(id) + " out of range");
  }
  typename Tensor<S>::Array out(static_cast<Index>(ids.size()) * c);
  for (std::size_t i = 0; i < ids.size(); ++i) out.segment(i * c, c) = table.value().segment(ids[i] * c, c);
  return make_result<S>({static_cast<Index>(ids.size()), c}, std::move(out), {table}, "gather_rows",
                        [ids, c](const Node<S>& self) {
                          auto& g = self.parents[0]->grad_buffer();
                          for (std::size_t i = 0; i < ids.size(); ++i)
                            g.segment(ids[i] * c, c) += self.grad.segment(i * c, c);
                        });
}

#define IDE_INSTANTIATE(S)                                                          \
  template Tensor<S> reshape<S>(const Tensor<S>&, const Shape&);                    \
  template Tensor<S> permute<S>(const Tensor<S>&, const std::vector<int>&);         \
  template Tensor<S> transpose<S>(const Tensor<S>&);                                \
  template Tensor<S> concat<S>(const std::vector<Tensor<S>>&, int);                 \
  template Tensor<S> slice<S>(const Tensor<S>&, int, Index, Index);                 \
  template Tensor<S> gather_rows<S>(const Tensor<S>&, const std::vector<int>&);

IDE_INSTANTIATE(float)
IDE_INSTANTIATE(double)

}  // namespace ide
