// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#include "ide/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "ide/cfpm.hpp"
#include "ide/conditioning.hpp"
#include "ide/diffusion.hpp"
#include "ide/lfae.hpp"
#include "ide/nn.hpp"
#include "ide/ops.hpp"
#include "ide/rng.hpp"

namespace ide {

double gradcheck_max_error(const ScalarFn& fn, const std::vector<Tensord>& inputs, double h) {
  for (const auto& x : inputs) x.node()->grad = Tensord::Array();
  Tensord loss = fn(inputs);
  backward(loss);

  std::vector<Tensord::Array> analytic;
  double scale = 0.0;
  for (const auto& x : inputs) {
    analytic.push_back(x.has_grad() ? x.grad() : Tensord::Array::Zero(x.size()));
    if (x.requires_grad()) scale = std::max(scale, analytic.back().abs().maxCoeff());
  }

  double worst = 0.0;
  NoGradGuard guard;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensord x = inputs[k];
    if (!x.requires_grad()) continue;
    auto& v = x.value_mut();
    for (Index i = 0; i < x.size(); ++i) {
      const double saved = v[i];
      v[i] = saved + h;
      const double up = fn(inputs).item();
      v[i] = saved - h;
      const double down = fn(inputs).item();
      v[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-3 * scale, 1e-10});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  for (const auto& x : inputs) x.node()->grad = Tensord::Array();
  return worst;
}

Tensord random_projection_loss(const Tensord& y, std::uint64_t seed) {
  Rng rng(seed);
  Tensord r = randn<double>(y.shape(), rng);
  return sum(mul(y, r));
}

namespace {

Tensord leaf(const Shape& shape, Rng& rng, double stddev = 1.0) {
  Tensord t = randn<double>(shape, rng, stddev);
  t.set_requires_grad(true);
  return t;
}

Tensord positive_leaf(const Shape& shape, Rng& rng) {
  Tensord t = rand_uniform<double>(shape, rng, 0.5, 2.0);
  t.set_requires_grad(true);
  return t;
}

// Values kept at least `gap` away from every kink in `kinks`.
Tensord leaf_away_from(const Shape& shape, Rng& rng, const std::vector<double>& kinks, double gap) {
  Tensord t = randn<double>(shape, rng);
  auto& v = t.value_mut();
  for (Index i = 0; i < v.size(); ++i) {
    for (double k : kinks) {
      if (std::abs(v[i] - k) < gap) v[i] = k + (v[i] >= k ? gap : -gap);
    }
  }
  t.set_requires_grad(true);
  return t;
}

double unary_check(Tensord (*op)(const Tensord&), Tensord x, std::uint64_t seed) {
  return gradcheck_max_error([op, seed](const std::vector<Tensord>& in) { return random_projection_loss(op(in[0]), seed); },
                             {x});
}

double binary_check(Tensord (*op)(const Tensord&, const Tensord&), Tensord a, Tensord b, std::uint64_t seed) {
  return gradcheck_max_error(
      [op, seed](const std::vector<Tensord>& in) { return random_projection_loss(op(in[0], in[1]), seed); }, {a, b});
}

std::vector<GradcheckEntry> build_registry() {
  std::vector<GradcheckEntry> r;
  auto reg = [&](std::string name, std::function<double()> fn, double t = 1e-4) {
    r.push_back({std::move(name), t, std::move(fn)});
  };

  reg("add", [] { Rng g(1); return binary_check(add<double>, leaf({3, 4}, g), leaf({4}, g), 11); });
  reg("sub", [] { Rng g(2); return binary_check(sub<double>, leaf({2, 3, 1}, g), leaf({3, 5}, g), 12); });
  reg("mul", [] { Rng g(3); return binary_check(mul<double>, leaf({3, 4}, g), leaf({3, 1}, g), 13); });
  reg("div", [] { Rng g(4); return binary_check(div<double>, leaf({3, 4}, g), positive_leaf({4}, g), 14); });
  reg("neg", [] { Rng g(5); return unary_check(neg<double>, leaf({5}, g), 15); });
  reg("scale", [] {
    Rng g(6);
    return gradcheck_max_error(
        [](const std::vector<Tensord>& in) { return random_projection_loss(scale(in[0], -1.7), 16); }, {leaf({5}, g)});
  });
  reg("add_scalar", [] {
    Rng g(7);
    return gradcheck_max_error(
        [](const std::vector<Tensord>& in) { return random_projection_loss(add_scalar(in[0], 0.3), 17); },
        {leaf({5}, g)});
  });
  reg("exp", [] { Rng g(8); return unary_check(exp<double>, leaf({6}, g), 18); });
  reg("log", [] { Rng g(9); return unary_check(log<double>, positive_leaf({6}, g), 19); });
  reg("tanh", [] { Rng g(10); return unary_check(tanh<double>, leaf({6}, g), 20); });
  reg("sigmoid", [] { Rng g(11); return unary_check(sigmoid<double>, leaf({6}, g), 21); });
  reg("silu", [] { Rng g(12); return unary_check(silu<double>, leaf({6}, g), 22); });
  reg("relu", [] { Rng g(13); return unary_check(relu<double>, leaf_away_from({6}, g, {0.0}, 0.05), 23); });
  reg("square", [] { Rng g(14); return unary_check(square<double>, leaf({6}, g), 24); });
  reg("abs", [] { Rng g(15); return unary_check(abs<double>, leaf_away_from({6}, g, {0.0}, 0.05), 25); });
  reg("sqrt", [] { Rng g(16); return unary_check(sqrt<double>, positive_leaf({6}, g), 26); });
  reg("clamp", [] {
    Rng g(17);
    return gradcheck_max_error(
        [](const std::vector<Tensord>& in) { return random_projection_loss(clamp(in[0], -0.8, 0.8), 27); },
        {leaf_away_from({8}, g, {-0.8, 0.8}, 0.05)});
  });
  reg("sum", [] {
    Rng g(18);
    return gradcheck_max_error([](const std::vector<Tensord>& in) { return scale(sum(square(in[0])), 0.5); },
                               {leaf({3, 2}, g)});
  });
  reg("mean", [] {
    Rng g(19);
    return gradcheck_max_error([](const std::vector<Tensord>& in) { return mean(mul(in[0], in[0])); },
                               {leaf({3, 2}, g)});
  });
  reg("mean_axis", [] {
    Rng g(20);
    return gradcheck_max_error(
        [](const std::vector<Tensord>& in) { return random_projection_loss(mean_axis(in[0], 1), 30); },
        {leaf({2, 3, 4}, g)});
  });
  reg("reshape", [] {
    Rng g(21);
    return gradcheck_max_error(
        [](const std::vector<Tensord>& in) { return random_projection_loss(square(reshape(in[0], {4, -1})), 31); },
        {leaf({2, 6}, g)});
  });
  reg("permute", [] {
    Rng g(22);
    return gradcheck_max_error(
        [](const std::vector<Tensord>& in) { return random_projection_loss(square(permute(in[0], {2, 0, 1})), 32); },
        {leaf({2, 3, 4}, g)});
  });
  reg("transpose", [] {
    Rng g(23);
    return gradcheck_max_error(
        [](const std::vector<Tensord>& in) { return random_projection_loss(square(transpose(in[0])), 33); },
        {leaf({3, 4}, g)});
  });
  reg("concat", [] {
    Rng g(24);
    return gradcheck_max_error(
        [](const std::vector<Tensord>& in) { return random_projection_loss(square(concat(std::vector<Tensord>{in[0], in[1]}, 1)), 34); },
        {leaf({2, 3, 2}, g), leaf({2, 1, 2}, g)});
  });
  reg("slice", [] {
    Rng g(25);
    return gradcheck_max_error(
        [](const std::vector<Tensord>& in) { return random_projection_loss(square(slice(in[0], 1, 1, 2)), 35); },
        {leaf({2, 4, 3}, g)});
  });
  reg("broadcast_to", [] {
    Rng g(26);
    return gradcheck_max_error(
        [](const std::vector<Tensord>& in) { return random_projection_loss(square(broadcast_to(in[0], {3, 2, 4})), 36); },
        {leaf({2, 1}, g)});
  });
  reg("gather_rows", [] {
    Rng g(27);
    return gradcheck_max_error(
        [](const std::vector<Tensord>& in) { return random_projection_loss(square(gather_rows(in[0], {2, 0, 2})), 37); },
        {leaf({4, 3}, g)});
  });
  reg("matmul", [] { Rng g(28); return binary_check(matmul<double>, leaf({3, 4}, g), leaf({4, 2}, g), 38); });
  reg("bmm", [] { Rng g(29); return binary_check(bmm<double>, leaf({2, 3, 4}, g), leaf({2, 4, 5}, g), 39); });
  reg("linear", [] {
    Rng g(30);
    return gradcheck_max_error(
        [](const std::vector<Tensord>& in) { return random_projection_loss(linear(in[0], in[1], in[2]), 40); },
        {leaf({2, 3, 4}, g), leaf({4, 5}, g), leaf({5}, g)});
  });
  reg("softmax", [] {
    Rng g(31);
    return gradcheck_max_error(
        [](const std::vector<Tensord>& in) { return random_projection_loss(softmax(in[0], 1), 41); },
        {leaf({2, 5, 3}, g, 2.0)});
  });
  reg("log_softmax", [] {
    Rng g(32);
    return gradcheck_max_error(
        [](const std::vector<Tensord>& in) { return random_projection_loss(log_softmax(in[0], -1), 42); },
        {leaf({3, 6}, g, 2.0)});
  });
  reg("layer_norm", [] {
    Rng g(33);
    return gradcheck_max_error(
        [](const std::vector<Tensord>& in) { return random_projection_loss(layer_norm(in[0], in[1], in[2]), 43); },
        {leaf({3, 6}, g), leaf({6}, g), leaf({6}, g)});
  });
  reg("group_norm", [] {
    Rng g(34);
    return gradcheck_max_error(
        [](const std::vector<Tensord>& in) { return random_projection_loss(group_norm(in[0], 2, in[1], in[2]), 44); },
        {leaf({2, 4, 3, 3}, g), leaf({4}, g), leaf({4}, g)});
  });
  reg("conv2d", [] {
    Rng g(35);
    return gradcheck_max_error(
        [](const std::vector<Tensord>& in) { return random_projection_loss(conv2d(in[0], in[1], in[2], 1, 1), 45); },
        {leaf({2, 2, 5, 5}, g), leaf({3, 2, 3, 3}, g), leaf({3}, g)});
  });
  reg("conv2d_stride2", [] {
    Rng g(36);
    return gradcheck_max_error(
        [](const std::vector<Tensord>& in) { return random_projection_loss(conv2d(in[0], in[1], in[2], 2, 1), 46); },
        {leaf({1, 2, 6, 6}, g), leaf({2, 2, 3, 3}, g), leaf({2}, g)});
  });
  reg("upsample_nearest2x", [] {
    Rng g(37);
    return gradcheck_max_error(
        [](const std::vector<Tensord>& in) { return random_projection_loss(square(upsample_nearest2x(in[0])), 47); },
        {leaf({1, 2, 3, 3}, g)});
  });
  reg("grid_sample_bilinear.src", [] {
    Rng g(38);
    Tensord flow = rand_uniform<double>({1, 2, 5, 5}, g, -0.6, 0.6);
    return gradcheck_max_error(
        [flow](const std::vector<Tensord>& in) { return random_projection_loss(grid_sample_bilinear(in[0], flow), 48); },
        {leaf({1, 2, 5, 5}, g)});
  });
  reg(
      "grid_sample_bilinear.flow",
      [] {
        Rng g(39);
        Tensord src = randn<double>({1, 2, 6, 6}, g);
        // Sample points land strictly between pixel centers and inside the
        // image: offsets of 0.25 to 0.75 pixels from the integer lattice.
        Tensord flow = Tensord::zeros({1, 2, 6, 6});
        auto& f = flow.value_mut();
        for (Index i = 0; i < f.size(); ++i) {
          const double px = g.uniform(0.25, 0.75) * (g.uniform() < 0.5 ? -1.0 : 1.0);
          f[i] = px * 2.0 / 6.0;
        }
        flow.set_requires_grad(true);
        return gradcheck_max_error(
            [src](const std::vector<Tensord>& in) {
              return random_projection_loss(grid_sample_bilinear(src, in[0]), 49);
            },
            {flow});
      },
      1e-3);
  reg("attention", [] {
    Rng g(40);
    ParamStore<double> store;
    AttentionParams<double> p(store, "attn", 8, 8, 8, 2, g);
    Tensord q = leaf({1, 2, 8}, g);
    Tensord kv = leaf({1, 3, 8}, g);
    std::vector<Tensord> in{q, kv, p.wq, p.wk, p.wv, p.wo};
    return gradcheck_max_error(
        [&p](const std::vector<Tensord>& x) { return random_projection_loss(attend(p, x[0], x[1], x[1]), 50); }, in);
  });
  reg("transformer_layer", [] {
    Rng g(41);
    ParamStore<double> store;
    TransformerLayer<double> layer(store, "tl", 8, 2, 16, g);
    std::vector<Tensord> in{leaf({1, 3, 8}, g)};
    for (const auto& t : store.trainable()) in.push_back(t);
    return gradcheck_max_error(
        [&layer](const std::vector<Tensord>& x) { return random_projection_loss(layer(x[0]), 51); }, in);
  });
  reg("resblock", [] {
    Rng g(42);
    ParamStore<double> store;
    ResBlock<double> block(store, "rb", 4, 4, 1, 3, g);
    std::vector<Tensord> in{leaf({1, 4, 4, 4}, g), leaf({1, 3}, g)};
    for (const auto& t : store.trainable()) in.push_back(t);
    return gradcheck_max_error(
        [&block](const std::vector<Tensord>& x) { return random_projection_loss(block(x[0], x[1]), 52); }, in);
  });
  reg("stage1", [] { return stage1_gradcheck(); });
  reg("cfpm", [] { return cfpm_gradcheck(); });
  reg("conditioning", [] { return conditioning_gradcheck(); });
  reg("denoiser", [] { return denoiser_gradcheck(); });
  return r;
}

}  // namespace

const std::vector<GradcheckEntry>& gradcheck_registry() {
  static const std::vector<GradcheckEntry> registry = build_registry();
  return registry;
}

std::vector<GradcheckResult> run_gradcheck_suite(std::ostream& out) {
  std::vector<GradcheckResult> results;
  for (const auto& e : gradcheck_registry()) {
    double err = e.run();
    const bool ok = std::isfinite(err) && err < e.tolerance;
    char line[160];
    std::snprintf(line, sizeof line, "%-28s max_rel_err=%.3e  tol=%.0e  %s", e.name.c_str(), err, e.tolerance,
                  ok ? "ok" : "FAIL");
    out << line << '\n';
    results.push_back({e.name, err, e.tolerance, ok});
  }
  return results;
}

}  // namespace ide
