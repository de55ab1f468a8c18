#include <cmath>
#include <random>

#include "doctest.h"
#include "fd_check.hpp"
#include "kgcicam/graph.hpp"

using namespace kgcicam;
using namespace kgcicam::testing;

namespace {
constexpr double kFdTol = 1e-4;
}

TEST_CASE("elementwise ops forward values") {
  Graph g;
  auto a = g.constant(Tensor({2, 2}, {1, 2, 3, 4}));
  auto b = g.constant(Tensor({2, 2}, {5, 6, 7, 8}));
  CHECK(g.val(g.add(a, b))[3] == 12.0);
  CHECK(g.val(g.sub(a, b))[0] == -4.0);
  CHECK(g.val(g.mul(a, b))[1] == 12.0);
  CHECK(g.val(g.scale(a, 2.5))[2] == 7.5);
  auto r = g.relu(g.constant(Tensor({3}, {-1.0, 0.0, 2.0})));
  CHECK(g.val(r)[0] == 0.0);
  CHECK(g.val(r)[2] == 2.0);
}

TEST_CASE("softmax and cross entropy analytic values") {
  Graph g;
  // uniform logits: CE = ln(n)
  for (int n : {2, 3, 5, 7}) {
    auto z = g.constant(Tensor({n}));
    CHECK(g.val(g.cross_entropy(z, 0)).item() == doctest::Approx(std::log(n)).epsilon(1e-12));
  }
  // softmax of (0, ln 3) = (0.25, 0.75)
  auto p = g.softmax(g.constant(Tensor({2}, {0.0, std::log(3.0)})));
  CHECK(g.val(p)[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(g.val(p)[1] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("cross entropy is shift invariant in the logits") {
  Graph g;
  Tensor z({4}, {0.3, -1.2, 2.0, 0.7});
  Tensor zs({4}, {0.3 + 10, -1.2 + 10, 2.0 + 10, 0.7 + 10});
  double a = g.val(g.cross_entropy(g.constant(z), 2)).item();
  double b = g.val(g.cross_entropy(g.constant(zs), 2)).item();
  CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("ce_probs matches cross entropy on positive normalized inputs") {
  Graph g;
  Tensor p({3}, {0.2, 0.5, 0.3});
  double direct = -std::log(0.5);
  CHECK(g.val(g.ce_probs(g.constant(p), 1)).item() ==
        doctest::Approx(direct).epsilon(1e-12));
  // negative entries are clamped to the floor instead of producing NaN
  Tensor q({3}, {-0.2, 0.5, 0.3});
  double v = g.val(g.ce_probs(g.constant(q), 1)).item();
  CHECK(std::isfinite(v));
}

TEST_CASE("kl_to_const of identical distributions is zero") {
  Graph g;
  Tensor z({3}, {0.5, -0.2, 1.0});
  std::vector<double> zv{0.5, -0.2, 1.0};
  double mx = 1.0, s = 0.0;
  std::vector<double> q(3);
  for (int i = 0; i < 3; ++i) {
    q[i] = std::exp((zv[i] - mx) / 2.0);
    s += q[i];
  }
  for (auto& v : q) v /= s;
  Tensor qt({3}, std::vector<double>(q));
  CHECK(g.val(g.kl_to_const(g.constant(z), qt, 2.0)).item() ==
        doctest::Approx(0.0).epsilon(1e-12));
  CHECK(g.val(g.kl_from_const(g.constant(z), qt, 2.0)).item() ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("kl fixture: two-point distributions") {
  // KL((.5,.5) || (.75,.25)) = 0.5 ln(2/3) + 0.5 ln 2 = 0.5 ln 2 - 0.5 ln 1.5
  Graph g;
  auto z = g.constant(Tensor({2}));  // softmax -> (0.5, 0.5) at any T
  Tensor q({2}, {0.75, 0.25});
  double expect = 0.5 * std::log(2.0) - 0.5 * std::log(1.5);
  CHECK(g.val(g.kl_to_const(z, q, 1.0)).item() ==
        doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("mse fixture") {
  Graph g;
  auto a = g.constant(Tensor({2, 2}, {1, 2, 3, 4}));
  auto b = g.constant(Tensor({2, 2}, {1, 2, 3, 4.5}));
  CHECK(g.val(g.mse(a, b)).item() == doctest::Approx(0.0625).epsilon(1e-12));
}

TEST_CASE("normalize_minmax maps to [0,1] and zeros constants") {
  Graph g;
  auto a = g.normalize_minmax(g.constant(Tensor({2, 2}, {1, 2, 3, 4})));
  CHECK(g.val(a)[0] == doctest::Approx(0.0));
  CHECK(g.val(a)[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(g.val(a)[3] == doctest::Approx(1.0));
  auto c = g.normalize_minmax(g.constant(Tensor({2, 2}, {7, 7, 7, 7})));
  for (long i = 0; i < 4; ++i) CHECK(g.val(c)[i] == 0.0);
}

TEST_CASE("spatial_softmax rows sum to one per class") {
  std::mt19937_64 rng(7);
  Graph g;
  auto m = g.spatial_softmax(g.constant(random_tensor({3, 4, 4}, rng)), 2.0);
  const Tensor& v = g.val(m);
  for (int c = 0; c < 3; ++c) {
    double s = 0.0;
    for (int i = 0; i < 16; ++i) s += v[c * 16 + i];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("conv2d forward against a hand-computed case") {
  Graph g;
  // 1x3x3 input, single 1x1x3x3 kernel, stride 1 pad 1
  auto x = g.constant(Tensor({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9}));
  Tensor w({1, 1, 3, 3});
  w[4] = 1.0;  // center tap: identity
  auto y = g.conv2d(x, g.constant(w), g.constant(Tensor({1})), 1, 1);
  for (long i = 0; i < 9; ++i) CHECK(g.val(y)[i] == g.val(x)[i]);
  // all-ones kernel sums the 3x3 neighborhood
  Tensor w2({1, 1, 3, 3});
  for (long i = 0; i < 9; ++i) w2[i] = 1.0;
  auto y2 = g.conv2d(x, g.constant(w2), g.constant(Tensor({1})), 1, 1);
  CHECK(g.val(y2).at(0, 1, 1) == 45.0);
  CHECK(g.val(y2).at(0, 0, 0) == 1 + 2 + 4 + 5);
}

TEST_CASE("conv2d stride halves the grid") {
  std::mt19937_64 rng(3);
  Graph g;
  auto x = g.constant(random_tensor({2, 8, 8}, rng));
  auto y = g.conv2d(x, g.constant(random_tensor({3, 2, 3, 3}, rng)),
                    g.constant(Tensor({3})), 2, 1);
  CHECK(g.val(y).shape() == std::vector<int>{3, 4, 4});
}

TEST_CASE("gap and linear shapes and values") {
  Graph g;
  auto x = g.constant(Tensor({2, 2, 2}, {1, 1, 1, 1, 2, 4, 6, 8}));
  auto p = g.gap(x);
  CHECK(g.val(p)[0] == doctest::Approx(1.0));
  CHECK(g.val(p)[1] == doctest::Approx(5.0));
  auto z = g.linear(p, g.constant(Tensor({2, 2}, {1, 0, 1, 1})),
                    g.constant(Tensor({2}, {0.5, 0.0})));
  CHECK(g.val(z)[0] == doctest::Approx(1.5));
  CHECK(g.val(z)[1] == doctest::Approx(6.0));
}

TEST_CASE("channel_mix equals per-class weighted feature sum") {
  std::mt19937_64 rng(11);
  Graph g;
  Tensor x = random_tensor({3, 2, 2}, rng);
  Tensor w = random_tensor({2, 3}, rng);
  auto m = g.channel_mix(g.constant(x), g.constant(w));
  for (int i = 0; i < 2; ++i)
    for (int p = 0; p < 4; ++p) {
      double want = 0.0;
      for (int k = 0; k < 3; ++k) want += w.at(i, k) * x[k * 4 + p];
      CHECK(g.val(m)[i * 4 + p] == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("matmul variants against naive products") {
  std::mt19937_64 rng(13);
  Tensor a = random_tensor({4, 3}, rng), b = random_tensor({4, 5}, rng);
  Graph g;
  auto c = g.matmul_tn(g.constant(a), g.constant(b));  // [3,5]
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 5; ++j) {
      double want = 0.0;
      for (int k = 0; k < 4; ++k) want += a.at(k, i) * b.at(k, j);
      CHECK(g.val(c).at(i, j) == doctest::Approx(want).epsilon(1e-12));
    }
  Tensor d = random_tensor({3, 4}, rng), e = random_tensor({5, 4}, rng);
  auto f = g.matmul_nt(g.constant(d), g.constant(e));  // [3,5]
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 5; ++j) {
      double want = 0.0;
      for (int k = 0; k < 4; ++k) want += d.at(i, k) * e.at(j, k);
      CHECK(g.val(f).at(i, j) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("softmax_rows rows are stochastic") {
  std::mt19937_64 rng(17);
  Graph g;
  auto s = g.softmax_rows(g.constant(random_tensor({6, 4}, rng)));
  for (int i = 0; i < 6; ++i) {
    double sum = 0.0;
    for (int j = 0; j < 4; ++j) {
      CHECK(g.val(s).at(i, j) > 0.0);
      sum += g.val(s).at(i, j);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("gradients: elementwise and reductions") {
  std::mt19937_64 rng(21);
  auto build = [](Graph& g, const std::vector<Graph::Id>& in) {
    auto t = g.mul(g.add(in[0], in[1]), g.sub(in[0], g.scale(in[1], 0.5)));
    return g.mean_all(g.relu(t));
  };
  auto rep = fd_check({random_tensor({3, 3}, rng), random_tensor({3, 3}, rng)}, build,
                      6, rng);
  CHECK(rep.checked >= 12);
  CHECK(rep.max_rel_err < kFdTol);
}

TEST_CASE("gradients: conv2d, gap, linear, cross entropy chain") {
  std::mt19937_64 rng(23);
  auto build = [](Graph& g, const std::vector<Graph::Id>& in) {
    auto y = g.relu(g.conv2d(in[0], in[1], in[2], 2, 1));
    auto z = g.linear(g.gap(y), in[3], in[4]);
    return g.cross_entropy(z, 1);
  };
  auto rep = fd_check({random_tensor({2, 6, 6}, rng), random_tensor({3, 2, 3, 3}, rng),
                       random_tensor({3}, rng), random_tensor({2, 3}, rng),
                       random_tensor({2}, rng)},
                      build, 8, rng);
  CHECK(rep.max_rel_err < kFdTol);
}

TEST_CASE("gradients: channel_mix, normalize_minmax, weighted_map_sum") {
  std::mt19937_64 rng(29);
  auto build = [](Graph& g, const std::vector<Graph::Id>& in) {
    auto maps = g.channel_mix(in[0], in[1]);
    auto h = g.normalize_minmax(g.weighted_map_sum(maps, {0.7, -0.3}));
    return g.mean_all(h);
  };
  auto rep =
      fd_check({random_tensor({3, 4, 4}, rng), random_tensor({2, 3}, rng)}, build, 10, rng);
  CHECK(rep.max_rel_err < kFdTol);
}

TEST_CASE("gradients: attention path (matmuls, softmax_rows, reshape)") {
  std::mt19937_64 rng(31);
  auto build = [](Graph& g, const std::vector<Graph::Id>& in) {
    auto theta = g.reshape(in[0], {2, 9});
    auto phi = g.reshape(in[1], {2, 9});
    auto gm = g.reshape(in[2], {2, 9});
    auto attn = g.softmax_rows(g.matmul_tn(theta, phi));  // [9,9]
    auto y = g.matmul_nt(gm, attn);                       // [2,9]
    return g.mse(y, g.constant(Tensor({2, 9})));
  };
  auto rep = fd_check({random_tensor({2, 3, 3}, rng), random_tensor({2, 3, 3}, rng),
                       random_tensor({2, 3, 3}, rng)},
                      build, 8, rng);
  CHECK(rep.max_rel_err < kFdTol);
}

TEST_CASE("gradients: kl in both directions and spatial softmax mse") {
  std::mt19937_64 rng(37);
  Tensor qv({4}, {0.1, 0.2, 0.3, 0.4});
  auto build_fwd = [&](Graph& g, const std::vector<Graph::Id>& in) {
    return g.kl_to_const(in[0], qv, 3.0);
  };
  auto build_rev = [&](Graph& g, const std::vector<Graph::Id>& in) {
    return g.kl_from_const(in[0], qv, 3.0);
  };
  CHECK(fd_check({random_tensor({4}, rng)}, build_fwd, 8, rng).max_rel_err < kFdTol);
  CHECK(fd_check({random_tensor({4}, rng)}, build_rev, 8, rng).max_rel_err < kFdTol);

  std::mt19937_64 rng2(38);
  Tensor target = random_tensor({2, 3, 3}, rng2, 0.2);
  auto build_sp = [&](Graph& g, const std::vector<Graph::Id>& in) {
    return g.mse(g.spatial_softmax(in[0], 2.0), g.constant(target));
  };
  CHECK(fd_check({random_tensor({2, 3, 3}, rng2)}, build_sp, 10, rng2).max_rel_err <
        kFdTol);
}

TEST_CASE("gradients: ce_probs away from the clamp floor") {
  std::mt19937_64 rng(41);
  auto build = [](Graph& g, const std::vector<Graph::Id>& in) {
    // keep entries positive so the clamp is inactive and FD is smooth
    auto p = g.relu(in[0]);
    return g.ce_probs(g.add(p, g.constant(Tensor({3}, {0.2, 0.2, 0.2}))), 0);
  };
  Tensor p({3}, {0.5, 0.9, 0.4});
  CHECK(fd_check({p}, build, 6, rng).max_rel_err < kFdTol);
}

TEST_CASE("backward accumulates through shared leaves") {
  Graph g;
  auto w = g.leaf(Tensor({2}, {1.0, 2.0}));
  // loss = sum(w * w) -> dL/dw = 2w, the leaf used twice
  auto lw = g.mul(w, w);
  auto loss = g.mean_all(lw);
  g.backward(loss);
  CHECK(g.grad(w)[0] == doctest::Approx(1.0));   // 2*1/2
  CHECK(g.grad(w)[1] == doctest::Approx(2.0));   // 2*2/2
}

TEST_CASE("weighted_sum_scalars combines losses") {
  Graph g;
  auto a = g.constant(Tensor::scalar(2.0));
  auto b = g.constant(Tensor::scalar(3.0));
  CHECK(g.val(g.weighted_sum_scalars({a, b}, {0.5, 2.0})).item() ==
        doctest::Approx(7.0));
}

TEST_CASE("shape errors raise DimensionError") {
  Graph g;
  auto a = g.constant(Tensor({2, 2}));
  auto b = g.constant(Tensor({3}));
  CHECK_THROWS_AS(g.add(a, b), DimensionError);
  CHECK_THROWS_AS(g.linear(b, a, b), DimensionError);
  CHECK_THROWS_AS(g.cross_entropy(b, 5), LabelError);
}
