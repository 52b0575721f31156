#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "dspc/ops.hpp"
#include "dspc/oracle.hpp"
#include "dspc/rng.hpp"
#include "dspc/tensor.hpp"

using namespace dspc;

namespace {

std::vector<double> random_values(Rng& rng, int64_t n, double lo, double hi) {
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) x = lo + (hi - lo) * rng.uniform();
  return v;
}

// Random values bounded away from zero, for ops with a kink there.
std::vector<double> random_values_off_zero(Rng& rng, int64_t n, double lo,
                                           double hi) {
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) {
    double mag = lo + (hi - lo) * rng.uniform();
    x = rng.uniform() < 0.5 ? -mag : mag;
  }
  return v;
}

Tensor weighted_sum(const Tensor& t, Rng& rng) {
  std::vector<double> w(static_cast<size_t>(t.numel()));
  for (auto& x : w) x = -1.0 + 2.0 * rng.uniform();
  return sum(mul(t, Tensor::from_data(t.shape(), std::move(w))));
}

// Compares backward() gradients against central differences for a scalar
// graph rebuilt from flat parameter values. `build` must construct the same
// graph each call.
void check_grads(
    const std::vector<Shape>& shapes,
    const std::function<Tensor(const std::vector<Tensor>&)>& build,
    const std::vector<std::vector<double>>& values, double tol,
    double step = 1e-5) {
  std::vector<Tensor> params;
  size_t total = 0;
  for (size_t p = 0; p < shapes.size(); ++p) {
    params.push_back(Tensor::from_data(shapes[p], values[p], true));
    total += values[p].size();
  }
  Tensor loss = build(params);
  backward(loss);
  std::vector<double> analytic;
  analytic.reserve(total);
  for (auto& p : params) {
    analytic.insert(analytic.end(), p.grad().begin(), p.grad().end());
  }

  std::vector<double> flat;
  flat.reserve(total);
  for (auto& v : values) flat.insert(flat.end(), v.begin(), v.end());

  auto f = [&](const std::vector<double>& x) {
    std::vector<Tensor> ps;
    size_t off = 0;
    for (size_t p = 0; p < shapes.size(); ++p) {
      std::vector<double> chunk(x.begin() + off,
                                x.begin() + off + values[p].size());
      off += values[p].size();
      ps.push_back(Tensor::from_data(shapes[p], std::move(chunk)));
    }
    return build(ps).value();
  };
  std::vector<double> fd = oracle::finite_diff_grad(f, flat, step);
  CHECK(oracle::max_rel_grad_err(analytic, fd) <= tol);
}

}  // namespace

TEST_CASE("rng stream is reproducible and serializable") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng c(7);
  for (int i = 0; i < 13; ++i) c.normal();
  std::string state = c.serialize();
  Rng d = Rng::deserialize(state);
  for (int i = 0; i < 50; ++i) {
    CHECK(c.normal() == d.normal());
    CHECK(c.uniform() == d.uniform());
    CHECK(c.randint(17) == d.randint(17));
  }

  CHECK(mix_seed(1, 2) == mix_seed(1, 2));
  CHECK(mix_seed(1, 2) != mix_seed(2, 1));
  CHECK_THROWS_AS(Rng::deserialize("not a state"), Error);
}

TEST_CASE("rng draws land in range with sane moments") {
  Rng rng(123);
  double mean = 0.0, sq = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    double g = rng.normal();
    mean += g;
    sq += g * g;
  }
  mean /= n;
  sq /= n;
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(sq - 1.0) < 0.03);

  std::vector<int64_t> counts(5, 0);
  for (int i = 0; i < 50000; ++i) ++counts[static_cast<size_t>(rng.randint(5))];
  for (int64_t c : counts) CHECK(std::abs(c - 10000) < 500);

  std::vector<int> v(64);
  for (int i = 0; i < 64; ++i) v[static_cast<size_t>(i)] = i;
  rng.shuffle(v);
  std::vector<char> seen(64, 0);
  for (int x : v) {
    CHECK(!seen[static_cast<size_t>(x)]);
    seen[static_cast<size_t>(x)] = 1;
  }
  CHECK_THROWS_AS(rng.randint(0), Error);
}

TEST_CASE("tensor factories and accessors") {
  Tensor z = Tensor::zeros({2, 3});
  CHECK(z.numel() == 6);
  CHECK(z.shape() == Shape{2, 3});
  Tensor s = Tensor::scalar(4.25);
  CHECK(s.value() == 4.25);
  Tensor m = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  CHECK(m.at({0, 1}) == 2);
  CHECK(m.at({1, 0}) == 3);
  CHECK_THROWS_AS(m.value(), GraphError);
  CHECK_THROWS_AS(m.at({2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(m.grad(), GraphError);
}

TEST_CASE("matmul identity and hand cases") {
  Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  Tensor a = Tensor::from_data({2, 2}, {5, 6, 7, 8});
  Tensor prod = matmul(eye, a);
  for (int i = 0; i < 4; ++i) {
    CHECK(prod.data()[static_cast<size_t>(i)] ==
          a.data()[static_cast<size_t>(i)]);
  }

  Tensor b = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor c = Tensor::from_data({2, 1}, {0, 1});
  Tensor r = matmul(b, c);
  CHECK(r.at({0, 0}) == 2);
  CHECK(r.at({1, 0}) == 4);

  CHECK_THROWS_AS(matmul(b, Tensor::zeros({3, 2})), ShapeError);
}

TEST_CASE("matmul gradient matches central differences") {
  Rng rng(1001);
  auto av = random_values(rng, 12, -2, 2);
  auto bv = random_values(rng, 8, -2, 2);
  check_grads(
      {{3, 4}, {4, 2}},
      [](const std::vector<Tensor>& p) {
        Rng local(55);
        return weighted_sum(matmul(p[0], p[1]), local);
      },
      {av, bv}, 1e-6);
}

TEST_CASE("elementwise forward values") {
  Tensor x = Tensor::scalar(0.0);
  CHECK(sigmoid(x).value() == 0.5);
  Tensor f = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  CHECK(frobenius_norm_sq(f).value() == 30.0);
  CHECK(sum(f).value() == 10.0);
  CHECK(mean(f).value() == 2.5);
  CHECK(exp(Tensor::scalar(0.0)).value() == 1.0);
  CHECK(log(Tensor::scalar(1.0)).value() == 0.0);
  CHECK(relu(Tensor::scalar(-3.0)).value() == 0.0);
  CHECK(square(Tensor::scalar(-3.0)).value() == 9.0);
  CHECK(clamp(Tensor::scalar(5.0), 0.0, 1.0).value() == 1.0);
  CHECK_THROWS_AS(log(Tensor::scalar(0.0)), NumericError);
  CHECK_THROWS_AS(log(Tensor::scalar(-1.0)), NumericError);
  CHECK_THROWS_AS(clamp(Tensor::scalar(0.0), 2.0, 1.0), ConfigError);
  CHECK_THROWS_AS(add(f, Tensor::zeros({3})), ShapeError);

  Tensor r = row_sum(Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6}));
  CHECK(r.shape() == Shape{2});
  CHECK(r.data()[0] == 6);
  CHECK(r.data()[1] == 15);
}

TEST_CASE("composed smooth chain gradient at 1e-6") {
  Rng rng(2002);
  auto xv = random_values(rng, 12, -1.5, 1.5);
  check_grads(
      {{3, 4}},
      [](const std::vector<Tensor>& p) {
        Tensor t = sigmoid(add(mul(p[0], 0.7), square(p[0])));
        Tensor u = log(add(t, 0.5));
        Tensor w = sub(1.0, mul(u, exp(mul(p[0], 0.1))));
        Rng local(66);
        return weighted_sum(w, local);
      },
      {xv}, 1e-6);
}

TEST_CASE("kinked ops differentiate away from the kink") {
  Rng rng(2003);
  auto xv = random_values_off_zero(rng, 16, 0.3, 1.2);
  check_grads(
      {{4, 4}},
      [](const std::vector<Tensor>& p) {
        Tensor t = relu(p[0]);
        Tensor u = clamp(p[0], -0.9, 0.9);  // some entries saturate
        Rng local(67);
        return add(weighted_sum(t, local), weighted_sum(u, local));
      },
      {xv}, 1e-5);
}

TEST_CASE("reductions have exact analytic gradients") {
  Tensor x = Tensor::from_data({2, 3}, {1, -2, 3, 0.5, 4, -1}, true);
  backward(sum(x));
  for (double g : x.grad()) CHECK(g == 1.0);

  Tensor y = Tensor::from_data({2, 3}, {1, -2, 3, 0.5, 4, -1}, true);
  backward(frobenius_norm_sq(y));
  for (size_t i = 0; i < 6; ++i) CHECK(y.grad()[i] == 2.0 * y.data()[i]);

  Tensor z = Tensor::from_data({2, 2}, {1, 2, 3, 4}, true);
  backward(mean(z));
  for (double g : z.grad()) CHECK(g == 0.25);
}

TEST_CASE("backward contract: scalar root, single sweep, accumulation") {
  Tensor x = Tensor::from_data({3}, {1, 2, 3}, true);
  Tensor vec = mul(x, 2.0);
  CHECK_THROWS_AS(backward(vec), GraphError);

  Tensor loss = sum(vec);
  Graph g(loss);
  g.backward();
  CHECK_THROWS_AS(g.backward(), GraphError);

  // Leaf gradients accumulate across independent sweeps until reset.
  Tensor loss2 = sum(mul(x, x));
  backward(loss2);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(x.grad()[i] == doctest::Approx(2.0 + 2.0 * x.data()[i]).epsilon(1e-12));
  }
  x.zero_grad();
  for (double v : x.grad()) CHECK(v == 0.0);
}

TEST_CASE("diamond graphs accumulate through shared nodes") {
  Tensor x = Tensor::from_data({2}, {3, -4}, true);
  Tensor y = add(mul(x, x), x);  // d/dx = 2x + 1
  backward(sum(y));
  CHECK(x.grad()[0] == doctest::Approx(7.0).epsilon(1e-12));
  CHECK(x.grad()[1] == doctest::Approx(-7.0).epsilon(1e-12));

  Tensor a = Tensor::from_data({2}, {1, 2}, true);
  Tensor shared = mul(a, 3.0);
  Tensor out = add(shared, shared);
  backward(sum(out));
  CHECK(a.grad()[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("backward without any requires_grad leaf is a no-op") {
  Tensor x = Tensor::from_data({2}, {1, 2});
  Tensor loss = sum(mul(x, x));
  backward(loss);  // nothing to do, must not throw
  CHECK(loss.value() == 5.0);
}

TEST_CASE("structure ops: values and gradients") {
  Tensor m = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor t = transpose(m);
  CHECK(t.shape() == Shape{3, 2});
  CHECK(t.at({0, 1}) == 4);
  CHECK(t.at({2, 0}) == 3);

  Tensor r = reshape(m, {3, 2});
  CHECK(r.at({1, 0}) == 3);
  CHECK_THROWS_AS(reshape(m, {4, 2}), ShapeError);

  Tensor cc = concat_cols(m, Tensor::from_data({2, 1}, {9, 10}));
  CHECK(cc.shape() == Shape{2, 4});
  CHECK(cc.at({0, 3}) == 9);
  CHECK(cc.at({1, 2}) == 6);

  Tensor p = permute_rows(m, {1, 0});
  CHECK(p.at({0, 0}) == 4);
  CHECK_THROWS_AS(permute_rows(m, {0, 0}), ConfigError);
  CHECK_THROWS_AS(permute_rows(m, {0}), ConfigError);

  Rng rng(31);
  auto xv = random_values(rng, 6, -2, 2);
  auto vv = random_values(rng, 3, -2, 2);
  auto uv = random_values(rng, 2, -2, 2);
  check_grads(
      {{2, 3}, {3}, {2}},
      [](const std::vector<Tensor>& p) {
        Tensor t1 = add_rowvec(p[0], p[1]);
        Tensor t2 = add_colvec(t1, p[2]);
        Tensor t3 = row_softmax(t2);
        Tensor t4 = concat_cols(t3, transpose(reshape(p[0], {3, 2})));
        Tensor t5 = permute_rows(t4, {1, 0});
        Rng local(77);
        return weighted_sum(t5, local);
      },
      {xv, vv, uv}, 1e-6);
}

TEST_CASE("row_softmax rows sum to one and match direct evaluation") {
  Tensor a = Tensor::from_data({2, 3}, {1000, 1001, 1002, 0, 1, 2});
  Tensor s = row_softmax(a);
  for (int i = 0; i < 2; ++i) {
    double acc = 0.0;
    for (int j = 0; j < 3; ++j) acc += s.at({i, j});
    CHECK(acc == doctest::Approx(1.0).epsilon(1e-12));
  }
  // Shift invariance held up numerically (row 0 is far from overflow).
  CHECK(s.at({0, 0}) == doctest::Approx(s.at({1, 0})).epsilon(1e-9));
}

TEST_CASE("nchw structure ops: values and gradients") {
  Tensor z = Tensor::from_data({1, 2}, {3, 4});
  Tensor tiled = tile_spatial(z, 2, 2);
  CHECK(tiled.shape() == Shape{1, 2, 2, 2});
  CHECK(tiled.at({0, 0, 1, 1}) == 3);
  CHECK(tiled.at({0, 1, 0, 1}) == 4);

  Tensor pooled = avg_pool_all(tiled);
  CHECK(pooled.shape() == Shape{1, 2});
  CHECK(pooled.at({0, 0}) == 3);

  Rng rng(32);
  auto xv = random_values(rng, 2 * 2 * 3 * 3, -1, 1);
  auto zv = random_values(rng, 2 * 3, -1, 1);
  auto bv = random_values(rng, 5, -1, 1);
  check_grads(
      {{2, 2, 3, 3}, {2, 3}, {5}},
      [](const std::vector<Tensor>& p) {
        Tensor cat = concat_channels(p[0], tile_spatial(p[1], 3, 3));
        Tensor biased = add_channel_bias(cat, p[2]);
        Tensor pooled2 = avg_pool_all(sigmoid(biased));
        Rng local(78);
        return weighted_sum(pooled2, local);
      },
      {xv, zv, bv}, 1e-6);
}

TEST_CASE("conv2d trivial kernels") {
  Tensor x = Tensor::from_data({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor k1 = Tensor::from_data({1, 1, 1, 1}, {1});
  Tensor same = conv2d(x, k1, 1, 0);
  CHECK(same.shape() == x.shape());
  for (size_t i = 0; i < 9; ++i) CHECK(same.data()[i] == x.data()[i]);

  Tensor x2 = Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor ones = Tensor::from_data({1, 1, 2, 2}, {1, 1, 1, 1});
  Tensor out = conv2d(x2, ones, 1, 0);
  CHECK(out.shape() == Shape{1, 1, 1, 1});
  CHECK(out.value() == 10.0);

  CHECK_THROWS_AS(conv2d(x, k1, 0, 0), ConfigError);
  CHECK_THROWS_AS(conv2d(x, k1, 1, -1), ConfigError);
  CHECK_THROWS_AS(conv2d(x, Tensor::zeros({1, 2, 1, 1}), 1, 0), ShapeError);
  CHECK_THROWS_AS(conv2d(x2, Tensor::zeros({1, 1, 5, 5}), 1, 0), ShapeError);
}

TEST_CASE("conv2d output extent follows the floor formula") {
  Tensor x = Tensor::zeros({1, 1, 7, 5});
  Tensor k = Tensor::zeros({2, 1, 3, 3});
  Tensor y = conv2d(x, k, 2, 1);
  CHECK(y.shape() == Shape{1, 2, 4, 3});  // floor((7+2-3)/2)+1, floor((5+2-3)/2)+1
}

TEST_CASE("conv2d gradients match central differences") {
  Rng rng(41);
  auto xv = random_values(rng, 2 * 2 * 5 * 5, -1, 1);
  auto kv = random_values(rng, 3 * 2 * 3 * 3, -1, 1);
  check_grads(
      {{2, 2, 5, 5}, {3, 2, 3, 3}},
      [](const std::vector<Tensor>& p) {
        Rng local(79);
        return weighted_sum(conv2d(p[0], p[1], 2, 1), local);
      },
      {xv, kv}, 1e-5);
}

TEST_CASE("conv2d_transpose trivial kernel and shape round trip") {
  Tensor x = Tensor::from_data({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor k1 = Tensor::from_data({1, 1, 1, 1}, {1});
  Tensor same = conv2d_transpose(x, k1, 1, 0);
  for (size_t i = 0; i < 9; ++i) CHECK(same.data()[i] == x.data()[i]);

  // 28 -> 14 under stride 2 needs output_padding 1 to come back to 28.
  Tensor img = Tensor::zeros({1, 1, 28, 28});
  Tensor k = Tensor::zeros({4, 1, 3, 3});
  Tensor down = conv2d(img, k, 2, 1);
  CHECK(down.shape() == Shape{1, 4, 14, 14});
  Tensor up = conv2d_transpose(down, Tensor::zeros({4, 1, 3, 3}), 2, 1, 1);
  CHECK(up.shape() == Shape{1, 1, 28, 28});

  CHECK_THROWS_AS(conv2d_transpose(x, k1, 2, 0, 2), ConfigError);
  CHECK_THROWS_AS(conv2d_transpose(x, k1, 1, 0, -1), ConfigError);
  CHECK_THROWS_AS(conv2d_transpose(x, Tensor::zeros({2, 1, 3, 3}), 1, 0),
                  ShapeError);
}

TEST_CASE("conv2d_transpose is the adjoint of conv2d") {
  Rng rng(42);
  auto dot = [](const Tensor& a, const Tensor& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.data().size(); ++i) {
      acc += a.data()[i] * b.data()[i];
    }
    return acc;
  };
  for (int h : {6, 7}) {
    Tensor x = Tensor::from_data(
        {2, 2, h, h}, random_values(rng, 2 * 2 * h * h, -1, 1));
    Tensor k = Tensor::from_data({3, 2, 3, 3},
                                 random_values(rng, 3 * 2 * 3 * 3, -1, 1));
    Tensor fwd = conv2d(x, k, 2, 1);
    Tensor y = Tensor::from_data(fwd.shape(),
                                 random_values(rng, fwd.numel(), -1, 1));
    int op = h - ((fwd.dim(2) - 1) * 2 - 2 + 3);
    Tensor back = conv2d_transpose(y, k, 2, 1, op);
    REQUIRE(back.shape() == x.shape());
    double lhs = dot(fwd, y);
    double rhs = dot(x, back);
    CHECK(std::abs(lhs - rhs) <=
          1e-10 * std::max({std::abs(lhs), std::abs(rhs), 1.0}));
  }
}

TEST_CASE("conv2d_transpose gradients match central differences") {
  Rng rng(43);
  auto xv = random_values(rng, 2 * 3 * 3 * 3, -1, 1);
  auto kv = random_values(rng, 3 * 2 * 3 * 3, -1, 1);
  check_grads(
      {{2, 3, 3, 3}, {3, 2, 3, 3}},
      [](const std::vector<Tensor>& p) {
        Rng local(80);
        return weighted_sum(conv2d_transpose(p[0], p[1], 2, 1, 1), local);
      },
      {xv, kv}, 1e-5);
}

TEST_CASE("cholesky factors and round-trips") {
  Tensor eye = Tensor::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor le = cholesky(eye);
  for (size_t i = 0; i < 9; ++i) CHECK(le.data()[i] == eye.data()[i]);

  Tensor a = Tensor::from_data({2, 2}, {4, 2, 2, 3});
  Tensor l = cholesky(a);
  CHECK(l.at({0, 0}) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(l.at({0, 1}) == 0.0);
  CHECK(l.at({1, 0}) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(l.at({1, 1}) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));

  // Random SPD round trips up to 64x64.
  Rng rng(51);
  for (int n : {4, 17, 64}) {
    std::vector<double> m = random_values(rng, n * n, -1, 1);
    Tensor mt = Tensor::from_data({n, n}, m);
    Tensor spd = matmul(transpose(mt), mt);
    for (int i = 0; i < n; ++i) spd.data()[static_cast<size_t>(i) * n + i] += 1e-3;
    Tensor b = cholesky(spd);
    Tensor rebuilt = matmul(b, transpose(b));
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < spd.data().size(); ++i) {
      double diff = rebuilt.data()[i] - spd.data()[i];
      num += diff * diff;
      den += spd.data()[i] * spd.data()[i];
    }
    CHECK(std::sqrt(num) <= 1e-10 * std::sqrt(den));
  }

  Tensor bad = Tensor::from_data({2, 2}, {1, 0, 0, -1});
  CHECK_THROWS_AS(cholesky(bad), NotPositiveDefiniteError);
  try {
    cholesky(bad);
  } catch (const NotPositiveDefiniteError& e) {
    CHECK(e.pivot == 1);
  }
  CHECK_THROWS_AS(cholesky(Tensor::zeros({2, 3})), ShapeError);

  // The factor never joins the graph even when its input does.
  Tensor live = Tensor::from_data({2, 2}, {4, 2, 2, 3}, true);
  CHECK(!cholesky(live).requires_grad());
}

TEST_CASE("triangular_solve solves and differentiates through rhs") {
  Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  Tensor rhs = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor x0 = triangular_solve(eye, rhs);
  for (size_t i = 0; i < 6; ++i) CHECK(x0.data()[i] == rhs.data()[i]);

  Tensor l = Tensor::from_data({2, 2}, {2, 0, 1, 1});
  Tensor r = Tensor::from_data({2, 1}, {2, 3});
  Tensor x = triangular_solve(l, r);
  CHECK(x.at({0, 0}) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(x.at({1, 0}) == doctest::Approx(2.0).epsilon(1e-14));

  // Residual on a random system.
  Rng rng(52);
  int n = 12, cols = 5;
  std::vector<double> lv(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < i; ++j) {
      lv[static_cast<size_t>(i) * n + j] = -1.0 + 2.0 * rng.uniform();
    }
    lv[static_cast<size_t>(i) * n + i] = 0.5 + rng.uniform();
  }
  Tensor lt = Tensor::from_data({n, n}, lv);
  Tensor rt = Tensor::from_data({n, cols}, random_values(rng, n * cols, -2, 2));
  Tensor sol = triangular_solve(lt, rt);
  Tensor res = sub(matmul(lt, sol), rt);
  CHECK(std::sqrt(frobenius_norm_sq(res).value()) <=
        1e-10 * std::sqrt(frobenius_norm_sq(rt).value()));

  Tensor sing = Tensor::from_data({2, 2}, {1, 0, 3, 0});
  CHECK_THROWS_AS(triangular_solve(sing, r), SingularMatrixError);
  Tensor lg = Tensor::from_data({2, 2}, {2, 0, 1, 1}, true);
  CHECK_THROWS_AS(triangular_solve(lg, r), GraphError);
  CHECK_THROWS_AS(triangular_solve(l, Tensor::zeros({3, 1})), ShapeError);

  auto lv_flat = lt.data();
  auto rv = random_values(rng, n * cols, -2, 2);
  check_grads(
      {{n, cols}},
      [&](const std::vector<Tensor>& p) {
        Rng local(81);
        return weighted_sum(triangular_solve(lt, p[0]), local);
      },
      {rv}, 1e-6);
  (void)lv_flat;
}

TEST_CASE("orthogonalization composition keeps rows coupled correctly") {
  // Y = transpose(solve(B, transpose(Yt))) with a frozen factor B: gradients
  // must flow through the solve into Yt, not through B.
  Rng rng(53);
  int m = 8, k = 3;
  auto yv = random_values(rng, m * k, -1, 1);
  Tensor yt0 = Tensor::from_data({m, k}, yv);
  Tensor gram = mul(matmul(transpose(yt0), yt0), 1.0 / m);
  for (int i = 0; i < k; ++i) gram.data()[static_cast<size_t>(i) * k + i] += 1e-9;
  Tensor b = cholesky(gram);

  check_grads(
      {{m, k}},
      [&](const std::vector<Tensor>& p) {
        Tensor y = transpose(triangular_solve(b, transpose(p[0])));
        Rng local(82);
        return weighted_sum(y, local);
      },
      {yv}, 1e-6);

  // And the full recipe orthonormalizes at the base point.
  Tensor y = transpose(triangular_solve(b, transpose(yt0)));
  Tensor should_be_eye = mul(matmul(transpose(y), y), 1.0 / m);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      double expect = i == j ? 1.0 : 0.0;
      CHECK(std::abs(should_be_eye.at({i, j}) - expect) <= 1e-6);
    }
  }
}

TEST_CASE("identical seeds give bit-identical forward and backward") {
  auto run = [](uint64_t seed) {
    Rng rng(seed);
    Tensor x = Tensor::from_data({2, 2, 5, 5},
                                 random_values(rng, 2 * 2 * 5 * 5, -1, 1), true);
    Tensor k = Tensor::from_data({3, 2, 3, 3},
                                 random_values(rng, 3 * 2 * 3 * 3, -1, 1), true);
    Tensor loss = frobenius_norm_sq(sigmoid(conv2d(x, k, 2, 1)));
    backward(loss);
    std::vector<double> out;
    out.push_back(loss.value());
    out.insert(out.end(), x.grad().begin(), x.grad().end());
    out.insert(out.end(), k.grad().begin(), k.grad().end());
    return out;
  };
  auto a = run(99), b = run(99);
  REQUIRE(a.size() == b.size());
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}
