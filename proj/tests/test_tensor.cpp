#include <doctest.h>

#include <cmath>
#include <vector>

#include "bctn/gradcheck.hpp"
#include "bctn/params.hpp"
#include "bctn/rng.hpp"
#include "bctn/tensor.hpp"

using namespace bctn;

using DTensor = TensorT<double>;

TEST_CASE("matmul: identity, hand case, oracle") {
  auto I = Tensor::constant({2, 2}, {1, 0, 0, 1});
  auto A = Tensor::constant({2, 2}, {3.5f, -1, 2, 0.25f});
  CHECK(matmul(I, A).values() == A.values());

  auto B = Tensor::constant({2, 2}, {1, 2, 3, 4});
  auto ones = Tensor::constant({2, 1}, {1, 1});
  auto r = matmul(B, ones);
  CHECK(r.values() == std::vector<float>{3, 7});

  Rng rng(5);
  std::vector<float> av(12), bv(8);
  for (auto& x : av) x = static_cast<float>(rng.uniform(-1, 1));
  for (auto& x : bv) x = static_cast<float>(rng.uniform(-1, 1));
  auto a = Tensor::constant({3, 4}, av);
  auto b = Tensor::constant({4, 2}, bv);
  auto c = matmul(a, b);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) {
      double acc = 0;
      for (int p = 0; p < 4; ++p) acc += static_cast<double>(av[i * 4 + p]) * bv[p * 2 + j];
      CHECK(c.values()[i * 2 + j] == doctest::Approx(acc).epsilon(1e-6));
    }

  CHECK_THROWS_AS(matmul(a, a), ShapeMismatch);
}

TEST_CASE("elementwise basics") {
  auto z = Tensor::constant({1}, {0});
  CHECK(sigmoid(z).values()[0] == doctest::Approx(0.5));

  auto x = Tensor::constant({2}, {-3, 3});
  CHECK(relu(x).values() == std::vector<float>{0, 3});

  auto v = Tensor::constant({3}, {1.5f, -2, 7});
  auto ones = Tensor::full({3}, 1.0f);
  CHECK(mul(v, ones).values() == v.values());

  auto w = Tensor::constant({2}, {1, 2});
  CHECK_THROWS_AS(add(v, w), ShapeMismatch);
  CHECK_THROWS_AS(sub(v, w), ShapeMismatch);
  CHECK_THROWS_AS(mul(v, w), ShapeMismatch);
}

TEST_CASE("softmax: zeros, stabilization, closed form") {
  auto a = softmax_vec(Tensor::constant({2}, {0, 0}));
  CHECK(a.values()[0] == doctest::Approx(0.5));
  CHECK(a.values()[1] == doctest::Approx(0.5));

  auto big = softmax_vec(Tensor::constant({2}, {1000, 1000}));
  CHECK(std::isfinite(big.values()[0]));
  CHECK(big.values()[0] == doctest::Approx(0.5));

  auto c = softmax_vec(Tensor::constant({2}, {0.0f, std::log(3.0f)}));
  CHECK(c.values()[0] == doctest::Approx(0.25).epsilon(1e-6));
  CHECK(c.values()[1] == doctest::Approx(0.75).epsilon(1e-6));
}

TEST_CASE("softmax outputs are a probability vector for arbitrary finite input") {
  Rng rng(123);
  for (int it = 0; it < 50; ++it) {
    const int n = 1 + rng.uniform_int(16);
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.uniform(-100, 100));
    auto s = softmax_vec(Tensor::constant({n}, v));
    double sum = 0;
    for (float p : s.values()) {
      CHECK(p >= 0.0f);
      sum += p;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("repeat_columns / max_pool_rows") {
  auto v = Tensor::constant({2}, {1, 2});
  auto m = repeat_columns(v, 3);
  CHECK(m.shape() == std::vector<int>{2, 3});
  CHECK(m.values() == std::vector<float>{1, 1, 1, 2, 2, 2});

  auto one_row = Tensor::constant({1, 3}, {4, -1, 2});
  CHECK(max_pool_rows(one_row).values() == std::vector<float>{4, -1, 2});

  auto two = Tensor::constant({2, 2}, {1, 5, 4, 2});
  CHECK(max_pool_rows(two).values() == std::vector<float>{4, 5});
}

TEST_CASE("max_pool_rows ties route gradient to the lowest row") {
  auto x = DTensor::leaf({2, 1}, {3.0, 3.0}, true);
  auto pooled = max_pool_rows(x);
  sum(pooled).backward();
  CHECK(x.grad()[0] == 1.0);
  CHECK(x.grad()[1] == 0.0);
}

TEST_CASE("backward: sum gives ones, square gives 2x, accumulation across uses") {
  auto x = Tensor::leaf({3}, {1, 2, 3}, true);
  sum(x).backward();
  CHECK(x.grad() == std::vector<float>{1, 1, 1});

  auto y = Tensor::leaf({1}, {3}, true);
  mul(y, y).backward();
  CHECK(y.grad()[0] == doctest::Approx(6.0));

  // z used twice: d(z + z*z)/dz = 1 + 2z = 5 at z=2
  auto z = Tensor::leaf({1}, {2}, true);
  add(z, mul(z, z)).backward();
  CHECK(z.grad()[0] == doctest::Approx(5.0));
}

TEST_CASE("backward: add passes grad, mul crosses operands") {
  auto a = Tensor::leaf({2}, {2, 5}, true);
  auto b = Tensor::leaf({2}, {7, -3}, true);
  sum(add(a, b)).backward();
  CHECK(a.grad() == std::vector<float>{1, 1});
  CHECK(b.grad() == std::vector<float>{1, 1});

  auto c = Tensor::leaf({2}, {2, 5}, true);
  auto d = Tensor::leaf({2}, {7, -3}, true);
  sum(mul(c, d)).backward();
  CHECK(c.grad() == std::vector<float>{7, -3});
  CHECK(d.grad() == std::vector<float>{2, 5});
}

TEST_CASE("backward error paths") {
  auto v = Tensor::leaf({2}, {1, 2}, true);
  CHECK_THROWS_AS(v.backward(), NotScalar);

  auto c = Tensor::constant({1}, {2});
  auto y = mul(c, c);
  CHECK_THROWS_AS(y.backward(), DetachedGraph);

  auto p = Tensor::leaf({1}, {2}, true);
  Tensor under_no_grad;
  {
    NoGradGuard ng;
    under_no_grad = mul(p, p);
  }
  CHECK_THROWS_AS(under_no_grad.backward(), DetachedGraph);
}

TEST_CASE("grad_check: quadratic") {
  ParameterStore<double> ps;
  ps.add("x", {1}, {3.0}, true);
  auto res = grad_check<double>(
      ps, [](ParameterStore<double>& s) { return mul(s.get("x"), s.get("x")); }, 1e-4);
  CHECK(res.checked == 1);
  CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("grad_check: softmax cross-entropy on random logits") {
  Rng rng(17);
  ParameterStore<double> ps;
  std::vector<double> logits(10);
  for (auto& v : logits) v = rng.uniform(-2, 2);
  ps.add("logits", {10}, logits, true);
  auto res = grad_check<double>(
      ps,
      [](ParameterStore<double>& s) {
        auto p = softmax_vec(s.get("logits"));
        return neg(logt(pick(p, 3)));
      },
      1e-4);
  CHECK(res.checked == 10);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("grad_check: relu exactly at the kink is skipped and counted") {
  ParameterStore<double> ps;
  ps.add("x", {1}, {0.0}, true);
  auto res = grad_check<double>(
      ps, [](ParameterStore<double>& s) { return sum(relu(s.get("x"))); }, 1e-3);
  CHECK(res.skipped_kink == 1);
  CHECK(res.checked == 0);
}

TEST_CASE("grad_check: composite touching most ops") {
  // layer_norm, matmul, attention-ish softmax rows, scale_columns, concat,
  // repeat_columns, max_pool, scatter, pick, div, dot in one scalar loss
  Rng rng(31);
  ParameterStore<double> ps;
  auto add_param = [&](const char* name, std::vector<int> shape) {
    long n = 1;
    for (int d : shape) n *= d;
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-0.8, 0.8);
    ps.add(name, shape, v, true);
  };
  add_param("X", {3, 4});
  add_param("W", {4, 4});
  add_param("g", {4});
  add_param("b", {4});
  add_param("s", {3});
  add_param("v", {4});

  auto loss_fn = [](ParameterStore<double>& s) {
    auto X = s.get("X");
    auto W = s.get("W");
    auto H = matmul(X, W);                       // 3x4
    auto N = layer_norm_rows(H, s.get("g"), s.get("b"));
    auto A = softmax_rows(N);                    // rows sum 1
    auto S = scale_columns(transpose(A), s.get("s"));  // 4x3
    auto P = max_pool_rows(transpose(S));        // len 4... transpose(S)=3x4 -> pool -> [4]
    auto C = concat_vec<double>({P, s.get("v")});        // [8]
    auto R = repeat_columns(slice_vec(C, 0, 4), 2);      // 4x2
    auto t = dot(col(R, 0), s.get("v"));
    auto sm = softmax_vec(matvec(transpose(R), s.get("v")));
    auto picked = pick(sm, 1);
    auto denom = add_scalar_broadcast(mul(t, t), DTensor::scalar(1.0));
    return add(div(picked, denom), sum(scatter_sum_vec(C, {0, 1, 0, 2, 3, 1, 0, 2}, 4)));
  };
  auto res = grad_check<double>(ps, loss_fn, 1e-5);
  CHECK(res.checked > 0);
  CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("embedding gather/scatter gradients") {
  ParameterStore<double> ps;
  ps.add("T", {3, 2}, {1, 2, 3, 4, 5, 6}, true);
  auto res = grad_check<double>(
      ps,
      [](ParameterStore<double>& s) {
        auto E = embedding_rows(s.get("T"), {0, 2, 0});
        return sum(mul(E, E));
      },
      1e-5);
  CHECK(res.max_rel_err < 1e-7);

  // ids 0 used twice: grads accumulate
  auto T = DTensor::leaf({3, 2}, {1, 2, 3, 4, 5, 6}, true);
  sum(embedding_rows(T, {0, 0})).backward();
  CHECK(T.grad()[0] == 2.0);
  CHECK(T.grad()[5] == 0.0);
}

TEST_CASE("forward outputs stay finite for inputs in [-10, 10]") {
  Rng rng(77);
  for (int it = 0; it < 20; ++it) {
    const int h = 1 + rng.uniform_int(6);
    const int L = 1 + rng.uniform_int(6);
    std::vector<float> uv(h * L), wv(h * 2 * h), vv(h);
    for (auto& x : uv) x = static_cast<float>(rng.uniform(-10, 10));
    for (auto& x : wv) x = static_cast<float>(rng.uniform(-10, 10));
    for (auto& x : vv) x = static_cast<float>(rng.uniform(-10, 10));
    auto U = Tensor::constant({h, L}, uv);
    auto W = Tensor::constant({h, 2 * h}, wv);
    auto s = Tensor::constant({h}, vv);
    auto O = relu(matmul(W, concat_rows<float>({repeat_columns(s, L), U})));
    auto gamma = softmax_vec(vecmat(s, O));
    auto out = sigmoid(matvec(O, gamma));
    for (float x : out.values()) CHECK(std::isfinite(x));
  }
}

TEST_CASE("concat validates shapes; slice and transpose round-trip") {
  auto a = Tensor::constant({2, 2}, {1, 2, 3, 4});
  auto b = Tensor::constant({1, 3}, {9, 9, 9});
  CHECK_THROWS_AS(concat_rows<float>({a, b}), ShapeMismatch);

  auto t = transpose(transpose(a));
  CHECK(t.values() == a.values());

  auto stacked = concat_rows<float>({a, Tensor::constant({1, 2}, {5, 6})});
  CHECK(stacked.shape() == std::vector<int>{3, 2});
  CHECK(row(stacked, 2).values() == std::vector<float>{5, 6});
  CHECK(col(stacked, 1).values() == std::vector<float>{2, 4, 6});
  CHECK(slice_rows(stacked, 1, 3).values() == std::vector<float>{3, 4, 5, 6});
}
