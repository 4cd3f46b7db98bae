#include "doctest.h"

#include "gradcheck_suite.hpp"
#include "minclip/gradcheck.hpp"
#include "minclip/ops.hpp"

using namespace minclip;

TEST_CASE("d(x*x)/dx = 2x") {
  auto x = Tensor::from_data({1}, {3.0f}, true);
  auto y = mul(x, x);
  y.backward();
  CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("fan-out accumulates: d(x+x)/dx = 2") {
  auto x = Tensor::from_data({1}, {1.0f}, true);
  auto y = add(x, x);
  y.backward();
  CHECK(x.grad()[0] == doctest::Approx(2.0));
}

TEST_CASE("backward requires a scalar root") {
  auto x = Tensor::from_data({2}, {1, 2}, true);
  auto y = mul(x, x);
  CHECK_THROWS_AS(y.backward(), NonScalarRoot);
}

TEST_CASE("matmul gradient matches central finite differences") {
  Rng rng(11);
  DTensor a = gradcheck_suite::random_dtensor(rng, {3, 4});
  DTensor b = gradcheck_suite::random_dtensor(rng, {4, 2});
  const double err = grad_check(
      [&](const DTensor& x) {
        auto prod = matmul(x, b);
        return scale(mean(prod), static_cast<double>(prod.numel()));  // sum
      },
      a, 1e-5);
  CHECK(err < 1e-3);
}

TEST_CASE("grad_check on a linear function is ~0") {
  Rng rng(3);
  DTensor a = gradcheck_suite::random_dtensor(rng, {6});
  const double err = grad_check([&](const DTensor& x) { return mean(x); }, a, 1e-4);
  CHECK(err < 1e-9);
}

TEST_CASE("grad_check on softmax cross-entropy") {
  Rng rng(5);
  DTensor logits = gradcheck_suite::random_dtensor(rng, {4, 7});
  const double err = grad_check(
      [&](const DTensor& x) { return cross_entropy_rows(x, {0, 2, 6, 1}); }, logits, 1e-4);
  CHECK(err < 1e-4);
}

TEST_CASE("every op kind passes grad_check at 10 random points") {
  for (const auto& check : gradcheck_suite::run_op_checks(10, 20240601)) {
    INFO(check.name);
    CHECK(check.worst < 1e-3);
  }
}

TEST_CASE("full two-tower loss passes grad_check") {
  CHECK(gradcheck_suite::full_loss_check(4, 99) < 1e-3);
}

TEST_CASE("backward is deterministic across identical runs") {
  auto run = []() {
    Rng rng(42);
    auto a = Tensor::zeros({8, 8}, true);
    for (auto& v : a.data()) v = static_cast<float>(rng.gaussian());
    auto b = Tensor::zeros({8, 8}, true);
    for (auto& v : b.data()) v = static_cast<float>(rng.gaussian());
    auto loss = mean(gelu(matmul(layernorm(a), b)));
    loss.backward();
    return std::make_pair(a.grad(), b.grad());
  };
  const auto first = run();
  const auto second = run();
  CHECK(first.first == second.first);    // bitwise
  CHECK(first.second == second.second);
}

TEST_CASE("NoGradGuard suppresses graph construction") {
  auto x = Tensor::from_data({1}, {2.0f}, true);
  NoGradGuard ng;
  auto y = mul(x, x);
  CHECK_FALSE(y.requires_grad());
}
