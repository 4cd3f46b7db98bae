#include "doctest.h"

#include <cmath>

#include "minclip/ops.hpp"
#include "minclip/rng.hpp"
#include "oracles.hpp"

using namespace minclip;

TEST_CASE("matmul identity") {
  auto a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  auto eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  auto c = matmul(a, eye);
  CHECK(c.data() == std::vector<float>{1, 2, 3, 4});
}

TEST_CASE("matmul rejects inner dim mismatch") {
  auto a = Tensor::zeros({2, 3});
  auto b = Tensor::zeros({2, 3});
  CHECK_THROWS_AS(matmul(a, b), ShapeMismatch);
  CHECK_NOTHROW(matmul(a, b, /*transpose_b=*/true));
}

TEST_CASE("softmax symmetry") {
  auto x = Tensor::from_data({2}, {0, 0});
  auto y = softmax(x);
  CHECK(y.data()[0] == doctest::Approx(0.5));
  CHECK(y.data()[1] == doctest::Approx(0.5));
}

TEST_CASE("layernorm normalizes to mean 0 variance 1") {
  auto x = Tensor::from_data({3}, {1, 2, 3});
  auto y = layernorm(x, 1e-5);
  const auto [mean, var] = oracles::mean_var(y.data());
  CHECK(std::abs(mean) < 1e-4);
  CHECK(std::abs(var - 1.0) < 1e-4);
}

TEST_CASE("l2_normalize rows have unit norm") {
  Rng rng(7);
  auto x = Tensor::zeros({5, 16});
  for (auto& v : x.data()) v = static_cast<float>(rng.gaussian());
  auto y = l2_normalize(x);
  for (int r = 0; r < 5; ++r) {
    double n2 = 0;
    for (int j = 0; j < 16; ++j) n2 += y.data()[static_cast<size_t>(r * 16 + j)] *
                                        y.data()[static_cast<size_t>(r * 16 + j)];
    CHECK(std::abs(std::sqrt(n2) - 1.0) < 1e-5);
  }
}

TEST_CASE("non-finite outputs raise NumericOverflow") {
  auto x = Tensor::from_data({2}, {0.0f, -1.0f});
  CHECK_THROWS_AS(log(x), NumericOverflow);
  auto big = Tensor::from_data({1}, {1e30f});
  CHECK_THROWS_AS(mul(big, big), NumericOverflow);
}

TEST_CASE("add broadcasts a trailing suffix only") {
  auto a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  auto bias = Tensor::from_data({2}, {10, 20});
  auto c = add(a, bias);
  CHECK(c.data() == std::vector<float>{11, 22, 13, 24});
  auto wrong = Tensor::from_data({3}, {1, 2, 3});
  CHECK_THROWS_AS(add(a, wrong), ShapeMismatch);
}

TEST_CASE("embedding_lookup gathers rows and rejects bad ids") {
  auto table = Tensor::from_data({3, 2}, {0, 1, 10, 11, 20, 21});
  auto out = embedding_lookup(table, {2, 0}, {2});
  CHECK(out.data() == std::vector<float>{20, 21, 0, 1});
  CHECK_THROWS_AS(embedding_lookup(table, {3}, {1}), ShapeMismatch);
}

TEST_CASE("mean and masked_mean") {
  auto x = Tensor::from_data({4}, {1, 2, 3, 4});
  CHECK(mean(x).item() == doctest::Approx(2.5));

  auto seq = Tensor::from_data({1, 3, 2}, {1, 2, 3, 4, 100, 100});
  auto mask = Tensor::from_data({1, 3}, {1, 1, 0});
  auto pooled = masked_mean(seq, mask);
  CHECK(pooled.data()[0] == doctest::Approx(2.0));
  CHECK(pooled.data()[1] == doctest::Approx(3.0));
}

TEST_CASE("masked_attention respects the mask") {
  // Two positions; value vectors distinct. A causal mask keeps position 0
  // from seeing position 1.
  const int B = 1, T = 2, D = 2;
  auto q = Tensor::from_data({B, T, D}, {1, 0, 0, 1});
  auto k = Tensor::from_data({B, T, D}, {1, 0, 0, 1});
  auto v = Tensor::from_data({B, T, D}, {5, 0, 0, 7});
  auto causal = Tensor::from_data({B, T, T}, {1, 0, 1, 1});
  auto out = masked_attention(q, k, v, causal, /*heads=*/1);
  CHECK(out.data()[0] == doctest::Approx(5.0));  // position 0 sees only itself
  CHECK(out.data()[1] == doctest::Approx(0.0));

  auto bidir = Tensor::from_data({B, T, T}, {1, 1, 1, 1});
  auto out2 = masked_attention(q, k, v, bidir, 1);
  CHECK(out2.data()[0] > 0.0);
  CHECK(out2.data()[1] > 0.0);
}

TEST_CASE("cross_entropy_rows matches -log softmax") {
  auto logits = Tensor::from_data({1, 2}, {1, 0});
  auto loss = cross_entropy_rows(logits, {0});
  const double expected = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
  CHECK(loss.item() == doctest::Approx(expected).epsilon(1e-5));
}

TEST_CASE("ops refuse rank errors loudly") {
  auto x = Tensor::zeros({2, 3, 4});
  CHECK_THROWS_AS(matmul(x, x), ShapeMismatch);
  CHECK_THROWS_AS(reshape(x, {5, 5}), ShapeMismatch);
  CHECK_THROWS_AS(slice_rows(x, 1, 5), ShapeMismatch);
}
