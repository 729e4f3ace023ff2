#include <cmath>
#include <stdexcept>

#include <doctest.h>

#include "nl2code/ops.hpp"
#include "nl2code/tensor.hpp"
#include "support/fd.hpp"

using namespace nl2code;
using test_support::fd_check;

namespace {

Tensor random_tensor(const std::vector<int>& shape, Rng& rng, bool requires_grad = true) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  Tensor t = Tensor::from(shape, std::move(v));
  if (requires_grad) t.set_requires_grad(true);
  return t;
}

}  // namespace

TEST_CASE("matmul forward and backward match hand values") {
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from({2, 2}, {5, 6, 7, 8});
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  Tensor c = matmul(a, b);
  CHECK(c.values() == std::vector<double>{19, 22, 43, 50});
  backward(sum(c));
  // d(sum)/dA = 1 * B^T, d(sum)/dB = A^T * 1
  CHECK(a.grad() == std::vector<double>{11, 15, 11, 15});
  CHECK(b.grad() == std::vector<double>{4, 4, 6, 6});
}

TEST_CASE("matmul shape mismatch throws") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 3});
  CHECK_THROWS_AS(matmul(a, b), std::invalid_argument);
}

TEST_CASE("broadcast add distributes gradient over rows") {
  Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor bias = Tensor::from({3}, {10, 20, 30});
  a.set_requires_grad(true);
  bias.set_requires_grad(true);
  Tensor out = add(a, bias);
  CHECK(out.values() == std::vector<double>{11, 22, 33, 14, 25, 36});
  backward(sum(out));
  CHECK(bias.grad() == std::vector<double>{2, 2, 2});
}

TEST_CASE("softmax rows sum to one and gradient checks out") {
  Rng rng(11);
  Tensor x = random_tensor({3, 5}, rng);
  Tensor s = softmax(x);
  for (int r = 0; r < 3; ++r) {
    double row = 0.0;
    for (int c = 0; c < 5; ++c) row += s.values()[r * 5 + c];
    CHECK(std::abs(row - 1.0) < 1e-12);
  }
  std::vector<std::pair<std::string, Tensor>> params = {{"x", x}};
  const auto rep = fd_check(params, [&]() { return sum(mul(softmax(x), x)); }, 15, 1);
  CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("elementwise primitives pass finite differences") {
  Rng rng(5);
  Tensor x = random_tensor({4, 3}, rng);
  Tensor y = random_tensor({4, 3}, rng);
  std::vector<std::pair<std::string, Tensor>> params = {{"x", x}, {"y", y}};

  SUBCASE("mul+scale+add") {
    const auto rep =
        fd_check(params, [&]() { return sum(scale(add(mul(x, y), x), 0.7)); }, 12, 2);
    CHECK(rep.max_rel_err < 1e-6);
  }
  SUBCASE("exp/log chain") {
    const auto rep =
        fd_check(params, [&]() { return mean(log(add(exp(x), exp(y)))); }, 12, 3);
    CHECK(rep.max_rel_err < 1e-6);
  }
  SUBCASE("relu") {
    const auto rep = fd_check(params, [&]() { return sum(relu(mul(x, y))); }, 12, 4);
    CHECK(rep.max_rel_err < 1e-4);  // kinks excluded only by luck of the draw
  }
  SUBCASE("transpose") {
    const auto rep =
        fd_check(params, [&]() { return sum(matmul(transpose(x), y)); }, 12, 5);
    CHECK(rep.max_rel_err < 1e-6);
  }
}

TEST_CASE("cross_entropy hand value, pad skipping, and gradient") {
  Tensor logits = Tensor::from({2, 3}, {1, 2, 3, 0.5, 0.5, 0.5});
  logits.set_requires_grad(true);
  // Row 1 is pad: the loss is just row 0's -log softmax[target].
  Tensor loss = cross_entropy(logits, {2, 0}, 0);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(loss.value() == doctest::Approx(-std::log(std::exp(3.0) / z)).epsilon(1e-12));

  std::vector<std::pair<std::string, Tensor>> params = {{"logits", logits}};
  const auto rep =
      fd_check(params, [&]() { return cross_entropy(logits, {2, 0}, 0); }, 6, 6);
  CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("cross_entropy rejects bad targets") {
  Tensor logits = Tensor::zeros({2, 3});
  CHECK_THROWS_AS(cross_entropy(logits, {1}, 0), std::invalid_argument);
  CHECK_THROWS_AS(cross_entropy(logits, {1, 7}, 0), std::out_of_range);
  CHECK_THROWS_AS(cross_entropy(logits, {0, 0}, 0), std::invalid_argument);  // every position pad
}

TEST_CASE("nll_from_probs floors tiny probabilities and checks gradients") {
  Tensor probs = Tensor::from({2, 3}, {0.2, 0.3, 0.5, 1.0, 0.0, 0.0});
  probs.set_requires_grad(true);
  Tensor loss = nll_from_probs(probs, {2, 1}, 0);
  // Second row's target probability 0 is floored instead of producing inf.
  CHECK(std::isfinite(loss.value()));
  CHECK(loss.value() ==
        doctest::Approx(0.5 * (-std::log(0.5) - std::log(1e-12))).epsilon(1e-9));

  Tensor safe = Tensor::from({2, 3}, {0.2, 0.3, 0.5, 0.6, 0.3, 0.1});
  safe.set_requires_grad(true);
  std::vector<std::pair<std::string, Tensor>> params = {{"probs", safe}};
  const auto rep =
      fd_check(params, [&]() { return nll_from_probs(safe, {2, 1}, 0); }, 6, 7);
  CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("layer_norm normalizes rows and passes finite differences") {
  Rng rng(9);
  Tensor x = random_tensor({3, 6}, rng);
  Tensor gamma = Tensor::full({6}, 1.0);
  Tensor beta = Tensor::zeros({6});
  gamma.set_requires_grad(true);
  beta.set_requires_grad(true);
  Tensor out = layer_norm(x, gamma, beta);
  for (int r = 0; r < 3; ++r) {
    double m = 0.0, var = 0.0;
    for (int c = 0; c < 6; ++c) m += out.values()[r * 6 + c];
    m /= 6;
    for (int c = 0; c < 6; ++c) {
      const double d = out.values()[r * 6 + c] - m;
      var += d * d;
    }
    CHECK(std::abs(m) < 1e-12);
    CHECK(var / 6 == doctest::Approx(1.0).epsilon(1e-3));
  }
  std::vector<std::pair<std::string, Tensor>> params = {
      {"x", x}, {"gamma", gamma}, {"beta", beta}};
  const auto rep = fd_check(
      params, [&]() { return sum(mul(layer_norm(x, gamma, beta), x)); }, 12, 8);
  CHECK(rep.max_rel_err < 1e-5);
}

TEST_CASE("gather_rows scatter-adds gradients for repeated ids") {
  Tensor table = Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6});
  table.set_requires_grad(true);
  Tensor picked = gather_rows(table, {2, 0, 2});
  CHECK(picked.values() == std::vector<double>{5, 6, 1, 2, 5, 6});
  backward(sum(picked));
  CHECK(table.grad() == std::vector<double>{1, 1, 0, 0, 2, 2});
  CHECK_THROWS_AS(gather_rows(table, {3}), std::out_of_range);
}

TEST_CASE("slice and concat are exact partitions with routed gradients") {
  Rng rng(13);
  Tensor x = random_tensor({4, 6}, rng);
  Tensor top = slice_rows(x, 0, 2);
  Tensor bottom = slice_rows(x, 2, 2);
  Tensor rejoined = concat_rows({top, bottom});
  CHECK(rejoined.values() == x.values());

  Tensor left = slice_cols(x, 0, 3);
  Tensor right = slice_cols(x, 3, 3);
  CHECK(concat_cols({left, right}).values() == x.values());

  std::vector<std::pair<std::string, Tensor>> params = {{"x", x}};
  const auto rep = fd_check(
      params,
      [&]() {
        Tensor a = slice_cols(x, 1, 3);
        Tensor b = concat_rows({slice_rows(a, 0, 2), slice_rows(a, 2, 2)});
        return sum(mul(b, b));
      },
      12, 9);
  CHECK(rep.max_rel_err < 1e-6);
  CHECK_THROWS_AS(slice_rows(x, 3, 2), std::out_of_range);
}

TEST_CASE("dropout semantics") {
  Rng rng(17);
  Tensor x = Tensor::full({4, 4}, 2.0);
  x.set_requires_grad(true);

  Tensor eval_out = dropout(x, 0.5, rng, /*train=*/false);
  CHECK(eval_out.values() == x.values());
  Tensor p0 = dropout(x, 0.0, rng, /*train=*/true);
  CHECK(p0.values() == x.values());

  Tensor trained = dropout(x, 0.5, rng, /*train=*/true);
  int kept = 0;
  for (double v : trained.values()) {
    CHECK((v == 0.0 || v == 4.0));  // survivors scaled by 1/(1-p)
    if (v != 0.0) ++kept;
  }
  CHECK(kept > 0);
  CHECK(kept < 16);

  backward(sum(trained));
  for (std::size_t i = 0; i < x.numel(); ++i) {
    CHECK(x.grad()[i] == (trained.values()[i] == 0.0 ? 0.0 : 2.0));
  }
  CHECK_THROWS_AS(dropout(x, 1.0, rng, true), std::invalid_argument);
  CHECK_THROWS_AS(dropout(x, -0.1, rng, true), std::invalid_argument);
}

TEST_CASE("a value reused twice accumulates both gradient paths") {
  Tensor x = Tensor::from({2, 2}, {1, 2, 3, 4});
  x.set_requires_grad(true);
  Tensor out = add(mul(x, x), scale(x, 3.0));  // d/dx = 2x + 3
  backward(sum(out));
  CHECK(x.grad() == std::vector<double>{5, 7, 9, 11});
}

TEST_CASE("backward requires a scalar; NoGradGuard stops recording") {
  Tensor x = Tensor::from({2, 2}, {1, 2, 3, 4});
  x.set_requires_grad(true);
  CHECK_THROWS_AS(backward(add(x, x)), std::invalid_argument);

  {
    NoGradGuard guard;
    CHECK_FALSE(grad_enabled());
    Tensor y = sum(mul(x, x));
    backward(y);  // nothing was recorded, so nothing propagates
    CHECK_FALSE(x.has_grad());
  }
  CHECK(grad_enabled());
}

TEST_CASE("gradients on constants stay absent") {
  Tensor x = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor c = Tensor::full({2, 2}, 5.0);
  x.set_requires_grad(true);
  backward(sum(mul(x, c)));
  CHECK(x.has_grad());
  CHECK_FALSE(c.has_grad());
}
