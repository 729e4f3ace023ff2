#include <cmath>
#include <stdexcept>

#include <doctest.h>

#include "nl2code/ops.hpp"
#include "nl2code/optim.hpp"

using namespace nl2code;

TEST_CASE("one adam step matches the closed form") {
  Tensor w = Tensor::from({2}, {1.0, -2.0});
  w.set_requires_grad(true);
  w.grad() = {0.5, -1.5};

  AdamState state;
  std::vector<std::pair<std::string, Tensor>> params = {{"w", w}};
  adam_step(params, state, 0.1);

  // step 1: m = (1-b1)g, v = (1-b2)g^2, bias-corrected m_hat = g, v_hat = g^2
  // so the update is -lr * g / (|g| + eps) = -lr * sign(g) (up to eps).
  const double eps = state.eps;
  CHECK(w.values()[0] == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + eps)).epsilon(1e-12));
  CHECK(w.values()[1] == doctest::Approx(-2.0 + 0.1 * 1.5 / (1.5 + eps)).epsilon(1e-12));
  CHECK(state.step == 1);
  CHECK(state.m.at("w")[0] == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(state.v.at("w")[0] == doctest::Approx(0.00025).epsilon(1e-9));
  CHECK_FALSE(w.has_grad());  // gradients are consumed by the step
}

TEST_CASE("adam drives a quadratic to its minimum") {
  Tensor w = Tensor::from({1}, {5.0});
  w.set_requires_grad(true);
  AdamState state;
  std::vector<std::pair<std::string, Tensor>> params = {{"w", w}};
  for (int i = 0; i < 400; ++i) {
    Tensor loss = mul(w, w);
    Tensor scalar = sum(loss);
    backward(scalar);
    adam_step(params, state, 0.05);
  }
  CHECK(std::abs(w.values()[0]) < 1e-2);
}

TEST_CASE("adam rejects bad learning rates and stale moment shapes") {
  Tensor w = Tensor::from({2}, {1.0, 2.0});
  w.set_requires_grad(true);
  w.grad() = {1.0, 1.0};
  AdamState state;
  std::vector<std::pair<std::string, Tensor>> params = {{"w", w}};
  CHECK_THROWS_AS(adam_step(params, state, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(adam_step(params, state, -1.0), std::invalid_argument);

  state.m["w"] = {0.0};  // wrong length
  state.v["w"] = {0.0};
  CHECK_THROWS_AS(adam_step(params, state, 0.1), std::runtime_error);
}

TEST_CASE("parameters without gradients are skipped") {
  Tensor a = Tensor::from({1}, {1.0});
  Tensor b = Tensor::from({1}, {2.0});
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  a.grad() = {1.0};
  AdamState state;
  std::vector<std::pair<std::string, Tensor>> params = {{"a", a}, {"b", b}};
  adam_step(params, state, 0.1);
  CHECK(b.values()[0] == 2.0);
  CHECK(state.m.count("a") == 1);
  CHECK(state.m.count("b") == 0);
}

TEST_CASE("global norm clipping rescales only above the threshold") {
  Tensor a = Tensor::from({2}, {3.0, 0.0});
  Tensor b = Tensor::from({1}, {4.0});
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  a.grad() = {3.0, 0.0};
  b.grad() = {4.0};
  std::vector<std::pair<std::string, Tensor>> params = {{"a", a}, {"b", b}};

  SUBCASE("above the threshold") {
    const double norm = clip_global_norm(params, 1.0);
    CHECK(norm == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(a.grad()[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(b.grad()[0] == doctest::Approx(0.8).epsilon(1e-12));
  }
  SUBCASE("below the threshold") {
    const double norm = clip_global_norm(params, 10.0);
    CHECK(norm == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(a.grad()[0] == 3.0);
  }
  SUBCASE("disabled") {
    const double norm = clip_global_norm(params, 0.0);
    CHECK(norm == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(b.grad()[0] == 4.0);
  }
}

TEST_CASE("warmup learning-rate schedule follows the inverse-root curve") {
  LrSchedule sched{"noam", 128, 400, 1.0, 0.001};
  auto expected = [](long long step) {
    return std::pow(128.0, -0.5) *
           std::min(std::pow(static_cast<double>(step), -0.5),
                    static_cast<double>(step) * std::pow(400.0, -1.5));
  };
  CHECK(sched.at(1) == doctest::Approx(expected(1)).epsilon(1e-12));
  CHECK(sched.at(400) == doctest::Approx(expected(400)).epsilon(1e-12));
  CHECK(sched.at(10000) == doctest::Approx(expected(10000)).epsilon(1e-12));
  // warmup ramps up, decay comes down
  CHECK(sched.at(100) < sched.at(400));
  CHECK(sched.at(10000) < sched.at(400));
  CHECK_THROWS_AS(sched.at(0), std::invalid_argument);

  LrSchedule constant{"constant", 128, 400, 1.0, 0.003};
  CHECK(constant.at(1) == 0.003);
  CHECK(constant.at(99999) == 0.003);
}
