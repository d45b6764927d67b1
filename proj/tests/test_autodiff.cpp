#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pyraflow/ops.hpp"
#include "pyraflow/selfcheck.hpp"
#include "test_support.hpp"

using namespace pyraflow;
using namespace pyraflow::testing;

TEST_CASE("backward: sum of identity-kernel conv gives all-ones input gradient") {
  std::mt19937_64 rng(1);
  Tensor x = rand_tensor({2, 4, 4}, rng);
  Tensor w(Shape{2, 2, 1, 1});
  w.data()[0] = 1.0f; // out0 <- in0
  w.data()[3] = 1.0f; // out1 <- in1
  Tensor b(Shape{2});
  ConvSpec spec;
  spec.kernel_h = spec.kernel_w = 1;
  spec.pad_h = spec.pad_w = 0;
  spec.in_channels = spec.out_channels = 2;

  Tape tape;
  Tensor loss = sum_all(conv2d(x, w, b, spec, &tape), &tape);
  tape.backward(loss);
  Tensor gx = tape.grad(x);
  for (int64_t i = 0; i < gx.size(); ++i) CHECK(gx.data()[i] == doctest::Approx(1.0f));
}

TEST_CASE("backward: a tensor feeding two consumers accumulates both paths") {
  std::mt19937_64 rng(2);
  Tensor x = rand_tensor({1, 3, 3}, rng);
  Tape tape;
  Tensor z1 = scale(x, 2.0f, &tape);
  Tensor z2 = scale(x, 3.0f, &tape);
  Tensor loss = sum_all(add(z1, z2, &tape), &tape);
  tape.backward(loss);
  Tensor gx = tape.grad(x);
  for (int64_t i = 0; i < gx.size(); ++i) CHECK(gx.data()[i] == doctest::Approx(5.0f));
}

TEST_CASE("backward requires a scalar loss and registered rules") {
  std::mt19937_64 rng(3);
  Tensor x = rand_tensor({2, 2, 2}, rng);
  Tape tape;
  CHECK_THROWS_AS(tape.backward(x), ShapeError);

  Tape broken;
  broken.record("mystery_op", nullptr);
  Tensor s = Tensor::scalar_tensor(1.0f);
  CHECK_THROWS_WITH_AS(broken.backward(s), doctest::Contains("mystery_op"), std::runtime_error);
}

TEST_CASE("backward replay is deterministic") {
  std::mt19937_64 rng(4);
  Tensor x = rand_tensor({3, 5, 5}, rng);
  Tensor w = rand_tensor({4, 3, 3, 3}, rng);
  Tensor b = rand_tensor({4}, rng);
  const ConvSpec spec = ConvSpec::same(3, 4, 3);

  auto run = [&]() {
    Tape tape;
    Tensor out = leaky_relu(conv2d(x, w, b, spec, &tape), 0.1f, &tape);
    Tensor loss = sum_all(out, &tape);
    tape.backward(loss);
    return tape.grad(w);
  };
  CHECK(bit_equal(run(), run()));
}

TEST_CASE("gradient suite: every op matches central finite differences (32-bit)") {
  CheckOptions opt;
  opt.seeds = 2; // the full 5-seed sweep runs in the acceptance suite
  for (const CheckResult& r : run_gradient_checks(opt)) {
    INFO(r.name, " err=", r.value, " limit=", r.limit);
    CHECK(r.pass);
  }
}

TEST_CASE("gradient suite: 64-bit verification mode is tighter") {
  CheckOptions opt;
  opt.use_double = true;
  opt.seeds = 1;
  opt.only = "grad.conv2d";
  const auto results = run_gradient_checks(opt);
  REQUIRE(!results.empty());
  for (const CheckResult& r : results) {
    CHECK(r.limit == doctest::Approx(1e-4));
    CHECK(r.pass);
  }
}

TEST_CASE("gradient harness catches an injected wrong backward") {
  CheckOptions opt;
  opt.seeds = 1;
  opt.only = "grad.leaky_relu";
  opt.sabotage = "grad.leaky_relu";
  const auto results = run_gradient_checks(opt);
  REQUIRE(results.size() == 1);
  CHECK(!results[0].pass);
}
