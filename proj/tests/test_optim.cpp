#include <cmath>
#include <vector>

#include "doctest.h"

#include "asc/common.hpp"
#include "asc/optim.hpp"

using namespace asc;
using ag::Parameter;
using ag::Tensor;

namespace {

Parameter<double> make_param(const std::string& name, std::vector<double> values) {
  Parameter<double> p;
  p.name = name;
  int64_t n = static_cast<int64_t>(values.size());
  p.tensor = Tensor<double>::from_data({n}, std::move(values), true);
  return p;
}

void set_grad(Parameter<double>& p, const std::vector<double>& g) {
  p.tensor.zero_grad();
  for (size_t i = 0; i < g.size(); ++i) p.tensor.grad()[i] = g[i];
}

}  // namespace

TEST_CASE("plain sgd takes lr-scaled steps") {
  auto p = make_param("w", {1.0});
  set_grad(p, {2.0});
  ag::sgd_step<double>({&p}, {.lr = 0.1});
  CHECK(p.tensor.data()[0] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(p.tensor.grad()[0] == 0.0);  // consumed
}

TEST_CASE("sgd momentum accumulates velocity") {
  auto p = make_param("w", {0.0});
  ag::SgdOptions opts{.lr = 0.1, .momentum = 0.9};
  set_grad(p, {1.0});
  ag::sgd_step<double>({&p}, opts);
  CHECK(p.tensor.data()[0] == doctest::Approx(-0.1));
  set_grad(p, {1.0});
  ag::sgd_step<double>({&p}, opts);
  // v2 = 0.9 * 1 + 1 = 1.9
  CHECK(p.tensor.data()[0] == doctest::Approx(-0.1 - 0.19));
}

TEST_CASE("weight decay pulls parameters toward zero") {
  auto p = make_param("w", {2.0});
  set_grad(p, {0.0});
  ag::sgd_step<double>({&p}, {.lr = 0.1, .weight_decay = 0.5});
  CHECK(p.tensor.data()[0] == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0));
}

TEST_CASE("frozen parameters are skipped") {
  auto p = make_param("w", {1.0});
  p.trainable = false;  // no grad set; must not be touched or required
  ag::sgd_step<double>({&p}, {.lr = 0.1});
  CHECK(p.tensor.data()[0] == 1.0);
}

TEST_CASE("stepping without gradients is an error") {
  auto p = make_param("w", {1.0});
  try {
    ag::sgd_step<double>({&p}, {.lr = 0.1});
    FAIL("expected a missing-gradient error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kMissingGradient);
  }
  ag::Adam<double> adam;
  CHECK_THROWS_AS(adam.step({&p}), Error);
}

TEST_CASE("adam's first step has magnitude lr") {
  ag::AdamOptions opts{.lr = 0.05};
  for (double g : {3.0, -0.2, 1e-3}) {
    auto p = make_param("w", {1.0});
    set_grad(p, {g});
    ag::Adam<double> adam(opts);
    adam.step({&p});
    CHECK(std::abs(p.tensor.data()[0] - 1.0) == doctest::Approx(opts.lr).epsilon(1e-5));
    CHECK((p.tensor.data()[0] < 1.0) == (g > 0));
    CHECK(p.tensor.grad()[0] == 0.0);
  }
}

TEST_CASE("adam minimizes a quadratic") {
  auto p = make_param("p", {0.0});
  ag::Adam<double> adam({.lr = 0.1});
  for (int step = 0; step < 200; ++step) {
    set_grad(p, {2.0 * (p.tensor.data()[0] - 3.0)});
    adam.step({&p});
  }
  CHECK(adam.steps() == 200);
  CHECK(std::abs(p.tensor.data()[0] - 3.0) < 0.1);
}
