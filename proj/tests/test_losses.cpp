#include <doctest.h>

#include <cmath>
#include <limits>

#include "poison/error.hpp"
#include "poison/finite_diff.hpp"
#include "poison/losses.hpp"
#include "poison/rng.hpp"

using namespace poison;

TEST_CASE("softmax of equal logits is uniform") {
  Vec logits = Vec::Zero(3);
  Vec p = softmax(logits);
  for (int i = 0; i < 3; ++i) CHECK(p[i] == doctest::Approx(1.0 / 3).epsilon(1e-14));
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("softmax survives huge logits via max subtraction") {
  Vec logits(2);
  logits << 1000.0, 0.0;
  Vec p = softmax(logits);
  CHECK(p[0] == doctest::Approx(1.0));
  CHECK(p[1] == 0.0);  // exp(-1000) underflows cleanly
  CHECK(p.allFinite());
}

TEST_CASE("softmax reference values") {
  Vec logits(3);
  logits << 1.0, 2.0, 3.0;
  Vec p = softmax(logits);
  CHECK(p[0] == doctest::Approx(0.09003057).epsilon(1e-7));
  CHECK(p[1] == doctest::Approx(0.24472847).epsilon(1e-7));
  CHECK(p[2] == doctest::Approx(0.66524096).epsilon(1e-7));
}

TEST_CASE("softmax invariants: sums to one, shift-invariant") {
  RngStream rng(5, 5);
  for (int trial = 0; trial < 200; ++trial) {
    int k = 2 + static_cast<int>(rng.next_below(6));
    Vec logits(k);
    for (int i = 0; i < k; ++i) logits[i] = rng.uniform(-30, 30);
    Vec p = softmax(logits);
    CHECK(std::abs(p.sum() - 1.0) < 1e-12);
    Vec shifted = softmax(Vec(logits.array() + rng.uniform(-50, 50)));
    CHECK((p - shifted).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("softmax rejects bad input") {
  Vec one(1);
  one << 0.0;
  CHECK_THROWS_AS(softmax(one), ShapeError);
  Vec bad(2);
  bad << 0.0, std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(softmax(bad), std::invalid_argument);
}

TEST_CASE("log_loss examples and floor") {
  Vec certain(2);
  certain << 1.0, 0.0;
  CHECK(log_loss(certain, 0) == 0.0);
  CHECK(log_loss(certain, 1) == doctest::Approx(-std::log(1e-12)));  // floored, finite
  Vec half(2);
  half << 0.5, 0.5;
  CHECK(log_loss(half, 1) == doctest::Approx(0.6931472).epsilon(1e-7));
  Vec p(3);
  p << 0.09003057, 0.24472847, 0.66524096;
  CHECK(log_loss(p, 2) == doctest::Approx(0.4076059).epsilon(1e-6));
  CHECK_THROWS_AS(log_loss(p, 3), std::invalid_argument);
  CHECK_THROWS_AS(log_loss(p, -1), std::invalid_argument);
}

TEST_CASE("log_loss is non-negative") {
  RngStream rng(6, 1);
  for (int trial = 0; trial < 200; ++trial) {
    Vec logits(4);
    for (int i = 0; i < 4; ++i) logits[i] = rng.uniform(-40, 40);
    Vec p = softmax(logits);
    CHECK(log_loss(p, static_cast<int>(rng.next_below(4))) >= 0.0);
  }
}

TEST_CASE("mse_loss arithmetic") {
  CHECK(mse_loss(1.0, 1.0) == 0.0);
  CHECK(mse_loss(0.0, -1.0) == 1.0);
  CHECK(mse_loss(0.3, 1.0) == doctest::Approx(0.49));
  CHECK_THROWS_AS(mse_loss(std::numeric_limits<double>::infinity(), 1.0), std::invalid_argument);
}

TEST_CASE("central_diff is exact on quadratics") {
  auto f = [](const Vec& x) { return x.squaredNorm(); };
  Vec x(2);
  x << 1.0, 2.0;
  Vec g = central_diff(f, x, 1e-5);
  CHECK(std::abs(g[0] - 2.0) < 1e-8);
  CHECK(std::abs(g[1] - 4.0) < 1e-8);
}

TEST_CASE("central_diff of a constant is zero") {
  auto f = [](const Vec&) { return 3.5; };
  Vec x = Vec::Ones(4);
  CHECK(central_diff(f, x, 1e-5).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("central_diff matches cos at zero for sin") {
  auto f = [](const Vec& x) { return std::sin(x[0]); };
  Vec x = Vec::Zero(1);
  Vec g = central_diff(f, x, 1e-5);
  CHECK(std::abs(g[0] - 1.0) < 1e-9);
}

TEST_CASE("central_diff on random quadratic forms hits 1e-7 relative") {
  RngStream rng(9, 3);
  for (int trial = 0; trial < 20; ++trial) {
    int d = 2 + static_cast<int>(rng.next_below(5));
    Mat a(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) a(i, j) = rng.uniform(-1, 1);
    Mat sym = a + a.transpose();
    Vec x(d);
    for (int i = 0; i < d; ++i) x[i] = rng.uniform(-2, 2);
    auto f = [&](const Vec& v) { return 0.5 * v.dot(sym * v); };
    Vec expected = sym * x;
    Vec got = central_diff(f, x, 1e-5);
    CHECK((got - expected).norm() / expected.norm() < 1e-7);
  }
}

TEST_CASE("central_diff propagates oracle failure") {
  auto f = [](const Vec& x) {
    return x[0] > 0.5 ? std::numeric_limits<double>::quiet_NaN() : 0.0;
  };
  Vec x = Vec::Constant(1, 0.5);
  CHECK_THROWS_AS(central_diff(f, x, 0.1), OracleError);
  CHECK_THROWS_AS(central_diff(f, x, -1.0), std::invalid_argument);
}
