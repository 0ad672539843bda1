#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "fdw2s/errors.hpp"
#include "fdw2s/probdist.hpp"

using namespace fdw2s;

TEST_CASE("ProbVector validates its entries") {
  CHECK_THROWS_AS(ProbVector({1.0}), ShapeError);
  CHECK_THROWS_AS(ProbVector({0.5, 0.6}), InvalidInput);
  CHECK_THROWS_AS(ProbVector({1.5, -0.5}), InvalidInput);
  CHECK_THROWS_AS(ProbVector({std::nan(""), 1.0}), InvalidInput);
  CHECK_NOTHROW(ProbVector({1.0, 0.0}));

  const ProbVector p({0.2, 0.3, 0.5 + 1e-12});
  double s = 0.0;
  for (double e : p) s += e;
  CHECK(s == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(p.argmax() == 2);
}

TEST_CASE("softmax") {
  const double z0[] = {0.0, 0.0};
  CHECK(softmax(z0)[0] == 0.5);
  CHECK(softmax(z0)[1] == 0.5);

  const double z1[] = {std::log(3.0), 0.0};
  const auto p = softmax(z1);
  CHECK(p[0] == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(0.25).epsilon(1e-15));

  const double z2[] = {1000.0, 0.0};
  const auto big = softmax(z2);
  CHECK(std::isfinite(big[0]));
  CHECK(big[0] == doctest::Approx(1.0));
  CHECK(big[1] >= 0.0);
  CHECK(clamp(big)[1] == doctest::Approx(kDefaultClampEps));

  const double bad[] = {std::numeric_limits<double>::infinity(), 0.0};
  CHECK_THROWS_AS(softmax(bad), InvalidInput);
  const double one[] = {1.0};
  CHECK_THROWS(softmax(one));
}

TEST_CASE("clamp") {
  const ProbVector half({0.5, 0.5});
  CHECK(clamp(half, 1e-4) == half);

  const auto c = clamp(ProbVector({1.0, 0.0}), 0.01);
  CHECK(c[0] == doctest::Approx(0.99).epsilon(1e-14));
  CHECK(c[1] == doctest::Approx(0.01).epsilon(1e-14));

  CHECK_THROWS_AS(clamp(half, 0.0), ConfigError);
  CHECK_THROWS_AS(clamp(half, 0.5), ConfigError);
  CHECK_THROWS_AS(clamp(ProbVector({0.2, 0.3, 0.5}), 0.4), ConfigError);

  std::mt19937_64 rng(7);
  std::exponential_distribution<double> ex(1.0);
  std::uniform_int_distribution<int> dim(2, 10);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> v(static_cast<std::size_t>(dim(rng)));
    double s = 0.0;
    for (double& e : v) s += (e = (i % 3 == 0 ? std::pow(ex(rng), 8.0) : ex(rng)));
    for (double& e : v) e /= s;
    const double eps = (i % 2) ? 1e-6 : 1e-3;
    const auto once = clamp(ProbVector(v), eps);
    const auto twice = clamp(once, eps);
    for (std::size_t j = 0; j < once.size(); ++j) {
      CHECK(once[j] >= eps * (1 - 1e-12));
      CHECK(once[j] <= (1 - eps) * (1 + 1e-12));
      CHECK(twice[j] == doctest::Approx(once[j]).epsilon(1e-14));
    }
  }
}

TEST_CASE("harden") {
  CHECK(harden(ProbVector({0.3, 0.7}), 0.5).label == 1);
  CHECK(harden(ProbVector({0.7, 0.3}), 0.5).label == 0);
  CHECK(harden(ProbVector({0.5, 0.5}), 0.5).label == 0);
  CHECK(harden(ProbVector({0.3, 0.7}), 0.5).one_hot() == ProbVector({0.0, 1.0}));
  CHECK_THROWS_AS(harden(ProbVector({0.2, 0.3, 0.5}), 0.5), UnsupportedOperation);
  CHECK_THROWS_AS(harden(ProbVector({0.5, 0.5}), 0.0), ConfigError);
  CHECK_THROWS_AS(harden(ProbVector({0.5, 0.5}), 1.0), ConfigError);
}
