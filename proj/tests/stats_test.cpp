#include "sentigrid/stats.hpp"

#include <cmath>
#include <random>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

using namespace sentigrid::stats;
using Catch::Approx;

TEST_CASE("chi-square 1-df p-values match published critical values") {
  REQUIRE(chi_square_upper_p(3.841, 1) == Approx(0.0500).margin(0.0005));
  REQUIRE(chi_square_upper_p(6.635, 1) == Approx(0.0100).margin(0.0005));
  REQUIRE(chi_square_upper_p(10.828, 1) == Approx(0.0010).margin(0.0001));
  REQUIRE(chi_square_upper_p(0.0, 1) == 1.0);
}

TEST_CASE("chi-square 1-df upper tail equals the erfc closed form") {
  // For 1 df, Q(1/2, x/2) = erfc(sqrt(x/2)); an independent algebraic route.
  for (double x = 0.01; x <= 200.0; x *= 1.37) {
    const double via_gamma = chi_square_upper_p(x, 1);
    const double via_erfc = std::erfc(std::sqrt(x / 2.0));
    REQUIRE(via_gamma == Approx(via_erfc).epsilon(1e-9));
  }
}

TEST_CASE("regularized gamma upper basics") {
  REQUIRE(regularized_gamma_upper(0.5, 0.0) == 1.0);
  // Q(1, x) = exp(-x) exactly.
  for (double x : {0.1, 1.0, 5.0, 30.0}) {
    REQUIRE(regularized_gamma_upper(1.0, x) == Approx(std::exp(-x)).epsilon(1e-12));
  }
  // Chi-square with 2 df: p = exp(-x/2).
  REQUIRE(chi_square_upper_p(5.991, 2) == Approx(0.05).margin(0.0005));
}

TEST_CASE("normal two-sided p-value") {
  REQUIRE(normal_two_sided_p(1.959964) == Approx(0.0500).margin(0.0005));
  REQUIRE(normal_two_sided_p(-1.959964) == Approx(0.0500).margin(0.0005));
  REQUIRE(normal_two_sided_p(0.0) == 1.0);
  REQUIRE(normal_two_sided_p(2.575829) == Approx(0.0100).margin(0.0005));
}

TEST_CASE("fisher CI reproduces the published interval") {
  auto ci = fisher_ci(0.306, 144000);
  REQUIRE(ci.ci_low == Approx(0.3014).margin(0.0005));
  REQUIRE(ci.ci_high == Approx(0.3106).margin(0.0005));
}

TEST_CASE("fisher CI shrinks as n grows") {
  auto narrow = fisher_ci(0.3, 100000);
  auto wide = fisher_ci(0.3, 100);
  REQUIRE(narrow.ci_high - narrow.ci_low < wide.ci_high - wide.ci_low);
  REQUIRE(narrow.ci_low <= narrow.r);
  REQUIRE(narrow.r <= narrow.ci_high);
}

TEST_CASE("pearson on exact relationships") {
  std::vector<double> x{1, 2, 3, 4, 5};
  std::vector<double> y{3, 5, 7, 9, 11};
  auto c = pearson_with_fisher_ci(x, y);
  REQUIRE(c.r == Approx(1.0));
  REQUIRE(c.ci_low == Approx(1.0));
  REQUIRE(c.ci_high == Approx(1.0));

  std::vector<double> neg{-1, -2, -3, -4, -5};
  REQUIRE(pearson(x, neg) == Approx(-1.0));
}

TEST_CASE("pearson rejects zero variance") {
  std::vector<double> x{1, 1, 1, 1};
  std::vector<double> y{1, 2, 3, 4};
  REQUIRE_THROWS_AS(pearson(x, y), sentigrid::ValidationError);
}

TEST_CASE("pearson is symmetric and bounded on random data") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(50), y(50);
    for (int i = 0; i < 50; ++i) {
      x[i] = gauss(rng);
      y[i] = 0.4 * x[i] + gauss(rng);
    }
    const double rxy = pearson(x, y);
    REQUIRE(rxy == Approx(pearson(y, x)));
    REQUIRE(rxy <= 1.0);
    REQUIRE(rxy >= -1.0);
  }
}
