#include <doctest.h>

#include <cmath>
#include <random>

#include "feateval/error.hpp"
#include "feateval/metrics.hpp"

using namespace feateval;
using namespace feateval::metrics;

namespace {

ActivationSampleSets sets(std::vector<double> c, std::vector<double> n) { return {std::move(c), std::move(n)}; }

}  // namespace

TEST_CASE("gini_abs examples") {
  CHECK(gini_abs(sets({5, 4}, {1, 0})) == 1.0);
  CHECK(gini_abs(sets({1, 1}, {1, 1})) == 0.0);
  CHECK(gini_abs(sets({3, 1}, {2, 0})) == 0.5);
  CHECK(gini_abs(sets({0}, {1})) == 1.0);
  CHECK(doubled_pair_wins({3, 1}, {2, 0}) == 6);  // U = 3/4
}

TEST_CASE("gini_abs is symmetric and rank invariant") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> c(1 + t % 23), n(1 + t % 31);
    for (auto& v : c) v = std::round(g(rng) * 4) / 4;
    for (auto& v : n) v = std::round(g(rng) * 4) / 4;
    const double base = gini_abs(sets(c, n));
    CHECK(base == gini_abs(sets(n, c)));
    auto tc = c, tn = n;
    for (auto& v : tc) v = std::exp(v) * 3 + 1;
    for (auto& v : tn) v = std::exp(v) * 3 + 1;
    CHECK(base == gini_abs(sets(tc, tn)));
    CHECK(base >= 0.0);
    CHECK(base <= 1.0);
  }
}

TEST_CASE("empty sets raise EmptySampleSet") {
  try {
    gini_abs(sets({}, {1}));
    FAIL("expected EmptySampleSet");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kEmptySampleSet);
  }
  CHECK_THROWS_AS(average_precision(sets({}, {1})), Error);
  CHECK(average_precision(sets({1}, {})).value == 1.0);
}

TEST_CASE("average precision examples") {
  CHECK(average_precision(sets({3, 2}, {1, 0})).value == 1.0);
  CHECK(average_precision(sets({0.9, 0.4}, {0.7})).value == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
  auto tied = average_precision(sets({0.5}, {0.5}));
  CHECK(tied.value == 0.5);
  REQUIRE(tied.curve.size() == 1);
  CHECK(tied.curve[0].precision == 0.5);
  CHECK(tied.curve[0].recall == 1.0);
}

TEST_CASE("precision-recall curve has non-decreasing recall") {
  auto ap = average_precision(sets({0.9, 0.1, 0.5, 0.5}, {0.5, 0.2, 0.95}));
  for (std::size_t i = 1; i < ap.curve.size(); ++i) {
    CHECK(ap.curve[i].recall >= ap.curve[i - 1].recall);
    CHECK(ap.curve[i].threshold < ap.curve[i - 1].threshold);
  }
  CHECK(ap.curve.back().recall == 1.0);
}

TEST_CASE("faithfulness examples and clamps") {
  const std::vector<double> f = {-50, -10, -1, 0, 1, 10, 50};
  CHECK(faithfulness(SteeringProfile(f, {0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1})) == 0.0);
  CHECK(faithfulness(SteeringProfile(f, {0, 0, 0, 0.2, 0.3, 0.6, 0.4})) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(faithfulness(SteeringProfile(f, {0, 0, 0, 1.0, 1.0, 1.0, 1.0})) == 0.0);
  CHECK(faithfulness(SteeringProfile(f, {0.3, 0.2, 0.1, 0.4, 0.1, 0.0, 0.0})) == 0.0);
}

TEST_CASE("faithfulness is monotone in the best proportion") {
  const std::vector<double> f = {-1, 0, 1};
  double prev = 0.0;
  for (int k = 0; k <= 50; ++k) {
    const double v = faithfulness(SteeringProfile(f, {0.0, 0.2, k / 50.0}));
    CHECK(v >= prev);
    prev = v;
  }
}

TEST_CASE("steering profile validation") {
  CHECK_THROWS_AS(SteeringProfile({1, 2}, {0.1, 0.2}), ConfigError);
  CHECK_THROWS_AS(SteeringProfile({0, 0}, {0.1, 0.2}), ConfigError);
  CHECK_THROWS_AS(SteeringProfile({0, 1}, {0.1}), ConfigError);
  CHECK_THROWS_AS(SteeringProfile({0, 1}, {0.1, 1.5}), ConfigError);
  CHECK(SteeringProfile({-1, 0, 1}, {0.0, 0.3, 0.5}).base_index() == 1);
}

TEST_CASE("combined score modes") {
  CHECK(combined_score({1, 1, 1, 1}, CombineMode::kWeighted) == 1.0);
  CHECK(combined_score({1, 1, 1, 1}, CombineMode::kGeometric) == doctest::Approx(1.0));
  CHECK(combined_score({1, 1, 1, 1}, CombineMode::kHarmonic) == doctest::Approx(1.0));
  CHECK(combined_score({0.9, 0.8, 0.0, 0.7}, CombineMode::kGeometric) == 0.0);
  CHECK(combined_score({0.9, 0.8, 0.0, 0.7}, CombineMode::kHarmonic) == 0.0);
  CHECK(combined_score({0.8, 0.4, 0.1, 0.9}, CombineMode::kWeighted, std::array<double, 4>{0.5, 0.5, 0, 0}) ==
        doctest::Approx(0.6));
  CHECK(combined_score({0.5, 0.5, 0.5, 0.5}, CombineMode::kGeometric) == doctest::Approx(0.5));
  CHECK(combined_score({0.25, 1, 1, 1}, CombineMode::kHarmonic) == doctest::Approx(4.0 / 7.0));
  CHECK_THROWS_AS(combined_score({1, 1, 1, 1}, CombineMode::kWeighted, std::array<double, 4>{0.5, 0.2, 0, 0}),
                  ConfigError);
  CHECK_THROWS_AS(combined_score({1, 1, 1, 1}, CombineMode::kWeighted, std::array<double, 4>{1.5, -0.5, 0, 0}),
                  ConfigError);
}
