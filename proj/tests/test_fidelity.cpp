#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <map>
#include <random>

#include "geodid/fidelity.hpp"
#include "geodid/zones.hpp"

using namespace geodid;

namespace {

struct FidelityOracle {
  double estimate = 0.0;
  double se = 0.0;
};

// plain OLS of covered on [1, treated] with CR1 errors, K = 2
FidelityOracle ols_oracle(const std::vector<int>& covered,
                          const std::vector<int>& treated,
                          const std::vector<std::string>& cluster) {
  const Eigen::Index n = static_cast<Eigen::Index>(covered.size());
  Eigen::MatrixXd x(n, 2);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = treated[static_cast<std::size_t>(i)];
    y(i) = covered[static_cast<std::size_t>(i)];
  }
  const Eigen::Matrix2d bread = (x.transpose() * x).inverse();
  const Eigen::Vector2d beta = bread * (x.transpose() * y);
  const Eigen::VectorXd u = y - x * beta;
  std::map<std::string, Eigen::Vector2d> scores;
  for (Eigen::Index i = 0; i < n; ++i) {
    auto it = scores.try_emplace(cluster[static_cast<std::size_t>(i)], Eigen::Vector2d::Zero())
                  .first;
    it->second += x.row(i).transpose() * u(i);
  }
  Eigen::Matrix2d meat = Eigen::Matrix2d::Zero();
  for (const auto& [key, s] : scores) meat += s * s.transpose();
  const double m = static_cast<double>(scores.size());
  const double nn = static_cast<double>(n);
  const double cr1 = (m / (m - 1.0)) * ((nn - 1.0) / (nn - 2.0));
  const Eigen::Matrix2d v = cr1 * bread * meat * bread;
  return {beta(1), std::sqrt(v(1, 1))};
}

std::vector<Assignment> make_assignments(const std::vector<int>& status_codes) {
  std::vector<Assignment> a;
  for (int s : status_codes)
    a.push_back({static_cast<ZoneStatus>(s), 0.0});
  return a;
}

}  // namespace

TEST_CASE("fidelity contrast on a hand-built sample") {
  // 4 treated (3 covered), 6 control (2 covered): diff = 0.75 - 1/3
  const std::vector<int> covered = {1, 1, 1, 0, 1, 1, 0, 0, 0, 0};
  const std::vector<int> status = {0, 0, 0, 0, 1, 1, 1, 1, 1, 1};
  const std::vector<std::string> loc = {"a", "a", "b", "b", "c", "c", "d", "d", "e", "e"};
  const FidelityResult r = fidelity_test(covered, make_assignments(status), loc);
  CHECK(r.treated_n == 4);
  CHECK(r.control_n == 6);
  CHECK(r.treated_rate == 0.75);
  CHECK(r.control_rate == Catch::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(r.estimate == Catch::Approx(0.75 - 1.0 / 3.0).epsilon(1e-15));
  CHECK(r.n_clusters == 5);
  const FidelityOracle o = ols_oracle(covered, {1, 1, 1, 1, 0, 0, 0, 0, 0, 0}, loc);
  CHECK(r.estimate == Catch::Approx(o.estimate).margin(1e-14));
  CHECK(r.std_error == Catch::Approx(o.se).margin(1e-12));
  CHECK(r.t_stat == Catch::Approx(o.estimate / o.se).margin(1e-10));
}

TEST_CASE("excluded points never enter the contrast") {
  const std::vector<int> covered = {1, 0, 1, 0, 1, 1, 0, 1};
  const std::vector<int> status = {0, 0, 1, 1, 2, 2, 1, 0};
  const std::vector<std::string> loc = {"a", "a", "b", "b", "z", "z", "c", "c"};
  const FidelityResult r = fidelity_test(covered, make_assignments(status), loc);
  CHECK(r.treated_n + r.control_n == 6);
  const std::vector<int> covered2 = {1, 0, 1, 0, 0, 0, 0, 1};  // flip excluded rows only
  const FidelityResult r2 = fidelity_test(covered2, make_assignments(status), loc);
  CHECK(r.estimate == r2.estimate);
  CHECK(r.std_error == r2.std_error);
  CHECK(r.n_clusters == r2.n_clusters);
}

TEST_CASE("fidelity matches the dummy regression on random draws") {
  std::mt19937_64 eng(201);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 30 + eng() % 200;
    std::vector<int> covered(n), status(n), treated(n);
    std::vector<std::string> loc(n);
    for (std::size_t i = 0; i < n; ++i) {
      status[i] = static_cast<int>(eng() % 2);
      treated[i] = status[i] == 0 ? 1 : 0;
      covered[i] = (eng() % 100) < (status[i] == 0 ? 70 : 35) ? 1 : 0;
      loc[i] = "L" + std::to_string(eng() % 7);
    }
    FidelityResult r;
    try {
      r = fidelity_test(covered, make_assignments(status), loc);
    } catch (const std::runtime_error&) {
      continue;  // degenerate draw (all covered identical etc.)
    }
    const FidelityOracle o = ols_oracle(covered, treated, loc);
    CHECK(r.estimate == Catch::Approx(o.estimate).margin(1e-12));
    CHECK(r.std_error == Catch::Approx(o.se).margin(1e-10));
  }
}

TEST_CASE("flipping every coverage flag negates the estimate bit for bit") {
  std::mt19937_64 eng(202);
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t n = 40 + eng() % 100;
    std::vector<int> covered(n), status(n);
    std::vector<std::string> loc(n);
    for (std::size_t i = 0; i < n; ++i) {
      status[i] = static_cast<int>(eng() % 3);
      covered[i] = static_cast<int>(eng() % 2);
      loc[i] = "L" + std::to_string(eng() % 6);
    }
    std::vector<int> flipped(n);
    for (std::size_t i = 0; i < n; ++i) flipped[i] = 1 - covered[i];
    FidelityResult a, b;
    try {
      a = fidelity_test(covered, make_assignments(status), loc);
      b = fidelity_test(flipped, make_assignments(status), loc);
    } catch (const std::runtime_error&) {
      continue;
    }
    CHECK(b.estimate == -a.estimate);
    CHECK(b.std_error == a.std_error);
    CHECK(b.t_stat == -a.t_stat);
    CHECK(b.treated_rate == Catch::Approx(1.0 - a.treated_rate).margin(1e-15));
  }
}

TEST_CASE("identical coverage rates give a zero t statistic") {
  const std::vector<int> covered = {1, 0, 1, 0, 1, 0, 1, 0};
  const std::vector<int> status = {0, 0, 0, 0, 1, 1, 1, 1};
  const std::vector<std::string> loc = {"a", "a", "b", "b", "c", "c", "d", "d"};
  const FidelityResult r = fidelity_test(covered, make_assignments(status), loc);
  CHECK(r.estimate == 0.0);
  CHECK(r.t_stat == 0.0);
}

TEST_CASE("fidelity input validation") {
  const std::vector<int> covered = {1, 0, 1};
  const std::vector<int> status = {0, 0, 1};
  const std::vector<std::string> loc = {"a", "b", "c"};
  CHECK_THROWS_AS(fidelity_test({1, 0}, make_assignments(status), loc), std::invalid_argument);
  CHECK_THROWS_AS(fidelity_test(covered, make_assignments(status), {"a", "b"}),
                  std::invalid_argument);
  CHECK_THROWS_AS(fidelity_test({1, 0, 2}, make_assignments(status), loc), std::invalid_argument);
  // an all-empty call is degenerate data, not a malformed argument
  CHECK_THROWS_AS(fidelity_test({}, {}, {}), std::runtime_error);
  // no control points
  CHECK_THROWS_AS(fidelity_test({1, 0, 1}, make_assignments({0, 0, 0}), loc), std::runtime_error);
  // no treated points
  CHECK_THROWS_AS(fidelity_test({1, 0, 1}, make_assignments({1, 1, 1}), loc), std::runtime_error);
  // everything excluded
  CHECK_THROWS_AS(fidelity_test({1, 0, 1}, make_assignments({2, 2, 2}), loc), std::runtime_error);
}

TEST_CASE("fidelity summary line carries rates, counts, and the t statistic") {
  const std::vector<int> covered = {1, 1, 1, 0, 1, 1, 0, 0, 0, 0};
  const std::vector<int> status = {0, 0, 0, 0, 1, 1, 1, 1, 1, 1};
  const std::vector<std::string> loc = {"a", "a", "b", "b", "c", "c", "d", "d", "e", "e"};
  const FidelityResult r = fidelity_test(covered, make_assignments(status), loc);
  const std::string line = describe(r);
  CHECK(line.find("covered|treated = 0.75 (N = 4)") != std::string::npos);
  CHECK(line.find("covered|control = 0.33 (N = 6)") != std::string::npos);
  CHECK(line.find("t = ") != std::string::npos);
}
