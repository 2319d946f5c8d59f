#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "helpers.hpp"
#include "swlab/energy.hpp"
#include "swlab/exact_ot.hpp"
#include "swlab/io.hpp"

using namespace swlab;

namespace {

WeightVector random_positive_weights(Eigen::Index m, Rng& rng) {
  Eigen::VectorXd w(m);
  for (Eigen::Index i = 0; i < m; ++i) w(i) = rng.uniform(0.1, 1.0);
  w /= w.sum();
  return WeightVector(w);
}

CostMatrix random_cost(Eigen::Index n, Eigen::Index m, Rng& rng) {
  Eigen::MatrixXd c(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) c(i, j) = rng.uniform(0.0, 5.0);
  }
  return c;
}

void check_certificate(const KantorovichResult& res, const WeightVector& a,
                       const WeightVector& b) {
  REQUIRE(res.dual_gap <= 1e-8);
  REQUIRE(res.max_dual_violation <= 1e-8);
  REQUIRE((res.plan.pi.rowwise().sum() - a.w()).cwiseAbs().maxCoeff() <= 1e-10);
  REQUIRE((res.plan.pi.colwise().sum().transpose() - b.w())
              .cwiseAbs()
              .maxCoeff() <= 1e-10);
  REQUIRE(res.plan.pi.minCoeff() >= -1e-15);
}

}  // namespace

TEST_CASE("assignment_w2") {
  Rng rng(101);
  SECTION("zero on row permutations") {
    const Support z = testutil::random_support(6, 3, rng);
    Eigen::MatrixXd permuted(6, 3);
    const std::vector<int> perm{5, 3, 1, 0, 4, 2};
    for (int k = 0; k < 6; ++k) permuted.row(k) = z.points().row(perm[k]);
    const auto res = assignment_w2(Support(permuted), z);
    REQUIRE(res.cost <= 1e-15);
  }
  SECTION("symmetric two-point closed form") {
    Eigen::MatrixXd ym(2, 2), zm(2, 2);
    ym << 1, 2, -1, -2;
    zm << 0, -1, 0, 1;
    REQUIRE(assignment_w2(Support(ym), Support(zm)).cost ==
            Catch::Approx(closed_form_w2_sym2d(1, 2)).margin(1e-12));
  }
  SECTION("matches factorial enumeration") {
    for (int rep = 0; rep < 50; ++rep) {
      const auto n = static_cast<Eigen::Index>(2 + rng.below(6));  // 2..7
      const Support y = testutil::random_support(n, 3, rng);
      const Support z = testutil::random_support(n, 3, rng);
      REQUIRE(assignment_w2(y, z).cost ==
              Catch::Approx(testutil::brute_force_assignment(y, z))
                  .margin(1e-10));
    }
  }
  SECTION("returned permutation attains the cost") {
    const Support y = testutil::random_support(5, 2, rng);
    const Support z = testutil::random_support(5, 2, rng);
    const auto res = assignment_w2(y, z);
    double acc = 0.0;
    std::vector<bool> hit(5, false);
    for (Eigen::Index k = 0; k < 5; ++k) {
      const auto l = res.perm[static_cast<std::size_t>(k)];
      REQUIRE_FALSE(hit[static_cast<std::size_t>(l)]);
      hit[static_cast<std::size_t>(l)] = true;
      acc += (y.points().row(k) - z.points().row(l)).squaredNorm();
    }
    REQUIRE(acc / 5.0 == Catch::Approx(res.cost).margin(1e-13));
  }
  SECTION("metric sanity") {
    for (int rep = 0; rep < 30; ++rep) {
      const Support a = testutil::random_support(4, 2, rng);
      const Support b = testutil::random_support(4, 2, rng);
      const Support c = testutil::random_support(4, 2, rng);
      const double ab = assignment_w2(a, b).cost;
      REQUIRE(ab == Catch::Approx(assignment_w2(b, a).cost).margin(1e-12));
      const double root_ab = std::sqrt(ab);
      const double root_ac = std::sqrt(assignment_w2(a, c).cost);
      const double root_cb = std::sqrt(assignment_w2(c, b).cost);
      REQUIRE(root_ab <= root_ac + root_cb + 1e-9);
    }
  }
  SECTION("sliced energy is dominated by the full distance") {
    for (int rep = 0; rep < 10; ++rep) {
      const Support y = testutil::random_support(4, 3, rng);
      const Support z = testutil::random_support(4, 3, rng);
      const EnergyEstimate est = energy_mc(y, z, 20000, 500 + rep);
      REQUIRE(est.value - 3.0 * est.std_error <= assignment_w2(y, z).cost);
    }
  }
}

TEST_CASE("kantorovich_exact") {
  Rng rng(103);
  SECTION("one by one") {
    Eigen::MatrixXd c(1, 1);
    c << 3.5;
    const auto res = kantorovich_exact(WeightVector::uniform(1),
                                       WeightVector::uniform(1), c);
    REQUIRE(res.cost == Catch::Approx(3.5).margin(1e-15));
    check_certificate(res, WeightVector::uniform(1), WeightVector::uniform(1));
  }
  SECTION("diagonal optimum") {
    Eigen::MatrixXd c(2, 2);
    c << 0, 1, 1, 0;
    const auto res = kantorovich_exact(WeightVector::uniform(2),
                                       WeightVector::uniform(2), c);
    REQUIRE(res.cost == Catch::Approx(0.0).margin(1e-12));
  }
  SECTION("skewed weights") {
    Eigen::MatrixXd c(2, 2);
    c << 0, 1, 1, 0;
    Eigen::Vector2d a(0.9, 0.1), b(0.5, 0.5);
    const auto res =
        kantorovich_exact(WeightVector(a), WeightVector(b), c);
    REQUIRE(res.cost == Catch::Approx(0.4).margin(1e-12));
    check_certificate(res, WeightVector(a), WeightVector(b));
  }
  SECTION("dual certificates on random instances") {
    for (int rep = 0; rep < 300; ++rep) {
      const auto n = static_cast<Eigen::Index>(1 + rng.below(5));
      const auto m = static_cast<Eigen::Index>(1 + rng.below(5));
      const WeightVector a = random_positive_weights(n, rng);
      const WeightVector b = random_positive_weights(m, rng);
      const CostMatrix c = random_cost(n, m, rng);
      const auto res = kantorovich_exact(a, b, c);
      check_certificate(res, a, b);
    }
  }
  SECTION("uniform case scales to a permutation matrix") {
    const Support y = testutil::random_support(4, 2, rng);
    const Support z = testutil::random_support(4, 2, rng);
    Eigen::MatrixXd c(4, 4);
    for (Eigen::Index i = 0; i < 4; ++i) {
      c.row(i) =
          (z.points().rowwise() - y.points().row(i)).rowwise().squaredNorm();
    }
    const auto res = kantorovich_exact(WeightVector::uniform(4),
                                       WeightVector::uniform(4), c);
    REQUIRE(res.cost ==
            Catch::Approx(assignment_w2(y, z).cost).margin(1e-8));
    const Eigen::MatrixXd scaled = 4.0 * res.plan.pi;
    for (Eigen::Index i = 0; i < 4; ++i) {
      for (Eigen::Index j = 0; j < 4; ++j) {
        const double v = scaled(i, j);
        REQUIRE(std::min(std::abs(v), std::abs(v - 1.0)) < 1e-9);
      }
    }
  }
  SECTION("input validation") {
    Eigen::MatrixXd c(2, 2);
    c << 0, 1, 1, 0;
    Eigen::Vector2d bad(0.4, 0.4);
    REQUIRE_THROWS(WeightVector(bad));                 // not a simplex point
    REQUIRE_THROWS(WeightVector(Eigen::Vector2d(-0.5, 1.5)));
    REQUIRE_THROWS_AS(kantorovich_exact(WeightVector::uniform(2),
                                        WeightVector::uniform(3), c),
                      DimensionError);
    Eigen::MatrixXd negative(1, 1);
    negative << -1.0;
    REQUIRE_THROWS(kantorovich_exact(WeightVector::uniform(1),
                                     WeightVector::uniform(1), negative));
    const Eigen::MatrixXd big = Eigen::MatrixXd::Zero(21, 20);
    REQUIRE_THROWS_AS(kantorovich_exact(WeightVector::uniform(21),
                                        WeightVector::uniform(20), big),
                      SizeGuardError);
  }
}

TEST_CASE("stability_gap") {
  Rng rng(107);
  SECTION("identical inputs") {
    const WeightVector a = random_positive_weights(3, rng);
    const WeightVector b = random_positive_weights(4, rng);
    const CostMatrix c = random_cost(3, 4, rng);
    const StabilityGap gap = stability_gap(a, b, c, a, b, c);
    REQUIRE(gap.lhs == 0.0);
    REQUIRE(gap.rhs_inf == 0.0);
    REQUIRE(gap.rhs_fro == 0.0);
  }
  SECTION("uniform cost shift is tight in the sup norm") {
    const WeightVector a = random_positive_weights(3, rng);
    const WeightVector b = random_positive_weights(3, rng);
    const CostMatrix c = random_cost(3, 3, rng);
    const double t = 0.7;
    const CostMatrix shifted = c.array() + t;
    const StabilityGap gap = stability_gap(a, b, c, a, b, shifted);
    REQUIRE(gap.lhs == Catch::Approx(t).margin(1e-10));
    REQUIRE(gap.rhs_inf == Catch::Approx(t).margin(1e-12));
  }
  SECTION("both inequalities hold on random instances") {
    for (int rep = 0; rep < 1000; ++rep) {
      const auto n = static_cast<Eigen::Index>(1 + rng.below(5));
      const auto m = static_cast<Eigen::Index>(1 + rng.below(5));
      const WeightVector a = random_positive_weights(n, rng);
      const WeightVector b = random_positive_weights(m, rng);
      const WeightVector a2 = random_positive_weights(n, rng);
      const WeightVector b2 = random_positive_weights(m, rng);
      const CostMatrix c = random_cost(n, m, rng);
      const CostMatrix c2 = random_cost(n, m, rng);
      const StabilityGap gap = stability_gap(a, b, c, a2, b2, c2);
      REQUIRE(gap.lhs <= gap.rhs_inf + 1e-9);
      REQUIRE(gap.lhs <= gap.rhs_fro + 1e-9);
    }
  }
  SECTION("rejects weights with zero entries") {
    Eigen::Vector2d z(1.0, 0.0);
    const WeightVector zero_weight(z);
    const WeightVector ok = random_positive_weights(2, rng);
    const CostMatrix c = random_cost(2, 2, rng);
    REQUIRE_THROWS(stability_gap(zero_weight, ok, c, ok, ok, c));
  }
}

TEST_CASE("ot file formats") {
  SECTION("weights csv") {
    std::istringstream in("0.25\n0.25\n0.5\n");
    const WeightVector w = weights_from_csv(in);
    REQUIRE(w.size() == 3);
    REQUIRE(w.w()(2) == 0.5);
  }
  SECTION("cost csv and result json") {
    std::istringstream in("0,1\n1,0\n");
    const CostMatrix c = cost_matrix_from_csv(in);
    REQUIRE(c.rows() == 2);
    const auto res = kantorovich_exact(WeightVector::uniform(2),
                                       WeightVector::uniform(2), c);
    const auto j = kantorovich_to_json(res);
    REQUIRE(j.at("cost").get<double>() == res.cost);
    REQUIRE(j.at("plan").size() == 2);
    REQUIRE(j.at("dual_f").size() == 2);
    REQUIRE(j.at("dual_g").size() == 2);
  }
  SECTION("ragged csv rejected") {
    std::istringstream in("0,1\n1\n");
    REQUIRE_THROWS_AS(cost_matrix_from_csv(in), IoError);
  }
}
