#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "swlab/cells.hpp"
#include "swlab/solvers.hpp"

using namespace swlab;

namespace {

Support sym_targets() {
  Eigen::MatrixXd pts(2, 2);
  pts << 0, -1, 0, 1;
  return Support(pts);
}

}  // namespace

TEST_CASE("bcd_run") {
  Rng rng(211);
  SECTION("the target is a fixed point") {
    const Support z = testutil::random_support(4, 2, rng);
    const DirectionSet dirs = sample_sphere(2, 16, 3);
    BCDConfig cfg;
    cfg.tol = 1e-9;
    const Trajectory traj = bcd_run(z, dirs, z, cfg);
    REQUIRE(traj.converged);
    REQUIRE(traj.iters == 1);
    REQUIRE((traj.terminal.points() - z.points()).cwiseAbs().maxCoeff() <
            1e-12);
    REQUIRE(traj.energy_series.back() <= 1e-20);
  }
  SECTION("one step equals the closed-form cell minimizer") {
    const Support z = testutil::random_support(4, 3, rng);
    const Support y0 = testutil::random_support(4, 3, rng);
    const DirectionSet dirs = sample_sphere(3, 32, 7);
    BCDConfig cfg;
    cfg.max_iters = 1;
    cfg.tol = 1e-15;
    const Trajectory traj = bcd_run(z, dirs, y0, cfg);
    const Support direct = minimize_quadratic(
        quadratic_coeffs(configuration_of(y0, z, dirs), z, dirs));
    REQUIRE((traj.terminal.points() - direct.points()).cwiseAbs().maxCoeff() <
            1e-11);
  }
  SECTION("terminal points live on stable cells (two-point symmetric case)") {
    const Support z = sym_targets();
    const DirectionSet dirs = sample_sphere(2, 3, 5);
    std::vector<Support> stable;
    detail::for_each_configuration(2, 3, 1e6, [&](const Configuration& cfg) {
      const StableCellResult res = is_stable_cell(cfg, z, dirs);
      if (res.stable) stable.push_back(res.minimizer);
    });
    REQUIRE_FALSE(stable.empty());
    int converged_runs = 0;
    for (int rep = 0; rep < 20; ++rep) {
      const Support y0 = testutil::random_support(2, 2, rng);
      BCDConfig cfg;
      cfg.tol = 1e-10;
      cfg.max_iters = 500;
      const Trajectory traj = bcd_run(z, dirs, y0, cfg);
      if (!traj.converged || traj.terminal_boundary) continue;
      ++converged_runs;
      double best = std::numeric_limits<double>::infinity();
      for (const auto& s : stable) {
        best = std::min(best,
                        (traj.terminal.points() - s.points()).norm());
      }
      REQUIRE(best < 1e-8);
    }
    REQUIRE(converged_runs > 10);
  }
  SECTION("energy is non-increasing") {
    for (int rep = 0; rep < 10; ++rep) {
      const Support z = testutil::random_support(5, 3, rng);
      const Support y0 = testutil::random_support(5, 3, rng);
      const DirectionSet dirs = sample_sphere(3, 24, 100 + rep);
      BCDConfig cfg;
      cfg.tol = 1e-10;
      cfg.max_iters = 200;
      cfg.record_every = 1;
      const Trajectory traj = bcd_run(z, dirs, y0, cfg);
      for (std::size_t i = 1; i < traj.energy_series.size(); ++i) {
        REQUIRE(traj.energy_series[i] <= traj.energy_series[i - 1] + 1e-12);
      }
    }
  }
  SECTION("converged non-boundary terminals are stable cell optima") {
    int checked = 0;
    for (int rep = 0; rep < 10; ++rep) {
      const Support z = testutil::random_support(4, 2, rng);
      const Support y0 = testutil::random_support(4, 2, rng);
      const DirectionSet dirs = sample_sphere(2, 16, 200 + rep);
      BCDConfig cfg;
      cfg.tol = 1e-10;
      cfg.max_iters = 500;
      const Trajectory traj = bcd_run(z, dirs, y0, cfg);
      if (!traj.converged || traj.terminal_boundary) continue;
      ++checked;
      const Configuration cfg_term = configuration_of(traj.terminal, z, dirs);
      REQUIRE(is_stable_cell(cfg_term, z, dirs).stable);
    }
    REQUIRE(checked > 5);
  }
  SECTION("singular axes are rejected") {
    const Support z = testutil::random_support(3, 3, rng);
    const DirectionSet dirs = sample_sphere(3, 2, 9);
    BCDConfig cfg;
    REQUIRE_THROWS_AS(bcd_run(z, dirs, z, cfg), SingularMatrixError);
  }
}

TEST_CASE("sgd_run basics") {
  Rng rng(223);
  SECTION("stationary at the optimum without noise") {
    const Support z = testutil::random_support(4, 3, rng);
    SGDConfig cfg;
    cfg.alpha0 = 0.5;
    cfg.max_iters = 200;
    cfg.seed = 3;
    cfg.record_every = 50;
    const Trajectory traj = sgd_run(z, cfg, z);
    REQUIRE(traj.terminal.points() == z.points());
    for (const auto& it : traj.iterates) {
      REQUIRE(it.points() == z.points());
    }
  }
  SECTION("scalar recursion contracts geometrically") {
    Eigen::MatrixXd zm(1, 1), ym(1, 1);
    zm << 2.0;
    ym << 5.0;
    const double alpha = 0.3;
    SGDConfig cfg;
    cfg.alpha0 = alpha;
    cfg.max_iters = 12;
    cfg.seed = 7;
    cfg.record_every = 1;
    const Trajectory traj = sgd_run(Support(zm), cfg, Support(ym));
    const double rate = std::abs(1.0 - 2.0 * alpha);
    for (std::size_t i = 0; i < traj.steps.size(); ++i) {
      const double expected =
          3.0 * std::pow(rate, static_cast<double>(traj.steps[i]));
      REQUIRE(traj.iterates[i].points()(0, 0) - 2.0 ==
              Catch::Approx(expected).margin(1e-12));
    }
  }
  SECTION("divergence is flagged, not thrown") {
    Eigen::MatrixXd zm(1, 1), ym(1, 1);
    zm << 0.0;
    ym << 1.0;
    SGDConfig cfg;
    cfg.alpha0 = 50.0;  // |1 - 2 alpha| = 99 per step
    cfg.max_iters = 100;
    cfg.seed = 1;
    const Trajectory traj = sgd_run(Support(zm), cfg, Support(ym));
    REQUIRE(traj.diverged);
    REQUIRE_FALSE(traj.converged);
    REQUIRE(traj.iters < 100);
    REQUIRE_FALSE(traj.warnings.empty());
  }
  SECTION("deterministic given the seed") {
    const Support z = testutil::random_support(3, 2, rng);
    const Support y0 = testutil::random_support(3, 2, rng);
    SGDConfig cfg;
    cfg.alpha0 = 0.4;
    cfg.noise_level = 0.01;
    cfg.max_iters = 500;
    cfg.seed = 12345;
    cfg.record_every = 100;
    const Trajectory a = sgd_run(z, cfg, y0);
    const Trajectory b = sgd_run(z, cfg, y0);
    REQUIRE(a.terminal.points() == b.terminal.points());
    REQUIRE(a.energy_series == b.energy_series);
    REQUIRE(a.w2_series == b.w2_series);
    for (std::size_t i = 0; i < a.iterates.size(); ++i) {
      REQUIRE(a.iterates[i].points() == b.iterates[i].points());
    }
  }
  SECTION("config validation") {
    const Support z = testutil::random_support(2, 2, rng);
    SGDConfig cfg;
    cfg.schedule = StepSchedule::kDecreasing;
    cfg.decay_exponent = 0.4;  // sum of squares diverges
    REQUIRE_THROWS(sgd_run(z, cfg, z));
    cfg.decay_exponent = 0.75;
    REQUIRE_NOTHROW(sgd_run(z, cfg, z));
    SGDConfig fixed;
    fixed.source = DirectionSource::kFixedSet;  // no axes given
    REQUIRE_THROWS(sgd_run(z, fixed, z));
  }
  SECTION("large constant steps warn") {
    const Support z = testutil::random_support(4, 2, rng);
    SGDConfig cfg;
    cfg.alpha0 = 2.5;  // n/2 = 2
    cfg.max_iters = 5;
    const Trajectory traj = sgd_run(z, cfg, z);
    REQUIRE_FALSE(traj.warnings.empty());
  }
  SECTION("fixed axes draw from the given set") {
    const Support z = testutil::random_support(3, 2, rng);
    const Support y0 = testutil::random_support(3, 2, rng);
    SGDConfig cfg;
    cfg.source = DirectionSource::kFixedSet;
    cfg.axes = sample_sphere(2, 8, 77);
    cfg.alpha0 = 0.3;
    cfg.max_iters = 4000;
    cfg.seed = 5;
    cfg.record_every = 1000;
    const Trajectory traj = sgd_run(z, cfg, y0);
    // the fixed-axes energy at the terminal should be far below the start
    REQUIRE(traj.energy_series.back() < 0.05 * traj.energy_series.front());
  }
}

TEST_CASE("sgd noise calibration") {
  // With Y0 = Z the gradient samples vanish, so a single noised step is
  // exactly alpha * a * gaussian per coordinate.
  Rng rng(227);
  const Support z = testutil::random_support(2, 2, rng);
  const double alpha = 0.5;
  const double noise = 0.01;
  const long runs = 100000;
  double sum = 0.0;
  double sum_sq = 0.0;
  long count = 0;
  for (long rep = 0; rep < runs / 4; ++rep) {
    SGDConfig cfg;
    cfg.alpha0 = alpha;
    cfg.noise_level = noise;
    cfg.max_iters = 1;
    cfg.seed = static_cast<std::uint64_t>(rep);
    cfg.record_every = 1;
    const Trajectory traj = sgd_run(z, cfg, z);
    const Eigen::MatrixXd inc = traj.terminal.points() - z.points();
    for (Eigen::Index r = 0; r < 2; ++r) {
      for (Eigen::Index c = 0; c < 2; ++c) {
        sum += inc(r, c);
        sum_sq += inc(r, c) * inc(r, c);
        ++count;
      }
    }
  }
  const double mean = sum / static_cast<double>(count);
  const double var = sum_sq / static_cast<double>(count) - mean * mean;
  const double expected = alpha * alpha * noise * noise;
  REQUIRE(std::abs(var / expected - 1.0) < 0.05);
}

TEST_CASE("sgd gradient is unbiased for the sliced energy") {
  Rng rng(229);
  const Support y = testutil::random_support(3, 2, rng);
  const Support z = testutil::random_support(3, 2, rng);
  const Eigen::Index draws = 100000;

  // empirical mean and error of single-direction gradients
  const DirectionSet dirs = sample_sphere(2, draws, 404);
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(3, 2);
  Eigen::MatrixXd sumsq = Eigen::MatrixXd::Zero(3, 2);
  for (Eigen::Index i = 0; i < draws; ++i) {
    const GradientMatrix g = grad_w_theta(y, z, dirs.axes.row(i).transpose());
    mean += g;
    sumsq += g.cwiseProduct(g);
  }
  mean /= static_cast<double>(draws);

  const GradientMatrix reference = grad_energy_mc(y, z, draws, 505);
  // reference error budget computed the same way
  const DirectionSet ref_dirs = sample_sphere(2, draws, 505);
  Eigen::MatrixXd ref_sumsq = Eigen::MatrixXd::Zero(3, 2);
  for (Eigen::Index i = 0; i < draws; ++i) {
    const GradientMatrix g =
        grad_w_theta(y, z, ref_dirs.axes.row(i).transpose());
    ref_sumsq += g.cwiseProduct(g);
  }
  for (Eigen::Index r = 0; r < 3; ++r) {
    for (Eigen::Index c = 0; c < 2; ++c) {
      const double var1 =
          sumsq(r, c) / static_cast<double>(draws) - mean(r, c) * mean(r, c);
      const double var2 = ref_sumsq(r, c) / static_cast<double>(draws) -
                          reference(r, c) * reference(r, c);
      const double se = std::sqrt((std::max(var1, 0.0) + std::max(var2, 0.0)) /
                                  static_cast<double>(draws));
      REQUIRE(std::abs(mean(r, c) - reference(r, c)) <= 3.0 * se + 1e-12);
    }
  }
}

TEST_CASE("barycenter runs") {
  Rng rng(233);
  SECTION("single target reduces to plain sgd") {
    const Support z = testutil::random_support(3, 2, rng);
    const Support y0 = testutil::random_support(3, 2, rng);
    SGDConfig cfg;
    cfg.alpha0 = 0.4;
    cfg.noise_level = 0.005;
    cfg.max_iters = 300;
    cfg.seed = 31;
    cfg.record_every = 100;
    BarycenterProblem prob{{z}, WeightVector::uniform(1)};
    const Trajectory a = barycenter_run(prob, cfg, y0);
    const Trajectory b = sgd_run(z, cfg, y0);
    REQUIRE(a.terminal.points() == b.terminal.points());
    REQUIRE(a.w2_series == b.w2_series);
  }
  SECTION("midpoint of two single-point targets (sgd)") {
    Eigen::MatrixXd z1(1, 2), z2(1, 2), y0(1, 2);
    z1 << 1, 0;
    z2 << 0, 1;
    y0 << 3, -2;
    SGDConfig cfg;
    cfg.schedule = StepSchedule::kDecreasing;
    cfg.alpha0 = 0.5;
    cfg.max_iters = 20000;
    cfg.seed = 11;
    cfg.record_every = 5000;
    Eigen::Vector2d lambdas(0.5, 0.5);
    BarycenterProblem prob{{Support(z1), Support(z2)}, WeightVector(lambdas)};
    const Trajectory traj = barycenter_run(prob, cfg, Support(y0));
    REQUIRE((traj.terminal.points() - Eigen::RowVector2d(0.5, 0.5)).norm() <
            1e-2);
  }
  SECTION("degenerate weights fit a single target") {
    Rng local(7);
    const Support z1 = testutil::random_support(3, 2, local);
    const Support z2 = testutil::random_support(3, 2, local);
    const Support y0 = testutil::random_support(3, 2, local);
    SGDConfig cfg;
    cfg.alpha0 = 0.5;
    cfg.max_iters = 30000;
    cfg.seed = 13;
    cfg.record_every = 10000;
    Eigen::Vector2d lambdas(1.0, 0.0);
    BarycenterProblem prob{{z1, z2}, WeightVector(lambdas)};
    const Trajectory traj = barycenter_run(prob, cfg, y0);
    REQUIRE(assignment_w2(traj.terminal, z1).cost / 2.0 < 1e-3);
  }
  SECTION("midpoint via the block-coordinate variant") {
    Eigen::MatrixXd z1(1, 2), z2(1, 2), y0(1, 2);
    z1 << 1, 0;
    z2 << 0, 1;
    y0 << 3, -2;
    const DirectionSet dirs = sample_sphere(2, 16, 3);
    BCDConfig cfg;
    cfg.tol = 1e-12;
    Eigen::Vector2d lambdas(0.5, 0.5);
    BarycenterProblem prob{{Support(z1), Support(z2)}, WeightVector(lambdas)};
    const Trajectory traj =
        barycenter_bcd_run(prob, dirs, Support(y0), cfg);
    REQUIRE(traj.converged);
    REQUIRE((traj.terminal.points() - Eigen::RowVector2d(0.5, 0.5)).norm() <
            1e-10);
  }
}

TEST_CASE("trajectory bookkeeping") {
  Rng rng(239);
  const Support z = testutil::random_support(3, 2, rng);
  const Support y0 = testutil::random_support(3, 2, rng);
  SGDConfig cfg;
  cfg.alpha0 = 0.3;
  cfg.max_iters = 1000;
  cfg.seed = 17;
  cfg.record_every = 250;
  const Trajectory traj = sgd_run(z, cfg, y0);
  REQUIRE(traj.steps.size() == traj.iterates.size());
  REQUIRE(traj.steps.size() == traj.energy_series.size());
  REQUIRE(traj.steps.size() == traj.w2_series.size());
  REQUIRE(traj.steps.front() == 0);
  REQUIRE(traj.steps.back() == traj.iters);
  for (double w : traj.w2_series) REQUIRE(w >= 0.0);
  REQUIRE(traj.max_row_norm_seen >= max_row_norm(y0));
  // the terminal assignment is a permutation
  std::vector<bool> hit(3, false);
  for (const auto l : traj.terminal_assignment) {
    REQUIRE_FALSE(hit[static_cast<std::size_t>(l)]);
    hit[static_cast<std::size_t>(l)] = true;
  }
}
