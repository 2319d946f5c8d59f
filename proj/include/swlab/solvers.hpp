#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "swlab/cells.hpp"
#include "swlab/directions.hpp"
#include "swlab/energy.hpp"
#include "swlab/errors.hpp"
#include "swlab/exact_ot.hpp"
#include "swlab/rng.hpp"
#include "swlab/support.hpp"

namespace swlab {

// Iterates past this row norm are declared divergent.
inline constexpr double kDivergenceNorm = 1e6;

struct BCDConfig {
  long max_iters = 1000;
  double tol = 1e-5;       // epsilon of the ||Y_t - Y_{t-1}||_{inf,2} test
  long record_every = 1;
};

enum class StepSchedule { kConstant, kDecreasing };
enum class DirectionSource { kFreshSphere, kFixedSet };

struct SGDConfig {
  StepSchedule schedule = StepSchedule::kConstant;
  double alpha0 = 1.0;
  double decay_exponent = 0.75;  // alpha0 / (1 + t)^q for decreasing steps
  double noise_level = 0.0;      // a
  long batch_size = 1;           // b
  DirectionSource source = DirectionSource::kFreshSphere;
  DirectionSet axes;             // required for kFixedSet
  double conv_threshold = -1.0;  // beta; negative disables the test
  long max_iters = 1000;
  std::uint64_t seed = 0;
  long record_every = 100;
  // Projections used for the recorded energy when directions are fresh.
  Eigen::Index energy_eval_projections = 128;
  // Experiment-mode early stop once the recorded (1/d) W2 error falls below
  // this value; negative disables.
  double stop_below_w2 = -1.0;

  double step(long t) const {
    if (schedule == StepSchedule::kConstant) return alpha0;
    return alpha0 / std::pow(1.0 + static_cast<double>(t), decay_exponent);
  }
};

// A recorded optimization run. Series entries line up with `steps`; the
// terminal state is always recorded last.
struct Trajectory {
  std::vector<long> steps;
  std::vector<Support> iterates;
  std::vector<double> energy_series;
  std::vector<double> w2_series;  // (1/d) exact squared Wasserstein error
  Support terminal;
  std::vector<Eigen::Index> terminal_assignment;
  bool converged = false;
  bool diverged = false;
  bool terminal_boundary = false;
  long iters = 0;
  double max_row_norm_seen = 0.0;
  std::vector<std::string> warnings;
};

struct BarycenterProblem {
  std::vector<Support> targets;
  WeightVector lambdas;
};

namespace detail {

inline void validate_bcd(const BCDConfig& cfg) {
  if (cfg.max_iters < 1) throw std::invalid_argument("BCD: max_iters >= 1");
  if (!(cfg.tol > 0.0)) throw std::invalid_argument("BCD: tol > 0 required");
  if (cfg.record_every < 1) {
    throw std::invalid_argument("BCD: record_every >= 1");
  }
}

inline std::vector<std::string> validate_sgd(const SGDConfig& cfg,
                                             Eigen::Index n) {
  if (cfg.max_iters < 1) throw std::invalid_argument("SGD: max_iters >= 1");
  if (cfg.batch_size < 1) throw std::invalid_argument("SGD: batch_size >= 1");
  if (cfg.noise_level < 0.0) {
    throw std::invalid_argument("SGD: noise_level >= 0");
  }
  if (!(cfg.alpha0 > 0.0)) throw std::invalid_argument("SGD: alpha0 > 0");
  if (cfg.record_every < 1) {
    throw std::invalid_argument("SGD: record_every >= 1");
  }
  if (cfg.schedule == StepSchedule::kDecreasing &&
      (cfg.decay_exponent <= 0.5 || cfg.decay_exponent > 1.0)) {
    // exponent in (1/2, 1] keeps sum alpha_t = inf and sum alpha_t^2 < inf
    throw std::invalid_argument(
        "SGD: decreasing schedule needs decay_exponent in (0.5, 1]");
  }
  if (cfg.source == DirectionSource::kFixedSet && cfg.axes.p() < 1) {
    throw std::invalid_argument("SGD: fixed-set source needs axes");
  }
  std::vector<std::string> warnings;
  const double nd = static_cast<double>(n);
  if (cfg.schedule == StepSchedule::kConstant && cfg.alpha0 >= nd / 2.0) {
    warnings.push_back("constant step >= n/2");
  }
  if (cfg.schedule == StepSchedule::kConstant && cfg.alpha0 >= 1.5 * nd) {
    warnings.push_back("constant step above divergence heuristic 1.5 n");
  }
  return warnings;
}

// Weighted exact Wasserstein error (1/d) sum_j lambda_j W2^2(Y, Z_j).
inline double w2_error(const Eigen::MatrixXd& y,
                       const std::vector<const Support*>& targets,
                       const Eigen::VectorXd& lambdas) {
  const Support ys{Eigen::MatrixXd(y)};
  double acc = 0.0;
  for (std::size_t j = 0; j < targets.size(); ++j) {
    acc += lambdas(static_cast<Eigen::Index>(j)) *
           assignment_w2(ys, *targets[j]).cost;
  }
  return acc / static_cast<double>(y.cols());
}

inline double weighted_energy_fixed(const Support& y,
                                    const std::vector<const Support*>& targets,
                                    const Eigen::VectorXd& lambdas,
                                    const DirectionSet& axes) {
  double acc = 0.0;
  for (std::size_t j = 0; j < targets.size(); ++j) {
    acc += lambdas(static_cast<Eigen::Index>(j)) *
           energy_p(y, *targets[j], axes);
  }
  return acc;
}

struct SeriesRecorder {
  Trajectory* traj;
  const std::vector<const Support*>* targets;
  const Eigen::VectorXd* lambdas;

  void operator()(long t, const Eigen::MatrixXd& y, double energy) const {
    traj->steps.push_back(t);
    traj->iterates.emplace_back(Eigen::MatrixXd(y));
    traj->energy_series.push_back(energy);
    traj->w2_series.push_back(w2_error(y, *targets, *lambdas));
  }
};

inline Trajectory bcd_engine(const std::vector<const Support*>& targets,
                             const Eigen::VectorXd& lambdas,
                             const DirectionSet& dirs, const Support& y0,
                             const BCDConfig& cfg) {
  validate_bcd(cfg);
  const Eigen::Index n = y0.n();
  const Eigen::Index d = y0.dim();
  const Eigen::Index p = dirs.p();
  for (const Support* z : targets) check_pair(y0, *z);
  if (dirs.dim() != d) throw DimensionError("bcd: direction dimension mismatch");

  const Eigen::MatrixXd axes_t = dirs.axes.transpose();  // d x p
  const Eigen::MatrixXd a_cov = (dirs.axes.transpose() * dirs.axes) /
                                static_cast<double>(p);
  {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a_cov);
    if (eig.eigenvalues().minCoeff() <= kEigFloor) {
      throw SingularMatrixError("bcd: direction covariance singular");
    }
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(a_cov);

  // Target projections sorted once; the matching only re-sorts Y.
  const std::size_t num_targets = targets.size();
  std::vector<Eigen::MatrixXd> pz(num_targets);
  std::vector<std::vector<std::vector<Eigen::Index>>> oz(num_targets);
  for (std::size_t j = 0; j < num_targets; ++j) {
    pz[j] = targets[j]->points() * axes_t;  // n x p
    oz[j].resize(static_cast<std::size_t>(p));
    for (Eigen::Index i = 0; i < p; ++i) {
      oz[j][static_cast<std::size_t>(i)] =
          sort_permutation(pz[j].col(i)).order;
    }
  }

  Trajectory traj;
  SeriesRecorder record{&traj, &targets, &lambdas};
  auto energy_at = [&](const Eigen::MatrixXd& y) {
    return weighted_energy_fixed(Support{Eigen::MatrixXd(y)}, targets, lambdas,
                                 dirs);
  };

  Eigen::MatrixXd ycur = y0.points();
  traj.max_row_norm_seen = max_row_norm(ycur);
  record(0, ycur, energy_at(ycur));

  Eigen::MatrixXd m_sum(n, d);
  bool converged = false;
  long t = 0;
  for (t = 1; t <= cfg.max_iters; ++t) {
    const Eigen::MatrixXd py = ycur * axes_t;  // n x p
    m_sum.setZero();
    for (Eigen::Index i = 0; i < p; ++i) {
      const auto oy = sort_permutation(py.col(i)).order;
      for (std::size_t j = 0; j < num_targets; ++j) {
        const auto& ozi = oz[j][static_cast<std::size_t>(i)];
        const double lam = lambdas(static_cast<Eigen::Index>(j));
        for (Eigen::Index r = 0; r < n; ++r) {
          const Eigen::Index k = oy[static_cast<std::size_t>(r)];
          const Eigen::Index l = ozi[static_cast<std::size_t>(r)];
          m_sum.row(k) += lam * pz[j](l, i) * dirs.axes.row(i);
        }
      }
    }
    m_sum /= static_cast<double>(p);
    const Eigen::MatrixXd ynext = llt.solve(m_sum.transpose()).transpose();
    const double diff = row_norm_distance(ynext, ycur);
    ycur = ynext;
    traj.max_row_norm_seen = std::max(traj.max_row_norm_seen, max_row_norm(ycur));
    if (!ycur.allFinite()) {
      throw std::runtime_error("bcd: non-finite iterate at step " +
                               std::to_string(t));
    }
    if (t % cfg.record_every == 0 && t != cfg.max_iters) {
      record(t, ycur, energy_at(ycur));
    }
    if (diff < cfg.tol) {
      converged = true;
      break;
    }
  }
  traj.iters = std::min<long>(t, cfg.max_iters);
  traj.converged = converged;
  if (traj.steps.empty() || traj.steps.back() != traj.iters) {
    record(traj.iters, ycur, energy_at(ycur));
  }
  traj.terminal = Support(ycur);
  traj.terminal_boundary =
      configuration_of(traj.terminal, *targets[0], dirs).boundary;
  const auto assign = assignment_w2(traj.terminal, *targets[0]);
  traj.terminal_assignment = assign.perm;
  return traj;
}

inline Trajectory sgd_engine(const std::vector<const Support*>& targets,
                             const Eigen::VectorXd& lambdas,
                             const SGDConfig& cfg, const Support& y0) {
  const Eigen::Index n = y0.n();
  const Eigen::Index d = y0.dim();
  for (const Support* z : targets) check_pair(y0, *z);
  if (cfg.source == DirectionSource::kFixedSet && cfg.axes.dim() != d) {
    throw DimensionError("sgd: fixed axes dimension mismatch");
  }
  Trajectory traj;
  traj.warnings = validate_sgd(cfg, n);

  Rng rng(cfg.seed);
  const std::uint64_t diag_seed = mix_seed(cfg.seed, 0x1d5a6u);

  auto record_energy = [&](const Eigen::MatrixXd& y, long t) {
    const Support ys{Eigen::MatrixXd(y)};
    if (cfg.source == DirectionSource::kFixedSet) {
      return weighted_energy_fixed(ys, targets, lambdas, cfg.axes);
    }
    if (cfg.energy_eval_projections < 1) {
      return std::numeric_limits<double>::quiet_NaN();
    }
    const DirectionSet eval = sample_sphere(
        d, cfg.energy_eval_projections,
        mix_seed(diag_seed, static_cast<std::uint64_t>(t)));
    return weighted_energy_fixed(ys, targets, lambdas, eval);
  };
  SeriesRecorder record{&traj, &targets, &lambdas};

  Eigen::MatrixXd ycur = y0.points();
  traj.max_row_norm_seen = max_row_norm(ycur);
  record(0, ycur, record_energy(ycur, 0));

  Eigen::MatrixXd grad(n, d);
  Eigen::VectorXd theta(d);
  Eigen::VectorXd last_theta(d);
  last_theta.setZero();
  const double batch_scale = 1.0 / static_cast<double>(cfg.batch_size);
  long t = 0;
  for (t = 0; t < cfg.max_iters; ++t) {
    const double alpha = cfg.step(t);
    grad.setZero();
    for (long j = 0; j < cfg.batch_size; ++j) {
      if (cfg.source == DirectionSource::kFreshSphere) {
        theta = sample_direction(d, rng);
      } else {
        theta = cfg.axes.axes
                    .row(static_cast<Eigen::Index>(
                        rng.below(static_cast<std::uint64_t>(cfg.axes.p()))))
                    .transpose();
      }
      for (std::size_t jt = 0; jt < targets.size(); ++jt) {
        add_grad_w_theta(ycur, targets[jt]->points(), theta,
                         batch_scale * lambdas(static_cast<Eigen::Index>(jt)),
                         grad);
      }
    }
    last_theta = theta;
    Eigen::MatrixXd ynext = ycur - alpha * grad;
    if (cfg.noise_level > 0.0) {
      for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index c = 0; c < d; ++c) {
          ynext(r, c) += alpha * cfg.noise_level * rng.gaussian();
        }
      }
    }
    const double diff = row_norm_distance(ynext, ycur);
    if (!ynext.allFinite() || max_row_norm(ynext) > kDivergenceNorm) {
      traj.diverged = true;
      traj.warnings.push_back("diverged at step " + std::to_string(t + 1) +
                              " (step size " + std::to_string(alpha) + ")");
      if (ynext.allFinite()) ycur = ynext;
      ++t;
      break;
    }
    ycur = ynext;
    traj.max_row_norm_seen = std::max(traj.max_row_norm_seen, max_row_norm(ycur));
    if ((t + 1) % cfg.record_every == 0 && t + 1 != cfg.max_iters) {
      record(t + 1, ycur, record_energy(ycur, t + 1));
      if (cfg.stop_below_w2 > 0.0 && traj.w2_series.back() < cfg.stop_below_w2) {
        ++t;
        break;
      }
    }
    if (cfg.conv_threshold > 0.0 && diff < cfg.conv_threshold) {
      traj.converged = true;
      ++t;
      break;
    }
  }
  traj.iters = std::min<long>(t, cfg.max_iters);
  if (traj.steps.empty() || traj.steps.back() != traj.iters) {
    record(traj.iters, ycur, record_energy(ycur, traj.iters));
  }
  traj.terminal = Support(ycur);
  traj.terminal_boundary =
      configuration_of(traj.terminal, *targets[0],
                       DirectionSet{last_theta.transpose(), 0})
          .boundary;
  // Assignment of the final slice, as returned by the SGD scheme.
  {
    const Eigen::VectorXd py = traj.terminal.points() * last_theta;
    const Eigen::VectorXd pz = targets[0]->points() * last_theta;
    const auto oy = sort_permutation(py).order;
    const auto ozp = sort_permutation(pz).order;
    traj.terminal_assignment.assign(static_cast<std::size_t>(n), 0);
    for (Eigen::Index r = 0; r < n; ++r) {
      traj.terminal_assignment[static_cast<std::size_t>(
          oy[static_cast<std::size_t>(r)])] = ozp[static_cast<std::size_t>(r)];
    }
  }
  return traj;
}

}  // namespace detail

// Block-coordinate descent on the fixed-axes energy: alternates slice-wise
// optimal matchings with the closed-form position update, and stops on the
// ||Y_t - Y_{t-1}||_{inf,2} < tol test. The recorded energy is non-increasing.
inline Trajectory bcd_run(const Support& z, const DirectionSet& dirs,
                          const Support& y0, const BCDConfig& cfg) {
  const std::vector<const Support*> targets{&z};
  return detail::bcd_engine(targets, Eigen::VectorXd::Ones(1), dirs, y0, cfg);
}

// Stochastic gradient descent on the sliced energy, with optional gaussian
// noise (scaled by step * noise_level), batching and decreasing steps.
// Directions come fresh from the sphere or uniformly from a fixed axis set.
// Divergence is reported through the trajectory, not thrown.
inline Trajectory sgd_run(const Support& z, const SGDConfig& cfg,
                          const Support& y0) {
  const std::vector<const Support*> targets{&z};
  return detail::sgd_engine(targets, Eigen::VectorXd::Ones(1), cfg, y0);
}

// SGD on the lambda-weighted barycenter objective sum_j lambda_j E(Y, Z_j).
inline Trajectory barycenter_run(const BarycenterProblem& prob,
                                 const SGDConfig& cfg, const Support& y0) {
  if (prob.targets.empty()) {
    throw DimensionError("barycenter_run: no targets");
  }
  if (prob.lambdas.size() != static_cast<Eigen::Index>(prob.targets.size())) {
    throw DimensionError("barycenter_run: lambda size mismatch");
  }
  std::vector<const Support*> targets;
  targets.reserve(prob.targets.size());
  for (const auto& zt : prob.targets) targets.push_back(&zt);
  return detail::sgd_engine(targets, prob.lambdas.w(), cfg, y0);
}

// Block-coordinate variant of the barycenter problem on fixed axes; the
// position update solves the weighted quadratic in closed form.
inline Trajectory barycenter_bcd_run(const BarycenterProblem& prob,
                                     const DirectionSet& dirs,
                                     const Support& y0, const BCDConfig& cfg) {
  if (prob.targets.empty()) {
    throw DimensionError("barycenter_bcd_run: no targets");
  }
  if (prob.lambdas.size() != static_cast<Eigen::Index>(prob.targets.size())) {
    throw DimensionError("barycenter_bcd_run: lambda size mismatch");
  }
  std::vector<const Support*> targets;
  targets.reserve(prob.targets.size());
  for (const auto& zt : prob.targets) targets.push_back(&zt);
  return detail::bcd_engine(targets, prob.lambdas.w(), dirs, y0, cfg);
}

}  // namespace swlab
