#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "swlab/directions.hpp"
#include "swlab/energy.hpp"
#include "swlab/errors.hpp"
#include "swlab/slice.hpp"
#include "swlab/support.hpp"

namespace swlab {

// Projected gap below which a slice counts as tied, i.e. the support sits on
// a cell boundary and the matching is convention-dependent.
inline constexpr double kBoundaryTol = 1e-9;
// Eigenvalue floor under which the direction covariance is treated as
// singular (tau_A).
inline constexpr double kEigFloor = 1e-10;

// One matching per slice: perms[i][k] is the target index the k-th source
// point is matched to on slice i.
struct Configuration {
  std::vector<std::vector<Eigen::Index>> perms;
  bool boundary = false;

  Eigen::Index p() const { return static_cast<Eigen::Index>(perms.size()); }
  Eigen::Index n() const {
    return perms.empty() ? 0 : static_cast<Eigen::Index>(perms[0].size());
  }
};

inline bool same_matching(const Configuration& a, const Configuration& b) {
  return a.perms == b.perms;
}

namespace detail {

inline bool has_tie(const Eigen::VectorXd& projected,
                    const std::vector<Eigen::Index>& order, double tol) {
  for (std::size_t r = 1; r < order.size(); ++r) {
    if (projected(order[r]) - projected(order[r - 1]) < tol) return true;
  }
  return false;
}

}  // namespace detail

// Slice-wise optimal matchings of Y against Z under the given directions.
// Ties are resolved by the stable sort and flagged via `boundary`.
inline Configuration configuration_of(const Support& y, const Support& z,
                                      const DirectionSet& dirs,
                                      double tie_tol = kBoundaryTol) {
  detail::check_pair(y, z);
  if (dirs.dim() != y.dim()) {
    throw DimensionError("configuration_of: direction dimension mismatch");
  }
  const Eigen::Index n = y.n();
  const Eigen::Index p = dirs.p();
  const Eigen::MatrixXd py = y.points() * dirs.axes.transpose();
  const Eigen::MatrixXd pz = z.points() * dirs.axes.transpose();
  Configuration cfg;
  cfg.perms.resize(static_cast<std::size_t>(p));
  for (Eigen::Index i = 0; i < p; ++i) {
    const Eigen::VectorXd cy = py.col(i);
    const Eigen::VectorXd cz = pz.col(i);
    const auto oy = sort_permutation(cy).order;
    const auto oz = sort_permutation(cz).order;
    cfg.boundary = cfg.boundary || detail::has_tie(cy, oy, tie_tol) ||
                   detail::has_tie(cz, oz, tie_tol);
    auto& perm = cfg.perms[static_cast<std::size_t>(i)];
    perm.resize(static_cast<std::size_t>(n));
    for (Eigen::Index r = 0; r < n; ++r) {
      perm[static_cast<std::size_t>(oy[static_cast<std::size_t>(r)])] =
          oz[static_cast<std::size_t>(r)];
    }
  }
  return cfg;
}

// Coefficients of the quadratic the energy restricts to on the cell of a
// configuration m:
//   q_m(Y) = (1/n) sum_k y_k^T A y_k - sum_k a_k^T y_k + b,
// with A = (1/p) sum_i theta_i theta_i^T shared by all cells,
// a_k = (2/(p n)) sum_i theta_i theta_i^T z_{m_i(k)}, and
// b = (1/n) sum_k z_k^T A z_k. Only the linear part depends on m.
struct CellQuadratic {
  Eigen::MatrixXd A;  // d x d
  Eigen::MatrixXd a;  // n x d, row k holds a_k
  double b = 0.0;
  Configuration m;
};

inline CellQuadratic quadratic_coeffs(const Configuration& m, const Support& z,
                                      const DirectionSet& dirs) {
  const Eigen::Index n = z.n();
  const Eigen::Index d = z.dim();
  const Eigen::Index p = dirs.p();
  if (m.p() != p || m.n() != n) {
    throw DimensionError("quadratic_coeffs: configuration shape mismatch");
  }
  CellQuadratic q;
  q.m = m;
  q.A = Eigen::MatrixXd::Zero(d, d);
  q.a = Eigen::MatrixXd::Zero(n, d);
  const Eigen::MatrixXd pz = z.points() * dirs.axes.transpose();  // n x p
  for (Eigen::Index i = 0; i < p; ++i) {
    const Eigen::VectorXd theta = dirs.axes.row(i).transpose();
    q.A += theta * theta.transpose();
    const auto& perm = m.perms[static_cast<std::size_t>(i)];
    for (Eigen::Index k = 0; k < n; ++k) {
      q.a.row(k) +=
          pz(perm[static_cast<std::size_t>(k)], i) * theta.transpose();
    }
  }
  q.A /= static_cast<double>(p);
  q.a *= 2.0 / (static_cast<double>(p) * static_cast<double>(n));
  q.b = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    q.b += z.points().row(k) * q.A * z.points().row(k).transpose();
  }
  q.b /= static_cast<double>(n);
  return q;
}

inline double eval_quadratic(const CellQuadratic& q, const Support& y) {
  if (y.n() != q.a.rows() || y.dim() != q.A.rows()) {
    throw DimensionError("eval_quadratic: shape mismatch");
  }
  const Eigen::MatrixXd& pts = y.points();
  const double quad = (pts * q.A).cwiseProduct(pts).sum();
  const double lin = q.a.cwiseProduct(pts).sum();
  return quad / static_cast<double>(y.n()) - lin + q.b;
}

// Analytic gradient of the cell quadratic, row k = (2/n) A y_k - a_k.
inline Eigen::MatrixXd quadratic_gradient(const CellQuadratic& q,
                                          const Support& y) {
  return (2.0 / static_cast<double>(y.n())) * y.points() * q.A - q.a;
}

// Unique global minimizer of the cell quadratic, y_k* = (n/2) A^{-1} a_k.
// Requires lambda_min(A) above the eigenvalue floor; guaranteed a.s. for
// p > d axes in general position.
inline Support minimize_quadratic(const CellQuadratic& q,
                                  double eig_floor = kEigFloor) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(q.A);
  if (eig.eigenvalues().minCoeff() <= eig_floor) {
    throw SingularMatrixError(
        "minimize_quadratic: direction covariance is singular (need p > d "
        "axes spanning R^d)");
  }
  const Eigen::MatrixXd inv = eig.eigenvectors() *
                              eig.eigenvalues().cwiseInverse().asDiagonal() *
                              eig.eigenvectors().transpose();
  const double n = static_cast<double>(q.a.rows());
  return Support(0.5 * n * q.a * inv);
}

struct StableCellResult {
  bool stable = false;
  bool boundary = false;
  Support minimizer;
};

// A cell is stable when it contains the minimizer of its own quadratic; the
// minimizer is then a critical point and local optimum of the energy.
// Configurations whose minimizer lands on a boundary tie are reported as
// indeterminate (stable = false, boundary = true).
inline StableCellResult is_stable_cell(const Configuration& m, const Support& z,
                                       const DirectionSet& dirs) {
  StableCellResult res;
  res.minimizer = minimize_quadratic(quadratic_coeffs(m, z, dirs));
  const Configuration at_min = configuration_of(res.minimizer, z, dirs);
  res.boundary = at_min.boundary;
  res.stable = !at_min.boundary && same_matching(at_min, m);
  return res;
}

namespace detail {

inline std::vector<std::vector<Eigen::Index>> all_permutations(Eigen::Index n) {
  std::vector<Eigen::Index> ident(static_cast<std::size_t>(n));
  std::iota(ident.begin(), ident.end(), Eigen::Index{0});
  std::vector<std::vector<Eigen::Index>> out;
  do {
    out.push_back(ident);
  } while (std::next_permutation(ident.begin(), ident.end()));
  return out;
}

// Calls fn(config) for every configuration in S_n^p; throws past the guard.
template <typename Fn>
void for_each_configuration(Eigen::Index n, Eigen::Index p, double guard,
                            Fn&& fn) {
  const auto perms = all_permutations(n);
  const double total =
      std::pow(static_cast<double>(perms.size()), static_cast<double>(p));
  if (total > guard) {
    throw SizeGuardError("configuration enumeration exceeds guard");
  }
  std::vector<std::size_t> idx(static_cast<std::size_t>(p), 0);
  Configuration cfg;
  cfg.perms.resize(static_cast<std::size_t>(p));
  while (true) {
    for (std::size_t i = 0; i < idx.size(); ++i) cfg.perms[i] = perms[idx[i]];
    fn(cfg);
    std::size_t pos = 0;
    while (pos < idx.size() && ++idx[pos] == perms.size()) {
      idx[pos] = 0;
      ++pos;
    }
    if (pos == idx.size()) break;
  }
}

}  // namespace detail

// Minimum of the cell quadratics over every configuration, evaluated by
// exhaustive enumeration. Equals energy_p; kept as an independent oracle.
inline double brute_force_energy(const Support& y, const Support& z,
                                 const DirectionSet& dirs,
                                 double guard = 1e6) {
  detail::check_pair(y, z);
  double best = std::numeric_limits<double>::infinity();
  detail::for_each_configuration(
      y.n(), dirs.p(), guard, [&](const Configuration& cfg) {
        best = std::min(best, eval_quadratic(quadratic_coeffs(cfg, z, dirs), y));
      });
  return best;
}

// Monte-Carlo estimate of the fixed-point map Psi at Y. Row k of `value` is
// sum_l S_hat[k][l] z_l with S_hat[k][l] = (d/p) sum over the directions whose
// slice matching sends k to l of theta theta^T.
struct PsiEstimate {
  Eigen::MatrixXd value;                             // n x d
  Eigen::MatrixXd a_hat;                             // d x d
  std::vector<std::vector<Eigen::MatrixXd>> s_hat;   // n x n blocks of d x d
  Eigen::VectorXd row_std_error;                     // l2 MC error per row
};

inline PsiEstimate psi_estimate_detail(const Support& y, const Support& z,
                                       Eigen::Index p_psi,
                                       std::uint64_t seed) {
  detail::check_pair(y, z);
  if (!is_in_u(y)) {
    throw NotInUError("psi_estimate: support has coincident rows");
  }
  const Eigen::Index n = y.n();
  const Eigen::Index d = y.dim();
  const DirectionSet dirs = sample_sphere(d, p_psi, seed);
  const Eigen::MatrixXd py = y.points() * dirs.axes.transpose();
  const Eigen::MatrixXd pz = z.points() * dirs.axes.transpose();

  PsiEstimate est;
  est.value = Eigen::MatrixXd::Zero(n, d);
  est.a_hat = Eigen::MatrixXd::Zero(d, d);
  est.s_hat.assign(static_cast<std::size_t>(n),
                   std::vector<Eigen::MatrixXd>(
                       static_cast<std::size_t>(n),
                       Eigen::MatrixXd::Zero(d, d)));
  Eigen::MatrixXd sum_sq = Eigen::MatrixXd::Zero(n, d);

  const double dd = static_cast<double>(d);
  for (Eigen::Index i = 0; i < p_psi; ++i) {
    const Eigen::VectorXd theta = dirs.axes.row(i).transpose();
    const Eigen::MatrixXd outer = theta * theta.transpose();
    est.a_hat += outer;
    const auto oy = sort_permutation(py.col(i)).order;
    const auto oz = sort_permutation(pz.col(i)).order;
    for (Eigen::Index r = 0; r < n; ++r) {
      const Eigen::Index k = oy[static_cast<std::size_t>(r)];
      const Eigen::Index l = oz[static_cast<std::size_t>(r)];
      est.s_hat[static_cast<std::size_t>(k)][static_cast<std::size_t>(l)] +=
          outer;
      const Eigen::RowVectorXd v = dd * pz(l, i) * theta.transpose();
      est.value.row(k) += v;
      sum_sq.row(k) += v.cwiseProduct(v);
    }
  }
  const double p = static_cast<double>(p_psi);
  est.a_hat /= p;
  est.value /= p;
  for (auto& row : est.s_hat) {
    for (auto& blk : row) blk *= dd / p;
  }
  est.row_std_error = Eigen::VectorXd::Zero(n);
  if (p_psi > 1) {
    for (Eigen::Index k = 0; k < n; ++k) {
      double acc = 0.0;
      for (Eigen::Index c = 0; c < d; ++c) {
        const double mean = est.value(k, c);
        const double var =
            (sum_sq(k, c) / p - mean * mean) * p / (p - 1.0);
        acc += std::max(var, 0.0) / p;
      }
      est.row_std_error(k) = std::sqrt(acc);
    }
  }
  return est;
}

inline Support psi_estimate(const Support& y, const Support& z,
                            Eigen::Index p_psi, std::uint64_t seed) {
  return Support(psi_estimate_detail(y, z, p_psi, seed).value);
}

// ||Y - Psi_hat(Y)||_{inf,2}, the Monte-Carlo fixed-point residual.
inline double fixed_point_residual(const Support& y, const Support& z,
                                   Eigen::Index p_psi, std::uint64_t seed) {
  const Support psi = psi_estimate(y, z, p_psi, seed);
  return row_norm_distance(y.points(), psi.points());
}

// Number of projections sufficient for the fixed-point equation to hold at
// precision epsilon with probability 1 - eta: the max of the three explicit
// bounds.
inline std::uint64_t required_p(double epsilon, double eta, Eigen::Index n,
                                Eigen::Index d, double cz_bar) {
  if (n < 1 || d < 1) throw DimensionError("required_p: need n, d >= 1");
  if (cz_bar <= 0.0) {
    throw std::invalid_argument("required_p: cz_bar must be positive");
  }
  const double nn = static_cast<double>(n);
  const double dd = static_cast<double>(d);
  if (!(epsilon > 0.0) || epsilon > (4.0 / 3.0) * nn * cz_bar) {
    throw std::invalid_argument(
        "required_p: epsilon must lie in (0, (4/3) n cz_bar]");
  }
  if (!(eta > 0.0) || !(eta < 1.0)) {
    throw std::invalid_argument("required_p: eta must lie in (0, 1)");
  }
  const double c2 = cz_bar * cz_bar;
  const double t1 = 4096.0 * dd * dd * dd * nn * c2 * cz_bar *
                    std::log(3.0 * dd * nn * nn / eta) /
                    (epsilon * epsilon * epsilon);
  const double t2 = 697.0 * dd * dd * nn * nn * c2 * std::log(3.0 * dd / eta) /
                    (epsilon * epsilon);
  const double t3 = 8.0 * dd * dd * nn * nn * c2 *
                    std::log(6.0 * nn * nn / eta) / (epsilon * epsilon);
  const double bound = std::ceil(std::max({t1, t2, t3}));
  if (!(bound < 1.8e19)) {
    throw std::overflow_error("required_p: bound exceeds uint64 range");
  }
  return static_cast<std::uint64_t>(bound);
}

// Fraction of slices matching source k to target l; bi-stochastic by
// construction.
struct MatchCountMatrix {
  Eigen::MatrixXd r;  // n x n
};

inline MatchCountMatrix match_counts(const Configuration& m) {
  const Eigen::Index n = m.n();
  const Eigen::Index p = m.p();
  if (n == 0 || p == 0) throw DimensionError("match_counts: empty configuration");
  MatchCountMatrix mc;
  mc.r = Eigen::MatrixXd::Zero(n, n);
  for (const auto& perm : m.perms) {
    for (Eigen::Index k = 0; k < n; ++k) {
      mc.r(k, perm[static_cast<std::size_t>(k)]) += 1.0;
    }
  }
  mc.r /= static_cast<double>(p);
  return mc;
}

}  // namespace swlab
