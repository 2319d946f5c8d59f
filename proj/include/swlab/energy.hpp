#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <vector>

#include "swlab/directions.hpp"
#include "swlab/errors.hpp"
#include "swlab/slice.hpp"
#include "swlab/support.hpp"

namespace swlab {

// Monte-Carlo estimate of the sliced energy, with the standard error of the
// mean over the p slice values.
struct EnergyEstimate {
  double value = 0.0;
  double std_error = 0.0;
  Eigen::Index p_used = 0;
  std::uint64_t seed = 0;
};

// n x d matrix with the same row layout as a Support.
using GradientMatrix = Eigen::MatrixXd;

namespace detail {

inline void check_pair(const Support& y, const Support& z) {
  if (y.n() != z.n() || y.dim() != z.dim()) {
    throw DimensionError("energy: supports must share n and d");
  }
}

// Evaluates w_theta for every row of `axes`, writing one value per slice.
inline void slice_values(const Support& y, const Support& z,
                         const Eigen::MatrixXd& axes,
                         std::vector<double>& out) {
  const Eigen::Index n = y.n();
  const Eigen::Index p = axes.rows();
  const Eigen::MatrixXd py = y.points() * axes.transpose();  // n x p
  const Eigen::MatrixXd pz = z.points() * axes.transpose();
  out.resize(static_cast<std::size_t>(p));
  std::vector<double> sa(static_cast<std::size_t>(n));
  std::vector<double> sb(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index k = 0; k < n; ++k) {
      sa[static_cast<std::size_t>(k)] = py(k, i);
      sb[static_cast<std::size_t>(k)] = pz(k, i);
    }
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    out[static_cast<std::size_t>(i)] = w2_1d_sorted(sa, sb);
  }
}

inline EnergyEstimate estimate_from_values(const std::vector<double>& vals,
                                           std::uint64_t seed) {
  const auto p = static_cast<double>(vals.size());
  double mean = 0.0;
  for (double v : vals) mean += v;
  mean /= p;
  double var = 0.0;
  if (vals.size() > 1) {
    for (double v : vals) var += (v - mean) * (v - mean);
    var /= (p - 1.0);
  }
  EnergyEstimate est;
  est.value = mean;
  est.std_error = std::sqrt(var / p);
  est.p_used = static_cast<Eigen::Index>(vals.size());
  est.seed = seed;
  return est;
}

// Adds scale * grad w_theta(Y) to `out`. Row k of the gradient is
// (2/n) theta theta^T (y_k - z_{m(k)}) where m pairs equal sorted ranks,
// ties resolved by the stable sort.
inline void add_grad_w_theta(const Eigen::MatrixXd& y, const Eigen::MatrixXd& z,
                             const Eigen::VectorXd& theta, double scale,
                             Eigen::MatrixXd& out) {
  const Eigen::Index n = y.rows();
  const Eigen::VectorXd py = y * theta;
  const Eigen::VectorXd pz = z * theta;
  const auto oy = sort_permutation(py).order;
  const auto oz = sort_permutation(pz).order;
  const double factor = scale * 2.0 / static_cast<double>(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const Eigen::Index k = oy[static_cast<std::size_t>(r)];
    const Eigen::Index l = oz[static_cast<std::size_t>(r)];
    out.row(k) += factor * (py(k) - pz(l)) * theta.transpose();
  }
}

}  // namespace detail

// Average of w_theta over a fixed direction set.
inline double energy_p(const Support& y, const Support& z,
                       const DirectionSet& dirs) {
  detail::check_pair(y, z);
  if (dirs.dim() != y.dim()) {
    throw DimensionError("energy_p: direction dimension mismatch");
  }
  std::vector<double> vals;
  detail::slice_values(y, z, dirs.axes, vals);
  double acc = 0.0;
  for (double v : vals) acc += v;
  return acc / static_cast<double>(vals.size());
}

// Monte-Carlo estimate of the sliced energy with p fresh directions.
inline EnergyEstimate energy_mc(const Support& y, const Support& z,
                                Eigen::Index p, std::uint64_t seed) {
  detail::check_pair(y, z);
  const DirectionSet dirs = sample_sphere(y.dim(), p, seed);
  std::vector<double> vals;
  detail::slice_values(y, z, dirs.axes, vals);
  return detail::estimate_from_values(vals, seed);
}

// Almost-everywhere gradient of w_theta at Y.
inline GradientMatrix grad_w_theta(const Support& y, const Support& z,
                                   const Eigen::VectorXd& theta) {
  detail::check_pair(y, z);
  GradientMatrix g = Eigen::MatrixXd::Zero(y.n(), y.dim());
  detail::add_grad_w_theta(y.points(), z.points(), theta, 1.0, g);
  return g;
}

// Gradient of energy_p: average of grad_w_theta over the fixed directions.
inline GradientMatrix grad_energy_p(const Support& y, const Support& z,
                                    const DirectionSet& dirs) {
  detail::check_pair(y, z);
  GradientMatrix g = Eigen::MatrixXd::Zero(y.n(), y.dim());
  const double scale = 1.0 / static_cast<double>(dirs.p());
  for (Eigen::Index i = 0; i < dirs.p(); ++i) {
    detail::add_grad_w_theta(y.points(), z.points(),
                             dirs.axes.row(i).transpose(), scale, g);
  }
  return g;
}

// Monte-Carlo gradient estimate with p fresh directions.
inline GradientMatrix grad_energy_mc(const Support& y, const Support& z,
                                     Eigen::Index p, std::uint64_t seed) {
  const DirectionSet dirs = sample_sphere(y.dim(), p, seed);
  return grad_energy_p(y, z, dirs);
}

// Sliced energy of the symmetric two-point configuration in the plane:
// Y = ((u,v), (-u,-v)) against Z = ((0,-1), (0,1)). Continuously extended at
// u = 0 and at the origin (atan2 supplies both limits).
inline double closed_form_energy_sym2d(double u, double v) {
  const double au = std::abs(u);
  const double av = std::abs(v);
  constexpr double kPi = 3.14159265358979323846;
  return 0.5 * (u * u + v * v) + 0.5 -
         (2.0 / kPi) * (au + av * std::atan2(av, au));
}

// Exact squared 2-Wasserstein distance for the same configuration.
inline double closed_form_w2_sym2d(double u, double v) {
  const double t = std::abs(v) - 1.0;
  return u * u + t * t;
}

// Uniform local Lipschitz constant of the slice losses on the radius-r ball
// around X: 2 n (r + ||X||_{inf,2} + ||Z||_{inf,2}).
inline double lipschitz_bound(const Support& x, const Support& z, double r) {
  if (r < 0.0) throw std::invalid_argument("lipschitz_bound: r must be >= 0");
  return 2.0 * static_cast<double>(x.n()) *
         (r + max_row_norm(x) + max_row_norm(z));
}

}  // namespace swlab
