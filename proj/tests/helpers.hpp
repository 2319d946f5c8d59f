#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <functional>
#include <numeric>
#include <vector>

#include "swlab/rng.hpp"
#include "swlab/support.hpp"

// Independent oracles used by the tests; deliberately naive implementations
// that share no code with the library paths they check.
namespace testutil {

// min over all pairings of (1/n) sum (a_k - b_{pi(k)})^2, by enumeration.
inline double brute_force_w2_1d(const std::vector<double>& a,
                                std::vector<double> b) {
  std::vector<std::size_t> idx(b.size());
  std::iota(idx.begin(), idx.end(), 0u);
  std::sort(idx.begin(), idx.end());
  double best = std::numeric_limits<double>::infinity();
  do {
    double acc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double diff = a[k] - b[idx[k]];
      acc += diff * diff;
    }
    best = std::min(best, acc);
  } while (std::next_permutation(idx.begin(), idx.end()));
  return best / static_cast<double>(a.size());
}

// min over all assignments of (1/n) sum ||y_k - z_{pi(k)}||^2, by enumeration.
inline double brute_force_assignment(const swlab::Support& y,
                                     const swlab::Support& z) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(y.n()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  double best = std::numeric_limits<double>::infinity();
  do {
    double acc = 0.0;
    for (Eigen::Index k = 0; k < y.n(); ++k) {
      acc += (y.points().row(k) -
              z.points().row(idx[static_cast<std::size_t>(k)]))
                 .squaredNorm();
    }
    best = std::min(best, acc);
  } while (std::next_permutation(idx.begin(), idx.end()));
  return best / static_cast<double>(y.n());
}

inline Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols,
                                       swlab::Rng& rng, double scale = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = scale * rng.gaussian();
  }
  return m;
}

inline swlab::Support random_support(Eigen::Index n, Eigen::Index d,
                                     swlab::Rng& rng, double scale = 1.0) {
  return swlab::Support(gaussian_matrix(n, d, rng, scale));
}

// Haar-ish orthogonal matrix from the QR of a gaussian draw.
inline Eigen::MatrixXd random_orthogonal(Eigen::Index d, swlab::Rng& rng) {
  const Eigen::MatrixXd g = gaussian_matrix(d, d, rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  // fix signs so the distribution does not collapse
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index i = 0; i < d; ++i) {
    if (r(i, i) < 0) q.col(i) *= -1.0;
  }
  return q;
}

// Central finite differences of a scalar function of a support matrix.
inline Eigen::MatrixXd finite_diff_grad(
    const std::function<double(const Eigen::MatrixXd&)>& fn,
    const Eigen::MatrixXd& at, double h) {
  Eigen::MatrixXd grad(at.rows(), at.cols());
  for (Eigen::Index r = 0; r < at.rows(); ++r) {
    for (Eigen::Index c = 0; c < at.cols(); ++c) {
      Eigen::MatrixXd up = at;
      Eigen::MatrixXd dn = at;
      up(r, c) += h;
      dn(r, c) -= h;
      grad(r, c) = (fn(up) - fn(dn)) / (2.0 * h);
    }
  }
  return grad;
}

// Smallest pairwise gap of the sorted projections over all slices; used to
// keep finite-difference probes inside one cell.
inline double min_projected_gap(const swlab::Support& y,
                                const Eigen::MatrixXd& axes) {
  double gap = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < axes.rows(); ++i) {
    Eigen::VectorXd proj = y.points() * axes.row(i).transpose();
    std::sort(proj.data(), proj.data() + proj.size());
    for (Eigen::Index k = 1; k < proj.size(); ++k) {
      gap = std::min(gap, proj(k) - proj(k - 1));
    }
  }
  return gap;
}

}  // namespace testutil
