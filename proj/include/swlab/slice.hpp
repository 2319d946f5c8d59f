#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <numeric>
#include <vector>

#include "swlab/errors.hpp"
#include "swlab/support.hpp"

namespace swlab {

// Stable ascending sort permutation: order[r] is the source index of the
// r-th smallest value, ties broken by ascending source index.
struct SortPermutation {
  std::vector<Eigen::Index> order;
};

inline SortPermutation sort_permutation(const Eigen::VectorXd& values) {
  SortPermutation perm;
  perm.order.resize(static_cast<std::size_t>(values.size()));
  std::iota(perm.order.begin(), perm.order.end(), Eigen::Index{0});
  std::stable_sort(perm.order.begin(), perm.order.end(),
                   [&](Eigen::Index a, Eigen::Index b) {
                     return values(a) < values(b);
                   });
  return perm;
}

// Projects every point of the support onto the line spanned by theta.
inline Eigen::VectorXd project(const Support& y, const Eigen::VectorXd& theta) {
  if (theta.size() != y.dim()) {
    throw DimensionError("project: direction dimension mismatch");
  }
  return y.points() * theta;
}

namespace detail {

// Squared 2-Wasserstein between two sorted samples of equal length n with
// uniform weights 1/n.
inline double w2_1d_sorted(const std::vector<double>& a,
                           const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double diff = a[k] - b[k];
    acc += diff * diff;
  }
  return acc / static_cast<double>(a.size());
}

}  // namespace detail

// Squared 2-Wasserstein distance between the uniform measures on two real
// samples of equal length, computed by sorting both sides.
inline double w2_1d_uniform(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) {
    throw DimensionError("w2_1d_uniform: length mismatch");
  }
  std::vector<double> sa(a.data(), a.data() + a.size());
  std::vector<double> sb(b.data(), b.data() + b.size());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  return detail::w2_1d_sorted(sa, sb);
}

// Slice loss w_theta: squared 1D Wasserstein distance between the
// theta-projections of the two supports.
inline double w_theta(const Support& y, const Support& z,
                      const Eigen::VectorXd& theta) {
  if (y.n() != z.n() || y.dim() != z.dim()) {
    throw DimensionError("w_theta: supports must share n and d");
  }
  return w2_1d_uniform(project(y, theta), project(z, theta));
}

}  // namespace swlab
