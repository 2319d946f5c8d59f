#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <utility>
#include <vector>

#include "swlab/errors.hpp"
#include "swlab/support.hpp"

namespace swlab {

using CostMatrix = Eigen::MatrixXd;

// Probability weights on a finite support: non-negative, summing to one.
class WeightVector {
 public:
  explicit WeightVector(Eigen::VectorXd w, double tol = 1e-12)
      : w_(std::move(w)) {
    if (w_.size() < 1) throw DimensionError("WeightVector: empty");
    if (w_.minCoeff() < 0.0) {
      throw std::invalid_argument("WeightVector: negative entry");
    }
    if (std::abs(w_.sum() - 1.0) > tol) {
      throw std::invalid_argument("WeightVector: entries must sum to 1");
    }
  }

  static WeightVector uniform(Eigen::Index n) {
    return WeightVector(Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n)));
  }

  Eigen::Index size() const { return w_.size(); }
  const Eigen::VectorXd& w() const { return w_; }
  bool strictly_positive() const { return w_.minCoeff() > 0.0; }

 private:
  Eigen::VectorXd w_;
};

struct TransportPlan {
  Eigen::MatrixXd pi;  // n x m, row sums alpha, column sums beta
};

struct AssignmentResult {
  double cost = 0.0;
  std::vector<Eigen::Index> perm;  // row k of Y matched to row perm[k] of Z
};

namespace detail {

// Square linear assignment by shortest augmenting paths with dual
// potentials. Returns row -> column; O(n^3).
inline std::vector<Eigen::Index> solve_assignment(const Eigen::MatrixXd& cost) {
  const Eigen::Index n = cost.rows();
  const double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n), 0.0);
  std::vector<double> v(static_cast<std::size_t>(n), 0.0);
  std::vector<Eigen::Index> row4col(static_cast<std::size_t>(n), -1);
  std::vector<Eigen::Index> col4row(static_cast<std::size_t>(n), -1);
  std::vector<double> shortest(static_cast<std::size_t>(n));
  std::vector<Eigen::Index> path(static_cast<std::size_t>(n));
  std::vector<char> in_rows(static_cast<std::size_t>(n));
  std::vector<char> in_cols(static_cast<std::size_t>(n));
  std::vector<Eigen::Index> remaining(static_cast<std::size_t>(n));

  for (Eigen::Index cur = 0; cur < n; ++cur) {
    double min_val = 0.0;
    Eigen::Index i = cur;
    Eigen::Index sink = -1;
    Eigen::Index num_remaining = n;
    for (Eigen::Index j = 0; j < n; ++j) {
      remaining[static_cast<std::size_t>(j)] = j;
    }
    std::fill(in_rows.begin(), in_rows.end(), 0);
    std::fill(in_cols.begin(), in_cols.end(), 0);
    std::fill(shortest.begin(), shortest.end(), kInf);

    while (sink == -1) {
      in_rows[static_cast<std::size_t>(i)] = 1;
      Eigen::Index index = -1;
      double lowest = kInf;
      for (Eigen::Index it = 0; it < num_remaining; ++it) {
        const Eigen::Index j = remaining[static_cast<std::size_t>(it)];
        const double r = min_val + cost(i, j) - u[static_cast<std::size_t>(i)] -
                         v[static_cast<std::size_t>(j)];
        if (r < shortest[static_cast<std::size_t>(j)]) {
          path[static_cast<std::size_t>(j)] = i;
          shortest[static_cast<std::size_t>(j)] = r;
        }
        if (shortest[static_cast<std::size_t>(j)] < lowest ||
            (shortest[static_cast<std::size_t>(j)] == lowest &&
             row4col[static_cast<std::size_t>(j)] == -1)) {
          lowest = shortest[static_cast<std::size_t>(j)];
          index = it;
        }
      }
      min_val = lowest;
      const Eigen::Index j = remaining[static_cast<std::size_t>(index)];
      if (row4col[static_cast<std::size_t>(j)] == -1) {
        sink = j;
      } else {
        i = row4col[static_cast<std::size_t>(j)];
      }
      in_cols[static_cast<std::size_t>(j)] = 1;
      remaining[static_cast<std::size_t>(index)] =
          remaining[static_cast<std::size_t>(--num_remaining)];
    }

    u[static_cast<std::size_t>(cur)] += min_val;
    for (Eigen::Index k = 0; k < n; ++k) {
      if (in_rows[static_cast<std::size_t>(k)] && k != cur) {
        u[static_cast<std::size_t>(k)] +=
            min_val -
            shortest[static_cast<std::size_t>(col4row[static_cast<std::size_t>(k)])];
      }
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      if (in_cols[static_cast<std::size_t>(j)]) {
        v[static_cast<std::size_t>(j)] -=
            min_val - shortest[static_cast<std::size_t>(j)];
      }
    }

    Eigen::Index j = sink;
    while (true) {
      const Eigen::Index r = path[static_cast<std::size_t>(j)];
      row4col[static_cast<std::size_t>(j)] = r;
      std::swap(col4row[static_cast<std::size_t>(r)], j);
      if (r == cur) break;
    }
  }
  return col4row;
}

}  // namespace detail

// Exact squared 2-Wasserstein distance between the uniform measures on Y and
// Z: the optimal plan is an assignment, solved in O(n^3).
inline AssignmentResult assignment_w2(const Support& y, const Support& z) {
  if (y.n() != z.n() || y.dim() != z.dim()) {
    throw DimensionError("assignment_w2: supports must share n and d");
  }
  const Eigen::Index n = y.n();
  Eigen::MatrixXd cost(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    cost.row(k) =
        (z.points().rowwise() - y.points().row(k)).rowwise().squaredNorm();
  }
  AssignmentResult res;
  res.perm = detail::solve_assignment(cost);
  for (Eigen::Index k = 0; k < n; ++k) {
    res.cost += cost(k, res.perm[static_cast<std::size_t>(k)]);
  }
  res.cost /= static_cast<double>(n);
  return res;
}

struct KantorovichResult {
  double cost = 0.0;
  TransportPlan plan;
  Eigen::VectorXd dual_f;  // potentials for alpha
  Eigen::VectorXd dual_g;  // potentials for beta
  double dual_gap = 0.0;   // |cost - (f^T alpha + g^T beta)|
  double max_dual_violation = 0.0;  // max over cells of f_i + g_j - C_ij
};

namespace detail {

// Exact transportation simplex on the dense bipartite graph. Bland-style
// pivoting: entering cell is the row-major first with negative reduced cost,
// the leaving cell is the lexicographically smallest among the minimizers on
// the cycle, so the walk terminates despite degeneracy.
class TransportSimplex {
 public:
  TransportSimplex(const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta,
                   const Eigen::MatrixXd& cost)
      : n_(alpha.size()),
        m_(beta.size()),
        cost_(cost),
        plan_(Eigen::MatrixXd::Zero(n_, m_)),
        basic_(Eigen::Matrix<char, Eigen::Dynamic, Eigen::Dynamic>::Zero(n_, m_)),
        u_(n_),
        v_(m_) {
    northwest_init(alpha, beta);
    const double tol = 1e-11 * (1.0 + cost_.cwiseAbs().maxCoeff());
    const long max_pivots = 200L * static_cast<long>(n_ + m_) *
                            static_cast<long>(n_ * m_) + 1000L;
    for (long it = 0; it < max_pivots; ++it) {
      compute_duals();
      Eigen::Index ei = -1;
      Eigen::Index ej = -1;
      for (Eigen::Index i = 0; i < n_ && ei == -1; ++i) {
        for (Eigen::Index j = 0; j < m_; ++j) {
          if (!basic_(i, j) && cost_(i, j) - u_(i) - v_(j) < -tol) {
            ei = i;
            ej = j;
            break;
          }
        }
      }
      if (ei == -1) return;  // optimal
      pivot(ei, ej);
    }
    throw std::runtime_error("kantorovich_exact: pivot limit exceeded");
  }

  const Eigen::MatrixXd& plan() const { return plan_; }
  const Eigen::VectorXd& u() const { return u_; }
  const Eigen::VectorXd& v() const { return v_; }

 private:
  void northwest_init(const Eigen::VectorXd& alpha,
                      const Eigen::VectorXd& beta) {
    Eigen::VectorXd a = alpha;
    Eigen::VectorXd b = beta;
    Eigen::Index i = 0;
    Eigen::Index j = 0;
    while (true) {
      const double t = std::min(a(i), b(j));
      plan_(i, j) = t;
      basic_(i, j) = 1;
      a(i) -= t;
      b(j) -= t;
      if (i == n_ - 1 && j == m_ - 1) break;
      // advance one index at a time so the basis keeps n + m - 1 cells
      if (j == m_ - 1 || (a(i) <= b(j) && i < n_ - 1)) {
        ++i;
      } else {
        ++j;
      }
    }
  }

  // Duals from the basis tree: u_i + v_j = C_ij on basic cells, u_0 = 0.
  void compute_duals() {
    std::vector<char> row_done(static_cast<std::size_t>(n_), 0);
    std::vector<char> col_done(static_cast<std::size_t>(m_), 0);
    std::deque<Eigen::Index> queue;  // rows as i, columns as n_ + j
    u_(0) = 0.0;
    row_done[0] = 1;
    queue.push_back(0);
    while (!queue.empty()) {
      const Eigen::Index node = queue.front();
      queue.pop_front();
      if (node < n_) {
        const Eigen::Index i = node;
        for (Eigen::Index j = 0; j < m_; ++j) {
          if (basic_(i, j) && !col_done[static_cast<std::size_t>(j)]) {
            v_(j) = cost_(i, j) - u_(i);
            col_done[static_cast<std::size_t>(j)] = 1;
            queue.push_back(n_ + j);
          }
        }
      } else {
        const Eigen::Index j = node - n_;
        for (Eigen::Index i = 0; i < n_; ++i) {
          if (basic_(i, j) && !row_done[static_cast<std::size_t>(i)]) {
            u_(i) = cost_(i, j) - v_(j);
            row_done[static_cast<std::size_t>(i)] = 1;
            queue.push_back(i);
          }
        }
      }
    }
  }

  // Path of basic cells from row `si` to column `sj` in the basis tree.
  std::vector<std::pair<Eigen::Index, Eigen::Index>> tree_path(
      Eigen::Index si, Eigen::Index sj) const {
    const Eigen::Index total = n_ + m_;
    std::vector<Eigen::Index> parent(static_cast<std::size_t>(total), -2);
    std::deque<Eigen::Index> queue;
    parent[static_cast<std::size_t>(si)] = -1;
    queue.push_back(si);
    const Eigen::Index target = n_ + sj;
    while (!queue.empty()) {
      const Eigen::Index node = queue.front();
      queue.pop_front();
      if (node == target) break;
      if (node < n_) {
        for (Eigen::Index j = 0; j < m_; ++j) {
          if (basic_(node, j) && parent[static_cast<std::size_t>(n_ + j)] == -2) {
            parent[static_cast<std::size_t>(n_ + j)] = node;
            queue.push_back(n_ + j);
          }
        }
      } else {
        const Eigen::Index j = node - n_;
        for (Eigen::Index i = 0; i < n_; ++i) {
          if (basic_(i, j) && parent[static_cast<std::size_t>(i)] == -2) {
            parent[static_cast<std::size_t>(i)] = n_ + j;
            queue.push_back(i);
          }
        }
      }
    }
    std::vector<std::pair<Eigen::Index, Eigen::Index>> path;
    Eigen::Index node = target;
    while (parent[static_cast<std::size_t>(node)] != -1) {
      const Eigen::Index par = parent[static_cast<std::size_t>(node)];
      if (node < n_) {
        path.emplace_back(node, par - n_);
      } else {
        path.emplace_back(par, node - n_);
      }
      node = par;
    }
    std::reverse(path.begin(), path.end());
    return path;
  }

  void pivot(Eigen::Index ei, Eigen::Index ej) {
    const auto path = tree_path(ei, ej);
    // Cells at even positions gain flow, odd positions lose it; the entering
    // cell is the final "+" closing the cycle.
    double delta = std::numeric_limits<double>::infinity();
    Eigen::Index li = -1;
    Eigen::Index lj = -1;
    for (std::size_t t = 0; t < path.size(); t += 2) {
      const auto [i, j] = path[t];
      const double value = plan_(i, j);
      if (value < delta ||
          (value == delta && (i < li || (i == li && j < lj)))) {
        delta = value;
        li = i;
        lj = j;
      }
    }
    for (std::size_t t = 0; t < path.size(); ++t) {
      const auto [i, j] = path[t];
      plan_(i, j) += (t % 2 == 0) ? -delta : delta;
    }
    plan_(ei, ej) += delta;
    plan_(li, lj) = 0.0;
    basic_(li, lj) = 0;
    basic_(ei, ej) = 1;
  }

  Eigen::Index n_;
  Eigen::Index m_;
  Eigen::MatrixXd cost_;
  Eigen::MatrixXd plan_;
  Eigen::Matrix<char, Eigen::Dynamic, Eigen::Dynamic> basic_;
  Eigen::VectorXd u_;
  Eigen::VectorXd v_;
};

}  // namespace detail

// Exact optimum of the discrete Kantorovich problem over plans with marginals
// (alpha, beta), with the optimal dual potentials as certificate. Desk-scale
// only: instances beyond the size guard are rejected.
inline KantorovichResult kantorovich_exact(const WeightVector& alpha,
                                           const WeightVector& beta,
                                           const CostMatrix& cost,
                                           Eigen::Index size_guard = 400) {
  const Eigen::Index n = alpha.size();
  const Eigen::Index m = beta.size();
  if (cost.rows() != n || cost.cols() != m) {
    throw DimensionError("kantorovich_exact: cost shape mismatch");
  }
  if (n * m > size_guard) {
    throw SizeGuardError("kantorovich_exact: instance exceeds size guard");
  }
  if (cost.minCoeff() < 0.0) {
    throw std::invalid_argument("kantorovich_exact: cost entries must be >= 0");
  }
  detail::TransportSimplex simplex(alpha.w(), beta.w(), cost);
  KantorovichResult res;
  res.plan.pi = simplex.plan();
  res.dual_f = simplex.u();
  res.dual_g = simplex.v();
  res.cost = res.plan.pi.cwiseProduct(cost).sum();
  const double dual_value =
      res.dual_f.dot(alpha.w()) + res.dual_g.dot(beta.w());
  res.dual_gap = std::abs(res.cost - dual_value);
  res.max_dual_violation =
      ((res.dual_f.replicate(1, m) + res.dual_g.transpose().replicate(n, 1)) -
       cost)
          .maxCoeff();
  return res;
}

struct StabilityGap {
  double lhs = 0.0;
  double rhs_inf = 0.0;
  double rhs_fro = 0.0;
};

// Both sides of the Wasserstein-cost stability inequalities for a perturbed
// instance: |W - W_bar| against the sup-norm and Frobenius bounds.
inline StabilityGap stability_gap(const WeightVector& alpha,
                                  const WeightVector& beta, const CostMatrix& c,
                                  const WeightVector& alpha2,
                                  const WeightVector& beta2,
                                  const CostMatrix& c2) {
  if (!alpha.strictly_positive() || !beta.strictly_positive() ||
      !alpha2.strictly_positive() || !beta2.strictly_positive()) {
    throw std::invalid_argument("stability_gap: weights must be positive");
  }
  if (alpha.size() != alpha2.size() || beta.size() != beta2.size()) {
    throw DimensionError("stability_gap: weight sizes mismatch");
  }
  const KantorovichResult w1 = kantorovich_exact(alpha, beta, c);
  const KantorovichResult w2 = kantorovich_exact(alpha2, beta2, c2);
  StabilityGap gap;
  gap.lhs = std::abs(w1.cost - w2.cost);
  const Eigen::MatrixXd dc = c - c2;
  const double da1 = (alpha.w() - alpha2.w()).lpNorm<1>();
  const double db1 = (beta.w() - beta2.w()).lpNorm<1>();
  gap.rhs_inf = dc.cwiseAbs().maxCoeff() +
                c.cwiseAbs().maxCoeff() * (da1 + db1);
  const double da2 = (alpha.w() - alpha2.w()).norm();
  const double db2 = (beta.w() - beta2.w()).norm();
  gap.rhs_fro = dc.norm() + c.norm() * (da2 + db2);
  return gap;
}

}  // namespace swlab
