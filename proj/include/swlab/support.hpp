#pragma once

#include <Eigen/Dense>
#include <utility>

#include "swlab/errors.hpp"

namespace swlab {

// Tolerance below which two rows of a support count as coincident.
inline constexpr double kRowDistinctTol = 1e-9;
// Orthogonality tolerance for rotation inputs.
inline constexpr double kOrthogonalTol = 1e-10;

// An n x d point cloud, one point per row: the support of the uniform
// discrete measure with n atoms. Entries are validated to be finite on
// construction; the value is immutable afterwards.
class Support {
 public:
  Support() = default;

  explicit Support(Eigen::MatrixXd pts) : points_(std::move(pts)) {
    if (points_.rows() < 1 || points_.cols() < 1) {
      throw DimensionError("Support: need n >= 1 and d >= 1");
    }
    if (!points_.allFinite()) {
      throw std::invalid_argument("Support: non-finite entry");
    }
  }

  Eigen::Index n() const { return points_.rows(); }
  Eigen::Index dim() const { return points_.cols(); }
  const Eigen::MatrixXd& points() const { return points_; }
  Eigen::VectorXd point(Eigen::Index k) const {
    return points_.row(k).transpose();
  }

 private:
  Eigen::MatrixXd points_;
};

// Max over rows of the row euclidean norm.
inline double max_row_norm(const Eigen::MatrixXd& m) {
  return m.rowwise().norm().maxCoeff();
}

inline double max_row_norm(const Support& s) { return max_row_norm(s.points()); }

// ||a - b|| in the max-row-norm sense; shapes must agree.
inline double row_norm_distance(const Eigen::MatrixXd& a,
                                const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError("row_norm_distance: shape mismatch");
  }
  return max_row_norm(Eigen::MatrixXd(a - b));
}

// True when all rows are pairwise distinct beyond `tol` (euclidean).
inline bool is_in_u(const Support& s, double tol = kRowDistinctTol) {
  const auto& pts = s.points();
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < pts.rows(); ++j) {
      if ((pts.row(i) - pts.row(j)).norm() <= tol) return false;
    }
  }
  return true;
}

// Applies an orthogonal map to every point.
inline Support rotate(const Support& s, const Eigen::MatrixXd& rot) {
  const Eigen::Index d = s.dim();
  if (rot.rows() != d || rot.cols() != d) {
    throw DimensionError("rotate: matrix must be d x d");
  }
  const Eigen::MatrixXd gram = rot.transpose() * rot;
  if ((gram - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff() >
      kOrthogonalTol) {
    throw std::invalid_argument("rotate: matrix is not orthogonal");
  }
  return Support(s.points() * rot.transpose());
}

}  // namespace swlab
