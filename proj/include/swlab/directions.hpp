#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "swlab/errors.hpp"
#include "swlab/rng.hpp"

namespace swlab {

// p unit vectors of S^{d-1}, one per row. Regenerable bit-identically from
// (seed, p, d).
struct DirectionSet {
  Eigen::MatrixXd axes;  // p x d
  std::uint64_t seed = 0;

  Eigen::Index p() const { return axes.rows(); }
  Eigen::Index dim() const { return axes.cols(); }
};

// i.i.d. uniform directions obtained by normalizing standard gaussian draws.
inline DirectionSet sample_sphere(Eigen::Index d, Eigen::Index p,
                                  std::uint64_t seed) {
  if (d < 1 || p < 1) throw DimensionError("sample_sphere: need d, p >= 1");
  Rng rng(seed);
  Eigen::MatrixXd axes(p, d);
  for (Eigen::Index i = 0; i < p; ++i) {
    double norm = 0.0;
    do {
      for (Eigen::Index j = 0; j < d; ++j) axes(i, j) = rng.gaussian();
      norm = axes.row(i).norm();
    } while (norm < 1e-300);  // zero-norm draw: redraw
    axes.row(i) /= norm;
  }
  return DirectionSet{std::move(axes), seed};
}

// Single fresh direction from an existing stream.
inline Eigen::VectorXd sample_direction(Eigen::Index d, Rng& rng) {
  Eigen::VectorXd theta(d);
  double norm = 0.0;
  do {
    for (Eigen::Index j = 0; j < d; ++j) theta(j) = rng.gaussian();
    norm = theta.norm();
  } while (norm < 1e-300);
  return theta / norm;
}

}  // namespace swlab
