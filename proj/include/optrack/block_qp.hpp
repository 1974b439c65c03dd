#pragma once

#include <Eigen/Core>

#include "optrack/convex_set.hpp"

namespace optrack {

/// Outcome of a set-constrained strictly convex QP solve.
struct BlockQpResult {
  Eigen::VectorXd x;
  int iterations = 0;
  double projected_gradient = 0.0;  // ||x - Pi(x - (Kx + b))||_inf at return
};

/// argmin_{x in set} 1/2 x'Kx + b'x for symmetric positive definite K.
///
/// Box and orthant sets use a projected-Newton active-set iteration that
/// terminates once the active set settles, so the returned point is the exact
/// minimiser up to the linear solve. Balls are solved through the secular
/// equation on the eigenbasis of K. `start` seeds the box iteration and must
/// have the set's dimension; every iterate is feasible and the objective never
/// increases from Pi(start).
BlockQpResult minimize_quadratic_over_set(const ConvexSet& set, const Eigen::MatrixXd& K,
                                          const Eigen::VectorXd& b, const Eigen::VectorXd& start);

}  // namespace optrack
