#pragma once

#include <optional>

#include <Eigen/Core>

#include "optrack/program.hpp"

namespace optrack {

/// Hessian of the Lagrangian f + mu'g in z. Constant in z because g is bilinear.
Eigen::MatrixXd lagrangian_hessian(const MultiConvexProgram& prog, const Eigen::VectorXd& mu);

/// Local active-set Newton iteration on the generalized equation. The active
/// bounds are read off the projection in the natural residual, fixed, and the
/// remaining KKT equations are solved by Newton steps. Returns the point once
/// kkt_residual < tol and the reduced Hessian of the Lagrangian is positive
/// semidefinite there. Returns nullopt when it stalls, diverges, lands on a
/// saddle, or meets a set it cannot linearise (a ball constraint that is active).
std::optional<PrimalDualPoint> newton_polish(const MultiConvexProgram& prog,
                                             const PrimalDualPoint& w, const Eigen::VectorXd& s,
                                             double tol, int max_iterations = 20);

}  // namespace optrack
