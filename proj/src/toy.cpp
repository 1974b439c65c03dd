#include "optrack/toy.hpp"

namespace optrack {

MultiConvexProgram toy_program() {
  QuadraticObjective objective{2.0 * Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Constant(2, -2.0),
                               2.0};
  BilinearConstraint g(1, 1);
  g.add_bilinear(0, 0, 0, 1, 0, 1.0);
  g.S()(0, 0) = -1.0;
  const Eigen::VectorXd lo = Eigen::VectorXd::Zero(1);
  const Eigen::VectorXd hi = Eigen::VectorXd::Constant(1, 2.0);
  return MultiConvexProgram(BlockLayout({1, 1}), std::move(objective), std::move(g),
                            {ConvexSet::box(lo, hi), ConvexSet::box(lo, hi)});
}

}  // namespace optrack
