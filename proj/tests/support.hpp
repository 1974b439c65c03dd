#pragma once

#include <random>
#include <vector>

#include <Eigen/Core>

#include "optrack/program.hpp"

namespace optrack::testing {

using Rng = std::mt19937_64;

struct RandomSpec {
  int max_blocks = 3;
  int max_block_size = 4;
  int max_rows = 3;
  int param_dim = 2;
  bool strongly_convex = false;  // H = G G' + I instead of block-PSD only
  bool boxes_only = false;       // every set a bounded box
  double coupling = 1.0;         // scale of bilinear coefficients
};

double uniform(Rng& rng, double lo, double hi);
Eigen::VectorXd uniform_vector(Rng& rng, int n, double lo, double hi);

MultiConvexProgram random_program(Rng& rng, const RandomSpec& spec = {});

/// A point inside every block set.
BlockVector random_feasible_point(Rng& rng, const MultiConvexProgram& prog);

/// Sum over monomials, written independently of the library's assembly.
double brute_force_objective(const MultiConvexProgram& prog, const BlockVector& z);
Eigen::VectorXd brute_force_constraint(const MultiConvexProgram& prog, const BlockVector& z,
                                       const Eigen::VectorXd& s);

}  // namespace optrack::testing
