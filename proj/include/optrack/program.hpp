#pragma once

#include <vector>

#include <Eigen/Core>

#include "optrack/block_vector.hpp"
#include "optrack/convex_set.hpp"

namespace optrack {

/// f(z) = 1/2 z'Hz + h'z + c0. Only the diagonal blocks H_ii need to be PSD.
struct QuadraticObjective {
  Eigen::MatrixXd H;
  Eigen::VectorXd h;
  double c0 = 0.0;
};

/// coeff * z_a[index_a] * z_b[index_b] added to constraint row `row`; block_a < block_b.
struct BilinearTerm {
  int row;
  int block_a;
  int index_a;
  int block_b;
  int index_b;
  double coeff;
};

/// coeff * z_block[index] added to constraint row `row`.
struct LinearTerm {
  int row;
  int block;
  int index;
  double coeff;
};

/// g(z, s) = sum of pairwise bilinear terms + sum of linear terms + S s + t.
/// Affine in every single block and in the parameter s.
class BilinearConstraint {
 public:
  BilinearConstraint() = default;
  BilinearConstraint(int rows, int param_dim);

  /// Blocks may be given in either order; equal blocks are rejected since the
  /// term would be quadratic in that block.
  void add_bilinear(int row, int block_a, int index_a, int block_b, int index_b, double coeff);
  void add_linear(int row, int block, int index, double coeff);

  int rows() const { return rows_; }
  int param_dim() const { return static_cast<int>(S_.cols()); }

  const std::vector<BilinearTerm>& bilinear_terms() const { return bilinear_; }
  const std::vector<LinearTerm>& linear_terms() const { return linear_; }

  Eigen::MatrixXd& S() { return S_; }
  const Eigen::MatrixXd& S() const { return S_; }
  Eigen::VectorXd& t() { return t_; }
  const Eigen::VectorXd& t() const { return t_; }

 private:
  int rows_ = 0;
  std::vector<BilinearTerm> bilinear_;
  std::vector<LinearTerm> linear_;
  Eigen::MatrixXd S_;
  Eigen::VectorXd t_;
};

/// minimise f(z) s.t. g(z, s) = 0, z_i in Z_i.
///
/// Immutable after construction. The constructor validates every structural
/// invariant (symmetry of H, PSD diagonal blocks, term indices, set sizes)
/// and throws ModelError / DimensionError otherwise.
class MultiConvexProgram {
 public:
  MultiConvexProgram(BlockLayout layout, QuadraticObjective objective,
                     BilinearConstraint constraint, std::vector<ConvexSet> sets);

  const BlockLayout& layout() const { return layout_; }
  const QuadraticObjective& objective() const { return objective_; }
  const BilinearConstraint& constraint() const { return constraint_; }
  const std::vector<ConvexSet>& sets() const { return sets_; }
  const ConvexSet& set(int block) const { return sets_.at(static_cast<std::size_t>(block)); }

  int num_blocks() const { return layout_.num_blocks(); }
  int num_rows() const { return constraint_.rows(); }
  int param_dim() const { return constraint_.param_dim(); }

  /// Indices into constraint().bilinear_terms() touching `block`.
  const std::vector<int>& bilinear_touching(int block) const {
    return bilinear_by_block_.at(static_cast<std::size_t>(block));
  }
  /// Indices into constraint().linear_terms() on `block`.
  const std::vector<int>& linear_on(int block) const {
    return linear_by_block_.at(static_cast<std::size_t>(block));
  }

 private:
  BlockLayout layout_;
  QuadraticObjective objective_;
  BilinearConstraint constraint_;
  std::vector<ConvexSet> sets_;
  std::vector<std::vector<int>> bilinear_by_block_;
  std::vector<std::vector<int>> linear_by_block_;
};

struct BlockAffine {
  Eigen::MatrixXd E;  // m x n_i
  Eigen::VectorXd e;  // m
};

struct BlockQuadratic {
  Eigen::MatrixXd H;  // n_i x n_i
  Eigen::VectorXd h;
  double c = 0.0;
};

double evaluate_objective(const MultiConvexProgram& prog, const BlockVector& z);
Eigen::VectorXd objective_gradient(const MultiConvexProgram& prog, const BlockVector& z);

Eigen::VectorXd evaluate_constraint(const MultiConvexProgram& prog, const BlockVector& z,
                                    const Eigen::VectorXd& s);
/// Dense m x n_z Jacobian of g with respect to z.
Eigen::MatrixXd constraint_jacobian(const MultiConvexProgram& prog, const BlockVector& z);

/// g(z', s) = E z'_i + e for every z' equal to z off block i.
BlockAffine block_affine_constraint(const MultiConvexProgram& prog, int block,
                                    const BlockVector& z, const Eigen::VectorXd& s);

/// f restricted to block i with the other blocks frozen at z.
BlockQuadratic block_quadratic_objective(const MultiConvexProgram& prog, int block,
                                         const BlockVector& z);

/// L_rho(z, mu, s) = f(z) + (mu + rho/2 g)'g.
double augmented_lagrangian(const MultiConvexProgram& prog, const BlockVector& z,
                            const Eigen::VectorXd& mu, const Eigen::VectorXd& s, double rho);

/// F(w, s) = (grad f + Jg' mu ; g).
Eigen::VectorXd kkt_map(const MultiConvexProgram& prog, const PrimalDualPoint& w,
                        const Eigen::VectorXd& s);

/// Natural residual ||w - Pi_{Z x R^m}(w - F(w, s))||_2 of the generalized equation
/// 0 in F(w, s) + N_{Z x R^m}(w). Zero exactly at critical points.
double kkt_residual(const MultiConvexProgram& prog, const PrimalDualPoint& w,
                    const Eigen::VectorXd& s);

/// Throws DimensionError naming the first block whose size disagrees with the program.
void check_point(const MultiConvexProgram& prog, const BlockVector& z);
void check_multiplier(const MultiConvexProgram& prog, const Eigen::VectorXd& mu);
void check_parameter(const MultiConvexProgram& prog, const Eigen::VectorXd& s);

/// Zero-initialised point with the program's dimensions.
PrimalDualPoint zero_point(const MultiConvexProgram& prog);

}  // namespace optrack
