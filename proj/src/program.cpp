#include "optrack/program.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "optrack/errors.hpp"

namespace optrack {

namespace {

constexpr double kSymmetryTol = 1e-12;
constexpr double kPsdTol = 1e-10;

std::string block_name(int i) { return "block " + std::to_string(i); }

bool is_psd(const Eigen::MatrixXd& A) {
  const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
  Eigen::MatrixXd shifted = A;
  shifted.diagonal().array() += kPsdTol * scale;
  Eigen::LLT<Eigen::MatrixXd> llt(shifted);
  if (llt.info() == Eigen::Success) return true;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff() >= -kPsdTol * scale;
}

}  // namespace

BilinearConstraint::BilinearConstraint(int rows, int param_dim)
    : rows_(rows), S_(Eigen::MatrixXd::Zero(rows, param_dim)), t_(Eigen::VectorXd::Zero(rows)) {
  if (rows < 0 || param_dim < 0) {
    throw ModelError("constraint needs non-negative row and parameter counts");
  }
}

void BilinearConstraint::add_bilinear(int row, int block_a, int index_a, int block_b,
                                      int index_b, double coeff) {
  if (row < 0 || row >= rows_) {
    throw DimensionError("bilinear term row " + std::to_string(row) + " out of range");
  }
  if (block_a == block_b) {
    throw ModelError("bilinear term couples " + block_name(block_a) +
                     " with itself; only cross-block products are multilinear");
  }
  if (block_a > block_b) {
    std::swap(block_a, block_b);
    std::swap(index_a, index_b);
  }
  bilinear_.push_back({row, block_a, index_a, block_b, index_b, coeff});
}

void BilinearConstraint::add_linear(int row, int block, int index, double coeff) {
  if (row < 0 || row >= rows_) {
    throw DimensionError("linear term row " + std::to_string(row) + " out of range");
  }
  linear_.push_back({row, block, index, coeff});
}

MultiConvexProgram::MultiConvexProgram(BlockLayout layout, QuadraticObjective objective,
                                       BilinearConstraint constraint, std::vector<ConvexSet> sets)
    : layout_(std::move(layout)),
      objective_(std::move(objective)),
      constraint_(std::move(constraint)),
      sets_(std::move(sets)) {
  const int n = layout_.total();
  const int P = layout_.num_blocks();
  if (P < 1) throw ModelError("program needs at least one block");

  auto& H = objective_.H;
  if (H.rows() != n || H.cols() != n) {
    throw DimensionError("objective H is " + std::to_string(H.rows()) + "x" +
                         std::to_string(H.cols()) + ", expected " + std::to_string(n) + "x" +
                         std::to_string(n));
  }
  if (objective_.h.size() != n) {
    throw DimensionError("objective h has length " + std::to_string(objective_.h.size()) +
                         ", expected " + std::to_string(n));
  }
  if (!H.allFinite() || !objective_.h.allFinite() || !std::isfinite(objective_.c0)) {
    throw ModelError("objective has non-finite coefficients");
  }
  if (n > 0) {
    const double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
    if ((H - H.transpose()).cwiseAbs().maxCoeff() > kSymmetryTol * scale) {
      throw ModelError("objective H is not symmetric");
    }
  }
  for (int i = 0; i < P; ++i) {
    const auto Hii = H.block(layout_.offset(i), layout_.offset(i), layout_.size(i), layout_.size(i));
    if (!is_psd(Hii)) {
      throw ModelError("diagonal objective block of " + block_name(i) +
                       " is not positive semidefinite; f is not convex in that block");
    }
  }

  if (static_cast<int>(sets_.size()) != P) {
    throw DimensionError("program has " + std::to_string(P) + " blocks but " +
                         std::to_string(sets_.size()) + " sets");
  }
  for (int i = 0; i < P; ++i) {
    if (sets_[static_cast<std::size_t>(i)].dimension() != layout_.size(i)) {
      throw DimensionError("set of " + block_name(i) + " has dimension " +
                           std::to_string(sets_[static_cast<std::size_t>(i)].dimension()) +
                           ", block has size " + std::to_string(layout_.size(i)));
    }
  }

  const int m = constraint_.rows();
  if (constraint_.S().rows() != m || constraint_.t().size() != m) {
    throw DimensionError("constraint S/t row count disagrees with the number of rows");
  }
  if (!constraint_.S().allFinite() || !constraint_.t().allFinite()) {
    throw ModelError("constraint has non-finite parameter map");
  }
  bilinear_by_block_.assign(static_cast<std::size_t>(P), {});
  linear_by_block_.assign(static_cast<std::size_t>(P), {});
  auto check_index = [&](int block, int index, const char* what) {
    if (block < 0 || block >= P || index < 0 || index >= layout_.size(block)) {
      throw DimensionError(std::string(what) + " references " + block_name(block) + " index " +
                           std::to_string(index) + " outside the layout");
    }
  };
  const auto& bil = constraint_.bilinear_terms();
  for (std::size_t k = 0; k < bil.size(); ++k) {
    check_index(bil[k].block_a, bil[k].index_a, "bilinear term");
    check_index(bil[k].block_b, bil[k].index_b, "bilinear term");
    if (!std::isfinite(bil[k].coeff)) throw ModelError("bilinear term has non-finite coefficient");
    bilinear_by_block_[static_cast<std::size_t>(bil[k].block_a)].push_back(static_cast<int>(k));
    bilinear_by_block_[static_cast<std::size_t>(bil[k].block_b)].push_back(static_cast<int>(k));
  }
  const auto& lin = constraint_.linear_terms();
  for (std::size_t k = 0; k < lin.size(); ++k) {
    check_index(lin[k].block, lin[k].index, "linear term");
    if (!std::isfinite(lin[k].coeff)) throw ModelError("linear term has non-finite coefficient");
    linear_by_block_[static_cast<std::size_t>(lin[k].block)].push_back(static_cast<int>(k));
  }
}

void check_point(const MultiConvexProgram& prog, const BlockVector& z) {
  const auto& want = prog.layout();
  const auto& got = z.layout();
  if (got.num_blocks() != want.num_blocks()) {
    throw DimensionError("point has " + std::to_string(got.num_blocks()) + " blocks, program has " +
                         std::to_string(want.num_blocks()));
  }
  for (int i = 0; i < want.num_blocks(); ++i) {
    if (got.size(i) != want.size(i)) {
      throw DimensionError(block_name(i) + " has size " + std::to_string(got.size(i)) +
                           ", program expects " + std::to_string(want.size(i)));
    }
  }
}

void check_multiplier(const MultiConvexProgram& prog, const Eigen::VectorXd& mu) {
  if (mu.size() != prog.num_rows()) {
    throw DimensionError("multiplier has length " + std::to_string(mu.size()) + ", program has " +
                         std::to_string(prog.num_rows()) + " constraint rows");
  }
}

void check_parameter(const MultiConvexProgram& prog, const Eigen::VectorXd& s) {
  if (s.size() != prog.param_dim()) {
    throw DimensionError("parameter has length " + std::to_string(s.size()) + ", program expects " +
                         std::to_string(prog.param_dim()));
  }
}

PrimalDualPoint zero_point(const MultiConvexProgram& prog) {
  return {BlockVector(prog.layout()), Eigen::VectorXd::Zero(prog.num_rows())};
}

double evaluate_objective(const MultiConvexProgram& prog, const BlockVector& z) {
  check_point(prog, z);
  const auto& obj = prog.objective();
  const auto& x = z.data();
  return 0.5 * x.dot(obj.H * x) + obj.h.dot(x) + obj.c0;
}

Eigen::VectorXd objective_gradient(const MultiConvexProgram& prog, const BlockVector& z) {
  check_point(prog, z);
  const auto& obj = prog.objective();
  return obj.H * z.data() + obj.h;
}

Eigen::VectorXd evaluate_constraint(const MultiConvexProgram& prog, const BlockVector& z,
                                    const Eigen::VectorXd& s) {
  check_point(prog, z);
  check_parameter(prog, s);
  const auto& con = prog.constraint();
  Eigen::VectorXd g = con.t();
  if (con.param_dim() > 0) g.noalias() += con.S() * s;
  for (const auto& term : con.linear_terms()) {
    g[term.row] += term.coeff * z.block(term.block)[term.index];
  }
  for (const auto& term : con.bilinear_terms()) {
    g[term.row] += term.coeff * z.block(term.block_a)[term.index_a] * z.block(term.block_b)[term.index_b];
  }
  return g;
}

Eigen::MatrixXd constraint_jacobian(const MultiConvexProgram& prog, const BlockVector& z) {
  check_point(prog, z);
  const auto& layout = prog.layout();
  const auto& con = prog.constraint();
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(con.rows(), layout.total());
  for (const auto& term : con.linear_terms()) {
    J(term.row, layout.offset(term.block) + term.index) += term.coeff;
  }
  for (const auto& term : con.bilinear_terms()) {
    const double za = z.block(term.block_a)[term.index_a];
    const double zb = z.block(term.block_b)[term.index_b];
    J(term.row, layout.offset(term.block_a) + term.index_a) += term.coeff * zb;
    J(term.row, layout.offset(term.block_b) + term.index_b) += term.coeff * za;
  }
  return J;
}

BlockAffine block_affine_constraint(const MultiConvexProgram& prog, int block,
                                    const BlockVector& z, const Eigen::VectorXd& s) {
  prog.layout().check_block(block);
  check_point(prog, z);
  check_parameter(prog, s);
  const auto& con = prog.constraint();
  BlockAffine out{Eigen::MatrixXd::Zero(con.rows(), prog.layout().size(block)), con.t()};
  if (con.param_dim() > 0) out.e.noalias() += con.S() * s;
  for (const auto& term : con.linear_terms()) {
    if (term.block == block) {
      out.E(term.row, term.index) += term.coeff;
    } else {
      out.e[term.row] += term.coeff * z.block(term.block)[term.index];
    }
  }
  for (const auto& term : con.bilinear_terms()) {
    if (term.block_a == block) {
      out.E(term.row, term.index_a) += term.coeff * z.block(term.block_b)[term.index_b];
    } else if (term.block_b == block) {
      out.E(term.row, term.index_b) += term.coeff * z.block(term.block_a)[term.index_a];
    } else {
      out.e[term.row] +=
          term.coeff * z.block(term.block_a)[term.index_a] * z.block(term.block_b)[term.index_b];
    }
  }
  return out;
}

BlockQuadratic block_quadratic_objective(const MultiConvexProgram& prog, int block,
                                         const BlockVector& z) {
  const auto& layout = prog.layout();
  layout.check_block(block);
  check_point(prog, z);
  const auto& obj = prog.objective();
  const int off = layout.offset(block);
  const int ni = layout.size(block);

  // Off-block part of z with block i zeroed.
  Eigen::VectorXd rest = z.data();
  rest.segment(off, ni).setZero();

  BlockQuadratic out;
  out.H = obj.H.block(off, off, ni, ni);
  out.h = obj.h.segment(off, ni) + obj.H.middleRows(off, ni) * rest;
  out.c = 0.5 * rest.dot(obj.H * rest) + obj.h.dot(rest) + obj.c0;
  return out;
}

double augmented_lagrangian(const MultiConvexProgram& prog, const BlockVector& z,
                            const Eigen::VectorXd& mu, const Eigen::VectorXd& s, double rho) {
  if (!(rho > 0.0)) throw ModelError("augmented Lagrangian needs rho > 0");
  check_multiplier(prog, mu);
  const Eigen::VectorXd g = evaluate_constraint(prog, z, s);
  return evaluate_objective(prog, z) + (mu + 0.5 * rho * g).dot(g);
}

Eigen::VectorXd kkt_map(const MultiConvexProgram& prog, const PrimalDualPoint& w,
                        const Eigen::VectorXd& s) {
  check_multiplier(prog, w.mu);
  const int n = prog.layout().total();
  Eigen::VectorXd F(n + prog.num_rows());
  F.head(n) = objective_gradient(prog, w.z);
  if (prog.num_rows() > 0) {
    F.head(n).noalias() += constraint_jacobian(prog, w.z).transpose() * w.mu;
  }
  F.tail(prog.num_rows()) = evaluate_constraint(prog, w.z, s);
  return F;
}

double kkt_residual(const MultiConvexProgram& prog, const PrimalDualPoint& w,
                    const Eigen::VectorXd& s) {
  const Eigen::VectorXd F = kkt_map(prog, w, s);
  const auto& layout = prog.layout();
  double sq = 0.0;
  for (int i = 0; i < layout.num_blocks(); ++i) {
    const auto zi = w.z.block(i);
    const Eigen::VectorXd step = zi - F.segment(layout.offset(i), layout.size(i));
    sq += (zi - project(prog.set(i), step)).squaredNorm();
  }
  // The multiplier component is unconstrained, so its residual is g itself.
  sq += F.tail(prog.num_rows()).squaredNorm();
  return std::sqrt(sq);
}

}  // namespace optrack
