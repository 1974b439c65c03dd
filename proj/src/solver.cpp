#include "optrack/solver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <utility>

#include <Eigen/Cholesky>

#include "optrack/block_qp.hpp"
#include "optrack/errors.hpp"
#include "optrack/kkt_newton.hpp"

namespace optrack {

namespace {

bool is_multiple_of_identity(const Eigen::MatrixXd& A, double& c) {
  c = A.diagonal().mean();
  const double tol = 1e-14 * std::max(1.0, std::abs(c));
  Eigen::MatrixXd diff = A;
  diff.diagonal().array() -= c;
  return diff.cwiseAbs().maxCoeff() <= tol;
}

void require_finite(const Eigen::VectorXd& v, const std::string& where) {
  if (!v.allFinite()) throw NumericalError("non-finite iterate " + where);
}

std::vector<double> resolve_alpha(const MultiConvexProgram& prog, const std::vector<double>& alpha) {
  if (!alpha.empty()) return alpha;
  return std::vector<double>(static_cast<std::size_t>(prog.num_blocks()), kDefaultAlpha);
}

}  // namespace

std::string to_string(SolverPath path) { return path == SolverPath::Direct ? "direct" : "lifted"; }

SolverPath solver_path_from_string(const std::string& name) {
  if (name == "direct") return SolverPath::Direct;
  if (name == "lifted") return SolverPath::Lifted;
  throw ModelError("unknown solver path '" + name + "' (expected direct or lifted)");
}

TrackerConfig TrackerConfig::defaults(const MultiConvexProgram& prog, double rho, int sweeps,
                                      SolverPath path) {
  return {rho, sweeps, std::vector<double>(static_cast<std::size_t>(prog.num_blocks()), kDefaultAlpha),
          path};
}

void TrackerConfig::validate(const MultiConvexProgram& prog) const {
  if (!(rho > 0.0) || !std::isfinite(rho)) throw ModelError("rho must be positive and finite");
  if (sweeps < 1) throw ModelError("the number of sweeps M must be at least 1");
  if (static_cast<int>(alpha.size()) != prog.num_blocks()) {
    throw ModelError("alpha has " + std::to_string(alpha.size()) + " entries for " +
                     std::to_string(prog.num_blocks()) + " blocks");
  }
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (!(alpha[i] > 0.0) || !std::isfinite(alpha[i])) {
      throw ModelError("alpha[" + std::to_string(i) + "] must be positive and finite");
    }
  }
}

LiftedState lifted_state_from(const MultiConvexProgram& prog, const PrimalDualPoint& w) {
  check_multiplier(prog, w.mu);
  Eigen::VectorXd grad = objective_gradient(prog, w.z);
  if (prog.num_rows() > 0) grad.noalias() += constraint_jacobian(prog, w.z).transpose() * w.mu;
  return {w.z, BlockVector(prog.layout(), -grad)};
}

TrackerState make_tracker_state(const MultiConvexProgram& prog, TrackerConfig config,
                                PrimalDualPoint warm) {
  config.validate(prog);
  check_point(prog, warm.z);
  check_multiplier(prog, warm.mu);
  TrackerState state{std::move(config), std::move(warm), std::nullopt};
  if (state.config.path == SolverPath::Lifted) state.lifted = lifted_state_from(prog, state.warm);
  return state;
}

Eigen::VectorXd block_update(const MultiConvexProgram& prog, const TrackerConfig& config,
                             int block, const BlockVector& z, const Eigen::VectorXd& mu,
                             const Eigen::VectorXd& s) {
  prog.layout().check_block(block);
  check_multiplier(prog, mu);
  const double rho = config.rho;
  const double alpha = config.alpha.at(static_cast<std::size_t>(block));
  const BlockQuadratic q = block_quadratic_objective(prog, block, z);
  const BlockAffine a = block_affine_constraint(prog, block, z, s);

  // L_rho in z_i: 1/2 z'(H_i + rho E'E)z + (h_i + E'(mu + rho e))'z + const.
  Eigen::MatrixXd curvature = q.H;
  curvature.noalias() += rho * a.E.transpose() * a.E;
  Eigen::VectorXd linear = q.h;
  linear.noalias() += a.E.transpose() * (mu + rho * a.e);
  if (!curvature.allFinite() || !linear.allFinite()) {
    throw NumericalError("non-finite block system assembled for block " + std::to_string(block));
  }

  const Eigen::VectorXd previous = z.block(block);
  const ConvexSet& set = prog.set(block);
  Eigen::VectorXd result;
  double c = 0.0;
  if (is_multiple_of_identity(curvature, c)) {
    // Spherical level sets: the constrained minimiser is a projection.
    if (c > 0.0) {
      result = prox_weighted(set, previous, alpha, -linear / c, c);
    } else {
      result = project(set, previous - linear / alpha);
    }
  } else {
    Eigen::MatrixXd K = curvature;
    K.diagonal().array() += alpha;
    result = minimize_quadratic_over_set(set, K, linear - alpha * previous, previous).x;
  }
  require_finite(result, "in block " + std::to_string(block));
  return result;
}

BlockVector sweep(const MultiConvexProgram& prog, const TrackerConfig& config, BlockVector z,
                  const Eigen::VectorXd& mu, const Eigen::VectorXd& s) {
  for (int i = 0; i < prog.num_blocks(); ++i) {
    z.block(i) = block_update(prog, config, i, z, mu, s);
  }
  return z;
}

void lifted_cycle(const MultiConvexProgram& prog, const TrackerConfig& config, BlockVector& y,
                  BlockVector& z, const BlockVector& nu, const Eigen::VectorXd& mu,
                  const Eigen::VectorXd& s) {
  check_point(prog, y);
  check_point(prog, z);
  check_point(prog, nu);
  check_multiplier(prog, mu);
  const double rho = config.rho;
  for (int i = 0; i < prog.num_blocks(); ++i) {
    const double alpha = config.alpha.at(static_cast<std::size_t>(i));
    const BlockQuadratic q = block_quadratic_objective(prog, i, y);
    const BlockAffine a = block_affine_constraint(prog, i, y, s);

    Eigen::MatrixXd K = q.H;
    K.noalias() += rho * a.E.transpose() * a.E;
    K.diagonal().array() += rho + alpha;
    Eigen::VectorXd b = q.h;
    b.noalias() += a.E.transpose() * (mu + rho * a.e);
    b += nu.block(i) - rho * z.block(i) - alpha * y.block(i);
    if (!K.allFinite() || !b.allFinite()) {
      throw NumericalError("non-finite lifted system assembled for block " + std::to_string(i));
    }
    Eigen::LLT<Eigen::MatrixXd> llt(K);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("lifted y-step matrix for block " + std::to_string(i) +
                           " is not positive definite");
    }
    y.block(i) = llt.solve(-b);

    const Eigen::VectorXd target = y.block(i) + nu.block(i) / rho;
    z.block(i) = prox_weighted(prog.set(i), z.block(i), alpha, target, rho);
  }
}

double lifted_augmented_lagrangian(const MultiConvexProgram& prog, const BlockVector& y,
                                   const BlockVector& z, const Eigen::VectorXd& mu,
                                   const BlockVector& nu, const Eigen::VectorXd& s, double rho) {
  const Eigen::VectorXd consensus = y.data() - z.data();
  return augmented_lagrangian(prog, y, mu, s, rho) +
         (nu.data() + 0.5 * rho * consensus).dot(consensus);
}

double lifted_kkt_residual(const MultiConvexProgram& prog, const BlockVector& y,
                           const BlockVector& z, const Eigen::VectorXd& mu,
                           const BlockVector& nu, const Eigen::VectorXd& s) {
  Eigen::VectorXd grad_y = objective_gradient(prog, y) + nu.data();
  if (prog.num_rows() > 0) grad_y.noalias() += constraint_jacobian(prog, y).transpose() * mu;
  double sq = grad_y.squaredNorm();
  for (int i = 0; i < prog.num_blocks(); ++i) {
    // Gradient of the lifted Lagrangian in z_i is -nu_i.
    const Eigen::VectorXd zi = z.block(i);
    sq += (zi - project(prog.set(i), zi + nu.block(i))).squaredNorm();
  }
  sq += evaluate_constraint(prog, y, s).squaredNorm();
  sq += (y.data() - z.data()).squaredNorm();
  return std::sqrt(sq);
}

double al_stationarity(const MultiConvexProgram& prog, const BlockVector& z,
                       const Eigen::VectorXd& mu, const Eigen::VectorXd& s, double rho) {
  Eigen::VectorXd grad = objective_gradient(prog, z);
  if (prog.num_rows() > 0) {
    const Eigen::VectorXd weight = mu + rho * evaluate_constraint(prog, z, s);
    grad.noalias() += constraint_jacobian(prog, z).transpose() * weight;
  }
  const auto& layout = prog.layout();
  double sq = 0.0;
  for (int i = 0; i < layout.num_blocks(); ++i) {
    const Eigen::VectorXd zi = z.block(i);
    sq += (zi - project(prog.set(i), zi - grad.segment(layout.offset(i), layout.size(i)))).squaredNorm();
  }
  return std::sqrt(sq);
}

double lifted_al_stationarity(const MultiConvexProgram& prog, const BlockVector& y,
                              const BlockVector& z, const Eigen::VectorXd& mu,
                              const BlockVector& nu, const Eigen::VectorXd& s, double rho) {
  const Eigen::VectorXd consensus = y.data() - z.data();
  Eigen::VectorXd grad_y = objective_gradient(prog, y) + nu.data() + rho * consensus;
  if (prog.num_rows() > 0) {
    const Eigen::VectorXd weight = mu + rho * evaluate_constraint(prog, y, s);
    grad_y.noalias() += constraint_jacobian(prog, y).transpose() * weight;
  }
  double sq = grad_y.squaredNorm();
  const Eigen::VectorXd grad_z = -(nu.data() + rho * consensus);
  const auto& layout = prog.layout();
  for (int i = 0; i < layout.num_blocks(); ++i) {
    const Eigen::VectorXd zi = z.block(i);
    sq += (zi - project(prog.set(i), zi - grad_z.segment(layout.offset(i), layout.size(i)))).squaredNorm();
  }
  return std::sqrt(sq);
}

StepReport track_step(const MultiConvexProgram& prog, TrackerState& state,
                      const Eigen::VectorXd& s_next) {
  const TrackerConfig& config = state.config;
  config.validate(prog);
  check_parameter(prog, s_next);
  const double rho = config.rho;
  const int M = config.sweeps;

  StepReport report;
  report.al_values.reserve(static_cast<std::size_t>(M) + 1);
  report.displacements.reserve(static_cast<std::size_t>(M));
  BlockVector z = state.warm.z;
  Eigen::VectorXd mu = state.warm.mu;
  std::optional<LiftedState> lifted = state.lifted;

  if (config.path == SolverPath::Direct) {
    report.al_values.push_back(augmented_lagrangian(prog, z, mu, s_next, rho));
    for (int l = 0; l < M; ++l) {
      BlockVector next = sweep(prog, config, z, mu, s_next);
      require_finite(next.data(), "after sweep " + std::to_string(l + 1));
      report.displacements.push_back((next.data() - z.data()).norm());
      z = std::move(next);
      report.al_values.push_back(augmented_lagrangian(prog, z, mu, s_next, rho));
    }
    mu += rho * evaluate_constraint(prog, z, s_next);
  } else {
    if (!lifted) lifted = lifted_state_from(prog, state.warm);
    BlockVector& y = lifted->y;
    BlockVector& nu = lifted->nu;
    report.al_values.push_back(lifted_augmented_lagrangian(prog, y, z, mu, nu, s_next, rho));
    for (int l = 0; l < M; ++l) {
      const Eigen::VectorXd y_prev = y.data();
      const Eigen::VectorXd z_prev = z.data();
      lifted_cycle(prog, config, y, z, nu, mu, s_next);
      require_finite(y.data(), "after lifted cycle " + std::to_string(l + 1));
      require_finite(z.data(), "after lifted cycle " + std::to_string(l + 1));
      report.displacements.push_back(
          std::sqrt((y.data() - y_prev).squaredNorm() + (z.data() - z_prev).squaredNorm()));
      report.al_values.push_back(lifted_augmented_lagrangian(prog, y, z, mu, nu, s_next, rho));
    }
    mu += rho * evaluate_constraint(prog, y, s_next);
    nu.data() += rho * (y.data() - z.data());
  }
  require_finite(mu, "in the dual update");

  report.point = {std::move(z), std::move(mu)};
  report.feasibility = evaluate_constraint(prog, report.point.z, s_next).norm();
  report.kkt_residual = kkt_residual(prog, report.point, s_next);

  state.warm = report.point;
  state.lifted = std::move(lifted);
  return report;
}

std::vector<double> lifted_alpha(const std::vector<double>& alpha) {
  std::vector<double> out = alpha;
  out.insert(out.end(), alpha.begin(), alpha.end());
  return out;
}

MultiConvexProgram lift_program(const MultiConvexProgram& prog) {
  const auto& layout = prog.layout();
  const int P = layout.num_blocks();
  const int n = layout.total();
  const int m = prog.num_rows();
  const auto& con = prog.constraint();

  std::vector<int> sizes = layout.sizes();
  sizes.insert(sizes.end(), layout.sizes().begin(), layout.sizes().end());

  QuadraticObjective obj;
  obj.H = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  obj.H.topLeftCorner(n, n) = prog.objective().H;
  obj.h = Eigen::VectorXd::Zero(2 * n);
  obj.h.head(n) = prog.objective().h;
  obj.c0 = prog.objective().c0;

  BilinearConstraint lifted(m + n, con.param_dim());
  for (const auto& t : con.bilinear_terms()) {
    lifted.add_bilinear(t.row, t.block_a, t.index_a, t.block_b, t.index_b, t.coeff);
  }
  for (const auto& t : con.linear_terms()) lifted.add_linear(t.row, t.block, t.index, t.coeff);
  lifted.S().topRows(m) = con.S();
  lifted.t().head(m) = con.t();
  for (int i = 0; i < P; ++i) {
    for (int k = 0; k < layout.size(i); ++k) {
      const int row = m + layout.offset(i) + k;
      lifted.add_linear(row, i, k, 1.0);
      lifted.add_linear(row, P + i, k, -1.0);
    }
  }

  std::vector<ConvexSet> sets;
  sets.reserve(static_cast<std::size_t>(2 * P));
  for (int i = 0; i < P; ++i) sets.push_back(ConvexSet::whole_space(layout.size(i)));
  for (int i = 0; i < P; ++i) sets.push_back(prog.set(i));

  return MultiConvexProgram(BlockLayout(std::move(sizes)), std::move(obj), std::move(lifted),
                            std::move(sets));
}

OracleResult solve_to_convergence(const MultiConvexProgram& prog, const PrimalDualPoint& w0,
                                  const Eigen::VectorXd& s, const OracleOptions& options) {
  if (!(options.tol > 0.0)) throw ModelError("oracle tolerance must be positive");
  if (options.max_outer < 0) throw ModelError("max_outer must be non-negative");
  TrackerConfig config{options.rho, options.sweeps, resolve_alpha(prog, options.alpha), options.path};
  config.validate(prog);
  check_point(prog, w0.z);
  check_multiplier(prog, w0.mu);
  check_parameter(prog, s);

  const bool lifted_path = options.path == SolverPath::Lifted;
  BlockVector z = w0.z;
  Eigen::VectorXd mu = w0.mu;
  LiftedState aux = lifted_path ? lifted_state_from(prog, w0) : LiftedState{};

  auto residual = [&]() {
    const double r = kkt_residual(prog, {z, mu}, s);
    if (!lifted_path) return r;
    return std::max(r, lifted_kkt_residual(prog, aux.y, z, mu, aux.nu, s));
  };

  OracleResult best{{z, mu}, residual(), 0, 0};
  if (best.residual < options.tol) return best;
  auto try_polish = [&](double r, int outer, long sweeps) -> std::optional<OracleResult> {
    if (!options.newton_polish || !(r < options.polish_threshold)) return std::nullopt;
    auto polished = newton_polish(prog, {z, mu}, s, options.tol);
    if (!polished) return std::nullopt;
    const double rp = kkt_residual(prog, *polished, s);
    return OracleResult{std::move(*polished), rp, outer, sweeps};
  };
  if (auto done = try_polish(best.residual, 0, 0)) return std::move(*done);

  const long inner_cap = 10L * options.sweeps;
  const double inner_tol = options.tol / 10.0;
  long total_sweeps = 0;
  for (int outer = 1; outer <= options.max_outer; ++outer) {
    for (long l = 0; l < inner_cap; ++l) {
      double stationarity = 0.0;
      if (lifted_path) {
        lifted_cycle(prog, config, aux.y, z, aux.nu, mu, s);
        stationarity = lifted_al_stationarity(prog, aux.y, z, mu, aux.nu, s, options.rho);
      } else {
        z = sweep(prog, config, std::move(z), mu, s);
        stationarity = al_stationarity(prog, z, mu, s, options.rho);
      }
      ++total_sweeps;
      if (!std::isfinite(stationarity)) {
        throw NumericalError("non-finite iterate in oracle outer iteration " + std::to_string(outer));
      }
      if (stationarity < inner_tol) break;
    }
    if (lifted_path) {
      mu += options.rho * evaluate_constraint(prog, aux.y, s);
      aux.nu.data() += options.rho * (aux.y.data() - z.data());
    } else {
      mu += options.rho * evaluate_constraint(prog, z, s);
    }
    const double r = residual();
    if (r < best.residual) best = {{z, mu}, r, outer, total_sweeps};
    if (r < options.tol) return {{z, mu}, r, outer, total_sweeps};
    if (auto done = try_polish(r, outer, total_sweeps)) return std::move(*done);
  }
  best.total_sweeps = total_sweeps;
  std::ostringstream msg;
  msg << "oracle did not reach KKT residual " << options.tol << " within " << options.max_outer
      << " outer iterations (best " << best.residual << ")";
  throw NonConvergence(msg.str(), std::move(best));
}

BlockVector inner_limit(const MultiConvexProgram& prog, const TrackerConfig& config,
                        BlockVector z, const Eigen::VectorXd& mu, const Eigen::VectorXd& s,
                        double tol, long max_sweeps) {
  for (long l = 0; l < max_sweeps; ++l) {
    BlockVector next = sweep(prog, config, z, mu, s);
    const double disp = (next.data() - z.data()).cwiseAbs().maxCoeff();
    z = std::move(next);
    if (!std::isfinite(disp)) throw NumericalError("non-finite iterate in inner loop");
    if (disp < tol) break;
  }
  return z;
}

}  // namespace optrack
