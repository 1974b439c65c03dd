#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "optrack/program.hpp"

namespace optrack {

enum class SolverPath {
  Direct,  // exact block minimisation of L_rho + prox term over Z_i
  Lifted,  // y_i copies: unconstrained SPD solve, then projection onto Z_i
};

std::string to_string(SolverPath path);
SolverPath solver_path_from_string(const std::string& name);

inline constexpr double kDefaultAlpha = 1e-6;

struct TrackerConfig {
  double rho = 10.0;
  int sweeps = 1;             // M: primal sweeps per time step
  std::vector<double> alpha;  // proximal weight per block of the original program
  SolverPath path = SolverPath::Lifted;

  /// alpha_i = kDefaultAlpha for every block.
  static TrackerConfig defaults(const MultiConvexProgram& prog, double rho, int sweeps,
                                SolverPath path = SolverPath::Lifted);
  /// Throws ModelError on rho <= 0, M < 1, alpha_i <= 0 or a wrong alpha count.
  void validate(const MultiConvexProgram& prog) const;
};

/// Auxiliary state of the lifted path: copies y of every block and the
/// multipliers nu of the consensus rows y_i - z_i = 0.
struct LiftedState {
  BlockVector y;
  BlockVector nu;
};

struct TrackerState {
  TrackerConfig config;
  PrimalDualPoint warm;               // (z_k, mu_k)
  std::optional<LiftedState> lifted;  // engaged iff config.path == Lifted
};

/// y = z and nu = -(grad f(z) + Jg(z)' mu), which makes every critical point of
/// the original program a fixed point of the lifted cycle.
LiftedState lifted_state_from(const MultiConvexProgram& prog, const PrimalDualPoint& w);

TrackerState make_tracker_state(const MultiConvexProgram& prog, TrackerConfig config,
                                PrimalDualPoint warm);

struct StepReport {
  PrimalDualPoint point;
  std::vector<double> al_values;      // M + 1 entries: before the first sweep, then after each
  std::vector<double> displacements;  // ||z^(l+1) - z^(l)||_2 per sweep
  double feasibility = 0.0;           // ||g(z_{k+1}, s_{k+1})||_2
  double kkt_residual = 0.0;          // natural residual at (z_{k+1}, mu_{k+1})
};

/// Minimiser over Z_i of L_rho(z with block i free, mu, s) + alpha_i/2 ||z_i - z_i^(l)||^2.
Eigen::VectorXd block_update(const MultiConvexProgram& prog, const TrackerConfig& config,
                             int block, const BlockVector& z, const Eigen::VectorXd& mu,
                             const Eigen::VectorXd& s);

/// One Gauss-Seidel pass over blocks 0..P-1 in ascending order.
BlockVector sweep(const MultiConvexProgram& prog, const TrackerConfig& config, BlockVector z,
                  const Eigen::VectorXd& mu, const Eigen::VectorXd& s);

/// One pass of the lifted path: for each block, the y_i solve then the z_i projection.
void lifted_cycle(const MultiConvexProgram& prog, const TrackerConfig& config, BlockVector& y,
                  BlockVector& z, const BlockVector& nu, const Eigen::VectorXd& mu,
                  const Eigen::VectorXd& s);

/// Augmented Lagrangian of the lifted program at (y, z, mu, nu).
double lifted_augmented_lagrangian(const MultiConvexProgram& prog, const BlockVector& y,
                                   const BlockVector& z, const Eigen::VectorXd& mu,
                                   const BlockVector& nu, const Eigen::VectorXd& s, double rho);

/// Natural residual of the lifted program's generalized equation.
double lifted_kkt_residual(const MultiConvexProgram& prog, const BlockVector& y,
                           const BlockVector& z, const Eigen::VectorXd& mu,
                           const BlockVector& nu, const Eigen::VectorXd& s);

/// ||z - Pi_Z(z - grad_z L_rho(z, mu, s))||: zero iff z is a critical point of
/// L_rho(., mu, s) + indicator of Z.
double al_stationarity(const MultiConvexProgram& prog, const BlockVector& z,
                       const Eigen::VectorXd& mu, const Eigen::VectorXd& s, double rho);

/// Same measure for the lifted augmented Lagrangian in (y, z).
double lifted_al_stationarity(const MultiConvexProgram& prog, const BlockVector& y,
                              const BlockVector& z, const Eigen::VectorXd& mu,
                              const BlockVector& nu, const Eigen::VectorXd& s, double rho);

/// One time step: M sweeps (or lifted cycles) from the warm start, then a
/// single dual update mu += rho g(., s_next). Updates `state` only on success.
StepReport track_step(const MultiConvexProgram& prog, TrackerState& state,
                      const Eigen::VectorXd& s_next);

/// Blocks (y_1..y_P, z_1..z_P); objective and g on y, consensus rows y_i - z_i
/// appended after the original rows, WholeSpace on y and the original sets on z.
MultiConvexProgram lift_program(const MultiConvexProgram& prog);

/// Alpha vector for the lifted program (the same alpha on y_i and z_i).
std::vector<double> lifted_alpha(const std::vector<double>& alpha);

struct OracleOptions {
  double rho = 10.0;
  double tol = 1e-8;
  int max_outer = 200;
  int sweeps = 50;            // inner loop stops after 10 * sweeps passes at most
  std::vector<double> alpha;  // empty: kDefaultAlpha for every block
  SolverPath path = SolverPath::Direct;
  /// Once the residual drops below polish_threshold, try an active-set Newton
  /// refinement on the KKT system; the splitting loop continues if it fails.
  bool newton_polish = true;
  double polish_threshold = 1e3;
};

struct OracleResult {
  PrimalDualPoint point;
  double residual = 0.0;
  int outer_iterations = 0;
  long total_sweeps = 0;
};

/// Raised by solve_to_convergence; carries the best point seen.
class NonConvergence : public std::runtime_error {
 public:
  NonConvergence(const std::string& what, OracleResult best)
      : std::runtime_error(what), best_(std::move(best)) {}
  const OracleResult& best() const { return best_; }

 private:
  OracleResult best_;
};

/// Augmented-Lagrangian loop run to a KKT residual below tol: inner sweeps
/// until al_stationarity drops under tol/10 (or 10*M passes), then a dual
/// update. Used as the reference solver everywhere a critical point is needed.
OracleResult solve_to_convergence(const MultiConvexProgram& prog, const PrimalDualPoint& w0,
                                  const Eigen::VectorXd& s, const OracleOptions& options);

/// Runs Direct-path sweeps at fixed (mu, s) until the displacement falls
/// below tol or max_sweeps; approximates the inner-loop limit z^inf(mu, s).
BlockVector inner_limit(const MultiConvexProgram& prog, const TrackerConfig& config,
                        BlockVector z, const Eigen::VectorXd& mu, const Eigen::VectorXd& s,
                        double tol, long max_sweeps);

}  // namespace optrack
