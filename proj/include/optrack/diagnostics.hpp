#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "optrack/nmpc.hpp"
#include "optrack/program.hpp"
#include "optrack/solver.hpp"

namespace optrack {

/// Per step k: ||wbar_k - w*_k||_2 and ||s_k - s_{k-1}||_2 (0 at k = 0).
struct ErrorSeries {
  std::vector<double> tracking_error;
  std::vector<double> parameter_step;
};

/// Critical points along params by continuation: w*_0 from `start`, then each
/// w*_{k+1} warm-started at w*_k. Throws OracleLoopFailure naming the step.
std::vector<PrimalDualPoint> oracle_path(const MultiConvexProgram& prog,
                                         const PrimalDualPoint& start,
                                         const std::vector<Eigen::VectorXd>& params,
                                         const OracleOptions& options);

/// wbar_0 = initial, then wbar_{k+1} = track_step(wbar_k, s_{k+1}). Same length as params.
std::vector<PrimalDualPoint> tracked_path(const MultiConvexProgram& prog,
                                          const TrackerConfig& config,
                                          const PrimalDualPoint& initial,
                                          const std::vector<Eigen::VectorXd>& params);

ErrorSeries tracking_error_series(const std::vector<PrimalDualPoint>& tracked,
                                  const std::vector<PrimalDualPoint>& oracle,
                                  const std::vector<Eigen::VectorXd>& params);

/// (1 - theta) / (2 theta - 1) for theta in (1/2, 1).
double psi(double theta);

struct RateFit {
  std::vector<int> M;
  std::vector<double> errors;
  double psi_hat = 0.0;  // minus the log-log slope
  double C_hat = 0.0;
  int points_used = 0;   // entries with a positive error enter the fit
  bool fit_valid = false;
};

/// Log-log least squares of errors against M. Needs M strictly increasing.
RateFit fit_rate(std::vector<int> M, std::vector<double> errors);

/// For each M: M Direct sweeps at fixed (mu, s) from z0, distance to the inner limit.
RateFit rate_experiment(const MultiConvexProgram& prog, const BlockVector& z0,
                        const Eigen::VectorXd& mu, const Eigen::VectorXd& s,
                        const std::vector<int>& M_values, double rho);

struct NnlsFit {
  double beta_w = 0.0;
  double beta_s = 0.0;
  double residual = 0.0;  // ||y - X beta||_2
  bool degenerate = false;
  bool beta_s_identifiable = true;
};

/// min ||y - beta_w e - beta_s d|| over beta >= 0.
NnlsFit nonnegative_fit(const std::vector<double>& e, const std::vector<double>& d,
                        const std::vector<double>& y);

struct ContractionRow {
  double rho = 0.0;
  int M = 0;
  NnlsFit fit;
};

/// For every (rho, M) cell: tracked run from `initial` along params, error
/// series against the shared oracle path, and the regression
/// e_{k+1} ~ beta_w e_k + beta_s ||s_{k+1} - s_k|| over k >= burn_in.
/// Rows ordered rho-major.
std::vector<ContractionRow> contraction_probe(const MultiConvexProgram& prog,
                                              const std::vector<PrimalDualPoint>& oracle,
                                              const PrimalDualPoint& initial,
                                              const std::vector<Eigen::VectorXd>& params,
                                              const std::vector<double>& rho_grid,
                                              const std::vector<int>& M_grid,
                                              SolverPath path = SolverPath::Direct,
                                              int burn_in = 5);

/// ||a - b||_2 / ||b||_2 over one state component, or all when component < 0.
double normalized_l2(const std::vector<Eigen::VectorXd>& a, const std::vector<Eigen::VectorXd>& b,
                     int component);

std::vector<Eigen::VectorXd> state_trajectory(const ClosedLoopTrace& trace);

struct DtSweepOptions {
  double budget = 5000.0;  // block minimisations per second
  double T = 6.0;          // simulated seconds per cell
  double rho = 200.0;
  bool full_state = false;
  Eigen::VectorXd x0;      // empty: dc_motor_equilibrium(-2)
  ClosedLoopOptions loop;
};

struct DtSweepRow {
  double dt = 0.0;
  int M = 0;
  double nl2_error = 0.0;  // NaN when infeasible
  bool feasible = true;
};

/// M = floor(budget dt / P) sweeps per step for each dt on the DC motor.
std::vector<DtSweepRow> dt_sweep(const std::vector<double>& dt_grid, const DtSweepOptions& options);

/// The feasibility column of a trace. Throws ModelError on an empty trace.
std::vector<double> feasibility_series(const ClosedLoopTrace& trace);

/// Number of worker threads: OPTRACK_THREADS if set and positive, else the hardware count.
int worker_count();

/// Runs fn(0..n-1) on up to worker_count() threads. The first exception is rethrown.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace optrack
