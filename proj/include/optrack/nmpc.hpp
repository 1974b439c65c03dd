#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "optrack/program.hpp"
#include "optrack/program_json.hpp"
#include "optrack/solver.hpp"

namespace optrack {

/// x+ = A x + B u + sum_i u^(i) N_i x + c, with box bounds on x and u.
struct BilinearModel {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  std::vector<Eigen::MatrixXd> N;  // one n x n matrix per input
  Eigen::VectorXd c;
  Eigen::VectorXd x_lower, x_upper;
  Eigen::VectorXd u_lower, u_upper;

  int state_dim() const { return static_cast<int>(A.rows()); }
  int input_dim() const { return static_cast<int>(B.cols()); }
  void validate() const;
};

/// Plant step; bounds are not enforced.
Eigen::VectorXd simulate_plant(const BilinearModel& model, const Eigen::VectorXd& x,
                               const Eigen::VectorXd& u);

/// Separately excited DC motor: state (armature current, angular speed), input field current.
struct DcMotorParameters {
  static constexpr double La = 0.307;      // H
  static constexpr double Ra = 12.548;     // Ohm
  static constexpr double km = 0.22567;    // Nm/A^2
  static constexpr double J = 0.00385;     // Nm s^2
  static constexpr double B = 0.00783;     // Nm s
  static constexpr double tau_l = 1.47;    // Nm
  static constexpr double u_a = 60.0;      // V
};

/// Euler-discretised DC motor, 0 < dt <= 0.1.
BilinearModel dc_motor_model(double dt);

struct Equilibrium {
  Eigen::VectorXd x;
  Eigen::VectorXd u;
};

/// Steady state of the DC motor at the given speed (independent of dt).
Equilibrium dc_motor_equilibrium(double speed);

struct NmpcSpec {
  BilinearModel model;
  double dt = 0.0;  // sampling period in seconds; only used for time stamps
  int horizon = 10;
  Eigen::MatrixXd Q;   // stage state weight, PSD
  Eigen::MatrixXd R;   // input weight, PD
  Eigen::MatrixXd Qf;  // terminal weight, PSD
  /// Stage references for x_1..x_N; a single entry is held over the horizon.
  std::vector<Eigen::VectorXd> reference;
  Eigen::VectorXd terminal_lower, terminal_upper;

  void validate() const;
  const Eigen::VectorXd& reference_at(int stage) const;
};

/// Defaults for the DC motor: Q = diag(0, 1), R = 0.1, Qf = Q, terminal box =
/// state box, horizon round(0.26 / dt).
NmpcSpec dc_motor_spec(double dt, int horizon = 0);
int default_horizon(double dt);

/// Variable/row bookkeeping of the NMPC program. Block 0 stacks x_0..x_N,
/// block 1 stacks u_0..u_{N-1}. Rows 0..n-1 pin x_0 to the parameter s; then
/// n rows of dynamics per stage.
struct NmpcLayout {
  int n = 0;
  int m_u = 0;
  int horizon = 0;
  int state_offset(int stage) const { return stage * n; }
  int input_offset(int stage) const { return stage * m_u; }
  int dynamics_row(int stage) const { return n + stage * n; }
};

NmpcLayout nmpc_layout(const NmpcSpec& spec);

/// Two-block program: sum (x_l - r)'Q(x_l - r) + u_l'R u_l + (x_N - r)'Qf(x_N - r)
/// subject to x_0 = s and the bilinear dynamics.
MultiConvexProgram build_nmpc_program(const NmpcSpec& spec);

/// Feasible-by-construction guess: inputs at the middle of their box, states rolled out.
PrimalDualPoint rollout_guess(const NmpcSpec& spec, const Eigen::VectorXd& x0);

Eigen::VectorXd first_input(const NmpcSpec& spec, const BlockVector& z);

/// Receding-horizon shift: drop stage 0, repeat the last stage, and put x0 in front.
PrimalDualPoint shift_solution(const NmpcSpec& spec, const PrimalDualPoint& w,
                               const Eigen::VectorXd& x0);

/// +-amplitude square wave on the last state component (speed), starting positive.
std::vector<Eigen::VectorXd> square_wave_reference(int state_dim, double dt, int steps,
                                                   double amplitude = 2.0,
                                                   double period_seconds = 2.0);

struct ClosedLoopStep {
  int k = 0;
  double t = 0.0;
  Eigen::VectorXd x;  // measured state, used as the parameter s_k
  Eigen::VectorXd u;  // applied input
  Eigen::VectorXd reference;
  double feasibility = 0.0;
  double kkt_residual = 0.0;
  double solve_ms = 0.0;
  bool held = false;  // solver failed; previous input re-applied
  std::string error;
};

struct ClosedLoopTrace {
  double dt = 0.0;
  int tracked_index = 0;  // state component reported in the `ref` column
  std::vector<ClosedLoopStep> steps;
  std::vector<PrimalDualPoint> points;  // solver output at every step
  Eigen::VectorXd final_state;
};

/// Reference-solver settings for the NMPC programs (rho = 1000).
inline OracleOptions nmpc_oracle_options() {
  OracleOptions o;
  o.rho = 1000.0;
  return o;
}

struct ClosedLoopOptions {
  double warm_scale = 5.0;  // initial warm start = warm_scale * w*_0
  OracleOptions oracle = nmpc_oracle_options();  // used for w*_0 and every step of the oracle loop
  bool record_timing = true;
};

ClosedLoopTrace run_closed_loop(const NmpcSpec& spec, const TrackerConfig& config,
                                const Eigen::VectorXd& x0,
                                const std::vector<Eigen::VectorXd>& references, int steps,
                                const ClosedLoopOptions& options = {});

/// Raised when the reference solver fails inside a closed loop.
class OracleLoopFailure : public std::runtime_error {
 public:
  OracleLoopFailure(int step, const std::string& what)
      : std::runtime_error("oracle failed at step " + std::to_string(step) + ": " + what),
        step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

ClosedLoopTrace run_oracle_loop(const NmpcSpec& spec, const Eigen::VectorXd& x0,
                                const std::vector<Eigen::VectorXd>& references, int steps,
                                const ClosedLoopOptions& options = {});

/// Header `k,t_seconds,x1..xn,u (or u1..um),ref,feasibility,kkt_residual,solve_ms`.
std::string trace_to_csv(const ClosedLoopTrace& trace);

Json model_to_json(const BilinearModel& model);
BilinearModel model_from_json(const Json& j);
Json nmpc_spec_to_json(const NmpcSpec& spec);
NmpcSpec nmpc_spec_from_json(const Json& j);

}  // namespace optrack
