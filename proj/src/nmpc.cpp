#include "optrack/nmpc.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

#include <Eigen/Eigenvalues>

#include "optrack/errors.hpp"
#include "optrack/io.hpp"

namespace optrack {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require(bool ok, const std::string& what) {
  if (!ok) throw ModelError(what);
}

void require_dims(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

bool is_symmetric(const Eigen::MatrixXd& M) {
  const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
  return (M - M.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale;
}

double min_eigenvalue(const Eigen::MatrixXd& M) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(M, Eigen::EigenvaluesOnly)
      .eigenvalues()
      .minCoeff();
}

}  // namespace

void BilinearModel::validate() const {
  const auto n = A.rows();
  const auto m = B.cols();
  require_dims(A.cols() == n && n > 0, "model A must be square and non-empty");
  require_dims(B.rows() == n, "model B must have as many rows as A");
  require_dims(static_cast<Eigen::Index>(N.size()) == m, "model needs one N matrix per input");
  for (const auto& Ni : N) require_dims(Ni.rows() == n && Ni.cols() == n, "model N_i must be n x n");
  require_dims(c.size() == n, "model offset c must have length n");
  require_dims(x_lower.size() == n && x_upper.size() == n, "state bounds must have length n");
  require_dims(u_lower.size() == m && u_upper.size() == m, "input bounds must have length m");
  require((x_lower.array() <= x_upper.array()).all(), "state bounds are not ordered");
  require((u_lower.array() <= u_upper.array()).all(), "input bounds are not ordered");
}

Eigen::VectorXd simulate_plant(const BilinearModel& model, const Eigen::VectorXd& x,
                               const Eigen::VectorXd& u) {
  require_dims(x.size() == model.state_dim(), "state has length " + std::to_string(x.size()) +
                                                  ", model expects " + std::to_string(model.state_dim()));
  require_dims(u.size() == model.input_dim(), "input has length " + std::to_string(u.size()) +
                                                  ", model expects " + std::to_string(model.input_dim()));
  Eigen::VectorXd next = model.A * x + model.B * u + model.c;
  for (int i = 0; i < model.input_dim(); ++i) next.noalias() += u[i] * (model.N[static_cast<std::size_t>(i)] * x);
  return next;
}

BilinearModel dc_motor_model(double dt) {
  if (!(dt > 0.0) || dt > 0.1) throw ModelError("DC motor sampling period must lie in (0, 0.1]");
  using P = DcMotorParameters;
  BilinearModel m;
  m.A = Eigen::MatrixXd::Zero(2, 2);
  m.A(0, 0) = 1.0 - P::Ra * dt / P::La;
  m.A(1, 1) = 1.0 - P::B * dt / P::J;
  m.B = Eigen::MatrixXd::Zero(2, 1);
  Eigen::MatrixXd Bd = Eigen::MatrixXd::Zero(2, 2);
  Bd(0, 1) = -P::km * dt / P::La;
  Bd(1, 0) = P::km * dt / P::J;
  m.N = {Bd};
  m.c = Eigen::Vector2d(dt * P::u_a / P::La, -dt * P::tau_l / P::J);
  m.x_lower = Eigen::Vector2d(-2.0, -8.0);
  m.x_upper = Eigen::Vector2d(5.0, 1.5);
  m.u_lower = Eigen::VectorXd::Constant(1, 1.27);
  m.u_upper = Eigen::VectorXd::Constant(1, 1.4);
  return m;
}

Equilibrium dc_motor_equilibrium(double speed) {
  using P = DcMotorParameters;
  // With a = km u: Ra i + a w = ua and a i = tau_l + B w.
  const double load = P::tau_l + P::B * speed;
  double a = 0.0;
  if (speed == 0.0) {
    a = P::Ra * load / P::u_a;
  } else {
    const double disc = P::u_a * P::u_a - 4.0 * speed * P::Ra * load;
    require(disc >= 0.0, "no equilibrium at this speed");
    a = (P::u_a - std::sqrt(disc)) / (2.0 * speed);
  }
  Equilibrium eq;
  eq.x = Eigen::Vector2d((P::u_a - a * speed) / P::Ra, speed);
  eq.u = Eigen::VectorXd::Constant(1, a / P::km);
  return eq;
}

void NmpcSpec::validate() const {
  model.validate();
  const int n = model.state_dim();
  const int m = model.input_dim();
  require(horizon >= 1, "NMPC horizon must be at least 1");
  require_dims(Q.rows() == n && Q.cols() == n, "Q must be n x n");
  require_dims(Qf.rows() == n && Qf.cols() == n, "Qf must be n x n");
  require_dims(R.rows() == m && R.cols() == m, "R must be m x m");
  require(is_symmetric(Q) && min_eigenvalue(Q) >= -1e-12, "Q must be symmetric PSD");
  require(is_symmetric(Qf) && min_eigenvalue(Qf) >= -1e-12, "Qf must be symmetric PSD");
  require(is_symmetric(R) && min_eigenvalue(R) > 0.0, "R must be symmetric positive definite");
  require(reference.size() == 1 || static_cast<int>(reference.size()) == horizon,
          "reference must hold one entry or one per stage");
  for (const auto& r : reference) require_dims(r.size() == n, "reference entries must have length n");
  require_dims(terminal_lower.size() == n && terminal_upper.size() == n, "terminal box must have length n");
}

const Eigen::VectorXd& NmpcSpec::reference_at(int stage) const {
  return reference.size() == 1 ? reference.front() : reference.at(static_cast<std::size_t>(stage - 1));
}

int default_horizon(double dt) {
  return std::max(1, static_cast<int>(std::lround(0.26 / dt)));
}

NmpcSpec dc_motor_spec(double dt, int horizon) {
  NmpcSpec spec;
  spec.model = dc_motor_model(dt);
  spec.dt = dt;
  spec.horizon = horizon > 0 ? horizon : default_horizon(dt);
  spec.Q = Eigen::Vector2d(0.0, 1.0).asDiagonal();
  spec.R = Eigen::MatrixXd::Constant(1, 1, 0.1);
  spec.Qf = spec.Q;
  spec.reference = {Eigen::Vector2d(0.0, 2.0)};
  spec.terminal_lower = spec.model.x_lower;
  spec.terminal_upper = spec.model.x_upper;
  return spec;
}

NmpcLayout nmpc_layout(const NmpcSpec& spec) {
  return {spec.model.state_dim(), spec.model.input_dim(), spec.horizon};
}

MultiConvexProgram build_nmpc_program(const NmpcSpec& spec) {
  spec.validate();
  const NmpcLayout L = nmpc_layout(spec);
  const auto& model = spec.model;
  const int n = L.n;
  const int m = L.m_u;
  const int N = L.horizon;
  const int nx = n * (N + 1);
  const int nu = m * N;

  QuadraticObjective obj;
  obj.H = Eigen::MatrixXd::Zero(nx + nu, nx + nu);
  obj.h = Eigen::VectorXd::Zero(nx + nu);
  for (int l = 1; l <= N; ++l) {
    const Eigen::MatrixXd& W = l == N ? spec.Qf : spec.Q;
    const Eigen::VectorXd& r = spec.reference_at(l);
    const int off = L.state_offset(l);
    obj.H.block(off, off, n, n) += W + W.transpose();
    obj.h.segment(off, n) -= (W + W.transpose()) * r;
    obj.c0 += r.dot(W * r);
  }
  for (int l = 0; l < N; ++l) {
    const int off = nx + L.input_offset(l);
    obj.H.block(off, off, m, m) += spec.R + spec.R.transpose();
  }

  BilinearConstraint con(nx, n);
  for (int r = 0; r < n; ++r) {
    con.add_linear(r, 0, r, 1.0);
    con.S()(r, r) = -1.0;
  }
  for (int l = 0; l < N; ++l) {
    for (int r = 0; r < n; ++r) {
      const int row = L.dynamics_row(l) + r;
      con.add_linear(row, 0, L.state_offset(l + 1) + r, 1.0);
      for (int c = 0; c < n; ++c) {
        if (model.A(r, c) != 0.0) con.add_linear(row, 0, L.state_offset(l) + c, -model.A(r, c));
      }
      for (int j = 0; j < m; ++j) {
        if (model.B(r, j) != 0.0) con.add_linear(row, 1, L.input_offset(l) + j, -model.B(r, j));
        const auto& Nj = model.N[static_cast<std::size_t>(j)];
        for (int c = 0; c < n; ++c) {
          if (Nj(r, c) != 0.0) {
            con.add_bilinear(row, 0, L.state_offset(l) + c, 1, L.input_offset(l) + j, -Nj(r, c));
          }
        }
      }
      con.t()[row] = -model.c[r];
    }
  }

  Eigen::VectorXd x_lo(nx), x_hi(nx);
  x_lo.head(n).setConstant(-kInf);
  x_hi.head(n).setConstant(kInf);
  for (int l = 1; l <= N; ++l) {
    Eigen::VectorXd lo = model.x_lower;
    Eigen::VectorXd hi = model.x_upper;
    if (l == N) {
      lo = lo.cwiseMax(spec.terminal_lower);
      hi = hi.cwiseMin(spec.terminal_upper);
      if ((lo.array() > hi.array()).any()) {
        throw ModelError("terminal box does not intersect the state box");
      }
    }
    x_lo.segment(L.state_offset(l), n) = lo;
    x_hi.segment(L.state_offset(l), n) = hi;
  }
  Eigen::VectorXd u_lo = model.u_lower.replicate(N, 1);
  Eigen::VectorXd u_hi = model.u_upper.replicate(N, 1);

  std::vector<ConvexSet> sets{ConvexSet::box(std::move(x_lo), std::move(x_hi)),
                              ConvexSet::box(std::move(u_lo), std::move(u_hi))};
  return MultiConvexProgram(BlockLayout({nx, nu}), std::move(obj), std::move(con), std::move(sets));
}

PrimalDualPoint rollout_guess(const NmpcSpec& spec, const Eigen::VectorXd& x0) {
  const NmpcLayout L = nmpc_layout(spec);
  require_dims(x0.size() == L.n, "initial state has the wrong length");
  BlockVector z(BlockLayout({L.n * (L.horizon + 1), L.m_u * L.horizon}));
  const Eigen::VectorXd u = 0.5 * (spec.model.u_lower + spec.model.u_upper);
  Eigen::VectorXd x = x0;
  z.block(0).segment(0, L.n) = x;
  for (int l = 0; l < L.horizon; ++l) {
    z.block(1).segment(L.input_offset(l), L.m_u) = u;
    x = simulate_plant(spec.model, x, u);
    z.block(0).segment(L.state_offset(l + 1), L.n) = x;
  }
  return {std::move(z), Eigen::VectorXd::Zero(L.n * (L.horizon + 1))};
}

Eigen::VectorXd first_input(const NmpcSpec& spec, const BlockVector& z) {
  return z.block(1).head(spec.model.input_dim());
}

PrimalDualPoint shift_solution(const NmpcSpec& spec, const PrimalDualPoint& w,
                               const Eigen::VectorXd& x0) {
  const NmpcLayout L = nmpc_layout(spec);
  require_dims(x0.size() == L.n, "initial state has the wrong length");
  require_dims(w.z.layout().num_blocks() == 2 && w.z.layout().size(0) == L.n * (L.horizon + 1) &&
                   w.z.layout().size(1) == L.m_u * L.horizon &&
                   w.mu.size() == L.n * (L.horizon + 1),
               "point does not match the controller layout");
  PrimalDualPoint out = w;
  const int N = L.horizon;
  auto xs = out.z.block(0);
  auto us = out.z.block(1);
  const Eigen::VectorXd xs_old = w.z.block(0);
  const Eigen::VectorXd us_old = w.z.block(1);
  xs.head(L.n * N) = xs_old.tail(L.n * N);
  xs.head(L.n) = x0;
  if (N > 1) us.head(L.m_u * (N - 1)) = us_old.tail(L.m_u * (N - 1));
  // Dynamics multipliers move with their stage; the initial-state row keeps its value.
  if (N > 1) out.mu.segment(L.n, L.n * (N - 1)) = w.mu.tail(L.n * (N - 1));
  return out;
}

std::vector<Eigen::VectorXd> square_wave_reference(int state_dim, double dt, int steps,
                                                   double amplitude, double period_seconds) {
  std::vector<Eigen::VectorXd> refs;
  refs.reserve(static_cast<std::size_t>(steps));
  for (int k = 0; k < steps; ++k) {
    // Offset so that a k*dt rounded just below a switching instant still switches.
    const double phase = std::fmod(k * dt + 1e-9, period_seconds);
    Eigen::VectorXd r = Eigen::VectorXd::Zero(state_dim);
    r[state_dim - 1] = phase < 0.5 * period_seconds ? amplitude : -amplitude;
    refs.push_back(std::move(r));
  }
  return refs;
}

namespace {

/// Rebuilds the program only when the reference changes.
class ProgramCache {
 public:
  explicit ProgramCache(NmpcSpec spec) : spec_(std::move(spec)) {}

  const MultiConvexProgram& get(const Eigen::VectorXd& ref) {
    if (!program_ || ref.size() != ref_.size() || ref != ref_) {
      spec_.reference = {ref};
      program_.emplace(build_nmpc_program(spec_));
      ref_ = ref;
    }
    return *program_;
  }

 private:
  NmpcSpec spec_;
  Eigen::VectorXd ref_;
  std::optional<MultiConvexProgram> program_;
};

void check_loop_args(const NmpcSpec& spec, const Eigen::VectorXd& x0,
                     const std::vector<Eigen::VectorXd>& references, int steps) {
  spec.validate();
  if (steps < 1) throw ModelError("closed loop needs at least one step");
  require_dims(x0.size() == spec.model.state_dim(), "initial state has the wrong length");
  require_dims(static_cast<int>(references.size()) >= steps, "fewer references than steps");
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

PrimalDualPoint scaled(const PrimalDualPoint& w, double factor) {
  return {BlockVector(w.z.layout(), factor * w.z.data()), factor * w.mu};
}

}  // namespace

ClosedLoopTrace run_closed_loop(const NmpcSpec& spec, const TrackerConfig& config,
                                const Eigen::VectorXd& x0,
                                const std::vector<Eigen::VectorXd>& references, int steps,
                                const ClosedLoopOptions& options) {
  check_loop_args(spec, x0, references, steps);
  ProgramCache cache(spec);

  const auto& prog0 = cache.get(references.front());
  OracleResult start;
  try {
    start = solve_to_convergence(prog0, rollout_guess(spec, x0), x0, options.oracle);
  } catch (const NonConvergence& e) {
    throw OracleLoopFailure(0, e.what());
  }
  TrackerState state = make_tracker_state(prog0, config, scaled(start.point, options.warm_scale));

  ClosedLoopTrace trace;
  trace.dt = spec.dt;
  trace.tracked_index = spec.model.state_dim() - 1;
  trace.steps.reserve(static_cast<std::size_t>(steps));
  Eigen::VectorXd x = x0;
  Eigen::VectorXd u_prev = 0.5 * (spec.model.u_lower + spec.model.u_upper);
  PrimalDualPoint last = state.warm;
  for (int k = 0; k < steps; ++k) {
    const auto& ref = references[static_cast<std::size_t>(k)];
    const auto& prog = cache.get(ref);
    ClosedLoopStep row;
    row.k = k;
    row.t = k * spec.dt;
    row.x = x;
    row.reference = ref;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      StepReport report = track_step(prog, state, x);
      row.solve_ms = options.record_timing ? elapsed_ms(t0) : 0.0;
      row.u = first_input(spec, report.point.z);
      row.feasibility = report.feasibility;
      row.kkt_residual = report.kkt_residual;
      last = std::move(report.point);
    } catch (const NumericalError& e) {
      row.solve_ms = options.record_timing ? elapsed_ms(t0) : 0.0;
      row.u = u_prev;
      row.held = true;
      row.error = e.what();
      row.feasibility = std::numeric_limits<double>::quiet_NaN();
      row.kkt_residual = std::numeric_limits<double>::quiet_NaN();
    }
    u_prev = row.u;
    trace.points.push_back(last);
    x = simulate_plant(spec.model, x, row.u);
    trace.steps.push_back(std::move(row));
  }
  trace.final_state = x;
  return trace;
}

ClosedLoopTrace run_oracle_loop(const NmpcSpec& spec, const Eigen::VectorXd& x0,
                                const std::vector<Eigen::VectorXd>& references, int steps,
                                const ClosedLoopOptions& options) {
  check_loop_args(spec, x0, references, steps);
  ProgramCache cache(spec);

  ClosedLoopTrace trace;
  trace.dt = spec.dt;
  trace.tracked_index = spec.model.state_dim() - 1;
  trace.steps.reserve(static_cast<std::size_t>(steps));
  Eigen::VectorXd x = x0;
  PrimalDualPoint warm = rollout_guess(spec, x0);
  for (int k = 0; k < steps; ++k) {
    const auto& ref = references[static_cast<std::size_t>(k)];
    const auto& prog = cache.get(ref);
    ClosedLoopStep row;
    row.k = k;
    row.t = k * spec.dt;
    row.x = x;
    row.reference = ref;
    const auto t0 = std::chrono::steady_clock::now();
    OracleResult res;
    try {
      res = solve_to_convergence(prog, warm, x, options.oracle);
    } catch (const NonConvergence& e) {
      throw OracleLoopFailure(k, e.what());
    }
    row.solve_ms = options.record_timing ? elapsed_ms(t0) : 0.0;
    row.u = first_input(spec, res.point.z);
    row.feasibility = evaluate_constraint(prog, res.point.z, x).norm();
    row.kkt_residual = res.residual;
    trace.points.push_back(res.point);
    x = simulate_plant(spec.model, x, row.u);
    warm = shift_solution(spec, res.point, x);
    trace.steps.push_back(std::move(row));
  }
  trace.final_state = x;
  return trace;
}

std::string trace_to_csv(const ClosedLoopTrace& trace) {
  std::ostringstream out;
  const int n = trace.steps.empty() ? 0 : static_cast<int>(trace.steps.front().x.size());
  const int m = trace.steps.empty() ? 0 : static_cast<int>(trace.steps.front().u.size());
  out << "k,t_seconds";
  for (int i = 0; i < n; ++i) out << ",x" << (i + 1);
  if (m == 1) {
    out << ",u";
  } else {
    for (int j = 0; j < m; ++j) out << ",u" << (j + 1);
  }
  out << ",ref,feasibility,kkt_residual,solve_ms\n";
  for (const auto& row : trace.steps) {
    out << row.k << ',' << format_double(row.t);
    for (int i = 0; i < n; ++i) out << ',' << format_double(row.x[i]);
    for (int j = 0; j < m; ++j) out << ',' << format_double(row.u[j]);
    out << ',' << format_double(row.reference[trace.tracked_index]) << ','
        << format_double(row.feasibility) << ',' << format_double(row.kkt_residual) << ','
        << format_double(row.solve_ms) << '\n';
  }
  return out.str();
}

Json model_to_json(const BilinearModel& model) {
  Json N = Json::array();
  for (const auto& Ni : model.N) N.push_back(matrix_to_json(Ni));
  return {{"A", matrix_to_json(model.A)},
          {"B", matrix_to_json(model.B)},
          {"N", std::move(N)},
          {"c", vector_to_json(model.c)},
          {"x_lower", vector_to_json(model.x_lower)},
          {"x_upper", vector_to_json(model.x_upper)},
          {"u_lower", vector_to_json(model.u_lower)},
          {"u_upper", vector_to_json(model.u_upper)}};
}

BilinearModel model_from_json(const Json& j) {
  BilinearModel m;
  m.A = matrix_from_json(j.at("A"));
  m.B = matrix_from_json(j.at("B"));
  for (const auto& Ni : j.at("N")) m.N.push_back(matrix_from_json(Ni));
  m.c = vector_from_json(j.at("c"));
  m.x_lower = vector_from_json(j.at("x_lower"));
  m.x_upper = vector_from_json(j.at("x_upper"));
  m.u_lower = vector_from_json(j.at("u_lower"));
  m.u_upper = vector_from_json(j.at("u_upper"));
  if (m.B.size() == 0) m.B = Eigen::MatrixXd::Zero(m.A.rows(), static_cast<Eigen::Index>(m.N.size()));
  m.validate();
  return m;
}

Json nmpc_spec_to_json(const NmpcSpec& spec) {
  Json refs = Json::array();
  for (const auto& r : spec.reference) refs.push_back(vector_to_json(r));
  return {{"model", model_to_json(spec.model)},
          {"dt", spec.dt},
          {"horizon", spec.horizon},
          {"Q", matrix_to_json(spec.Q)},
          {"R", matrix_to_json(spec.R)},
          {"Qf", matrix_to_json(spec.Qf)},
          {"reference", std::move(refs)},
          {"terminal_lower", vector_to_json(spec.terminal_lower)},
          {"terminal_upper", vector_to_json(spec.terminal_upper)}};
}

NmpcSpec nmpc_spec_from_json(const Json& j) {
  try {
    NmpcSpec spec;
    spec.model = model_from_json(j.at("model"));
    spec.horizon = j.at("horizon").get<int>();
    spec.dt = j.value("dt", 0.0);
    spec.Q = matrix_from_json(j.at("Q"));
    spec.R = matrix_from_json(j.at("R"));
    spec.Qf = matrix_from_json(j.at("Qf"));
    for (const auto& r : j.at("reference")) spec.reference.push_back(vector_from_json(r));
    spec.terminal_lower = vector_from_json(j.at("terminal_lower"));
    spec.terminal_upper = vector_from_json(j.at("terminal_upper"));
    spec.validate();
    return spec;
  } catch (const Json::exception& e) {
    throw ModelError(std::string("malformed NMPC spec document: ") + e.what());
  }
}

}  // namespace optrack
