#include "optrack/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

#include <Eigen/QR>

#include "optrack/errors.hpp"

namespace optrack {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Eigen::VectorXd stacked(const PrimalDualPoint& w) {
  Eigen::VectorXd v(w.z.data().size() + w.mu.size());
  v << w.z.data(), w.mu;
  return v;
}

}  // namespace

std::vector<PrimalDualPoint> oracle_path(const MultiConvexProgram& prog,
                                         const PrimalDualPoint& start,
                                         const std::vector<Eigen::VectorXd>& params,
                                         const OracleOptions& options) {
  if (params.empty()) throw ModelError("parameter sequence is empty");
  std::vector<PrimalDualPoint> path;
  path.reserve(params.size());
  PrimalDualPoint warm = start;
  for (std::size_t k = 0; k < params.size(); ++k) {
    try {
      warm = solve_to_convergence(prog, warm, params[k], options).point;
    } catch (const NonConvergence& e) {
      throw OracleLoopFailure(static_cast<int>(k), e.what());
    }
    path.push_back(warm);
  }
  return path;
}

std::vector<PrimalDualPoint> tracked_path(const MultiConvexProgram& prog,
                                          const TrackerConfig& config,
                                          const PrimalDualPoint& initial,
                                          const std::vector<Eigen::VectorXd>& params) {
  if (params.empty()) throw ModelError("parameter sequence is empty");
  TrackerState state = make_tracker_state(prog, config, initial);
  std::vector<PrimalDualPoint> path;
  path.reserve(params.size());
  path.push_back(initial);
  for (std::size_t k = 1; k < params.size(); ++k) {
    path.push_back(track_step(prog, state, params[k]).point);
  }
  return path;
}

ErrorSeries tracking_error_series(const std::vector<PrimalDualPoint>& tracked,
                                  const std::vector<PrimalDualPoint>& oracle,
                                  const std::vector<Eigen::VectorXd>& params) {
  if (tracked.size() != oracle.size() || tracked.size() != params.size()) {
    throw DimensionError("tracked run, oracle run and parameters differ in length");
  }
  ErrorSeries out;
  out.tracking_error.reserve(tracked.size());
  out.parameter_step.reserve(tracked.size());
  for (std::size_t k = 0; k < tracked.size(); ++k) {
    const Eigen::VectorXd a = stacked(tracked[k]);
    const Eigen::VectorXd b = stacked(oracle[k]);
    if (a.size() != b.size()) throw DimensionError("tracked and oracle points differ in size");
    out.tracking_error.push_back((a - b).norm());
    out.parameter_step.push_back(k == 0 ? 0.0 : (params[k] - params[k - 1]).norm());
  }
  return out;
}

double psi(double theta) {
  if (!(theta > 0.5 && theta < 1.0)) throw ModelError("theta must lie in (1/2, 1)");
  return (1.0 - theta) / (2.0 * theta - 1.0);
}

RateFit fit_rate(std::vector<int> M, std::vector<double> errors) {
  if (M.size() != errors.size()) throw DimensionError("M values and errors differ in length");
  if (M.size() < 3) throw ModelError("rate fit needs at least three M values");
  for (std::size_t i = 0; i < M.size(); ++i) {
    if (M[i] < 1) throw ModelError("M values must be positive");
    if (i > 0 && M[i] <= M[i - 1]) throw ModelError("M values must be strictly increasing");
  }
  RateFit fit;
  fit.M = std::move(M);
  fit.errors = std::move(errors);
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < fit.M.size(); ++i) {
    if (fit.errors[i] > 0.0 && std::isfinite(fit.errors[i])) {
      lx.push_back(std::log(static_cast<double>(fit.M[i])));
      ly.push_back(std::log(fit.errors[i]));
    }
  }
  fit.points_used = static_cast<int>(lx.size());
  if (lx.size() < 2) {
    fit.psi_hat = kNaN;
    fit.C_hat = kNaN;
    return fit;
  }
  const double n = static_cast<double>(lx.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i] / n;
    my += ly[i] / n;
  }
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  const double slope = sxy / sxx;
  fit.psi_hat = -slope;
  fit.C_hat = std::exp(my - slope * mx);
  fit.fit_valid = true;
  return fit;
}

RateFit rate_experiment(const MultiConvexProgram& prog, const BlockVector& z0,
                        const Eigen::VectorXd& mu, const Eigen::VectorXd& s,
                        const std::vector<int>& M_values, double rho) {
  if (M_values.size() < 3) throw ModelError("rate experiment needs at least three M values");
  const TrackerConfig config = TrackerConfig::defaults(prog, rho, 1, SolverPath::Direct);
  config.validate(prog);
  check_point(prog, z0);
  const BlockVector limit = inner_limit(prog, config, z0, mu, s, 1e-15, 1000000);
  std::vector<double> errors;
  BlockVector z = z0;
  int done = 0;
  for (int M : M_values) {
    if (M < done) throw ModelError("M values must be strictly increasing");
    for (; done < M; ++done) z = sweep(prog, config, z, mu, s);
    errors.push_back((z.data() - limit.data()).norm());
  }
  return fit_rate(M_values, std::move(errors));
}

NnlsFit nonnegative_fit(const std::vector<double>& e, const std::vector<double>& d,
                        const std::vector<double>& y) {
  if (e.size() != d.size() || e.size() != y.size()) {
    throw DimensionError("regression columns differ in length");
  }
  NnlsFit fit;
  const auto max_abs = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
  };
  if (e.empty() || std::max(max_abs(e), max_abs(y)) < 1e-12) {
    fit.degenerate = true;
    fit.beta_s_identifiable = false;
    fit.beta_w = kNaN;
    fit.beta_s = kNaN;
    return fit;
  }
  fit.beta_s_identifiable = max_abs(d) >= 1e-12;
  const Eigen::Map<const Eigen::VectorXd> E(e.data(), static_cast<Eigen::Index>(e.size()));
  const Eigen::Map<const Eigen::VectorXd> D(d.data(), static_cast<Eigen::Index>(d.size()));
  const Eigen::Map<const Eigen::VectorXd> Y(y.data(), static_cast<Eigen::Index>(y.size()));
  const auto residual = [&](double bw, double bs) { return (Y - bw * E - bs * D).norm(); };

  double best_w = 0.0, best_s = 0.0, best_r = residual(0.0, 0.0);
  const auto consider = [&](double bw, double bs) {
    if (bw < 0.0 || bs < 0.0 || !std::isfinite(bw) || !std::isfinite(bs)) return;
    const double r = residual(bw, bs);
    if (r < best_r) {
      best_w = bw;
      best_s = bs;
      best_r = r;
    }
  };
  if (E.squaredNorm() > 0.0) consider(std::max(0.0, E.dot(Y) / E.squaredNorm()), 0.0);
  if (fit.beta_s_identifiable) {
    consider(0.0, std::max(0.0, D.dot(Y) / D.squaredNorm()));
    Eigen::MatrixXd X(E.size(), 2);
    X << E, D;
    const Eigen::Vector2d beta = X.colPivHouseholderQr().solve(Y);
    consider(beta[0], beta[1]);
  }
  fit.beta_w = best_w;
  fit.beta_s = fit.beta_s_identifiable ? best_s : kNaN;
  fit.residual = best_r;
  return fit;
}

std::vector<ContractionRow> contraction_probe(const MultiConvexProgram& prog,
                                              const std::vector<PrimalDualPoint>& oracle,
                                              const PrimalDualPoint& initial,
                                              const std::vector<Eigen::VectorXd>& params,
                                              const std::vector<double>& rho_grid,
                                              const std::vector<int>& M_grid, SolverPath path,
                                              int burn_in) {
  if (rho_grid.empty() || M_grid.empty()) throw ModelError("contraction grids must be nonempty");
  if (burn_in < 0) throw ModelError("burn-in must be nonnegative");
  if (params.size() < static_cast<std::size_t>(burn_in) + 2) {
    throw ModelError("contraction probe needs at least burn_in + 2 steps");
  }
  std::vector<ContractionRow> rows(rho_grid.size() * M_grid.size());
  for (std::size_t i = 0; i < rho_grid.size(); ++i) {
    for (std::size_t j = 0; j < M_grid.size(); ++j) {
      TrackerConfig config = TrackerConfig::defaults(prog, rho_grid[i], M_grid[j], path);
      config.validate(prog);
      rows[i * M_grid.size() + j] = {rho_grid[i], M_grid[j], {}};
    }
  }
  parallel_for(static_cast<int>(rows.size()), [&](int c) {
    ContractionRow& row = rows[static_cast<std::size_t>(c)];
    const TrackerConfig config = TrackerConfig::defaults(prog, row.rho, row.M, path);
    const auto tracked = tracked_path(prog, config, initial, params);
    const ErrorSeries series = tracking_error_series(tracked, oracle, params);
    const auto& err = series.tracking_error;
    const auto& ds = series.parameter_step;
    const auto b = static_cast<std::ptrdiff_t>(burn_in);
    std::vector<double> e(err.begin() + b, err.end() - 1);
    std::vector<double> d(ds.begin() + b + 1, ds.end());
    std::vector<double> y(err.begin() + b + 1, err.end());
    row.fit = nonnegative_fit(e, d, y);
  });
  return rows;
}

double normalized_l2(const std::vector<Eigen::VectorXd>& a, const std::vector<Eigen::VectorXd>& b,
                     int component) {
  if (a.size() != b.size()) throw DimensionError("trajectories differ in length");
  if (a.empty()) throw ModelError("trajectories are empty");
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k].size() != b[k].size()) throw DimensionError("trajectory states differ in size");
    if (component >= a[k].size()) throw DimensionError("state component out of range");
    if (component >= 0) {
      const double diff = a[k][component] - b[k][component];
      num += diff * diff;
      den += b[k][component] * b[k][component];
    } else {
      num += (a[k] - b[k]).squaredNorm();
      den += b[k].squaredNorm();
    }
  }
  if (den == 0.0) throw NumericalError("reference trajectory is identically zero");
  return std::sqrt(num / den);
}

std::vector<Eigen::VectorXd> state_trajectory(const ClosedLoopTrace& trace) {
  std::vector<Eigen::VectorXd> xs;
  xs.reserve(trace.steps.size() + 1);
  for (const auto& row : trace.steps) xs.push_back(row.x);
  return xs;
}

std::vector<DtSweepRow> dt_sweep(const std::vector<double>& dt_grid, const DtSweepOptions& options) {
  if (dt_grid.empty()) throw ModelError("dt grid is empty");
  if (!(options.budget > 0.0)) throw ModelError("budget must be positive");
  if (!(options.T > 0.0)) throw ModelError("T must be positive");
  for (double dt : dt_grid) {
    if (!(dt > 0.0 && dt <= 0.1)) throw ModelError("dt grid must lie in (0, 0.1]");
  }
  const Eigen::VectorXd x0 =
      options.x0.size() > 0 ? options.x0 : dc_motor_equilibrium(-2.0).x;
  std::vector<DtSweepRow> rows(dt_grid.size());
  parallel_for(static_cast<int>(dt_grid.size()), [&](int c) {
    DtSweepRow& row = rows[static_cast<std::size_t>(c)];
    row.dt = dt_grid[static_cast<std::size_t>(c)];
    const NmpcSpec spec = dc_motor_spec(row.dt);
    const int blocks = 2;
    row.M = static_cast<int>(std::floor(options.budget * row.dt / blocks + 1e-9));
    if (row.M < 1) {
      row.feasible = false;
      row.nl2_error = kNaN;
      return;
    }
    const int steps = std::max(1, static_cast<int>(std::lround(options.T / row.dt)));
    const auto refs = square_wave_reference(spec.model.state_dim(), row.dt, steps);
    ClosedLoopOptions loop = options.loop;
    loop.record_timing = false;
    const TrackerConfig config =
        TrackerConfig::defaults(build_nmpc_program(spec), options.rho, row.M);
    const auto tracked = run_closed_loop(spec, config, x0, refs, steps, loop);
    const auto oracle = run_oracle_loop(spec, x0, refs, steps, loop);
    const int component = options.full_state ? -1 : spec.model.state_dim() - 1;
    row.nl2_error =
        normalized_l2(state_trajectory(tracked), state_trajectory(oracle), component);
  });
  return rows;
}

std::vector<double> feasibility_series(const ClosedLoopTrace& trace) {
  if (trace.steps.empty()) throw ModelError("trace is empty");
  std::vector<double> out;
  out.reserve(trace.steps.size());
  for (const auto& row : trace.steps) out.push_back(row.feasibility);
  return out;
}

int worker_count() {
  if (const char* env = std::getenv("OPTRACK_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n > 0) return static_cast<int>(std::min(n, 1024L));
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(int n, const std::function<void(int)>& fn) {
  const int workers = std::min(n, worker_count());
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::mutex lock;
  int next = 0;
  std::exception_ptr error;
  auto work = [&] {
    for (;;) {
      int i;
      {
        std::lock_guard<std::mutex> guard(lock);
        if (next >= n || error) return;
        i = next++;
      }
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> guard(lock);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int t = 0; t < workers; ++t) pool.emplace_back(work);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace optrack
