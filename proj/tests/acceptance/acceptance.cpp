#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/LU>

#include "optrack/diagnostics.hpp"
#include "optrack/nmpc.hpp"
#include "optrack/solver.hpp"
#include "optrack/toy.hpp"
#include "support.hpp"

using namespace optrack;
using namespace optrack::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Eigen::VectorXd vec1(double x) { return Eigen::VectorXd::Constant(1, x); }

// 1. Oracle on the toy program.
Outcome oracle_correctness() {
  const auto toy = toy_program();
  const PrimalDualPoint start{BlockVector(toy.layout(), Eigen::Vector2d(0.5, 0.5)), vec1(0.0)};
  const auto t0 = Clock::now();
  const auto res = solve_to_convergence(toy, start, vec1(1.0), OracleOptions{});
  const double secs = seconds_since(t0);
  const double err = std::max((res.point.z.data() - Eigen::Vector2d(1, 1)).norm(), std::abs(res.point.mu[0]));
  const double r = kkt_residual(toy, res.point, vec1(1.0));
  return {err <= 1e-6 && r < 1e-8 && secs < 1.0,
          "distance " + fmt("%.2e", err) + ", residual " + fmt("%.2e", r) + ", " + fmt("%.3f", secs) + " s"};
}

// 2. Proximal descent inequality over random instances.
Outcome descent_invariant() {
  Rng rng(2024);
  int violations = 0;
  long checked = 0;
  double worst = -INFINITY;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto prog = random_program(rng);
    auto config = TrackerConfig::defaults(prog, uniform(rng, 0.1, 100.0), 1, SolverPath::Direct);
    for (auto& a : config.alpha) a = uniform(rng, 1e-2, 1.0);
    BlockVector z = random_feasible_point(rng, prog);
    const Eigen::VectorXd mu = uniform_vector(rng, prog.num_rows(), -2, 2);
    const Eigen::VectorXd s = uniform_vector(rng, prog.param_dim(), -1, 1);
    double prev = augmented_lagrangian(prog, z, mu, s, config.rho);
    for (int l = 0; l < 10; ++l) {
      const BlockVector next = sweep(prog, config, z, mu, s);
      double prox = 0.0;
      for (int i = 0; i < prog.num_blocks(); ++i) {
        prox += 0.5 * config.alpha[static_cast<std::size_t>(i)] * (next.block(i) - z.block(i)).squaredNorm();
      }
      const double cur = augmented_lagrangian(prog, next, mu, s, config.rho);
      const double excess = (cur + prox - prev) / std::max(1.0, std::abs(prev));
      worst = std::max(worst, excess);
      if (excess > 1e-9) ++violations;
      ++checked;
      z = next;
      prev = cur;
    }
  }
  return {violations == 0, std::to_string(checked) + " sweeps, " + std::to_string(violations) +
                               " violations, worst relative excess " + fmt("%.2e", worst)};
}

// 3. Bounded tracking error under drift.
Outcome boundedness() {
  const auto t0 = Clock::now();
  const auto toy = toy_program();
  std::vector<Eigen::VectorXd> params;
  for (int k = 0; k <= 100; ++k) params.push_back(vec1(1.0 + 0.01 * k));
  const PrimalDualPoint start{BlockVector(toy.layout(), Eigen::Vector2d(0.5, 0.5)), vec1(0.0)};
  const auto oracle = oracle_path(toy, start, params, OracleOptions{});
  PrimalDualPoint initial = oracle[0];
  initial.z.data() *= 5.0;
  initial.mu *= 5.0;
  const auto tracked = tracked_path(toy, TrackerConfig::defaults(toy, 10.0, 20, SolverPath::Direct), initial, params);
  const auto series = tracking_error_series(tracked, oracle, params).tracking_error;
  const double secs = seconds_since(t0);
  const double e0 = series.front();
  const double peak = *std::max_element(series.begin(), series.end());
  return {peak <= 2.0 * e0 && series.back() < e0 && secs < 5.0,
          "e0 " + fmt("%.4g", e0) + ", max " + fmt("%.4g", peak) + ", final " + fmt("%.3e", series.back()) + ", " +
              fmt("%.2f", secs) + " s"};
}

// 4. Error versus M at fixed (mu, s).
Outcome rate_monotonicity() {
  const auto toy = toy_program();
  const Eigen::VectorXd s = vec1(1.0), mu = vec1(0.0);
  const auto star = solve_to_convergence(toy, {BlockVector(toy.layout(), Eigen::Vector2d(0.5, 0.5)), mu}, s,
                                         OracleOptions{});
  const std::vector<int> Ms{1, 2, 5, 10, 20, 50};
  const auto config = TrackerConfig::defaults(toy, 10.0, 1, SolverPath::Direct);
  std::vector<double> errors;
  for (int M : Ms) {
    BlockVector z(toy.layout(), Eigen::Vector2d(0.5, 0.5));
    for (int l = 0; l < M; ++l) z = sweep(toy, config, z, mu, s);
    errors.push_back((z.data() - star.point.z.data()).norm());
  }
  bool monotone = true;
  for (std::size_t k = 1; k < errors.size(); ++k) monotone = monotone && errors[k] <= errors[k - 1] + 1e-10;
  const auto fit = fit_rate(Ms, errors);
  std::string detail = "errors";
  for (double e : errors) detail += " " + fmt("%.3g", e);
  detail += ", slope " + fmt("%.3f", -fit.psi_hat);
  return {monotone && fit.fit_valid && fit.psi_hat > 0.0, detail};
}

// 5. DC-motor closed loop against the oracle loop.
Outcome dc_motor() {
  const auto t0 = Clock::now();
  const double T = 6.0;
  const auto x0 = dc_motor_equilibrium(-2.0).x;
  ClosedLoopOptions loop;
  loop.record_timing = false;
  struct Run {
    double nl2;
    bool inputs_ok;
    double head, tail;
  };
  auto run = [&](double dt) {
    const auto spec = dc_motor_spec(dt);
    const auto prog = build_nmpc_program(spec);
    const int steps = static_cast<int>(std::lround(T / dt));
    const auto refs = square_wave_reference(2, dt, steps);
    const auto tracked = run_closed_loop(spec, TrackerConfig::defaults(prog, 200.0, 30, SolverPath::Lifted), x0,
                                         refs, steps, loop);
    const auto oracle = run_oracle_loop(spec, x0, refs, steps, loop);
    Run r{normalized_l2(state_trajectory(tracked), state_trajectory(oracle), 1), true, 0.0, 0.0};
    for (const auto& st : tracked.steps) r.inputs_ok = r.inputs_ok && st.u[0] >= 1.27 && st.u[0] <= 1.4;
    const auto feas = feasibility_series(tracked);
    const std::size_t w = feas.size() / 10;
    r.head = std::accumulate(feas.begin(), feas.begin() + static_cast<long>(w), 0.0) / static_cast<double>(w);
    r.tail = std::accumulate(feas.end() - static_cast<long>(w), feas.end(), 0.0) / static_cast<double>(w);
    return r;
  };
  const Run fine = run(0.01);
  const Run coarse = run(0.026);
  const double secs = seconds_since(t0);
  // Threshold pinned from the first oracle-vs-tracked run (0.0272) with headroom.
  const double threshold = 0.035;
  const bool pass = fine.nl2 < threshold && fine.nl2 < coarse.nl2 && fine.inputs_ok && coarse.inputs_ok &&
                    fine.tail < fine.head && secs < 60.0;
  return {pass, "nl2(0.01) " + fmt("%.4f", fine.nl2) + " < " + fmt("%.3f", threshold) + ", nl2(0.026) " +
                    fmt("%.4f", coarse.nl2) + ", inputs in box " + (fine.inputs_ok && coarse.inputs_ok ? "yes" : "no") +
                    ", feasibility head " + fmt("%.3g", fine.head) + " tail " + fmt("%.3g", fine.tail) + ", " +
                    fmt("%.1f", secs) + " s"};
}

// 6. Error versus sampling period at a fixed budget.
Outcome dt_sweep_shape() {
  const auto t0 = Clock::now();
  std::vector<double> grid;
  for (int k = 1; k <= 9; ++k) grid.push_back(0.005 * k);
  DtSweepOptions opt;
  opt.budget = 3000.0;
  opt.loop.record_timing = false;
  const auto rows = dt_sweep(grid, opt);
  const double secs = seconds_since(t0);
  double lo = INFINITY;
  bool all_feasible = true;
  std::string curve;
  for (const auto& r : rows) {
    all_feasible = all_feasible && r.feasible;
    if (r.feasible) lo = std::min(lo, r.nl2_error);
    curve += " " + fmt("%.3g", r.nl2_error);
  }
  const double last = rows.back().nl2_error;
  return {all_feasible && last >= 2.0 * lo && secs < 300.0,
          "errors" + curve + ", last/min " + fmt("%.2f", last / lo) + ", " + fmt("%.1f", secs) + " s"};
}

// 7. Converged points of the direct and lifted paths.
Outcome path_equivalence() {
  Rng rng(77);
  RandomSpec spec;
  spec.strongly_convex = true;
  spec.boxes_only = true;
  spec.coupling = 0.2;
  OracleOptions opt;
  opt.newton_polish = false;
  opt.rho = 100.0;
  opt.tol = 1e-9;
  opt.max_outer = 3000;
  double worst = 0.0;
  int failures = 0, instances = 0, drawn = 0;
  while (instances < 20) {
    const auto raw = random_program(rng, spec);
    ++drawn;
    if (raw.layout().total() <= raw.num_rows()) continue;
    const Eigen::VectorXd s = uniform_vector(rng, raw.param_dim(), -0.5, 0.5);
    // Anchor strictly inside the boxes with a full-rank Jacobian; shifting t makes it feasible.
    BlockVector anchor(raw.layout());
    for (int i = 0; i < raw.num_blocks(); ++i) {
      const auto* box = raw.set(i).get_if<ConvexSet::Box>();
      const Eigen::VectorXd w = uniform_vector(rng, raw.layout().size(i), 0.2, 0.8);
      anchor.block(i) = box->lower.array() + w.array() * (box->upper - box->lower).array();
    }
    if (Eigen::FullPivLU<Eigen::MatrixXd>(constraint_jacobian(raw, anchor)).rank() < raw.num_rows()) continue;
    BilinearConstraint g = raw.constraint();
    g.t() -= evaluate_constraint(raw, anchor, s);
    const MultiConvexProgram prog(raw.layout(), raw.objective(), g, raw.sets());
    ++instances;
    try {
      opt.path = SolverPath::Direct;
      const auto a = solve_to_convergence(prog, zero_point(prog), s, opt);
      opt.path = SolverPath::Lifted;
      const auto b = solve_to_convergence(prog, zero_point(prog), s, opt);
      worst = std::max(worst, (a.point.z.data() - b.point.z.data()).norm());
    } catch (const NonConvergence&) {
      ++failures;
    }
  }
  return {failures == 0 && worst <= 1e-6, std::to_string(instances) + " instances (" + std::to_string(drawn) +
                                              " drawn), " + std::to_string(failures) +
                                              " not converged, max distance " + fmt("%.2e", worst)};
}

// 8. Derivative and projection hygiene.
Outcome numerical_hygiene() {
  Rng rng(88);
  double worst_fd = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto prog = random_program(rng);
    const int n = prog.layout().total();
    const BlockVector z(prog.layout(), uniform_vector(rng, n, -2, 2));
    const Eigen::VectorXd s = uniform_vector(rng, prog.param_dim(), -1, 1);
    const Eigen::VectorXd grad = objective_gradient(prog, z);
    const Eigen::MatrixXd J = constraint_jacobian(prog, z);
    Eigen::VectorXd fg(n);
    Eigen::MatrixXd fJ(prog.num_rows(), n);
    const double h = 1e-6;
    for (int j = 0; j < n; ++j) {
      BlockVector zp = z, zm = z;
      zp.data()[j] += h;
      zm.data()[j] -= h;
      fg[j] = (evaluate_objective(prog, zp) - evaluate_objective(prog, zm)) / (2 * h);
      fJ.col(j) = (evaluate_constraint(prog, zp, s) - evaluate_constraint(prog, zm, s)) / (2 * h);
    }
    worst_fd = std::max(worst_fd, (grad - fg).norm() / std::max(1.0, grad.norm()));
    worst_fd = std::max(worst_fd, (J - fJ).norm() / std::max(1.0, J.norm()));
  }

  const double inf = INFINITY;
  std::vector<ConvexSet> sets{ConvexSet::box(Eigen::Vector3d(-1, 0, -inf), Eigen::Vector3d(1, 2, 0.5)),
                              ConvexSet::ball(Eigen::Vector3d(0.3, -0.2, 1), 0.8),
                              ConvexSet::nonnegative_orthant(3)};
  int bad = 0;
  for (const auto& set : sets) {
    for (int k = 0; k < 300; ++k) {
      const Eigen::VectorXd x = uniform_vector(rng, 3, -4, 4), y = uniform_vector(rng, 3, -4, 4);
      const Eigen::VectorXd px = project(set, x), py = project(set, y);
      if ((project(set, px) - px).norm() > 1e-12) ++bad;
      if ((px - py).norm() > (x - y).norm() + 1e-12) ++bad;
      const Eigen::VectorXd c = project(set, uniform_vector(rng, 3, -4, 4));
      if ((x - px).dot(c - px) > 1e-10) ++bad;
    }
  }
  return {worst_fd <= 1e-5 && bad == 0,
          "worst finite-difference error " + fmt("%.2e", worst_fd) + ", projection failures " + std::to_string(bad)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"oracle correctness on the toy program", oracle_correctness},
      {"proximal descent on random instances", descent_invariant},
      {"bounded tracking error under drift", boundedness},
      {"error nonincreasing in M", rate_monotonicity},
      {"DC motor tracked vs oracle loop", dc_motor},
      {"error explodes at large sampling periods", dt_sweep_shape},
      {"direct and lifted paths agree", path_equivalence},
      {"finite differences and projections", numerical_hygiene},
  };
  // Optional arguments select criteria by number.
  std::vector<bool> selected(criteria.size(), argc == 1);
  for (int a = 1; a < argc; ++a) {
    const int k = std::atoi(argv[a]);
    if (k < 1 || k > static_cast<int>(criteria.size())) {
      std::fprintf(stderr, "unknown criterion '%s'\n", argv[a]);
      return 2;
    }
    selected[static_cast<std::size_t>(k - 1)] = true;
  }
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected[i]) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("criterion %zu %s: %s (%s)\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
