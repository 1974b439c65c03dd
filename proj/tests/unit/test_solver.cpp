#include <doctest.h>

#include <cmath>

#include "optrack/errors.hpp"
#include "optrack/solver.hpp"
#include "optrack/toy.hpp"
#include "support.hpp"

using namespace optrack;
using namespace optrack::testing;

namespace {

MultiConvexProgram scalar_tracking_program() {
  // min 1/2 z^2  s.t.  z - s = 0
  BilinearConstraint g(1, 1);
  g.add_linear(0, 0, 0, 1.0);
  g.S()(0, 0) = -1.0;
  return MultiConvexProgram(BlockLayout({1}), {Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Zero(1), 0.0},
                            g, {ConvexSet::whole_space(1)});
}

Eigen::VectorXd vec1(double x) { return Eigen::VectorXd::Constant(1, x); }

PrimalDualPoint toy_critical(double s) {
  const double r = std::sqrt(s);
  return {BlockVector(BlockLayout({1, 1}), Eigen::Vector2d(r, r)), vec1(-2.0 * (r - 1.0) / r)};
}

double block_objective(const MultiConvexProgram& prog, const BlockVector& z, int i, const Eigen::VectorXd& x,
                       const Eigen::VectorXd& mu, const Eigen::VectorXd& s, double rho, double alpha) {
  BlockVector zz = z;
  zz.block(i) = x;
  return augmented_lagrangian(prog, zz, mu, s, rho) + 0.5 * alpha * (x - z.block(i)).squaredNorm();
}

bool all_in_sets(const MultiConvexProgram& prog, const BlockVector& z) {
  for (int i = 0; i < prog.num_blocks(); ++i) {
    if (!prog.set(i).contains(z.block(i), 1e-12)) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("solver") {

TEST_CASE("config validation") {
  const auto toy = toy_program();
  CHECK_NOTHROW(TrackerConfig::defaults(toy, 1.0, 1).validate(toy));
  CHECK_THROWS_AS(TrackerConfig::defaults(toy, 0.0, 1).validate(toy), ModelError);
  CHECK_THROWS_AS(TrackerConfig::defaults(toy, -2.0, 1).validate(toy), ModelError);
  CHECK_THROWS_AS(TrackerConfig::defaults(toy, 1.0, 0).validate(toy), ModelError);
  auto c = TrackerConfig::defaults(toy, 1.0, 1);
  c.alpha = {1e-6};
  CHECK_THROWS_AS(c.validate(toy), ModelError);
  c.alpha = {1e-6, 0.0};
  CHECK_THROWS_AS(c.validate(toy), ModelError);
  CHECK(solver_path_from_string("direct") == SolverPath::Direct);
  CHECK(solver_path_from_string("lifted") == SolverPath::Lifted);
  CHECK(to_string(SolverPath::Lifted) == "lifted");
  CHECK_THROWS_AS(solver_path_from_string("newton"), ModelError);
}

TEST_CASE("track step on a scalar program matches the closed form") {
  const auto prog = scalar_tracking_program();
  const double rho = 3.0, alpha = 0.5, z0 = 0.2, mu0 = -0.4, s = 1.5;
  auto config = TrackerConfig::defaults(prog, rho, 1, SolverPath::Direct);
  config.alpha = {alpha};
  TrackerState state = make_tracker_state(prog, config, {BlockVector(prog.layout(), vec1(z0)), vec1(mu0)});
  const auto rep = track_step(prog, state, vec1(s));
  // argmin 1/2 z^2 + mu (z - s) + rho/2 (z - s)^2 + alpha/2 (z - z0)^2
  const double z1 = (rho * s - mu0 + alpha * z0) / (1.0 + rho + alpha);
  const double mu1 = mu0 + rho * (z1 - s);
  CHECK(rep.point.z.data()[0] == doctest::Approx(z1).epsilon(1e-14));
  CHECK(rep.point.mu[0] == doctest::Approx(mu1).epsilon(1e-14));
  CHECK(rep.feasibility == doctest::Approx(std::abs(z1 - s)).epsilon(1e-14));
  REQUIRE(rep.al_values.size() == 2);
  REQUIRE(rep.displacements.size() == 1);
  CHECK(rep.displacements[0] == doctest::Approx(std::abs(z1 - z0)).epsilon(1e-14));
  CHECK(state.warm.mu[0] == rep.point.mu[0]);
}

TEST_CASE("toy critical points are fixed points of both paths") {
  const auto toy = toy_program();
  for (double s : {0.25, 1.0, 2.0, 4.0}) {
    for (SolverPath path : {SolverPath::Direct, SolverPath::Lifted}) {
      const auto w = toy_critical(s);
      CHECK(kkt_residual(toy, w, vec1(s)) < 1e-14);
      TrackerState state = make_tracker_state(toy, TrackerConfig::defaults(toy, 5.0, 4, path), w);
      const auto rep = track_step(toy, state, vec1(s));
      CHECK((rep.point.stacked() - w.stacked()).norm() < 1e-12);
    }
  }
}

TEST_CASE("block update minimises the proximal block objective") {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const auto prog = random_program(rng);
    const double rho = uniform(rng, 0.1, 20.0);
    auto config = TrackerConfig::defaults(prog, rho, 1, SolverPath::Direct);
    for (auto& a : config.alpha) a = uniform(rng, 1e-6, 1.0);
    const BlockVector z = random_feasible_point(rng, prog);
    const Eigen::VectorXd mu = uniform_vector(rng, prog.num_rows(), -2, 2);
    const Eigen::VectorXd s = uniform_vector(rng, prog.param_dim(), -1, 1);
    const int i = std::uniform_int_distribution<int>(0, prog.num_blocks() - 1)(rng);
    const double alpha = config.alpha[static_cast<std::size_t>(i)];
    const Eigen::VectorXd x = block_update(prog, config, i, z, mu, s);
    CHECK(prog.set(i).contains(x, 1e-12));
    const double best = block_objective(prog, z, i, x, mu, s, rho, alpha);
    const double slack = 1e-9 * std::max(1.0, std::abs(best));
    for (int k = 0; k < 100; ++k) {
      const int n = prog.layout().size(i);
      const double scale = k < 50 ? 1e-3 : 3.0;
      const Eigen::VectorXd y = project(prog.set(i), x + scale * uniform_vector(rng, n, -1, 1));
      CHECK(best <= block_objective(prog, z, i, y, mu, s, rho, alpha) + slack);
    }
  }
}

TEST_CASE("block update on one scalar box agrees with a grid search") {
  BilinearConstraint g(1, 1);
  g.add_bilinear(0, 0, 0, 1, 0, 2.0);
  g.S()(0, 0) = -1.0;
  Eigen::MatrixXd H = Eigen::Vector2d(0.0, 1.0).asDiagonal();
  const MultiConvexProgram prog(BlockLayout({1, 1}), {H, Eigen::Vector2d(0.3, 0.0), 0.0}, g,
                                {ConvexSet::box(vec1(-1.0), vec1(0.4)), ConvexSet::whole_space(1)});
  auto config = TrackerConfig::defaults(prog, 2.0, 1, SolverPath::Direct);
  const BlockVector z(prog.layout(), Eigen::Vector2d(0.0, 0.7));
  const Eigen::VectorXd mu = vec1(0.25), s = vec1(0.5);
  const double x = block_update(prog, config, 0, z, mu, s)[0];
  double best_x = 0.0, best = INFINITY;
  for (int k = 0; k <= 1400000; ++k) {
    const double c = -1.0 + 1.4 * k / 1400000.0;
    const double v = block_objective(prog, z, 0, vec1(c), mu, s, 2.0, kDefaultAlpha);
    if (v < best) best = v, best_x = c;
  }
  CHECK(x == doctest::Approx(best_x).epsilon(2e-6));
}

TEST_CASE("sweeps satisfy the proximal descent inequality and stay in the sets") {
  Rng rng(22);
  for (int trial = 0; trial < 200; ++trial) {
    const auto prog = random_program(rng);
    auto config = TrackerConfig::defaults(prog, uniform(rng, 0.1, 50.0), 1, SolverPath::Direct);
    for (auto& a : config.alpha) a = uniform(rng, 1e-2, 1.0);
    BlockVector z = random_feasible_point(rng, prog);
    const Eigen::VectorXd mu = uniform_vector(rng, prog.num_rows(), -2, 2);
    const Eigen::VectorXd s = uniform_vector(rng, prog.param_dim(), -1, 1);
    double prev = augmented_lagrangian(prog, z, mu, s, config.rho);
    for (int l = 0; l < 5; ++l) {
      const BlockVector next = sweep(prog, config, z, mu, s);
      double prox = 0.0;
      for (int i = 0; i < prog.num_blocks(); ++i) {
        prox += 0.5 * config.alpha[static_cast<std::size_t>(i)] * (next.block(i) - z.block(i)).squaredNorm();
      }
      const double cur = augmented_lagrangian(prog, next, mu, s, config.rho);
      CHECK(cur + prox <= prev + 1e-9 * std::max(1.0, std::abs(prev)));
      CHECK(all_in_sets(prog, next));
      z = next;
      prev = cur;
    }
  }
}

TEST_CASE("track step reports are consistent with the program") {
  Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    const auto prog = random_program(rng);
    const SolverPath path = trial % 2 ? SolverPath::Lifted : SolverPath::Direct;
    const int M = 1 + trial % 4;
    const double rho = uniform(rng, 0.5, 20.0);
    PrimalDualPoint warm{random_feasible_point(rng, prog), uniform_vector(rng, prog.num_rows(), -1, 1)};
    TrackerState state = make_tracker_state(prog, TrackerConfig::defaults(prog, rho, M, path), warm);
    CHECK(state.lifted.has_value() == (path == SolverPath::Lifted));
    const Eigen::VectorXd s = uniform_vector(rng, prog.param_dim(), -1, 1);
    const auto rep = track_step(prog, state, s);
    CHECK(rep.al_values.size() == static_cast<std::size_t>(M + 1));
    CHECK(rep.displacements.size() == static_cast<std::size_t>(M));
    CHECK(all_in_sets(prog, rep.point.z));
    CHECK(rep.feasibility == doctest::Approx(evaluate_constraint(prog, rep.point.z, s).norm()).epsilon(1e-12));
    CHECK(rep.kkt_residual == doctest::Approx(kkt_residual(prog, rep.point, s)).epsilon(1e-12));
    if (path == SolverPath::Direct) {
      const Eigen::VectorXd expected = warm.mu + rho * evaluate_constraint(prog, rep.point.z, s);
      CHECK((rep.point.mu - expected).norm() <= 1e-12 * std::max(1.0, expected.norm()));
    } else {
      const auto& lifted = *state.lifted;
      const Eigen::VectorXd expected = warm.mu + rho * evaluate_constraint(prog, lifted.y, s);
      CHECK((rep.point.mu - expected).norm() <= 1e-12 * std::max(1.0, expected.norm()));
    }
  }
}

TEST_CASE("lifted path equals the direct path on the lifted program") {
  Rng rng(24);
  for (int trial = 0; trial < 50; ++trial) {
    const auto prog = random_program(rng);
    const auto lifted_prog = lift_program(prog);
    CHECK(lifted_prog.num_blocks() == 2 * prog.num_blocks());
    CHECK(lifted_prog.num_rows() == prog.num_rows() + prog.layout().total());
    const double rho = uniform(rng, 0.5, 20.0);
    const int M = 3;
    const PrimalDualPoint warm{random_feasible_point(rng, prog), uniform_vector(rng, prog.num_rows(), -1, 1)};
    TrackerState lifted_state = make_tracker_state(prog, TrackerConfig::defaults(prog, rho, M, SolverPath::Lifted), warm);
    LiftedState aux = lifted_state_from(prog, warm);
    aux.y.data() += 0.1 * uniform_vector(rng, prog.layout().total(), -1, 1);
    lifted_state.lifted = aux;

    auto direct_config = TrackerConfig::defaults(lifted_prog, rho, M, SolverPath::Direct);
    direct_config.alpha = lifted_alpha(lifted_state.config.alpha);
    Eigen::VectorXd stacked_z(2 * prog.layout().total()), stacked_mu(lifted_prog.num_rows());
    stacked_z << aux.y.data(), warm.z.data();
    stacked_mu << warm.mu, aux.nu.data();
    TrackerState direct_state =
        make_tracker_state(lifted_prog, direct_config, {BlockVector(lifted_prog.layout(), stacked_z), stacked_mu});

    const Eigen::VectorXd s = uniform_vector(rng, prog.param_dim(), -1, 1);
    for (int k = 0; k < 3; ++k) {
      const auto a = track_step(prog, lifted_state, s);
      const auto b = track_step(lifted_prog, direct_state, s);
      Eigen::VectorXd lhs(stacked_z.size() + stacked_mu.size());
      lhs << lifted_state.lifted->y.data(), a.point.z.data(), a.point.mu, lifted_state.lifted->nu.data();
      const Eigen::VectorXd rhs = b.point.stacked();
      CHECK((lhs - rhs).norm() <= 1e-9 * std::max(1.0, rhs.norm()));
      for (std::size_t l = 0; l < a.al_values.size(); ++l) {
        CHECK(a.al_values[l] == doctest::Approx(b.al_values[l]).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("al stationarity vanishes at the inner limit") {
  Rng rng(25);
  RandomSpec spec;
  spec.strongly_convex = true;
  for (int trial = 0; trial < 30; ++trial) {
    const auto prog = random_program(rng, spec);
    const auto config = TrackerConfig::defaults(prog, 1.0, 1, SolverPath::Direct);
    const Eigen::VectorXd mu = uniform_vector(rng, prog.num_rows(), -1, 1);
    const Eigen::VectorXd s = uniform_vector(rng, prog.param_dim(), -1, 1);
    const BlockVector z = inner_limit(prog, config, random_feasible_point(rng, prog), mu, s, 1e-13, 200000);
    CHECK(al_stationarity(prog, z, mu, s, 1.0) < 1e-7);
    const BlockVector again = sweep(prog, config, z, mu, s);
    CHECK((again.data() - z.data()).norm() < 1e-9);
  }
}

TEST_CASE("oracle reaches the requested residual") {
  const auto toy = toy_program();
  OracleOptions opt;
  opt.tol = 1e-10;
  for (double s : {0.5, 1.0, 3.0}) {
    for (SolverPath path : {SolverPath::Direct, SolverPath::Lifted}) {
      opt.path = path;
      const auto res = solve_to_convergence(toy, zero_point(toy), vec1(s), opt);
      CHECK(res.residual < 1e-10);
      CHECK((res.point.stacked() - toy_critical(s).stacked()).norm() < 1e-8);
    }
  }
  Rng rng(26);
  RandomSpec spec;
  spec.strongly_convex = true;
  spec.boxes_only = true;
  spec.coupling = 0.2;
  for (int trial = 0; trial < 20; ++trial) {
    const auto prog = random_program(rng, spec);
    const Eigen::VectorXd s = uniform_vector(rng, prog.param_dim(), -0.5, 0.5);
    try {
      const auto res = solve_to_convergence(prog, zero_point(prog), s, OracleOptions{});
      CHECK(res.residual < 1e-8);
      CHECK(kkt_residual(prog, res.point, s) < 1e-8);
    } catch (const NonConvergence& e) {
      // Random box-constrained instances may be infeasible; the best point must still be usable.
      CHECK(std::isfinite(e.best().residual));
    }
  }
}

TEST_CASE("oracle reports non-convergence with the best point") {
  const auto toy = toy_program();
  OracleOptions opt;
  opt.newton_polish = false;
  opt.max_outer = 1;
  opt.sweeps = 1;
  opt.tol = 1e-15;
  PrimalDualPoint far{BlockVector(toy.layout(), Eigen::Vector2d(2, 0)), vec1(5.0)};
  try {
    solve_to_convergence(toy, far, vec1(1.0), opt);
    FAIL("expected NonConvergence");
  } catch (const NonConvergence& e) {
    CHECK(std::isfinite(e.best().residual));
    CHECK(e.best().residual > 1e-15);
  }
  opt.tol = 0.0;
  CHECK_THROWS_AS(solve_to_convergence(toy, far, vec1(1.0), opt), ModelError);
}

}  // TEST_SUITE
