#include "support.hpp"

namespace optrack::testing {

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Eigen::VectorXd uniform_vector(Rng& rng, int n, double lo, double hi) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = uniform(rng, lo, hi);
  return v;
}

namespace {

int pick(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

Eigen::MatrixXd random_matrix(Rng& rng, int r, int c) {
  Eigen::MatrixXd M(r, c);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) M(i, j) = uniform(rng, -1.0, 1.0);
  }
  return M;
}

ConvexSet random_set(Rng& rng, int n, bool boxes_only) {
  const int kind = boxes_only ? 0 : pick(rng, 0, 3);
  switch (kind) {
    case 0: {
      Eigen::VectorXd lo = uniform_vector(rng, n, -2.0, 0.0);
      Eigen::VectorXd hi = lo + uniform_vector(rng, n, 0.5, 3.0);
      return ConvexSet::box(lo, hi);
    }
    case 1:
      return ConvexSet::ball(uniform_vector(rng, n, -0.5, 0.5), uniform(rng, 0.5, 2.0));
    case 2:
      return ConvexSet::nonnegative_orthant(n);
    default: {
      // Half-infinite box exercises IEEE infinities in the clamp.
      Eigen::VectorXd lo = uniform_vector(rng, n, -2.0, 0.0);
      Eigen::VectorXd hi = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
      return ConvexSet::box(lo, hi);
    }
  }
}

}  // namespace

MultiConvexProgram random_program(Rng& rng, const RandomSpec& spec) {
  const int P = pick(rng, 1, spec.max_blocks);
  std::vector<int> sizes;
  for (int i = 0; i < P; ++i) sizes.push_back(pick(rng, 1, spec.max_block_size));
  BlockLayout layout(sizes);
  const int n = layout.total();

  QuadraticObjective obj;
  if (spec.strongly_convex) {
    const Eigen::MatrixXd G = random_matrix(rng, n, n);
    obj.H = G * G.transpose() + Eigen::MatrixXd::Identity(n, n);
  } else {
    // PSD (possibly singular) diagonal blocks, arbitrary symmetric coupling.
    obj.H = random_matrix(rng, n, n);
    obj.H = 0.5 * (obj.H + obj.H.transpose()).eval();
    for (int i = 0; i < P; ++i) {
      const int ni = layout.size(i);
      const int rank = pick(rng, 0, ni);
      const Eigen::MatrixXd G = random_matrix(rng, ni, rank);
      obj.H.block(layout.offset(i), layout.offset(i), ni, ni) = G * G.transpose();
    }
  }
  obj.h = uniform_vector(rng, n, -1.0, 1.0);
  obj.c0 = uniform(rng, -1.0, 1.0);

  const int m = pick(rng, 1, spec.max_rows);
  BilinearConstraint g(m, spec.param_dim);
  for (int r = 0; r < m; ++r) {
    if (P >= 2) {
      const int terms = pick(rng, 1, 3);
      for (int t = 0; t < terms; ++t) {
        const int a = pick(rng, 0, P - 1);
        int b = pick(rng, 0, P - 2);
        if (b >= a) ++b;
        g.add_bilinear(r, a, pick(rng, 0, layout.size(a) - 1), b, pick(rng, 0, layout.size(b) - 1),
                       spec.coupling * uniform(rng, -1.0, 1.0));
      }
    }
    const int lin = pick(rng, 1, 3);
    for (int t = 0; t < lin; ++t) {
      const int i = pick(rng, 0, P - 1);
      g.add_linear(r, i, pick(rng, 0, layout.size(i) - 1), uniform(rng, -1.0, 1.0));
    }
  }
  g.S() = random_matrix(rng, m, spec.param_dim);
  g.t() = uniform_vector(rng, m, -0.5, 0.5);

  std::vector<ConvexSet> sets;
  for (int i = 0; i < P; ++i) sets.push_back(random_set(rng, layout.size(i), spec.boxes_only));
  return MultiConvexProgram(layout, obj, g, sets);
}

BlockVector random_feasible_point(Rng& rng, const MultiConvexProgram& prog) {
  BlockVector z(prog.layout());
  for (int i = 0; i < prog.num_blocks(); ++i) {
    const Eigen::VectorXd x = uniform_vector(rng, prog.layout().size(i), -3.0, 3.0);
    z.block(i) = project(prog.set(i), x);
  }
  return z;
}

double brute_force_objective(const MultiConvexProgram& prog, const BlockVector& z) {
  const auto& obj = prog.objective();
  const Eigen::VectorXd& x = z.data();
  double total = obj.c0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    total += obj.h[i] * x[i];
    for (Eigen::Index j = 0; j < x.size(); ++j) total += 0.5 * obj.H(i, j) * x[i] * x[j];
  }
  return total;
}

Eigen::VectorXd brute_force_constraint(const MultiConvexProgram& prog, const BlockVector& z,
                                       const Eigen::VectorXd& s) {
  const auto& g = prog.constraint();
  Eigen::VectorXd out = g.t();
  for (int r = 0; r < g.rows(); ++r) {
    for (Eigen::Index c = 0; c < s.size(); ++c) out[r] += g.S()(r, c) * s[c];
  }
  for (const auto& t : g.bilinear_terms()) {
    out[t.row] += t.coeff * z.block(t.block_a)[t.index_a] * z.block(t.block_b)[t.index_b];
  }
  for (const auto& t : g.linear_terms()) out[t.row] += t.coeff * z.block(t.block)[t.index];
  return out;
}

}  // namespace optrack::testing
