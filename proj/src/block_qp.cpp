#include "optrack/block_qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "optrack/errors.hpp"

namespace optrack {

namespace {

constexpr int kMaxNewtonIterations = 500;
constexpr double kArmijo = 1e-4;

double quad_value(const Eigen::MatrixXd& K, const Eigen::VectorXd& b, const Eigen::VectorXd& x) {
  return 0.5 * x.dot(K * x) + b.dot(x);
}

Eigen::VectorXd clamp(const Eigen::VectorXd& x, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

BlockQpResult solve_box(const Eigen::MatrixXd& K, const Eigen::VectorXd& b,
                        const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                        const Eigen::VectorXd& start) {
  const Eigen::Index n = b.size();
  const double scale = std::max({1.0, b.cwiseAbs().maxCoeff(), K.cwiseAbs().maxCoeff()});
  const double tol = 1e-13 * scale;

  BlockQpResult out;
  Eigen::VectorXd x = clamp(start, lo, hi);
  double fx = quad_value(K, b, x);
  std::vector<Eigen::Index> free_idx;
  free_idx.reserve(static_cast<std::size_t>(n));

  for (int it = 0; it < kMaxNewtonIterations; ++it) {
    out.iterations = it;
    const Eigen::VectorXd g = K * x + b;
    const Eigen::VectorXd pg = x - clamp(x - g, lo, hi);
    const double pg_norm = pg.cwiseAbs().maxCoeff();
    out.projected_gradient = pg_norm;
    if (pg_norm <= tol) break;

    // epsilon-active set: variables within eps of a bound whose gradient pushes outward.
    const double eps = std::min(1e-6 * scale, pg_norm);
    free_idx.clear();
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool at_lower = x[i] <= lo[i] + eps && g[i] > 0.0;
      const bool at_upper = x[i] >= hi[i] - eps && g[i] < 0.0;
      if (!at_lower && !at_upper) free_idx.push_back(i);
    }

    Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
    if (!free_idx.empty()) {
      const auto nf = static_cast<Eigen::Index>(free_idx.size());
      Eigen::MatrixXd Kff(nf, nf);
      Eigen::VectorXd gf(nf);
      for (Eigen::Index r = 0; r < nf; ++r) {
        gf[r] = g[free_idx[static_cast<std::size_t>(r)]];
        for (Eigen::Index c = 0; c < nf; ++c) {
          Kff(r, c) = K(free_idx[static_cast<std::size_t>(r)], free_idx[static_cast<std::size_t>(c)]);
        }
      }
      Eigen::LLT<Eigen::MatrixXd> llt(Kff);
      if (llt.info() != Eigen::Success) {
        throw NumericalError("block QP Hessian is not positive definite");
      }
      const Eigen::VectorXd df = llt.solve(-gf);
      for (Eigen::Index r = 0; r < nf; ++r) d[free_idx[static_cast<std::size_t>(r)]] = df[r];
    }
    // Binding variables move along the negative gradient; clamping keeps them at the bound.
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::find(free_idx.begin(), free_idx.end(), i) == free_idx.end()) d[i] = -g[i];
    }

    bool accepted = false;
    double t = 1.0;
    for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
      const Eigen::VectorXd trial = clamp(x + t * d, lo, hi);
      const double model = g.dot(trial - x);
      const double f_trial = quad_value(K, b, trial);
      if (model <= 0.0 && f_trial <= fx + kArmijo * model) {
        if (f_trial < fx) {
          x = trial;
          fx = f_trial;
          accepted = true;
        }
        break;
      }
    }
    if (!accepted) {
      // Fall back to a projected-gradient step with step 1/L.
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(K, Eigen::EigenvaluesOnly);
      const double L = eig.eigenvalues().maxCoeff();
      const Eigen::VectorXd trial = clamp(x - g / L, lo, hi);
      const double f_trial = quad_value(K, b, trial);
      if (!(f_trial < fx)) break;
      x = trial;
      fx = f_trial;
    }
  }
  out.x = std::move(x);
  return out;
}

BlockQpResult solve_ball(const Eigen::MatrixXd& K, const Eigen::VectorXd& b,
                         const Eigen::VectorXd& center, double radius) {
  // Shift x = center + v: minimise 1/2 v'Kv + (Kc + b)'v over ||v|| <= r.
  const Eigen::VectorXd bv = K * center + b;
  BlockQpResult out;
  Eigen::LLT<Eigen::MatrixXd> llt(K);
  if (llt.info() != Eigen::Success) throw NumericalError("block QP Hessian is not positive definite");
  Eigen::VectorXd v = llt.solve(-bv);
  if (v.norm() > radius) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(K);
    const Eigen::VectorXd lam = eig.eigenvalues();
    const Eigen::VectorXd beta = eig.eigenvectors().transpose() * bv;
    auto norm_at = [&](double shift) {
      return (beta.array() / (lam.array() + shift)).matrix().norm();
    };
    // ||v(shift)|| is decreasing in shift; bracket the root of ||v|| = r.
    double lo = 0.0;
    double hi = bv.norm() / radius;
    while (norm_at(hi) > radius) hi *= 2.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
      const double mid = 0.5 * (lo + hi);
      (norm_at(mid) > radius ? lo : hi) = mid;
      out.iterations = it + 1;
    }
    v = -eig.eigenvectors() * (beta.array() / (lam.array() + hi)).matrix();
    const double nv = v.norm();
    if (nv > radius) v *= radius / nv;
  }
  out.x = center + v;
  return out;
}

}  // namespace

BlockQpResult minimize_quadratic_over_set(const ConvexSet& set, const Eigen::MatrixXd& K,
                                          const Eigen::VectorXd& b, const Eigen::VectorXd& start) {
  const int n = set.dimension();
  if (K.rows() != n || K.cols() != n || b.size() != n || start.size() != n) {
    throw DimensionError("block QP data does not match the set dimension " + std::to_string(n));
  }
  if (!K.allFinite() || !b.allFinite()) {
    throw NumericalError("block QP assembled with non-finite values");
  }
  if (set.get_if<ConvexSet::WholeSpace>()) {
    Eigen::LLT<Eigen::MatrixXd> llt(K);
    if (llt.info() != Eigen::Success) throw NumericalError("block QP Hessian is not positive definite");
    return {llt.solve(-b), 0, 0.0};
  }
  if (const auto* box = set.get_if<ConvexSet::Box>()) {
    return solve_box(K, b, box->lower, box->upper, start);
  }
  if (set.get_if<ConvexSet::NonnegativeOrthant>()) {
    const Eigen::VectorXd lo = Eigen::VectorXd::Zero(n);
    const Eigen::VectorXd hi = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
    return solve_box(K, b, lo, hi, start);
  }
  const auto* ball = set.get_if<ConvexSet::Ball>();
  return solve_ball(K, b, ball->center, ball->radius);
}

}  // namespace optrack
