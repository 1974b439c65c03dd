#include "optrack/kkt_newton.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/QR>

namespace optrack {

Eigen::MatrixXd lagrangian_hessian(const MultiConvexProgram& prog, const Eigen::VectorXd& mu) {
  check_multiplier(prog, mu);
  const auto& layout = prog.layout();
  Eigen::MatrixXd W = prog.objective().H;
  for (const auto& term : prog.constraint().bilinear_terms()) {
    const int a = layout.offset(term.block_a) + term.index_a;
    const int b = layout.offset(term.block_b) + term.index_b;
    const double v = term.coeff * mu[term.row];
    W(a, b) += v;
    W(b, a) += v;
  }
  return W;
}

namespace {

enum class Bound { Free, Lower, Upper };

// Returns false when some block cannot be handled by a fixed-active-set step.
bool classify(const MultiConvexProgram& prog, const BlockVector& z, const Eigen::VectorXd& grad,
              std::vector<Bound>& status, Eigen::VectorXd& bound_value) {
  const auto& layout = prog.layout();
  for (int i = 0; i < layout.num_blocks(); ++i) {
    const ConvexSet& set = prog.set(i);
    const int off = layout.offset(i);
    const Eigen::VectorXd zi = z.block(i);
    const Eigen::VectorXd trial = project(set, zi - grad.segment(off, layout.size(i)));
    if (const auto* box = set.get_if<ConvexSet::Box>()) {
      for (int k = 0; k < layout.size(i); ++k) {
        if (trial[k] <= box->lower[k]) {
          status[off + k] = Bound::Lower;
          bound_value[off + k] = box->lower[k];
        } else if (trial[k] >= box->upper[k]) {
          status[off + k] = Bound::Upper;
          bound_value[off + k] = box->upper[k];
        }
      }
    } else if (set.get_if<ConvexSet::NonnegativeOrthant>()) {
      for (int k = 0; k < layout.size(i); ++k) {
        if (trial[k] <= 0.0) {
          status[off + k] = Bound::Lower;
          bound_value[off + k] = 0.0;
        }
      }
    } else if (const auto* ball = set.get_if<ConvexSet::Ball>()) {
      if ((trial - ball->center).norm() >= ball->radius * (1.0 - 1e-12)) return false;
    }
  }
  return true;
}

std::vector<int> free_coordinates(const std::vector<Bound>& status) {
  std::vector<int> idx;
  for (std::size_t j = 0; j < status.size(); ++j) {
    if (status[j] == Bound::Free) idx.push_back(static_cast<int>(j));
  }
  return idx;
}

// Reduced Hessian on the null space of the free Jacobian columns must be positive definite.
bool second_order_ok(const MultiConvexProgram& prog, const PrimalDualPoint& w,
                     const std::vector<int>& free_idx) {
  const Eigen::MatrixXd W = lagrangian_hessian(prog, w.mu);
  const Eigen::MatrixXd J = constraint_jacobian(prog, w.z);
  const int nf = static_cast<int>(free_idx.size());
  if (nf == 0) return true;
  Eigen::MatrixXd Jf(J.rows(), nf);
  Eigen::MatrixXd Wf(nf, nf);
  for (int c = 0; c < nf; ++c) {
    const int jc = free_idx[static_cast<std::size_t>(c)];
    Jf.col(c) = J.col(jc);
    for (int r = 0; r < nf; ++r) Wf(r, c) = W(free_idx[static_cast<std::size_t>(r)], jc);
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(Jf);
  const Eigen::MatrixXd Z = lu.kernel();
  if (Z.cols() == 0 || (Z.cols() == 1 && Z.norm() == 0.0)) return true;
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(Z);
  const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(Z.rows(), Z.cols());
  const Eigen::MatrixXd R = Q.transpose() * Wf * Q;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (R + R.transpose()),
                                                           Eigen::EigenvaluesOnly);
  const double scale = std::max(1.0, W.cwiseAbs().maxCoeff());
  return eig.eigenvalues().minCoeff() > -1e-9 * scale;
}

}  // namespace

std::optional<PrimalDualPoint> newton_polish(const MultiConvexProgram& prog,
                                             const PrimalDualPoint& w, const Eigen::VectorXd& s,
                                             double tol, int max_iterations) {
  const int n = prog.layout().total();
  const int m = prog.num_rows();
  PrimalDualPoint cur = w;
  for (int it = 0; it <= max_iterations; ++it) {
    const double res = kkt_residual(prog, cur, s);
    if (!std::isfinite(res)) return std::nullopt;
    const Eigen::VectorXd F = kkt_map(prog, cur, s);
    std::vector<Bound> status(static_cast<std::size_t>(n), Bound::Free);
    Eigen::VectorXd bound_value = Eigen::VectorXd::Zero(n);
    if (!classify(prog, cur.z, F.head(n), status, bound_value)) return std::nullopt;
    if (res < tol) {
      if (!second_order_ok(prog, cur, free_coordinates(status))) return std::nullopt;
      return cur;
    }
    if (it == max_iterations) break;

    // Pin active coordinates to their bounds, then linearise around the pinned point.
    for (int j = 0; j < n; ++j) {
      if (status[static_cast<std::size_t>(j)] != Bound::Free) cur.z.data()[j] = bound_value[j];
    }
    const Eigen::VectorXd Fp = kkt_map(prog, cur, s);
    const Eigen::MatrixXd W = lagrangian_hessian(prog, cur.mu);
    const Eigen::MatrixXd J = constraint_jacobian(prog, cur.z);

    const std::vector<int> free_idx = free_coordinates(status);
    const int nf = static_cast<int>(free_idx.size());
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(nf + m, nf + m);
    Eigen::VectorXd rhs(nf + m);
    for (int r = 0; r < nf; ++r) {
      const int jr = free_idx[static_cast<std::size_t>(r)];
      for (int c = 0; c < nf; ++c) K(r, c) = W(jr, free_idx[static_cast<std::size_t>(c)]);
      K.block(r, nf, 1, m) = J.col(jr).transpose();
      rhs[r] = -Fp[jr];
    }
    for (int c = 0; c < nf; ++c) K.block(nf, c, m, 1) = J.col(free_idx[static_cast<std::size_t>(c)]);
    rhs.tail(m) = -Fp.tail(m);

    Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
    if (!lu.isInvertible()) return std::nullopt;
    const Eigen::VectorXd step = lu.solve(rhs);
    if (!step.allFinite()) return std::nullopt;
    for (int r = 0; r < nf; ++r) cur.z.data()[free_idx[static_cast<std::size_t>(r)]] += step[r];
    cur.mu += step.tail(m);
    for (int i = 0; i < prog.num_blocks(); ++i) cur.z.block(i) = project(prog.set(i), cur.z.block(i));
  }
  return std::nullopt;
}

}  // namespace optrack
