#pragma once

#include <string_view>
#include <variant>

#include <Eigen/Core>

namespace optrack {

/// Closed convex set attached to one decision block. Supported variants all
/// have a closed-form Euclidean projection.
class ConvexSet {
 public:
  struct Box {
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
  };
  struct Ball {
    Eigen::VectorXd center;
    double radius;
  };
  struct NonnegativeOrthant {
    int dim;
  };
  /// Only meant for auxiliary blocks of a lifted program.
  struct WholeSpace {
    int dim;
  };
  using Variant = std::variant<Box, Ball, NonnegativeOrthant, WholeSpace>;

  /// Infinite bounds are allowed; lower must not exceed upper.
  static ConvexSet box(Eigen::VectorXd lower, Eigen::VectorXd upper);
  static ConvexSet ball(Eigen::VectorXd center, double radius);
  static ConvexSet nonnegative_orthant(int dim);
  static ConvexSet whole_space(int dim);

  int dimension() const;
  const Variant& variant() const { return set_; }
  std::string_view kind() const;

  template <class T>
  const T* get_if() const { return std::get_if<T>(&set_); }

  /// Membership up to an absolute tolerance.
  bool contains(const Eigen::Ref<const Eigen::VectorXd>& x, double tol = 0.0) const;

 private:
  explicit ConvexSet(Variant set) : set_(std::move(set)) {}
  Variant set_;
};

/// Euclidean projection onto `set`. At the centre of a ball the centre is returned.
Eigen::VectorXd project(const ConvexSet& set, const Eigen::Ref<const Eigen::VectorXd>& x);

/// argmin_{z in set} (rho/2)||x_target - z||^2 + (alpha/2)||z - x_prox||^2,
/// i.e. the projection of the weighted average (alpha x_prox + rho x_target)/(alpha + rho).
Eigen::VectorXd prox_weighted(const ConvexSet& set, const Eigen::Ref<const Eigen::VectorXd>& x_prox,
                              double alpha, const Eigen::Ref<const Eigen::VectorXd>& x_target,
                              double rho);

}  // namespace optrack
