#include "optrack/convex_set.hpp"

#include <cmath>
#include <string>

#include "optrack/errors.hpp"

namespace optrack {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void check_dimension(const ConvexSet& set, Eigen::Index n, const char* what) {
  if (n != set.dimension()) {
    throw DimensionError(std::string(what) + ": vector has length " + std::to_string(n) + ", " +
                         std::string(set.kind()) + " set has dimension " +
                         std::to_string(set.dimension()));
  }
}

}  // namespace

ConvexSet ConvexSet::box(Eigen::VectorXd lower, Eigen::VectorXd upper) {
  if (lower.size() != upper.size()) {
    throw DimensionError("box bounds have different lengths");
  }
  for (Eigen::Index i = 0; i < lower.size(); ++i) {
    if (std::isnan(lower[i]) || std::isnan(upper[i]) || lower[i] > upper[i]) {
      throw ModelError("box bound " + std::to_string(i) + " is empty or NaN: [" +
                       std::to_string(lower[i]) + ", " + std::to_string(upper[i]) + "]");
    }
  }
  return ConvexSet(Box{std::move(lower), std::move(upper)});
}

ConvexSet ConvexSet::ball(Eigen::VectorXd center, double radius) {
  if (!(radius > 0.0) || !std::isfinite(radius)) {
    throw ModelError("ball radius must be positive and finite");
  }
  if (!center.allFinite()) {
    throw ModelError("ball centre must be finite");
  }
  return ConvexSet(Ball{std::move(center), radius});
}

ConvexSet ConvexSet::nonnegative_orthant(int dim) {
  if (dim < 1) throw ModelError("orthant dimension must be positive");
  return ConvexSet(NonnegativeOrthant{dim});
}

ConvexSet ConvexSet::whole_space(int dim) {
  if (dim < 1) throw ModelError("whole-space dimension must be positive");
  return ConvexSet(WholeSpace{dim});
}

int ConvexSet::dimension() const {
  return std::visit(Overloaded{
                        [](const Box& b) { return static_cast<int>(b.lower.size()); },
                        [](const Ball& b) { return static_cast<int>(b.center.size()); },
                        [](const NonnegativeOrthant& o) { return o.dim; },
                        [](const WholeSpace& w) { return w.dim; },
                    },
                    set_);
}

std::string_view ConvexSet::kind() const {
  return std::visit(Overloaded{
                        [](const Box&) { return std::string_view("box"); },
                        [](const Ball&) { return std::string_view("ball"); },
                        [](const NonnegativeOrthant&) { return std::string_view("orthant"); },
                        [](const WholeSpace&) { return std::string_view("whole_space"); },
                    },
                    set_);
}

bool ConvexSet::contains(const Eigen::Ref<const Eigen::VectorXd>& x, double tol) const {
  check_dimension(*this, x.size(), "contains");
  return std::visit(
      Overloaded{
          [&](const Box& b) {
            return ((x - b.lower).array() >= -tol).all() && ((b.upper - x).array() >= -tol).all();
          },
          [&](const Ball& b) { return (x - b.center).norm() <= b.radius + tol; },
          [&](const NonnegativeOrthant&) { return (x.array() >= -tol).all(); },
          [&](const WholeSpace&) { return x.allFinite(); },
      },
      set_);
}

Eigen::VectorXd project(const ConvexSet& set, const Eigen::Ref<const Eigen::VectorXd>& x) {
  check_dimension(set, x.size(), "project");
  return std::visit(
      Overloaded{
          [&](const ConvexSet::Box& b) -> Eigen::VectorXd {
            return x.cwiseMax(b.lower).cwiseMin(b.upper);
          },
          [&](const ConvexSet::Ball& b) -> Eigen::VectorXd {
            const Eigen::VectorXd d = x - b.center;
            const double dist = d.norm();
            if (dist <= b.radius) return x;
            return b.center + (b.radius / dist) * d;
          },
          [&](const ConvexSet::NonnegativeOrthant&) -> Eigen::VectorXd {
            return x.cwiseMax(0.0);
          },
          [&](const ConvexSet::WholeSpace&) -> Eigen::VectorXd { return x; },
      },
      set.variant());
}

Eigen::VectorXd prox_weighted(const ConvexSet& set, const Eigen::Ref<const Eigen::VectorXd>& x_prox,
                              double alpha, const Eigen::Ref<const Eigen::VectorXd>& x_target,
                              double rho) {
  if (!(alpha >= 0.0) || !(rho > 0.0)) {
    throw ModelError("prox_weighted needs alpha >= 0 and rho > 0 (alpha + rho must be positive)");
  }
  check_dimension(set, x_prox.size(), "prox_weighted");
  check_dimension(set, x_target.size(), "prox_weighted");
  const Eigen::VectorXd average = (alpha * x_prox + rho * x_target) / (alpha + rho);
  return project(set, average);
}

}  // namespace optrack
