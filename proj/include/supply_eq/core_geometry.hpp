#pragma once

// Market geometry: users, production costs, weighted q-norms and their duals,
// and the two-user plane reparameterization.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace supply_eq {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// A content vector p in the nonnegative orthant.
using ContentVector = Eigen::VectorXd;

/// Sentinel for the max-norm (q = infinity).
inline constexpr double kInfNorm = std::numeric_limits<double>::infinity();

/// Nonnegative user embeddings, one user per row.
class UserSet {
 public:
  UserSet() = default;

  explicit UserSet(Matrix embeddings) : rows_(std::move(embeddings)) {
    if (rows_.rows() < 1 || rows_.cols() < 1) {
      throw std::invalid_argument("UserSet: need at least one user and one dimension");
    }
    for (Eigen::Index i = 0; i < rows_.rows(); ++i) {
      bool positive = false;
      for (Eigen::Index d = 0; d < rows_.cols(); ++d) {
        const double v = rows_(i, d);
        if (!std::isfinite(v) || v < 0.0) {
          throw std::invalid_argument("UserSet: entry (" + std::to_string(i) + "," +
                                      std::to_string(d) + ") is negative or not finite");
        }
        positive = positive || v > 0.0;
      }
      if (!positive) {
        throw std::invalid_argument("UserSet: user " + std::to_string(i) + " is the zero vector");
      }
    }
  }

  [[nodiscard]] Eigen::Index size() const { return rows_.rows(); }
  [[nodiscard]] Eigen::Index dim() const { return rows_.cols(); }
  [[nodiscard]] Vector user(Eigen::Index i) const { return rows_.row(i).transpose(); }
  [[nodiscard]] const Matrix& matrix() const { return rows_; }

 private:
  Matrix rows_;
};

/// Production cost c(p) = ||alpha o p||_q ^ beta.
///
/// An empty alpha means unit weights in whatever dimension the cost is applied to.
struct CostSpec {
  double q = 2.0;
  double beta = 2.0;
  Vector alpha;

  CostSpec() = default;
  CostSpec(double q_, double beta_, Vector alpha_ = {}) : q(q_), beta(beta_), alpha(std::move(alpha_)) {
    validate();
  }

  void validate() const {
    if (!(q >= 1.0)) throw std::invalid_argument("CostSpec: q must be >= 1");
    if (!(beta >= 1.0) || !std::isfinite(beta)) throw std::invalid_argument("CostSpec: beta must be >= 1");
    for (Eigen::Index d = 0; d < alpha.size(); ++d) {
      if (!(alpha[d] > 0.0) || !std::isfinite(alpha[d])) {
        throw std::invalid_argument("CostSpec: alpha must be strictly positive");
      }
    }
  }

  [[nodiscard]] bool unit_weights() const {
    return alpha.size() == 0 || (alpha.array() == 1.0).all();
  }

  /// Weight of coordinate d; checks the dimension against alpha when alpha is set.
  [[nodiscard]] double weight(Eigen::Index d) const { return alpha.size() == 0 ? 1.0 : alpha[d]; }

  void check_dim(Eigen::Index dim) const {
    if (alpha.size() != 0 && alpha.size() != dim) {
      throw std::invalid_argument("CostSpec: alpha has length " + std::to_string(alpha.size()) +
                                  " but vectors have dimension " + std::to_string(dim));
    }
  }
};

/// Hoelder conjugate q' with 1/q + 1/q' = 1.
inline double conjugate_exponent(double q) {
  if (q == 1.0) return kInfNorm;
  if (std::isinf(q)) return 1.0;
  return q / (q - 1.0);
}

namespace detail {

// ||x||_q for a vector of absolute values, scaled by the max entry to avoid overflow.
inline double lq_norm_abs(const Vector& x, double q) {
  if (x.size() == 0) return 0.0;
  const double m = x.cwiseAbs().maxCoeff();
  if (m == 0.0) return 0.0;
  if (std::isinf(q)) return m;
  if (q == 1.0) return x.cwiseAbs().sum();
  if (q == 2.0) return x.norm();
  double acc = 0.0;
  for (Eigen::Index d = 0; d < x.size(); ++d) acc += std::pow(std::abs(x[d]) / m, q);
  return m * std::pow(acc, 1.0 / q);
}

}  // namespace detail

/// ||alpha o p||_q.
inline double weighted_norm(const Vector& p, const CostSpec& spec) {
  spec.check_dim(p.size());
  Vector scaled = p;
  if (spec.alpha.size() != 0) scaled = p.cwiseProduct(spec.alpha);
  return detail::lq_norm_abs(scaled, spec.q);
}

inline double cost(const Vector& p, const CostSpec& spec) {
  const double n = weighted_norm(p, spec);
  if (n == 0.0) return 0.0;
  return std::pow(n, spec.beta);
}

/// Dual of the weighted q-norm over the nonnegative cone: ||u / alpha||_{q'}.
inline double dual_norm(const Vector& u, const CostSpec& spec) {
  spec.check_dim(u.size());
  if ((u.array() < 0.0).any()) {
    throw std::invalid_argument("dual_norm: only defined for nonnegative vectors");
  }
  Vector scaled = u;
  if (spec.alpha.size() != 0) scaled = u.cwiseQuotient(spec.alpha);
  return detail::lq_norm_abs(scaled, conjugate_exponent(spec.q));
}

/// Angle between two nonzero vectors, clamped to [0, pi].
inline double angle_between(const Vector& u1, const Vector& u2) {
  const double n1 = u1.norm();
  const double n2 = u2.norm();
  if (n1 == 0.0 || n2 == 0.0) throw std::invalid_argument("angle_between: zero vector");
  const double c = std::clamp(u1.dot(u2) / (n1 * n2), -1.0, 1.0);
  return std::acos(c);
}

/// Orthonormal frame for span(u1, u2) in which the two users sit at in-plane
/// angles theta_min and theta_min + theta_star.
struct TwoUserPlane {
  double theta_star = std::numbers::pi / 2;
  double theta_min = 0.0;
  std::array<Vector, 2> basis;
  /// Unit-norm users in ambient coordinates.
  std::array<Vector, 2> users;
  /// In-plane angle of each user, measured from basis[0].
  std::array<double, 2> user_angles{0.0, std::numbers::pi / 2};

  [[nodiscard]] Eigen::Index dim() const { return basis[0].size(); }

  /// Ambient vector at in-plane angle (theta_min + local_angle) with Euclidean length r.
  [[nodiscard]] Vector embed(double local_angle, double r) const {
    const double a = theta_min + local_angle;
    return r * (std::cos(a) * basis[0] + std::sin(a) * basis[1]);
  }

  /// Inferred values (<u1,p>, <u2,p>) for the unit-normalized users.
  [[nodiscard]] std::array<double, 2> inferred(const Vector& p) const {
    return {users[0].dot(p), users[1].dot(p)};
  }
};

/// Builds the plane of two linearly independent users.
///
/// In D = 2 the frame is the standard basis, so angles are absolute and
/// theta_min is the smaller of the two user angles with e1. In D > 2 the frame is
/// Gram-Schmidt on the users (lower-angle user first) and theta_min = 0.
inline TwoUserPlane two_user_plane(const Vector& u1, const Vector& u2) {
  if (u1.size() != u2.size()) throw std::invalid_argument("two_user_plane: dimension mismatch");
  if (u1.size() < 2) throw std::invalid_argument("two_user_plane: need D >= 2");
  const double n1 = u1.norm();
  const double n2 = u2.norm();
  if (n1 == 0.0 || n2 == 0.0) throw std::invalid_argument("two_user_plane: zero vector");

  TwoUserPlane plane;
  plane.users = {u1 / n1, u2 / n2};
  const Vector& a = plane.users[0];
  const Vector& b = plane.users[1];
  Vector resid = b - b.dot(a) * a;
  if (resid.norm() < 1e-12) throw std::invalid_argument("two_user_plane: users are linearly dependent");
  plane.theta_star = angle_between(u1, u2);

  const Eigen::Index dim = u1.size();
  if (dim == 2) {
    plane.basis = {Vector::Unit(2, 0), Vector::Unit(2, 1)};
    const double a1 = std::acos(std::clamp(a[0], -1.0, 1.0));
    const double a2 = std::acos(std::clamp(b[0], -1.0, 1.0));
    plane.theta_min = std::min(a1, a2);
    plane.user_angles = {a1 - plane.theta_min, a2 - plane.theta_min};
  } else {
    plane.basis[0] = a;
    plane.basis[1] = resid.normalized();
    plane.theta_min = 0.0;
    plane.user_angles = {0.0, plane.theta_star};
  }
  return plane;
}

/// Minimum Euclidean cost of realizing inferred values z = (<u1,p>, <u2,p>) for
/// unit users at angle theta_star.
inline double induced_cost(const std::array<double, 2>& z, double theta_star, const CostSpec& spec) {
  if (spec.q != 2.0) throw std::invalid_argument("induced_cost: closed form requires q = 2");
  if (!(theta_star > 0.0) || theta_star > std::numbers::pi / 2 + 1e-15) {
    throw std::invalid_argument("induced_cost: theta_star must lie in (0, pi/2]");
  }
  double scale = 1.0;
  if (spec.alpha.size() != 0) {
    const double a0 = spec.alpha[0];
    if ((spec.alpha.array() != a0).any()) {
      throw std::invalid_argument("induced_cost: requires uniform weights");
    }
    scale = std::pow(a0, spec.beta);
  }
  const double c = std::cos(theta_star);
  constexpr double kConeSlack = 1e-9;
  if (z[0] < z[1] * c - kConeSlack || z[1] < z[0] * c - kConeSlack) {
    throw std::invalid_argument("induced_cost: z lies outside the user cone");
  }
  const double quad = std::max(0.0, z[0] * z[0] + z[1] * z[1] - 2.0 * z[0] * z[1] * c);
  if (quad == 0.0) return 0.0;
  return scale * std::pow(std::sin(theta_star), -spec.beta) * std::pow(quad, spec.beta / 2.0);
}

/// Gradient of induced_cost with respect to z.
inline std::array<double, 2> induced_cost_gradient(const std::array<double, 2>& z, double theta_star,
                                                   const CostSpec& spec) {
  if (spec.q != 2.0) throw std::invalid_argument("induced_cost_gradient: closed form requires q = 2");
  const double scale = spec.alpha.size() == 0 ? 1.0 : std::pow(spec.alpha[0], spec.beta);
  const double c = std::cos(theta_star);
  const double quad = std::max(0.0, z[0] * z[0] + z[1] * z[1] - 2.0 * z[0] * z[1] * c);
  if (quad == 0.0) return {0.0, 0.0};
  const double common = spec.beta * scale * std::pow(std::sin(theta_star), -spec.beta) *
                        std::pow(quad, spec.beta / 2.0 - 1.0);
  return {common * (z[0] - z[1] * c), common * (z[1] - z[0] * c)};
}

}  // namespace supply_eq
