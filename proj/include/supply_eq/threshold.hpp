#pragma once

// Specialization thresholds: the two-user closed form, the dual-norm upper
// bound, the randomized convex-hull test of the product-maximum condition, and
// the binary-search estimate built on it.

#include "supply_eq/core_geometry.hpp"
#include "supply_eq/optimize.hpp"

#include <optional>
#include <random>
#include <vector>

namespace supply_eq {

struct BetaStar {
  double value = kInfNorm;
  /// Set when the users are collinear and the threshold is +infinity.
  bool degenerate = false;
};

/// beta* = 2 / (1 - cos theta*) for two users at angle theta*.
inline BetaStar beta_star_two_user(double theta_star) {
  if (!(theta_star >= 0.0) || theta_star > std::numbers::pi / 2 + 1e-15) {
    throw std::invalid_argument("beta_star_two_user: theta_star must lie in [0, pi/2]");
  }
  const double denom = 1.0 - std::cos(theta_star);
  if (theta_star == 0.0 || denom <= 0.0) return {kInfNorm, true};
  return {2.0 / denom, false};
}

/// Same threshold from the user vectors; uses the cosine directly so that
/// orthogonal users give exactly 2.
inline BetaStar beta_star_two_user(const Vector& u1, const Vector& u2) {
  const double n1 = u1.norm();
  const double n2 = u2.norm();
  if (n1 == 0.0 || n2 == 0.0) throw std::invalid_argument("beta_star_two_user: zero vector");
  const double c = std::clamp(u1.dot(u2) / (n1 * n2), 0.0, 1.0);
  if (c >= 1.0) return {kInfNorm, true};
  return {2.0 / (1.0 - c), false};
}

/// log N / (log N - log Z) with Z = || sum_n u_n / ||u_n||_* ||_*; +inf when Z >= N.
inline double beta_upper(const UserSet& users, const CostSpec& spec) {
  const Eigen::Index n = users.size();
  if (n < 2) throw std::invalid_argument("beta_upper: need at least two users");
  Vector sum = Vector::Zero(users.dim());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector u = users.user(i);
    sum += u / dual_norm(u, spec);
  }
  const double z = dual_norm(sum, spec);
  const double nn = static_cast<double>(n);
  if (z >= nn * (1.0 - 1e-12)) return kInfNorm;
  const double logn = std::log(nn);
  return logn / (logn - std::log(z));
}

struct HullTestConfig {
  int trials = 50;
  /// Random directions per trial; the NSW anchor is appended to each trial.
  int hull_points = 75;
  /// Threshold at N = 20; the effective value is tau * N / 20.
  double tau = 1e-6;
  /// Binary search stops once the bracket is no wider than this.
  double gap = 0.05;
  std::uint64_t seed = 0;
  OptimizerConfig solver{};

  void validate() const {
    if (trials < 1) throw std::invalid_argument("HullTestConfig: trials must be >= 1");
    if (hull_points < 1) throw std::invalid_argument("HullTestConfig: hull_points must be >= 1");
    if (!(gap > 0.0)) throw std::invalid_argument("HullTestConfig: gap must be > 0");
    if (!(tau > 0.0)) throw std::invalid_argument("HullTestConfig: tau must be > 0");
  }

  [[nodiscard]] double effective_tau(Eigen::Index n_users) const {
    return tau * static_cast<double>(n_users) / 20.0;
  }
};

/// One evaluation of the product-maximum condition at a given beta.
struct ConditionCheck {
  double beta = 0.0;
  bool holds = true;
  /// No trial exceeded tau, but at least one did not certify its optimum below tau.
  bool inconclusive = false;
  /// beta * sum_i log <p*, u_i>: log of the largest coordinate product over the set.
  double lhs_log = 0.0;
  /// lhs_log plus the best log-gain over the sampled hulls.
  double rhs_log = 0.0;
};

struct ThresholdReport {
  std::optional<double> beta_star_closed;
  double beta_upper = kInfNorm;
  std::optional<double> beta_estimate;
  std::vector<ConditionCheck> condition_trace;
  Vector nsw_point;
  double nsw_value = 0.0;
  bool nsw_converged = true;
};

namespace detail {

// |gaussian| directions normalized to unit weighted q-norm; stream fixed by (seed, trial).
inline Matrix random_cone_directions(Eigen::Index count, Eigen::Index dim, const CostSpec& spec,
                                     std::uint64_t seed, int trial) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(trial), 0x7e1au};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix dirs(count, dim);
  for (Eigen::Index j = 0; j < count; ++j) {
    Vector v(dim);
    do {
      for (Eigen::Index d = 0; d < dim; ++d) v[d] = std::abs(normal(rng));
    } while (weighted_norm(v, spec) == 0.0);
    dirs.row(j) = (v / weighted_norm(v, spec)).transpose();
  }
  return dirs;
}

}  // namespace detail

/// Randomized test of whether the largest coordinate product over S^beta equals
/// the largest over its convex hull, given the NSW anchor direction.
///
/// Each trial builds Y(j,i) = (<u_i,p_j> / <u_i,p*>)^beta for random unit
/// directions p_j plus p* itself and maximizes the log-product over mixtures.
/// Any trial reaching tau is a witness that the hull is strictly larger, so the
/// condition fails. Random directions depend only on (seed, trial), which keeps
/// verdicts monotone in beta.
inline ConditionCheck max_condition_holds(const UserSet& users, const CostSpec& spec, double beta,
                                          const Vector& anchor, double anchor_nsw_value,
                                          const HullTestConfig& cfg) {
  cfg.validate();
  if (!(beta >= 1.0)) throw std::invalid_argument("max_condition_holds: beta must be >= 1");
  const Matrix& U = users.matrix();
  const Eigen::Index n = users.size();
  const Eigen::Index m = cfg.hull_points + 1;
  const double tau = cfg.effective_tau(n);
  const Vector anchor_vals = U * anchor;

  ConditionCheck out;
  out.beta = beta;
  out.lhs_log = beta * anchor_nsw_value;
  double best_gain = 0.0;
  for (int t = 0; t < cfg.trials; ++t) {
    Matrix dirs(m, users.dim());
    dirs.topRows(cfg.hull_points) = detail::random_cone_directions(cfg.hull_points, users.dim(), spec, cfg.seed, t);
    dirs.row(m - 1) = anchor.transpose();
    Matrix Y = dirs * U.transpose();  // m x N inferred values
    for (Eigen::Index j = 0; j < m; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) Y(j, i) = std::pow(Y(j, i) / anchor_vals[i], beta);
    }
    OptResult r = simplex_logsum_max(Y, cfg.solver);
    best_gain = std::max(best_gain, r.value);
    if (r.value >= tau) {
      out.holds = false;
      out.inconclusive = false;
      break;
    }
    if (r.value + r.kkt_residual >= tau) out.inconclusive = true;
  }
  out.rhs_log = out.lhs_log + best_gain;
  return out;
}

/// Convenience overload computing the NSW anchor itself.
inline ConditionCheck max_condition_holds(const UserSet& users, const CostSpec& spec, double beta,
                                          const HullTestConfig& cfg) {
  const OptResult nsw = nsw_direction(users, spec, cfg.solver);
  ConditionCheck c = max_condition_holds(users, spec, beta, nsw.point, nsw.value, cfg);
  if (!nsw.converged) c.inconclusive = true;
  return c;
}

/// Binary search for the largest beta at which the condition holds, starting
/// from the bracket [1, beta_upper]. Inconclusive checks count as holding.
inline ThresholdReport estimate_threshold(const UserSet& users, const CostSpec& spec, const HullTestConfig& cfg) {
  cfg.validate();
  ThresholdReport rep;
  rep.beta_upper = beta_upper(users, spec);
  if (users.size() == 2) {
    rep.beta_star_closed = beta_star_two_user(users.user(0), users.user(1)).value;
  }
  if (std::isinf(rep.beta_upper)) {
    rep.beta_estimate = kInfNorm;
    return rep;
  }
  const OptResult nsw = nsw_direction(users, spec, cfg.solver);
  rep.nsw_point = nsw.point;
  rep.nsw_value = nsw.value;
  rep.nsw_converged = nsw.converged;

  double lo = 1.0;
  double hi = rep.beta_upper;
  while (hi - lo > cfg.gap) {
    const double mid = 0.5 * (lo + hi);
    ConditionCheck c = max_condition_holds(users, spec, mid, nsw.point, nsw.value, cfg);
    if (!nsw.converged) c.inconclusive = true;
    rep.condition_trace.push_back(c);
    if (c.holds) lo = mid; else hi = mid;
  }
  std::sort(rep.condition_trace.begin(), rep.condition_trace.end(),
            [](const ConditionCheck& a, const ConditionCheck& b) { return a.beta < b.beta; });
  rep.beta_estimate = 0.5 * (lo + hi);
  return rep;
}

inline double beta_estimate(const UserSet& users, const CostSpec& spec, const HullTestConfig& cfg = {}) {
  return estimate_threshold(users, spec, cfg).beta_estimate.value_or(kInfNorm);
}

}  // namespace supply_eq
