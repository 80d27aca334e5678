#pragma once

// Cone-constrained concave maximization: projection onto the nonnegative part
// of the unit cost ball, the Nash-social-welfare direction, the min-alignment
// value Q, and log-sum maximization over the probability simplex.

#include "supply_eq/core_geometry.hpp"

#include <cstdint>
#include <functional>
#include <random>

namespace supply_eq {

struct OptimizerConfig {
  int max_iters = 5000;
  double step_init = 1.0;
  /// Stopping threshold on the KKT residual.
  double tol = 1e-8;
  std::uint64_t seed = 0;
  int restarts = 8;

  void validate() const {
    if (max_iters < 1) throw std::invalid_argument("OptimizerConfig: max_iters must be >= 1");
    if (!(tol > 0.0)) throw std::invalid_argument("OptimizerConfig: tol must be > 0");
    if (restarts < 1) throw std::invalid_argument("OptimizerConfig: restarts must be >= 1");
    if (!(step_init > 0.0)) throw std::invalid_argument("OptimizerConfig: step_init must be > 0");
  }
};

struct OptResult {
  Vector point;
  double value = -std::numeric_limits<double>::infinity();
  double kkt_residual = std::numeric_limits<double>::infinity();
  int iters = 0;
  bool converged = false;
};

namespace detail {

inline constexpr double kArmijo = 1e-4;
inline constexpr double kMinStep = 1e-20;
inline constexpr double kMaxStep = 1e12;

// Solves y + c*y^(q-1) = x for y in [0, x] (x > 0, c > 0, q > 1).
inline double solve_coordinate(double x, double c, double q) {
  if (x <= 0.0) return 0.0;
  double lo = 0.0;
  double hi = x;
  double y = x / (1.0 + c * std::pow(x, q - 2.0 > 0 ? q - 2.0 : 0.0));
  y = std::clamp(y, lo, hi);
  for (int it = 0; it < 200; ++it) {
    const double g = y + c * std::pow(y, q - 1.0) - x;
    if (g > 0.0) hi = y; else lo = y;
    if (hi - lo <= 1e-17 * x) break;
    const double dg = 1.0 + c * (q - 1.0) * std::pow(y, q - 2.0);
    double next = y - g / dg;
    if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
    if (next == y) break;
    y = next;
  }
  return y;
}

// Euclidean projection of a nonnegative x outside the unit weighted q-ball onto its boundary.
inline Vector project_outside(const Vector& x, const CostSpec& spec) {
  const Eigen::Index dim = x.size();
  const double q = spec.q;
  if (std::isinf(q)) {
    Vector y = x;
    for (Eigen::Index d = 0; d < dim; ++d) y[d] = std::min(y[d], 1.0 / spec.weight(d));
    return y;
  }
  auto at = [&](double lam) {
    Vector y(dim);
    for (Eigen::Index d = 0; d < dim; ++d) {
      const double a = spec.weight(d);
      if (q == 1.0) {
        y[d] = std::max(x[d] - lam * a, 0.0);
      } else if (q == 2.0) {
        y[d] = x[d] / (1.0 + 2.0 * lam * a * a);
      } else {
        y[d] = solve_coordinate(x[d], lam * q * std::pow(a, q), q);
      }
    }
    return y;
  };
  double lo = 0.0;
  double hi = 1.0;
  while (weighted_norm(at(hi), spec) > 1.0 && hi < 1e300) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (weighted_norm(at(mid), spec) > 1.0) lo = mid; else hi = mid;
  }
  return at(hi);
}

// Projected gradient ascent with Armijo backtracking and step growth.
// f returns -inf outside its domain. For smooth f the step must also satisfy
// the quadratic-model test f(y) >= f(x) + g.(y-x) - |y-x|^2/(2s); without it a
// grown step can bounce between two boundary points while Armijo still sees
// a small gain every time.
inline OptResult projected_ascent(const std::function<double(const Vector&)>& f,
                                  const std::function<Vector(const Vector&)>& supergrad,
                                  const std::function<Vector(const Vector&)>& project,
                                  Vector x, const OptimizerConfig& cfg, bool smooth = true) {
  OptResult res;
  double fx = f(x);
  double step = cfg.step_init;
  for (int it = 0; it < cfg.max_iters; ++it) {
    const Vector g = supergrad(x);
    res.kkt_residual = (x - project(x + g)).norm();
    res.iters = it;
    if (res.kkt_residual <= cfg.tol) {
      res.converged = true;
      break;
    }
    bool accepted = false;
    while (step >= kMinStep) {
      Vector y = project(x + step * g);
      const double fy = f(y);
      const double lin = g.dot(y - x);
      const bool model_ok = !smooth || fy >= fx + lin - (y - x).squaredNorm() / (2.0 * step);
      if (std::isfinite(fy) && fy >= fx + kArmijo * lin && fy >= fx && model_ok) {
        accepted = (y - x).norm() > 0.0 || fy > fx;
        x = std::move(y);
        fx = fy;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    step = std::min(step * 2.0, kMaxStep);
  }
  res.point = std::move(x);
  res.value = fx;
  return res;
}

}  // namespace detail

/// Euclidean projection onto {p >= 0, ||alpha o p||_q <= 1}.
inline Vector project_cone_ball(const Vector& x, const CostSpec& spec) {
  spec.check_dim(x.size());
  Vector p = x.cwiseMax(0.0);
  const double n = weighted_norm(p, spec);
  if (n <= 1.0 + 1e-12) return p;
  if (spec.q == 2.0 && spec.unit_weights()) return p / n;
  return detail::project_outside(p, spec);
}

namespace detail {

inline std::vector<Vector> restart_points(Eigen::Index dim, const CostSpec& spec,
                                          const OptimizerConfig& cfg) {
  std::vector<Vector> starts;
  Vector ones = Vector::Ones(dim);
  starts.push_back(project_cone_ball(ones / weighted_norm(ones, spec), spec));
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int r = 1; r < cfg.restarts; ++r) {
    Vector v(dim);
    for (Eigen::Index d = 0; d < dim; ++d) v[d] = 0.5 + unif(rng);
    starts.push_back(project_cone_ball(v / weighted_norm(v, spec), spec));
  }
  return starts;
}

}  // namespace detail

/// Unit-cost direction maximizing sum_i log <p, u_i> over the nonnegative cone.
inline OptResult nsw_direction(const UserSet& users, const CostSpec& spec, const OptimizerConfig& cfg = {}) {
  cfg.validate();
  spec.check_dim(users.dim());
  const Matrix& U = users.matrix();
  auto f = [&](const Vector& p) {
    const Vector v = U * p;
    if ((v.array() <= 1e-300).any()) return -std::numeric_limits<double>::infinity();
    return v.array().log().sum();
  };
  auto grad = [&](const Vector& p) -> Vector {
    const Vector v = U * p;
    return U.transpose() * v.cwiseInverse();
  };
  auto proj = [&](const Vector& x) { return project_cone_ball(x, spec); };

  OptResult best;
  for (const Vector& start : detail::restart_points(users.dim(), spec, cfg)) {
    OptResult r = detail::projected_ascent(f, grad, proj, start, cfg);
    if (r.value > best.value || best.point.size() == 0) best = std::move(r);
  }
  const double n = weighted_norm(best.point, spec);
  if (n > 0.0) best.point /= n;
  best.value = f(best.point);
  best.kkt_residual = (best.point - proj(best.point + grad(best.point))).norm();
  best.converged = best.kkt_residual <= cfg.tol;
  return best;
}

/// Q = max over the unit cost ball of min_i <p, u_i / ||u_i||_2>.
inline OptResult minmax_alignment(const UserSet& users, const CostSpec& spec, const OptimizerConfig& cfg = {}) {
  cfg.validate();
  spec.check_dim(users.dim());
  Matrix Un = users.matrix();
  for (Eigen::Index i = 0; i < Un.rows(); ++i) Un.row(i) /= Un.row(i).norm();

  double activity = 1e-7;
  auto f = [&](const Vector& p) { return (Un * p).minCoeff(); };
  auto supergrad = [&](const Vector& p) -> Vector {
    const Vector v = Un * p;
    const double m = v.minCoeff();
    Vector g = Vector::Zero(p.size());
    int active = 0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (v[i] <= m + activity) {
        g += Un.row(i).transpose();
        ++active;
      }
    }
    return g / active;
  };
  auto proj = [&](const Vector& x) { return project_cone_ball(x, spec); };

  OptResult best;
  for (const Vector& start : detail::restart_points(users.dim(), spec, cfg)) {
    OptResult r = detail::projected_ascent(f, supergrad, proj, start, cfg, /*smooth=*/false);
    if (r.value > best.value || best.point.size() == 0) best = std::move(r);
  }
  best.kkt_residual = (best.point - proj(best.point + supergrad(best.point))).norm();
  best.converged = best.kkt_residual <= std::sqrt(cfg.tol);
  return best;
}

/// Maximizes sum_i log(sum_j w_j Y(j,i)) over the probability simplex by
/// exponentiated-gradient ascent. kkt_residual is the Frank-Wolfe gap, an
/// upper bound on the distance of value from the optimum.
inline OptResult simplex_logsum_max(const Matrix& Y, const OptimizerConfig& cfg = {}) {
  cfg.validate();
  const Eigen::Index m = Y.rows();
  const Eigen::Index n = Y.cols();
  if (m < 1 || n < 1) throw std::invalid_argument("simplex_logsum_max: empty matrix");
  if ((Y.array() < 0.0).any() || !Y.allFinite()) {
    throw std::invalid_argument("simplex_logsum_max: entries must be finite and nonnegative");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(Y.col(i).maxCoeff() > 0.0)) {
      throw std::invalid_argument("simplex_logsum_max: column " + std::to_string(i) + " is all zero");
    }
  }
  auto weights = [&](const Vector& logw) {
    Vector w = (logw.array() - logw.maxCoeff()).exp();
    return Vector(w / w.sum());
  };
  auto f = [&](const Vector& w) {
    const Vector mix = Y.transpose() * w;
    if ((mix.array() <= 0.0).any()) return -std::numeric_limits<double>::infinity();
    return mix.array().log().sum();
  };
  auto grad = [&](const Vector& w) -> Vector {
    const Vector mix = Y.transpose() * w;
    return Y * mix.cwiseInverse();
  };

  OptResult res;
  Vector logw = Vector::Zero(m);
  Vector w = weights(logw);
  double fw = f(w);
  double step = cfg.step_init;
  for (int it = 0; it < cfg.max_iters; ++it) {
    const Vector g = grad(w);
    res.iters = it;
    res.kkt_residual = std::max(0.0, g.maxCoeff() - w.dot(g));
    if (res.kkt_residual <= cfg.tol) {
      res.converged = true;
      break;
    }
    bool accepted = false;
    while (step >= detail::kMinStep) {
      const Vector cand_log = logw + step * g;
      const Vector cand = weights(cand_log);
      const double fc = f(cand);
      if (std::isfinite(fc) && fc >= fw + detail::kArmijo * g.dot(cand - w) && fc >= fw) {
        logw = cand_log.array() - cand_log.maxCoeff();
        accepted = fc > fw || (cand - w).norm() > 0.0;
        w = cand;
        fw = fc;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    step = std::min(step * 2.0, detail::kMaxStep);
  }
  res.point = w;
  res.value = fw;
  return res;
}

}  // namespace supply_eq
