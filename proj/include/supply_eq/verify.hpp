#pragma once

// Numerical equilibrium checks: sampled opponent marginals, deviation profits,
// best-response gaps, profit levels, first/second-order residuals and genre
// counting.

#include "supply_eq/closedform.hpp"
#include "supply_eq/core_geometry.hpp"
#include "supply_eq/optimize.hpp"

#include <algorithm>
#include <functional>
#include <optional>
#include <random>
#include <vector>

namespace supply_eq {

/// Sorted inferred values <u_i, p> for M draws of a strategy, one array per user.
struct EmpiricalMarginals {
  std::vector<std::vector<double>> values;
  int producers = 2;
  std::size_t samples = 0;

  /// P(all P-1 opponents strictly below v) for user i.
  [[nodiscard]] double h_strict(std::size_t i, double v) const {
    const auto& a = values.at(i);
    const auto rank = static_cast<double>(std::lower_bound(a.begin(), a.end(), v) - a.begin());
    return std::pow(rank / static_cast<double>(samples), producers - 1);
  }

  /// P(all P-1 opponents at or below v) for user i.
  [[nodiscard]] double h_weak(std::size_t i, double v) const {
    const auto& a = values.at(i);
    const auto rank = static_cast<double>(std::upper_bound(a.begin(), a.end(), v) - a.begin());
    return std::pow(rank / static_cast<double>(samples), producers - 1);
  }
};

namespace detail {

inline void check_strategy_dim(const EquilibriumDist& dist, const UserSet& users) {
  Eigen::Index dim = 2;
  if (const auto* d = std::get_if<OnePopulation>(&dist)) dim = d->direction.size();
  if (const auto* d = std::get_if<InfiniteTwoGenre>(&dist)) dim = d->plane.dim();
  if (dim != users.dim()) {
    throw std::invalid_argument("strategy lives in dimension " + std::to_string(dim) + " but users have dimension " +
                                std::to_string(users.dim()));
  }
}

// Independent streams for marginals, profit simulation and genre counting.
inline std::uint64_t substream(std::uint64_t seed, std::uint64_t k) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(k), 0x5e9fu};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

}  // namespace detail

inline EmpiricalMarginals empirical_marginals(const EquilibriumDist& dist, const UserSet& users, int producers,
                                              std::size_t samples, std::uint64_t seed) {
  if (samples < 1000) throw std::invalid_argument("empirical_marginals: need M >= 1000");
  if (producers < 2) throw std::invalid_argument("empirical_marginals: need P >= 2");
  detail::check_strategy_dim(dist, users);
  const auto draws = eq_sample(dist, samples, seed);
  EmpiricalMarginals m;
  m.producers = producers;
  m.samples = samples;
  m.values.assign(static_cast<std::size_t>(users.size()), {});
  for (Eigen::Index i = 0; i < users.size(); ++i) {
    auto& col = m.values[static_cast<std::size_t>(i)];
    col.reserve(samples);
    const Vector u = users.user(i);
    for (const auto& p : draws) col.push_back(u.dot(p));
    std::sort(col.begin(), col.end());
  }
  return m;
}

struct ProfitBounds {
  double lower = 0.0;
  double upper = 0.0;
};

/// Expected users won minus cost for a deviation p against sampled opponents.
/// lower concedes every tie, upper wins every tie.
inline ProfitBounds deviation_profit(const Vector& p, const EmpiricalMarginals& marg, const UserSet& users,
                                     const CostSpec& spec) {
  if ((p.array() < 0.0).any()) throw std::invalid_argument("deviation_profit: p must be nonnegative");
  const double c = cost(p, spec);
  ProfitBounds b{-c, -c};
  for (Eigen::Index i = 0; i < users.size(); ++i) {
    const double v = users.matrix().row(i).dot(p);
    b.lower += marg.h_strict(static_cast<std::size_t>(i), v);
    b.upper += marg.h_weak(static_cast<std::size_t>(i), v);
  }
  return b;
}

/// Limit (infinitely many producers) probability that user i's best offer is at most z.
inline double limit_marginal(const InfiniteTwoGenre& d, int user, double z) {
  if (user < 0 || user > 1) throw std::out_of_range("limit_marginal: user index must be 0 or 1");
  double h = 1.0;
  for (int g = 0; g < 2; ++g) {
    const double a = d.plane.users[static_cast<std::size_t>(user)].dot(d.genres[static_cast<std::size_t>(g)]);
    const double f = a > 0.0 ? d.fmax(std::max(0.0, z) / a) : 1.0;
    h *= std::pow(f, d.weights[static_cast<std::size_t>(g)]);
  }
  return h;
}

/// Limit deviation profit against the winning-producer law; zero on the support.
inline double limit_deviation_profit(const InfiniteTwoGenre& d, const Vector& p, const CostSpec& spec) {
  const auto z = d.plane.inferred(p);
  return limit_marginal(d, 0, z[0]) + limit_marginal(d, 1, z[1]) - cost(p, spec);
}

struct GridSpec {
  int n_angles = 200;
  int n_radii = 200;

  void validate() const {
    if (n_angles < 2 || n_radii < 2) throw std::invalid_argument("GridSpec: need at least 2 angles and 2 radii");
  }
};

struct GapResult {
  double max_profit = -std::numeric_limits<double>::infinity();
  Vector argmax;
  double eq_profit = 0.0;
  double gap = 0.0;
};

namespace detail {

// Unit-cost-norm search directions: the quarter plane in D = 2, the arc between
// the users for two users in higher D, and random cone directions otherwise.
inline std::vector<Vector> search_directions(const UserSet& users, const CostSpec& spec, int n_angles,
                                             std::uint64_t seed) {
  std::vector<Vector> dirs;
  const Eigen::Index dim = users.dim();
  if (dim == 1) {
    dirs.push_back(Vector::Ones(1));
  } else if (dim == 2) {
    for (int k = 0; k < n_angles; ++k) {
      const double t = 0.5 * std::numbers::pi * k / (n_angles - 1);
      Vector v(2);
      v << std::cos(t), std::sin(t);
      v = v.cwiseMax(0.0);
      dirs.push_back(v);
    }
  } else if (users.size() == 2) {
    const TwoUserPlane plane = two_user_plane(users.user(0), users.user(1));
    for (int k = 0; k < n_angles; ++k) {
      dirs.push_back(plane.embed(plane.theta_star * k / (n_angles - 1), 1.0).cwiseMax(0.0));
    }
  } else {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index i = 0; i < users.size(); ++i) dirs.push_back(users.user(i));
    while (static_cast<int>(dirs.size()) < n_angles) {
      Vector v(dim);
      for (Eigen::Index d = 0; d < dim; ++d) v[d] = std::abs(normal(rng));
      dirs.push_back(v);
    }
  }
  for (auto& v : dirs) v /= weighted_norm(v, spec);
  return dirs;
}

template <class Profit>
GapResult grid_max(const UserSet& users, const CostSpec& spec, const GridSpec& grid, std::uint64_t seed,
                   Profit&& profit) {
  grid.validate();
  GapResult r;
  const double rmax = std::pow(static_cast<double>(users.size()), 1.0 / spec.beta);
  for (const Vector& dir : search_directions(users, spec, grid.n_angles, seed)) {
    for (int k = 0; k < grid.n_radii; ++k) {
      const Vector p = (rmax * k / (grid.n_radii - 1)) * dir;
      const double v = profit(p);
      if (v > r.max_profit) {
        r.max_profit = v;
        r.argmax = p;
      }
    }
  }
  return r;
}

}  // namespace detail

/// P^eq = N/P minus the expected cost of one draw. Closed form for every
/// finite variant; the cost is evaluated under spec, which may differ from the
/// exponent the distribution was built for.
inline double equilibrium_profit(const EquilibriumDist& dist, const UserSet& users, const CostSpec& spec,
                                 int producers) {
  if (producers < 2) throw std::invalid_argument("equilibrium_profit: need P >= 2");
  const double n = static_cast<double>(users.size());
  const double share = n / producers;
  if (const auto* d = std::get_if<OnePopulation>(&dist)) {
    // cost(r p*) = r^b with r^beta_d = N U^(P-1).
    const double s = spec.beta / d->beta;
    const double expected = std::pow(static_cast<double>(d->n_users), s) / ((d->producers - 1) * s + 1.0);
    return share - expected;
  }
  if (const auto* d = std::get_if<QuarterCircle>(&dist)) {
    if (spec.q != 2.0 || !spec.unit_weights()) {
      throw std::invalid_argument("equilibrium_profit: quarter circle profit needs unweighted q = 2");
    }
    return share - std::pow(d->radius, spec.beta);
  }
  if (const auto* d = std::get_if<FiniteCurve>(&dist)) {
    if (spec.q != 2.0 || !spec.unit_weights()) {
      throw std::invalid_argument("equilibrium_profit: finite-P curve profit needs unweighted q = 2");
    }
    // ||p||^b = (U^(P-1) + (1-U)^(P-1))^(b/2); exact for b = 2, midpoint rule otherwise.
    if (spec.beta == 2.0) return share - 2.0 / d->producers;
    constexpr int kNodes = 200000;
    double acc = 0.0;
    for (int k = 0; k < kNodes; ++k) {
      const double u = (k + 0.5) / kNodes;
      acc += std::pow(std::pow(u, d->producers - 1.0) + std::pow(1.0 - u, d->producers - 1.0), spec.beta / 2.0);
    }
    return share - acc / kNodes;
  }
  throw std::invalid_argument("equilibrium_profit: the infinite-producer limit has no finite P");
}

struct McEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
};

/// Direct simulation of one producer's profit with P independent draws per
/// round; tied users are split evenly.
inline McEstimate eq_profit_mc(const EquilibriumDist& dist, const UserSet& users, const CostSpec& spec,
                               int producers, std::size_t rounds, std::uint64_t seed) {
  if (producers < 2) throw std::invalid_argument("eq_profit_mc: need P >= 2");
  if (rounds < 2) throw std::invalid_argument("eq_profit_mc: need at least 2 rounds");
  detail::check_strategy_dim(dist, users);
  const auto draws = eq_sample(dist, rounds * static_cast<std::size_t>(producers), seed);
  const Matrix& U = users.matrix();
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t r = 0; r < rounds; ++r) {
    const std::size_t base = r * static_cast<std::size_t>(producers);
    double won = 0.0;
    for (Eigen::Index i = 0; i < U.rows(); ++i) {
      const double mine = U.row(i).dot(draws[base]);
      int ties = 1;
      bool beaten = false;
      for (int j = 1; j < producers && !beaten; ++j) {
        const double other = U.row(i).dot(draws[base + static_cast<std::size_t>(j)]);
        if (other > mine) beaten = true;
        else if (other == mine) ++ties;
      }
      if (!beaten) won += 1.0 / ties;
    }
    const double profit = won - cost(draws[base], spec);
    sum += profit;
    sum_sq += profit * profit;
  }
  const double m = static_cast<double>(rounds);
  const double mean = sum / m;
  const double var = std::max(0.0, (sum_sq - m * mean * mean) / (m - 1.0));
  return {mean, std::sqrt(var / m)};
}

/// Largest upper-bound deviation profit over an angle x radius grid minus the
/// equilibrium profit (analytic when available, else the supplied fallback).
inline GapResult best_response_gap(const EquilibriumDist& dist, const UserSet& users, const CostSpec& spec,
                                   int producers, std::size_t samples, const GridSpec& grid, std::uint64_t seed) {
  if (const auto* inf = std::get_if<InfiniteTwoGenre>(&dist)) {
    detail::check_strategy_dim(dist, users);
    GapResult r = detail::grid_max(users, spec, grid, seed,
                                   [&](const Vector& p) { return limit_deviation_profit(*inf, p, spec); });
    r.eq_profit = 0.0;
    r.gap = r.max_profit;
    return r;
  }
  const EmpiricalMarginals marg = empirical_marginals(dist, users, producers, samples, detail::substream(seed, 0));
  GapResult r = detail::grid_max(users, spec, grid, detail::substream(seed, 1),
                                 [&](const Vector& p) { return deviation_profit(p, marg, users, spec).upper; });
  r.eq_profit = equilibrium_profit(dist, users, spec, producers);
  r.gap = r.max_profit - r.eq_profit;
  return r;
}

struct PositiveProfitCheck {
  bool flag = false;
  double q_value = 0.0;
  double threshold = 0.0;
  bool inconclusive = false;
};

/// Sufficient condition for strictly positive equilibrium profit: Q < N^(-P/beta).
inline PositiveProfitCheck positive_profit_condition(const UserSet& users, const CostSpec& spec, int producers,
                                                     const OptimizerConfig& cfg = {}) {
  if (producers < 2) throw std::invalid_argument("positive_profit_condition: need P >= 2");
  const OptResult r = minmax_alignment(users, spec, cfg);
  PositiveProfitCheck out;
  out.q_value = r.value;
  out.threshold = std::pow(static_cast<double>(users.size()), -static_cast<double>(producers) / spec.beta);
  // Q comes from an iterative solver; equality within kMargin is not "strictly below".
  constexpr double kMargin = 1e-9;
  out.flag = out.q_value < out.threshold - kMargin;
  out.inconclusive = !r.converged;
  return out;
}

/// max over interior support points of |scale * h_i(z_i) - dc_U/dz_i|, where
/// h_i is the analytic density of the opponents' best offer.
inline double foc_residual(const EquilibriumDist& dist, const TwoUserPlane& plane, const CostSpec& spec, int grid,
                           double density_scale = 1.0) {
  if (grid < 1) throw std::invalid_argument("foc_residual: grid must be >= 1");
  std::vector<std::array<double, 2>> points;
  std::function<double(double)> density;
  if (const auto* d = std::get_if<QuarterCircle>(&dist)) {
    // H_i(z) = z^2 / r^2 along each axis.
    const double r2 = d->radius * d->radius;
    density = [r2](double z) { return 2.0 * z / r2; };
    for (int k = 1; k <= grid; ++k) {
      const double t = 0.5 * std::numbers::pi * k / (grid + 1);
      points.push_back({d->radius * std::cos(t), d->radius * std::sin(t)});
    }
  } else if (const auto* d = std::get_if<FiniteCurve>(&dist)) {
    // The max of P-1 x-coordinates has CDF z^2.
    density = [](double z) { return 2.0 * z; };
    for (int k = 1; k <= grid; ++k) points.push_back(d->point_at(static_cast<double>(k) / (grid + 1)));
  } else {
    throw std::invalid_argument("foc_residual: variant has no analytic marginal density");
  }
  double worst = 0.0;
  for (const auto& z : points) {
    const auto g = induced_cost_gradient(z, plane.theta_star, spec);
    for (int i = 0; i < 2; ++i) {
      worst = std::max(worst, std::abs(density_scale * density(z[static_cast<std::size_t>(i)]) -
                                       g[static_cast<std::size_t>(i)]));
    }
  }
  return worst;
}

/// Sign of the mixed second derivative of the induced cost at in-plane angle theta.
inline int soc_direction_sign(double theta, double theta_star, double beta) {
  if (theta < -1e-15 || theta > theta_star + 1e-15) {
    throw std::invalid_argument("soc_direction_sign: theta must lie in [0, theta*]");
  }
  const double v = (beta - 2.0) / beta * std::cos(theta_star - 2.0 * theta) - std::cos(theta_star);
  constexpr double kZero = 1e-14;
  if (v > kZero) return 1;
  if (v < -kZero) return -1;
  return 0;
}

struct GenreCount {
  std::size_t count = 0;
  bool continuum = false;
};

/// Leader clustering of sample directions at angle_tol. More than sqrt(n)
/// clusters is reported as a continuum (heuristic).
inline GenreCount genre_count(const std::vector<ContentVector>& samples, double angle_tol = 1e-3) {
  if (samples.size() < 100) throw std::invalid_argument("genre_count: need at least 100 samples");
  if (!(angle_tol > 0.0)) throw std::invalid_argument("genre_count: angle_tol must be > 0");
  const double limit = std::sqrt(static_cast<double>(samples.size()));
  const double cos_tol = std::cos(angle_tol);
  std::vector<Vector> leaders;
  for (const auto& p : samples) {
    const double n = p.norm();
    if (n == 0.0) continue;
    const Vector dir = p / n;
    bool placed = false;
    for (const auto& l : leaders) {
      if (l.dot(dir) >= cos_tol) {
        placed = true;
        break;
      }
    }
    if (!placed) {
      leaders.push_back(dir);
      if (static_cast<double>(leaders.size()) > limit) return {leaders.size(), true};
    }
  }
  return {leaders.size(), false};
}

struct VerifyConfig {
  int producers = 2;
  std::size_t samples = 100000;
  GridSpec grid{};
  std::uint64_t seed = 0;
  double angle_tol = 1e-3;
  int foc_grid = 100;
  OptimizerConfig solver{};
};

struct VerifyReport {
  std::optional<double> eq_profit;
  std::optional<double> eq_profit_mc;
  std::optional<double> eq_profit_mc_stderr;
  double best_response_gap = 0.0;
  Vector gap_argmax;
  GenreCount genre_count_estimate;
  std::optional<double> foc_residual_max;
  PositiveProfitCheck positive_profit;
};

inline VerifyReport verify_equilibrium(const EquilibriumDist& dist, const UserSet& users, const CostSpec& spec,
                                       const VerifyConfig& cfg) {
  VerifyReport rep;
  const bool limit = std::holds_alternative<InfiniteTwoGenre>(dist);
  const GapResult gap = best_response_gap(dist, users, spec, cfg.producers, cfg.samples, cfg.grid, cfg.seed);
  rep.best_response_gap = gap.gap;
  rep.gap_argmax = gap.argmax;
  rep.eq_profit = gap.eq_profit;
  if (!limit) {
    const McEstimate mc = eq_profit_mc(dist, users, spec, cfg.producers, cfg.samples, detail::substream(cfg.seed, 2));
    rep.eq_profit_mc = mc.mean;
    rep.eq_profit_mc_stderr = mc.stderr_;
  }
  const std::size_t n_genre = std::min<std::size_t>(cfg.samples, 10000);
  rep.genre_count_estimate =
      genre_count(eq_sample(dist, std::max<std::size_t>(n_genre, 100), detail::substream(cfg.seed, 3)), cfg.angle_tol);
  if (std::holds_alternative<QuarterCircle>(dist) || std::holds_alternative<FiniteCurve>(dist)) {
    const TwoUserPlane plane = two_user_plane(Vector::Unit(2, 0), Vector::Unit(2, 1));
    rep.foc_residual_max = foc_residual(dist, plane, spec, cfg.foc_grid);
  }
  rep.positive_profit = positive_profit_condition(users, spec, cfg.producers, cfg.solver);
  return rep;
}

}  // namespace supply_eq
