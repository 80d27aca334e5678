#pragma once

// Closed-form symmetric mixed equilibria: CDFs, inverse-transform samplers,
// and genre sets.

#include "supply_eq/core_geometry.hpp"
#include "supply_eq/optimize.hpp"

#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

namespace supply_eq {

/// Single-genre equilibrium for N users at one location: quality CDF
/// F(r) = min(1, (r^beta / N)^(1/(P-1))) along the direction p*.
struct OnePopulation {
  Vector direction;
  int n_users = 1;
  double beta = 2.0;
  int producers = 2;

  [[nodiscard]] double support_max() const { return std::pow(static_cast<double>(n_users), 1.0 / beta); }

  [[nodiscard]] double cdf(double r) const {
    if (r <= 0.0) return 0.0;
    const double s = std::pow(r, beta) / n_users;
    if (s >= 1.0) return 1.0;
    return std::pow(s, 1.0 / (producers - 1));
  }

  [[nodiscard]] double quantile(double u) const {
    return std::pow(n_users * std::pow(u, producers - 1.0), 1.0 / beta);
  }
};

/// Two users at e1, e2 with P = 2: constant radius (2/beta)^(1/beta), angle CDF sin^2.
struct QuarterCircle {
  double beta = 2.0;
  double radius = 1.0;
  TwoUserPlane plane;

  [[nodiscard]] static double angle_cdf(double theta) {
    if (theta <= 0.0) return 0.0;
    if (theta >= std::numbers::pi / 2) return 1.0;
    const double s = std::sin(theta);
    return s * s;
  }

  [[nodiscard]] double cdf(double q) const { return q < radius ? 0.0 : 1.0; }
};

/// Two users at e1, e2 with beta = 2 and P producers: support on the curve
/// (x, (1 - x^(2/(P-1)))^((P-1)/2)) with x-CDF min(1, x^(2/(P-1))).
struct FiniteCurve {
  int producers = 2;
  TwoUserPlane plane;

  [[nodiscard]] double exponent() const { return 0.5 * (producers - 1); }

  [[nodiscard]] double x_cdf(double x) const {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    return std::pow(x, 2.0 / (producers - 1));
  }

  [[nodiscard]] double curve_y(double x) const {
    const double s = std::pow(std::clamp(x, 0.0, 1.0), 2.0 / (producers - 1));
    return std::pow(std::max(0.0, 1.0 - s), exponent());
  }

  /// Point on the support whose x-CDF value is u.
  [[nodiscard]] std::array<double, 2> point_at(double u) const {
    const double k = exponent();
    return {std::pow(u, k), std::pow(1.0 - u, k)};
  }

  /// CDF of the Euclidean norm. With u uniform the squared norm is
  /// u^(P-1) + (1-u)^(P-1), symmetric about u = 1/2 and decreasing on [0, 1/2].
  [[nodiscard]] double cdf(double q) const {
    if (q <= 0.0) return 0.0;
    const double q2 = q * q;
    if (q2 >= 1.0) return 1.0;
    const double lowest = 2.0 * std::pow(0.5, producers - 1.0);
    if (producers == 2 || q2 < lowest) return 0.0;
    auto g = [&](double u) { return std::pow(u, producers - 1.0) + std::pow(1.0 - u, producers - 1.0); };
    double lo = 0.0;
    double hi = 0.5;
    for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (g(mid) > q2) lo = mid; else hi = mid;
    }
    return std::clamp(1.0 - 2.0 * 0.5 * (lo + hi), 0.0, 1.0);
  }
};

/// Infinite-producer two-genre equilibrium for two users at angle theta*.
struct InfiniteTwoGenre {
  double theta_star = std::numbers::pi / 2;
  double beta = 7.0;
  double theta_g = 0.0;
  double c1 = 1.0;
  double c2 = 0.0;
  /// c1 * c2^(-beta); +inf when c2 = 0.
  double c3 = kInfNorm;
  TwoUserPlane plane;
  std::array<Vector, 2> genres;
  std::array<double, 2> weights{0.5, 0.5};

  [[nodiscard]] double support_max() const { return std::pow(c1, 1.0 / beta); }

  /// Winning-producer quality CDF: alternating power and flat bands below c1^(1/beta).
  [[nodiscard]] double fmax(double q) const {
    if (q <= 0.0) return 0.0;
    const double top = support_max();
    if (q >= top) return 1.0;
    const double log_c1 = std::log(c1);
    if (c2 == 0.0) return std::min(1.0, std::exp(2.0 * beta * std::log(q) - 2.0 * log_c1));
    const double log_c2 = std::log(c2);
    const double t = std::log(q / top) / log_c2;
    const auto k = static_cast<long long>(std::floor(t));
    const long long n = k / 2;
    if (k % 2 == 1) return std::exp(static_cast<double>(2 * n + 2) * beta * log_c2);
    return std::min(1.0, std::exp(-2.0 * log_c1 - 2.0 * static_cast<double>(n) * beta * log_c2 +
                                  2.0 * beta * std::log(q)));
  }

  /// Lower-edge inverse of fmax; flat bands carry no mass and are skipped.
  [[nodiscard]] double fmax_quantile(double u) const {
    if (u <= 0.0) return 0.0;
    if (u >= 1.0) return support_max();
    const double log_c1 = std::log(c1);
    if (c2 == 0.0) return std::exp((std::log(u) + 2.0 * log_c1) / (2.0 * beta));
    const double log_c2 = std::log(c2);
    const auto n = static_cast<long long>(std::floor(std::log(u) / (2.0 * beta * log_c2)));
    return std::exp((std::log(u) + 2.0 * log_c1 + 2.0 * static_cast<double>(n) * beta * log_c2) / (2.0 * beta));
  }

  /// Residual of sin(t) cos^(b-1)(t) = sin(T - t) cos^(b-1)(T - t) at theta_g.
  [[nodiscard]] double foc_residual() const {
    return std::abs(std::sin(theta_g) * std::pow(std::cos(theta_g), beta - 1.0) -
                    std::sin(theta_star - theta_g) * std::pow(std::cos(theta_star - theta_g), beta - 1.0));
  }
};

using EquilibriumDist = std::variant<OnePopulation, QuarterCircle, FiniteCurve, InfiniteTwoGenre>;

inline std::string variant_name(const EquilibriumDist& dist) {
  static constexpr const char* kNames[] = {"onepop", "p2", "finitep", "infinite"};
  return kNames[dist.index()];
}

/// Direction p* maximizing <p, u> on the unit cost sphere.
inline OnePopulation make_one_population(const Vector& u, int n_users, const CostSpec& spec, int producers,
                                         const OptimizerConfig& cfg = {}) {
  if (producers < 2) throw std::invalid_argument("make_one_population: need P >= 2");
  if (n_users < 1) throw std::invalid_argument("make_one_population: need N >= 1");
  if ((u.array() < 0.0).any() || !(u.maxCoeff() > 0.0)) {
    throw std::invalid_argument("make_one_population: u must be nonzero and nonnegative");
  }
  spec.validate();
  OnePopulation d;
  d.n_users = n_users;
  d.beta = spec.beta;
  d.producers = producers;
  if (spec.q == 2.0 && spec.unit_weights()) {
    d.direction = u / u.norm();
  } else {
    d.direction = nsw_direction(UserSet(Matrix(u.transpose())), spec, cfg).point;
  }
  return d;
}

inline QuarterCircle make_p2_quarter_circle(double beta) {
  if (!(beta >= 2.0)) throw std::invalid_argument("make_p2_quarter_circle: need beta >= 2");
  QuarterCircle d;
  d.beta = beta;
  d.radius = std::pow(2.0 / beta, 1.0 / beta);
  d.plane = two_user_plane(Vector::Unit(2, 0), Vector::Unit(2, 1));
  return d;
}

inline FiniteCurve make_finite_p_curve(int producers) {
  if (producers < 2) throw std::invalid_argument("make_finite_p_curve: need P >= 2");
  FiniteCurve d;
  d.producers = producers;
  d.plane = two_user_plane(Vector::Unit(2, 0), Vector::Unit(2, 1));
  return d;
}

namespace detail {

// argmax over [0, T/2] of cos^b(t) + cos^b(T - t): grid, golden section, then
// bisection on the first-order condition to pin an interior root.
inline double solve_genre_angle(double theta_star, double beta) {
  auto obj = [&](double t) { return std::pow(std::cos(t), beta) + std::pow(std::cos(theta_star - t), beta); };
  auto foc = [&](double t) {
    return std::sin(t) * std::pow(std::cos(t), beta - 1.0) -
           std::sin(theta_star - t) * std::pow(std::cos(theta_star - t), beta - 1.0);
  };
  const double half = 0.5 * theta_star;
  constexpr int kGrid = 10000;
  int best = 0;
  double best_val = obj(0.0);
  for (int k = 1; k <= kGrid; ++k) {
    const double v = obj(half * k / kGrid);
    if (v > best_val) {
      best_val = v;
      best = k;
    }
  }
  double a = half * std::max(0, best - 1) / kGrid;
  double b = half * std::min(kGrid, best + 1) / kGrid;
  const double lo_bracket = a;
  const double hi_bracket = b;
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = obj(x1);
  double f2 = obj(x2);
  while (b - a > 1e-12) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = obj(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = obj(x1);
    }
  }
  double theta = 0.5 * (a + b);
  if (obj(0.0) >= obj(theta)) return 0.0;

  // The objective is flat at its peak; root-find the FOC for full precision.
  // foc < 0 left of the maximizer and > 0 right of it.
  double lo = lo_bracket;
  double hi = std::min(hi_bracket, half * (1.0 - 1e-9));
  if (lo > 0.0 && foc(lo) < 0.0 && foc(hi) > 0.0) {
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      if (foc(mid) < 0.0) lo = mid; else hi = mid;
    }
    theta = std::abs(foc(lo)) < std::abs(foc(hi)) ? lo : hi;
  }
  return theta;
}

}  // namespace detail

inline InfiniteTwoGenre make_infinite_two_genre(const TwoUserPlane& plane, double beta) {
  const double ts = plane.theta_star;
  const double threshold = 2.0 / (1.0 - std::cos(ts));
  if (!(beta > threshold)) {
    throw std::invalid_argument("make_infinite_two_genre: need beta > 2/(1 - cos theta*) = " +
                                std::to_string(threshold));
  }
  InfiniteTwoGenre d;
  d.theta_star = ts;
  d.beta = beta;
  d.plane = plane;
  d.theta_g = detail::solve_genre_angle(ts, beta);
  // c1 puts the top of the power band where the marginal c*z^beta reaches 1,
  // with c = sin(T - tG) / (sin T cos^(b-1) tG).
  d.c1 = std::sin(ts) / (std::sin(ts - d.theta_g) * std::cos(d.theta_g));
  d.c2 = std::cos(ts - d.theta_g) / std::cos(d.theta_g);
  if (d.c2 < 1e-15) d.c2 = 0.0;
  d.c3 = d.c2 == 0.0 ? kInfNorm : d.c1 * std::pow(d.c2, -beta);
  d.genres = {plane.embed(d.theta_g, 1.0), plane.embed(ts - d.theta_g, 1.0)};
  return d;
}

/// Quality CDF of the variant; for InfiniteTwoGenre the winning-producer
/// conditional CDF of the requested genre.
inline double eq_cdf_quality(const EquilibriumDist& dist, std::optional<int> genre, double q) {
  if (q < 0.0) throw std::invalid_argument("eq_cdf_quality: q must be >= 0");
  if (const auto* inf = std::get_if<InfiniteTwoGenre>(&dist)) {
    if (!genre.has_value() || *genre < 0 || *genre > 1) {
      throw std::out_of_range("eq_cdf_quality: genre index must be 0 or 1");
    }
    return inf->fmax(q);
  }
  return std::visit(
      [&](const auto& d) -> double {
        if constexpr (std::is_same_v<std::decay_t<decltype(d)>, InfiniteTwoGenre>) {
          return d.fmax(q);
        } else {
          return d.cdf(q);
        }
      },
      dist);
}

/// n independent draws. InfiniteTwoGenre draws the winning-producer law.
inline std::vector<ContentVector> eq_sample(const EquilibriumDist& dist, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("eq_sample: n must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<ContentVector> out;
  out.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    const double u = unif(rng);
    if (const auto* d = std::get_if<OnePopulation>(&dist)) {
      out.push_back(d->quantile(u) * d->direction);
    } else if (const auto* d = std::get_if<QuarterCircle>(&dist)) {
      const double theta = std::asin(std::sqrt(u));
      Vector p(2);
      p << d->radius * std::cos(theta), d->radius * std::sin(theta);
      out.push_back(p);
    } else if (const auto* d = std::get_if<FiniteCurve>(&dist)) {
      const auto xy = d->point_at(u);
      Vector p(2);
      p << xy[0], xy[1];
      out.push_back(p);
    } else {
      const auto& g = std::get<InfiniteTwoGenre>(dist);
      const int genre = unif(rng) < g.weights[0] ? 0 : 1;
      out.push_back(g.fmax_quantile(u) * g.genres[genre]);
    }
  }
  return out;
}

struct GenreSet {
  std::vector<Vector> directions;
  bool continuum = false;
  std::string description;
};

inline GenreSet genre_set(const EquilibriumDist& dist) {
  GenreSet gs;
  if (const auto* d = std::get_if<OnePopulation>(&dist)) {
    gs.directions = {d->direction / d->direction.norm()};
    gs.description = "single ray";
  } else if (const auto* d = std::get_if<InfiniteTwoGenre>(&dist)) {
    gs.directions = {d->genres[0], d->genres[1]};
    gs.description = "two rays at in-plane angles theta_G and theta* - theta_G";
  } else if (std::holds_alternative<QuarterCircle>(dist)) {
    gs.continuum = true;
    gs.description = "all directions (cos t, sin t), t in [0, pi/2]";
  } else {
    gs.continuum = true;
    gs.description = "directions of (x, (1 - x^(2/(P-1)))^((P-1)/2)), x in [0, 1]";
  }
  return gs;
}

}  // namespace supply_eq
