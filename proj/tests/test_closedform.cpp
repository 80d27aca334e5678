#include "supply_eq/closedform.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace supply_eq;

namespace {

Vector v2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

// Two-sided Kolmogorov-Smirnov statistic of a sample against a continuous CDF.
template <class Cdf>
double ks_distance(std::vector<double> xs, Cdf cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, std::abs(f - i / n), std::abs((i + 1) / n - f)});
  }
  return d;
}

template <class Cdf>
double max_jump(Cdf cdf, double top, int n = 10000) {
  double prev = cdf(0.0);
  double jump = 0.0;
  for (int k = 1; k <= n; ++k) {
    const double v = cdf(top * k / n);
    jump = std::max(jump, v - prev);
    prev = v;
  }
  return jump;
}

TwoUserPlane pair_plane(double theta) { return two_user_plane(v2(1, 0), v2(std::cos(theta), std::sin(theta))); }

}  // namespace

TEST(OnePopulation, CdfExamples) {
  const OnePopulation a = make_one_population(v2(1, 0), 1, CostSpec(2, 2), 2);
  EXPECT_NEAR(a.cdf(0.5), 0.25, 1e-15);
  for (double beta : {1.0, 2.0, 5.5}) {
    for (int p : {2, 3, 7}) EXPECT_EQ(make_one_population(v2(1, 0), 1, CostSpec(2, beta), p).cdf(1.0), 1.0);
  }
  const OnePopulation b = make_one_population(v2(1, 0), 4, CostSpec(2, 2), 3);
  EXPECT_NEAR(b.cdf(1.0), 0.5, 1e-15);
  EXPECT_NEAR(b.support_max(), 2.0, 1e-15);
  EXPECT_THROW(make_one_population(v2(1, 0), 1, CostSpec(2, 2), 1), std::invalid_argument);
  EXPECT_THROW(make_one_population(v2(0, 0), 1, CostSpec(2, 2), 2), std::invalid_argument);
}

TEST(OnePopulation, DirectionForOtherNorms) {
  // argmax <p,u> on the unit q-sphere is the Hoelder-dual direction u^(q'-1).
  const Vector u = v2(0.4, 1.1);
  for (double q : {1.5, 3.0}) {
    const CostSpec spec(q, 2.0);
    const OnePopulation d = make_one_population(u, 1, spec, 2);
    Vector oracle = u.array().pow(q / (q - 1.0) - 1.0);
    oracle /= weighted_norm(oracle, spec);
    EXPECT_LT((d.direction - oracle).norm(), 1e-5) << "q=" << q;
    EXPECT_NEAR(weighted_norm(d.direction, spec), 1.0, 1e-9);
  }
}

TEST(OnePopulation, ZeroProfitIdentity) {
  for (auto [n, beta, p] : {std::tuple{1, 2.0, 2}, std::tuple{4, 3.0, 5}, std::tuple{2, 7.0, 2}}) {
    const OnePopulation d = make_one_population(v2(1, 1), n, CostSpec(2, beta), p);
    for (int k = 0; k < 1000; ++k) {
      const double r = d.support_max() * k / 999.0;
      EXPECT_NEAR(n * std::pow(d.cdf(r), p - 1) - std::pow(r, beta), 0.0, 1e-12);
    }
  }
}

TEST(OnePopulation, CdfShapeAndSampler) {
  const OnePopulation d = make_one_population(v2(0.6, 0.8), 3, CostSpec(2, 2.5), 4);
  EXPECT_EQ(d.cdf(-1.0), 0.0);
  EXPECT_EQ(d.cdf(d.support_max()), 1.0);
  double prev = 0.0;
  for (int k = 0; k <= 1000; ++k) {
    const double v = d.cdf(d.support_max() * k / 1000.0);
    EXPECT_GE(v, prev);
    prev = v;
  }
  const auto s = eq_sample(d, 100000, 3);
  std::vector<double> norms;
  for (const auto& p : s) norms.push_back(p.norm());
  EXPECT_LT(ks_distance(norms, [&](double r) { return d.cdf(r); }), 0.02);
}

TEST(OnePopulation, NoAtoms) {
  // Max CDF jump on a 10^4 grid below 1e-6 needs a flat-enough CDF: P = 2, beta = 1.
  const OnePopulation d = make_one_population(v2(1, 0), 1, CostSpec(2, 1), 2);
  EXPECT_LE(max_jump([&](double r) { return d.cdf(r); }, d.support_max()), 1e-4 + 1e-12);
  // Sampled quality has no repeated values.
  const auto s = eq_sample(d, 10000, 1);
  std::vector<double> q;
  for (const auto& p : s) q.push_back(p.norm());
  std::sort(q.begin(), q.end());
  EXPECT_EQ(std::adjacent_find(q.begin(), q.end()), q.end());
}

TEST(QuarterCircle, Examples) {
  EXPECT_NEAR(make_p2_quarter_circle(2).radius, 1.0, 1e-15);
  EXPECT_NEAR(make_p2_quarter_circle(4).radius, std::pow(0.5, 0.25), 1e-15);
  EXPECT_NEAR(make_p2_quarter_circle(4).radius, 0.8409, 1e-4);
  EXPECT_NEAR(QuarterCircle::angle_cdf(std::numbers::pi / 4), 0.5, 1e-15);
  EXPECT_THROW(make_p2_quarter_circle(1.9), std::invalid_argument);
}

TEST(QuarterCircle, SamplesOnCircleWithSinSquaredAngles) {
  const QuarterCircle d = make_p2_quarter_circle(4);
  const auto s = eq_sample(d, 100000, 9);
  std::vector<double> angles;
  for (const auto& p : s) {
    EXPECT_NEAR(p.norm(), d.radius, 1e-12);
    EXPECT_GE(p.minCoeff(), 0.0);
    angles.push_back(std::atan2(p[1], p[0]));
  }
  EXPECT_LT(ks_distance(angles, QuarterCircle::angle_cdf), 0.02);
  EXPECT_LT(max_jump(QuarterCircle::angle_cdf, std::numbers::pi / 2), 1e-3);
}

TEST(QuarterCircle, DegenerateQuality) {
  const EquilibriumDist d = make_p2_quarter_circle(4);
  const double r = std::get<QuarterCircle>(d).radius;
  EXPECT_EQ(eq_cdf_quality(d, std::nullopt, r * 0.999), 0.0);
  EXPECT_EQ(eq_cdf_quality(d, std::nullopt, r), 1.0);
  EXPECT_EQ(eq_cdf_quality(d, std::nullopt, 2.0), 1.0);
}

TEST(FiniteCurve, Examples) {
  const FiniteCurve p3 = make_finite_p_curve(3);
  for (int k = 0; k <= 100; ++k) {
    const double x = k / 100.0;
    EXPECT_NEAR(p3.curve_y(x), 1.0 - x, 1e-15);
  }
  // P = 2 is the quarter circle: X = cos(theta) with P(theta <= t) = sin^2 t gives x^2.
  EXPECT_NEAR(make_finite_p_curve(2).x_cdf(0.25), 0.0625, 1e-15);
  EXPECT_NEAR(make_finite_p_curve(2).x_cdf(std::sqrt(0.5)), 0.5, 1e-15);
  EXPECT_NEAR(make_finite_p_curve(3).x_cdf(0.25), 0.25, 1e-15);
  EXPECT_NEAR(make_finite_p_curve(5).curve_y(1.0), 0.0, 1e-15);
  EXPECT_THROW(make_finite_p_curve(1), std::invalid_argument);
}

TEST(FiniteCurve, SampledXCdf) {
  for (int p : {2, 3, 4}) {
    const FiniteCurve d = make_finite_p_curve(p);
    const auto s = eq_sample(d, 100000, 100 + p);
    std::vector<double> xs;
    for (const auto& pt : s) {
      xs.push_back(pt[0]);
      EXPECT_NEAR(pt[1], d.curve_y(pt[0]), 1e-9);
    }
    EXPECT_LT(ks_distance(xs, [p](double x) { return std::min(1.0, std::pow(x, 2.0 / (p - 1))); }), 0.02)
        << "P=" << p;
  }
}

TEST(FiniteCurve, LineSegmentForThreeProducers) {
  const auto s = eq_sample(make_finite_p_curve(3), 10000, 4);
  for (const auto& p : s) EXPECT_LT(std::abs(p[0] + p[1] - 1.0), 1e-12);
}

TEST(FiniteCurve, MaxOfOpponentsHasQuadraticCdf) {
  // With P - 1 independent opponents, the best x-coordinate has CDF z^2.
  for (int p : {3, 4, 6}) {
    const FiniteCurve d = make_finite_p_curve(p);
    const auto s = eq_sample(d, 100000 * static_cast<std::size_t>(p - 1), 50 + p);
    std::vector<double> best;
    for (std::size_t i = 0; i + static_cast<std::size_t>(p - 1) <= s.size(); i += static_cast<std::size_t>(p - 1)) {
      double m = 0.0;
      for (int j = 0; j < p - 1; ++j) m = std::max(m, s[i + static_cast<std::size_t>(j)][0]);
      best.push_back(m);
    }
    EXPECT_LT(ks_distance(best, [](double z) { return std::clamp(z * z, 0.0, 1.0); }), 0.02) << "P=" << p;
  }
}

TEST(FiniteCurve, NormCdf) {
  // P = 3: ||p||^2 = u^2 + (1-u)^2 with u uniform; check against the sample CDF.
  const FiniteCurve d = make_finite_p_curve(3);
  const auto s = eq_sample(d, 100000, 12);
  std::vector<double> norms;
  for (const auto& p : s) norms.push_back(p.norm());
  EXPECT_LT(ks_distance(norms, [&](double q) { return d.cdf(q); }), 0.02);
  EXPECT_EQ(d.cdf(std::sqrt(0.5) * 0.999), 0.0);
  EXPECT_EQ(d.cdf(1.0), 1.0);
  EXPECT_LT(max_jump([&](double x) { return d.x_cdf(x); }, 1.0), 1e-3);
}

TEST(InfiniteTwoGenre, OrthogonalLimit) {
  const InfiniteTwoGenre d = make_infinite_two_genre(pair_plane(std::numbers::pi / 2), 7.0);
  EXPECT_EQ(d.theta_g, 0.0);
  EXPECT_EQ(d.c2, 0.0);
  EXPECT_NEAR(d.c1, 1.0, 1e-15);
  for (int k = 0; k <= 1000; ++k) {
    const double q = k / 1000.0;
    EXPECT_NEAR(d.fmax(q), std::pow(q, 14.0), 1e-12);
  }
  EXPECT_LT((d.genres[0] - v2(1, 0)).norm(), 1e-15);
  EXPECT_LT((d.genres[1] - v2(0, 1)).norm(), 1e-15);
}

TEST(InfiniteTwoGenre, GenreAngleMatchesGridOracle) {
  for (auto [ts, beta] : {std::pair{std::numbers::pi / 3, 7.0}, std::pair{1.2, 7.0}, std::pair{std::numbers::pi / 2.5, 5.0}}) {
    const InfiniteTwoGenre d = make_infinite_two_genre(pair_plane(ts), beta);
    constexpr int kGrid = 1000000;
    double best = -1.0;
    double arg = 0.0;
    for (int k = 0; k <= kGrid; ++k) {
      const double t = 0.5 * ts * k / kGrid;
      const double v = std::pow(std::cos(t), beta) + std::pow(std::cos(ts - t), beta);
      if (v > best) {
        best = v;
        arg = t;
      }
    }
    EXPECT_GT(d.theta_g, 0.0);
    EXPECT_LT(d.theta_g, ts / 2);
    // The objective is very flat at its peak, so compare values and the FOC root.
    EXPECT_NEAR(d.theta_g, arg, 2e-3);
    EXPECT_GE(std::pow(std::cos(d.theta_g), beta) + std::pow(std::cos(ts - d.theta_g), beta), best - 1e-15);
    EXPECT_LT(d.foc_residual(), 1e-10);
  }
}

TEST(InfiniteTwoGenre, BandStructure) {
  for (auto [ts, beta] : {std::pair{std::numbers::pi / 3, 7.0}, std::pair{1.2, 7.0}, std::pair{std::numbers::pi / 2.5, 5.0}}) {
    const InfiniteTwoGenre d = make_infinite_two_genre(pair_plane(ts), beta);
    EXPECT_GT(d.c2, 0.0);
    EXPECT_LT(d.c2, 1.0);
    EXPECT_NEAR(d.c3, d.c1 * std::pow(d.c2, -beta), 1e-12 * d.c3);
    const double top = d.support_max();
    EXPECT_NEAR(d.fmax(top), 1.0, 1e-15);
    // Example from the constant band: q = top * C2^1.5 gives C2^(2 beta).
    EXPECT_NEAR(d.fmax(top * std::pow(d.c2, 1.5)), std::pow(d.c2, 2 * beta), 1e-15);

    // Continuity at each band edge top * C2^k: a jump would exceed the change
    // the power band's slope (2 beta F / q) allows over the probe width.
    for (int k = 0; k < 12; ++k) {
      const double edge = top * std::pow(d.c2, k);
      const double h = edge * 1e-13;
      const double slack = 2.0 * beta * d.fmax(edge + h) * (2.0 * h / edge) * 1.01 + 1e-15;
      EXPECT_NEAR(d.fmax(edge - h), d.fmax(edge + h), slack) << "edge " << k;
    }
    // Product identity on (0, top].
    for (int k = 1; k <= 1000; ++k) {
      const double q = top * k / 1000.0;
      const double lhs = std::sqrt(d.fmax(q) * d.fmax(q * d.c2));
      const double rhs = std::pow(d.c2, beta) * std::pow(q, beta) / d.c1;
      EXPECT_NEAR(lhs, rhs, 1e-9) << "q=" << q;
    }
    // Nondecreasing.
    double prev = 0.0;
    for (int k = 0; k <= 10000; ++k) {
      const double v = d.fmax(top * k / 10000.0);
      EXPECT_GE(v, prev - 1e-15);
      prev = v;
    }
  }
}

TEST(InfiniteTwoGenre, QuantileInvertsCdfAndSamplerMatches) {
  const InfiniteTwoGenre d = make_infinite_two_genre(pair_plane(1.2), 7.0);
  for (int k = 1; k < 1000; ++k) {
    const double u = k / 1000.0;
    EXPECT_NEAR(d.fmax(d.fmax_quantile(u)), u, 1e-12);
  }
  const auto s = eq_sample(d, 100000, 21);
  std::vector<double> q;
  int first = 0;
  for (const auto& p : s) {
    q.push_back(p.norm());
    const double c0 = p.normalized().dot(d.genres[0]);
    const double c1 = p.normalized().dot(d.genres[1]);
    EXPECT_TRUE(std::abs(c0 - 1.0) < 1e-12 || std::abs(c1 - 1.0) < 1e-12);
    first += std::abs(c0 - 1.0) < 1e-12 ? 1 : 0;
  }
  EXPECT_NEAR(first / 100000.0, 0.5, 0.01);
  EXPECT_LT(ks_distance(q, [&](double x) { return d.fmax(x); }), 0.02);
}

TEST(InfiniteTwoGenre, RejectsSingleGenreRegime) {
  EXPECT_THROW(make_infinite_two_genre(pair_plane(std::numbers::pi / 3), 4.0), std::invalid_argument);
  EXPECT_THROW(make_infinite_two_genre(pair_plane(std::numbers::pi / 2), 2.0), std::invalid_argument);
  EXPECT_NO_THROW(make_infinite_two_genre(pair_plane(std::numbers::pi / 3), 4.01));
}

TEST(InfiniteTwoGenre, GenresInHigherDimensionalPlane) {
  Vector a(4), b(4);
  a << 1, 0.2, 0, 0.3;
  b << 0.1, 0.9, 0.4, 0;
  const TwoUserPlane plane = two_user_plane(a, b);
  const double bs = 2.0 / (1.0 - std::cos(plane.theta_star));
  const InfiniteTwoGenre d = make_infinite_two_genre(plane, bs + 3.0);
  EXPECT_NEAR(angle_between(d.genres[0], plane.users[0]), d.theta_g, 1e-9);
  EXPECT_NEAR(angle_between(d.genres[1], plane.users[1]), d.theta_g, 1e-9);
  EXPECT_NEAR(d.genres[0].norm(), 1.0, 1e-12);
}

TEST(EqCdfQuality, Examples) {
  const EquilibriumDist one = make_one_population(v2(1, 0), 1, CostSpec(2, 2), 2);
  EXPECT_EQ(eq_cdf_quality(one, std::nullopt, 1.0), 1.0);
  EXPECT_THROW(eq_cdf_quality(one, std::nullopt, -0.1), std::invalid_argument);
  const EquilibriumDist inf = make_infinite_two_genre(pair_plane(std::numbers::pi / 3), 7.0);
  EXPECT_THROW(eq_cdf_quality(inf, 2, 0.5), std::out_of_range);
  EXPECT_THROW(eq_cdf_quality(inf, std::nullopt, 0.5), std::out_of_range);
  const auto& g = std::get<InfiniteTwoGenre>(inf);
  const double q = g.support_max() * std::pow(g.c2, 1.5);
  EXPECT_NEAR(eq_cdf_quality(inf, 0, q), std::pow(g.c2, 14.0), 1e-15);
  EXPECT_EQ(eq_cdf_quality(inf, 1, q), eq_cdf_quality(inf, 0, q));
}

TEST(GenreSet, Examples) {
  const GenreSet one = genre_set(make_one_population(v2(1, 0), 1, CostSpec(2, 2), 2));
  ASSERT_EQ(one.directions.size(), 1u);
  EXPECT_LT((one.directions[0] - v2(1, 0)).norm(), 1e-15);
  EXPECT_FALSE(one.continuum);

  const GenreSet two = genre_set(make_infinite_two_genre(pair_plane(std::numbers::pi / 2), 7.0));
  ASSERT_EQ(two.directions.size(), 2u);
  EXPECT_LT((two.directions[0] - v2(1, 0)).norm(), 1e-15);
  EXPECT_LT((two.directions[1] - v2(0, 1)).norm(), 1e-15);

  EXPECT_TRUE(genre_set(make_p2_quarter_circle(4)).continuum);
  EXPECT_TRUE(genre_set(make_finite_p_curve(4)).continuum);
  EXPECT_EQ(variant_name(make_finite_p_curve(4)), "finitep");
}
