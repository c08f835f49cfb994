#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "beltrami/fixtures.hpp"
#include "beltrami/metric.hpp"

using namespace beltrami;

namespace {
using V = std::vector<double>;
}

TEST(Metric, EuclideanThreeFourFive) {
  const V a{0, 0}, b{3, 4};
  EXPECT_DOUBLE_EQ(distance(MetricSpace::euclidean(2), a, b), 5.0);
}

TEST(Metric, BallDistanceFromOrigin) {
  // d(0, x) = 2 artanh |x|; at |x| = 0.5 that is ln 3
  const V o{0, 0}, x{0.5, 0};
  EXPECT_NEAR(distance(MetricSpace::poincare_ball(2), o, x), std::log(3.0), 1e-14);
  EXPECT_NEAR(std::log(3.0), 1.0986123, 1e-7);
}

TEST(Metric, DistanceToSelfIsZero) {
  const V u{0.3, -0.2};
  EXPECT_EQ(distance(MetricSpace::euclidean(2), u, u), 0.0);
  EXPECT_EQ(distance(MetricSpace::poincare_ball(2), u, u), 0.0);
}

TEST(Metric, BallDistanceSymmetricAndTriangle) {
  std::mt19937_64 rng(2);
  const auto m = MetricSpace::poincare_ball(3);
  const Matrix p = fixtures::random_ball_points(30, 3, rng);
  for (std::size_t i = 0; i + 2 < 30; ++i) {
    const double ab = distance(m, p.row(i), p.row(i + 1));
    EXPECT_NEAR(ab, distance(m, p.row(i + 1), p.row(i)), 1e-12);
    EXPECT_LE(distance(m, p.row(i), p.row(i + 2)), ab + distance(m, p.row(i + 1), p.row(i + 2)) + 1e-12);
  }
}

TEST(Metric, DimensionAndDomainChecked) {
  const V a{0, 0}, b{0, 0, 0}, out{1.5, 0};
  EXPECT_THROW(distance(MetricSpace::euclidean(2), a, b), InputError);
  EXPECT_THROW(distance(MetricSpace::poincare_ball(2), a, out), InputError);
  EXPECT_THROW(MetricSpace::poincare_ball(2, 0.0), InputError);
}

TEST(Metric, ProjectionRescalesOutsidePoints) {
  const auto m = MetricSpace::poincare_ball(2, 1e-5);
  const V u{2, 0}, inside{0.3, 0.4};
  const V p = project(m, u);
  EXPECT_NEAR(p[0], 0.99999, 1e-15);
  EXPECT_EQ(p[1], 0.0);
  EXPECT_EQ(project(m, inside), inside);
  const V any{7, -3};
  EXPECT_EQ(project(MetricSpace::euclidean(2), any), any);
}

TEST(Metric, ProjectedNormsBounded) {
  std::mt19937_64 rng(4);
  const auto m = MetricSpace::poincare_ball(4, 1e-3);
  const Matrix x = fixtures::random_matrix(50, 4, rng, -3.0, 3.0);
  for (std::size_t i = 0; i < 50; ++i) {
    const V p = project(m, x.row(i));
    EXPECT_LE(std::sqrt(detail::squared_norm(p)), 1.0 - 1e-3 + 1e-15);
  }
}

TEST(Metric, RiemannianScale) {
  const auto m = MetricSpace::poincare_ball(2);
  const V g{1, 0}, origin{0, 0};
  EXPECT_EQ(riemannian_scale(m, origin, g), (V{0.25, 0}));
  const V half{std::sqrt(0.5), 0};  // |u|^2 = 0.5
  EXPECT_NEAR(riemannian_scale(m, half, g)[0], 0.0625, 1e-15);
  const V any{3, -1};
  EXPECT_EQ(riemannian_scale(MetricSpace::euclidean(2), half, any), any);
}

TEST(Metric, DistanceGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  const auto m = MetricSpace::poincare_ball(3);
  const Matrix p = fixtures::random_ball_points(10, 3, rng, 0.8);
  for (std::size_t i = 0; i + 1 < 10; ++i) {
    const auto g = poincare_distance_grad(p.row(i), p.row(i + 1));
    V u(p.row(i).begin(), p.row(i).end());
    for (std::size_t c = 0; c < 3; ++c) {
      const double h = 1e-6, orig = u[c];
      u[c] = orig + h;
      const double up = distance(m, u, p.row(i + 1));
      u[c] = orig - h;
      const double down = distance(m, u, p.row(i + 1));
      u[c] = orig;
      EXPECT_NEAR(g[c], (up - down) / (2 * h), 1e-6);
    }
  }
  const V same{0.1, 0.2, 0.3};
  EXPECT_EQ(poincare_distance_grad(same, same), (V{0, 0, 0}));
}
