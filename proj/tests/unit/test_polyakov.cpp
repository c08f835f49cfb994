#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "beltrami/fixtures.hpp"
#include "beltrami/polyakov.hpp"

using namespace beltrami;

namespace {

Matrix column(std::initializer_list<double> v) {
  Matrix m(v.size(), 1);
  std::size_t i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

double rel_inf(const Matrix& a, const Matrix& b) {
  return max_abs_diff(a, b) / std::max(1.0, max_abs(b));
}

}  // namespace

TEST(Action, HandValues) {
  const auto psi = PsiFamily::classical();
  EXPECT_DOUBLE_EQ(action(fixtures::path(2), column({0, 1}), psi), 1.0);
  EXPECT_EQ(action(fixtures::karate(), Matrix(34, 3, 0.4), psi), 0.0);
  EXPECT_DOUBLE_EQ(action(fixtures::cycle(3), column({0, 1, 2}), psi), 6.0);
}

TEST(Action, ShapeChecked) {
  EXPECT_THROW(action(fixtures::path(3), column({0, 1}), PsiFamily::classical()), InputError);
}

TEST(Diffusivity, ClassicalIsExactlyTwo) {
  std::mt19937_64 rng(1);
  const Graph g = fixtures::random_graph(10, 0.3, rng);
  const Matrix z = fixtures::random_matrix(10, 3, rng);
  for (NodeId i = 0; i < 10; ++i)
    for (NodeId j : g.neighbors(i)) EXPECT_EQ(closed_form_diffusivity(g, z, PsiFamily::classical(), i, j), 2.0);
}

TEST(Diffusivity, ConstantPsiSumsBothDirections) {
  const Graph g = fixtures::path(3);
  const auto psi = PsiFamily::custom([](NodeId i, NodeId j, std::span<const double>) { return 1.0 + i + 10.0 * j; },
                                     [](NodeId, NodeId, NodeId, std::span<const double>) { return 0.0; });
  const Matrix z = column({0.3, -1.0, 2.0});
  EXPECT_DOUBLE_EQ(closed_form_diffusivity(g, z, psi, 0, 1), (1.0 + 10.0) + (1.0 + 1.0));
  EXPECT_DOUBLE_EQ(closed_form_diffusivity(g, z, psi, 2, 1), (1.0 + 2.0 + 10.0) + (1.0 + 1.0 + 20.0));
}

TEST(Diffusivity, NonEdgeRejected) {
  EXPECT_THROW(closed_form_diffusivity(fixtures::path(3), column({0, 1, 2}), PsiFamily::classical(), 0, 2), InputError);
}

TEST(Diffusivity, DependsOnlyOnTwoHopNeighbourhood) {
  // a(i, j) reads the profiles of i and j restricted to their neighbours, so
  // moving a node outside N(i) and N(j) leaves it unchanged.
  const Graph g = fixtures::path(6);
  const auto psi = PsiFamily::random_sigmoid_family(g, 4);
  std::mt19937_64 rng(2);
  Matrix z = fixtures::random_matrix(6, 2, rng);
  const double before = closed_form_diffusivity(g, z, psi, 1, 2);
  z(5, 0) += 3.0;
  z(4, 1) -= 2.0;
  EXPECT_EQ(closed_form_diffusivity(g, z, psi, 1, 2), before);
  z(3, 0) += 1.0;  // neighbour of 2
  EXPECT_NE(closed_form_diffusivity(g, z, psi, 1, 2), before);
}

TEST(Gradient, TwoNodeHandValue) {
  const Matrix grad = grad_action(fixtures::path(2), column({0, 1}), PsiFamily::classical());
  EXPECT_DOUBLE_EQ(grad(0, 0), -2.0);
  EXPECT_DOUBLE_EQ(grad(1, 0), 2.0);
}

TEST(Gradient, ConstantEmbeddingIsStationary) {
  const Graph g = fixtures::karate();
  const auto psi = PsiFamily::random_sigmoid_family(g, 1);
  EXPECT_EQ(max_abs(grad_action(g, Matrix(34, 2, -0.3), psi)), 0.0);
}

TEST(Gradient, MatchesFiniteDifferencesAndChainRule) {
  std::mt19937_64 rng(3);
  for (std::size_t n : {5u, 8u, 12u}) {
    const Graph g = fixtures::random_graph(n, 0.35, rng);
    const Matrix z = fixtures::random_matrix(n, 3, rng, -0.5, 0.5);
    for (const auto& psi : {PsiFamily::classical(), PsiFamily::random_sigmoid_family(g, n)}) {
      const Matrix grad = grad_action(g, z, psi);
      EXPECT_LE(rel_inf(grad, grad_action_fd(g, z, psi)), 1e-5);
      EXPECT_LE(rel_inf(grad, grad_action_chain_rule(g, z, psi)), 1e-10);
    }
  }
}

TEST(GradientFlow, ClassicalActionStrictlyDecreases) {
  std::mt19937_64 rng(4);
  const Graph g = fixtures::random_graph(9, 0.3, rng);
  const Matrix z = fixtures::random_matrix(9, 2, rng);
  const auto rep = verify_gradient_flow(g, z, PsiFamily::classical(), 100, 0.01);
  ASSERT_EQ(rep.actions.size(), 101u);
  for (std::size_t k = 1; k < rep.actions.size(); ++k) EXPECT_LT(rep.actions[k], rep.actions[k - 1]);
  EXPECT_TRUE(rep.passed());
  EXPECT_LE(rep.max_route_gap, 1e-12);
  EXPECT_FALSE(rep.first_violation.has_value());
}

TEST(GradientFlow, TwoNodeDecayRate) {
  // dz/dt = -grad S gives d(z1 - z0)/dt = -4 (z1 - z0), so S(t) = S(0) e^{-8t}.
  const auto rep = verify_gradient_flow(fixtures::path(2), column({0, 1}), PsiFamily::classical(), 100, 0.001);
  EXPECT_NEAR(rep.actions.back(), std::exp(-0.8), 1e-3);
}

TEST(GradientFlow, SigmoidFamilyMonotone) {
  std::mt19937_64 rng(5);
  for (int r = 0; r < 5; ++r) {
    const Graph g = fixtures::random_graph(10, 0.3, rng);
    const Matrix z = fixtures::random_matrix(10, 2, rng, -0.5, 0.5);
    const auto rep = verify_gradient_flow(g, z, PsiFamily::random_sigmoid_family(g, r), 200, 0.01);
    EXPECT_TRUE(rep.monotone);
    EXPECT_LE(rep.max_route_gap, 1e-10);
  }
}

TEST(GradientFlow, OversizedStepIsReported) {
  // tau far above the stability bound makes the explicit scheme overshoot.
  const auto rep = verify_gradient_flow(fixtures::path(2), column({0, 1}), PsiFamily::classical(), 3, 1.0);
  EXPECT_GT(1.0, rep.stability_bound);
  EXPECT_FALSE(rep.monotone);
  EXPECT_EQ(rep.first_violation, 1u);
  EXPECT_THROW(verify_gradient_flow(fixtures::path(2), column({0, 1}), PsiFamily::classical(), 3, 0.0), InputError);
}

TEST(Family, SigmoidNeedsOneEntryPerSlot) {
  const Graph g = fixtures::path(3);
  EXPECT_THROW(PsiFamily::sigmoid_family(g, {1.0}, {1.0}), InputError);
  EXPECT_TRUE(PsiFamily::classical().is_classical());
  EXPECT_FALSE(PsiFamily::random_sigmoid_family(g, 0).is_classical());
}
