#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>
#include <string>

#include "beltrami/fixtures.hpp"
#include "beltrami/io.hpp"
#include "beltrami/learning.hpp"

using namespace beltrami;

namespace {

const std::string kFixtures = BELTRAMI_FIXTURES;

SolverConfig euler(double tau, double t_end) {
  SolverConfig c;
  c.tau = tau;
  c.t_end = t_end;
  return c;
}

ModelParams<double> perturbed(const ModelParams<double>& p, std::mt19937_64& rng, double scale = 0.5) {
  auto theta = p.flatten();
  std::uniform_real_distribution<double> d(-scale, scale);
  for (double& t : theta) t += d(rng);
  return ModelParams<double>::from_flat(p, std::span<const double>(theta));
}

double rel_inf(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, scale = 1.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    diff = std::max(diff, std::abs(a[k] - b[k]));
    scale = std::max(scale, std::abs(b[k]));
  }
  return diff / scale;
}

NodeData two_clique_data(std::uint64_t seed) {
  NodeData d;
  d.features = io::load_matrix(kFixtures + "/two_clique.features");
  d.positions = Matrix(10, 0);
  d.labels = io::load_labels(kFixtures + "/two_clique.labels");
  d.split = make_split(d.labels, 2, 2, 0, seed);
  return d;
}

NodeData karate_data(std::uint64_t seed, std::size_t val_per_class = 0) {
  NodeData d;
  d.features = Matrix(34, 34);
  for (std::size_t i = 0; i < 34; ++i) d.features(i, i) = 1.0;
  d.positions = Matrix(34, 0);
  d.labels = fixtures::karate_labels();
  d.split = make_split(d.labels, 2, 4, val_per_class, seed);
  return d;
}

}  // namespace

TEST(Autodiff, ElementaryDerivatives) {
  ad::TapeScope scope;
  const ad::Var x = ad::Var::independent(2.0), y = ad::Var::independent(3.0);
  const ad::Var f = x * y + exp(x) / y - log(y) + sqrt(x) - x;
  const auto g = ad::gradient(f, {x, y});
  EXPECT_NEAR(g[0], 3.0 + std::exp(2.0) / 3.0 + 0.5 / std::sqrt(2.0) - 1.0, 1e-14);
  EXPECT_NEAR(g[1], 2.0 - std::exp(2.0) / 9.0 - 1.0 / 3.0, 1e-14);
  EXPECT_DOUBLE_EQ(f.value(), 6.0 + std::exp(2.0) / 3.0 - std::log(3.0) + std::sqrt(2.0) - 2.0);
}

TEST(Autodiff, MaxPicksBranchAndConstantsHaveNoGradient) {
  ad::TapeScope scope;
  const ad::Var a = ad::Var::independent(1.0), b = ad::Var::independent(-1.0);
  const ad::Var c = 5.0;
  const auto g = ad::gradient(max(a, b) * c, {a, b, c});
  EXPECT_EQ(g[0], 5.0);
  EXPECT_EQ(g[1], 0.0);
  EXPECT_EQ(g[2], 0.0);
  EXPECT_TRUE(c.is_constant());
}

TEST(Loss, HandValues) {
  const std::vector<int> labels{0};
  const std::vector<NodeId> subset{0};
  EXPECT_NEAR(loss<double>(Matrix(1, 2), labels, subset), std::log(2.0), 1e-15);
  Matrix l(1, 2);
  l(0, 0) = 1.0;
  EXPECT_NEAR(loss<double>(l, labels, subset), std::log1p(std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(loss<double>(l, labels, subset), 0.3133, 1e-4);
  l(0, 0) = 50.0;
  EXPECT_LT(loss<double>(l, labels, subset), 1e-20);
  l(0, 0) = 1e6;  // no overflow with the max shift
  EXPECT_EQ(loss<double>(l, labels, subset), 0.0);
}

TEST(Loss, RejectsUnlabeledAndEmpty) {
  const std::vector<int> labels{-1, 0};
  const std::vector<NodeId> bad{0}, none{};
  EXPECT_THROW(loss<double>(Matrix(2, 2), labels, bad), InputError);
  EXPECT_THROW(loss<double>(Matrix(2, 2), labels, none), InputError);
}

TEST(Gradient, QuadraticCalibration) {
  const std::vector<double> theta{0.5, -1.25, 2.0, 0.0};
  const auto objective = [](auto flat) {
    using T = std::remove_const_t<typename decltype(flat)::element_type>;
    T s(0);
    for (std::size_t k = 0; k < flat.size(); ++k) s += T(static_cast<double>(k + 1)) * flat[k] * flat[k];
    return s;
  };
  GradientSpec rev;
  const auto r = value_and_gradient(objective, theta, rev);
  GradientSpec fd{GradMode::FiniteDifference, 1e-4};
  const auto f = value_and_gradient(objective, theta, fd);
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double exact = 2.0 * static_cast<double>(k + 1) * theta[k];
    EXPECT_DOUBLE_EQ(r.gradient[k], exact);
    EXPECT_NEAR(f.gradient[k], exact, 1e-8);
  }
  EXPECT_EQ(r.value, f.value);
  fd.h = 0.0;
  EXPECT_THROW(value_and_gradient(objective, theta, fd), InputError);
}

TEST(Gradient, ReverseMatchesFiniteDifferencesOnTheFullModel) {
  std::mt19937_64 rng(1);
  const Graph g = fixtures::random_graph(6, 0.4, rng);
  NodeData d;
  d.positions = fixtures::random_matrix(6, 2, rng);
  d.features = fixtures::random_matrix(6, 3, rng);
  d.labels = {0, 1, 0, 1, 1, 0};
  d.split.train = {0, 1, 2, 3, 4, 5};
  const ModelShape shape{2, 3, 2, 2, 2, 2};
  for (Kernel k : {Kernel::ScaledDot, Kernel::CosineSim, Kernel::Pearson, Kernel::ExpKernel})
    for (Normalizer n : {Normalizer::Softmax, Normalizer::Squareplus}) {
      const auto p = perturbed(init_params(shape, k, n, 7), rng);
      const auto obj = training_objective(g, d, p, euler(0.5, 1.5));
      const auto theta = p.flatten();
      const auto rev = value_and_gradient(obj, theta, GradientSpec{});
      const auto fd = value_and_gradient(obj, theta, GradientSpec{GradMode::FiniteDifference, 1e-5});
      EXPECT_LT(rel_inf(rev.gradient, fd.gradient), 1e-4) << kernel_name(k) << " " << normalizer_name(n);
      EXPECT_NEAR(rev.value, fd.value, 1e-14);
    }
}

TEST(Gradient, ParametersOutsideTheGraphAreUnused) {
  // With no diffusion the attention weights and alpha never touch the loss.
  const NodeData d = karate_data(0);
  const ModelShape shape{0, 34, 0, 4, 2, 2};
  std::mt19937_64 rng(2);
  const auto p = perturbed(init_params(shape, Kernel::ScaledDot, Normalizer::Softmax, 1), rng);
  const Graph g = fixtures::karate();
  const auto obj = training_objective(g, d, p, euler(0.5, 0.0));
  const auto grad = value_and_gradient(obj, p.flatten(), GradientSpec{}).gradient;
  const std::size_t first = p.psi_w.size() + p.psi_b.size();
  const std::size_t last = first + 1 + p.diffusivity.w_key.size() + p.diffusivity.w_query.size();
  for (std::size_t k = first; k < last; ++k) EXPECT_EQ(grad[k], 0.0);
  double used = 0.0;
  for (std::size_t k = last; k < grad.size(); ++k) used = std::max(used, std::abs(grad[k]));
  EXPECT_GT(used, 0.0);
}

TEST(Forward, ZeroHorizonIsEncodeThenDecode) {
  std::mt19937_64 rng(3);
  const Graph g = fixtures::random_graph(7, 0.4, rng);
  const Matrix pos = fixtures::random_matrix(7, 2, rng), feat = fixtures::random_matrix(7, 3, rng);
  const auto p = perturbed(init_params(ModelShape{2, 3, 2, 3, 2, 3}, Kernel::CosineSim, Normalizer::Softmax, 4), rng);
  const Matrix expect = decode(p, encode(p, pos, feat));
  EXPECT_EQ(forward<double>(g, pos, feat, p, euler(0.1, 0.0)), expect);
  EXPECT_NE(forward<double>(g, pos, feat, p, euler(0.1, 1.0)), expect);
}

TEST(Forward, IdenticalRowsGiveIdenticalLogits) {
  std::mt19937_64 rng(4);
  const auto p = perturbed(init_params(ModelShape{0, 3, 0, 4, 2, 2}, Kernel::ScaledDot, Normalizer::Softmax, 0), rng);
  Matrix feat(34, 3);
  for (std::size_t i = 0; i < 34; ++i) feat(i, 0) = 0.3, feat(i, 1) = -1.0, feat(i, 2) = 2.0;
  const Matrix logits = forward<double>(fixtures::karate(), Matrix(34, 0), feat, p, euler(0.5, 3.0));
  for (std::size_t i = 1; i < 34; ++i)
    for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(logits(i, c), logits(0, c), 1e-14);
}

TEST(Forward, KarateShapeAndFinite) {
  const NodeData d = karate_data(0);
  const auto p = init_params(ModelShape{0, 34, 0, 8, 4, 2}, Kernel::ScaledDot, Normalizer::Softmax, 0);
  const Matrix logits = forward<double>(fixtures::karate(), d.positions, d.features, p, euler(0.5, 3.0));
  EXPECT_EQ(logits.rows(), 34u);
  EXPECT_EQ(logits.cols(), 2u);
  EXPECT_TRUE(all_finite(logits));
  EXPECT_THROW(forward<double>(fixtures::path(3), d.positions, d.features, p, euler(0.5, 3.0)), InputError);
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  const NodeData d = karate_data(1);
  const auto p = init_params(ModelShape{0, 34, 0, 4, 2, 2}, Kernel::ScaledDot, Normalizer::Softmax, 1);
  TrainConfig cfg;
  cfg.lr = 0.0;
  cfg.epochs = 5;
  cfg.solver = euler(0.5, 1.0);
  const auto r = train(fixtures::karate(), d, p, cfg);
  EXPECT_EQ(r.params.flatten(), p.flatten());
  for (const auto& m : r.history) EXPECT_EQ(m.train_loss, r.history[0].train_loss);
}

TEST(Train, TwoCliquesAreSeparated) {
  const NodeData d = two_clique_data(0);
  const auto p = init_params(ModelShape{0, 2, 0, 4, 2, 2}, Kernel::ScaledDot, Normalizer::Softmax, 0);
  TrainConfig cfg;
  cfg.lr = 0.2;
  cfg.epochs = 60;
  cfg.solver = euler(0.5, 1.0);
  const Graph g = fixtures::two_cliques();
  const auto r = train(g, d, p, cfg);
  for (std::size_t e = 1; e < 20; ++e) EXPECT_LT(r.history[e].train_loss, r.history[e - 1].train_loss);
  const auto acc = evaluate(g, d, r.params, cfg.solver);
  EXPECT_EQ(acc.train, 1.0);
  EXPECT_EQ(acc.test, 1.0);
  EXPECT_EQ(r.best_epoch, cfg.epochs);  // no validation set: final parameters
}

TEST(Train, TestLabelsAreNeverRead) {
  NodeData d = karate_data(2, 2);
  const auto p = init_params(ModelShape{0, 34, 0, 4, 2, 2}, Kernel::ScaledDot, Normalizer::Softmax, 2);
  TrainConfig cfg;
  cfg.lr = 0.5;
  cfg.epochs = 10;
  cfg.solver = euler(0.5, 1.0);
  const auto a = train(fixtures::karate(), d, p, cfg);
  for (NodeId i : d.split.test) d.labels[i] = 1 - d.labels[i];
  const auto b = train(fixtures::karate(), d, p, cfg);
  EXPECT_EQ(a.params.flatten(), b.params.flatten());
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t e = 0; e < a.history.size(); ++e) {
    EXPECT_EQ(a.history[e].train_loss, b.history[e].train_loss);
    EXPECT_EQ(a.history[e].val_acc, b.history[e].val_acc);
  }
}

TEST(Train, DeterministicAndFdModeAgrees) {
  const NodeData d = two_clique_data(3);
  const auto p = init_params(ModelShape{0, 2, 0, 2, 2, 2}, Kernel::ScaledDot, Normalizer::Softmax, 3);
  TrainConfig cfg;
  cfg.lr = 0.2;
  cfg.epochs = 5;
  cfg.solver = euler(0.5, 1.0);
  const auto a = train(fixtures::two_cliques(), d, p, cfg);
  const auto b = train(fixtures::two_cliques(), d, p, cfg);
  EXPECT_EQ(a.params.flatten(), b.params.flatten());
  cfg.grad = GradientSpec{GradMode::FiniteDifference, 1e-5};
  const auto c = train(fixtures::two_cliques(), d, p, cfg);
  EXPECT_LT(rel_inf(c.params.flatten(), a.params.flatten()), 1e-6);
}

TEST(Train, RejectsBadConfig) {
  const NodeData d = two_clique_data(0);
  const auto p = init_params(ModelShape{0, 2, 0, 2, 2, 2}, Kernel::ScaledDot, Normalizer::Softmax, 0);
  TrainConfig cfg;
  cfg.lr = -1.0;
  EXPECT_THROW(train(fixtures::two_cliques(), d, p, cfg), InputError);
  cfg.lr = 0.1;
  cfg.solver.method = Method::Dopri5;
  EXPECT_THROW(train(fixtures::two_cliques(), d, p, cfg), InputError);
  cfg.solver.method = Method::Euler;
  NodeData empty = d;
  empty.split.train.clear();
  EXPECT_THROW(train(fixtures::two_cliques(), empty, p, cfg), InputError);
}

TEST(Accuracy, OneHotAndTies) {
  const std::vector<int> labels{0, 1, 1, 0};
  const std::vector<NodeId> all{0, 1, 2, 3};
  Matrix onehot(4, 2);
  for (std::size_t i = 0; i < 4; ++i) onehot(i, static_cast<std::size_t>(labels[i])) = 1.0;
  EXPECT_EQ(accuracy(onehot, labels, all), 1.0);
  EXPECT_EQ(accuracy(Matrix(4, 2), labels, all), 0.5);  // ties go to class 0
  EXPECT_EQ(accuracy(onehot, labels, {}), 0.0);
}

TEST(Accuracy, RandomParametersAreNearChance) {
  double mean = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const NodeData d = karate_data(s);
    std::mt19937_64 rng(s);
    const auto p = perturbed(init_params(ModelShape{0, 34, 0, 4, 2, 2}, Kernel::ScaledDot, Normalizer::Softmax, s), rng);
    mean += evaluate(fixtures::karate(), d, p, euler(0.5, 1.0)).test / 20.0;
  }
  EXPECT_NEAR(mean, 0.5, 0.15);
}

TEST(Split, SizesDisjointAndLabeledOnly) {
  std::vector<int> labels = fixtures::karate_labels();
  labels[3] = -1;
  const Split s = make_split(labels, 2, 4, 2, 5);
  EXPECT_EQ(s.train.size(), 8u);
  EXPECT_EQ(s.val.size(), 4u);
  EXPECT_EQ(s.test.size(), 33u - 12u);
  std::set<NodeId> seen;
  for (const auto* part : {&s.train, &s.val, &s.test})
    for (NodeId i : *part) {
      EXPECT_TRUE(seen.insert(i).second);
      EXPECT_NE(i, 3u);
    }
  for (int c = 0; c < 2; ++c) {
    int n = 0;
    for (NodeId i : s.train) n += labels[i] == c;
    EXPECT_EQ(n, 4);
  }
  EXPECT_EQ(make_split(labels, 2, 4, 2, 5).train, s.train);
  EXPECT_NE(make_split(labels, 2, 4, 2, 6).train, s.train);
}

TEST(Params, FlattenRoundTrip) {
  std::mt19937_64 rng(6);
  const auto p = perturbed(init_params(ModelShape{2, 3, 2, 3, 2, 3}, Kernel::ExpKernel, Normalizer::Squareplus, 5), rng);
  const auto theta = p.flatten();
  EXPECT_EQ(theta.size(), p.num_parameters());
  const auto q = ModelParams<double>::from_flat(p, std::span<const double>(theta));
  EXPECT_EQ(q.flatten(), theta);
  EXPECT_EQ(q.diffusivity.kernel, Kernel::ExpKernel);
  const std::vector<double> short_theta(3, 0.0);
  EXPECT_THROW(ModelParams<double>::from_flat(p, std::span<const double>(short_theta)), InputError);
  EXPECT_THROW(init_params(ModelShape{0, 3, 2, 3, 2, 2}, Kernel::ScaledDot, Normalizer::Softmax, 0), InputError);
}
