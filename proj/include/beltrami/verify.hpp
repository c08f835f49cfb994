#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "beltrami/diffusivity.hpp"
#include "beltrami/fixtures.hpp"
#include "beltrami/flow.hpp"
#include "beltrami/graph.hpp"
#include "beltrami/metric.hpp"
#include "beltrami/oracles.hpp"
#include "beltrami/polyakov.hpp"
#include "beltrami/positional.hpp"
#include "beltrami/solvers.hpp"

// Property suites run by `verify`. Each suite returns a JSON report of named
// checks; the output depends only on the seed (no timings).
namespace beltrami::verify {

using json = nlohmann::json;

class Report {
 public:
  explicit Report(std::string suite) : suite_(std::move(suite)) {}

  void check(const std::string& name, bool ok, json detail = json::object()) {
    checks_.push_back({{"name", name}, {"passed", ok}, {"detail", std::move(detail)}});
    passed_ = passed_ && ok;
  }
  void attach(const std::string& key, json value) { extra_[key] = std::move(value); }

  bool passed() const { return passed_; }
  json to_json() const {
    json j = {{"suite", suite_}, {"passed", passed_}, {"checks", checks_}};
    for (auto& [k, v] : extra_.items()) j[k] = v;
    return j;
  }

 private:
  std::string suite_;
  bool passed_ = true;
  json checks_ = json::array();
  json extra_ = json::object();
};

// Named directed-slot file: one `a b` per line, each slot taken as given.
struct SlotAudit {
  std::size_t num_nodes = 0;
  std::vector<EdgePair> slots;
};

inline SlotAudit read_slots(std::istream& in) {
  SlotAudit a;
  for (auto [x, y] : read_raw_pairs(in)) {
    if (x > 0xffffffffULL || y > 0xffffffffULL) throw InputError("slot file: node id too large");
    a.slots.emplace_back(static_cast<NodeId>(x), static_cast<NodeId>(y));
    a.num_nodes = std::max<std::size_t>(a.num_nodes, std::max(x, y) + 1);
  }
  return a;
}

namespace detail {

inline std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline double rel_inf(const Matrix& got, const Matrix& want) {
  return max_abs_diff(got, want) / std::max(max_abs(want), 1e-12);
}

inline DiffusivityParams<double> random_params(Kernel kernel, Normalizer norm, std::size_t key_dim,
                                               std::size_t pos_dim, std::size_t joint_dim, std::mt19937_64& rng) {
  DiffusivityParams<double> p;
  p.kernel = kernel;
  p.normalizer = norm;
  p.pos_dim = pos_dim;
  p.w_key = fixtures::random_matrix(key_dim, joint_dim, rng);
  p.w_query = fixtures::random_matrix(key_dim, joint_dim, rng);
  return p;
}

inline Matrix to_matrix(const Eigen::MatrixXd& m) { return from_eigen(m); }

}  // namespace detail

inline json graph_suite(std::uint64_t seed, const std::optional<SlotAudit>& audit = std::nullopt) {
  Report rep("graph");
  const Graph k = fixtures::karate();
  rep.check("karate_shape", k.num_nodes() == 34 && k.num_undirected_edges() == 78 && is_connected(k),
            {{"nodes", k.num_nodes()}, {"edges", k.num_undirected_edges()}});

  std::mt19937_64 rng(seed);
  std::size_t lcc_mismatch = 0, slot_mismatch = 0, io_mismatch = 0;
  for (int r = 0; r < 20; ++r) {
    const std::size_t n = detail::pick(rng, 2, 30);
    const Graph g = fixtures::random_graph(n, 1.5 / static_cast<double>(n), rng, false);
    // largest component against union-find
    const auto comps = oracle::components(g);
    const std::vector<NodeId>* best = &comps.front();
    for (const auto& c : comps)
      if (c.size() > best->size()) best = &c;
    const auto lcc = largest_connected_component(g);
    if (lcc.new_to_old != *best || !is_connected(lcc.graph)) ++lcc_mismatch;
    // directed-slot round trip keeps every invariant
    std::vector<EdgePair> slots;
    for (NodeId i = 0; i < n; ++i)
      for (NodeId j : g.neighbors(i)) slots.emplace_back(j, i);
    if (!(Graph::from_directed_slots(n, slots) == g)) ++slot_mismatch;
    // edge-list text round trip (isolated trailing nodes are not representable)
    if (g.num_edge_slots() > 0) {
      std::stringstream ss;
      write_edge_list(ss, lcc.graph);
      if (!(read_edge_list(ss).graph == lcc.graph)) ++io_mismatch;
    }
  }
  rep.check("largest_component_matches_union_find", lcc_mismatch == 0, {{"instances", 20}, {"mismatches", lcc_mismatch}});
  rep.check("directed_slot_round_trip", slot_mismatch == 0, {{"instances", 20}, {"mismatches", slot_mismatch}});
  rep.check("edge_list_round_trip", io_mismatch == 0, {{"mismatches", io_mismatch}});

  if (audit) {
    try {
      const Graph g = Graph::from_directed_slots(audit->num_nodes, audit->slots);
      rep.check("directed_slots_audit", true, {{"nodes", g.num_nodes()}, {"slots", g.num_edge_slots()}});
    } catch (const InputError& e) {
      rep.check("directed_slots_audit", false, {{"invariant", e.what()}});
    }
  }
  return rep.to_json();
}

inline json polyakov_suite(std::uint64_t seed) {
  Report rep("polyakov");
  std::mt19937_64 rng(seed);
  constexpr double fd_tol = 1e-5, route_tol = 1e-10, tau = 0.01;
  constexpr std::size_t steps = 200;
  double worst_fd[2] = {0.0, 0.0}, worst_route[2] = {0.0, 0.0}, worst_flow_gap = 0.0;
  std::size_t non_monotone[2] = {0, 0};
  bool classical_two = true;
  for (int r = 0; r < 20; ++r) {
    const std::size_t n = detail::pick(rng, 4, 16), dim = detail::pick(rng, 1, 4);
    const Graph g = fixtures::random_graph(n, 0.3, rng);
    const Matrix z = fixtures::random_matrix(n, dim, rng, -0.5, 0.5);
    const PsiFamily fams[2] = {PsiFamily::classical(), PsiFamily::random_sigmoid_family(g, rng())};
    for (int f = 0; f < 2; ++f) {
      const Matrix grad = grad_action(g, z, fams[f]);
      worst_fd[f] = std::max(worst_fd[f], detail::rel_inf(grad, grad_action_fd(g, z, fams[f])));
      worst_route[f] = std::max(worst_route[f], detail::rel_inf(grad, grad_action_chain_rule(g, z, fams[f])));
      const auto flow = verify_gradient_flow(g, z, fams[f], steps, tau);
      if (!flow.monotone) ++non_monotone[f];
      worst_flow_gap = std::max(worst_flow_gap, flow.max_route_gap);
    }
    for (auto [i, j] : g.undirected_edges())
      if (closed_form_diffusivity(g, z, fams[0], i, j) != 2.0) classical_two = false;
  }
  const char* names[2] = {"classical", "sigmoid"};
  for (int f = 0; f < 2; ++f) {
    const std::string nm = names[f];
    rep.check(nm + "_gradient_vs_finite_differences", worst_fd[f] <= fd_tol,
              {{"instances", 20}, {"max_relative_error", worst_fd[f]}, {"tolerance", fd_tol}});
    rep.check(nm + "_closed_form_vs_chain_rule", worst_route[f] <= route_tol,
              {{"max_relative_error", worst_route[f]}, {"tolerance", route_tol}});
    rep.check(nm + "_action_non_increasing", non_monotone[f] == 0,
              {{"tau", tau}, {"steps", steps}, {"violating_instances", non_monotone[f]}});
  }
  rep.check("gradient_flow_routes_agree", worst_flow_gap <= 1e-10, {{"max_gap", worst_flow_gap}, {"tolerance", 1e-10}});
  rep.check("classical_diffusivity_is_two", classical_two);

  // Action curves on the small fixtures.
  json curves = json::object();
  bool curves_monotone = true;
  const std::pair<const char*, Graph> shipped[2] = {{"path3", fixtures::path(3)}, {"cycle6", fixtures::cycle(6)}};
  for (const auto& [name, g] : shipped) {
    const Matrix z = fixtures::random_matrix(g.num_nodes(), 2, rng, -0.5, 0.5);
    json entry = json::object();
    const PsiFamily fams[2] = {PsiFamily::classical(), PsiFamily::random_sigmoid_family(g, rng())};
    for (int f = 0; f < 2; ++f) {
      const auto flow = verify_gradient_flow(g, z, fams[f], steps, tau);
      curves_monotone = curves_monotone && flow.passed();
      json s = json::array();
      for (std::size_t k = 0; k < flow.actions.size(); k += 10) s.push_back(flow.actions[k]);
      entry[names[f]] = {{"monotone", flow.monotone}, {"every", 10}, {"action", s}};
    }
    curves[name] = entry;
  }
  rep.check("fixture_curves_monotone", curves_monotone);
  rep.attach("curves", curves);
  return rep.to_json();
}

inline json solvers_suite(std::uint64_t seed) {
  Report rep("solvers");
  std::mt19937_64 rng(seed);
  constexpr double oracle_tol = 1e-6;
  double worst_dopri = 0.0, worst_err_est = 0.0;
  double euler_lo = 1e9, euler_hi = 0.0, rk4_lo = 1e9, rk4_hi = 0.0;
  for (int r = 0; r < 10; ++r) {
    const std::size_t n = detail::pick(rng, 6, 10), d = 3;
    const Graph g = fixtures::random_graph(n, 0.4, rng);
    const Matrix x0 = fixtures::random_matrix(n, d, rng);
    const auto p = detail::random_params(Kernel::ScaledDot, Normalizer::Softmax, 2, 0, d, rng);
    const auto w = compute_weights(g, JointState<double>::features_only(x0), p);
    const Eigen::MatrixXd m =
        oracle::weight_matrix(g, w.values) - Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    const Matrix exact = detail::to_matrix(oracle::expm(m) * as_eigen(x0));
    const RhsFn f = [&](const JointState<double>& s) { return apply_diffusion(w, s); };
    const auto s0 = JointState<double>::features_only(x0);

    SolverConfig cfg;
    cfg.method = Method::Dopri5;
    cfg.rtol = cfg.atol = 1e-8;
    const auto traj = integrate(s0, cfg, f);
    worst_dopri = std::max(worst_dopri, max_abs_diff(traj.final_state().X, exact));
    worst_err_est = std::max(worst_err_est, traj.stats.max_accepted_error);

    for (Method meth : {Method::Euler, Method::RK4}) {
      double err[3];
      const double taus[3] = {0.1, 0.05, 0.025};
      for (int t = 0; t < 3; ++t) err[t] = max_abs_diff(integrate_fixed<double>(s0, meth, taus[t], 1.0, f).X, exact);
      for (int t = 0; t < 2; ++t) {
        const double ratio = err[t] / err[t + 1];
        double& lo = meth == Method::Euler ? euler_lo : rk4_lo;
        double& hi = meth == Method::Euler ? euler_hi : rk4_hi;
        lo = std::min(lo, ratio);
        hi = std::max(hi, ratio);
      }
    }
  }
  rep.check("dopri5_matches_matrix_exponential", worst_dopri <= oracle_tol,
            {{"instances", 10}, {"max_error", worst_dopri}, {"tolerance", oracle_tol}});
  rep.check("dopri5_accepted_errors_within_tolerance", worst_err_est <= 1.0, {{"max_scaled_error", worst_err_est}});
  rep.check("euler_order_one", euler_lo >= 1.7 && euler_hi <= 2.3,
            {{"min_ratio", euler_lo}, {"max_ratio", euler_hi}, {"window", {1.7, 2.3}}});
  rep.check("rk4_order_four", rk4_lo >= 12.0 && rk4_hi <= 20.0,
            {{"min_ratio", rk4_lo}, {"max_ratio", rk4_hi}, {"window", {12.0, 20.0}}});

  // Constant features are a fixed point of every solver.
  {
    const Graph g = fixtures::cycle(6);
    const auto s0 = JointState<double>::features_only(Matrix(6, 2, 0.25));
    const auto p = detail::random_params(Kernel::ScaledDot, Normalizer::Softmax, 2, 0, 2, rng);
    const RhsFn f = [&](const JointState<double>& s) { return rhs(g, s, p); };
    bool same = true;
    for (Method meth : {Method::Euler, Method::RK4, Method::Dopri5}) {
      SolverConfig cfg;
      cfg.method = meth;
      cfg.tau = 0.3;
      cfg.snapshot_every = 1;
      for (const auto& s : integrate(s0, cfg, f).states) same = same && s == s0;
    }
    rep.check("constant_state_is_fixed", same);
  }
  // Fixed grid: tau = 0.3 on [0, 1] lands on 0.3, 0.6, 0.9, 1.0.
  {
    const auto h = fixed_step_sizes(0.3, 1.0);
    std::vector<double> t;
    double acc = 0.0;
    for (double s : h) t.push_back(acc += s);
    const bool ok = t.size() == 4 && std::abs(t[0] - 0.3) < 1e-12 && std::abs(t[1] - 0.6) < 1e-12 &&
                    std::abs(t[2] - 0.9) < 1e-12 && t[3] == 1.0;
    rep.check("fixed_grid_final_short_step", ok, {{"times", t}});
  }
  return rep.to_json();
}

inline json attention_suite(std::uint64_t seed) {
  Report rep("attention");
  std::mt19937_64 rng(seed);
  const Kernel kernels[4] = {Kernel::ScaledDot, Kernel::CosineSim, Kernel::Pearson, Kernel::ExpKernel};
  const Normalizer norms[2] = {Normalizer::Softmax, Normalizer::Squareplus};
  for (Kernel kn : kernels)
    for (Normalizer nm : norms) {
      double worst = 0.0;
      bool non_negative = true;
      for (int r = 0; r < 10; ++r) {
        const std::size_t n = detail::pick(rng, 4, 12), dp = detail::pick(rng, 0, 2), d = detail::pick(rng, 1, 3);
        const Graph g = fixtures::random_graph(n, 0.3, rng);
        JointState<double> s;
        s.U = fixtures::random_matrix(n, dp, rng);
        s.X = fixtures::random_matrix(n, d, rng);
        s.alpha = 0.5 + std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        const auto p = detail::random_params(kn, nm, detail::pick(rng, 1, 3), dp, dp + d, rng);
        const auto w = compute_weights(g, s, p);
        const auto off = g.row_offsets();
        for (std::size_t i = 0; i < n; ++i) {
          double sum = 0.0;
          for (std::size_t q = off[i]; q < off[i + 1]; ++q) {
            sum += w.values[q];
            non_negative = non_negative && w.values[q] >= 0.0;
          }
          if (off[i + 1] > off[i]) worst = std::max(worst, std::abs(sum - 1.0));
        }
      }
      rep.check("row_stochastic_" + kernel_name(kn) + "_" + normalizer_name(nm), worst <= 1e-9 && non_negative,
                {{"max_row_sum_error", worst}, {"tolerance", 1e-9}, {"non_negative", non_negative}});
    }

  rep.check("squareplus_at_zero", squareplus(0.0) == 1.0, {{"value", squareplus(0.0)}});

  {
    double worst = 0.0;
    for (int r = 0; r < 20; ++r) {
      const std::size_t len = detail::pick(rng, 1, 12);
      std::vector<double> logits(len), shifted(len);
      const double c = std::uniform_real_distribution<double>(-50.0, 50.0)(rng);
      for (std::size_t q = 0; q < len; ++q) {
        logits[q] = std::uniform_real_distribution<double>(-5.0, 5.0)(rng);
        shifted[q] = logits[q] + c;
      }
      const std::vector<std::size_t> off{0, len};
      const auto a = normalize_weights<double>(off, logits, Normalizer::Softmax);
      const auto b = normalize_weights<double>(off, shifted, Normalizer::Softmax);
      for (std::size_t q = 0; q < len; ++q) worst = std::max(worst, std::abs(a[q] - b[q]));
    }
    rep.check("softmax_shift_invariance", worst <= 1e-12, {{"max_difference", worst}, {"tolerance", 1e-12}});
  }

  // Features only, fixed stencil: one Euler step is the residual attention update.
  {
    double worst = 0.0;
    for (int r = 0; r < 100; ++r) {
      const std::size_t n = detail::pick(rng, 3, 12), d = detail::pick(rng, 1, 4);
      const Graph g = fixtures::random_graph(n, 0.3, rng);
      const Matrix x = fixtures::random_matrix(n, d, rng);
      const double alpha = std::uniform_real_distribution<double>(0.0, 2.0)(rng);
      const double tau = std::uniform_real_distribution<double>(0.01, 1.0)(rng);
      const auto p = detail::random_params(kernels[r % 4], norms[(r / 4) % 2], detail::pick(rng, 1, 3), 0, d, rng);
      const auto s0 = JointState<double>::features_only(x, alpha);
      RewiringPolicy policy;
      policy.base = g;
      BeltramiSystem sys(policy, MetricSpace::euclidean(0), p, s0);
      const auto step = euler_step<double>(s0, tau, sys);
      worst = std::max(worst, max_abs_diff(step.X, gat_reduction_step(g, x, p, tau, alpha)));
    }
    rep.check("gat_reduction", worst <= 1e-14, {{"instances", 100}, {"max_difference", worst}, {"tolerance", 1e-14}});
  }
  return rep.to_json();
}

inline json rewiring_suite(std::uint64_t seed) {
  Report rep("rewiring");
  std::mt19937_64 rng(seed);
  for (MetricKind kind : {MetricKind::Euclidean, MetricKind::PoincareBall}) {
    std::size_t mismatches = 0;
    for (int r = 0; r < 50; ++r) {
      const std::size_t n = detail::pick(rng, 4, 64), dim = detail::pick(rng, 2, 4),
                        k = detail::pick(rng, 1, std::min<std::size_t>(6, n - 1));
      const MetricSpace m = kind == MetricKind::Euclidean ? MetricSpace::euclidean(dim) : MetricSpace::poincare_ball(dim);
      const Matrix u = kind == MetricKind::Euclidean ? fixtures::random_matrix(n, dim, rng)
                                                     : fixtures::random_ball_points(n, dim, rng);
      if (!oracle::same_adjacency(knn_graph(u, k, m), oracle::knn_adjacency(u, k, m))) ++mismatches;
    }
    rep.check(std::string("knn_matches_brute_force_") + (kind == MetricKind::Euclidean ? "euclidean" : "poincare"),
              mismatches == 0, {{"instances", 50}, {"mismatches", mismatches}});
  }
  {
    const Matrix u = fixtures::random_matrix(7, 2, rng);
    const Graph g = knn_graph(u, 6, MetricSpace::euclidean(2));
    rep.check("knn_all_others_is_complete", g.num_undirected_edges() == 21);
  }
  {
    // Adaptive rewiring on a frozen U reproduces the precomputed stencil.
    const std::size_t n = 12;
    JointState<double> s;
    s.U = fixtures::random_matrix(n, 2, rng);
    s.X = fixtures::random_matrix(n, 2, rng);
    RewiringPolicy pre, ada;
    pre.mode = RewiringMode::PrecomputedKnn;
    ada.mode = RewiringMode::AdaptiveKnn;
    pre.k = ada.k = 3;
    ada.refresh_every = 1;
    const auto p = DiffusivityParams<double>::constant_init(Kernel::ScaledDot, Normalizer::Softmax, 2, 2, 4);
    BeltramiSystem a(pre, MetricSpace::euclidean(2), p, s), b(ada, MetricSpace::euclidean(2), p, s);
    b.on_accepted_step(s, 1);
    rep.check("adaptive_equals_precomputed_on_static_positions", a.stencil() == b.stencil() && b.rewires() == 1);
  }
  return rep.to_json();
}

inline json positional_suite(std::uint64_t seed) {
  Report rep("positional");
  std::mt19937_64 rng(seed);
  double worst_modes = 0.0, worst_rows = 0.0, worst_spectral = 0.0;
  for (int r = 0; r < 20; ++r) {
    const std::size_t n = detail::pick(rng, 2, 32);
    const bool connected = r % 2 == 0;
    const Graph g = fixtures::random_graph(n, connected ? 0.2 : 0.05, rng, connected);
    PprConfig cfg;
    cfg.beta = std::uniform_real_distribution<double>(0.1, 0.9)(rng);
    const auto series = ppr_encode(g, cfg);
    cfg.mode = PprMode::LinearSolve;
    const auto solve = ppr_encode(g, cfg);
    worst_modes = std::max(worst_modes, max_abs_diff(series.matrix, solve.matrix));
    for (std::size_t i = 0; i < n; ++i) {
      double sum = 0.0;
      for (double v : solve.matrix.row(i)) sum += v;
      worst_rows = std::max(worst_rows, std::abs(sum - 1.0));
    }
    if (connected)
      worst_spectral = std::max(worst_spectral, max_abs_diff(solve.matrix, detail::to_matrix(oracle::ppr_spectral(g, cfg.beta))));
  }
  rep.check("ppr_series_matches_solve", worst_modes <= 1e-8, {{"max_difference", worst_modes}, {"tolerance", 1e-8}});
  rep.check("ppr_rows_stochastic", worst_rows <= 1e-10, {{"max_row_sum_error", worst_rows}, {"tolerance", 1e-10}});
  rep.check("ppr_matches_spectral_oracle", worst_spectral <= 1e-8, {{"max_difference", worst_spectral}, {"tolerance", 1e-8}});

  {
    PprConfig cfg;
    cfg.beta = 0.5;
    const auto two = ppr_encode(fixtures::path(2), cfg).matrix;
    const auto tri = ppr_encode(fixtures::cycle(3), cfg).matrix;
    double err = std::max({std::abs(two(0, 0) - 2.0 / 3), std::abs(two(0, 1) - 1.0 / 3), std::abs(two(1, 0) - 1.0 / 3),
                           std::abs(two(1, 1) - 2.0 / 3)});
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) err = std::max(err, std::abs(tri(i, j) - (i == j ? 0.6 : 0.2)));
    rep.check("ppr_closed_forms", err <= 1e-10, {{"max_error", err}, {"tolerance", 1e-10}});
  }
  {
    const MetricSpace m = MetricSpace::poincare_ball(2);
    HypEmbedConfig cfg;
    cfg.seed = seed;
    cfg.epochs = 50;
    const auto emb = poincare_embed(fixtures::karate(), m, cfg);
    double max_norm = 0.0;
    for (std::size_t i = 0; i < emb.positions.rows(); ++i)
      max_norm = std::max(max_norm, std::sqrt(beltrami::detail::squared_norm(emb.positions.row(i))));
    bool non_increasing = true;
    for (std::size_t e = 1; e < emb.loss_history.size(); ++e)
      non_increasing = non_increasing && emb.loss_history[e] <= emb.loss_history[e - 1];
    rep.check("poincare_inside_ball", max_norm < 1.0, {{"max_norm", max_norm}});
    rep.check("poincare_loss_non_increasing", non_increasing,
              {{"initial", emb.loss_history.front()}, {"final", emb.loss_history.back()}});
  }
  return rep.to_json();
}

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"graph", "polyakov", "solvers", "attention", "rewiring", "positional"};
  return names;
}

// Runs one suite by name, or every suite for "all".
inline json run(const std::string& suite, std::uint64_t seed, const std::optional<SlotAudit>& audit = std::nullopt) {
  json suites = json::array();
  auto one = [&](const std::string& s) {
    if (s == "graph") return graph_suite(seed, audit);
    if (s == "polyakov") return polyakov_suite(seed);
    if (s == "solvers") return solvers_suite(seed);
    if (s == "attention") return attention_suite(seed);
    if (s == "rewiring") return rewiring_suite(seed);
    if (s == "positional") return positional_suite(seed);
    throw InputError("unknown verify suite '" + s + "'");
  };
  if (suite == "all") {
    for (const auto& s : suite_names()) suites.push_back(one(s));
  } else {
    suites.push_back(one(suite));
  }
  if (audit && suite != "graph" && suite != "all") suites.push_back(graph_suite(seed, audit));
  bool ok = true;
  for (const auto& s : suites) ok = ok && s["passed"].get<bool>();
  return {{"seed", seed}, {"passed", ok}, {"suites", suites}};
}

}  // namespace beltrami::verify
