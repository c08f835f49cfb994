#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "beltrami/autodiff.hpp"
#include "beltrami/dense.hpp"
#include "beltrami/diffusivity.hpp"
#include "beltrami/flow.hpp"
#include "beltrami/graph.hpp"
#include "beltrami/solvers.hpp"
#include "beltrami/state.hpp"

namespace beltrami {

struct ModelShape {
  std::size_t pos_in = 0;    // raw positional width (0: no positional channels)
  std::size_t feat_in = 0;   // raw feature width
  std::size_t pos_dim = 0;   // d'
  std::size_t feat_dim = 0;  // d
  std::size_t key_dim = 1;   // d_k
  std::size_t classes = 2;
};

// Encoders phi, psi and decoder xi are affine maps. The decoder reads the
// unscaled (u, x) of the final state.
template <class T>
struct ModelParams {
  Dense<T> phi_w, phi_b;  // d' x pos_in, 1 x d'
  Dense<T> psi_w, psi_b;  // d x feat_in, 1 x d
  T alpha = T(1);
  DiffusivityParams<T> diffusivity;
  Dense<T> xi_w, xi_b;  // classes x (d' + d), 1 x classes

  std::size_t num_parameters() const {
    return phi_w.size() + phi_b.size() + psi_w.size() + psi_b.size() + 1 + diffusivity.w_key.size() +
           diffusivity.w_query.size() + xi_w.size() + xi_b.size();
  }

  // Order: phi_w, phi_b, psi_w, psi_b, alpha, W_K, W_Q, xi_w, xi_b.
  std::vector<T> flatten() const {
    std::vector<T> out;
    out.reserve(num_parameters());
    auto put = [&](const Dense<T>& m) { out.insert(out.end(), m.data().begin(), m.data().end()); };
    put(phi_w);
    put(phi_b);
    put(psi_w);
    put(psi_b);
    out.push_back(alpha);
    put(diffusivity.w_key);
    put(diffusivity.w_query);
    put(xi_w);
    put(xi_b);
    return out;
  }

  // Same layout as `layout`, entries taken from `flat`.
  template <class S>
  static ModelParams from_flat(const ModelParams<S>& layout, std::span<const T> flat) {
    if (flat.size() != layout.num_parameters()) throw InputError("flat parameter vector has the wrong length");
    std::size_t pos = 0;
    auto take = [&](const Dense<S>& shape) {
      Dense<T> m(shape.rows(), shape.cols());
      for (std::size_t k = 0; k < m.size(); ++k) m.data()[k] = flat[pos++];
      return m;
    };
    ModelParams p;
    p.phi_w = take(layout.phi_w);
    p.phi_b = take(layout.phi_b);
    p.psi_w = take(layout.psi_w);
    p.psi_b = take(layout.psi_b);
    p.alpha = flat[pos++];
    p.diffusivity.kernel = layout.diffusivity.kernel;
    p.diffusivity.normalizer = layout.diffusivity.normalizer;
    p.diffusivity.pos_dim = layout.diffusivity.pos_dim;
    p.diffusivity.sigma_u = layout.diffusivity.sigma_u;
    p.diffusivity.sigma_x = layout.diffusivity.sigma_x;
    p.diffusivity.ell_u = layout.diffusivity.ell_u;
    p.diffusivity.ell_x = layout.diffusivity.ell_x;
    p.diffusivity.w_key = take(layout.diffusivity.w_key);
    p.diffusivity.w_query = take(layout.diffusivity.w_query);
    p.xi_w = take(layout.xi_w);
    p.xi_b = take(layout.xi_b);
    return p;
  }
};

// Glorot-uniform encoders and decoder, zero biases, alpha = 1, constant
// attention weights.
inline ModelParams<double> init_params(const ModelShape& s, Kernel kernel, Normalizer normalizer, std::uint64_t seed) {
  if (s.pos_dim > 0 && s.pos_in == 0) throw InputError("positional channels requested without positional input");
  if (s.feat_dim == 0 && s.pos_dim == 0) throw InputError("model has no channels");
  std::mt19937_64 rng(seed);
  auto glorot = [&](std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    if (rows == 0 || cols == 0) return m;
    const double lim = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> u(-lim, lim);
    for (double& v : m.data()) v = u(rng);
    return m;
  };
  ModelParams<double> p;
  p.phi_w = glorot(s.pos_dim, s.pos_in);
  p.phi_b = Matrix(1, s.pos_dim);
  p.psi_w = glorot(s.feat_dim, s.feat_in);
  p.psi_b = Matrix(1, s.feat_dim);
  p.alpha = 1.0;
  p.diffusivity = DiffusivityParams<double>::constant_init(kernel, normalizer, s.key_dim, s.pos_dim, s.pos_dim + s.feat_dim);
  p.xi_w = glorot(s.classes, s.pos_dim + s.feat_dim);
  p.xi_b = Matrix(1, s.classes);
  return p;
}

namespace detail {

template <class T>
Dense<T> affine(const Matrix& in, const Dense<T>& w, const Dense<T>& b) {
  const std::size_t n = in.rows(), out_dim = w.rows();
  if (out_dim > 0 && in.cols() != w.cols())
    throw InputError("input width " + std::to_string(in.cols()) + " does not match encoder width " +
                     std::to_string(w.cols()));
  Dense<T> out(n, out_dim);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < out_dim; ++r) {
      T acc = b(0, r);
      for (std::size_t c = 0; c < w.cols(); ++c) acc += w(r, c) * T(in(i, c));
      out(i, r) = acc;
    }
  return out;
}

}  // namespace detail

// Z(0) = (phi(U_in), psi(X_in)) with the learnable alpha.
template <class T>
JointState<T> encode(const ModelParams<T>& p, const Matrix& pos_in, const Matrix& feat_in) {
  JointState<T> s;
  s.X = detail::affine(feat_in, p.psi_w, p.psi_b);
  s.U = p.phi_w.rows() > 0 ? detail::affine(pos_in, p.phi_w, p.phi_b) : Dense<T>(feat_in.rows(), 0);
  s.alpha = p.alpha;
  return s;
}

template <class T>
Dense<T> decode(const ModelParams<T>& p, const JointState<T>& s) {
  const std::size_t n = s.num_nodes(), dp = s.pos_dim(), d = s.feat_dim(), classes = p.xi_w.rows();
  if (p.xi_w.cols() != dp + d) throw InputError("decoder width does not match joint dimension");
  Dense<T> out(n, classes);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < classes; ++r) {
      T acc = p.xi_b(0, r);
      for (std::size_t c = 0; c < dp; ++c) acc += p.xi_w(r, c) * s.U(i, c);
      for (std::size_t c = 0; c < d; ++c) acc += p.xi_w(r, dp + c) * s.X(i, c);
      out(i, r) = acc;
    }
  return out;
}

// Class logits: encode, integrate the flow on `stencil` with a fixed-step
// solver to t_end, decode.
template <class T>
Dense<T> forward(const Graph& stencil, const Matrix& pos_in, const Matrix& feat_in, const ModelParams<T>& p,
                 const SolverConfig& cfg) {
  cfg.validate();
  JointState<T> z0 = encode(p, pos_in, feat_in);
  if (z0.num_nodes() != stencil.num_nodes()) throw InputError("input rows do not match graph size");
  auto f = [&](const JointState<T>& s) { return rhs(stencil, s, p.diffusivity); };
  return decode(p, integrate_fixed<T>(std::move(z0), cfg.method, cfg.tau, cfg.t_end, f));
}

// Mean cross-entropy over `subset`, with a max-shifted log-sum-exp.
template <class T>
T loss(const Dense<T>& logits, std::span<const int> labels, std::span<const NodeId> subset) {
  if (subset.empty()) throw InputError("loss over an empty subset");
  T total(0);
  for (NodeId i : subset) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= logits.cols()) throw InputError("node " + std::to_string(i) + " is unlabeled");
    auto row = logits.row(i);
    T shift = row[0];
    for (std::size_t c = 1; c < row.size(); ++c) shift = max(shift, row[c]);
    T s(0);
    for (const T& l : row) s += exp(l - shift);
    total += log(s) + shift - row[static_cast<std::size_t>(y)];
  }
  return total / T(static_cast<double>(subset.size()));
}

// Argmax with ties to the smallest class index.
inline std::size_t predict(std::span<const double> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

inline double accuracy(const Matrix& logits, std::span<const int> labels, std::span<const NodeId> subset) {
  if (subset.empty()) return 0.0;
  std::size_t hit = 0;
  for (NodeId i : subset)
    if (static_cast<int>(predict(logits.row(i))) == labels[i]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(subset.size());
}

enum class GradMode { UnrolledReverse, FiniteDifference };

struct GradientSpec {
  GradMode mode = GradMode::UnrolledReverse;
  double h = 1e-5;  // finite-difference step
};

struct ValueAndGradient {
  double value = 0.0;
  std::vector<double> gradient;
};

// `objective` must be callable with std::span<const ad::Var> (returning
// ad::Var) and with std::span<const double> (returning double).
template <class Objective>
ValueAndGradient value_and_gradient(Objective&& objective, std::span<const double> theta, const GradientSpec& spec) {
  ValueAndGradient out;
  if (spec.mode == GradMode::UnrolledReverse) {
    ad::TapeScope scope;
    std::vector<ad::Var> vars;
    vars.reserve(theta.size());
    for (double t : theta) vars.push_back(ad::Var::independent(t));
    const ad::Var y = objective(std::span<const ad::Var>(vars));
    out.value = y.value();
    out.gradient = ad::gradient(y, vars);
  } else {
    if (!(spec.h > 0.0)) throw InputError("finite-difference step must be positive");
    std::vector<double> probe(theta.begin(), theta.end());
    out.value = objective(std::span<const double>(probe));
    out.gradient.resize(theta.size());
    for (std::size_t k = 0; k < theta.size(); ++k) {
      probe[k] = theta[k] + spec.h;
      const double up = objective(std::span<const double>(probe));
      probe[k] = theta[k] - spec.h;
      const double down = objective(std::span<const double>(probe));
      probe[k] = theta[k];
      out.gradient[k] = (up - down) / (2.0 * spec.h);
    }
  }
  for (double g : out.gradient)
    if (!std::isfinite(g)) throw NumericalError("non-finite gradient");
  return out;
}

struct Split {
  std::vector<NodeId> train, val, test;
};

struct NodeData {
  Matrix positions;  // n x pos_in, may have zero columns
  Matrix features;   // n x feat_in
  std::vector<int> labels;  // -1 for unlabeled
  std::size_t num_classes = 2;
  Split split;
};

// Per class: `train_per_class` training nodes, then `val_per_class`
// validation nodes; all remaining labeled nodes are test nodes.
inline Split make_split(std::span<const int> labels, std::size_t num_classes, std::size_t train_per_class,
                        std::size_t val_per_class, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Split s;
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::vector<NodeId> members;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == static_cast<int>(c)) members.push_back(static_cast<NodeId>(i));
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t r = 0; r < members.size(); ++r) {
      if (r < train_per_class) s.train.push_back(members[r]);
      else if (r < train_per_class + val_per_class) s.val.push_back(members[r]);
      else s.test.push_back(members[r]);
    }
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

struct TrainConfig {
  double lr = 0.05;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;
  GradientSpec grad;
  SolverConfig solver;  // fixed-step (euler or rk4)
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
};

struct TrainResult {
  ModelParams<double> params;
  std::vector<EpochMetrics> history;
  std::size_t best_epoch = 0;
  double best_val_acc = 0.0;
};

// Training loss as a function of the flat parameter vector.
inline auto training_objective(const Graph& stencil, const NodeData& data, const ModelParams<double>& layout,
                               const SolverConfig& solver) {
  return [&stencil, &data, &layout, solver](auto flat) {
    using S = typename decltype(flat)::element_type;
    using T = std::remove_const_t<S>;
    const auto p = ModelParams<T>::from_flat(layout, flat);
    const auto logits = forward<T>(stencil, data.positions, data.features, p, solver);
    return loss<T>(logits, data.labels, data.split.train);
  };
}

// Full-batch gradient descent on the training loss. Only training and
// validation labels are read. Returns the parameters of the epoch with the
// best validation accuracy (earliest on ties), or the final parameters when
// there is no validation set.
inline TrainResult train(const Graph& stencil, const NodeData& data, const ModelParams<double>& init,
                         const TrainConfig& cfg) {
  if (!(cfg.lr >= 0.0)) throw InputError("learning rate must be non-negative");
  if (cfg.solver.method == Method::Dopri5) throw InputError("training needs a fixed-step solver (euler or rk4)");
  if (data.split.train.empty()) throw InputError("no training nodes");
  const auto objective = training_objective(stencil, data, init, cfg.solver);

  TrainResult out;
  std::vector<double> theta = init.flatten();
  const std::size_t alpha_index = init.phi_w.size() + init.phi_b.size() + init.psi_w.size() + init.psi_b.size();
  std::vector<double> best_theta = theta;
  bool have_best = false;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto vg = value_and_gradient(objective, theta, cfg.grad);
    const auto p = ModelParams<double>::from_flat(init, std::span<const double>(theta));
    const Matrix logits = forward<double>(stencil, data.positions, data.features, p, cfg.solver);
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = vg.value;
    m.train_acc = accuracy(logits, data.labels, data.split.train);
    m.val_acc = accuracy(logits, data.labels, data.split.val);
    out.history.push_back(m);
    if (!data.split.val.empty() && (!have_best || m.val_acc > out.best_val_acc)) {
      have_best = true;
      out.best_val_acc = m.val_acc;
      out.best_epoch = epoch;
      best_theta = theta;
    }
    for (std::size_t k = 0; k < theta.size(); ++k) theta[k] -= cfg.lr * vg.gradient[k];
    theta[alpha_index] = std::max(0.0, theta[alpha_index]);
  }
  if (!have_best) {
    best_theta = theta;
    out.best_epoch = cfg.epochs;
  }
  out.params = ModelParams<double>::from_flat(init, std::span<const double>(best_theta));
  return out;
}

struct Accuracies {
  double train = 0.0, val = 0.0, test = 0.0;
  double terminal_time = 0.0;  // integration time of the evaluated state
};

// Argmax accuracy on each split. With a Dopri5 solver and a patience value the
// terminal time is chosen on validation accuracy.
inline Accuracies evaluate(const Graph& stencil, const NodeData& data, const ModelParams<double>& p,
                           const SolverConfig& cfg) {
  cfg.validate();
  Matrix logits;
  Accuracies acc;
  if (cfg.patience) {
    if (data.split.val.empty()) throw InputError("patience-based inference needs validation nodes");
    const JointState<double> z0 = encode(p, data.positions, data.features);
    auto f = [&](const JointState<double>& s) { return rhs(stencil, s, p.diffusivity); };
    auto validator = [&](const JointState<double>& s) {
      return accuracy(decode(p, s), data.labels, data.split.val);
    };
    const auto r = infer_with_patience(z0, cfg, f, validator);
    logits = decode(p, r.state);
    acc.terminal_time = r.time;
  } else if (cfg.method == Method::Dopri5) {
    const JointState<double> z0 = encode(p, data.positions, data.features);
    auto traj = integrate(z0, cfg, [&](const JointState<double>& s) { return rhs(stencil, s, p.diffusivity); });
    logits = decode(p, traj.final_state());
    acc.terminal_time = cfg.t_end;
  } else {
    logits = forward<double>(stencil, data.positions, data.features, p, cfg);
    acc.terminal_time = cfg.t_end;
  }
  acc.train = accuracy(logits, data.labels, data.split.train);
  acc.val = accuracy(logits, data.labels, data.split.val);
  acc.test = accuracy(logits, data.labels, data.split.test);
  return acc;
}

}  // namespace beltrami
