#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "beltrami/autodiff.hpp"
#include "beltrami/dense.hpp"
#include "beltrami/graph.hpp"
#include "beltrami/state.hpp"

namespace beltrami {

enum class Kernel { ScaledDot, CosineSim, Pearson, ExpKernel };
enum class Normalizer { Softmax, Squareplus };

inline Kernel kernel_from_name(std::string_view s) {
  if (s == "scaled_dot") return Kernel::ScaledDot;
  if (s == "cosine_sim") return Kernel::CosineSim;
  if (s == "pearson") return Kernel::Pearson;
  if (s == "exp_kernel") return Kernel::ExpKernel;
  throw InputError("unknown kernel '" + std::string(s) + "'");
}

inline std::string kernel_name(Kernel k) {
  switch (k) {
    case Kernel::ScaledDot: return "scaled_dot";
    case Kernel::CosineSim: return "cosine_sim";
    case Kernel::Pearson: return "pearson";
    case Kernel::ExpKernel: return "exp_kernel";
  }
  return "?";
}

inline Normalizer normalizer_from_name(std::string_view s) {
  if (s == "softmax") return Normalizer::Softmax;
  if (s == "squareplus") return Normalizer::Squareplus;
  throw InputError("unknown normalizer '" + std::string(s) + "'");
}

inline std::string normalizer_name(Normalizer n) { return n == Normalizer::Softmax ? "softmax" : "squareplus"; }

// Attention parameters. W_K and W_Q are key_dim x (d' + d); for the
// exponential kernel their first d' columns act on u and the rest on alpha*x.
template <class T>
struct DiffusivityParams {
  Kernel kernel = Kernel::ScaledDot;
  Normalizer normalizer = Normalizer::Softmax;
  std::size_t pos_dim = 0;
  Dense<T> w_key;
  Dense<T> w_query;
  double sigma_u = 1.0;
  double sigma_x = 1.0;
  double ell_u = 1.0;
  double ell_x = 1.0;

  std::size_t key_dim() const { return w_key.rows(); }
  std::size_t joint_dim() const { return w_key.cols(); }

  // Every entry 1 / sqrt(key_dim * joint_dim).
  static DiffusivityParams constant_init(Kernel kernel, Normalizer normalizer, std::size_t key_dim,
                                         std::size_t pos_dim, std::size_t joint_dim) {
    DiffusivityParams p;
    p.kernel = kernel;
    p.normalizer = normalizer;
    p.pos_dim = pos_dim;
    const double c = 1.0 / std::sqrt(static_cast<double>(key_dim * joint_dim));
    p.w_key = Dense<T>(key_dim, joint_dim, T(c));
    p.w_query = Dense<T>(key_dim, joint_dim, T(c));
    return p;
  }

  void validate() const {
    if (key_dim() < 1) throw InputError("key dimension must be >= 1");
    if (w_query.rows() != w_key.rows() || w_query.cols() != w_key.cols())
      throw InputError("W_K and W_Q shapes differ");
    if (pos_dim > joint_dim()) throw InputError("positional block wider than joint dimension");
    for (std::size_t k = 0; k < w_key.size(); ++k)
      if (!std::isfinite(value_of(w_key.data()[k])) || !std::isfinite(value_of(w_query.data()[k])))
        throw InputError("non-finite attention weights");
    if (!(ell_u > 0.0) || !(ell_x > 0.0)) throw InputError("exp kernel length-scales must be positive");
  }
};

// Per-directed-edge weights aligned with stencil.col_indices().
template <class T>
struct EdgeWeights {
  Graph stencil;
  std::vector<T> values;
};

namespace detail {

template <class T>
struct Projections {
  Dense<T> key;    // n x d_k
  Dense<T> query;  // n x d_k
  // Block projections, exponential kernel only.
  Dense<T> key_pos, key_feat, query_pos, query_feat;
};

template <class T>
void multiply_block(const Dense<T>& w, const Dense<T>& z, std::size_t c0, std::size_t c1, Dense<T>& out) {
  const std::size_t n = z.rows(), dk = w.rows();
  out = Dense<T>(n, dk);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < dk; ++r) {
      T acc(0);
      for (std::size_t c = c0; c < c1; ++c) acc += w(r, c) * z(i, c);
      out(i, r) = acc;
    }
}

template <class T>
Projections<T> project_all(const DiffusivityParams<T>& p, const Dense<T>& z) {
  if (z.cols() != p.joint_dim())
    throw InputError("joint dimension " + std::to_string(z.cols()) + " does not match attention width " +
                     std::to_string(p.joint_dim()));
  Projections<T> out;
  if (p.kernel == Kernel::ExpKernel) {
    multiply_block(p.w_key, z, 0, p.pos_dim, out.key_pos);
    multiply_block(p.w_key, z, p.pos_dim, z.cols(), out.key_feat);
    multiply_block(p.w_query, z, 0, p.pos_dim, out.query_pos);
    multiply_block(p.w_query, z, p.pos_dim, z.cols(), out.query_feat);
  } else {
    multiply_block(p.w_key, z, 0, z.cols(), out.key);
    multiply_block(p.w_query, z, 0, z.cols(), out.query);
  }
  return out;
}

template <class T>
T cosine(std::span<const T> a, std::span<const T> b) {
  T dot(0), na(0), nb(0);
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  // Degenerate projections (e.g. constant initialisation) give a neutral logit.
  if (value_of(na) == 0.0 || value_of(nb) == 0.0) return T(0);
  return dot / sqrt(na * nb);
}

template <class T>
std::vector<T> centered(std::span<const T> a) {
  T mean(0);
  for (const T& v : a) mean += v;
  mean = mean / T(static_cast<double>(a.size()));
  std::vector<T> out;
  out.reserve(a.size());
  for (const T& v : a) out.push_back(v - mean);
  return out;
}

template <class T>
T squared_gap(std::span<const T> a, std::span<const T> b) {
  T s(0);
  for (std::size_t k = 0; k < a.size(); ++k) {
    T d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

template <class T>
T logit_from_projections(const DiffusivityParams<T>& p, const Projections<T>& pr, std::size_t i, std::size_t j) {
  switch (p.kernel) {
    case Kernel::ScaledDot: {
      T acc(0);
      for (std::size_t r = 0; r < p.key_dim(); ++r) acc += pr.key(i, r) * pr.query(j, r);
      return acc / T(static_cast<double>(p.key_dim()));
    }
    case Kernel::CosineSim:
      return cosine<T>(pr.key.row(i), pr.query.row(j));
    case Kernel::Pearson: {
      auto a = centered<T>(pr.key.row(i));
      auto b = centered<T>(pr.query.row(j));
      return cosine<T>(std::span<const T>(a), std::span<const T>(b));
    }
    case Kernel::ExpKernel: {
      const double amp = (p.sigma_u * p.sigma_x) * (p.sigma_u * p.sigma_x);
      T gu = squared_gap<T>(pr.key_pos.row(i), pr.query_pos.row(j));
      T gx = squared_gap<T>(pr.key_feat.row(i), pr.query_feat.row(j));
      return T(amp) * exp(-gu / T(2.0 * p.ell_u * p.ell_u)) * exp(-gx / T(2.0 * p.ell_x * p.ell_x));
    }
  }
  return T(0);
}

}  // namespace detail

// Unnormalized attention score between two joint coordinate vectors.
template <class T>
T raw_logit(const DiffusivityParams<T>& p, std::span<const T> z_i, std::span<const T> z_j) {
  if (z_i.size() != z_j.size()) throw InputError("joint vectors differ in length");
  Dense<T> z(2, z_i.size());
  for (std::size_t c = 0; c < z_i.size(); ++c) {
    z(0, c) = z_i[c];
    z(1, c) = z_j[c];
  }
  return detail::logit_from_projections(p, detail::project_all(p, z), 0, 1);
}

inline double squareplus(double x) { return 0.5 * (x + std::sqrt(x * x + 4.0)); }

// Normalizes logits row by row, rows delimited by `offsets` (CSR layout).
// Empty rows stay empty.
template <class T>
std::vector<T> normalize_weights(std::span<const std::size_t> offsets, std::span<const T> logits, Normalizer norm) {
  std::vector<T> w(logits.size());
  for (std::size_t i = 0; i + 1 < offsets.size(); ++i) {
    const std::size_t b = offsets[i], e = offsets[i + 1];
    if (b == e) continue;
    T total(0);
    if (norm == Normalizer::Softmax) {
      T shift = logits[b];
      for (std::size_t k = b + 1; k < e; ++k) shift = max(shift, logits[k]);
      for (std::size_t k = b; k < e; ++k) total += (w[k] = exp(logits[k] - shift));
    } else {
      for (std::size_t k = b; k < e; ++k) {
        const T& l = logits[k];
        total += (w[k] = T(0.5) * (l + sqrt(l * l + T(4.0))));
      }
    }
    for (std::size_t k = b; k < e; ++k) w[k] = w[k] / total;
  }
  return w;
}

// Logits for every directed slot of g.
template <class T>
std::vector<T> edge_logits(const Graph& g, const Dense<T>& z, const DiffusivityParams<T>& p) {
  if (z.rows() != g.num_nodes()) throw InputError("state rows do not match graph size");
  const auto pr = detail::project_all(p, z);
  const auto offsets = g.row_offsets();
  const auto cols = g.col_indices();
  std::vector<T> logits(g.num_edge_slots());
  for (std::size_t i = 0; i < g.num_nodes(); ++i)
    for (std::size_t k = offsets[i]; k < offsets[i + 1]; ++k) logits[k] = detail::logit_from_projections(p, pr, i, cols[k]);
  return logits;
}

template <class T>
EdgeWeights<T> compute_weights(const Graph& g, const JointState<T>& state, const DiffusivityParams<T>& p) {
  auto logits = edge_logits(g, state.joint(), p);
  return {g, normalize_weights<T>(g.row_offsets(), std::span<const T>(logits), p.normalizer)};
}

}  // namespace beltrami
