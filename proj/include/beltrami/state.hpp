#pragma once

#include <cmath>
#include <cstddef>

#include "beltrami/autodiff.hpp"
#include "beltrami/dense.hpp"
#include "beltrami/errors.hpp"

namespace beltrami {

// Joint embedding z_i = (u_i, alpha * x_i). U is n x d' (d' may be 0), X is
// n x d. The flow evolves U and X; alpha only enters through the diffusivity.
template <class T>
struct JointState {
  Dense<T> U;
  Dense<T> X;
  T alpha = T(1);

  std::size_t num_nodes() const { return X.rows() != 0 ? X.rows() : U.rows(); }
  std::size_t pos_dim() const { return U.cols(); }
  std::size_t feat_dim() const { return X.cols(); }
  std::size_t joint_dim() const { return U.cols() + X.cols(); }

  static JointState features_only(Dense<T> x, T alpha = T(1)) {
    JointState s;
    s.U = Dense<T>(x.rows(), 0);
    s.X = std::move(x);
    s.alpha = alpha;
    return s;
  }

  void validate() const {
    if (U.rows() != X.rows()) throw InputError("positional and feature row counts differ");
    if (value_of(alpha) < 0.0) throw InputError("alpha must be non-negative");
  }

  // n x (d' + d) matrix of joint coordinates.
  Dense<T> joint() const {
    const std::size_t n = num_nodes(), dp = pos_dim(), d = feat_dim();
    Dense<T> z(n, dp + d);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < dp; ++c) z(i, c) = U(i, c);
      for (std::size_t c = 0; c < d; ++c) z(i, dp + c) = alpha * X(i, c);
    }
    return z;
  }

  bool operator==(const JointState&) const = default;
};

// Time derivative of a JointState (alpha is constant along the flow).
template <class T>
struct JointTangent {
  Dense<T> dU;
  Dense<T> dX;
};

// s + h * t
template <class T, class H>
JointState<T> advance(const JointState<T>& s, const H& h, const JointTangent<T>& t) {
  JointState<T> out = s;
  for (std::size_t k = 0; k < out.U.size(); ++k) out.U.data()[k] = s.U.data()[k] + h * t.dU.data()[k];
  for (std::size_t k = 0; k < out.X.size(); ++k) out.X.data()[k] = s.X.data()[k] + h * t.dX.data()[k];
  return out;
}

template <class T>
JointTangent<T> zero_tangent_like(const JointState<T>& s) {
  return {Dense<T>(s.U.rows(), s.U.cols()), Dense<T>(s.X.rows(), s.X.cols())};
}

inline bool all_finite(const JointState<double>& s) { return all_finite(s.U) && all_finite(s.X); }

inline double max_abs_diff(const JointState<double>& a, const JointState<double>& b) {
  return std::max(max_abs_diff(a.U, b.U), max_abs_diff(a.X, b.X));
}

}  // namespace beltrami
