#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "beltrami/errors.hpp"

// Minimal tape-based reverse-mode differentiation over scalars. Every
// operation on a non-constant Var appends one node holding up to two parent
// indices and the local partials; the backward sweep runs the tape in reverse.
namespace beltrami::ad {

class Tape {
 public:
  static constexpr std::int32_t kConstant = -1;

  struct Node {
    std::int32_t lhs;
    std::int32_t rhs;
    double d_lhs;
    double d_rhs;
  };

  std::int32_t leaf() { return push(kConstant, 0.0, kConstant, 0.0); }

  std::int32_t push(std::int32_t lhs, double d_lhs, std::int32_t rhs, double d_rhs) {
    if (nodes_.size() >= static_cast<std::size_t>(std::numeric_limits<std::int32_t>::max()))
      throw NumericalError("autodiff tape overflow");
    nodes_.push_back({lhs, rhs, d_lhs, d_rhs});
    return static_cast<std::int32_t>(nodes_.size() - 1);
  }

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // Adjoint of every node with respect to `output`.
  std::vector<double> adjoints(std::int32_t output) const {
    std::vector<double> adj(nodes_.size(), 0.0);
    if (output == kConstant) return adj;
    adj[output] = 1.0;
    for (std::int32_t i = output; i >= 0; --i) {
      const double a = adj[i];
      if (a == 0.0) continue;
      const Node& n = nodes_[i];
      if (n.lhs != kConstant) adj[n.lhs] += a * n.d_lhs;
      if (n.rhs != kConstant) adj[n.rhs] += a * n.d_rhs;
    }
    return adj;
  }

 private:
  std::vector<Node> nodes_;
};

inline Tape& active_tape() {
  thread_local Tape tape;
  return tape;
}

// Clears the thread's tape on entry and exit.
class TapeScope {
 public:
  TapeScope() { active_tape().clear(); }
  ~TapeScope() { active_tape().clear(); }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;
};

class Var {
 public:
  Var() = default;
  Var(double v) : value_(v) {}  // NOLINT: implicit constants are the point

  static Var independent(double v) { return Var(v, active_tape().leaf()); }

  double value() const { return value_; }
  std::int32_t id() const { return id_; }
  bool is_constant() const { return id_ == Tape::kConstant; }

  static Var unary(double v, const Var& a, double da) {
    if (a.is_constant()) return Var(v);
    return Var(v, active_tape().push(a.id_, da, Tape::kConstant, 0.0));
  }

  static Var binary(double v, const Var& a, double da, const Var& b, double db) {
    if (a.is_constant() && b.is_constant()) return Var(v);
    return Var(v, active_tape().push(a.id_, da, b.id_, db));
  }

  Var& operator+=(const Var& o) { return *this = *this + o; }
  Var& operator-=(const Var& o) { return *this = *this - o; }
  Var& operator*=(const Var& o) { return *this = *this * o; }
  Var& operator/=(const Var& o) { return *this = *this / o; }

  friend Var operator+(const Var& a, const Var& b) {
    if (b.is_constant() && b.value_ == 0.0) return a;
    if (a.is_constant() && a.value_ == 0.0) return b;
    return binary(a.value_ + b.value_, a, 1.0, b, 1.0);
  }
  friend Var operator-(const Var& a, const Var& b) {
    if (b.is_constant() && b.value_ == 0.0) return a;
    return binary(a.value_ - b.value_, a, 1.0, b, -1.0);
  }
  friend Var operator*(const Var& a, const Var& b) {
    return binary(a.value_ * b.value_, a, b.value_, b, a.value_);
  }
  friend Var operator/(const Var& a, const Var& b) {
    const double inv = 1.0 / b.value_;
    return binary(a.value_ * inv, a, inv, b, -a.value_ * inv * inv);
  }
  friend Var operator-(const Var& a) { return unary(-a.value_, a, -1.0); }

  friend bool operator<(const Var& a, const Var& b) { return a.value_ < b.value_; }
  friend bool operator>(const Var& a, const Var& b) { return a.value_ > b.value_; }
  friend bool operator<=(const Var& a, const Var& b) { return a.value_ <= b.value_; }
  friend bool operator>=(const Var& a, const Var& b) { return a.value_ >= b.value_; }

 private:
  Var(double v, std::int32_t id) : value_(v), id_(id) {}

  double value_ = 0.0;
  std::int32_t id_ = Tape::kConstant;
};

inline double value_of(const Var& x) { return x.value(); }

inline Var exp(const Var& a) {
  const double e = std::exp(a.value());
  return Var::unary(e, a, e);
}

inline Var log(const Var& a) { return Var::unary(std::log(a.value()), a, 1.0 / a.value()); }

inline Var sqrt(const Var& a) {
  const double s = std::sqrt(a.value());
  return Var::unary(s, a, s > 0.0 ? 0.5 / s : 0.0);
}

inline Var max(const Var& a, const Var& b) { return a.value() >= b.value() ? a : b; }

// Gradient of `output` with respect to the given independent variables.
inline std::vector<double> gradient(const Var& output, const std::vector<Var>& inputs) {
  const auto adj = active_tape().adjoints(output.id());
  std::vector<double> g(inputs.size(), 0.0);
  for (std::size_t k = 0; k < inputs.size(); ++k)
    if (!inputs[k].is_constant()) g[k] = adj[inputs[k].id()];
  return g;
}

}  // namespace beltrami::ad

namespace beltrami {
// Scalar math that dispatches to std:: for double and to ad:: for Var.
using std::exp;
using std::log;
using std::sqrt;
inline double max(double a, double b) { return a >= b ? a : b; }
using ad::exp;
using ad::log;
using ad::max;
using ad::sqrt;
using ad::value_of;
}  // namespace beltrami
