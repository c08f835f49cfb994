#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "beltrami/state.hpp"

namespace beltrami {

enum class Method { Euler, RK4, Dopri5 };

inline Method method_from_name(std::string_view s) {
  if (s == "euler") return Method::Euler;
  if (s == "rk4") return Method::RK4;
  if (s == "dopri5") return Method::Dopri5;
  throw InputError("unknown solver method '" + std::string(s) + "'");
}

inline std::string method_name(Method m) {
  switch (m) {
    case Method::Euler: return "euler";
    case Method::RK4: return "rk4";
    case Method::Dopri5: return "dopri5";
  }
  return "?";
}

struct SolverConfig {
  Method method = Method::Euler;
  double tau = 0.1;  // fixed step; Dopri5 starts from min(0.1, t_end / 10)
  double t_end = 1.0;
  double rtol = 1e-6;
  double atol = 1e-8;
  std::size_t max_steps = 100000;
  std::optional<std::size_t> patience;
  // Record every n-th accepted step (0: only the endpoints).
  std::size_t snapshot_every = 0;

  // t_end = 0 is allowed and means "no diffusion".
  void validate() const {
    if (!(tau > 0.0)) throw InputError("tau must be positive");
    if (!(t_end >= 0.0) || !std::isfinite(t_end)) throw InputError("t_end must be non-negative and finite");
    if (!(rtol > 0.0) || !(atol > 0.0)) throw InputError("rtol and atol must be positive");
    if (max_steps < 1) throw InputError("max_steps must be >= 1");
    if (patience && *patience < 1) throw InputError("patience must be >= 1");
  }
};

struct SolverStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t rhs_evaluations = 0;
  double max_accepted_error = 0.0;  // Dopri5 scaled error estimate
};

struct Trajectory {
  std::vector<double> times;
  std::vector<JointState<double>> states;
  SolverStats stats;

  const JointState<double>& final_state() const { return states.back(); }
};

// Thrown when integration stops early; carries whatever was computed.
class SolverError : public NumericalError {
 public:
  SolverError(const std::string& what, Trajectory partial) : NumericalError(what), partial_(std::move(partial)) {}
  const Trajectory& partial() const { return partial_; }

 private:
  Trajectory partial_;
};

using RhsFn = std::function<JointTangent<double>(const JointState<double>&)>;
using StepHook = std::function<void(const JointState<double>&, std::size_t accepted)>;

// z + tau * f(z)
template <class T, class F>
JointState<T> euler_step(const JointState<T>& s, const T& tau, F&& f) {
  return advance(s, tau, f(s));
}

template <class T, class F>
JointState<T> rk4_step(const JointState<T>& s, const T& tau, F&& f) {
  const T half = tau * T(0.5);
  auto k1 = f(s);
  auto k2 = f(advance(s, half, k1));
  auto k3 = f(advance(s, half, k2));
  auto k4 = f(advance(s, tau, k3));
  JointState<T> out = s;
  const T sixth = tau / T(6.0);
  auto combine = [&](Dense<T>& o, const Dense<T>& base, const Dense<T>& a, const Dense<T>& b, const Dense<T>& c,
                     const Dense<T>& d) {
    for (std::size_t k = 0; k < o.size(); ++k)
      o.data()[k] = base.data()[k] + sixth * (a.data()[k] + T(2.0) * b.data()[k] + T(2.0) * c.data()[k] + d.data()[k]);
  };
  combine(out.U, s.U, k1.dU, k2.dU, k3.dU, k4.dU);
  combine(out.X, s.X, k1.dX, k2.dX, k3.dX, k4.dX);
  return out;
}

// Step sizes of the fixed-step grid on [0, t_end]: full steps of tau and a
// final shortened step when tau does not divide t_end.
inline std::vector<double> fixed_step_sizes(double tau, double t_end) {
  std::vector<double> h;
  if (t_end <= 0.0) return h;
  const double slack = 1e-12 * std::max(1.0, t_end);
  auto full = static_cast<std::size_t>(std::floor(t_end / tau));
  if (t_end - static_cast<double>(full + 1) * tau > -slack) ++full;
  double t = 0.0;
  for (std::size_t k = 1; k <= full; ++k) {
    const double next = (k == full && std::abs(t_end - static_cast<double>(k) * tau) <= slack)
                            ? t_end
                            : static_cast<double>(k) * tau;
    h.push_back(next - t);
    t = next;
  }
  if (t_end - t > slack) h.push_back(t_end - t);
  return h;
}

// Unrolled fixed-step integration, generic over the scalar so it can be
// differentiated. Only Euler and RK4 are accepted.
template <class T, class F>
JointState<T> integrate_fixed(JointState<T> s, Method method, double tau, double t_end, F&& f) {
  if (method == Method::Dopri5) throw InputError("adaptive stepping cannot be unrolled; use euler or rk4");
  for (double h : fixed_step_sizes(tau, t_end))
    s = method == Method::Euler ? euler_step<T>(s, T(h), f) : rk4_step<T>(s, T(h), f);
  return s;
}

namespace detail {

struct DopriTableau {
  static constexpr std::array<double, 7> c{0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
  static constexpr double a[7][6] = {
      {},
      {1.0 / 5},
      {3.0 / 40, 9.0 / 40},
      {44.0 / 45, -56.0 / 15, 32.0 / 9},
      {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
      {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
      {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84},
  };
  static constexpr std::array<double, 7> b5{35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84, 0.0};
  static constexpr std::array<double, 7> b4{5179.0 / 57600,    0.0,           7571.0 / 16695, 393.0 / 640,
                                            -92097.0 / 339200, 187.0 / 2100, 1.0 / 40};
};

struct DopriAttempt {
  JointState<double> y;
  JointTangent<double> f_end;  // f(y), reusable as the next first stage
  double error = 0.0;
};

inline DopriAttempt dopri_attempt(const JointState<double>& y0, const JointTangent<double>& k1, double h,
                                  const RhsFn& f, double rtol, double atol, std::size_t& evaluations) {
  using Tab = DopriTableau;
  std::array<JointTangent<double>, 7> k;
  k[0] = k1;
  auto stage_state = [&](int s) {
    JointState<double> y = y0;
    for (int r = 0; r < s; ++r) {
      const double coef = Tab::a[s][r];
      if (coef == 0.0) continue;
      for (std::size_t q = 0; q < y.U.size(); ++q) y.U.data()[q] += h * coef * k[r].dU.data()[q];
      for (std::size_t q = 0; q < y.X.size(); ++q) y.X.data()[q] += h * coef * k[r].dX.data()[q];
    }
    return y;
  };
  JointState<double> y5;
  for (int s = 1; s < 7; ++s) {
    JointState<double> ys = stage_state(s);
    k[s] = f(ys);
    ++evaluations;
    if (s == 6) y5 = std::move(ys);
  }
  double err = 0.0;
  auto accumulate = [&](const Dense<double>& base, const Dense<double>& hi, auto member) {
    for (std::size_t q = 0; q < base.size(); ++q) {
      double diff = 0.0;
      for (int s = 0; s < 7; ++s) diff += (Tab::b5[s] - Tab::b4[s]) * (k[s].*member).data()[q];
      diff *= h;
      const double scale = atol + rtol * std::max(std::abs(base.data()[q]), std::abs(hi.data()[q]));
      err = std::max(err, std::abs(diff) / scale);
      if (std::isnan(diff)) err = std::numeric_limits<double>::infinity();
    }
  };
  accumulate(y0.U, y5.U, &JointTangent<double>::dU);
  accumulate(y0.X, y5.X, &JointTangent<double>::dX);
  if (!all_finite(y5)) err = std::numeric_limits<double>::infinity();
  return {std::move(y5), std::move(k[6]), err};
}

inline double dopri_factor(double err) {
  if (err == 0.0) return 5.0;
  return std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
}

inline void check_finite_step(const JointState<double>& s, std::size_t step, double t, const Trajectory& traj) {
  if (!all_finite(s))
    throw SolverError("blow-up: non-finite state at step " + std::to_string(step) + " (t=" + std::to_string(t) + ")",
                      traj);
}

inline bool should_snapshot(std::size_t every, std::size_t accepted) { return every != 0 && accepted % every == 0; }

}  // namespace detail

// Integrates from t = 0 to cfg.t_end. The hook (if any) runs after every
// accepted step; trial stages of Dopri5 see the stencil frozen.
inline Trajectory integrate(const JointState<double>& initial, const SolverConfig& cfg, const RhsFn& f,
                            const StepHook& hook = {}) {
  cfg.validate();
  Trajectory traj;
  traj.times.push_back(0.0);
  traj.states.push_back(initial);
  JointState<double> y = initial;
  double t = 0.0;
  auto& st = traj.stats;

  auto record = [&](bool last) {
    if (last || detail::should_snapshot(cfg.snapshot_every, st.accepted)) {
      traj.times.push_back(t);
      traj.states.push_back(y);
    }
  };

  if (cfg.method != Method::Dopri5) {
    const auto steps = fixed_step_sizes(cfg.tau, cfg.t_end);
    for (std::size_t k = 0; k < steps.size(); ++k) {
      if (st.accepted >= cfg.max_steps) {
        traj.times.push_back(t);
        traj.states.push_back(y);
        throw SolverError("max_steps exceeded at t=" + std::to_string(t), traj);
      }
      auto counted = [&](const JointState<double>& s) {
        ++st.rhs_evaluations;
        return f(s);
      };
      y = cfg.method == Method::Euler ? euler_step<double>(y, steps[k], counted) : rk4_step<double>(y, steps[k], counted);
      t = (k + 1 == steps.size()) ? cfg.t_end : t + steps[k];
      ++st.accepted;
      detail::check_finite_step(y, st.accepted, t, traj);
      if (hook) hook(y, st.accepted);
      record(k + 1 == steps.size());
    }
    return traj;
  }

  if (cfg.t_end == 0.0) return traj;
  double h = std::min(0.1, cfg.t_end / 10.0);
  const double slack = 1e-12 * std::max(1.0, cfg.t_end);
  JointTangent<double> k1 = f(y);
  ++st.rhs_evaluations;
  while (cfg.t_end - t > slack) {
    if (st.accepted >= cfg.max_steps) {
      traj.times.push_back(t);
      traj.states.push_back(y);
      throw SolverError("max_steps exceeded at t=" + std::to_string(t), traj);
    }
    h = std::min(h, cfg.t_end - t);
    auto att = detail::dopri_attempt(y, k1, h, f, cfg.rtol, cfg.atol, st.rhs_evaluations);
    if (att.error <= 1.0) {
      t = (cfg.t_end - (t + h) <= slack) ? cfg.t_end : t + h;
      y = std::move(att.y);
      ++st.accepted;
      st.max_accepted_error = std::max(st.max_accepted_error, att.error);
      if (hook) {
        hook(y, st.accepted);
        k1 = f(y);
        ++st.rhs_evaluations;
      } else {
        k1 = std::move(att.f_end);
      }
      record(t == cfg.t_end);
    } else {
      ++st.rejected;
    }
    h *= detail::dopri_factor(att.error);
    if (h < 1e-14 * std::max(1.0, cfg.t_end))
      throw SolverError("blow-up: step size underflow at t=" + std::to_string(t), traj);
  }
  return traj;
}

struct PatienceResult {
  JointState<double> state;
  double time = 0.0;
  double score = 0.0;
  std::size_t evaluations = 0;
  std::size_t accepted_steps = 0;
};

// Integrates without a terminal bound, scoring each accepted state, and keeps
// the best one. Stops after `patience` consecutive non-improving scores or
// max_steps accepted steps.
template <class Validator>
PatienceResult infer_with_patience(const JointState<double>& initial, const SolverConfig& cfg, const RhsFn& f,
                                   Validator&& validator, const StepHook& hook = {}) {
  cfg.validate();
  if (!cfg.patience) throw InputError("infer_with_patience needs a patience value");
  JointState<double> y = initial;
  double t = 0.0;
  PatienceResult best{y, 0.0, validator(y), 1, 0};
  std::size_t stale = 0;
  std::size_t accepted = 0;
  std::size_t evals = 0;
  Trajectory partial;

  auto observe = [&]() {
    const double score = validator(y);
    ++best.evaluations;
    if (score > best.score) {
      best.state = y;
      best.time = t;
      best.score = score;
      stale = 0;
    } else {
      ++stale;
    }
  };

  if (cfg.method != Method::Dopri5) {
    while (stale < *cfg.patience && accepted < cfg.max_steps) {
      y = cfg.method == Method::Euler ? euler_step<double>(y, cfg.tau, f) : rk4_step<double>(y, cfg.tau, f);
      ++accepted;
      t = static_cast<double>(accepted) * cfg.tau;
      detail::check_finite_step(y, accepted, t, partial);
      if (hook) hook(y, accepted);
      observe();
    }
  } else {
    double h = std::min(0.1, cfg.t_end > 0.0 ? cfg.t_end / 10.0 : 0.1);
    JointTangent<double> k1 = f(y);
    while (stale < *cfg.patience && accepted < cfg.max_steps) {
      auto att = detail::dopri_attempt(y, k1, h, f, cfg.rtol, cfg.atol, evals);
      if (att.error <= 1.0) {
        t += h;
        y = std::move(att.y);
        ++accepted;
        if (hook) {
          hook(y, accepted);
          k1 = f(y);
        } else {
          k1 = std::move(att.f_end);
        }
        observe();
      }
      h *= detail::dopri_factor(att.error);
      if (h < 1e-14) throw SolverError("blow-up: step size underflow at t=" + std::to_string(t), partial);
    }
  }
  best.accepted_steps = accepted;
  return best;
}

}  // namespace beltrami
