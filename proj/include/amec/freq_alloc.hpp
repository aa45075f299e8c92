#ifndef AMEC_FREQ_ALLOC_HPP
#define AMEC_FREQ_ALLOC_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <sstream>
#include <vector>

#include "amec/error.hpp"
#include "amec/scenario.hpp"
#include "amec/slot_matrix.hpp"

namespace amec {

/// Multipliers of the fixed-schedule frequency problem, SI units.
///
/// alpha[m] (m = 2..K+1) prices the server capacity in slot m, beta[n-1]
/// (n = 1..K) prices completion of the n-th arriving task.
struct FreqDuals {
  std::vector<double> alpha;
  std::vector<double> beta;
};

struct TransitionVerdict {
  enum class Kind { NoTransition, TransitionAt, Infeasible };
  Kind kind = Kind::NoTransition;
  int slot = 0;  // valid for TransitionAt, in 3..K+1

  static TransitionVerdict none() { return {Kind::NoTransition, 0}; }
  static TransitionVerdict at(int slot) { return {Kind::TransitionAt, slot}; }
  static TransitionVerdict infeasible() { return {Kind::Infeasible, 0}; }

  friend bool operator==(const TransitionVerdict&, const TransitionVerdict&) = default;
};

/// Slot index of a verdict with NoTransition ranked as K+2.
inline int verdict_slot(const TransitionVerdict& v, int k) {
  return v.kind == TransitionVerdict::Kind::TransitionAt ? v.slot : k + 2;
}

inline std::string to_string(const TransitionVerdict& v) {
  switch (v.kind) {
    case TransitionVerdict::Kind::NoTransition: return "none";
    case TransitionVerdict::Kind::Infeasible: return "infeasible";
    case TransitionVerdict::Kind::TransitionAt: return "t" + std::to_string(v.slot);
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Feasibility and transition point

/// Smallest server capacity for which the frequency problem is feasible:
/// max over n of (F_n + ... + F_K) / (dt_{n+1} + ... + dt_{K+1}).
/// Returns +inf when some tail of work has zero compute time.
inline double required_fmax(std::span<const double> cycles, const TimeAllocation& dt) {
  const int k = static_cast<int>(cycles.size());
  if (dt.num_devices() != k) throw DomainError("required_fmax: size mismatch");
  double work = 0.0;
  double time = 0.0;
  double best = 0.0;
  for (int n = k; n >= 1; --n) {
    work += cycles[static_cast<std::size_t>(n - 1)];
    time += dt[n + 1];
    if (work <= 0.0) continue;
    if (!(time > 0.0)) return std::numeric_limits<double>::infinity();
    best = std::max(best, work / time);
  }
  return best;
}

/// The threshold function F(i), 2 <= i <= K+1, whose crossings locate the
/// first slot where the capacity binds.
inline double transition_threshold(std::span<const double> cycles, const TimeAllocation& dt, int i) {
  const int k = static_cast<int>(cycles.size());
  if (i < 2 || i > k + 1) throw DomainError("transition_threshold: index out of range");
  double v = 0.0;
  for (int n = 1; n <= i - 2; ++n) {
    const double s = dt.span(n + 1, k + 1);
    const double f = cycles[static_cast<std::size_t>(n - 1)];
    if (f > 0.0) v += s > 0.0 ? f / s : std::numeric_limits<double>::infinity();
  }
  double tail = 0.0;
  for (int n = i - 1; n <= k; ++n) tail += cycles[static_cast<std::size_t>(n - 1)];
  const double s = dt.span(i, k + 1);
  if (tail > 0.0) v += s > 0.0 ? tail / s : std::numeric_limits<double>::infinity();
  return v;
}

inline TransitionVerdict transition_point(std::span<const double> cycles, const TimeAllocation& dt, double f_max) {
  const int k = static_cast<int>(cycles.size());
  if (f_max < required_fmax(cycles, dt)) return TransitionVerdict::infeasible();
  if (f_max >= transition_threshold(cycles, dt, k + 1)) return TransitionVerdict::none();
  for (int i = 3; i <= k + 1; ++i) {
    if (transition_threshold(cycles, dt, i - 1) <= f_max && f_max < transition_threshold(cycles, dt, i))
      return TransitionVerdict::at(i);
  }
  // Only reachable through rounding when F(2) is within an ulp of f_max.
  return TransitionVerdict::at(3);
}

// ---------------------------------------------------------------------------
// Closed-form primal and the per-slot capacity level

/// f_{n,m} = sqrt([beta_n/(3 kappa) - alpha_m/(3 kappa dt_m)]^+).
inline FrequencyPlan primal_from_duals(const FreqDuals& duals, const TimeAllocation& dt, double kappa) {
  const int k = static_cast<int>(duals.beta.size());
  FrequencyPlan f(k);
  for (int n = 1; n <= k; ++n) {
    for (int m = n + 1; m <= k + 1; ++m) {
      if (!(dt[m] > 0.0)) continue;
      const double v = duals.beta[static_cast<std::size_t>(n - 1)] / (3.0 * kappa) -
                       duals.alpha[static_cast<std::size_t>(m)] / (3.0 * kappa * dt[m]);
      f(n, m) = std::sqrt(std::max(v, 0.0));
    }
  }
  return f;
}

namespace detail {

/// sum_n sqrt([b_n - a]^+) with everything in frequency-squared units.
inline double level_sum(std::span<const double> b, double a) {
  double s = 0.0;
  for (double v : b) s += std::sqrt(std::max(v - a, 0.0));
  return s;
}

/// Finds a with level_sum(b, a) = f_max on [lo, hi]: bisection until the
/// bracket is below eps0 * hi, then a safeguarded Newton polish.
/// Requires level_sum(lo) >= f_max >= level_sum(hi).
inline double solve_level(std::span<const double> b, double f_max, double lo, double hi, double eps0, long& steps) {
  const double width = eps0 * std::max(hi, std::numeric_limits<double>::min());
  while (hi - lo > width) {
    const double mid = 0.5 * (lo + hi);
    if (level_sum(b, mid) > f_max) lo = mid;
    else hi = mid;
    ++steps;
  }
  double a = hi;
  for (int it = 0; it < 60; ++it) {
    double g = -f_max;
    double d = 0.0;
    for (double v : b) {
      const double r = v - a;
      if (r > 0.0) {
        const double s = std::sqrt(r);
        g += s;
        d -= 0.5 / s;
      }
    }
    if (std::fabs(g) <= 1e-15 * f_max) break;
    if (g > 0.0) lo = a;
    else hi = a;
    double next = d < 0.0 ? a - g / d : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::fabs(next - a) <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(std::fabs(a), hi)) {
      a = next;
      break;
    }
    a = next;
  }
  return a;
}

}  // namespace detail

/// Capacity multiplier of slot m: the alpha_m solving
/// sum_{n<m} sqrt([beta_n/(3k) - alpha_m/(3k dt_m)]^+) = F_max by bisection
/// on alpha_m/dt_m over [lower, upper] (both given as alpha values).
inline double bisect_alpha(std::span<const double> beta, double dt_m, double f_max, double lower, double upper,
                           double eps0, double kappa) {
  if (!(dt_m > 0.0)) throw DomainError("bisect_alpha: slot duration must be positive");
  const double unit = 3.0 * kappa;
  std::vector<double> b(beta.size());
  for (std::size_t i = 0; i < beta.size(); ++i) b[i] = beta[i] / unit;
  const double lo = lower / (unit * dt_m);
  const double hi = upper / (unit * dt_m);
  if (detail::level_sum(b, lo) < f_max) throw DomainError("bisect_alpha: lower end does not reach capacity");
  if (detail::level_sum(b, hi) > f_max) throw DomainError("bisect_alpha: upper end exceeds capacity");
  long steps = 0;
  return detail::solve_level(b, f_max, lo, hi, eps0, steps) * unit * dt_m;
}

/// Server energy sum kappa f^3 dt_m.
inline double eval_energy(const FrequencyPlan& f, const TimeAllocation& dt, double kappa) {
  const int k = f.num_devices();
  double e = 0.0;
  for (int n = 1; n <= k; ++n)
    for (int m = n + 1; m <= k + 1; ++m) {
      const double v = f(n, m);
      e += kappa * v * v * v * dt[m];
    }
  return e;
}

// ---------------------------------------------------------------------------
// Low-complexity optimal allocation

struct FreqAllocOptions {
  double bisection_tol = 1e-5;  // eps0, relative to the bracket's upper end
  double residual_tol = 1e-10;  // max_n |F_n - sum_m f dt| / F_n at convergence
  int max_iter = 10000;
};

struct FreqAllocResult {
  FrequencyPlan plan;
  FreqDuals duals;
  double energy = 0.0;
  TransitionVerdict verdict;
  int iterations = 0;       // dual updates
  long bisection_steps = 0;
  double max_residual = 0.0;
};

/// Energy-optimal asynchronous frequency allocation for fixed slot durations.
///
/// Slots before the transition point keep a zero capacity price. For the
/// remaining slots the price is the root of the capacity equation found by
/// bisection, and the completion prices beta are driven to zero completion
/// residual by a dual ascent whose step is scaled by the exact dual Hessian.
/// Rows with zero work, and slots of zero duration, are left at zero.
inline FreqAllocResult allocate_frequencies(std::span<const double> cycles, const TimeAllocation& dt, double f_max,
                                            double kappa, const FreqAllocOptions& opt = {}) {
  const int k = static_cast<int>(cycles.size());
  if (dt.num_devices() != k) throw DomainError("allocate_frequencies: size mismatch");
  FreqAllocResult out;
  out.verdict = transition_point(cycles, dt, f_max);
  if (out.verdict.kind == TransitionVerdict::Kind::Infeasible) {
    std::ostringstream msg;
    msg << "frequency allocation infeasible: F_max=" << f_max << " Hz below required "
        << required_fmax(cycles, dt) << " Hz";
    throw InfeasibleError(msg.str());
  }
  auto F = [&](int n) { return cycles[static_cast<std::size_t>(n - 1)]; };
  std::vector<double> tail(static_cast<std::size_t>(k) + 1, 0.0);
  for (int n = 1; n <= k; ++n) tail[static_cast<std::size_t>(n)] = dt.span(n + 1, k + 1);

  out.plan = FrequencyPlan(k);
  out.duals.alpha.assign(static_cast<std::size_t>(k) + 2, 0.0);
  out.duals.beta.assign(static_cast<std::size_t>(k), 0.0);

  if (out.verdict.kind == TransitionVerdict::Kind::NoTransition) {
    for (int n = 1; n <= k; ++n) {
      if (!(F(n) > 0.0)) continue;
      const double f = F(n) / tail[static_cast<std::size_t>(n)];
      for (int m = n + 1; m <= k + 1; ++m)
        if (dt[m] > 0.0) out.plan(n, m) = f;
      out.duals.beta[static_cast<std::size_t>(n - 1)] = 3.0 * kappa * f * f;
    }
    out.energy = eval_energy(out.plan, dt, kappa);
    return out;
  }

  const int knee = out.verdict.slot;
  // Work in b = beta/(3 kappa) and a_m = alpha_m/(3 kappa dt_m), so f = sqrt([b - a]^+).
  std::vector<double> b(static_cast<std::size_t>(k), 0.0);
  for (int n = 1; n <= k; ++n)
    if (F(n) > 0.0) {
      const double f = F(n) / tail[static_cast<std::size_t>(n)];
      b[static_cast<std::size_t>(n - 1)] = f * f;
    }

  std::vector<double> a(static_cast<std::size_t>(k) + 2, 0.0);
  std::vector<char> binding(static_cast<std::size_t>(k) + 2, 0);
  FrequencyPlan f(k);
  std::vector<double> resid(static_cast<std::size_t>(k), 0.0);
  std::vector<double> rows;

  auto evaluate = [&](const std::vector<double>& bv) {
    double prev = 0.0;
    for (int m = 2; m <= k + 1; ++m) {
      a[static_cast<std::size_t>(m)] = 0.0;
      binding[static_cast<std::size_t>(m)] = 0;
      if (!(dt[m] > 0.0)) {
        for (int n = 1; n < m; ++n) f(n, m) = 0.0;
        continue;
      }
      rows.clear();
      double hi = 0.0;
      for (int n = 1; n < m; ++n)
        if (F(n) > 0.0) {
          rows.push_back(bv[static_cast<std::size_t>(n - 1)]);
          hi = std::max(hi, bv[static_cast<std::size_t>(n - 1)]);
        }
      double level = 0.0;
      if (m >= knee && detail::level_sum(rows, 0.0) > f_max) {
        double lo = detail::level_sum(rows, prev) >= f_max ? prev : 0.0;
        level = detail::solve_level(rows, f_max, lo, hi, opt.bisection_tol, out.bisection_steps);
        binding[static_cast<std::size_t>(m)] = 1;
      }
      a[static_cast<std::size_t>(m)] = level;
      prev = level;
      for (int n = 1; n < m; ++n)
        f(n, m) = F(n) > 0.0 ? std::sqrt(std::max(bv[static_cast<std::size_t>(n - 1)] - level, 0.0)) : 0.0;
    }
    double merit = 0.0;
    double worst = 0.0;
    for (int n = 1; n <= k; ++n) {
      if (!(F(n) > 0.0)) continue;
      double done = 0.0;
      for (int m = n + 1; m <= k + 1; ++m) done += f(n, m) * dt[m];
      const double r = F(n) - done;
      resid[static_cast<std::size_t>(n - 1)] = r;
      merit += (r / F(n)) * (r / F(n));
      worst = std::max(worst, std::fabs(r) / F(n));
    }
    return std::pair{merit, worst};
  };

  auto [merit, worst] = evaluate(b);
  Eigen::MatrixXd jac(k, k);
  Eigen::VectorXd rhs(k);
  std::vector<double> trial(b.size());
  int it = 0;
  for (; it < opt.max_iter && worst > opt.residual_tol; ++it) {
    jac.setZero();
    for (int m = 2; m <= k + 1; ++m) {
      if (!(dt[m] > 0.0)) continue;
      if (binding[static_cast<std::size_t>(m)]) {
        double w = 0.0;
        for (int n = 1; n < m; ++n)
          if (f(n, m) > 0.0) w += 1.0 / f(n, m);
        for (int n = 1; n < m; ++n) {
          if (!(f(n, m) > 0.0)) continue;
          for (int j = 1; j < m; ++j) {
            if (!(f(j, m) > 0.0)) continue;
            const double delta = n == j ? 1.0 : 0.0;
            jac(n - 1, j - 1) += dt[m] * 0.5 / f(n, m) * (delta - (1.0 / f(j, m)) / w);
          }
        }
      } else {
        for (int n = 1; n < m; ++n)
          if (f(n, m) > 0.0) jac(n - 1, n - 1) += dt[m] * 0.5 / f(n, m);
      }
    }
    double scale = 0.0;
    for (int n = 0; n < k; ++n) scale = std::max(scale, jac(n, n));
    for (int n = 1; n <= k; ++n) {
      const auto i = static_cast<std::size_t>(n - 1);
      if (!(F(n) > 0.0)) {
        jac.row(n - 1).setZero();
        jac.col(n - 1).setZero();
        jac(n - 1, n - 1) = 1.0;
        rhs(n - 1) = 0.0;
        continue;
      }
      if (jac(n - 1, n - 1) <= 1e-14 * scale) {
        // Row currently starved in every slot: step as if its slots were free.
        const double root = std::sqrt(std::max(b[i], (F(n) / tail[static_cast<std::size_t>(n)]) * (F(n) / tail[static_cast<std::size_t>(n)])));
        jac(n - 1, n - 1) += tail[static_cast<std::size_t>(n)] * 0.5 / root;
      }
      rhs(n - 1) = resid[i];
    }
    for (int n = 0; n < k; ++n) jac(n, n) += 1e-13 * scale;
    Eigen::VectorXd step = jac.ldlt().solve(rhs);
    if (!step.allFinite()) step = rhs.cwiseQuotient(jac.diagonal());

    double s = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls, s *= 0.5) {
      for (int n = 0; n < k; ++n) {
        const double cand = b[static_cast<std::size_t>(n)] + s * step(n);
        trial[static_cast<std::size_t>(n)] = std::max(cand, 0.25 * b[static_cast<std::size_t>(n)]);
      }
      auto [m2, w2] = evaluate(trial);
      if (m2 <= (1.0 - 2e-4 * s) * merit) {
        b = trial;
        merit = m2;
        worst = w2;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      std::tie(merit, worst) = evaluate(b);
      break;
    }
  }
  out.iterations = it;
  out.max_residual = worst;
  if (worst > opt.residual_tol && worst > 1e-7) {
    std::ostringstream msg;
    msg << "frequency allocation did not converge after " << it << " dual updates (max relative residual " << worst
        << ")";
    throw NonConvergenceError(msg.str());
  }
  out.plan = f;
  for (int n = 1; n <= k; ++n) out.duals.beta[static_cast<std::size_t>(n - 1)] = 3.0 * kappa * b[static_cast<std::size_t>(n - 1)];
  for (int m = 2; m <= k + 1; ++m)
    out.duals.alpha[static_cast<std::size_t>(m)] = 3.0 * kappa * dt[m] * a[static_cast<std::size_t>(m)];
  out.energy = eval_energy(out.plan, dt, kappa);
  return out;
}

// ---------------------------------------------------------------------------
// Structural checks on a solved plan

/// First slot m >= 3 where some row drops by more than tol, or NoTransition.
inline TransitionVerdict observed_transition(const FrequencyPlan& f, const TimeAllocation& dt, double tol) {
  const int k = f.num_devices();
  for (int m = 3; m <= k + 1; ++m) {
    if (!(dt[m] > 0.0) || !(dt[m - 1] > 0.0)) continue;
    for (int n = 1; n <= m - 2; ++n)
      if (f(n, m) < f(n, m - 1) - tol) return TransitionVerdict::at(m);
  }
  return TransitionVerdict::none();
}

/// Each row is constant, then strictly decreasing, then zero (tolerance tol).
inline bool row_pattern_holds(const FrequencyPlan& f, const TimeAllocation& dt, double tol) {
  const int k = f.num_devices();
  for (int n = 1; n <= k; ++n) {
    enum { kConst, kDec, kZero } state = kConst;
    double prev = -1.0;
    for (int m = n + 1; m <= k + 1; ++m) {
      if (!(dt[m] > 0.0)) continue;
      const double v = f(n, m);
      if (prev < 0.0) {
        prev = v;
        if (v <= tol) state = kZero;
        continue;
      }
      if (v > prev + tol) return false;
      switch (state) {
        case kConst:
          if (v <= tol && prev > tol) state = kZero;
          else if (v < prev - tol) state = kDec;
          break;
        case kDec:
          if (v <= tol) state = kZero;
          else if (!(v < prev - tol)) return false;
          break;
        case kZero:
          if (v > tol) return false;
          break;
      }
      prev = v;
    }
  }
  return true;
}

/// Row property: f_{n,n+1} >= f_{n,n+2} >= ... within tol.
inline bool rows_non_increasing(const FrequencyPlan& f, double tol) {
  const int k = f.num_devices();
  for (int n = 1; n <= k; ++n)
    for (int m = n + 2; m <= k + 1; ++m)
      if (f(n, m) > f(n, m - 1) + tol) return false;
  return true;
}

/// Column property: for consecutive slots (m, m+1), 3 <= m <= K, where every
/// row n < m still has work in the pair, the shifts f_{n,m} - f_{n,m+1} are
/// either all (near) zero or all positive.
inline bool columns_coincide(const FrequencyPlan& f, const TimeAllocation& dt, double tol) {
  const int k = f.num_devices();
  for (int m = 3; m <= k; ++m) {
    bool all_working = true;
    for (int n = 1; n < m; ++n)
      if (!(f(n, m) * dt[m] + f(n, m + 1) * dt[m + 1] > 0.0)) all_working = false;
    if (!all_working) continue;
    int zero = 0;
    int positive = 0;
    for (int n = 1; n < m; ++n) {
      const double shift = f(n, m) - f(n, m + 1);
      if (std::fabs(shift) <= tol) ++zero;
      else if (shift > tol) ++positive;
      else return false;
    }
    if (zero != 0 && positive != 0) return false;
  }
  return true;
}

}  // namespace amec

#endif  // AMEC_FREQ_ALLOC_HPP
