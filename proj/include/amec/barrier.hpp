#ifndef AMEC_BARRIER_HPP
#define AMEC_BARRIER_HPP

#include <Eigen/Dense>
#include <cmath>
#include <concepts>
#include <functional>
#include <limits>

namespace amec {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// A smooth convex program  min f(x)  s.t.  c_i(x) <= 0,  x_j > 0 for j < num_positive().
///
/// Implementations provide
///   int dim() const; int num_constraints() const; int num_positive() const;
///   double objective(const Vec&) const;
///   void objective_derivs(const Vec& x, Vec& grad, Mat& hess) const;   // overwrite
///   void constraint_values(const Vec& x, Vec& c) const;
///   void constraint_jacobian(const Vec& x, Mat& jac) const;          // rows = constraints
///   void add_constraint_hessians(const Vec& x, const Vec& w, Mat& hess) const;  // hess += sum w_i d2c_i
template <class P>
concept BarrierProblem = requires(const P& p, const Vec& x, Vec& v, Mat& m) {
  { p.dim() } -> std::convertible_to<int>;
  { p.num_constraints() } -> std::convertible_to<int>;
  { p.num_positive() } -> std::convertible_to<int>;
  { p.objective(x) } -> std::convertible_to<double>;
  p.objective_derivs(x, v, m);
  p.constraint_values(x, v);
  p.constraint_jacobian(x, m);
  p.add_constraint_hessians(x, x, m);
};

struct BarrierOptions {
  double gap_tol = 1e-10;  // stop once (constraints)/t <= gap_tol * |f|
  double objective_floor = 0.0;  // gaps are measured against max(|f|, objective_floor)
  double mu = 10.0;
  double newton_tol = 1e-11;  // half squared Newton decrement
  int max_newton = 200;       // per centering step
  int max_outer = 60;
  double floor_gap_tol = 1e-8;  // gap accepted when the KKT target cannot be reached
  double kkt_tol = 1e-10;
  int max_pd_iter = 200;
};

struct BarrierResult {
  Vec x;
  Vec lambda;          // multipliers of c_i <= 0
  Vec bound_lambda;    // multipliers of x_j >= 0
  double objective = 0.0;
  double gap = 0.0;    // duality-gap bound at exit
  int newton_steps = 0;
  bool converged = false;
};

namespace detail {

template <BarrierProblem P>
bool strictly_inside(const P& p, const Vec& x, Vec& c) {
  if (!x.allFinite()) return false;
  for (int j = 0; j < p.num_positive(); ++j)
    if (!(x(j) > 0.0)) return false;
  p.constraint_values(x, c);
  for (int i = 0; i < c.size(); ++i)
    if (!(c(i) < 0.0)) return false;
  return true;
}

template <BarrierProblem P>
double barrier_value(const P& p, const Vec& x, const Vec& c, double t) {
  double v = t * p.objective(x);
  for (int i = 0; i < c.size(); ++i) v -= std::log(-c(i));
  for (int j = 0; j < p.num_positive(); ++j) v -= std::log(x(j));
  return v;
}

/// Newton centering on t f - sum log(-c) - sum log x. Returns false on a stalled line search.
template <BarrierProblem P>
bool center(const P& p, Vec& x, double t, const BarrierOptions& opt, int& steps,
            const std::function<bool(const Vec&)>& stop_early = {}) {
  const int n = p.dim();
  const int mcon = p.num_constraints();
  Vec c(mcon), grad(n), g(n), trial_c(mcon);
  Mat hess(n, n), jac(mcon, n), h(n, n);
  Vec w(mcon);
  for (int it = 0; it < opt.max_newton; ++it) {
    p.constraint_values(x, c);
    p.objective_derivs(x, grad, hess);
    p.constraint_jacobian(x, jac);
    g = t * grad;
    h = t * hess;
    for (int i = 0; i < mcon; ++i) w(i) = 1.0 / (-c(i));
    g.noalias() += jac.transpose() * w;
    h.noalias() += jac.transpose() * (w.array().square().matrix().asDiagonal()) * jac;
    p.add_constraint_hessians(x, w, h);
    for (int j = 0; j < p.num_positive(); ++j) {
      g(j) -= 1.0 / x(j);
      h(j, j) += 1.0 / (x(j) * x(j));
    }
    Eigen::LDLT<Mat> ldlt(h);
    Vec dx = ldlt.solve(-g);
    if (!dx.allFinite() || ldlt.info() != Eigen::Success) {
      const double ridge = 1e-12 * std::max(1.0, h.diagonal().cwiseAbs().maxCoeff());
      h.diagonal().array() += ridge;
      dx = h.ldlt().solve(-g);
      if (!dx.allFinite()) return false;
    }
    const double dec = -g.dot(dx);
    if (dec * 0.5 <= opt.newton_tol) return true;
    double rel = 0.0;
    for (int j = 0; j < n; ++j) rel = std::max(rel, std::fabs(dx(j)) / std::max(std::fabs(x(j)), 1e-300));
    if (rel <= 1e-12) return true;
    ++steps;
    double s = 1.0;
    Vec trial(n);
    for (int ls = 0;; ++ls, s *= 0.5) {
      if (ls > 60) return false;
      trial = x + s * dx;
      if (strictly_inside(p, trial, trial_c)) break;
    }
    // Inside the quadratic-convergence region take the full (feasible) step;
    // the barrier value is then dominated by rounding in t f.
    if (dec > 0.1) {
      const double f0 = barrier_value(p, x, c, t);
      for (int ls = 0;; ++ls, s *= 0.5) {
        trial = x + s * dx;
        if (!strictly_inside(p, trial, trial_c)) continue;
        const double f1 = barrier_value(p, trial, trial_c, t);
        if (f1 <= f0 - 0.01 * s * dec) break;
        if (ls > 60) return true;
      }
    }
    x = trial;
    if (stop_early && stop_early(x)) return true;
  }
  return true;
}

/// Phase-I adapter: variables (x, s), minimise s subject to c_i(x) <= s.
template <BarrierProblem P>
struct PhaseOne {
  const P& inner;
  int dim() const { return inner.dim() + 1; }
  int num_constraints() const { return inner.num_constraints(); }
  int num_positive() const { return inner.num_positive(); }
  double objective(const Vec& x) const { return x(x.size() - 1); }
  void objective_derivs(const Vec& x, Vec& g, Mat& h) const {
    g.setZero(x.size());
    g(x.size() - 1) = 1.0;
    h.setZero(x.size(), x.size());
  }
  void constraint_values(const Vec& x, Vec& c) const {
    inner.constraint_values(x.head(inner.dim()), c);
    c.array() -= x(x.size() - 1);
  }
  void constraint_jacobian(const Vec& x, Mat& jac) const {
    Mat j(inner.num_constraints(), inner.dim());
    inner.constraint_jacobian(x.head(inner.dim()), j);
    jac.resize(j.rows(), j.cols() + 1);
    jac.leftCols(j.cols()) = j;
    jac.col(j.cols()).setConstant(-1.0);
  }
  void add_constraint_hessians(const Vec& x, const Vec& w, Mat& h) const {
    Mat hi = Mat::Zero(inner.dim(), inner.dim());
    inner.add_constraint_hessians(x.head(inner.dim()), w, hi);
    h.topLeftCorner(inner.dim(), inner.dim()) += hi;
  }
};

}  // namespace detail

/// Finds a point with x_j > 0 and c(x) < 0 starting from any x0 with x0_j > 0.
/// Returns false when the minimal achievable max_i c_i is non-negative.
template <BarrierProblem P>
bool find_interior_point(const P& p, const Vec& x0, Vec& out, const BarrierOptions& opt = {}) {
  Vec c(p.num_constraints());
  if (detail::strictly_inside(p, x0, c)) {
    out = x0;
    return true;
  }
  for (int j = 0; j < p.num_positive(); ++j)
    if (!(x0(j) > 0.0)) return false;
  detail::PhaseOne<P> one{p};
  p.constraint_values(x0, c);
  Vec z(p.dim() + 1);
  z.head(p.dim()) = x0;
  z(p.dim()) = c.maxCoeff() + std::max(1.0, std::fabs(c.maxCoeff()));
  const double m = one.num_constraints() + one.num_positive();
  double t = 1.0;
  int steps = 0;
  Vec inner_c(p.num_constraints());
  auto feasible = [&](const Vec& z) { return z(z.size() - 1) < 0.0 && detail::strictly_inside(p, Vec(z.head(p.dim())), inner_c); };
  for (int outer = 0; outer < opt.max_outer; ++outer) {
    detail::center(one, z, t, opt, steps, feasible);
    if (feasible(z)) {
      out = z.head(p.dim());
      return true;
    }
    // s* >= s - m/t; once that bound is non-negative the inner problem has no interior.
    if (z(p.dim()) - m / t >= 0.0) return false;
    if (m / t <= 1e-12 * std::max(1.0, std::fabs(z(p.dim())))) break;
    t *= opt.mu;
  }
  return false;
}

/// Worst violation among stationarity, primal feasibility, dual feasibility
/// and complementary slackness of a program whose variables are all
/// non-negative. Bound multipliers are taken as the reduced gradient.
/// Gradient terms are measured against max(1, |grad f|_inf) and products
/// against max(1, |f|).
template <BarrierProblem P>
double kkt_residual(const P& p, const Vec& x, const Vec& lambda) {
  const int n = p.dim();
  const int m = p.num_constraints();
  Vec g(n), c(m);
  Mat h(n, n), jac(m, n);
  p.objective_derivs(x, g, h);
  p.constraint_values(x, c);
  p.constraint_jacobian(x, jac);
  const double gscale = std::max(1.0, g.cwiseAbs().maxCoeff());
  const double fscale = std::max(1.0, std::fabs(p.objective(x)));
  Vec r = g + jac.transpose() * lambda;
  double worst = 0.0;
  for (int j = 0; j < n; ++j) {
    if (j < p.num_positive()) {
      worst = std::max(worst, std::max(-r(j), 0.0) / gscale);
      worst = std::max(worst, std::fabs(r(j) * x(j)) / fscale);
      worst = std::max(worst, std::max(-x(j), 0.0));
    } else {
      worst = std::max(worst, std::fabs(r(j)) / gscale);
    }
  }
  for (int i = 0; i < m; ++i) {
    worst = std::max(worst, std::max(c(i), 0.0));
    worst = std::max(worst, std::max(-lambda(i), 0.0) / gscale);
    worst = std::max(worst, std::fabs(lambda(i) * c(i)) / fscale);
  }
  return worst;
}

/// Primal-dual interior-point method from a strictly feasible x0.
///
/// The multipliers of c_i <= 0 and of x_j >= 0 are iterated together with x
/// on the modified KKT system, which keeps them accurate far below the
/// precision at which 1/(-t c_i) breaks down. The iterate with the smallest
/// KKT residual among those meeting the gap target is returned.
template <BarrierProblem P>
BarrierResult barrier_solve(const P& p, const Vec& x0, const BarrierOptions& opt = {}) {
  const int n = p.dim();
  const int mc = p.num_constraints();
  const int mb = p.num_positive();
  const double m = mc + mb;
  Vec x = x0;
  int steps = 0;
  double t = m / std::max(std::fabs(p.objective(x0)), std::max(opt.objective_floor, 1e-300));
  detail::center(p, x, t, opt, steps);

  Vec c(mc), lam(mc), z(mb), g(n), rd(n), rc(mc), rx(mb), rhs(n), jdx(mc);
  Mat h(n, n), jac(mc, n), k(n, n);
  p.constraint_values(x, c);
  for (int i = 0; i < mc; ++i) lam(i) = 1.0 / (-t * c(i));
  for (int j = 0; j < mb; ++j) z(j) = 1.0 / (t * x(j));

  auto residuals = [&](const Vec& xv, const Vec& lv, const Vec& zv, double tt, Vec& cv, Vec& rdv, Vec& rcv,
                       Vec& rxv) {
    p.constraint_values(xv, cv);
    p.objective_derivs(xv, g, h);
    p.constraint_jacobian(xv, jac);
    rdv = g + jac.transpose() * lv;
    rdv.head(mb) -= zv;
    rcv = -(lv.array() * cv.array()).matrix();
    rcv.array() -= 1.0 / tt;
    rxv = (zv.array() * xv.head(mb).array()).matrix();
    rxv.array() -= 1.0 / tt;
    return std::sqrt(rdv.squaredNorm() + rcv.squaredNorm() + rxv.squaredNorm());
  };

  BarrierResult best;
  double best_kkt = std::numeric_limits<double>::infinity();
  Vec xn(n), ln(mc), zn(mb), cn(mc), rdn(n), rcn(mc), rxn(mb);
  for (int it = 0; it < opt.max_pd_iter; ++it) {
    p.constraint_values(x, c);
    const double surrogate = -lam.dot(c) + z.dot(x.head(mb));
    const double f = p.objective(x);
    const double scale = std::max(std::fabs(f), opt.objective_floor);
    const double kkt = kkt_residual(p, x, lam);
    if (surrogate <= std::max(opt.gap_tol, opt.floor_gap_tol) * scale && kkt < best_kkt) {
      best_kkt = kkt;
      best.x = x;
      best.lambda = lam;
      best.bound_lambda = z;
      best.gap = surrogate;
      best.objective = f;
      best.converged = true;
    }
    if (surrogate <= opt.gap_tol * scale && kkt <= opt.kkt_tol) break;

    t = opt.mu * m / std::max(surrogate, 1e-300);
    const double r0 = residuals(x, lam, z, t, c, rd, rc, rx);
    // Reduced Newton system in dx.
    k = h;
    p.add_constraint_hessians(x, lam, k);
    Vec d = (lam.array() / (-c.array())).matrix();
    k.noalias() += jac.transpose() * d.asDiagonal() * jac;
    for (int j = 0; j < mb; ++j) k(j, j) += z(j) / x(j);
    rhs = -rd - jac.transpose() * (rc.array() / c.array()).matrix();
    for (int j = 0; j < mb; ++j) rhs(j) -= rx(j) / x(j);
    Eigen::LDLT<Mat> ldlt(k);
    Vec dx = ldlt.solve(rhs);
    if (!dx.allFinite()) break;
    jdx = jac * dx;
    Vec dl = ((rc.array() - lam.array() * jdx.array()) / c.array()).matrix();
    Vec dz = ((-rx.array() - z.array() * dx.head(mb).array()) / x.head(mb).array()).matrix();
    ++steps;

    double s = 1.0;
    for (int i = 0; i < mc; ++i)
      if (dl(i) < 0.0) s = std::min(s, -lam(i) / dl(i));
    for (int j = 0; j < mb; ++j)
      if (dz(j) < 0.0) s = std::min(s, -z(j) / dz(j));
    s = std::min(1.0, 0.99 * s);
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls, s *= 0.5) {
      xn = x + s * dx;
      if (!detail::strictly_inside(p, xn, cn)) continue;
      ln = lam + s * dl;
      zn = z + s * dz;
      const double r1 = residuals(xn, ln, zn, t, cn, rdn, rcn, rxn);
      if (r1 <= (1.0 - 0.01 * s) * r0) {
        moved = true;
        break;
      }
    }
    if (!moved) break;
    x = xn;
    lam = ln;
    z = zn;
  }
  if (!best.converged) {
    p.constraint_values(x, c);
    best.x = x;
    best.lambda = lam;
    best.bound_lambda = z;
    best.gap = -lam.dot(c) + z.dot(x.head(mb));
    best.objective = p.objective(x);
  }
  best.newton_steps = steps;
  return best;
}

}  // namespace amec

#endif  // AMEC_BARRIER_HPP
