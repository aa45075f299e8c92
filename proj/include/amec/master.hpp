#ifndef AMEC_MASTER_HPP
#define AMEC_MASTER_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <functional>
#include <numeric>
#include <optional>
#include <set>
#include <variant>
#include <vector>

#include "amec/error.hpp"
#include "amec/scenario.hpp"

namespace amec {

enum class CutKind { Optimality, Feasibility };

/// value(A) = constant + sum_{k,n} coeff[k][n] a_{k,n}; device k in slot n+1 is a_{k,n} = 1.
struct AffineCut {
  CutKind kind = CutKind::Optimality;
  double constant = 0.0;
  std::vector<std::vector<double>> coeff;  // [device][slot - 1]
  int source_iteration = 0;

  static AffineCut zero(CutKind kind, int k) {
    AffineCut c;
    c.kind = kind;
    c.coeff.assign(static_cast<std::size_t>(k), std::vector<double>(static_cast<std::size_t>(k), 0.0));
    return c;
  }
  int num_devices() const { return static_cast<int>(coeff.size()); }
};

inline double eval_cut(const AffineCut& cut, const Schedule& sched) {
  double v = cut.constant;
  for (int n = 1; n <= sched.size(); ++n)
    v += cut.coeff[static_cast<std::size_t>(sched.device_at(n))][static_cast<std::size_t>(n - 1)];
  return v;
}

/// Dual-function cut: the Lagrangian minimised over durations in [0, T] and
/// computation for fixed multipliers. Valid for every schedule by weak
/// duality and tight at its source schedule.
///
/// value(pi) = constant + sum_{i=0}^{K+1} q(a_i, b_i) with
///   a_i = curvature[pi_i] (slots 1..K), tail_curvature on slot K+1, zero on slot 0,
///   b_i = slot_base[i] - sum_{n>i} harvest[pi_n] - combine_{n<i} gain[pi_n][i],
///   q(a, b) = min_{0 <= t <= horizon} a / t^2 + b t,
/// where combine is a sum, or a max when max_combine is set.
struct LagrangianCut {
  CutKind kind = CutKind::Optimality;
  double constant = 0.0;
  double horizon = 1.0;
  std::vector<double> curvature;
  std::vector<double> harvest;
  std::vector<double> slot_base;           // size K+2
  std::vector<std::vector<double>> gain;  // [device][slot 0..K+1]
  bool max_combine = false;
  double tail_curvature = 0.0;  // a on slot K+1
  int source_iteration = 0;

  int num_devices() const { return static_cast<int>(curvature.size()); }

  double slot_term(double a, double b) const {
    if (!(a > 0.0)) return std::min(b, 0.0) * horizon;
    if (b > 0.0) {
      const double t = std::cbrt(2.0 * a / b);
      if (t < horizon) return a / (t * t) + b * t;
    }
    return a / (horizon * horizon) + b * horizon;
  }
};

inline double eval_cut(const LagrangianCut& cut, const Schedule& sched) {
  const int k = sched.size();
  double after = 0.0;
  for (double r : cut.harvest) after += r;
  double v = cut.constant;
  for (int i = 0; i <= k + 1; ++i) {
    double a = i == k + 1 ? cut.tail_curvature : 0.0;
    if (i >= 1 && i <= k) {
      const auto d = static_cast<std::size_t>(sched.device_at(i));
      after -= cut.harvest[d];
      a = cut.curvature[d];
    }
    double acc = 0.0;
    for (int n = 1; n < i && n <= k; ++n) {
      const double g = cut.gain[static_cast<std::size_t>(sched.device_at(n))][static_cast<std::size_t>(i)];
      acc = cut.max_combine ? std::max(acc, g) : acc + g;
    }
    v += cut.slot_term(a, cut.slot_base[static_cast<std::size_t>(i)] - after - acc);
  }
  return v;
}

/// A ledger entry.
class Cut {
 public:
  Cut(AffineCut c) : v_(std::move(c)) {}  // NOLINT(google-explicit-constructor)
  Cut(LagrangianCut c) : v_(std::move(c)) {}  // NOLINT(google-explicit-constructor)

  CutKind kind() const {
    return std::visit([](const auto& c) { return c.kind; }, v_);
  }
  int source_iteration() const {
    return std::visit([](const auto& c) { return c.source_iteration; }, v_);
  }
  int num_devices() const {
    return std::visit([](const auto& c) { return c.num_devices(); }, v_);
  }
  double eval(const Schedule& s) const {
    return std::visit([&](const auto& c) { return eval_cut(c, s); }, v_);
  }
  const AffineCut* affine() const { return std::get_if<AffineCut>(&v_); }
  const LagrangianCut* lagrangian() const { return std::get_if<LagrangianCut>(&v_); }

 private:
  std::variant<AffineCut, LagrangianCut> v_;
};

inline double eval_cut(const Cut& cut, const Schedule& sched) { return cut.eval(sched); }

/// Append-only cut store.
class CutLedger {
 public:
  void add(Cut cut) { cuts_.push_back(std::move(cut)); }
  const std::vector<Cut>& cuts() const noexcept { return cuts_; }
  std::size_t size() const noexcept { return cuts_.size(); }
  std::size_t count(CutKind kind) const {
    return static_cast<std::size_t>(
        std::count_if(cuts_.begin(), cuts_.end(), [&](const Cut& c) { return c.kind() == kind; }));
  }
  /// Source iterations of optimality and feasibility cuts.
  std::vector<int> iterations(CutKind kind) const {
    std::vector<int> out;
    for (const auto& c : cuts_)
      if (c.kind() == kind) out.push_back(c.source_iteration());
    return out;
  }

 private:
  std::vector<Cut> cuts_;
};

/// LocalSearch is a heuristic: steepest descent on psi over swap and insert
/// moves. Its psi is not a lower bound.
enum class MasterMethod { Enumeration, BranchAndBound, LocalSearch };

struct MasterOptions {
  MasterMethod method = MasterMethod::BranchAndBound;
  double feasibility_tol = 1e-9;
  double lower_sentinel = 0.0;  // psi when no optimality cut exists
  long max_nodes = 0;           // branch-and-bound node budget, 0 for none
  int local_steps = 25;         // descent steps per start (LocalSearch)
};

struct MasterSolution {
  Schedule schedule;
  double psi = 0.0;
  long nodes_explored = 0;
  bool complete = true;  // false when the node budget stopped the search
  MasterMethod method = MasterMethod::BranchAndBound;
};

namespace detail {

/// max(sentinel, max optimality cuts) at a full schedule, or +inf when a
/// feasibility cut is violated.
inline double master_value(const CutLedger& ledger, const Schedule& s, const MasterOptions& opt) {
  double psi = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (const auto& c : ledger.cuts()) {
    const double v = c.eval(s);
    if (c.kind() == CutKind::Feasibility) {
      if (v > opt.feasibility_tol) return std::numeric_limits<double>::infinity();
    } else {
      psi = std::max(psi, v);
      any = true;
    }
  }
  return any ? psi : opt.lower_sentinel;
}

/// Per-cut sorted device lists so prefix bounds need no allocation.
class PreparedCut {
 public:
  explicit PreparedCut(const Cut& cut) : cut_(cut) {
    const int k = cut.num_devices();
    auto sorted = [k](auto key) {
      std::vector<int> o(static_cast<std::size_t>(k));
      std::iota(o.begin(), o.end(), 0);
      std::stable_sort(o.begin(), o.end(), [&](int x, int y) { return key(x) < key(y); });
      return o;
    };
    if (const auto* c = cut.affine()) {
      for (int n = 0; n < k; ++n)
        columns_.push_back(sorted([&](int d) { return c->coeff[static_cast<std::size_t>(d)][static_cast<std::size_t>(n)]; }));
    } else {
      const auto* l = cut.lagrangian();
      by_curvature_ = sorted([&](int d) { return l->curvature[static_cast<std::size_t>(d)]; });
      by_harvest_ = sorted([&](int d) { return -l->harvest[static_cast<std::size_t>(d)]; });
      for (int i = 0; i <= k + 1; ++i)
        columns_.push_back(sorted([&](int d) { return -l->gain[static_cast<std::size_t>(d)][static_cast<std::size_t>(i)]; }));
      for (double r : l->harvest) total_harvest_ += r;
    }
  }

  const Cut& cut() const { return cut_; }

  double bound(const std::vector<int>& prefix, const std::vector<char>& used) const {
    if (const auto* c = cut_.affine()) return affine_bound(*c, prefix, used);
    return lagrangian_bound(*cut_.lagrangian(), prefix, used);
  }

 private:
  double affine_bound(const AffineCut& c, const std::vector<int>& prefix, const std::vector<char>& used) const {
    const int k = c.num_devices();
    const int depth = static_cast<int>(prefix.size());
    double v = c.constant;
    for (int n = 0; n < depth; ++n)
      v += c.coeff[static_cast<std::size_t>(prefix[static_cast<std::size_t>(n)])][static_cast<std::size_t>(n)];
    for (int n = depth; n < k; ++n)
      for (int d : columns_[static_cast<std::size_t>(n)])
        if (!used[static_cast<std::size_t>(d)]) {
          v += c.coeff[static_cast<std::size_t>(d)][static_cast<std::size_t>(n)];
          break;
        }
    return v;
  }

  double lagrangian_bound(const LagrangianCut& c, const std::vector<int>& prefix, const std::vector<char>& used) const {
    const int k = c.num_devices();
    const int depth = static_cast<int>(prefix.size());
    double a_lo = 0.0;
    for (int d : by_curvature_)
      if (!used[static_cast<std::size_t>(d)]) {
        a_lo = c.curvature[static_cast<std::size_t>(d)];
        break;
      }
    double after = total_harvest_;
    double v = c.constant;
    for (int i = 0; i <= k + 1; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      double a = 0.0;
      double after_hi = after;
      if (i >= 1 && i <= depth) {
        const auto d = static_cast<std::size_t>(prefix[ui - 1]);
        after -= c.harvest[d];
        after_hi = after;
        a = c.curvature[d];
      } else if (i > depth && i <= k) {
        a = a_lo;
        after_hi = 0.0;
        int need = k - i;
        for (int d : by_harvest_) {
          if (need == 0) break;
          if (used[static_cast<std::size_t>(d)]) continue;
          after_hi += c.harvest[static_cast<std::size_t>(d)];
          --need;
        }
      } else if (i == k + 1) {
        after_hi = 0.0;
        a = c.tail_curvature;
      }
      double acc = 0.0;
      for (int n = 1; n < i && n <= depth; ++n) {
        const double g = c.gain[static_cast<std::size_t>(prefix[static_cast<std::size_t>(n - 1)])][ui];
        acc = c.max_combine ? std::max(acc, g) : acc + g;
      }
      int need = std::max(0, std::min(i - 1, k) - depth);
      for (int d : columns_[ui]) {
        if (need == 0) break;
        if (used[static_cast<std::size_t>(d)]) continue;
        const double g = c.gain[static_cast<std::size_t>(d)][ui];
        acc = c.max_combine ? std::max(acc, g) : acc + g;
        --need;
        if (c.max_combine) break;
      }
      v += c.slot_term(a, c.slot_base[ui] - after_hi - acc);
    }
    return v;
  }

  const Cut& cut_;
  std::vector<std::vector<int>> columns_;
  std::vector<int> by_curvature_;
  std::vector<int> by_harvest_;
  double total_harvest_ = 0.0;
};

class MasterSearch {
 public:
  MasterSearch(const CutLedger& ledger, int k, const MasterOptions& opt, const std::set<Schedule>* exclude)
      : ledger_(ledger), k_(k), opt_(opt), exclude_(exclude) {
    used_.assign(static_cast<std::size_t>(k), 0);
    for (const auto& c : ledger.cuts()) {
      if (c.kind() == CutKind::Feasibility)
        feas_.emplace_back(c);
      else
        opt_cuts_.emplace_back(c);
    }
  }

  /// Starts from a known schedule's value so pruning bites early.
  void seed(const Schedule& s) {
    if (exclude_ && exclude_->count(s)) return;
    const double v = master_value(ledger_, s, opt_);
    if (v < std::numeric_limits<double>::infinity()) {
      best = v;
      best_order = s.order();
      found = true;
    }
  }

  void run() { dfs(); }

  bool found = false;
  bool complete = true;
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> best_order;
  long nodes = 0;

 private:
  // +inf when some feasibility cut excludes every completion.
  double bound() const {
    for (const auto& c : feas_)
      if (c.bound(prefix_, used_) > opt_.feasibility_tol) return std::numeric_limits<double>::infinity();
    if (opt_cuts_.empty()) return opt_.lower_sentinel;
    double b = -std::numeric_limits<double>::infinity();
    const double cap = best + 1e-9 * std::fabs(best);
    for (const auto& c : opt_cuts_) {
      b = std::max(b, c.bound(prefix_, used_));
      if (found && b > cap) break;
    }
    return b;
  }

  bool pruned(double b) const {
    if (b == std::numeric_limits<double>::infinity()) return true;
    return found && b > best + 1e-9 * std::fabs(best);
  }

  void dfs() {
    ++nodes;
    const int depth = static_cast<int>(prefix_.size());
    if (depth == k_) {
      const Schedule leaf(prefix_);
      if (exclude_ && exclude_->count(leaf)) return;
      const double v = master_value(ledger_, leaf, opt_);
      if (v == std::numeric_limits<double>::infinity()) return;
      if (!found || v < best || (v == best && prefix_ < best_order)) {
        best = v;
        best_order = prefix_;
        found = true;
      }
      return;
    }
    std::vector<std::pair<double, int>> children;
    for (int d = 0; d < k_; ++d) {
      if (used_[static_cast<std::size_t>(d)]) continue;
      double b = -std::numeric_limits<double>::infinity();  // leaves are evaluated exactly
      if (depth + 1 < k_) {
        used_[static_cast<std::size_t>(d)] = 1;
        prefix_.push_back(d);
        b = bound();
        prefix_.pop_back();
        used_[static_cast<std::size_t>(d)] = 0;
      }
      children.emplace_back(b, d);
    }
    std::stable_sort(children.begin(), children.end(),
                     [](const auto& x, const auto& y) { return x.first < y.first; });
    for (const auto& [b, d] : children) {
      if (opt_.max_nodes > 0 && nodes >= opt_.max_nodes) {
        complete = false;
        return;
      }
      if (pruned(b)) continue;
      used_[static_cast<std::size_t>(d)] = 1;
      prefix_.push_back(d);
      dfs();
      prefix_.pop_back();
      used_[static_cast<std::size_t>(d)] = 0;
    }
  }

  const CutLedger& ledger_;
  int k_;
  MasterOptions opt_;
  const std::set<Schedule>* exclude_;
  std::vector<PreparedCut> feas_;
  std::vector<PreparedCut> opt_cuts_;
  std::vector<char> used_;
  std::vector<int> prefix_;
};

}  // namespace detail

/// Steepest descent on psi from each start over swap and insert moves.
/// Returns the best schedule seen outside `exclude`.
inline MasterSolution local_search_master(const CutLedger& ledger, int k, const MasterOptions& opt,
                                          const std::vector<Schedule>& starts, const std::set<Schedule>* exclude) {
  MasterSolution out;
  out.method = MasterMethod::LocalSearch;
  out.complete = false;
  bool found = false;
  double best = std::numeric_limits<double>::infinity();
  std::set<Schedule> seen;
  auto consider = [&](const std::vector<int>& order) {
    const Schedule s(order);
    if (!seen.insert(s).second) return std::numeric_limits<double>::quiet_NaN();
    ++out.nodes_explored;
    const double v = detail::master_value(ledger, s, opt);
    const bool allowed = !exclude || !exclude->count(s);
    if (allowed && v < std::numeric_limits<double>::infinity() &&
        (!found || v < best || (v == best && s.order() < out.schedule.order()))) {
      best = v;
      out.schedule = s;
      found = true;
    }
    return v;
  };
  for (const auto& start : starts) {
    if (start.size() != k) continue;
    std::vector<int> cur = start.order();
    double cur_v = detail::master_value(ledger, start, opt);
    consider(cur);
    for (int step = 0; step < opt.local_steps; ++step) {
      std::vector<int> next;
      double next_v = cur_v;
      auto visit = [&](std::vector<int>& cand) {
        double v = consider(cand);
        if (std::isnan(v)) v = detail::master_value(ledger, Schedule(cand), opt);
        if (v < next_v) {
          next_v = v;
          next = cand;
        }
      };
      for (int i = 0; i < k; ++i)
        for (int j = i + 1; j < k; ++j) {
          std::vector<int> cand = cur;
          std::swap(cand[static_cast<std::size_t>(i)], cand[static_cast<std::size_t>(j)]);
          visit(cand);
        }
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
          if (j == i || j == i - 1) continue;
          std::vector<int> cand = cur;
          const int d = cand[static_cast<std::size_t>(i)];
          cand.erase(cand.begin() + i);
          cand.insert(cand.begin() + j, d);
          visit(cand);
        }
      if (next.empty()) break;
      cur = std::move(next);
      cur_v = next_v;
    }
  }
  if (!found) throw NonConvergenceError("local search found no admissible schedule");
  out.psi = best;
  return out;
}

/// Minimises max over optimality cuts across all schedules satisfying every
/// feasibility cut. Ties go to the lexicographically smallest order.
inline MasterSolution solve_master(const CutLedger& ledger, int k, const MasterOptions& opt = {},
                                   const std::optional<Schedule>& hint = std::nullopt,
                                   const std::set<Schedule>* exclude = nullptr) {
  if (k < 1) throw DomainError("solve_master: K must be positive");
  for (const auto& c : ledger.cuts())
    if (c.num_devices() != k) throw DomainError("solve_master: cut shape mismatch");
  MasterSolution out;
  out.method = opt.method;
  if (opt.method == MasterMethod::Enumeration) {
    std::vector<int> order(static_cast<std::size_t>(k));
    std::iota(order.begin(), order.end(), 0);
    bool found = false;
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> best_order;
    do {
      ++out.nodes_explored;
      if (exclude && exclude->count(Schedule(order))) continue;
      const double v = detail::master_value(ledger, Schedule(order), opt);
      if (v == std::numeric_limits<double>::infinity()) continue;
      if (!found || v < best) {
        best = v;
        best_order = order;
        found = true;
      }
    } while (std::next_permutation(order.begin(), order.end()));
    if (!found) throw InfeasibleError("every schedule violates a feasibility cut");
    out.schedule = Schedule(best_order);
    out.psi = best;
    return out;
  }
  if (opt.method == MasterMethod::LocalSearch) {
    std::vector<Schedule> starts;
    if (hint) starts.push_back(*hint);
    starts.push_back(Schedule::identity(k));
    return local_search_master(ledger, k, opt, starts, exclude);
  }
  detail::MasterSearch search(ledger, k, opt, exclude);
  if (hint && hint->size() == k) search.seed(*hint);
  search.run();
  out.nodes_explored = search.nodes;
  out.complete = search.complete;
  if (!search.found) {
    if (search.complete) throw InfeasibleError("every schedule violates a feasibility cut");
    throw NonConvergenceError("master search budget exhausted before any schedule was found");
  }
  out.schedule = Schedule(search.best_order);
  out.psi = search.best;
  return out;
}

}  // namespace amec

#endif  // AMEC_MASTER_HPP
