#ifndef AMEC_SCENARIO_HPP
#define AMEC_SCENARIO_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "amec/error.hpp"
#include "amec/rng.hpp"

namespace amec {

/// Physical constants of the wireless-powered MEC link, SI units throughout.
struct PhysicalParams {
  double antenna_gain = 3.0;
  double carrier_hz = 915e6;
  double path_loss_exp = 3.0;
  double light_speed = 3e8;
  double rician_gamma = 0.3;
  double server_power_w = 3.0;        // P0
  double harvest_eff = 0.51;          // eta
  double server_energy_coef = 1e-26;  // kappa, E = kappa f^3 dt
  double tx_energy_coef = 1e-25;      // lambda, p = lambda r^3 / h
  static constexpr int monomial_order = 3;

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(name, "must be strictly positive");
    };
    positive(antenna_gain, "antenna_gain");
    positive(carrier_hz, "carrier_Hz");
    positive(light_speed, "light_speed");
    positive(server_power_w, "P0_W");
    positive(harvest_eff, "eta");
    positive(server_energy_coef, "kappa");
    positive(tx_energy_coef, "lambda");
    if (!(path_loss_exp >= 0.0)) throw ConfigError("path_loss_exp", "must be non-negative");
    if (!(rician_gamma >= 0.0)) throw ConfigError("rician_gamma", "must be non-negative");
    if (harvest_eff > 1.0) throw ConfigError("eta", "must not exceed 1");
  }

  /// eta * P0, the harvested power per unit channel gain.
  double harvest_power() const noexcept { return harvest_eff * server_power_w; }
};

struct DeviceTask {
  double data_bits = 0.0;     // A_k
  double intensity = 0.0;     // I_k, cycles per bit
  double distance_m = 0.0;    // d_k
  double channel_gain = 0.0;  // h_k

  /// F_k = A_k * I_k.
  double cycles() const noexcept { return data_bits * intensity; }
};

/// An immutable problem instance.
struct Scenario {
  double deadline_s = 1.0;  // T
  double f_max_hz = 1e9;
  PhysicalParams params;
  std::vector<DeviceTask> tasks;
  std::uint64_t seed = 0;

  int num_devices() const noexcept { return static_cast<int>(tasks.size()); }

  void validate() const {
    params.validate();
    if (tasks.empty()) throw ConfigError("K", "at least one device is required");
    if (!(deadline_s > 0.0)) throw ConfigError("T_s", "must be strictly positive");
    if (!(f_max_hz > 0.0)) throw ConfigError("F_max_Hz", "must be strictly positive");
    for (const auto& t : tasks) {
      if (!(t.data_bits > 0.0 && t.intensity > 0.0 && t.distance_m > 0.0 && t.channel_gain > 0.0))
        throw ConfigError("tasks", "device fields must be strictly positive");
    }
  }

  /// lambda A^3 / (h^2 eta P0): the s^3 budget dt_n^2 * (harvest time) a device must reach.
  double causality_demand(int device) const {
    const auto& t = tasks[static_cast<std::size_t>(device)];
    return params.tx_energy_coef * std::pow(t.data_bits, 3) /
           (t.channel_gain * t.channel_gain * params.harvest_power());
  }
};

/// Offloading order: order[n] is the device using offloading slot n+1.
class Schedule {
 public:
  Schedule() = default;
  explicit Schedule(std::vector<int> order) : order_(std::move(order)) {
    std::vector<char> seen(order_.size(), 0);
    for (int k : order_) {
      if (k < 0 || k >= static_cast<int>(order_.size()) || seen[static_cast<std::size_t>(k)])
        throw DomainError("schedule is not a permutation");
      seen[static_cast<std::size_t>(k)] = 1;
    }
  }

  static Schedule identity(int k) {
    std::vector<int> o(static_cast<std::size_t>(k));
    std::iota(o.begin(), o.end(), 0);
    return Schedule(std::move(o));
  }

  int size() const noexcept { return static_cast<int>(order_.size()); }
  /// Device offloading at 1-based slot n.
  int device_at(int slot) const { return order_.at(static_cast<std::size_t>(slot - 1)); }
  /// 1-based slot used by device k.
  int slot_of(int device) const {
    auto it = std::find(order_.begin(), order_.end(), device);
    return static_cast<int>(it - order_.begin()) + 1;
  }
  const std::vector<int>& order() const noexcept { return order_; }

  friend bool operator==(const Schedule&, const Schedule&) = default;
  friend auto operator<=>(const Schedule& a, const Schedule& b) { return a.order_ <=> b.order_; }

 private:
  std::vector<int> order_;
};

/// Slot durations dt[0..K+1] in seconds.
struct TimeAllocation {
  std::vector<double> dt;

  TimeAllocation() = default;
  explicit TimeAllocation(std::vector<double> d) : dt(std::move(d)) {}
  static TimeAllocation zeros(int k) { return TimeAllocation(std::vector<double>(static_cast<std::size_t>(k) + 2, 0.0)); }

  int num_devices() const noexcept { return static_cast<int>(dt.size()) - 2; }
  double operator[](int i) const { return dt[static_cast<std::size_t>(i)]; }
  double& operator[](int i) { return dt[static_cast<std::size_t>(i)]; }
  double total() const { return std::accumulate(dt.begin(), dt.end(), 0.0); }
  /// sum of dt[from..to] inclusive.
  double span(int from, int to) const {
    double s = 0.0;
    for (int i = from; i <= to; ++i) s += dt[static_cast<std::size_t>(i)];
    return s;
  }
};

// ---------------------------------------------------------------------------
// Channel and energy formulas

/// Mean channel gain A (c / (4 pi f_c d))^l.
inline double path_loss(double distance_m, const PhysicalParams& p) {
  if (!(distance_m > 0.0)) throw DomainError("path_loss: distance must be positive");
  return p.antenna_gain *
         std::pow(p.light_speed / (4.0 * std::numbers::pi * p.carrier_hz * distance_m), p.path_loss_exp);
}

/// One Rician power-gain draw with unit-mean normalisation:
/// h = mean * |sqrt(g/(1+g)) + sqrt(1/(2(1+g))) (z1 + i z2)|^2.
inline double sample_channel(double mean_gain, double gamma, Rng& rng) {
  if (!(mean_gain > 0.0)) throw DomainError("sample_channel: mean gain must be positive");
  if (!(gamma >= 0.0)) throw DomainError("sample_channel: Rician factor must be non-negative");
  const double z1 = rng.normal();
  const double z2 = rng.normal();
  if (std::isinf(gamma)) return mean_gain;
  const double los = std::sqrt(gamma / (1.0 + gamma));
  const double s = std::sqrt(1.0 / (2.0 * (1.0 + gamma)));
  const double re = los + s * z1;
  const double im = s * z2;
  return mean_gain * (re * re + im * im);
}

/// Energy harvested during slots 0..n-1 by a device of gain h.
inline double harvested_energy(const TimeAllocation& dt, int slot, double gain, const PhysicalParams& p) {
  const int k = dt.num_devices();
  if (slot < 1 || slot > k) throw DomainError("harvested_energy: slot out of range");
  return dt.span(0, slot - 1) * gain * p.harvest_power();
}

/// Monomial offloading power lambda A^3 / (h dt^3).
inline double offload_power(double data_bits, double gain, double dt, double lambda) {
  if (data_bits == 0.0) return 0.0;
  if (!(dt > 0.0)) throw DomainError("offload_power: zero-length slot makes transmission infeasible");
  if (!(gain > 0.0)) throw DomainError("offload_power: gain must be positive");
  return lambda * data_bits * data_bits * data_bits / (gain * dt * dt * dt);
}

/// Transmit energy p * dt = lambda A^3 / (h dt^2).
inline double offload_energy(double data_bits, double gain, double dt, double lambda) {
  return offload_power(data_bits, gain, dt, lambda) * dt;
}

// ---------------------------------------------------------------------------
// Random instances

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  friend bool operator==(const Range&, const Range&) = default;
};

/// Solver tolerances carried in the configuration document.
struct Tolerances {
  double bisection = 1e-5;  // eps0, relative to the bracket scale
  double gbd_gap = 1e-4;
  int gbd_max_iter = 200;
  int freq_max_iter = 10000;
  friend bool operator==(const Tolerances&, const Tolerances&) = default;
};

struct ScenarioConfig {
  int num_devices = 10;
  double deadline_s = 1.0;
  double f_max_hz = 1e9;
  PhysicalParams params;
  Range data_bits{1e4, 5e4};
  Range intensity{500.0, 1500.0};
  Range distance_m{0.3, 0.8};
  std::uint64_t seed = 1;
  Tolerances tolerances;
  /// When present, these tasks are used verbatim instead of sampling.
  std::optional<std::vector<DeviceTask>> tasks;

  void validate() const {
    params.validate();
    if (num_devices < 1) throw ConfigError("K", "must be at least 1");
    if (!(deadline_s > 0.0)) throw ConfigError("T_s", "must be strictly positive");
    if (!(f_max_hz > 0.0)) throw ConfigError("F_max_Hz", "must be strictly positive");
    auto check = [](const Range& r, const char* name) {
      if (!(r.lo > 0.0) || !(r.hi >= r.lo) || !std::isfinite(r.hi))
        throw ConfigError(name, "range must satisfy 0 < lo <= hi");
    };
    check(data_bits, "A_bits_range");
    check(intensity, "I_cpb_range");
    check(distance_m, "distance_m_range");
    if (!(tolerances.bisection > 0.0)) throw ConfigError("tolerances.bisection", "must be positive");
    if (!(tolerances.gbd_gap > 0.0)) throw ConfigError("tolerances.gbd_gap", "must be positive");
    if (tolerances.gbd_max_iter < 1) throw ConfigError("tolerances.gbd_max_iter", "must be at least 1");
    if (tolerances.freq_max_iter < 1) throw ConfigError("tolerances.freq_max_iter", "must be at least 1");
    if (tasks && static_cast<int>(tasks->size()) != num_devices)
      throw ConfigError("tasks", "length must equal K");
  }

  friend bool operator==(const ScenarioConfig& a, const ScenarioConfig& b) {
    auto same_params = [](const PhysicalParams& x, const PhysicalParams& y) {
      return x.antenna_gain == y.antenna_gain && x.carrier_hz == y.carrier_hz &&
             x.path_loss_exp == y.path_loss_exp && x.light_speed == y.light_speed &&
             x.rician_gamma == y.rician_gamma && x.server_power_w == y.server_power_w &&
             x.harvest_eff == y.harvest_eff && x.server_energy_coef == y.server_energy_coef &&
             x.tx_energy_coef == y.tx_energy_coef;
    };
    auto same_tasks = [](const auto& x, const auto& y) {
      if (x.has_value() != y.has_value()) return false;
      if (!x) return true;
      if (x->size() != y->size()) return false;
      for (std::size_t i = 0; i < x->size(); ++i) {
        const auto& p = (*x)[i];
        const auto& q = (*y)[i];
        if (p.data_bits != q.data_bits || p.intensity != q.intensity || p.distance_m != q.distance_m ||
            p.channel_gain != q.channel_gain)
          return false;
      }
      return true;
    };
    return a.num_devices == b.num_devices && a.deadline_s == b.deadline_s && a.f_max_hz == b.f_max_hz &&
           same_params(a.params, b.params) && a.data_bits == b.data_bits && a.intensity == b.intensity &&
           a.distance_m == b.distance_m && a.seed == b.seed && a.tolerances == b.tolerances &&
           same_tasks(a.tasks, b.tasks);
  }
};

/// Draws a scenario. Per device, in order: A, I, d, then two normals for the channel.
inline Scenario generate_scenario(const ScenarioConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Scenario s;
  s.deadline_s = cfg.deadline_s;
  s.f_max_hz = cfg.f_max_hz;
  s.params = cfg.params;
  s.seed = seed;
  if (cfg.tasks) {
    s.tasks = *cfg.tasks;
  } else {
    Rng rng(stream_seed(seed, 0));
    s.tasks.reserve(static_cast<std::size_t>(cfg.num_devices));
    for (int k = 0; k < cfg.num_devices; ++k) {
      DeviceTask t;
      t.data_bits = rng.uniform(cfg.data_bits.lo, cfg.data_bits.hi);
      t.intensity = rng.uniform(cfg.intensity.lo, cfg.intensity.hi);
      t.distance_m = rng.uniform(cfg.distance_m.lo, cfg.distance_m.hi);
      t.channel_gain = sample_channel(path_loss(t.distance_m, cfg.params), cfg.params.rician_gamma, rng);
      s.tasks.push_back(t);
    }
  }
  s.validate();
  return s;
}

inline Scenario generate_scenario(const ScenarioConfig& cfg) { return generate_scenario(cfg, cfg.seed); }

}  // namespace amec

#endif  // AMEC_SCENARIO_HPP
