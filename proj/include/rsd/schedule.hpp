#pragma once

#include "rsd/types.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace rsd {

enum class ScheduleShape { kLogLinear, kLinear };

inline const char* to_string(ScheduleShape s) {
  return s == ScheduleShape::kLogLinear ? "log_linear" : "linear";
}

/// Residual-shifting schedule: the monotone sequence {eta_t} with eta_0 == 0,
/// the increments alpha_t = eta_t - eta_{t-1}, and the noise scale kappa.
/// Timesteps are 1-based; eta(0) is the implicit zero.
///
/// The derived per-step loss weight is
///   w_t = alpha_t / (2 kappa^2 eta_t eta_{t-1}),   t >= 2,
/// and equals the Gaussian KL coefficient between two reverse transition
/// kernels whose x0-predictions differ (see oracles::kl_step_coefficient).
/// w_1 would divide by eta_0 == 0 and is excluded from every weighted loss.
template <typename Scalar>
struct BasicSchedule {
  ArrT<Scalar> eta;    // eta[t-1] = eta_t, t = 1..T
  ArrT<Scalar> alpha;  // alpha[t-1] = alpha_t
  Scalar kappa = Scalar(1);

  int steps() const { return static_cast<int>(eta.size()); }

  /// eta_t with eta_0 == 0.
  Scalar eta_at(int t) const {
    check_range(t, 0);
    return t == 0 ? Scalar(0) : eta[t - 1];
  }

  Scalar alpha_at(int t) const {
    check_range(t, 1);
    return alpha[t - 1];
  }

  /// w_t; defined for t in 2..T only.
  Scalar weight_at(int t) const {
    check_range(t, 2);
    return alpha[t - 1] /
           (Scalar(2) * kappa * kappa * eta[t - 1] * eta[t - 2]);
  }

 private:
  void check_range(int t, int lo) const {
    if (t < lo || t > steps())
      throw IndexError("schedule: timestep " + std::to_string(t) +
                       " outside " + std::to_string(lo) + ".." +
                       std::to_string(steps()));
  }
};

using Schedule = BasicSchedule<double>;

template <typename Scalar>
BasicSchedule<Scalar> build_schedule(int T, Scalar eta_1, Scalar eta_T,
                                     Scalar kappa, ScheduleShape shape) {
  if (T < 2)
    throw ConfigError("build_schedule: T must be >= 2, got " +
                      std::to_string(T));
  if (!(eta_1 > Scalar(0)))
    throw ConfigError("build_schedule: eta_1 must be > 0");
  if (!(eta_1 < eta_T))
    throw ConfigError("build_schedule: need eta_1 < eta_T (non-monotone "
                      "endpoints)");
  if (!(eta_T <= Scalar(1)))
    throw ConfigError("build_schedule: eta_T must be <= 1");
  if (!(kappa > Scalar(0)))
    throw ConfigError("build_schedule: kappa must be > 0");

  BasicSchedule<Scalar> s;
  s.kappa = kappa;
  s.eta.resize(T);
  for (int t = 1; t <= T; ++t) {
    const Scalar u = Scalar(t - 1) / Scalar(T - 1);
    s.eta[t - 1] = shape == ScheduleShape::kLogLinear
                       ? eta_1 * std::pow(eta_T / eta_1, u)
                       : eta_1 + (eta_T - eta_1) * u;
  }
  // Pin the endpoints so they reproduce the requested values exactly.
  s.eta[0] = eta_1;
  s.eta[T - 1] = eta_T;

  s.alpha.resize(T);
  s.alpha[0] = s.eta[0];
  for (int t = 2; t <= T; ++t) s.alpha[t - 1] = s.eta[t - 1] - s.eta[t - 2];
  return s;
}

template <typename Scalar>
Scalar weight_of(const BasicSchedule<Scalar>& s, int t) {
  return s.weight_at(t);
}

template <typename Scalar>
struct ScheduleBounds {
  Scalar eta_low_max = Scalar(0.05);
  Scalar eta_high_min = Scalar(0.95);
};

/// Returns human-readable descriptions of every violated invariant;
/// empty means the schedule is valid under the given bounds.
template <typename Scalar>
std::vector<std::string> validate(const BasicSchedule<Scalar>& s,
                                  const ScheduleBounds<Scalar>& bounds = {}) {
  std::vector<std::string> bad;
  const int T = s.steps();
  if (T < 2) {
    bad.push_back("T < 2");
    return bad;
  }
  if (!(s.kappa > Scalar(0))) bad.push_back("kappa <= 0");
  for (int t = 2; t <= T; ++t)
    if (!(s.eta[t - 1] > s.eta[t - 2]))
      bad.push_back("eta not strictly increasing at t=" + std::to_string(t));
  if (!(s.eta[0] > Scalar(0))) bad.push_back("eta_1 <= 0");
  if (s.eta[0] > bounds.eta_low_max)
    bad.push_back("eta_1 above eta_low_max");
  if (s.eta[T - 1] < bounds.eta_high_min)
    bad.push_back("eta_T below eta_high_min");
  // Telescoping consistency of the stored increments.
  Scalar acc = Scalar(0);
  for (int t = 1; t <= T; ++t) {
    if (!(s.alpha[t - 1] > Scalar(0)))
      bad.push_back("alpha_" + std::to_string(t) + " <= 0");
    acc += s.alpha[t - 1];
    if (std::abs(acc - s.eta[t - 1]) >
        Scalar(1e-12) * std::max(Scalar(1), std::abs(s.eta[t - 1])))
      bad.push_back("sum(alpha) != eta at t=" + std::to_string(t));
  }
  for (int t = 2; t <= T; ++t)
    if (!(s.weight_at(t) > Scalar(0)))
      bad.push_back("w_" + std::to_string(t) + " <= 0");
  return bad;
}

/// Evenly placed timestep subset t_i = round(i*T/N) with t_N forced to T.
/// Collisions from rounding are resolved by shifting left, keeping the
/// result strictly increasing within 1..T.
inline std::vector<int> evenly_placed_timesteps(int T, int N) {
  if (N < 1 || N > T)
    throw ConfigError("evenly_placed_timesteps: need 1 <= N <= T");
  std::vector<int> ts(N);
  for (int i = 1; i <= N; ++i)
    ts[i - 1] = static_cast<int>(
        std::lround(static_cast<double>(i) * T / N));
  ts[N - 1] = T;
  for (int i = N - 2; i >= 0; --i)
    if (ts[i] >= ts[i + 1]) ts[i] = ts[i + 1] - 1;
  if (ts[0] < 1)
    throw ConfigError("evenly_placed_timesteps: subset does not fit in 1..T");
  return ts;
}

}  // namespace rsd
