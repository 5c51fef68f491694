#pragma once

#include "rsd/predictor.hpp"
#include "rsd/rng.hpp"
#include "rsd/schedule.hpp"
#include "rsd/types.hpp"

#include <cmath>
#include <vector>

namespace rsd {

/// Isotropic Gaussian over a tensor: N(mean, var*I).
template <typename Scalar>
struct GaussianParamsT {
  VecT<Scalar> mean;
  Scalar var = Scalar(0);
};

using GaussianParams = GaussianParamsT<double>;

/// q(x_t | x0, y0) = N(x0 + eta_t (y0 - x0), kappa^2 eta_t I).
template <typename Scalar>
GaussianParamsT<Scalar> marginal_params(const BasicSchedule<Scalar>& s,
                                        const VecT<Scalar>& x0,
                                        const VecT<Scalar>& y0, int t) {
  require_same_size(x0, y0, "marginal_params");
  const Scalar eta = s.eta_at(t);
  if (t < 1)
    throw IndexError("marginal_params: t must be >= 1");
  GaussianParamsT<Scalar> p;
  p.mean = x0 + eta * (y0 - x0);
  p.var = s.kappa * s.kappa * eta;
  return p;
}

/// q(x_t | x_{t-1}, y0) = N(x_{t-1} + alpha_t (y0 - x0), kappa^2 alpha_t I).
template <typename Scalar>
GaussianParamsT<Scalar> transition_params(const BasicSchedule<Scalar>& s,
                                          const VecT<Scalar>& x_prev,
                                          const VecT<Scalar>& x0,
                                          const VecT<Scalar>& y0, int t) {
  require_same_size(x_prev, x0, "transition_params");
  require_same_size(x0, y0, "transition_params");
  const Scalar a = s.alpha_at(t);
  GaussianParamsT<Scalar> p;
  p.mean = x_prev + a * (y0 - x0);
  p.var = s.kappa * s.kappa * a;
  return p;
}

/// q(x_{t-1} | x_t, x0) = N((eta_{t-1}/eta_t) x_t + (alpha_t/eta_t) x0,
///                          kappa^2 (eta_{t-1}/eta_t) alpha_t I).
/// Defined for t >= 2; the t=1 step is the degenerate map to x0 and is
/// handled inside reverse_sample.
template <typename Scalar>
GaussianParamsT<Scalar> posterior_params(const BasicSchedule<Scalar>& s,
                                         const VecT<Scalar>& x_t,
                                         const VecT<Scalar>& x0, int t) {
  require_same_size(x_t, x0, "posterior_params");
  if (t < 2)
    throw IndexError("posterior_params: t must be >= 2 (eta_0 = 0)");
  const Scalar eta_t = s.eta_at(t);
  const Scalar eta_p = s.eta_at(t - 1);
  const Scalar a = s.alpha_at(t);
  GaussianParamsT<Scalar> p;
  p.mean = (eta_p / eta_t) * x_t + (a / eta_t) * x0;
  p.var = s.kappa * s.kappa * (eta_p / eta_t) * a;
  return p;
}

/// Posterior for a jump between two schedule levels t_hi > t_lo >= 0.
/// The same Bayes algebra as posterior_params with alpha replaced by
/// eta_{t_hi} - eta_{t_lo}; t_lo = t_hi - 1 reproduces it exactly, and
/// t_lo = 0 collapses onto x0 with zero variance.
template <typename Scalar>
GaussianParamsT<Scalar> jump_posterior_params(const BasicSchedule<Scalar>& s,
                                              const VecT<Scalar>& x_t,
                                              const VecT<Scalar>& x0,
                                              int t_hi, int t_lo) {
  require_same_size(x_t, x0, "jump_posterior_params");
  if (t_lo < 0 || t_lo >= t_hi)
    throw IndexError("jump_posterior_params: need 0 <= t_lo < t_hi");
  const Scalar eta_hi = s.eta_at(t_hi);
  const Scalar eta_lo = s.eta_at(t_lo);
  const Scalar gap = eta_hi - eta_lo;
  GaussianParamsT<Scalar> p;
  p.mean = (eta_lo / eta_hi) * x_t + (gap / eta_hi) * x0;
  p.var = s.kappa * s.kappa * (eta_lo / eta_hi) * gap;
  return p;
}

/// mean + sqrt(var) * z with z drawn from the stream; var = 0 returns the
/// mean exactly. The draw never depends on the parameters, so losses built
/// on top stay differentiable under reparametrization.
template <typename Scalar>
VecT<Scalar> sample_gaussian(const GaussianParamsT<Scalar>& p, Rng& rng) {
  if (p.var < Scalar(0))
    throw ConfigError("sample_gaussian: negative variance");
  if (p.var == Scalar(0)) return p.mean;
  const Scalar sd = std::sqrt(p.var);
  VecT<Scalar> out(p.mean.size());
  for (Eigen::Index i = 0; i < out.size(); ++i)
    out[i] = p.mean[i] + sd * Scalar(rng.normal());
  return out;
}

/// Draw from the inference prior N(y0, kappa^2 eta_T I). Using the eta_T
/// factor makes the prior coincide with the t = T marginal for any x0.
template <typename Scalar>
VecT<Scalar> sample_prior(const BasicSchedule<Scalar>& s,
                          const VecT<Scalar>& y0, Rng& rng) {
  GaussianParamsT<Scalar> p;
  p.mean = y0;
  p.var = s.kappa * s.kappa * s.eta_at(s.steps());
  return sample_gaussian(p, rng);
}

enum class ReverseMode { kStochastic, kDeterministic };

/// Multi-step reverse sampler. `steps` is a strictly decreasing subset of
/// 1..T; the chain starts at the prior, refines x0_hat = f(x_t, y0, t) at
/// every listed level, and the last listed level maps directly to x0_hat
/// (the jump to level 0 has zero posterior variance).
inline Vec reverse_sample(const Schedule& s, const Predictor& f,
                          const Vec& y0, const std::vector<int>& steps,
                          ReverseMode mode, Rng& rng) {
  if (steps.empty())
    throw ConfigError("reverse_sample: empty timestep list");
  for (size_t i = 0; i < steps.size(); ++i) {
    if (steps[i] < 1 || steps[i] > s.steps())
      throw ConfigError("reverse_sample: step outside 1..T");
    if (i > 0 && steps[i] >= steps[i - 1])
      throw ConfigError("reverse_sample: steps must be strictly decreasing");
  }

  Vec x = sample_prior(s, y0, rng);
  Vec x0_hat;
  for (size_t i = 0; i < steps.size(); ++i) {
    const int t = steps[i];
    x0_hat = f.predict(x, y0, t);
    const int t_next = (i + 1 < steps.size()) ? steps[i + 1] : 0;
    if (t_next == 0) break;  // final refinement is the output
    auto p = jump_posterior_params(s, x, x0_hat, t, t_next);
    x = mode == ReverseMode::kStochastic ? sample_gaussian(p, rng)
                                         : std::move(p.mean);
  }
  return x0_hat;
}

}  // namespace rsd
