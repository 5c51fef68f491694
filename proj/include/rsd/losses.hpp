#pragma once

#include "rsd/autodiff.hpp"
#include "rsd/diffusion.hpp"
#include "rsd/nets.hpp"
#include "rsd/schedule.hpp"

#include <vector>

namespace rsd {

/// Shared convention for every squared norm below: mean over elements, so
/// loss scales are comparable across data sizes.

/// Denoising regression loss for one batch: per item draw t uniformly
/// (2..T when weighted, else 1..T), form x_t from the shifted marginal and
/// regress the prediction onto x0. Returns the batch-mean scalar.
ad::Var teacher_loss(ad::Tape& tape, const Schedule& s, const PredictorNet& f,
                     ad::Var f_params, const std::vector<PairedSample>& batch,
                     Rng& rng, bool weighted);

/// w_t * mean((fake(z_t, y0, t) - z0_hat)^2); z0_hat enters as a constant.
ad::Var fake_loss(ad::Tape& tape, const Schedule& s, const PredictorNet& fake,
                  ad::Var fake_params, const Vec& z_t, const Vec& y0, int t,
                  const Vec& z0hat_detached, bool weighted);

struct GenLossOpts {
  bool weighted = false;   // apply w_t (t >= 2 only)
  bool full_grad = false;  // also backprop through z_t into z0_hat
  bool vsd_weights = false;  // use w_t'' = w_t (1-eta_t)^2 / (kappa^2 eta_t)
};

/// Tractable distillation surrogate: the negated inner bracket
///   -( -|f*|^2 + |f_phi|^2 - 2 <f_phi - f*, z0_hat> )
/// with teacher and fake outputs detached by default, so only the inner
/// product propagates gradient to the generator through z0_hat. z_t is
/// formed as (1-eta_t) z0_hat + eta_t zy + kappa sqrt(eta_t) eps'. With
/// full_grad, z_t lives on the tape and gradients additionally flow
/// through both network evaluations (teacher and fake must then be
/// PredictorNet instances).
ad::Var generator_loss_rsd(ad::Tape& tape, const Schedule& s,
                           const Predictor& teacher, const Predictor& fake,
                           ad::Var z0hat, const Vec& zy, int t,
                           const Vec& eps_prime,
                           const GenLossOpts& opts = {});

/// The score-distillation surrogate: same detached bracket; with weights
/// enabled it is scaled by w_t''/2 so its gradient is exactly
/// -w_t'' * mean((f* - f_phi) * d z0_hat/d theta).
ad::Var generator_loss_vsd(ad::Tape& tape, const Schedule& s,
                           const Predictor& teacher, const Predictor& fake,
                           ad::Var z0hat, const Vec& zy, int t,
                           const Vec& eps_prime, bool weighted = false);

/// Derived VSD weight w_t'' = w_t (1-eta_t)^2 / (kappa^2 eta_t), t >= 2.
double vsd_weight(const Schedule& s, int t);

struct GanLossPair {
  ad::Var disc_loss;  // BCE separating real z0 from z0_hat features
  ad::Var gen_loss;   // non-saturating -log D(z0_hat)
};

/// Features are extracted by the fake model's encoder at timestep 0. The
/// discriminator side sees z0_hat detached; the generator side keeps the
/// gradient path through the encoder into z0_hat.
GanLossPair gan_losses(ad::Tape& tape, const DiscriminatorHead& disc,
                       ad::Var disc_params, const PredictorNet& fake,
                       ad::Var fake_params, ad::Var z0_real, ad::Var z0hat,
                       const Vec& y0);

ad::Var gan_disc_loss(ad::Tape& tape, const DiscriminatorHead& disc,
                      ad::Var disc_params, const PredictorNet& fake,
                      ad::Var fake_params, ad::Var z0_real,
                      ad::Var z0hat_detached, const Vec& y0);

ad::Var gan_gen_loss(ad::Tape& tape, const DiscriminatorHead& disc,
                     ad::Var disc_params, const PredictorNet& fake,
                     ad::Var fake_params, ad::Var z0hat, const Vec& y0);

/// Frozen random-feature distance in pixel space.
ad::Var perceptual_loss(ad::Tape& tape, const PerceptualProxy& proxy,
                        ad::Var x0_pixels, ad::Var x0hat_pixels);

}  // namespace rsd
