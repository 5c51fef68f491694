#include "rsd/losses.hpp"

#include <cmath>

namespace rsd {

ad::Var teacher_loss(ad::Tape& tape, const Schedule& s, const PredictorNet& f,
                     ad::Var f_params, const std::vector<PairedSample>& batch,
                     Rng& rng, bool weighted) {
  if (batch.empty()) throw ConfigError("teacher_loss: empty batch");
  ad::Var total = tape.constant(0.0);
  const double bw = 1.0 / static_cast<double>(batch.size());
  for (const auto& item : batch) {
    const int t = rng.uniform_int(weighted ? 2 : 1, s.steps());
    auto mp = marginal_params(s, item.x0, item.y0, t);
    Vec x_t = mp.mean + std::sqrt(mp.var) * rng.normal_vec(mp.mean.size());
    auto built = f.build(tape, f_params, tape.constant(x_t),
                         tape.constant(item.y0), t);
    ad::Var sq = ad::mean_sq_diff(built.out, tape.constant(item.x0));
    const double w = weighted ? s.weight_at(t) : 1.0;
    total = ad::add(total, ad::scale(sq, bw * w));
  }
  return total;
}

ad::Var fake_loss(ad::Tape& tape, const Schedule& s, const PredictorNet& fake,
                  ad::Var fake_params, const Vec& z_t, const Vec& y0, int t,
                  const Vec& z0hat_detached, bool weighted) {
  auto built = fake.build(tape, fake_params, tape.constant(z_t),
                          tape.constant(y0), t);
  ad::Var sq = ad::mean_sq_diff(built.out, tape.constant(z0hat_detached));
  return weighted ? ad::scale(sq, s.weight_at(t)) : sq;
}

double vsd_weight(const Schedule& s, int t) {
  const double eta = s.eta_at(t);
  const double w1 = s.weight_at(t) * (1.0 - eta);
  return w1 * (1.0 - eta) / (s.kappa * s.kappa * eta);
}

namespace {

/// Bracket value |f*|^2 - |f_phi|^2 + 2 <f_phi - f*, z0_hat> (all mean
/// normed). `teacher_out`/`fake_out` may be tape subgraphs (full_grad) or
/// constants (detached convention).
ad::Var bracket(ad::Tape&, ad::Var teacher_out, ad::Var fake_out,
                ad::Var z0hat) {
  ad::Var diff = ad::sub(fake_out, teacher_out);
  ad::Var v = ad::sub(ad::mean_sq(teacher_out), ad::mean_sq(fake_out));
  return ad::add(v, ad::scale(ad::mean_dot(diff, z0hat), 2.0));
}

}  // namespace

ad::Var generator_loss_rsd(ad::Tape& tape, const Schedule& s,
                           const Predictor& teacher, const Predictor& fake,
                           ad::Var z0hat, const Vec& zy, int t,
                           const Vec& eps_prime, const GenLossOpts& opts) {
  require_same_size(tape.val(z0hat), zy, "generator_loss_rsd");
  const double eta = s.eta_at(t);
  const double sd = s.kappa * std::sqrt(eta);

  ad::Var teacher_out, fake_out;
  if (opts.full_grad) {
    // z_t carries the generator gradient through both nets.
    const auto* tnet = dynamic_cast<const PredictorNet*>(&teacher);
    const auto* fnet = dynamic_cast<const PredictorNet*>(&fake);
    if (!tnet || !fnet)
      throw ConfigError(
          "generator_loss_rsd: full_grad needs tape-buildable nets");
    Vec shift = eta * zy + sd * eps_prime;
    ad::Var z_t =
        ad::add(ad::scale(z0hat, 1.0 - eta), tape.constant(shift));
    ad::Var tp = tape.constant(tnet->params());
    ad::Var fp = tape.constant(fnet->params());
    teacher_out = tnet->build(tape, tp, z_t, tape.constant(zy), t).out;
    fake_out = fnet->build(tape, fp, z_t, tape.constant(zy), t).out;
  } else {
    Vec z_t = (1.0 - eta) * tape.val(z0hat) + eta * zy + sd * eps_prime;
    teacher_out = tape.constant(teacher.predict(z_t, zy, t));
    fake_out = tape.constant(fake.predict(z_t, zy, t));
  }
  ad::Var b = bracket(tape, teacher_out, fake_out, z0hat);
  double w = 1.0;
  if (opts.weighted)
    w = opts.vsd_weights ? 0.5 * vsd_weight(s, t) : s.weight_at(t);
  return w == 1.0 ? b : ad::scale(b, w);
}

ad::Var generator_loss_vsd(ad::Tape& tape, const Schedule& s,
                           const Predictor& teacher, const Predictor& fake,
                           ad::Var z0hat, const Vec& zy, int t,
                           const Vec& eps_prime, bool weighted) {
  GenLossOpts opts;
  opts.weighted = weighted;
  opts.vsd_weights = true;
  opts.full_grad = false;  // stopgrad on both network outputs, always
  return generator_loss_rsd(tape, s, teacher, fake, z0hat, zy, t, eps_prime,
                            opts);
}

ad::Var gan_disc_loss(ad::Tape& tape, const DiscriminatorHead& disc,
                      ad::Var disc_params, const PredictorNet& fake,
                      ad::Var fake_params, ad::Var z0_real,
                      ad::Var z0hat_detached, const Vec& y0) {
  ad::Var y0c = tape.constant(y0);
  ad::Var feat_real =
      fake.build_features(tape, fake_params, z0_real, y0c, 0);
  ad::Var feat_fake =
      fake.build_features(tape, fake_params, z0hat_detached, y0c, 0);
  ad::Var logit_real = disc.build_logit(tape, disc_params, feat_real);
  ad::Var logit_fake = disc.build_logit(tape, disc_params, feat_fake);
  ad::Var bce_real = ad::bce_with_logits_mean(logit_real, Vec::Ones(1));
  ad::Var bce_fake = ad::bce_with_logits_mean(logit_fake, Vec::Zero(1));
  return ad::add(bce_real, bce_fake);
}

ad::Var gan_gen_loss(ad::Tape& tape, const DiscriminatorHead& disc,
                     ad::Var disc_params, const PredictorNet& fake,
                     ad::Var fake_params, ad::Var z0hat, const Vec& y0) {
  ad::Var y0c = tape.constant(y0);
  ad::Var feat = fake.build_features(tape, fake_params, z0hat, y0c, 0);
  ad::Var logit = disc.build_logit(tape, disc_params, feat);
  // Non-saturating: -log D = softplus(-logit) = BCE against target 1.
  return ad::bce_with_logits_mean(logit, Vec::Ones(1));
}

GanLossPair gan_losses(ad::Tape& tape, const DiscriminatorHead& disc,
                       ad::Var disc_params, const PredictorNet& fake,
                       ad::Var fake_params, ad::Var z0_real, ad::Var z0hat,
                       const Vec& y0) {
  GanLossPair out;
  out.disc_loss = gan_disc_loss(tape, disc, disc_params, fake, fake_params,
                                z0_real, ad::detach(z0hat), y0);
  out.gen_loss =
      gan_gen_loss(tape, disc, disc_params, fake, fake_params, z0hat, y0);
  return out;
}

ad::Var perceptual_loss(ad::Tape& tape, const PerceptualProxy& proxy,
                        ad::Var x0_pixels, ad::Var x0hat_pixels) {
  return proxy.build_distance(tape, x0_pixels, x0hat_pixels);
}

}  // namespace rsd
