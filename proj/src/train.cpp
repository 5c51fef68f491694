#include "rsd/train.hpp"

#include "rsd/diffusion.hpp"

#include <cmath>
#include <sstream>

namespace rsd {

void Adam::update(Vec& params, const Vec& grad) {
  if (m.size() != params.size()) init(params.size());
  ++steps;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(steps));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(steps));
  params -= (lr * (m / bc1).array() / ((v / bc2).array().sqrt() + eps))
                .matrix();
}

namespace {

std::vector<PairedSample> encode_dataset(const Dataset& data,
                                         const LatentCodec& codec) {
  std::vector<PairedSample> out;
  out.reserve(data.samples.size());
  for (const auto& s : data.samples) out.push_back(encode_pair(codec, s));
  return out;
}

const PairedSample& pick(const std::vector<PairedSample>& items, Rng& rng) {
  return items[rng.uniform_int(0, static_cast<int>(items.size()) - 1)];
}

void check_finite(double v, const char* name, long step) {
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << "non-finite loss " << name << " = " << v << " at step " << step;
    throw TrainingError(os.str());
  }
}

}  // namespace

TeacherResult train_teacher(const TeacherTrainConfig& cfg, const Schedule& s,
                            const ArchSpec& arch, const Dataset& data,
                            const LatentCodec& codec, Adam* resume_opt,
                            long start_step,
                            std::optional<PredictorNet> resume_net) {
  if (cfg.steps < 1 || cfg.batch_size < 1)
    throw ConfigError("train_teacher: steps and batch_size must be >= 1");
  if (!(cfg.lr > 0)) throw ConfigError("train_teacher: lr must be > 0");
  if (data.samples.empty()) throw ConfigError("train_teacher: empty dataset");

  const auto encoded = encode_dataset(data, codec);
  PredictorNet net = resume_net ? std::move(*resume_net)
                                : PredictorNet(arch, cfg.seed);
  Adam local;
  Adam& opt = resume_opt ? *resume_opt : local;
  opt.lr = cfg.lr;
  opt.beta1 = cfg.beta1;
  opt.beta2 = cfg.beta2;

  Rng rng(Rng::mix(cfg.seed, 0x7e47 + static_cast<std::uint64_t>(start_step)));
  TeacherResult res{std::move(net), {}};
  for (long it = start_step + 1; it <= start_step + cfg.steps; ++it) {
    std::vector<PairedSample> batch;
    for (int b = 0; b < cfg.batch_size; ++b) batch.push_back(pick(encoded, rng));
    ad::Tape tape;
    ad::Var p = tape.leaf(res.net.params());
    ad::Var loss =
        teacher_loss(tape, s, res.net, p, batch, rng, cfg.weighted);
    tape.backward(loss);
    const double lv = tape.scalar(loss);
    check_finite(lv, "teacher", it);
    opt.update(res.net.params(), tape.grad(p));
    res.log.push_back({it, lv});
  }
  return res;
}

void check_distill_config(const DistillConfig& cfg, int T) {
  if (cfg.timesteps.empty())
    throw ConfigError("distill: timestep subset must be nonempty");
  if (cfg.timesteps.back() != T)
    throw ConfigError("distill: t_N must equal T");
  for (size_t i = 0; i < cfg.timesteps.size(); ++i) {
    if (cfg.timesteps[i] < 1 || cfg.timesteps[i] > T)
      throw ConfigError("distill: timestep outside 1..T");
    if (i > 0 && cfg.timesteps[i] <= cfg.timesteps[i - 1])
      throw ConfigError("distill: timesteps must be strictly increasing");
  }
  if (cfg.K < 1) throw ConfigError("distill: K must be >= 1");
  if (cfg.lambda1 < 0 || cfg.lambda2 < 0)
    throw ConfigError("distill: lambdas must be >= 0");
}

TrainingTuple sample_training_tuple(const Schedule& s,
                                    const PredictorNet& gen,
                                    const LatentCodec& codec,
                                    const PairedSample& pair,
                                    const std::vector<int>& timesteps,
                                    Rng& rng, bool weighted) {
  TrainingTuple tup;
  PairedSample z = encode_pair(codec, pair);
  tup.z0 = std::move(z.x0);
  tup.zy = std::move(z.y0);
  tup.t_n =
      timesteps[rng.uniform_int(0, static_cast<int>(timesteps.size()) - 1)];
  auto mp = marginal_params(s, tup.z0, tup.zy, tup.t_n);
  tup.z_tn = mp.mean + std::sqrt(mp.var) * rng.normal_vec(mp.mean.size());
  tup.eps = rng.normal_vec(tup.z0.size());
  tup.z0hat = gen.generate(tup.z_tn, tup.t_n, tup.zy, tup.eps);
  tup.t = rng.uniform_int(weighted ? 2 : 1, s.steps());
  tup.eps_prime = rng.normal_vec(tup.z0.size());
  const double eta = s.eta_at(tup.t);
  tup.z_t = (1.0 - eta) * tup.z0hat + eta * tup.zy +
            s.kappa * std::sqrt(eta) * tup.eps_prime;
  return tup;
}

DistillState init_distill_state(const DistillConfig& cfg,
                                const PredictorNet& teacher) {
  PredictorNet gen = promote_to_generator(teacher);
  PredictorNet fake = teacher;  // same weights, trained on generator data
  DiscriminatorHead disc(fake.feature_shape(), fake.spec().kind,
                         cfg.disc_seed);
  DistillState st(std::move(gen), std::move(fake), std::move(disc));
  st.opt_gen.lr = st.opt_fake.lr = st.opt_disc.lr = cfg.lr;
  st.opt_gen.beta1 = st.opt_fake.beta1 = st.opt_disc.beta1 = cfg.beta1;
  st.opt_gen.beta2 = st.opt_fake.beta2 = st.opt_disc.beta2 = cfg.beta2;
  st.ema_params = st.generator.params();
  return st;
}

DistillLogRow distill_step(DistillState& state, const DistillConfig& cfg,
                           const Schedule& s, const PredictorNet& teacher,
                           const Dataset& data, const LatentCodec& codec,
                           const PerceptualProxy& proxy, Rng& rng) {
  const bool use_gan = cfg.lambda2 > 0.0;
  const bool use_perc = cfg.lambda1 > 0.0;
  const double bw = 1.0 / cfg.batch_size;
  DistillLogRow row{};

  // Fake (and discriminator) phase.
  for (int k = 0; k < cfg.K; ++k) {
    ad::Tape tape;
    ad::Var fp = tape.leaf(state.fake.params());
    ad::Var dp = tape.leaf(state.disc.params());
    ad::Var l_fake = tape.constant(0.0);
    ad::Var l_gan = tape.constant(0.0);
    for (int b = 0; b < cfg.batch_size; ++b) {
      auto tup = sample_training_tuple(s, state.generator, codec,
                                       pick(data.samples, rng),
                                       cfg.timesteps, rng, cfg.weighted);
      l_fake = ad::add(
          l_fake, ad::scale(fake_loss(tape, s, state.fake, fp, tup.z_t,
                                      tup.zy, tup.t, tup.z0hat,
                                      cfg.weighted),
                            bw));
      if (use_gan)
        l_gan = ad::add(
            l_gan,
            ad::scale(gan_disc_loss(tape, state.disc, dp, state.fake, fp,
                                    tape.constant(tup.z0),
                                    tape.constant(tup.z0hat), tup.zy),
                      bw));
    }
    ad::Var total = use_gan
                        ? ad::add(l_fake, ad::scale(l_gan, cfg.lambda2))
                        : l_fake;
    tape.backward(total);
    row.l_fake = tape.scalar(l_fake);
    row.l_gan_d = use_gan ? tape.scalar(l_gan) : 0.0;
    check_finite(row.l_fake, "fake", state.gen_steps);
    state.opt_fake.update(state.fake.params(), tape.grad(fp));
    ++state.fake_steps;
    if (use_gan) {
      check_finite(row.l_gan_d, "gan_disc", state.gen_steps);
      tape.backward(l_gan);  // unscaled path for the head itself
      state.opt_disc.update(state.disc.params(), tape.grad(dp));
    }
  }

  // Generator phase.
  {
    ad::Tape tape;
    ad::Var gp = tape.leaf(state.generator.params());
    ad::Var l_theta = tape.constant(0.0);
    ad::Var l_perc = tape.constant(0.0);
    ad::Var l_gan = tape.constant(0.0);
    GenLossOpts opts;
    opts.weighted = cfg.weighted;
    opts.full_grad = cfg.full_grad;

    for (int b = 0; b < cfg.batch_size; ++b) {
      const PairedSample& pix = pick(data.samples, rng);
      PairedSample z = encode_pair(codec, pix);
      const int t_n = cfg.timesteps[rng.uniform_int(
          0, static_cast<int>(cfg.timesteps.size()) - 1)];
      auto mp = marginal_params(s, z.x0, z.y0, t_n);
      Vec z_tn = mp.mean + std::sqrt(mp.var) * rng.normal_vec(mp.mean.size());
      Vec eps = rng.normal_vec(z.x0.size());
      auto built =
          state.generator.build(tape, gp, tape.constant(z_tn),
                                tape.constant(z.y0), t_n,
                                tape.constant(eps));
      const int t = rng.uniform_int(cfg.weighted ? 2 : 1, s.steps());
      Vec eps_prime = rng.normal_vec(z.x0.size());
      l_theta = ad::add(
          l_theta,
          ad::scale(generator_loss_rsd(tape, s, teacher, state.fake,
                                       built.out, z.y0, t, eps_prime, opts),
                    bw));
      if (use_perc) {
        // One-step path from the prior, decoded back to pixel space.
        Vec z_T = z.y0 + s.kappa * std::sqrt(s.eta_at(s.steps())) *
                             rng.normal_vec(z.y0.size());
        auto one = state.generator.build(tape, gp, tape.constant(z_T),
                                         tape.constant(z.y0), s.steps(),
                                         tape.constant(eps));
        ad::Var x0hat_pix = codec.build_decode(tape, one.out);
        l_perc = ad::add(
            l_perc, ad::scale(perceptual_loss(tape, proxy,
                                              tape.constant(pix.x0),
                                              x0hat_pix),
                              bw));
      }
      if (use_gan)
        l_gan = ad::add(
            l_gan,
            ad::scale(gan_gen_loss(tape, state.disc,
                                   tape.constant(state.disc.params()),
                                   state.fake,
                                   tape.constant(state.fake.params()),
                                   built.out, z.y0),
                      bw));
    }

    row.l_theta = tape.scalar(l_theta);
    check_finite(row.l_theta, "theta", state.gen_steps);
    ad::Var l_theta_used = l_theta;
    if (cfg.loss_norm) {
      // Running mean of |L_theta| with a floor: near the fixed point the
      // raw magnitude approaches zero and unbounded normalization would
      // amplify estimator noise instead of stabilizing the update.
      const double mag = std::abs(row.l_theta);
      state.loss_scale = state.loss_scale == 0.0
                             ? std::max(mag, 1.0)
                             : 0.99 * state.loss_scale + 0.01 * mag;
      l_theta_used =
          ad::scale(l_theta, 1.0 / std::max(state.loss_scale, 1e-2));
    }
    ad::Var total = l_theta_used;
    if (use_perc) total = ad::add(total, ad::scale(l_perc, cfg.lambda1));
    if (use_gan) total = ad::add(total, ad::scale(l_gan, cfg.lambda2));
    tape.backward(total);
    row.l_perc = use_perc ? tape.scalar(l_perc) : 0.0;
    row.l_gan_g = use_gan ? tape.scalar(l_gan) : 0.0;
    check_finite(row.l_perc, "perc", state.gen_steps);
    check_finite(row.l_gan_g, "gan_gen", state.gen_steps);
    state.opt_gen.update(state.generator.params(), tape.grad(gp));
    ++state.gen_steps;
    state.ema_params = cfg.ema_rate * state.ema_params +
                       (1.0 - cfg.ema_rate) * state.generator.params();
  }

  row.step = state.gen_steps;
  return row;
}

DistillResult distill(const DistillConfig& cfg, const Schedule& s,
                      const PredictorNet& teacher, const Dataset& data,
                      const LatentCodec& codec, const PerceptualProxy& proxy,
                      const DistillCallback& on_checkpoint,
                      int checkpoint_every, DistillState* resume_state) {
  check_distill_config(cfg, s.steps());
  if (data.samples.empty()) throw ConfigError("distill: empty dataset");

  DistillState local = resume_state
                           ? std::move(*resume_state)
                           : init_distill_state(cfg, teacher);
  const long start = local.gen_steps;
  Rng rng(Rng::mix(cfg.seed, 0xd123 + static_cast<std::uint64_t>(start)));

  DistillResult res{local.generator, local.generator, local.fake, local.disc,
                    {}};
  for (long it = start + 1; it <= start + cfg.steps; ++it) {
    auto row =
        distill_step(local, cfg, s, teacher, data, codec, proxy, rng);
    res.log.push_back(row);
    if (on_checkpoint && checkpoint_every > 0 &&
        (it % checkpoint_every == 0 || it == start + cfg.steps))
      on_checkpoint(it, local);
  }
  res.generator = local.generator;
  res.ema_generator = local.generator;
  res.ema_generator.params() = local.ema_params;
  res.fake = local.fake;
  res.disc = local.disc;
  if (resume_state) *resume_state = std::move(local);
  return res;
}

VsdResult distill_vsd(const VsdConfig& cfg, const Schedule& s,
                      const PredictorNet& teacher, const Dataset& data,
                      const LatentCodec& codec) {
  if (cfg.K < 1 || cfg.steps < 1 || cfg.batch_size < 1)
    throw ConfigError("distill_vsd: bad configuration");
  if (data.samples.empty()) throw ConfigError("distill_vsd: empty dataset");

  PredictorNet gen = promote_to_generator(teacher);
  PredictorNet fake = teacher;
  Adam opt_gen, opt_fake;
  opt_gen.lr = opt_fake.lr = cfg.lr;
  opt_gen.beta1 = opt_fake.beta1 = cfg.beta1;
  opt_gen.beta2 = opt_fake.beta2 = cfg.beta2;
  Vec ema = gen.params();

  Rng rng(Rng::mix(cfg.seed, 0x5dda));
  const double bw = 1.0 / cfg.batch_size;
  const int T = s.steps();
  const double prior_sd = s.kappa * std::sqrt(s.eta_at(T));

  auto sample_vsd = [&](Vec* zy, Vec* z0hat, int* t, Vec* eps_prime,
                        Vec* z_t) {
    const PairedSample& pix = pick(data.samples, rng);
    PairedSample z = encode_pair(codec, pix);
    *zy = std::move(z.y0);
    Vec z_T = *zy + prior_sd * rng.normal_vec(zy->size());
    Vec eps = rng.normal_vec(zy->size());
    *z0hat = gen.generate(z_T, T, *zy, eps);
    *t = rng.uniform_int(cfg.weighted ? 2 : 1, T);
    *eps_prime = rng.normal_vec(zy->size());
    const double eta = s.eta_at(*t);
    *z_t = (1.0 - eta) * *z0hat + eta * *zy +
           s.kappa * std::sqrt(eta) * *eps_prime;
  };

  VsdResult res{gen, gen, fake, {}};
  for (long it = 1; it <= cfg.steps; ++it) {
    VsdLogRow row{it, 0.0, 0.0};
    for (int k = 0; k < cfg.K; ++k) {
      ad::Tape tape;
      ad::Var fp = tape.leaf(fake.params());
      ad::Var total = tape.constant(0.0);
      for (int b = 0; b < cfg.batch_size; ++b) {
        Vec zy, z0hat, eps_prime, z_t;
        int t;
        sample_vsd(&zy, &z0hat, &t, &eps_prime, &z_t);
        total = ad::add(total,
                        ad::scale(fake_loss(tape, s, fake, fp, z_t, zy, t,
                                            z0hat, cfg.weighted),
                                  bw));
      }
      tape.backward(total);
      row.l_fake = tape.scalar(total);
      check_finite(row.l_fake, "vsd_fake", it);
      opt_fake.update(fake.params(), tape.grad(fp));
    }
    {
      ad::Tape tape;
      ad::Var gp = tape.leaf(gen.params());
      ad::Var total = tape.constant(0.0);
      for (int b = 0; b < cfg.batch_size; ++b) {
        const PairedSample& pix = pick(data.samples, rng);
        PairedSample z = encode_pair(codec, pix);
        Vec z_T = z.y0 + prior_sd * rng.normal_vec(z.y0.size());
        Vec eps = rng.normal_vec(z.y0.size());
        auto built = gen.build(tape, gp, tape.constant(z_T),
                               tape.constant(z.y0), T, tape.constant(eps));
        const int t = rng.uniform_int(cfg.weighted ? 2 : 1, T);
        Vec eps_prime = rng.normal_vec(z.y0.size());
        total = ad::add(
            total, ad::scale(generator_loss_vsd(tape, s, teacher, fake,
                                                built.out, z.y0, t,
                                                eps_prime, cfg.weighted),
                             bw));
      }
      tape.backward(total);
      row.l_theta = tape.scalar(total);
      check_finite(row.l_theta, "vsd_theta", it);
      opt_gen.update(gen.params(), tape.grad(gp));
      ema = cfg.ema_rate * ema + (1.0 - cfg.ema_rate) * gen.params();
    }
    res.log.push_back(row);
  }
  res.generator = gen;
  res.ema_generator = gen;
  res.ema_generator.params() = ema;
  res.fake = fake;
  return res;
}

}  // namespace rsd
