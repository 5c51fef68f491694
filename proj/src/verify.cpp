#include "rsd/verify.hpp"

#include "rsd/diffusion.hpp"
#include "rsd/losses.hpp"
#include "rsd/nets.hpp"
#include "rsd/oracles.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace rsd::verify {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

CheckResult make_result(const std::string& name, double err, double tol,
                        Clock::time_point t0) {
  return {name, err, tol, err <= tol, seconds_since(t0)};
}

Schedule random_schedule(Rng& rng, int min_T = 2, int max_T = 20) {
  const int T = min_T + rng.uniform_int(0, max_T - min_T);
  return build_schedule<double>(
      T, rng.uniform_in(1e-4, 0.05), rng.uniform_in(0.95, 1.0),
      rng.uniform_in(0.1, 3.0),
      rng.uniform() < 0.5 ? ScheduleShape::kLinear
                          : ScheduleShape::kLogLinear);
}

ArchSpec scalar_mlp(int hidden = 8) {
  ArchSpec a;
  a.kind = NetKind::kMlp;
  a.data = Shape{1, 1, 1};
  a.base_width = hidden;
  a.temb_dim = 4;
  return a;
}

}  // namespace

FdReport fd_check(const std::function<double(const Vec&)>& loss,
                  const Vec& params, const Vec& grad, double step,
                  int max_coords) {
  FdReport rep;
  const int n = static_cast<int>(params.size());
  const int stride = std::max(1, n / max_coords);
  Vec p = params;
  for (int i = 0; i < n; i += stride) {
    const double keep = p[i];
    p[i] = keep + step;
    const double up = loss(p);
    p[i] = keep - step;
    const double dn = loss(p);
    p[i] = keep;
    const double fd = (up - dn) / (2.0 * step);
    const double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-6});
    rep.max_rel_err =
        std::max(rep.max_rel_err, std::abs(fd - grad[i]) / denom);
    ++rep.checked;
  }
  return rep;
}

std::vector<CheckResult> kernel_identity_checks(std::uint64_t seed) {
  std::vector<CheckResult> out;
  Rng rng(seed);

  {  // Chapman-Kolmogorov: composed transitions equal the marginal
    auto t0 = Clock::now();
    double max_err = 0;
    for (int rep = 0; rep < 1000; ++rep) {
      Schedule s = random_schedule(rng);
      const double x0 = rng.normal(), y0 = rng.normal();
      const int tp = 1 + rng.uniform_int(0, s.steps() - 1);
      double mean = x0, var = 0;
      for (int t = 1; t <= tp; ++t) {
        mean += s.alpha_at(t) * (y0 - x0);
        var += s.kappa * s.kappa * s.alpha_at(t);
      }
      const Vec x0v = Vec::Constant(1, x0), y0v = Vec::Constant(1, y0);
      auto m = marginal_params(s, x0v, y0v, tp);
      max_err = std::max({max_err, std::abs(mean - m.mean[0]),
                          std::abs(var - m.var)});
    }
    out.push_back(make_result("chapman_kolmogorov", max_err, 1e-12, t0));
  }

  {  // Bayes identity over scalar log-densities
    auto t0 = Clock::now();
    double max_err = 0;
    for (int rep = 0; rep < 1000; ++rep) {
      Schedule s = random_schedule(rng);
      const int t = rng.uniform_int(2, s.steps());
      const Vec x0 = Vec::Constant(1, rng.normal());
      const Vec y0 = Vec::Constant(1, rng.normal());
      const Vec xt = Vec::Constant(1, rng.normal());
      const Vec xp = Vec::Constant(1, rng.normal());
      auto post = posterior_params(s, xt, x0, t);
      auto trans = transition_params(s, xp, x0, y0, t);
      auto mp = marginal_params(s, x0, y0, t - 1);
      auto mt = marginal_params(s, x0, y0, t);
      const double lhs = oracles::scalar_log_density(post, xp[0]);
      const double rhs = oracles::scalar_log_density(trans, xt[0]) +
                         oracles::scalar_log_density(mp, xp[0]) -
                         oracles::scalar_log_density(mt, xt[0]);
      max_err = std::max(max_err, std::abs(lhs - rhs));
    }
    out.push_back(make_result("bayes_identity", max_err, 1e-8, t0));
  }

  {  // loss weight equals the independently coded KL coefficient
    auto t0 = Clock::now();
    double max_rel = 0;
    for (int rep = 0; rep < 1000; ++rep) {
      Schedule s = random_schedule(rng);
      const int t = rng.uniform_int(2, s.steps());
      const double a = oracles::kl_step_coefficient(s, t);
      const double b = weight_of(s, t);
      max_rel = std::max(max_rel, std::abs(a - b) / std::abs(b));
    }
    out.push_back(make_result("weight_kl_equality", max_rel, 1e-10, t0));
  }

  {  // reparametrized marginal draw has the marginal's moments
    auto t0 = Clock::now();
    double max_err = 0;
    for (int rep = 0; rep < 1000; ++rep) {
      Schedule s = random_schedule(rng);
      const int t = rng.uniform_int(1, s.steps());
      const Vec z0 = Vec::Constant(1, rng.normal());
      const Vec zy = Vec::Constant(1, rng.normal());
      auto mp = marginal_params(s, z0, zy, t);
      const double eta = s.eta_at(t);
      const double mean = (1 - eta) * z0[0] + eta * zy[0];
      const double sd = s.kappa * std::sqrt(eta);
      max_err = std::max({max_err, std::abs(mean - mp.mean[0]),
                          std::abs(sd * sd - mp.var)});
    }
    out.push_back(
        make_result("marginal_reparametrization", max_err, 1e-12, t0));
  }

  {  // perfect predictor + deterministic reverse is the identity
    auto t0 = Clock::now();
    class Perfect : public Predictor {
     public:
      explicit Perfect(Vec v) : v_(std::move(v)) {}
      Vec predict(const Vec&, const Vec&, int) const override { return v_; }
      Vec v_;
    };
    double max_err = 0;
    for (int rep = 0; rep < 50; ++rep) {
      Schedule s = random_schedule(rng, 4, 16);
      Vec x0 = rng.normal_vec(3), y0 = rng.normal_vec(3);
      Perfect oracle(x0);
      std::vector<int> steps;
      for (int t = s.steps(); t >= 1; t -= 1 + rng.uniform_int(0, 2))
        steps.push_back(t);
      Vec got = reverse_sample(s, oracle, y0, steps,
                               ReverseMode::kDeterministic, rng);
      max_err = std::max(max_err, (got - x0).cwiseAbs().maxCoeff());
    }
    out.push_back(
        make_result("perfect_predictor_identity", max_err, 1e-12, t0));
  }

  return out;
}

namespace {

oracles::DiscreteProblem check_problem() {
  oracles::DiscreteProblem p;
  p.schedule =
      build_schedule<double>(4, 0.03, 0.97, 0.9, ScheduleShape::kLinear);
  p.conds.push_back({-0.4, {-0.9, -0.1, 0.4}, {0.5, 0.3, 0.2}});
  p.conds.push_back({0.5, {0.1, 0.8}, {0.6, 0.4}});
  return p;
}

class AffinePredictor : public Predictor {
 public:
  AffinePredictor(double a, double b) : a_(a), b_(b) {}
  Vec predict(const Vec& x, const Vec&, int) const override {
    return a_ * x + Vec::Constant(x.size(), b_);
  }

 private:
  double a_, b_;
};

double expected_surrogate(const oracles::DiscreteProblem& p,
                          const Predictor& teacher, const Predictor& fake,
                          bool weighted, int order) {
  const Schedule& s = p.schedule;
  auto gh = oracles::gauss_hermite(order);
  const double wnorm = 1.0 / std::sqrt(M_PI);
  double total = 0.0;
  const double cw = 1.0 / p.conds.size();
  for (const auto& c : p.conds) {
    Vec zy = Vec::Constant(1, c.y0);
    for (int t = weighted ? 2 : 1; t <= s.steps(); ++t) {
      GenLossOpts opts;
      opts.weighted = weighted;
      for (size_t i = 0; i < c.atoms.size(); ++i)
        for (int k = 0; k < gh.nodes.size(); ++k) {
          Vec eps_p = Vec::Constant(1, std::sqrt(2.0) * gh.nodes[k]);
          ad::Tape tape;
          ad::Var z0hat = tape.constant(Vec::Constant(1, c.atoms[i]));
          ad::Var l = generator_loss_rsd(tape, s, teacher, fake, z0hat, zy,
                                         t, eps_p, opts);
          total += cw * c.probs[i] * gh.weights[k] * wnorm * tape.scalar(l);
        }
    }
  }
  return total;
}

}  // namespace

std::vector<CheckResult> prop1_checks(std::uint64_t) {
  std::vector<CheckResult> out;
  auto p = check_problem();
  AffinePredictor teacher(0.6, 0.05);
  oracles::TabularOraclePredictor optimal_fake(p);

  {  // surrogate at the optimal fake == brute-force objective
    auto t0 = Clock::now();
    double max_err = 0;
    for (bool weighted : {false, true}) {
      const double lhs =
          expected_surrogate(p, teacher, optimal_fake, weighted, 128);
      const double rhs = oracles::bruteforce_L_theta(p, teacher, weighted);
      max_err = std::max(max_err, std::abs(lhs - rhs));
    }
    out.push_back(make_result("prop1_surrogate_equality", max_err, 1e-6, t0));
  }

  {  // regression on the sampled objective converges to the conditional mean
    auto t0 = Clock::now();
    const Schedule& s = p.schedule;
    auto gh = oracles::gauss_hermite(24);
    double max_gap = 0, max_argmin_gap = 0;
    for (size_t ci = 0; ci < p.conds.size(); ++ci) {
      const auto& c = p.conds[ci];
      for (int t = 1; t <= s.steps(); ++t) {
        const double eta = s.eta_at(t);
        const double sd = s.kappa * std::sqrt(eta);
        for (int k = 0; k < gh.nodes.size(); ++k) {
          const double mu0 = (1 - eta) * c.atoms[0] + eta * c.y0;
          const double x_t = mu0 + std::sqrt(2.0) * sd * gh.nodes[k];
          std::vector<double> w(c.atoms.size());
          double wsum = 0;
          for (size_t i = 0; i < c.atoms.size(); ++i) {
            const double mu = (1 - eta) * c.atoms[i] + eta * c.y0;
            w[i] = c.probs[i] *
                   std::exp(-0.5 * (x_t - mu) * (x_t - mu) / (sd * sd));
            wsum += w[i];
          }
          if (wsum < 1e-12) continue;
          // gradient descent on E(v - z0hat)^2 and on the bracket form
          double v1 = 0, v2 = 0;
          for (int it = 0; it < 4000; ++it) {
            double g1 = 0, g2 = 0;
            for (size_t i = 0; i < c.atoms.size(); ++i) {
              g1 += 2 * w[i] / wsum * (v1 - c.atoms[i]);
              g2 += w[i] / wsum * (2 * v2 - 2 * c.atoms[i]);
            }
            v1 -= 0.25 * g1;
            v2 -= 0.25 * g2;
          }
          const double cm = oracles::discrete_conditional_mean(
              p, static_cast<int>(ci), x_t, t);
          max_gap = std::max(max_gap, std::abs(v1 - cm));
          max_argmin_gap = std::max(max_argmin_gap, std::abs(v1 - v2));
        }
      }
    }
    out.push_back(make_result("fake_regression_to_conditional_mean",
                              max_gap, 1e-4, t0));
    out.push_back(make_result("fake_bracket_argmin_equality",
                              max_argmin_gap, 1e-6, t0));
  }

  return out;
}

std::vector<CheckResult> kl_decomposition_checks(std::uint64_t seed) {
  std::vector<CheckResult> out;
  Rng rng(seed);
  auto t0 = Clock::now();
  double max_err = 0;
  for (int rep = 0; rep < 12; ++rep) {
    const int T = 3 + rng.uniform_int(0, 1);
    auto s = build_schedule<double>(T, rng.uniform_in(0.01, 0.05),
                                    rng.uniform_in(0.95, 0.999),
                                    rng.uniform_in(0.4, 1.4),
                                    ScheduleShape::kLogLinear);
    AffinePredictor fp(rng.uniform_in(0.2, 0.9), rng.uniform_in(-0.4, 0.4));
    AffinePredictor fq(rng.uniform_in(0.2, 0.9), rng.uniform_in(-0.4, 0.4));
    auto r = oracles::kl_joint_decomposition_check(s, fp, fq, rng.normal(),
                                                   20);
    max_err = std::max({max_err, r.abs_diff, r.prior_kl});
  }
  out.push_back(make_result("kl_joint_decomposition", max_err, 1e-6, t0));
  return out;
}

std::vector<CheckResult> vsd_gradient_checks(std::uint64_t seed) {
  std::vector<CheckResult> out;
  Rng rng(seed);

  {  // stop-grad convention: rsd and vsd gradients coincide
    auto t0 = Clock::now();
    double max_err = 0;
    for (int rep = 0; rep < 100; ++rep) {
      auto s = random_schedule(rng, 4, 9);
      PredictorNet teacher(scalar_mlp(), seed + 10 * rep);
      PredictorNet fake(scalar_mlp(), seed + 10 * rep + 1);
      PredictorNet gen = promote_to_generator(teacher);
      Vec zy = rng.normal_vec(1), z_tn = rng.normal_vec(1),
          eps = rng.normal_vec(1), eps_p = rng.normal_vec(1);
      const int t = rng.uniform_int(2, s.steps());
      auto grad_of = [&](bool vsd) {
        ad::Tape tape;
        ad::Var gp = tape.leaf(gen.params());
        auto b = gen.build(tape, gp, tape.constant(z_tn), tape.constant(zy),
                           s.steps(), tape.constant(eps));
        ad::Var l = vsd ? generator_loss_vsd(tape, s, teacher, fake, b.out,
                                             zy, t, eps_p, false)
                        : generator_loss_rsd(tape, s, teacher, fake, b.out,
                                             zy, t, eps_p);
        tape.backward(l);
        return Vec(tape.grad(gp));
      };
      max_err = std::max(
          max_err, (grad_of(false) - grad_of(true)).cwiseAbs().maxCoeff());
    }
    out.push_back(make_result("vsd_rsd_stopgrad_equality", max_err, 1e-6, t0));
  }

  {  // full-grad decomposition with the 2 alpha_t constant
    auto t0 = Clock::now();
    double worst = 0;
    for (int rep = 0; rep < 100; ++rep) {
      const int T = 4 + rng.uniform_int(0, 4);
      auto pre = build_schedule<double>(T, rng.uniform_in(0.005, 0.05),
                                        rng.uniform_in(0.95, 0.999), 1.0,
                                        ScheduleShape::kLogLinear);
      const int t = rng.uniform_int(2, T);
      // the published constant 2 alpha_t is exact when
      // kappa^2 = alpha_t (1 - eta_t)^2 / eta_t
      Schedule s = pre;
      s.kappa = std::sqrt(pre.alpha_at(t) *
                          std::pow(1 - pre.eta_at(t), 2) / pre.eta_at(t));

      PredictorNet teacher(scalar_mlp(), seed + 1000 + rep);
      PredictorNet fake(scalar_mlp(), seed + 2000 + rep);
      Rng prng(seed + 3000 + rep);
      for (int i = 0; i < fake.params().size(); ++i)
        fake.params()[i] += 0.05 * prng.normal();
      PredictorNet gen = promote_to_generator(teacher);
      Vec zy = rng.normal_vec(1), z_tn = rng.normal_vec(1),
          eps = rng.normal_vec(1), eps_p = rng.normal_vec(1);

      auto grad_of = [&](const GenLossOpts& opts, bool vsd) {
        ad::Tape tape;
        ad::Var gp = tape.leaf(gen.params());
        auto b = gen.build(tape, gp, tape.constant(z_tn), tape.constant(zy),
                           T, tape.constant(eps));
        ad::Var l = vsd ? generator_loss_vsd(tape, s, teacher, fake, b.out,
                                             zy, t, eps_p, true)
                        : generator_loss_rsd(tape, s, teacher, fake, b.out,
                                             zy, t, eps_p, opts);
        tape.backward(l);
        return Vec(tape.grad(gp));
      };
      Vec g_full = grad_of({true, true, false}, false);
      Vec g_z0 = grad_of({true, false, false}, false);
      Vec g_extra = g_full - g_z0;
      Vec g_vsd = grad_of({true, false, false}, true);
      Vec residual = g_full - 2.0 * s.alpha_at(t) * g_vsd - g_extra;
      const double denom = std::max(
          {g_full.cwiseAbs().maxCoeff(), g_vsd.cwiseAbs().maxCoeff(), 1e-9});
      worst = std::max(worst, residual.cwiseAbs().maxCoeff() / denom);
    }
    out.push_back(make_result("vsd_fullgrad_relation", worst, 1e-5, t0));
  }

  return out;
}

std::vector<CheckResult> loss_gradient_checks(std::uint64_t seed) {
  std::vector<CheckResult> out;
  Rng rng(seed);
  auto s = build_schedule<double>(6, 0.02, 0.98, 0.8,
                                  ScheduleShape::kLogLinear);

  PredictorNet teacher(scalar_mlp(12), seed + 1);
  PredictorNet fake(scalar_mlp(12), seed + 2);
  PredictorNet gen = promote_to_generator(teacher);
  DiscriminatorHead disc(fake.feature_shape(), NetKind::kMlp, seed + 3);
  PerceptualProxy proxy(Shape{1, 8, 8}, 4, seed + 4);

  std::vector<PairedSample> batch;
  Rng drng(seed + 5);
  for (int i = 0; i < 3; ++i)
    batch.push_back(
        {drng.normal_vec(1), drng.normal_vec(1), Shape{1, 1, 1}});
  Vec zy = drng.normal_vec(1), z_tn = drng.normal_vec(1),
      eps = drng.normal_vec(1), eps_p = drng.normal_vec(1),
      z_t = drng.normal_vec(1), z0hat = drng.normal_vec(1),
      z0 = drng.normal_vec(1);

  auto add_fd = [&](const std::string& name,
                    const std::function<double(const Vec&)>& loss,
                    const Vec& params, const Vec& grad) {
    auto t0 = Clock::now();
    auto rep = fd_check(loss, params, grad, 1e-4, 150);
    out.push_back(make_result(name + "_fd", rep.max_rel_err, 1e-3, t0));
  };

  {  // teacher loss
    auto loss = [&](const Vec& pv) {
      PredictorNet tmp = teacher;
      tmp.params() = pv;
      Rng r(seed + 6);
      ad::Tape tape;
      ad::Var p = tape.leaf(pv);
      return tape.scalar(teacher_loss(tape, s, tmp, p, batch, r, false));
    };
    Rng r(seed + 6);
    ad::Tape tape;
    ad::Var p = tape.leaf(teacher.params());
    ad::Var l = teacher_loss(tape, s, teacher, p, batch, r, false);
    tape.backward(l);
    add_fd("teacher_loss", loss, teacher.params(), tape.grad(p));
  }

  {  // fake loss
    auto loss = [&](const Vec& pv) {
      PredictorNet tmp = fake;
      tmp.params() = pv;
      ad::Tape tape;
      ad::Var p = tape.leaf(pv);
      return tape.scalar(
          fake_loss(tape, s, tmp, p, z_t, zy, 3, z0hat, true));
    };
    ad::Tape tape;
    ad::Var p = tape.leaf(fake.params());
    ad::Var l = fake_loss(tape, s, fake, p, z_t, zy, 3, z0hat, true);
    tape.backward(l);
    add_fd("fake_loss", loss, fake.params(), tape.grad(p));
  }

  {  // rsd generator loss, full-grad variant (all paths live)
    GenLossOpts opts;
    opts.full_grad = true;
    auto loss = [&](const Vec& pv) {
      PredictorNet tmp = gen;
      tmp.params() = pv;
      ad::Tape tape;
      ad::Var gp = tape.leaf(pv);
      auto b = tmp.build(tape, gp, tape.constant(z_tn), tape.constant(zy),
                         s.steps(), tape.constant(eps));
      return tape.scalar(generator_loss_rsd(tape, s, teacher, fake, b.out,
                                            zy, 3, eps_p, opts));
    };
    ad::Tape tape;
    ad::Var gp = tape.leaf(gen.params());
    auto b = gen.build(tape, gp, tape.constant(z_tn), tape.constant(zy),
                       s.steps(), tape.constant(eps));
    ad::Var l = generator_loss_rsd(tape, s, teacher, fake, b.out, zy, 3,
                                   eps_p, opts);
    tape.backward(l);
    add_fd("generator_loss_rsd_fullgrad", loss, gen.params(),
           tape.grad(gp));
  }

  {  // rsd generator loss, stop-grad default: the frozen-bracket oracle
    ad::Tape tape;
    ad::Var gp = tape.leaf(gen.params());
    auto b = gen.build(tape, gp, tape.constant(z_tn), tape.constant(zy),
                       s.steps(), tape.constant(eps));
    ad::Var l =
        generator_loss_rsd(tape, s, teacher, fake, b.out, zy, 3, eps_p);
    tape.backward(l);
    const double eta = s.eta_at(3);
    Vec z0hat0 = gen.generate(z_tn, s.steps(), zy, eps);
    Vec zt0 =
        (1 - eta) * z0hat0 + eta * zy + s.kappa * std::sqrt(eta) * eps_p;
    Vec fs = teacher.predict(zt0, zy, 3), ff = fake.predict(zt0, zy, 3);
    auto loss = [&](const Vec& pv) {
      PredictorNet tmp = gen;
      tmp.params() = pv;
      Vec zh = tmp.generate(z_tn, s.steps(), zy, eps);
      const double base = fs.squaredNorm() / fs.size() -
                          ff.squaredNorm() / ff.size();
      return base + 2 * (ff - fs).dot(zh) / zh.size();
    };
    add_fd("generator_loss_rsd_stopgrad", loss, gen.params(),
           tape.grad(gp));
  }

  {  // vsd generator loss under the frozen-bracket oracle (weighted)
    ad::Tape tape;
    ad::Var gp = tape.leaf(gen.params());
    auto b = gen.build(tape, gp, tape.constant(z_tn), tape.constant(zy),
                       s.steps(), tape.constant(eps));
    ad::Var l = generator_loss_vsd(tape, s, teacher, fake, b.out, zy, 3,
                                   eps_p, true);
    tape.backward(l);
    const double eta = s.eta_at(3);
    Vec z0hat0 = gen.generate(z_tn, s.steps(), zy, eps);
    Vec zt0 =
        (1 - eta) * z0hat0 + eta * zy + s.kappa * std::sqrt(eta) * eps_p;
    Vec fs = teacher.predict(zt0, zy, 3), ff = fake.predict(zt0, zy, 3);
    const double w = 0.5 * vsd_weight(s, 3);
    auto loss = [&](const Vec& pv) {
      PredictorNet tmp = gen;
      tmp.params() = pv;
      Vec zh = tmp.generate(z_tn, s.steps(), zy, eps);
      const double base = fs.squaredNorm() / fs.size() -
                          ff.squaredNorm() / ff.size();
      return w * (base + 2 * (ff - fs).dot(zh) / zh.size());
    };
    add_fd("generator_loss_vsd", loss, gen.params(), tape.grad(gp));
  }

  {  // gan discriminator side (head and encoder parameters)
    auto dloss = [&](const Vec& pv) {
      DiscriminatorHead tmp = disc;
      tmp.params() = pv;
      ad::Tape tape;
      ad::Var dp = tape.leaf(pv);
      ad::Var fp = tape.constant(fake.params());
      return tape.scalar(gan_disc_loss(tape, tmp, dp, fake, fp,
                                       tape.constant(z0),
                                       tape.constant(z0hat), zy));
    };
    ad::Tape tape;
    ad::Var dp = tape.leaf(disc.params());
    ad::Var fp = tape.leaf(fake.params());
    ad::Var l = gan_disc_loss(tape, disc, dp, fake, fp, tape.constant(z0),
                              tape.constant(z0hat), zy);
    tape.backward(l);
    add_fd("gan_disc_loss", dloss, disc.params(), tape.grad(dp));

    auto floss = [&](const Vec& pv) {
      PredictorNet tmp = fake;
      tmp.params() = pv;
      ad::Tape t2;
      ad::Var dp2 = t2.constant(disc.params());
      ad::Var fp2 = t2.leaf(pv);
      return t2.scalar(gan_disc_loss(t2, disc, dp2, tmp, fp2,
                                     t2.constant(z0), t2.constant(z0hat),
                                     zy));
    };
    add_fd("gan_disc_loss_encoder", floss, fake.params(), tape.grad(fp));
  }

  {  // gan generator side through z0hat
    auto gloss = [&](const Vec& zv) {
      ad::Tape tape;
      ad::Var dp = tape.constant(disc.params());
      ad::Var fp = tape.constant(fake.params());
      return tape.scalar(
          gan_gen_loss(tape, disc, dp, fake, fp, tape.leaf(zv), zy));
    };
    ad::Tape tape;
    ad::Var dp = tape.constant(disc.params());
    ad::Var fp = tape.constant(fake.params());
    ad::Var zv = tape.leaf(z0hat);
    ad::Var l = gan_gen_loss(tape, disc, dp, fake, fp, zv, zy);
    tape.backward(l);
    add_fd("gan_gen_loss", gloss, z0hat, tape.grad(zv));
  }

  {  // perceptual proxy on image-shaped data
    Rng irng(seed + 9);
    Vec a = irng.normal_vec(64), b = irng.normal_vec(64);
    auto loss = [&](const Vec& pv) {
      ad::Tape tape;
      return tape.scalar(
          perceptual_loss(tape, proxy, tape.constant(a), tape.leaf(pv)));
    };
    ad::Tape tape;
    ad::Var vb = tape.leaf(b);
    ad::Var l = perceptual_loss(tape, proxy, tape.constant(a), vb);
    tape.backward(l);
    add_fd("perceptual_loss", loss, b, tape.grad(vb));
  }

  return out;
}

std::vector<CheckResult> run_all_checks(std::uint64_t seed) {
  std::vector<CheckResult> all;
  for (auto& fn :
       {kernel_identity_checks, prop1_checks, kl_decomposition_checks,
        vsd_gradient_checks, loss_gradient_checks}) {
    auto part = fn(seed);
    all.insert(all.end(), part.begin(), part.end());
  }
  return all;
}

bool all_pass(const std::vector<CheckResult>& results) {
  for (const auto& r : results)
    if (!r.pass) return false;
  return true;
}

void write_check_csv(const std::string& path,
                     const std::vector<CheckResult>& results) {
  std::ofstream os(path);
  if (!os) throw IoError("write_check_csv: cannot open " + path);
  os << "check,max_error,tolerance,pass,seconds\n";
  for (const auto& r : results)
    os << r.name << ',' << std::setprecision(17) << r.max_error << ','
       << r.tolerance << ',' << (r.pass ? "1" : "0") << ','
       << std::setprecision(4) << r.seconds << '\n';
}

std::string schedule_table_csv(const Schedule& s) {
  std::ostringstream os;
  os << "t,eta_t,alpha_t,w_t\n";
  for (int t = 1; t <= s.steps(); ++t) {
    os << t << ',' << std::setprecision(17) << s.eta_at(t) << ','
       << s.alpha_at(t) << ',';
    if (t >= 2)
      os << s.weight_at(t);
    else
      os << "nan";
    os << '\n';
  }
  return os.str();
}

}  // namespace rsd::verify
