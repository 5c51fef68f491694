#include "rsd/oracles.hpp"

#include "rsd/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace rsd;
using namespace rsd::oracles;

TEST_CASE("scalar log density values and normalization") {
  GaussianParams p;
  p.mean = Vec::Zero(1);
  p.var = 1.0;
  CHECK(scalar_log_density(p, 0.0) ==
        doctest::Approx(-0.5 * std::log(2.0 * M_PI)));
  CHECK(scalar_log_density(p, 0.7) ==
        doctest::Approx(scalar_log_density(p, -0.7)));

  p.var = 0.0;
  CHECK_THROWS_AS(scalar_log_density(p, 0.0), DegenerateDensityError);

  // trapezoid over a wide fine grid integrates to 1
  p.var = 0.37;
  p.mean = Vec::Constant(1, 0.2);
  const int n = 20001;
  const double lo = -8, hi = 8, dx = (hi - lo) / (n - 1);
  double acc = 0;
  for (int i = 0; i < n; ++i) {
    const double w = (i == 0 || i == n - 1) ? 0.5 : 1.0;
    acc += w * std::exp(scalar_log_density(p, lo + i * dx));
  }
  CHECK(std::abs(acc * dx - 1.0) <= 1e-6);
}

TEST_CASE("gauss-hermite integrates polynomials exactly") {
  auto gh = gauss_hermite(8);
  // moments of exp(-x^2): x^0 -> sqrt(pi), x^2 -> sqrt(pi)/2,
  // x^4 -> 3 sqrt(pi)/4
  double m0 = 0, m2 = 0, m4 = 0;
  for (int i = 0; i < 8; ++i) {
    m0 += gh.weights[i];
    m2 += gh.weights[i] * gh.nodes[i] * gh.nodes[i];
    m4 += gh.weights[i] * std::pow(gh.nodes[i], 4);
  }
  CHECK(m0 == doctest::Approx(std::sqrt(M_PI)).epsilon(1e-12));
  CHECK(m2 == doctest::Approx(std::sqrt(M_PI) / 2).epsilon(1e-12));
  CHECK(m4 == doctest::Approx(3 * std::sqrt(M_PI) / 4).epsilon(1e-12));
}

TEST_CASE("gaussian expectation refinement and Richardson stability") {
  // E[cos x], x ~ N(mu, v), closed form cos(mu) exp(-v/2).
  const double mu = 0.4, v = 0.8;
  auto f = [](double x) { return std::cos(x); };
  const double got = gaussian_expectation(mu, v, f, 1e-10);
  CHECK(got ==
        doctest::Approx(std::cos(mu) * std::exp(-v / 2)).epsilon(1e-9));
  const double coarse = gaussian_expectation(mu, v, f, 1e-8, 16);
  const double fine = gaussian_expectation(mu, v, f, 1e-8, 64);
  CHECK(std::abs(coarse - fine) <= 1e-7);
}

TEST_CASE("kl_step_coefficient equals weight_of on 1000 random schedules") {
  Rng rng(404);
  double max_rel = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    const int T = 2 + rng.uniform_int(0, 18);
    auto s = build_schedule<double>(
        T, rng.uniform_in(1e-4, 0.05), rng.uniform_in(0.95, 1.0),
        rng.uniform_in(0.1, 3.0),
        rep % 2 ? ScheduleShape::kLinear : ScheduleShape::kLogLinear);
    const int t = rng.uniform_int(2, T);
    const double a = kl_step_coefficient(s, t);
    const double b = weight_of(s, t);
    max_rel = std::max(max_rel, std::abs(a - b) / std::abs(b));
  }
  CHECK(max_rel <= 1e-10);
}

TEST_CASE("kl_step_coefficient hand value and identical-mean degenerate") {
  Schedule s;
  s.eta.resize(2);
  s.eta << 0.25, 0.5;
  s.alpha.resize(2);
  s.alpha << 0.25, 0.25;
  s.kappa = 1.0;
  CHECK(kl_step_coefficient(s, 2) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(kl_step_coefficient(s, 1), IndexError);
  CHECK(gaussian_kl(0.3, 0.5, 0.3, 0.5) == doctest::Approx(0.0));
}

namespace {

AnalyticGaussianProblem make_problem(double sigma_d = 0.3,
                                     double kappa = 0.7) {
  AnalyticGaussianProblem p;
  p.prior_mean = 0.1;
  p.prior_var = 0.8;
  p.a = 1.2;
  p.b = -0.2;
  p.sigma_d = sigma_d;
  p.schedule = build_schedule<double>(6, 0.01, 0.999, kappa,
                                      ScheduleShape::kLogLinear);
  return p;
}

}  // namespace

TEST_CASE("analytic posterior mean degenerate cases") {
  auto p = make_problem(0.0);
  p.a = 1.0;
  p.b = 0.0;
  CHECK(analytic_posterior_mean(p, 0.33, 0.9, 3) == doctest::Approx(0.9));

  // huge kappa: x_t uninformative, falls back to E[x0|y0]
  auto q = make_problem(0.3, 1e6);
  double m1, v1;
  condition_on_y0(q, 0.5, &m1, &v1);
  CHECK(analytic_posterior_mean(q, 12.0, 0.5, 4) ==
        doctest::Approx(m1).epsilon(1e-6));
}

TEST_CASE("analytic posterior mean is affine in x_t") {
  auto p = make_problem();
  const double y0 = 0.4;
  const int t = 3;
  const double f0 = analytic_posterior_mean(p, 0.0, y0, t);
  const double f1 = analytic_posterior_mean(p, 1.0, y0, t);
  for (double x : {-2.0, -0.5, 0.3, 2.5}) {
    const double expect = f0 + (f1 - f0) * x;
    CHECK(analytic_posterior_mean(p, x, y0, t) ==
          doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("analytic posterior mean matches Monte Carlo bin averages") {
  auto p = make_problem();
  const int t = 4;
  const double eta = p.schedule.eta_at(t);
  const double sd_t = p.schedule.kappa * std::sqrt(eta);
  Rng rng(808);
  // The conditional mean is affine in (x_t, y0), so evaluating the oracle
  // at the empirical bin mean removes all binning bias.
  const int n = 1000000;
  const double y_lo = 0.3, y_hi = 0.4, x_lo = 0.1, x_hi = 0.3;
  double sx0 = 0, sx02 = 0, sxt = 0, sy = 0;
  long hits = 0;
  for (int i = 0; i < n; ++i) {
    const double x0 = p.prior_mean + std::sqrt(p.prior_var) * rng.normal();
    const double y0 = p.a * x0 + p.b + p.sigma_d * rng.normal();
    if (y0 < y_lo || y0 > y_hi) continue;
    const double xt = (1 - eta) * x0 + eta * y0 + sd_t * rng.normal();
    if (xt < x_lo || xt > x_hi) continue;
    sx0 += x0;
    sx02 += x0 * x0;
    sxt += xt;
    sy += y0;
    ++hits;
  }
  REQUIRE(hits > 500);
  const double mc_mean = sx0 / hits;
  const double mc_sd =
      std::sqrt(std::max(sx02 / hits - mc_mean * mc_mean, 1e-12));
  const double oracle = analytic_posterior_mean(p, sxt / hits, sy / hits, t);
  CHECK(std::abs(mc_mean - oracle) <= 3.0 * mc_sd / std::sqrt(double(hits)));
}

namespace {

DiscreteProblem two_atom_problem(double a = 0.8, double kappa = 1.0) {
  DiscreteProblem p;
  p.schedule =
      build_schedule<double>(4, 0.02, 0.98, kappa, ScheduleShape::kLinear);
  DiscreteProblem::Cond c;
  c.y0 = 0.1;
  c.atoms = {-a, a};
  c.probs = {0.5, 0.5};
  p.conds.push_back(c);
  return p;
}

class ConstantPredictor : public Predictor {
 public:
  explicit ConstantPredictor(double c) : c_(c) {}
  Vec predict(const Vec& x, const Vec&, int) const override {
    return Vec::Constant(x.size(), c_);
  }

 private:
  double c_;
};

}  // namespace

TEST_CASE("tabular oracle examples") {
  DiscreteProblem single;
  single.schedule =
      build_schedule<double>(3, 0.05, 0.95, 1.0, ScheduleShape::kLinear);
  single.conds.push_back({0.0, {0.37}, {1.0}});
  TabularOraclePredictor f(single);
  for (double x : {-3.0, 0.0, 5.0})
    CHECK(f.predict(Vec::Constant(1, x), Vec::Zero(1), 2)[0] ==
          doctest::Approx(0.37));

  // symmetric atoms, x_t at the marginal midpoint: exactly zero
  auto p = two_atom_problem();
  TabularOraclePredictor g(p);
  const int t = 2;
  const double eta = p.schedule.eta_at(t);
  const double mid = eta * p.conds[0].y0;
  CHECK(g.predict(Vec::Constant(1, mid), Vec::Constant(1, 0.1), t)[0] ==
        doctest::Approx(0.0).epsilon(1e-12));

  // small kappa, x_t at one atom's marginal mean: collapses to that atom
  auto q = two_atom_problem(0.8, 0.05);
  TabularOraclePredictor h(q);
  const double mu = (1 - eta) * 0.8 + eta * 0.1;
  CHECK(std::abs(h.predict(Vec::Constant(1, mu), Vec::Constant(1, 0.1),
                           t)[0] -
                 0.8) <= 1e-3);

  DiscreteProblem empty;
  empty.schedule = p.schedule;
  empty.conds.push_back({0.0, {}, {}});
  CHECK_THROWS_AS(TabularOraclePredictor{empty}, ConfigError);
}

TEST_CASE("bruteforce_L_theta closed forms") {
  // single-atom generator {a} against a constant teacher c
  DiscreteProblem p;
  p.schedule =
      build_schedule<double>(4, 0.02, 0.98, 1.0, ScheduleShape::kLinear);
  p.conds.push_back({0.0, {0.6}, {1.0}});
  ConstantPredictor teacher(0.1);
  const double gap2 = (0.6 - 0.1) * (0.6 - 0.1);

  const double unweighted = bruteforce_L_theta(p, teacher, false);
  CHECK(unweighted == doctest::Approx(4.0 * gap2).epsilon(1e-9));

  double wsum = 0;
  for (int t = 2; t <= 4; ++t) wsum += p.schedule.weight_at(t);
  const double weighted = bruteforce_L_theta(p, teacher, true);
  CHECK(weighted == doctest::Approx(wsum * gap2).epsilon(1e-9));

  // generator distribution whose conditional mean IS the teacher: zero
  TabularOraclePredictor self(p);  // constant 0.6 predictor
  CHECK(bruteforce_L_theta(p, self, false) ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("joint KL decomposition on constructed chains") {
  auto s = build_schedule<double>(3, 0.05, 0.97, 0.8, ScheduleShape::kLinear);

  ConstantPredictor f(0.4);
  auto rep0 = kl_joint_decomposition_check(s, f, f, 0.2);
  CHECK(rep0.joint_kl == doctest::Approx(0.0));
  CHECK(rep0.weighted_sum == doctest::Approx(0.0));
  CHECK(rep0.prior_kl == 0.0);

  // chains differing in a single step: the joint equals that step's term
  class OneStepDiff : public Predictor {
   public:
    OneStepDiff(double base, double bump, int t)
        : base_(base), bump_(bump), t_(t) {}
    Vec predict(const Vec& x, const Vec&, int t) const override {
      return Vec::Constant(x.size(), t == t_ ? base_ + bump_ : base_);
    }

   private:
    double base_, bump_;
    int t_;
  };
  OneStepDiff g(0.4, 0.25, 3);
  auto rep1 = kl_joint_decomposition_check(s, g, f, 0.2);
  CHECK(rep1.per_step_kl[2] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(rep1.joint_kl == doctest::Approx(rep1.per_step_kl[3]).epsilon(1e-12));
  CHECK(rep1.abs_diff <= 1e-6);

  // random affine chains at T = 4
  Rng rng(777);
  auto s4 =
      build_schedule<double>(4, 0.03, 0.96, 1.1, ScheduleShape::kLogLinear);
  for (int rep = 0; rep < 10; ++rep) {
    class Affine : public Predictor {
     public:
      Affine(double a, double b) : a_(a), b_(b) {}
      Vec predict(const Vec& x, const Vec&, int) const override {
        return a_ * x + Vec::Constant(x.size(), b_);
      }

     private:
      double a_, b_;
    };
    Affine fp(rng.uniform_in(0.2, 0.9), rng.uniform_in(-0.4, 0.4));
    Affine fq(rng.uniform_in(0.2, 0.9), rng.uniform_in(-0.4, 0.4));
    auto r = kl_joint_decomposition_check(s4, fp, fq, rng.normal(), 20);
    CHECK(r.abs_diff <= 1e-6);
  }
}
