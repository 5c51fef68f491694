#include "rsd/diffusion.hpp"

#include "rsd/oracles.hpp"

#include <doctest.h>

using namespace rsd;

namespace {

Schedule toy_schedule(double kappa = 1.0) {
  auto s = build_schedule<double>(8, 0.01, 0.999, kappa,
                                  ScheduleShape::kLogLinear);
  return s;
}

Schedule kappa0_schedule() {
  // Hand-built degenerate schedule for the noise-free limit; build_schedule
  // itself rejects kappa = 0.
  Schedule s = toy_schedule();
  s.kappa = 0.0;
  return s;
}

/// Predictor that always returns the true x0 it was given.
class PerfectPredictor : public Predictor {
 public:
  explicit PerfectPredictor(Vec x0) : x0_(std::move(x0)) {}
  Vec predict(const Vec&, const Vec&, int) const override { return x0_; }

 private:
  Vec x0_;
};

}  // namespace

TEST_CASE("marginal params match hand values") {
  Schedule s;
  s.eta.resize(2);
  s.eta << 0.25, 0.5;
  s.alpha.resize(2);
  s.alpha << 0.25, 0.25;

  Vec x0 = Vec::Zero(1), y0 = Vec::Constant(1, 2.0);
  s.kappa = 2.0;
  auto p1 = marginal_params(s, x0, y0, 1);  // eta=0.25, kappa=2
  CHECK(p1.mean[0] == doctest::Approx(0.5));
  CHECK(p1.var == doctest::Approx(1.0));

  s.kappa = 0.0;
  auto p2 = marginal_params(s, x0, y0, 2);  // eta=0.5
  CHECK(p2.mean[0] == doctest::Approx(1.0));
  CHECK(p2.var == 0.0);

  s.eta[1] = 1.0;
  auto p3 = marginal_params(s, x0, y0, 2);  // endpoint collapses onto y0
  CHECK(p3.mean[0] == doctest::Approx(2.0));

  Vec bad = Vec::Zero(3);
  CHECK_THROWS_AS(marginal_params(s, x0, bad, 1), ShapeError);
}

TEST_CASE("transition params match hand values") {
  Schedule s = toy_schedule();
  s.alpha[2] = 0.5;  // force alpha_3 = 0.5 for the hand check
  Vec x_prev = Vec::Zero(1), x0 = Vec::Zero(1), y0 = Vec::Constant(1, 2.0);
  auto p = transition_params(s, x_prev, x0, y0, 3);
  CHECK(p.mean[0] == doctest::Approx(1.0));
  CHECK(p.var == doctest::Approx(0.5 * s.kappa * s.kappa));

  // zero residual: pure noise injection around x_prev
  Vec same = Vec::Constant(1, 0.7);
  auto p2 = transition_params(s, x_prev, same, same, 3);
  CHECK(p2.mean[0] == doctest::Approx(x_prev[0]));

  Schedule k0 = kappa0_schedule();
  auto p3 = transition_params(k0, x_prev, x0, y0, 3);
  CHECK(p3.var == 0.0);
}

TEST_CASE("posterior params match hand values and the convex identity") {
  Schedule s;
  s.eta.resize(2);
  s.eta << 0.25, 0.5;
  s.alpha.resize(2);
  s.alpha << 0.25, 0.25;
  s.kappa = 1.0;

  Vec x_t = Vec::Constant(1, 1.0), x0 = Vec::Zero(1);
  auto p = posterior_params(s, x_t, x0, 2);
  CHECK(p.mean[0] == doctest::Approx(0.5));
  CHECK(p.var == doctest::Approx(0.125));
  CHECK_THROWS_AS(posterior_params(s, x_t, x0, 1), IndexError);

  // x0 == x_t: mean collapses to x_t for any schedule
  Rng rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    Schedule r = toy_schedule(rng.uniform_in(0.2, 2.0));
    const int t = rng.uniform_int(2, r.steps());
    Vec v = Vec::Constant(1, rng.normal());
    auto q = posterior_params(r, v, v, t);
    CHECK(q.mean[0] == doctest::Approx(v[0]).epsilon(1e-12));
  }
}

TEST_CASE("Chapman-Kolmogorov composition reproduces the marginal") {
  Rng rng(17);
  for (int rep = 0; rep < 300; ++rep) {
    Schedule s = toy_schedule(rng.uniform_in(0.2, 2.0));
    const double x0 = rng.normal(), y0 = rng.normal();
    const int tp = 1 + rng.uniform_int(0, s.steps() - 1);
    double mean = x0, var = 0.0;
    for (int t = 1; t <= tp; ++t) {
      mean = mean + s.alpha_at(t) * (y0 - x0);  // transition mean chain
      var += s.kappa * s.kappa * s.alpha_at(t);
    }
    const Vec x0v = Vec::Constant(1, x0), y0v = Vec::Constant(1, y0);
    auto m = marginal_params(s, x0v, y0v, tp);
    CHECK(std::abs(mean - m.mean[0]) <= 1e-12);
    CHECK(std::abs(var - m.var) <= 1e-12);
  }
}

TEST_CASE("Bayes identity on scalar densities") {
  using oracles::scalar_log_density;
  Rng rng(23);
  double max_err = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    Schedule s = toy_schedule(rng.uniform_in(0.3, 2.0));
    const int t = rng.uniform_int(2, s.steps());
    Vec x0 = Vec::Constant(1, rng.normal());
    Vec y0 = Vec::Constant(1, rng.normal());
    Vec xt = Vec::Constant(1, rng.normal());
    Vec xp = Vec::Constant(1, rng.normal());

    auto post = posterior_params(s, xt, x0, t);
    auto trans = transition_params(s, xp, x0, y0, t);
    auto marg_prev = marginal_params(s, x0, y0, t - 1);
    auto marg_t = marginal_params(s, x0, y0, t);

    const double lhs = scalar_log_density(post, xp[0]);
    const double rhs = scalar_log_density(trans, xt[0]) +
                       scalar_log_density(marg_prev, xp[0]) -
                       scalar_log_density(marg_t, xt[0]);
    max_err = std::max(max_err, std::abs(lhs - rhs));
  }
  CHECK(max_err <= 1e-8);
}

TEST_CASE("sample_gaussian determinism and moments") {
  GaussianParams p;
  p.mean = Vec::Constant(4, 1.5);
  p.var = 0.0;
  Rng rng(5);
  CHECK(sample_gaussian(p, rng) == p.mean);

  p.var = 0.49;
  Rng a(42), b(42);
  CHECK(sample_gaussian(p, a) == sample_gaussian(p, b));

  // moment check over 1e5 draws
  const int n = 100000;
  double acc = 0, acc2 = 0;
  Rng r(7);
  GaussianParams q;
  q.mean = Vec::Constant(1, 0.3);
  q.var = 0.25;
  for (int i = 0; i < n; ++i) {
    const double v = sample_gaussian(q, r)[0];
    acc += v;
    acc2 += v * v;
  }
  const double mean = acc / n;
  const double var = acc2 / n - mean * mean;
  CHECK(std::abs(mean - 0.3) <= 3.0 * std::sqrt(0.25 / n));
  // SE of sample variance of a normal: var * sqrt(2/(n-1))
  CHECK(std::abs(var - 0.25) <= 3.0 * 0.25 * std::sqrt(2.0 / (n - 1)));
}

TEST_CASE("prior equals the t=T marginal and the kappa=0 limit") {
  Schedule k0 = kappa0_schedule();
  Vec y0 = Vec::Constant(3, 0.8);
  Rng rng(11);
  CHECK(sample_prior(k0, y0, rng) == y0);

  Schedule s = toy_schedule(1.3);
  s.eta[s.steps() - 1] = 1.0;
  Vec x0 = Vec::Constant(3, -0.4);
  auto m = marginal_params(s, x0, y0, s.steps());
  CHECK((m.mean - y0).cwiseAbs().maxCoeff() <= 1e-15);  // eta_T = 1
  CHECK(m.var == doctest::Approx(1.3 * 1.3));
}

TEST_CASE("reverse_sample identities") {
  Schedule s = toy_schedule();
  Rng rng(31);
  Vec x0 = rng.normal_vec(4);
  Vec y0 = rng.normal_vec(4);
  PerfectPredictor oracle(x0);

  // perfect predictor + deterministic mode is identity for any subset
  const std::vector<std::vector<int>> subsets = {
      {8, 7, 6, 5, 4, 3, 2, 1}, {8, 5, 2}, {8, 4}, {8}, {5, 1}};
  for (const auto& steps : subsets) {
    Vec out = reverse_sample(s, oracle, y0, steps,
                             ReverseMode::kDeterministic, rng);
    CHECK((out - x0).cwiseAbs().maxCoeff() <= 1e-12);
  }

  // single step: output is f(x_T, y0, T) for whatever x_T was drawn
  CHECK_THROWS_AS(
      reverse_sample(s, oracle, y0, {}, ReverseMode::kStochastic, rng),
      ConfigError);
  CHECK_THROWS_AS(reverse_sample(s, oracle, y0, {3, 5},
                                 ReverseMode::kStochastic, rng),
                  ConfigError);
}

TEST_CASE("jump posterior reduces to the adjacent posterior") {
  Schedule s = toy_schedule(0.9);
  Rng rng(13);
  for (int rep = 0; rep < 100; ++rep) {
    const int t = rng.uniform_int(2, s.steps());
    Vec xt = Vec::Constant(1, rng.normal());
    Vec x0 = Vec::Constant(1, rng.normal());
    auto a = posterior_params(s, xt, x0, t);
    auto b = jump_posterior_params(s, xt, x0, t, t - 1);
    CHECK(a.mean[0] == doctest::Approx(b.mean[0]).epsilon(1e-14));
    CHECK(a.var == doctest::Approx(b.var).epsilon(1e-14));
  }
}

TEST_CASE("stochastic reverse with the analytic oracle recovers the "
          "posterior mean") {
  // Gaussian toy problem: the oracle predictor is the exact conditional
  // mean, so the sampler's output mean must match E[x0|y0].
  oracles::AnalyticGaussianProblem prob;
  prob.prior_mean = 0.2;
  prob.prior_var = 1.0;
  prob.a = 1.0;
  prob.b = 0.0;
  prob.sigma_d = 0.3;
  prob.schedule = build_schedule<double>(15, 0.001, 0.999, 0.5,
                                         ScheduleShape::kLogLinear);
  oracles::GaussianOraclePredictor oracle(prob);

  const double y0 = 0.9;
  double m1, v1;
  oracles::condition_on_y0(prob, y0, &m1, &v1);

  std::vector<int> steps(15);
  for (int i = 0; i < 15; ++i) steps[i] = 15 - i;
  const int n = 10000;
  Rng rng(1234);
  double acc = 0, acc2 = 0;
  for (int i = 0; i < n; ++i) {
    Vec out = reverse_sample(prob.schedule, oracle, Vec::Constant(1, y0),
                             steps, ReverseMode::kStochastic, rng);
    acc += out[0];
    acc2 += out[0] * out[0];
  }
  const double mean = acc / n;
  const double sd = std::sqrt(std::max(acc2 / n - mean * mean, 1e-12));
  CHECK(std::abs(mean - m1) <= 3.0 * sd / std::sqrt(double(n)));
}
