#include "rsd/oracles.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <map>

namespace rsd::oracles {

double scalar_log_density(const GaussianParams& p, double x) {
  if (p.mean.size() != 1)
    throw ShapeError("scalar_log_density: mean must be scalar");
  if (!(p.var > 0.0))
    throw DegenerateDensityError("scalar_log_density: var must be > 0");
  const double d = x - p.mean[0];
  return -0.5 * std::log(2.0 * M_PI * p.var) - 0.5 * d * d / p.var;
}

double gaussian_kl(double m1, double v1, double m2, double v2) {
  if (!(v1 > 0.0) || !(v2 > 0.0))
    throw DegenerateDensityError("gaussian_kl: variances must be > 0");
  const double dm = m1 - m2;
  return 0.5 * (std::log(v2 / v1) + (v1 + dm * dm) / v2 - 1.0);
}

double kl_step_coefficient(const Schedule& s, int t) {
  if (t < 2 || t > s.steps())
    throw IndexError("kl_step_coefficient: t must be in 2..T");
  // Two reverse kernels at step t share the variance
  //   sigma^2 = kappa^2 (eta_{t-1}/eta_t) alpha_t
  // and their means differ by (alpha_t/eta_t) * df. Evaluate the generic
  // Gaussian KL at df = 1 and read off the coefficient.
  const double eta_t = s.eta_at(t);
  const double eta_p = s.eta_at(t - 1);
  const double alpha = s.alpha_at(t);
  const double var = s.kappa * s.kappa * (eta_p / eta_t) * alpha;
  const double mean_shift = alpha / eta_t;  // df = 1
  return gaussian_kl(mean_shift, var, 0.0, var);
}

GaussHermite gauss_hermite(int order) {
  if (order < 1) throw ConfigError("gauss_hermite: order must be >= 1");
  // Jacobi matrix for Hermite polynomials (weight exp(-x^2)):
  // diagonal zero, off-diagonal sqrt(k/2).
  Mat J = Mat::Zero(order, order);
  for (int k = 1; k < order; ++k) {
    const double b = std::sqrt(k / 2.0);
    J(k, k - 1) = b;
    J(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(J);
  GaussHermite g;
  g.nodes = es.eigenvalues();
  g.weights.resize(order);
  const double mu0 = std::sqrt(M_PI);  // integral of exp(-x^2)
  for (int i = 0; i < order; ++i) {
    const double v0 = es.eigenvectors()(0, i);
    g.weights[i] = mu0 * v0 * v0;
  }
  return g;
}

namespace {

double gh_expectation(const GaussHermite& gh, double mu, double sd,
                      const std::function<double(double)>& f) {
  double acc = 0.0;
  const double scale = 1.0 / std::sqrt(M_PI);
  for (Eigen::Index i = 0; i < gh.nodes.size(); ++i)
    acc += gh.weights[i] * f(mu + std::sqrt(2.0) * sd * gh.nodes[i]);
  return acc * scale;
}

}  // namespace

double gaussian_expectation(double mu, double var,
                            const std::function<double(double)>& f,
                            double tol, int start_order, int max_order) {
  if (var < 0.0) throw ConfigError("gaussian_expectation: negative variance");
  if (var == 0.0) return f(mu);
  const double sd = std::sqrt(var);
  double prev = gh_expectation(gauss_hermite(start_order), mu, sd, f);
  for (int order = start_order + 8; order <= max_order; order += 8) {
    const double cur = gh_expectation(gauss_hermite(order), mu, sd, f);
    if (std::abs(cur - prev) <= tol * std::max(1.0, std::abs(cur)))
      return cur;
    prev = cur;
  }
  throw PrecisionError(
      "gaussian_expectation: quadrature did not converge to tolerance");
}

void condition_on_y0(const AnalyticGaussianProblem& p, double y0,
                     double* mean, double* var) {
  if (!(p.prior_var > 0.0))
    throw ConfigError("AnalyticGaussianProblem: prior_var must be > 0");
  if (p.sigma_d == 0.0) {
    // y0 determines x0 exactly: x0 = (y0 - b)/a.
    if (p.a == 0.0)
      throw ConfigError("AnalyticGaussianProblem: a = 0 with sigma_d = 0");
    *mean = (y0 - p.b) / p.a;
    *var = 0.0;
    return;
  }
  const double prec = 1.0 / p.prior_var + p.a * p.a / (p.sigma_d * p.sigma_d);
  *var = 1.0 / prec;
  *mean = (*var) * (p.prior_mean / p.prior_var +
                    p.a * (y0 - p.b) / (p.sigma_d * p.sigma_d));
}

double analytic_posterior_mean(const AnalyticGaussianProblem& p, double x_t,
                               double y0, int t) {
  double m1, v1;
  condition_on_y0(p, y0, &m1, &v1);
  const double eta = p.schedule.eta_at(t);
  const double noise_var = p.schedule.kappa * p.schedule.kappa * eta;
  // Jointly Gaussian (x0, x_t) given y0:
  //   x_t = (1-eta) x0 + eta y0 + sqrt(noise_var) eps.
  const double c = 1.0 - eta;
  const double cov = c * v1;
  const double var_xt = c * c * v1 + noise_var;
  const double mean_xt = c * m1 + eta * y0;
  if (var_xt == 0.0) return m1;  // x_t carries nothing beyond y0
  return m1 + (cov / var_xt) * (x_t - mean_xt);
}

double analytic_posterior_var(const AnalyticGaussianProblem& p, double y0,
                              int t) {
  double m1, v1;
  condition_on_y0(p, y0, &m1, &v1);
  const double eta = p.schedule.eta_at(t);
  const double noise_var = p.schedule.kappa * p.schedule.kappa * eta;
  const double c = 1.0 - eta;
  const double var_xt = c * c * v1 + noise_var;
  if (var_xt == 0.0) return v1;
  return v1 - (c * v1) * (c * v1) / var_xt;
}

Vec GaussianOraclePredictor::predict(const Vec& x_t, const Vec& y0,
                                     int t) const {
  if (x_t.size() != 1 || y0.size() != 1)
    throw ShapeError("GaussianOraclePredictor: scalar data only");
  return Vec::Constant(1, analytic_posterior_mean(p_, x_t[0], y0[0], t));
}

void validate_problem(const DiscreteProblem& p) {
  if (p.conds.empty())
    throw ConfigError("DiscreteProblem: no conditioners");
  for (const auto& c : p.conds) {
    if (c.atoms.empty())
      throw ConfigError("DiscreteProblem: empty support");
    if (c.atoms.size() != c.probs.size())
      throw ConfigError("DiscreteProblem: atoms/probs length mismatch");
    double sum = 0.0;
    for (double q : c.probs) {
      if (q < 0.0) throw ConfigError("DiscreteProblem: negative probability");
      sum += q;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw ConfigError("DiscreteProblem: probabilities must sum to 1");
    for (double a : c.atoms)
      if (!std::isfinite(a))
        throw ConfigError("DiscreteProblem: non-finite atom");
  }
}

double discrete_conditional_mean(const DiscreteProblem& p, int ci, double x_t,
                                 int t) {
  const auto& c = p.conds.at(ci);
  const double eta = p.schedule.eta_at(t);
  const double var = p.schedule.kappa * p.schedule.kappa * eta;
  if (var == 0.0) {
    // x_t pins x0_hat exactly; pick the atom whose marginal mean matches.
    double best = c.atoms[0], bd = std::abs(x_t - ((1 - eta) * c.atoms[0] +
                                                   eta * c.y0));
    for (size_t i = 1; i < c.atoms.size(); ++i) {
      const double d = std::abs(x_t - ((1 - eta) * c.atoms[i] + eta * c.y0));
      if (d < bd) {
        bd = d;
        best = c.atoms[i];
      }
    }
    return best;
  }
  // Log-sum-exp over atom posteriors for numerical safety.
  double max_log = -std::numeric_limits<double>::infinity();
  std::vector<double> logs(c.atoms.size());
  for (size_t i = 0; i < c.atoms.size(); ++i) {
    const double mu = (1 - eta) * c.atoms[i] + eta * c.y0;
    const double d = x_t - mu;
    logs[i] = std::log(c.probs[i] + 1e-300) - 0.5 * d * d / var;
    max_log = std::max(max_log, logs[i]);
  }
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < c.atoms.size(); ++i) {
    const double w = std::exp(logs[i] - max_log);
    num += w * c.atoms[i];
    den += w;
  }
  return num / den;
}

TabularOraclePredictor::TabularOraclePredictor(DiscreteProblem p)
    : p_(std::move(p)) {
  validate_problem(p_);
}

int TabularOraclePredictor::cond_index(double y0) const {
  for (size_t i = 0; i < p_.conds.size(); ++i)
    if (std::abs(p_.conds[i].y0 - y0) < 1e-12) return static_cast<int>(i);
  throw ConfigError("TabularOraclePredictor: unknown conditioner y0");
}

Vec TabularOraclePredictor::predict(const Vec& x_t, const Vec& y0,
                                    int t) const {
  if (x_t.size() != 1 || y0.size() != 1)
    throw ShapeError("TabularOraclePredictor: scalar data only");
  return Vec::Constant(
      1, discrete_conditional_mean(p_, cond_index(y0[0]), x_t[0], t));
}

double bruteforce_L_theta(const DiscreteProblem& p, const Predictor& teacher,
                          bool weighted, double tol) {
  validate_problem(p);
  const Schedule& s = p.schedule;
  const int t_lo = weighted ? 2 : 1;
  double total = 0.0;
  const double cond_w = 1.0 / static_cast<double>(p.conds.size());
  for (size_t ci = 0; ci < p.conds.size(); ++ci) {
    const auto& c = p.conds[ci];
    const Vec y0v = Vec::Constant(1, c.y0);
    for (int t = t_lo; t <= s.steps(); ++t) {
      const double wt = weighted ? s.weight_at(t) : 1.0;
      const double eta = s.eta_at(t);
      const double var = s.kappa * s.kappa * eta;
      auto gap2 = [&](double x_t) {
        const double fg =
            discrete_conditional_mean(p, static_cast<int>(ci), x_t, t);
        const double fs = teacher.predict(Vec::Constant(1, x_t), y0v, t)[0];
        const double d = fg - fs;
        return d * d;
      };
      // Mixture over atoms: x_t ~ sum_i probs[i] N((1-eta)a_i + eta y0, var).
      double e = 0.0;
      for (size_t i = 0; i < c.atoms.size(); ++i) {
        const double mu = (1 - eta) * c.atoms[i] + eta * c.y0;
        e += c.probs[i] *
             gaussian_expectation(mu, var, gap2, tol, p.quad_order);
      }
      total += cond_w * wt * e;
    }
  }
  return total;
}

JointKlReport kl_joint_decomposition_check(const Schedule& s,
                                           const Predictor& f_p,
                                           const Predictor& f_q, double y0,
                                           int gh_order) {
  const int T = s.steps();
  const Vec y0v = Vec::Constant(1, y0);
  const GaussHermite gh = gauss_hermite(gh_order);
  const double wnorm = 1.0 / std::sqrt(M_PI);

  JointKlReport rep;
  rep.prior_kl = 0.0;  // both chains start from N(y0, kappa^2 eta_T)

  // Particle representation of the chain marginal under f_p.
  struct Particle {
    double weight, mean;
  };
  std::vector<Particle> comp{{1.0, y0}};
  double level_var = s.kappa * s.kappa * s.eta_at(T);

  rep.per_step_kl.assign(T + 1, 0.0);
  for (int t = T; t >= 2; --t) {
    const double eta_t = s.eta_at(t);
    const double eta_p = s.eta_at(t - 1);
    const double alpha = s.alpha_at(t);
    const double next_var = s.kappa * s.kappa * (eta_p / eta_t) * alpha;
    const double wt = s.weight_at(t);

    if (comp.size() * gh_order > 2'000'000)
      throw ConfigError(
          "kl_joint_decomposition_check: chain too long for mixture "
          "enumeration; keep T <= 5 at this order");
    std::vector<Particle> next;
    next.reserve(comp.size() * gh_order);
    const double sd = std::sqrt(level_var);
    for (const auto& c : comp) {
      for (int k = 0; k < gh_order; ++k) {
        const double x = c.mean + std::sqrt(2.0) * sd * gh.nodes[k];
        const double w = c.weight * gh.weights[k] * wnorm;
        const Vec xv = Vec::Constant(1, x);
        const double fp = f_p.predict(xv, y0v, t)[0];
        const double fq = f_q.predict(xv, y0v, t)[0];
        const double mp = (eta_p / eta_t) * x + (alpha / eta_t) * fp;
        const double mq = (eta_p / eta_t) * x + (alpha / eta_t) * fq;
        rep.per_step_kl[t] += w * gaussian_kl(mp, next_var, mq, next_var);
        rep.weighted_sum += w * wt * (fp - fq) * (fp - fq);
        next.push_back({w, mp});
      }
    }
    rep.joint_kl += rep.per_step_kl[t];
    comp = std::move(next);
    level_var = next_var;
  }
  rep.abs_diff = std::abs(rep.joint_kl - rep.weighted_sum);
  return rep;
}

}  // namespace rsd::oracles
