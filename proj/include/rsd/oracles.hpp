#pragma once

#include "rsd/diffusion.hpp"
#include "rsd/predictor.hpp"
#include "rsd/schedule.hpp"
#include "rsd/types.hpp"

#include <functional>
#include <vector>

namespace rsd::oracles {

/// Exact scalar Gaussian log-density; var must be strictly positive.
double scalar_log_density(const GaussianParams& p, double x);

/// KL(N(m1,v1) || N(m2,v2)) for scalars.
double gaussian_kl(double m1, double v1, double m2, double v2);

/// Coefficient c such that KL between the two reverse transition kernels
/// at step t (same variance, x0-predictions differing by df) equals
/// c * df^2. Derived from the generic Gaussian KL, independently of
/// Schedule::weight_at, and must agree with it.
double kl_step_coefficient(const Schedule& s, int t);

/// Nodes/weights for integrals against exp(-u^2) on the real line
/// (Golub-Welsch on the Hermite Jacobi matrix).
struct GaussHermite {
  Vec nodes;
  Vec weights;
};
GaussHermite gauss_hermite(int order);

/// E_{x ~ N(mu,var)}[f(x)], refined until two successive orders agree to
/// tol; throws PrecisionError if the cap is reached first.
double gaussian_expectation(double mu, double var,
                            const std::function<double(double)>& f,
                            double tol = 1e-8, int start_order = 16,
                            int max_order = 256);

// ---- analytic scalar problem ----------------------------------------------

/// Scalar ground truth: x0 ~ N(prior_mean, prior_var),
/// y0 = a*x0 + b + sigma_d * xi with xi standard normal (sigma_d = 0 makes
/// the degradation deterministic), and x_t from the shifted marginal.
struct AnalyticGaussianProblem {
  double prior_mean = 0.0;
  double prior_var = 1.0;
  double a = 1.0;
  double b = 0.0;
  double sigma_d = 0.1;
  Schedule schedule;
};

/// E[x0 | y0] and Var[x0 | y0] by linear-Gaussian conditioning.
void condition_on_y0(const AnalyticGaussianProblem& p, double y0,
                     double* mean, double* var);

/// Exact E[x0 | x_t, y0] via joint-Gaussian conditioning.
double analytic_posterior_mean(const AnalyticGaussianProblem& p, double x_t,
                               double y0, int t);

/// Var[x0 | x_t, y0] (independent of x_t).
double analytic_posterior_var(const AnalyticGaussianProblem& p, double y0,
                              int t);

/// Parameterless Predictor wrapping analytic_posterior_mean (scalar data).
class GaussianOraclePredictor : public Predictor {
 public:
  explicit GaussianOraclePredictor(AnalyticGaussianProblem p)
      : p_(std::move(p)) {}
  Vec predict(const Vec& x_t, const Vec& y0, int t) const override;

 private:
  AnalyticGaussianProblem p_;
};

// ---- finite-support problem ------------------------------------------------

/// Per-conditioner finite distribution of generator outputs: given y0,
/// x0_hat takes value atoms[i] with probability probs[i].
struct DiscreteProblem {
  struct Cond {
    double y0 = 0.0;
    std::vector<double> atoms;
    std::vector<double> probs;
  };
  std::vector<Cond> conds;
  Schedule schedule;
  int quad_order = 32;  // starting quadrature order for x_t integrals
};

void validate_problem(const DiscreteProblem& p);

/// E[x0_hat | x_t, y0=conds[ci].y0, t] by exact enumeration over the
/// support, weighting by the shifted-marginal density.
double discrete_conditional_mean(const DiscreteProblem& p, int ci, double x_t,
                                 int t);

/// Predictor view of discrete_conditional_mean; y0 inputs must match one
/// of the problem's conditioners.
class TabularOraclePredictor : public Predictor {
 public:
  explicit TabularOraclePredictor(DiscreteProblem p);
  Vec predict(const Vec& x_t, const Vec& y0, int t) const override;

 private:
  int cond_index(double y0) const;
  DiscreteProblem p_;
};

/// Sum_t w_t E || f_G(x_t,y0,t) - f*(x_t,y0,t) ||^2 by enumeration over the
/// atom mixture and adaptive quadrature over x_t; f_G is the enumerated
/// conditional mean of the problem's own table. weighted=false uses w_t = 1
/// over t = 1..T; weighted=true applies w_t over t = 2..T.
double bruteforce_L_theta(const DiscreteProblem& p, const Predictor& teacher,
                          bool weighted, double tol = 1e-8);

// ---- joint KL decomposition -------------------------------------------------

/// Numerical confirmation that the joint chain KL between two reverse
/// processes (same schedule, x0-predictors f_p and f_q, shared prior at
/// t = T) equals the weighted per-step sum. Transitions run t = T..2; the
/// t = 1 jump is the deterministic map to the prediction and carries no
/// Gaussian KL. The chain marginal is propagated as a Gaussian mixture
/// discretized with Gauss-Hermite nodes.
struct JointKlReport {
  double joint_kl = 0.0;      // sum of exact per-transition Gaussian KLs
  double weighted_sum = 0.0;  // sum of w_t * E (f_p - f_q)^2
  double prior_kl = 0.0;      // KL between the two priors (identically 0)
  double abs_diff = 0.0;
  std::vector<double> per_step_kl;
};
JointKlReport kl_joint_decomposition_check(const Schedule& s,
                                           const Predictor& f_p,
                                           const Predictor& f_q, double y0,
                                           int gh_order = 24);

}  // namespace rsd::oracles
