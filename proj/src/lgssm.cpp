#include "mcfo/lgssm.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "mcfo/errors.hpp"

namespace mcfo {

Lgssm::Lgssm(LgssmConstants c) : c_(c) {
  if (!(c_.sigma0_sq > 0.0) || !(c_.q_var > 0.0) || !(c_.r_var > 0.0))
    throw InvalidParameter("Lgssm: variances must be positive");
  obs_norm_ = -0.5 * std::log(2.0 * std::numbers::pi * c_.r_var);
  layout_.add("theta1", 1);
  layout_.add("theta2", 1);
}

std::string Lgssm::describe() const {
  char buf[160];
  std::snprintf(buf, sizeof buf, "lgssm mu0=%.17g sigma0_sq=%.17g q_var=%.17g r_var=%.17g", c_.mu0,
                c_.sigma0_sq, c_.q_var, c_.r_var);
  return buf;
}

void Lgssm::prior(ParamSpan, double* mean, double* var) const {
  mean[0] = c_.mu0;
  var[0] = c_.sigma0_sq;
}

void Lgssm::transition(ParamSpan theta, const double* z_prev, double* mean, double* var) const {
  mean[0] = theta[0] * z_prev[0];
  var[0] = c_.q_var;
}

void Lgssm::transition_vjp(ParamSpan theta, const double* z_prev, const double* d_mean,
                           const double*, double* d_theta, double* d_z_prev) const {
  if (d_theta) d_theta[0] += d_mean[0] * z_prev[0];
  if (d_z_prev) d_z_prev[0] += d_mean[0] * theta[0];
}

double Lgssm::observation_log_density(ParamSpan theta, const double* z, const double* x) const {
  double r = x[0] - theta[1] * z[0];
  return obs_norm_ - 0.5 * r * r / c_.r_var;
}

void Lgssm::observation_grad(ParamSpan theta, const double* z, const double* x, double scale,
                             double* d_theta, double* d_z) const {
  double r = (x[0] - theta[1] * z[0]) / c_.r_var;
  if (d_theta) d_theta[1] += scale * r * z[0];
  if (d_z) d_z[0] += scale * r * theta[1];
}

void Lgssm::observation_mean(ParamSpan theta, const double* z, double* out) const {
  out[0] = theta[1] * z[0];
}

void Lgssm::sample_observation(ParamSpan theta, const double* z, Rng& rng, double* out) const {
  out[0] = theta[1] * z[0] + std::sqrt(c_.r_var) * rng.normal();
}

LgssmInstance lgssm_new(double theta1, double theta2, double mu0, double sigma0_sq, double q_var,
                        double r_var) {
  return LgssmInstance{Lgssm({mu0, sigma0_sq, q_var, r_var}), {theta1, theta2}};
}

LgssmInstance lgssm_training_setup() { return lgssm_new(0.9, 1.2, 0.5, 1.0, 1.0, 0.01); }

LgssmInstance lgssm_gradient_setup() { return lgssm_new(0.9, 10.0, 0.5, 1.0, 1.0, 1.0); }

LinearProposal::LinearProposal() {
  for (const char* n : {"phi1", "phi2", "phi3", "phi4", "phi5", "log_var_q1", "log_var_qt"})
    layout_.add(n, 1);
}

void LinearProposal::params(ParamSpan phi, const double* z_prev, const double* x, double* mean,
                            double* var) const {
  if (!z_prev) {
    mean[0] = phi[0] * x[0] + phi[1];
    var[0] = memo_exp(phi[5]);
  } else {
    mean[0] = phi[2] * z_prev[0] + phi[3] * x[0] + phi[4];
    var[0] = memo_exp(phi[6]);
  }
}

void LinearProposal::params_vjp(ParamSpan phi, const double* z_prev, const double* x,
                                const double* d_mean, const double* d_var, double* d_phi,
                                double* d_z_prev) const {
  if (!z_prev) {
    if (d_phi) {
      d_phi[0] += d_mean[0] * x[0];
      d_phi[1] += d_mean[0];
      d_phi[5] += d_var[0] * memo_exp(phi[5]);
    }
    return;
  }
  if (d_phi) {
    d_phi[2] += d_mean[0] * z_prev[0];
    d_phi[3] += d_mean[0] * x[0];
    d_phi[4] += d_mean[0];
    d_phi[6] += d_var[0] * memo_exp(phi[6]);
  }
  if (d_z_prev) d_z_prev[0] += d_mean[0] * phi[2];
}

std::vector<double> linear_proposal_phi(double phi1, double phi2, double phi3, double phi4,
                                        double phi5, double var_q1, double var_qt) {
  if (!(var_q1 > 0.0) || !(var_qt > 0.0))
    throw InvalidParameter("linear proposal variances must be positive");
  return {phi1, phi2, phi3, phi4, phi5, std::log(var_q1), std::log(var_qt)};
}

GaussianParams lgssm_optimal_proposal(const Lgssm& model, ParamSpan theta, double x,
                                      std::optional<double> z_prev) {
  const auto& c = model.constants();
  const double t1 = theta[0], t2 = theta[1];
  if (!z_prev) {
    double den = c.r_var + c.sigma0_sq * t2 * t2;
    return {{c.r_var * c.mu0 / den + c.sigma0_sq * t2 * x / den}, {c.sigma0_sq * c.r_var / den}};
  }
  double den = c.r_var + c.q_var * t2 * t2;
  return {{c.r_var * t1 / den * *z_prev + c.q_var * t2 / den * x}, {c.q_var * c.r_var / den}};
}

std::vector<double> optimal_linear_phi(const Lgssm& model, ParamSpan theta) {
  const auto& c = model.constants();
  const double t1 = theta[0], t2 = theta[1];
  double den1 = c.r_var + c.sigma0_sq * t2 * t2;
  double den = c.r_var + c.q_var * t2 * t2;
  return linear_proposal_phi(c.sigma0_sq * t2 / den1, c.r_var * c.mu0 / den1, c.r_var * t1 / den,
                             c.q_var * t2 / den, 0.0, c.sigma0_sq * c.r_var / den1,
                             c.q_var * c.r_var / den);
}

}  // namespace mcfo
