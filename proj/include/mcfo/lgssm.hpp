#pragma once

#include <optional>
#include <vector>

#include "mcfo/models.hpp"

namespace mcfo {

// Scalar linear-Gaussian SSM:
//   z_1 ~ N(mu0, sigma0_sq), z_t ~ N(theta1 z_{t-1}, q_var), x_t ~ N(theta2 z_t, r_var).
// theta = (theta1, theta2) is learnable; the remaining constants are fixed.
struct LgssmConstants {
  double mu0 = 0.5;
  double sigma0_sq = 1.0;
  double q_var = 1.0;
  double r_var = 1.0;
};

class Lgssm : public StateSpaceModel {
 public:
  explicit Lgssm(LgssmConstants c);

  std::size_t latent_dim() const override { return 1; }
  std::size_t obs_dim() const override { return 1; }
  const ParamLayout& layout() const override { return layout_; }
  std::string describe() const override;

  void prior(ParamSpan theta, double* mean, double* var) const override;
  void transition(ParamSpan theta, const double* z_prev, double* mean, double* var) const override;
  void transition_vjp(ParamSpan theta, const double* z_prev, const double* d_mean,
                      const double* d_var, double* d_theta, double* d_z_prev) const override;
  double observation_log_density(ParamSpan theta, const double* z, const double* x) const override;
  void observation_grad(ParamSpan theta, const double* z, const double* x, double scale,
                        double* d_theta, double* d_z) const override;
  void observation_mean(ParamSpan theta, const double* z, double* out) const override;
  void sample_observation(ParamSpan theta, const double* z, Rng& rng, double* out) const override;

  const LgssmConstants& constants() const { return c_; }

 private:
  LgssmConstants c_;
  double obs_norm_;  // -0.5 log(2 pi r_var)
  ParamLayout layout_;
};

struct LgssmInstance {
  Lgssm model;
  std::vector<double> theta;
};

LgssmInstance lgssm_new(double theta1, double theta2, double mu0, double sigma0_sq, double q_var,
                        double r_var);
// Training-experiment parameters: theta = (0.9, 1.2), r_var = 0.01.
LgssmInstance lgssm_training_setup();
// Gradient-study parameters: theta = (0.9, 10), r_var = 1.
LgssmInstance lgssm_gradient_setup();

// q(z_1|x_1) = N(phi1 x_1 + phi2, exp(log_var_q1)),
// q(z_t|z_{t-1}, x_t) = N(phi3 z_{t-1} + phi4 x_t + phi5, exp(log_var_qt)).
class LinearProposal : public Proposal {
 public:
  LinearProposal();

  std::size_t latent_dim() const override { return 1; }
  const ParamLayout& layout() const override { return layout_; }
  std::string describe() const override { return "linear"; }
  void params(ParamSpan phi, const double* z_prev, const double* x, double* mean,
              double* var) const override;
  void params_vjp(ParamSpan phi, const double* z_prev, const double* x, const double* d_mean,
                  const double* d_var, double* d_phi, double* d_z_prev) const override;

 private:
  ParamLayout layout_;
};

std::vector<double> linear_proposal_phi(double phi1, double phi2, double phi3, double phi4,
                                        double phi5, double var_q1, double var_qt);

// p(z_1|x_1) when z_prev is empty, p(z_t|z_{t-1}, x_t) otherwise.
GaussianParams lgssm_optimal_proposal(const Lgssm& model, ParamSpan theta, double x,
                                      std::optional<double> z_prev);
// The linear-proposal parameters reproducing lgssm_optimal_proposal exactly.
std::vector<double> optimal_linear_phi(const Lgssm& model, ParamSpan theta);

}  // namespace mcfo
