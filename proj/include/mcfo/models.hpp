#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "mcfo/params.hpp"
#include "mcfo/random.hpp"

namespace mcfo {

using ParamSpan = std::span<const double>;

// Generative state-space model with diagonal-Gaussian prior and transition:
//   p(z_1) p(x_1|z_1) prod_t p(z_t|z_{t-1}) p(x_t|z_t).
// All pointer arguments address latent_dim()/obs_dim() contiguous doubles.
// Gradient hooks accumulate into their outputs; null outputs are skipped.
class StateSpaceModel {
 public:
  virtual ~StateSpaceModel() = default;

  virtual std::size_t latent_dim() const = 0;
  virtual std::size_t obs_dim() const = 0;
  virtual const ParamLayout& layout() const = 0;
  // Stable text naming the structure and fixed constants.
  virtual std::string describe() const = 0;

  virtual void prior(ParamSpan theta, double* mean, double* var) const = 0;
  virtual void prior_vjp(ParamSpan theta, const double* d_mean, const double* d_var,
                         double* d_theta) const;

  virtual void transition(ParamSpan theta, const double* z_prev, double* mean,
                          double* var) const = 0;
  virtual void transition_vjp(ParamSpan theta, const double* z_prev, const double* d_mean,
                              const double* d_var, double* d_theta, double* d_z_prev) const = 0;

  virtual double observation_log_density(ParamSpan theta, const double* z,
                                         const double* x) const = 0;
  // Adds scale * d/dtheta and scale * d/dz of log p(x|z).
  virtual void observation_grad(ParamSpan theta, const double* z, const double* x, double scale,
                                double* d_theta, double* d_z) const = 0;
  virtual void observation_mean(ParamSpan theta, const double* z, double* out) const = 0;
  virtual void sample_observation(ParamSpan theta, const double* z, Rng& rng,
                                  double* out) const = 0;
};

// q(z_t | z_{t-1}, x_t), diagonal Gaussian. z_prev is null at t = 1.
class Proposal {
 public:
  virtual ~Proposal() = default;

  virtual std::size_t latent_dim() const = 0;
  virtual const ParamLayout& layout() const = 0;
  virtual std::string describe() const = 0;

  virtual void params(ParamSpan phi, const double* z_prev, const double* x, double* mean,
                      double* var) const = 0;
  virtual void params_vjp(ParamSpan phi, const double* z_prev, const double* x,
                          const double* d_mean, const double* d_var, double* d_phi,
                          double* d_z_prev) const = 0;
};

constexpr std::size_t kMaxLatentDim = 32;

// log p(z | z_prev); z_prev null selects the prior.
double latent_log_density(const StateSpaceModel& m, ParamSpan theta, const double* z_prev,
                          const double* z);
// Adds scale * gradients of log p(z | z_prev) w.r.t. theta, z_prev and z.
void latent_log_density_grad(const StateSpaceModel& m, ParamSpan theta, const double* z_prev,
                             const double* z, double scale, double* d_theta, double* d_z_prev,
                             double* d_z);

// z = mean + sqrt(var) * eps under q.
void proposal_sample(const Proposal& q, ParamSpan phi, const double* z_prev, const double* x,
                     const double* eps, double* z);
double proposal_log_density(const Proposal& q, ParamSpan phi, const double* z_prev,
                            const double* x, const double* z);
// Adds scale * gradients of log q(z | z_prev, x) with z held fixed.
void proposal_log_density_grad(const Proposal& q, ParamSpan phi, const double* z_prev,
                               const double* x, const double* z, double scale, double* d_phi,
                               double* d_z_prev, double* d_z);
// Pulls an adjoint on the reparameterized sample z(phi, z_prev, eps) back to
// phi and z_prev.
void reparam_vjp(const Proposal& q, ParamSpan phi, const double* z_prev, const double* x,
                 const double* eps, const double* d_z, double* d_phi, double* d_z_prev);

// Proposal equal to the model's own prior/transition at a fixed theta; phi is
// empty.
class BootstrapProposal : public Proposal {
 public:
  BootstrapProposal(const StateSpaceModel& model, std::vector<double> theta);

  std::size_t latent_dim() const override { return model_.latent_dim(); }
  const ParamLayout& layout() const override { return layout_; }
  std::string describe() const override { return "bootstrap"; }
  void params(ParamSpan phi, const double* z_prev, const double* x, double* mean,
              double* var) const override;
  void params_vjp(ParamSpan phi, const double* z_prev, const double* x, const double* d_mean,
                  const double* d_var, double* d_phi, double* d_z_prev) const override;

 private:
  const StateSpaceModel& model_;
  std::vector<double> theta_;
  ParamLayout layout_;
};

}  // namespace mcfo
