#include "mcfo/models.hpp"

#include <array>
#include <cmath>

#include "mcfo/errors.hpp"

namespace mcfo {

void StateSpaceModel::prior_vjp(ParamSpan, const double*, const double*, double*) const {}

namespace {

using Buf = std::array<double, kMaxLatentDim>;

void latent_params(const StateSpaceModel& m, ParamSpan theta, const double* z_prev,
                   double* mean, double* var) {
  if (z_prev)
    m.transition(theta, z_prev, mean, var);
  else
    m.prior(theta, mean, var);
}

}  // namespace

double latent_log_density(const StateSpaceModel& m, ParamSpan theta, const double* z_prev,
                          const double* z) {
  Buf mean, var;
  latent_params(m, theta, z_prev, mean.data(), var.data());
  double s = 0.0;
  for (std::size_t k = 0; k < m.latent_dim(); ++k) s += normal_logpdf(z[k], mean[k], var[k]);
  return s;
}

void latent_log_density_grad(const StateSpaceModel& m, ParamSpan theta, const double* z_prev,
                             const double* z, double scale, double* d_theta, double* d_z_prev,
                             double* d_z) {
  const std::size_t d = m.latent_dim();
  Buf mean, var, dm, dv;
  latent_params(m, theta, z_prev, mean.data(), var.data());
  for (std::size_t k = 0; k < d; ++k) {
    dm[k] = scale * normal_dlog_dmean(z[k], mean[k], var[k]);
    dv[k] = scale * normal_dlog_dvar(z[k], mean[k], var[k]);
    if (d_z) d_z[k] += scale * normal_dlog_dx(z[k], mean[k], var[k]);
  }
  if (!d_theta && !d_z_prev) return;
  if (z_prev)
    m.transition_vjp(theta, z_prev, dm.data(), dv.data(), d_theta, d_z_prev);
  else
    m.prior_vjp(theta, dm.data(), dv.data(), d_theta);
}

void proposal_sample(const Proposal& q, ParamSpan phi, const double* z_prev, const double* x,
                     const double* eps, double* z) {
  Buf mean, var;
  q.params(phi, z_prev, x, mean.data(), var.data());
  for (std::size_t k = 0; k < q.latent_dim(); ++k) z[k] = mean[k] + std::sqrt(var[k]) * eps[k];
}

double proposal_log_density(const Proposal& q, ParamSpan phi, const double* z_prev,
                            const double* x, const double* z) {
  Buf mean, var;
  q.params(phi, z_prev, x, mean.data(), var.data());
  double s = 0.0;
  for (std::size_t k = 0; k < q.latent_dim(); ++k) s += normal_logpdf(z[k], mean[k], var[k]);
  return s;
}

void proposal_log_density_grad(const Proposal& q, ParamSpan phi, const double* z_prev,
                               const double* x, const double* z, double scale, double* d_phi,
                               double* d_z_prev, double* d_z) {
  const std::size_t d = q.latent_dim();
  Buf mean, var, dm, dv;
  q.params(phi, z_prev, x, mean.data(), var.data());
  for (std::size_t k = 0; k < d; ++k) {
    dm[k] = scale * normal_dlog_dmean(z[k], mean[k], var[k]);
    dv[k] = scale * normal_dlog_dvar(z[k], mean[k], var[k]);
    if (d_z) d_z[k] += scale * normal_dlog_dx(z[k], mean[k], var[k]);
  }
  if (d_phi || d_z_prev) q.params_vjp(phi, z_prev, x, dm.data(), dv.data(), d_phi, d_z_prev);
}

void reparam_vjp(const Proposal& q, ParamSpan phi, const double* z_prev, const double* x,
                 const double* eps, const double* d_z, double* d_phi, double* d_z_prev) {
  const std::size_t d = q.latent_dim();
  Buf mean, var, dm, dv;
  q.params(phi, z_prev, x, mean.data(), var.data());
  for (std::size_t k = 0; k < d; ++k) {
    dm[k] = d_z[k];
    dv[k] = d_z[k] * eps[k] * 0.5 / std::sqrt(var[k]);
  }
  q.params_vjp(phi, z_prev, x, dm.data(), dv.data(), d_phi, d_z_prev);
}

BootstrapProposal::BootstrapProposal(const StateSpaceModel& model, std::vector<double> theta)
    : model_(model), theta_(std::move(theta)) {
  if (theta_.size() != model_.layout().size())
    throw InvalidParameter("BootstrapProposal: theta size does not match model layout");
}

void BootstrapProposal::params(ParamSpan, const double* z_prev, const double*, double* mean,
                               double* var) const {
  if (z_prev)
    model_.transition(theta_, z_prev, mean, var);
  else
    model_.prior(theta_, mean, var);
}

void BootstrapProposal::params_vjp(ParamSpan, const double* z_prev, const double*,
                                   const double* d_mean, const double* d_var, double*,
                                   double* d_z_prev) const {
  if (z_prev && d_z_prev) model_.transition_vjp(theta_, z_prev, d_mean, d_var, nullptr, d_z_prev);
}

}  // namespace mcfo
