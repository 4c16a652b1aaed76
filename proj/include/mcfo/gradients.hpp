#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mcfo/samplers.hpp"

namespace mcfo {

enum class Wrt { theta, phi };
enum class Estimator { mcfo, aesmc_biased, aesmc_full, nasmc, iwae };

std::string to_string(Wrt w);
std::string to_string(Estimator e);
Estimator parse_estimator(const std::string& s);

struct GradEstimate {
  Wrt wrt = Wrt::phi;
  Estimator estimator = Estimator::mcfo;
  std::vector<double> vector;
  std::size_t K = 0;
  RngStream stream;
};

struct GradPair {
  GradEstimate theta;
  GradEstimate phi;
};

// Reparameterized proposal gradient with parent states held fixed:
// sum_t sum_i w~_t^i [(d_z log p(x_t, z|parent) - d_z log q) dz/dphi - d_phi log q].
GradEstimate grad_phi_mcfo(const StateSpaceModel& model, ParamSpan theta, const Proposal& q,
                           ParamSpan phi, const Sequence& x, const ParticleSet& ps);

// Weighted score: sum_t sum_i w~_t^i d_theta [log p(z_t^i|parent) + log p(x_t|z_t^i)].
GradEstimate grad_theta_mcfo(const StateSpaceModel& model, ParamSpan theta, const Sequence& x,
                             const ParticleSet& ps);

// Pathwise gradient of log Z_hat through the stored noise and ancestors. With
// drop_high_variance_term false the resampling score term is added, using
// the future reward log(Z_hat / p_hat(x_{1:t-1})) for the ancestors drawn at t-1.
GradPair grad_aesmc(const StateSpaceModel& model, ParamSpan theta, const Proposal& q,
                    ParamSpan phi, const Sequence& x, const ParticleSet& ps,
                    bool drop_high_variance_term);

// phi: sum_t sum_i w~_t^i d_phi log q(z_t^i | parent, x_t); theta as grad_theta_mcfo.
GradPair grad_nasmc(const StateSpaceModel& model, ParamSpan theta, const Proposal& q,
                    ParamSpan phi, const Sequence& x, const ParticleSet& ps);

// Pathwise gradient of the SIS bound; ps must come from sis_run.
GradPair grad_iwae_from(const StateSpaceModel& model, ParamSpan theta, const Proposal& q,
                        ParamSpan phi, const Sequence& x, const ParticleSet& ps);
GradPair grad_iwae(const StateSpaceModel& model, ParamSpan theta, const Proposal& q,
                   ParamSpan phi, const Sequence& x, std::size_t K, Rng& rng);

// Frozen-noise objectives whose exact gradients the estimators above are.
double mcfo_phi_surrogate(const StateSpaceModel& model, ParamSpan theta, const Proposal& q,
                          ParamSpan phi, const Sequence& x, const ParticleSet& ps);
// sum_t sum_i w_fixed[t*K+i] log p_theta(z_t^i, x_t | parent).
double weighted_joint_surrogate(const StateSpaceModel& model, ParamSpan theta, const Sequence& x,
                                const ParticleSet& ps, const std::vector<double>& w_fixed);
double nasmc_phi_surrogate(const Proposal& q, ParamSpan phi, const Sequence& x,
                           const ParticleSet& ps, const std::vector<double>& w_fixed);
// log Z_hat replayed under (theta, phi), plus the resampling score term with
// rewards frozen at the particle set's own values when with_score_term is set.
double aesmc_surrogate(const StateSpaceModel& model, ParamSpan theta, const Proposal& q,
                       ParamSpan phi, const Sequence& x, const ParticleSet& ps,
                       bool with_score_term);
double iwae_surrogate(const StateSpaceModel& model, ParamSpan theta, const Proposal& q,
                      ParamSpan phi, const Sequence& x, const ParticleSet& ps);

// Per-step normalized weights of ps, flattened T*K.
std::vector<double> normalized_weight_table(const ParticleSet& ps);

struct FiniteDiffResult {
  std::vector<double> numeric;
  double max_rel_error = 0.0;  // |a - fd| / max(|fd|, abs_floor)
  double max_abs_error = 0.0;
  bool passed = false;         // every coordinate within max(rel_tol |fd|, abs_floor)
};

FiniteDiffResult finite_diff_check(const std::function<double(const std::vector<double>&)>& f,
                                   const std::vector<double>& params,
                                   const std::vector<double>& analytic, double h,
                                   double rel_tol = 1e-5, double abs_floor = 1e-8);

}  // namespace mcfo
