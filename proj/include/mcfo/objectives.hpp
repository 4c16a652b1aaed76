#pragma once

#include <string>
#include <vector>

#include "mcfo/lgssm.hpp"
#include "mcfo/samplers.hpp"

namespace mcfo {

enum class BoundKind { elbo, iwelbo, elbo_smc, mcfo_smc, mcfo_pimh };

std::string to_string(BoundKind k);

struct BoundEstimate {
  BoundKind kind = BoundKind::mcfo_smc;
  std::vector<double> per_step;  // log R_t terms; a single entry for iwelbo
  double total = 0.0;
  std::size_t K = 0;
  RngStream stream;
};

// elbo_smc and mcfo_smc read the same per-step log mean weights.
BoundEstimate bound_from_particles(const ParticleSet& ps, BoundKind kind);
// log((1/K) sum_i prod_t w_t^i) of an SIS particle set.
double sis_log_marginal(const ParticleSet& ps);

BoundEstimate eval_elbo(const StateSpaceModel& model, ParamSpan theta, const Proposal& q,
                        ParamSpan phi, const Sequence& x, Rng& rng);
BoundEstimate eval_iwelbo(const StateSpaceModel& model, ParamSpan theta, const Proposal& q,
                          ParamSpan phi, const Sequence& x, std::size_t K, Rng& rng);
BoundEstimate eval_mcfo_smc(const StateSpaceModel& model, ParamSpan theta, const Proposal& q,
                            ParamSpan phi, const Sequence& x, std::size_t K, Rng& rng,
                            SweepOptions opt = {});
BoundEstimate eval_elbo_smc(const StateSpaceModel& model, ParamSpan theta, const Proposal& q,
                            ParamSpan phi, const Sequence& x, std::size_t K, Rng& rng,
                            SweepOptions opt = {});

struct PimhBound {
  BoundEstimate bound;
  // Particles of the final chain iteration at every step; parents come from
  // the retained sweep, so ancestors is empty.
  ParticleSet last;
  std::vector<double> acceptance_rate;  // per step t >= 2 (index 0 unused)
};

// MCFO with the filtering expectation at step t taken over a PIMH chain of
// M sweeps targeting p_hat(x_{1:t-1}); log R_t is averaged over the chain.
PimhBound mcfo_pimh(const StateSpaceModel& model, ParamSpan theta, const Proposal& q,
                    ParamSpan phi, const Sequence& x, std::size_t K, std::size_t M, Rng& rng,
                    SweepOptions opt = {});
BoundEstimate eval_mcfo_pimh(const StateSpaceModel& model, ParamSpan theta, const Proposal& q,
                             ParamSpan phi, const Sequence& x, std::size_t K, std::size_t M,
                             Rng& rng, SweepOptions opt = {});

struct BiasRow {
  std::size_t K = 0;
  double k_gap = 0.0;         // K * (log p - mean bound)
  double k_gap_stderr = 0.0;
  double predicted = 0.0;     // sum_t V[R_t] / (2 p_t^2)
};

struct BiasCheckOptions {
  std::size_t replicates = 10000;
  std::size_t variance_samples = 1000000;
  std::uint64_t seed = 1;
};

// Predicted limit per step: variance of the single-particle weight under the
// extended proposal (exact Kalman filtering posterior for z_{t-1}, then q),
// divided by 2 p(x_t|x_{1:t-1})^2.
std::vector<double> predicted_bias_terms(const Lgssm& model, ParamSpan theta, const Proposal& q,
                                         ParamSpan phi, const Sequence& x,
                                         std::size_t samples, Rng& rng);

// Empirical K * gap for each K. The gap uses the exact control variate
// -mean(log1p(u) - u), u = Z_hat / p - 1, since E[u] = 0.
std::vector<BiasRow> asymptotic_bias_check(const Lgssm& model, ParamSpan theta,
                                           const Proposal& q, ParamSpan phi, const Sequence& x,
                                           const std::vector<std::size_t>& K_list,
                                           BiasCheckOptions opt = {});

}  // namespace mcfo
