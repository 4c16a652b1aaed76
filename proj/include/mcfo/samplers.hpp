#pragma once

#include <cstdint>
#include <vector>

#include "mcfo/models.hpp"
#include "mcfo/sequence.hpp"

namespace mcfo {

// State of one SMC (or SIS) sweep. Step t holds the proposed particles
// z_t^i, the parent state each was proposed from, the base noise and the
// unnormalized log-weight. ancestors[(t-1)*K + i] is the index at step t-1 of
// the parent of z_t^i; it is empty when parents do not come from this set.
struct ParticleSet {
  std::size_t K = 0, T = 0, dim = 0;
  std::vector<double> z;
  std::vector<double> z_prev;
  std::vector<double> eps;
  std::vector<std::uint32_t> ancestors;
  std::vector<double> log_weights;
  std::vector<double> log_mean_weight;  // log((1/K) sum_i w_t^i)
  // Per-step normalized weights, T*K, kept in step with log_weights by the
  // samplers and replay. Empty means recompute from log_weights.
  std::vector<double> weights;
  bool resampled = true;                // false for SIS (identity ancestry)
  RngStream stream;

  const double* state(std::size_t t, std::size_t i) const { return &z[(t * K + i) * dim]; }
  const double* parent(std::size_t t, std::size_t i) const {
    return t == 0 ? nullptr : &z_prev[(t * K + i) * dim];
  }
  const double* noise(std::size_t t, std::size_t i) const { return &eps[(t * K + i) * dim]; }
  std::uint32_t ancestor(std::size_t t, std::size_t i) const { return ancestors[(t - 1) * K + i]; }

  std::vector<double> normalized_weights(std::size_t t) const;
  double ess(std::size_t t) const;
  double mean_ess() const;
  // Lineage of final-step particle i resolved through the ancestors, T*dim values.
  std::vector<double> trajectory(std::size_t i) const;
};

struct SweepOptions {
  ResampleScheme scheme = ResampleScheme::multinomial;
};

ParticleSet smc_run(const StateSpaceModel& model, ParamSpan theta, const Proposal& q,
                    ParamSpan phi, const Sequence& x, std::size_t K, Rng& rng,
                    SweepOptions opt = {});

// Sequential importance sampling: same proposals and weights, no resampling.
ParticleSet sis_run(const StateSpaceModel& model, ParamSpan theta, const Proposal& q,
                    ParamSpan phi, const Sequence& x, std::size_t K, Rng& rng);

double smc_log_marginal(const ParticleSet& ps);

// Recomputes states and log-weights of ps in place from its stored noise and
// ancestors under new parameters.
void replay(const StateSpaceModel& model, ParamSpan theta, const Proposal& q, ParamSpan phi,
            const Sequence& x, ParticleSet& ps);

// Unnormalized log-weight of proposing z at step t from z_prev (null at t=0).
double step_log_weight(const StateSpaceModel& model, ParamSpan theta, const Proposal& q,
                       ParamSpan phi, const double* z_prev, const double* x, const double* z);

struct PimhSweep {
  bool accepted = false;
  double log_z = 0.0;
};

struct PimhChain {
  std::vector<double> trajectory;  // retained z_{1:T}, T*dim
  double log_z = 0.0;              // retained log Z_hat
  std::size_t accepted = 0;        // accepted proposals after the initial sweep
  std::size_t sweeps = 0;          // M
  std::vector<PimhSweep> history;
  std::vector<double> retained_final;  // z_T of the retained trajectory after each sweep, M*dim
};

double pimh_accept_probability(double log_z_proposed, double log_z_current);

PimhChain pimh_run(const StateSpaceModel& model, ParamSpan theta, const Proposal& q,
                   ParamSpan phi, const Sequence& x, std::size_t K, std::size_t M, Rng& rng,
                   SweepOptions opt = {});

}  // namespace mcfo
