#include "mcfo/samplers.hpp"

#include <array>
#include <cmath>
#include <limits>

#include "mcfo/errors.hpp"

namespace mcfo {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// Proposes z from (z_prev, x) with the given noise and returns its log-weight.
double propose(const StateSpaceModel& model, ParamSpan theta, const Proposal& q, ParamSpan phi,
               const double* z_prev, const double* x, const double* eps, double* z) {
  const std::size_t d = q.latent_dim();
  std::array<double, kMaxLatentDim> mean, var;
  q.params(phi, z_prev, x, mean.data(), var.data());
  double log_q = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    z[k] = mean[k] + std::sqrt(var[k]) * eps[k];
    log_q += -0.5 * (kLog2Pi + memo_log(var[k]) + eps[k] * eps[k]);
  }
  return latent_log_density(model, theta, z_prev, z) +
         model.observation_log_density(theta, z, x) - log_q;
}

void check_inputs(const StateSpaceModel& model, const Proposal& q, const Sequence& x,
                  std::size_t K) {
  if (K < 1) throw InvalidParameter("sampler: K must be >= 1");
  if (x.T < 1) throw InvalidParameter("sampler: empty sequence");
  if (x.dim != model.obs_dim()) throw InvalidParameter("sampler: observation dimension mismatch");
  if (q.latent_dim() != model.latent_dim())
    throw InvalidParameter("sampler: proposal/model latent dimension mismatch");
}

ParticleSet sweep(const StateSpaceModel& model, ParamSpan theta, const Proposal& q,
                  ParamSpan phi, const Sequence& x, std::size_t K, Rng& rng, bool resample,
                  ResampleScheme scheme) {
  check_inputs(model, q, x, K);
  const std::size_t T = x.T, d = model.latent_dim();
  ParticleSet ps;
  ps.K = K;
  ps.T = T;
  ps.dim = d;
  ps.resampled = resample;
  ps.stream = rng.stream();
  ps.z.resize(T * K * d);
  ps.z_prev.resize(T * K * d);
  ps.eps.resize(T * K * d);
  ps.ancestors.resize((T - 1) * K);
  ps.log_weights.resize(T * K);
  ps.log_mean_weight.resize(T);
  ps.weights.resize(T * K);
  const double log_k = std::log(static_cast<double>(K));
  for (std::size_t t = 0; t < T; ++t) {
    if (t > 0) {
      std::uint32_t* a = &ps.ancestors[(t - 1) * K];
      if (resample) {
        resample_into({&ps.weights[(t - 1) * K], K}, scheme, rng, {a, K});
      } else {
        for (std::size_t i = 0; i < K; ++i) a[i] = static_cast<std::uint32_t>(i);
      }
      for (std::size_t i = 0; i < K; ++i)
        for (std::size_t k = 0; k < d; ++k)
          ps.z_prev[(t * K + i) * d + k] = ps.z[((t - 1) * K + a[i]) * d + k];
    }
    for (std::size_t i = 0; i < K; ++i) {
      double* e = &ps.eps[(t * K + i) * d];
      for (std::size_t k = 0; k < d; ++k) e[k] = rng.normal();
      ps.log_weights[t * K + i] =
          propose(model, theta, q, phi, ps.parent(t, i), x.at(t), e, &ps.z[(t * K + i) * d]);
    }
    double lse = normalize_log_weights({&ps.log_weights[t * K], K}, {&ps.weights[t * K], K});
    if (!std::isfinite(lse)) throw DegenerateFilter(t);
    ps.log_mean_weight[t] = lse - log_k;
  }
  return ps;
}

}  // namespace

std::vector<double> ParticleSet::normalized_weights(std::size_t t) const {
  if (weights.size() == T * K) return {weights.begin() + t * K, weights.begin() + (t + 1) * K};
  std::vector<double> w(K);
  normalize_log_weights({&log_weights[t * K], K}, w);
  return w;
}

double ParticleSet::ess(std::size_t t) const {
  if (weights.size() == T * K) return mcfo::ess({&weights[t * K], K});
  return mcfo::ess(normalized_weights(t));
}

double ParticleSet::mean_ess() const {
  double s = 0.0;
  for (std::size_t t = 0; t < T; ++t) s += ess(t);
  return s / static_cast<double>(T);
}

std::vector<double> ParticleSet::trajectory(std::size_t i) const {
  std::vector<double> out(T * dim);
  std::size_t idx = i;
  for (std::size_t t = T; t-- > 0;) {
    for (std::size_t k = 0; k < dim; ++k) out[t * dim + k] = z[(t * K + idx) * dim + k];
    if (t > 0) idx = ancestor(t, idx);
  }
  return out;
}

ParticleSet smc_run(const StateSpaceModel& model, ParamSpan theta, const Proposal& q,
                    ParamSpan phi, const Sequence& x, std::size_t K, Rng& rng, SweepOptions opt) {
  return sweep(model, theta, q, phi, x, K, rng, true, opt.scheme);
}

ParticleSet sis_run(const StateSpaceModel& model, ParamSpan theta, const Proposal& q,
                    ParamSpan phi, const Sequence& x, std::size_t K, Rng& rng) {
  return sweep(model, theta, q, phi, x, K, rng, false, ResampleScheme::multinomial);
}

double smc_log_marginal(const ParticleSet& ps) {
  double s = 0.0;
  for (double v : ps.log_mean_weight) s += v;
  return s;
}

double step_log_weight(const StateSpaceModel& model, ParamSpan theta, const Proposal& q,
                       ParamSpan phi, const double* z_prev, const double* x, const double* z) {
  return latent_log_density(model, theta, z_prev, z) + model.observation_log_density(theta, z, x) -
         proposal_log_density(q, phi, z_prev, x, z);
}

void replay(const StateSpaceModel& model, ParamSpan theta, const Proposal& q, ParamSpan phi,
            const Sequence& x, ParticleSet& ps) {
  const std::size_t K = ps.K, d = ps.dim;
  const double log_k = std::log(static_cast<double>(K));
  for (std::size_t t = 0; t < ps.T; ++t) {
    if (t > 0 && !ps.ancestors.empty()) {
      for (std::size_t i = 0; i < K; ++i)
        for (std::size_t k = 0; k < d; ++k)
          ps.z_prev[(t * K + i) * d + k] = ps.z[((t - 1) * K + ps.ancestor(t, i)) * d + k];
    }
    for (std::size_t i = 0; i < K; ++i)
      ps.log_weights[t * K + i] = propose(model, theta, q, phi, ps.parent(t, i), x.at(t),
                                          ps.noise(t, i), &ps.z[(t * K + i) * d]);
    ps.weights.resize(ps.T * K);
    ps.log_mean_weight[t] =
        normalize_log_weights({&ps.log_weights[t * K], K}, {&ps.weights[t * K], K}) - log_k;
  }
}

double pimh_accept_probability(double log_z_proposed, double log_z_current) {
  double r = log_z_proposed - log_z_current;
  if (std::isnan(r)) return 0.0;
  return r >= 0.0 ? 1.0 : std::exp(r);
}

PimhChain pimh_run(const StateSpaceModel& model, ParamSpan theta, const Proposal& q,
                   ParamSpan phi, const Sequence& x, std::size_t K, std::size_t M, Rng& rng,
                   SweepOptions opt) {
  if (M < 1) throw InvalidParameter("pimh_run: M must be >= 1");
  const std::size_t d = model.latent_dim(), T = x.T;
  PimhChain chain;
  chain.sweeps = M;
  chain.retained_final.resize(M * d);
  auto draw_trajectory = [&](const ParticleSet& ps) {
    auto w = ps.normalized_weights(T - 1);
    std::uint32_t idx = 0;
    resample_into(w, ResampleScheme::multinomial, rng, {&idx, 1});
    return ps.trajectory(idx);
  };
  {
    ParticleSet ps = smc_run(model, theta, q, phi, x, K, rng, opt);
    chain.log_z = smc_log_marginal(ps);
    chain.trajectory = draw_trajectory(ps);
    chain.history.push_back({true, chain.log_z});
  }
  for (std::size_t k = 0; k < d; ++k) chain.retained_final[k] = chain.trajectory[(T - 1) * d + k];
  for (std::size_t m = 1; m < M; ++m) {
    PimhSweep rec;
    try {
      ParticleSet ps = smc_run(model, theta, q, phi, x, K, rng, opt);
      rec.log_z = smc_log_marginal(ps);
      auto proposed = draw_trajectory(ps);
      double u = rng.uniform();
      if (rec.log_z - chain.log_z >= 0.0 || std::log(u) < rec.log_z - chain.log_z) {
        rec.accepted = true;
        chain.log_z = rec.log_z;
        chain.trajectory = std::move(proposed);
        ++chain.accepted;
      }
    } catch (const DegenerateFilter&) {
      rec.log_z = -std::numeric_limits<double>::infinity();
    }
    chain.history.push_back(rec);
    for (std::size_t k = 0; k < d; ++k)
      chain.retained_final[m * d + k] = chain.trajectory[(T - 1) * d + k];
  }
  return chain;
}

}  // namespace mcfo
