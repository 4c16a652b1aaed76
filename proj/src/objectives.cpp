#include "mcfo/objectives.hpp"

#include <cmath>

#include "mcfo/errors.hpp"
#include "mcfo/kalman.hpp"

namespace mcfo {

std::string to_string(BoundKind k) {
  switch (k) {
    case BoundKind::elbo: return "elbo";
    case BoundKind::iwelbo: return "iwelbo";
    case BoundKind::elbo_smc: return "elbo_smc";
    case BoundKind::mcfo_smc: return "mcfo_smc";
    case BoundKind::mcfo_pimh: return "mcfo_pimh";
  }
  return "?";
}

BoundEstimate bound_from_particles(const ParticleSet& ps, BoundKind kind) {
  BoundEstimate b;
  b.kind = kind;
  b.K = ps.K;
  b.stream = ps.stream;
  b.per_step = ps.log_mean_weight;
  for (double v : b.per_step) b.total += v;
  return b;
}

double sis_log_marginal(const ParticleSet& ps) {
  std::vector<double> lw(ps.K, 0.0);
  for (std::size_t t = 0; t < ps.T; ++t)
    for (std::size_t i = 0; i < ps.K; ++i) lw[i] += ps.log_weights[t * ps.K + i];
  return log_sum_exp(lw) - std::log(static_cast<double>(ps.K));
}

BoundEstimate eval_elbo(const StateSpaceModel& model, ParamSpan theta, const Proposal& q,
                        ParamSpan phi, const Sequence& x, Rng& rng) {
  ParticleSet ps = sis_run(model, theta, q, phi, x, 1, rng);
  return bound_from_particles(ps, BoundKind::elbo);
}

BoundEstimate eval_iwelbo(const StateSpaceModel& model, ParamSpan theta, const Proposal& q,
                          ParamSpan phi, const Sequence& x, std::size_t K, Rng& rng) {
  ParticleSet ps = sis_run(model, theta, q, phi, x, K, rng);
  double total = sis_log_marginal(ps);
  if (!std::isfinite(total)) throw DegenerateFilter(ps.T - 1);
  BoundEstimate b;
  b.kind = BoundKind::iwelbo;
  b.K = K;
  b.stream = ps.stream;
  b.per_step = {total};
  b.total = total;
  return b;
}

BoundEstimate eval_mcfo_smc(const StateSpaceModel& model, ParamSpan theta, const Proposal& q,
                            ParamSpan phi, const Sequence& x, std::size_t K, Rng& rng,
                            SweepOptions opt) {
  return bound_from_particles(smc_run(model, theta, q, phi, x, K, rng, opt), BoundKind::mcfo_smc);
}

BoundEstimate eval_elbo_smc(const StateSpaceModel& model, ParamSpan theta, const Proposal& q,
                            ParamSpan phi, const Sequence& x, std::size_t K, Rng& rng,
                            SweepOptions opt) {
  return bound_from_particles(smc_run(model, theta, q, phi, x, K, rng, opt), BoundKind::elbo_smc);
}

PimhBound mcfo_pimh(const StateSpaceModel& model, ParamSpan theta, const Proposal& q,
                    ParamSpan phi, const Sequence& x, std::size_t K, std::size_t M, Rng& rng,
                    SweepOptions opt) {
  if (M < 1) throw InvalidParameter("mcfo_pimh: M must be >= 1");
  const std::size_t T = x.T, d = model.latent_dim();
  std::vector<ParticleSet> sweeps;
  sweeps.reserve(M);
  for (std::size_t m = 0; m < M; ++m) {
    try {
      sweeps.push_back(smc_run(model, theta, q, phi, x, K, rng, opt));
    } catch (const DegenerateFilter&) {
      if (m == 0) throw;
      sweeps.emplace_back();  // never accepted
    }
  }
  // prefix[m][t] = log p_hat(x_{1:t}) of sweep m, -inf for degenerate sweeps.
  std::vector<std::vector<double>> prefix(M, std::vector<double>(T, -INFINITY));
  for (std::size_t m = 0; m < M; ++m) {
    if (sweeps[m].K == 0) continue;
    double s = 0.0;
    for (std::size_t t = 0; t < T; ++t) prefix[m][t] = (s += sweeps[m].log_mean_weight[t]);
  }

  PimhBound out;
  out.bound.kind = BoundKind::mcfo_pimh;
  out.bound.K = K;
  out.bound.stream = rng.stream();
  out.bound.per_step.assign(T, 0.0);
  out.acceptance_rate.assign(T, 0.0);
  ParticleSet& last = out.last;
  last.K = K;
  last.T = T;
  last.dim = d;
  last.resampled = true;
  last.stream = rng.stream();
  last.z.resize(T * K * d);
  last.z_prev.resize(T * K * d);
  last.eps.resize(T * K * d);
  last.log_weights.resize(T * K);
  last.log_mean_weight.resize(T);

  const double log_k = std::log(static_cast<double>(K));
  std::vector<double> z(K * d), zp(K * d), eps(K * d), lw(K), w(K);
  std::vector<std::uint32_t> a(K);
  for (std::size_t t = 0; t < T; ++t) {
    std::size_t cur = 0;
    std::size_t accepted = 0;
    double sum = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
      if (t > 0 && m > 0) {
        double u = rng.uniform();
        double r = prefix[m][t - 1] - prefix[cur][t - 1];
        if (r >= 0.0 || std::log(u) < r) {
          cur = m;
          ++accepted;
        }
      }
      if (t > 0) {
        const ParticleSet& s = sweeps[cur];
        normalize_log_weights({&s.log_weights[(t - 1) * K], K}, w);
        resample_into(w, opt.scheme, rng, a);
        for (std::size_t i = 0; i < K; ++i)
          for (std::size_t k = 0; k < d; ++k) zp[i * d + k] = s.z[((t - 1) * K + a[i]) * d + k];
      }
      for (std::size_t i = 0; i < K; ++i) {
        for (std::size_t k = 0; k < d; ++k) eps[i * d + k] = rng.normal();
        const double* parent = t > 0 ? &zp[i * d] : nullptr;
        proposal_sample(q, phi, parent, x.at(t), &eps[i * d], &z[i * d]);
        lw[i] = step_log_weight(model, theta, q, phi, parent, x.at(t), &z[i * d]);
      }
      double lse = log_sum_exp(lw);
      if (!std::isfinite(lse)) throw DegenerateFilter(t);
      sum += lse - log_k;
      if (m + 1 == M) {
        std::copy(z.begin(), z.end(), last.z.begin() + t * K * d);
        if (t > 0) std::copy(zp.begin(), zp.end(), last.z_prev.begin() + t * K * d);
        std::copy(eps.begin(), eps.end(), last.eps.begin() + t * K * d);
        std::copy(lw.begin(), lw.end(), last.log_weights.begin() + t * K);
        last.log_mean_weight[t] = lse - log_k;
      }
    }
    out.bound.per_step[t] = sum / static_cast<double>(M);
    if (t > 0 && M > 1) out.acceptance_rate[t] = static_cast<double>(accepted) / (M - 1);
  }
  for (double v : out.bound.per_step) out.bound.total += v;
  return out;
}

BoundEstimate eval_mcfo_pimh(const StateSpaceModel& model, ParamSpan theta, const Proposal& q,
                             ParamSpan phi, const Sequence& x, std::size_t K, std::size_t M,
                             Rng& rng, SweepOptions opt) {
  return mcfo_pimh(model, theta, q, phi, x, K, M, rng, opt).bound;
}

std::vector<double> predicted_bias_terms(const Lgssm& model, ParamSpan theta, const Proposal& q,
                                         ParamSpan phi, const Sequence& x, std::size_t samples,
                                         Rng& rng) {
  auto beliefs = kalman_filter_means(model, theta, {x.values.data(), x.T});
  auto lm = kalman_log_marginal(model, theta, {x.values.data(), x.T});
  std::vector<double> out(x.T);
  for (std::size_t t = 0; t < x.T; ++t) {
    // Welford on w / p_t, so the result is V[R_t] / p_t^2 directly.
    double mean = 0.0, m2 = 0.0;
    for (std::size_t n = 0; n < samples; ++n) {
      double zp = 0.0;
      const double* parent = nullptr;
      if (t > 0) {
        zp = beliefs[t - 1].m + std::sqrt(beliefs[t - 1].P) * rng.normal();
        parent = &zp;
      }
      double e = rng.normal(), z;
      proposal_sample(q, phi, parent, x.at(t), &e, &z);
      double r = std::exp(step_log_weight(model, theta, q, phi, parent, x.at(t), &z) -
                          lm.per_step[t]);
      double delta = r - mean;
      mean += delta / static_cast<double>(n + 1);
      m2 += delta * (r - mean);
    }
    out[t] = 0.5 * m2 / static_cast<double>(samples - 1);
  }
  return out;
}

std::vector<BiasRow> asymptotic_bias_check(const Lgssm& model, ParamSpan theta,
                                           const Proposal& q, ParamSpan phi, const Sequence& x,
                                           const std::vector<std::size_t>& K_list,
                                           BiasCheckOptions opt) {
  const double log_p = kalman_log_marginal(model, theta, {x.values.data(), x.T}).total;
  Rng vrng(derive_stream(opt.seed, {0xB1A5, 0}));
  double predicted = 0.0;
  for (double v : predicted_bias_terms(model, theta, q, phi, x, opt.variance_samples, vrng))
    predicted += v;
  std::vector<BiasRow> rows;
  for (std::size_t ki = 0; ki < K_list.size(); ++ki) {
    const std::size_t K = K_list[ki];
    double mean = 0.0, m2 = 0.0;
    for (std::size_t r = 0; r < opt.replicates; ++r) {
      Rng rng(derive_stream(opt.seed, {0xB1A5, 1, K, r}));
      ParticleSet ps = smc_run(model, theta, q, phi, x, K, rng);
      double u = std::expm1(smc_log_marginal(ps) - log_p);
      double g = -(std::log1p(u) - u) * static_cast<double>(K);
      double delta = g - mean;
      mean += delta / static_cast<double>(r + 1);
      m2 += delta * (g - mean);
    }
    BiasRow row;
    row.K = K;
    row.k_gap = mean;
    row.k_gap_stderr =
        opt.replicates > 1 ? std::sqrt(m2 / (opt.replicates - 1) / opt.replicates) : 0.0;
    row.predicted = predicted;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace mcfo
