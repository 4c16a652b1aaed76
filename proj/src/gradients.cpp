#include "mcfo/gradients.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "mcfo/errors.hpp"
#include "mcfo/objectives.hpp"

namespace mcfo {

std::string to_string(Wrt w) { return w == Wrt::theta ? "theta" : "phi"; }

std::string to_string(Estimator e) {
  switch (e) {
    case Estimator::mcfo: return "mcfo";
    case Estimator::aesmc_biased: return "aesmc";
    case Estimator::aesmc_full: return "aesmc_full";
    case Estimator::nasmc: return "nasmc";
    case Estimator::iwae: return "iwae";
  }
  return "?";
}

Estimator parse_estimator(const std::string& s) {
  if (s == "mcfo") return Estimator::mcfo;
  if (s == "aesmc" || s == "aesmc_biased") return Estimator::aesmc_biased;
  if (s == "aesmc_full") return Estimator::aesmc_full;
  if (s == "nasmc") return Estimator::nasmc;
  if (s == "iwae") return Estimator::iwae;
  throw InvalidParameter("unknown estimator: " + s);
}

std::vector<double> normalized_weight_table(const ParticleSet& ps) {
  if (ps.weights.size() == ps.T * ps.K) return ps.weights;
  std::vector<double> w(ps.T * ps.K);
  for (std::size_t t = 0; t < ps.T; ++t)
    normalize_log_weights({&ps.log_weights[t * ps.K], ps.K}, {&w[t * ps.K], ps.K});
  return w;
}

namespace {

GradEstimate make(Wrt wrt, Estimator e, std::size_t n, const ParticleSet& ps) {
  GradEstimate g;
  g.wrt = wrt;
  g.estimator = e;
  g.vector.assign(n, 0.0);
  g.K = ps.K;
  g.stream = ps.stream;
  return g;
}

void check_finite(const GradEstimate& g) {
  for (double v : g.vector)
    if (!std::isfinite(v))
      throw NumericalError("non-finite " + to_string(g.estimator) + " gradient w.r.t. " +
                           to_string(g.wrt));
}

// Reverse-mode pass over a sweep for objectives of the form
// sum_{t,i} coef[t*K+i] * log w_t^i with states reparameterized through the
// stored noise. When through_parents is set, adjoints flow back into parent
// states along the ancestors; otherwise parents are constants.
void pathwise_backward(const StateSpaceModel& model, ParamSpan theta, const Proposal& q,
                       ParamSpan phi, const Sequence& x, const ParticleSet& ps,
                       const std::vector<double>& coef, bool through_parents, double* d_theta,
                       double* d_phi) {
  const std::size_t K = ps.K, d = ps.dim;
  if (through_parents && ps.T > 1 && ps.ancestors.empty())
    throw InvalidParameter("pathwise gradient needs ancestor indices");
  std::vector<double> zbar(K * d, 0.0), zbar_prev(K * d, 0.0);
  std::array<double, kMaxLatentDim> gz, gp, mean, var, dmean, dvar;
  for (std::size_t t = ps.T; t-- > 0;) {
    std::fill(zbar_prev.begin(), zbar_prev.end(), 0.0);
    const double* xt = x.at(t);
    for (std::size_t i = 0; i < K; ++i) {
      const double c = coef[t * K + i];
      const double* zp = ps.parent(t, i);
      const double* z = ps.state(t, i);
      std::copy(&zbar[i * d], &zbar[i * d] + d, gz.begin());
      std::fill(gp.begin(), gp.begin() + d, 0.0);
      bool any = c != 0.0;
      for (std::size_t k = 0; k < d && !any; ++k) any = gz[k] != 0.0;
      if (!any) continue;
      double* dzp = (through_parents && t > 0) ? gp.data() : nullptr;
      if (c != 0.0) {
        latent_log_density_grad(model, theta, zp, z, c, d_theta, dzp, gz.data());
        model.observation_grad(theta, z, xt, c, d_theta, gz.data());
      }
      // -c log q(z) and the reparameterization z = mean + sqrt(var) eps share
      // one pass through the proposal.
      q.params(phi, zp, xt, mean.data(), var.data());
      const double* e = ps.noise(t, i);
      for (std::size_t k = 0; k < d; ++k) {
        double dm = 0.0, dv = 0.0;
        if (c != 0.0) {
          dm = -c * normal_dlog_dmean(z[k], mean[k], var[k]);
          dv = -c * normal_dlog_dvar(z[k], mean[k], var[k]);
          gz[k] -= c * normal_dlog_dx(z[k], mean[k], var[k]);
        }
        dmean[k] = dm + gz[k];
        dvar[k] = dv + gz[k] * e[k] * 0.5 / std::sqrt(var[k]);
      }
      q.params_vjp(phi, zp, xt, dmean.data(), dvar.data(), d_phi, dzp);
      if (dzp) {
        double* dst = &zbar_prev[ps.ancestor(t, i) * d];
        for (std::size_t k = 0; k < d; ++k) dst[k] += gp[k];
      }
    }
    std::swap(zbar, zbar_prev);
  }
}

}  // namespace

GradEstimate grad_phi_mcfo(const StateSpaceModel& model, ParamSpan theta, const Proposal& q,
                           ParamSpan phi, const Sequence& x, const ParticleSet& ps) {
  if (ps.eps.size() != ps.z.size()) throw InvalidParameter("grad_phi_mcfo: missing noise");
  GradEstimate g = make(Wrt::phi, Estimator::mcfo, q.layout().size(), ps);
  auto w = normalized_weight_table(ps);
  for (double v : w)
    if (std::isnan(v)) throw DegenerateFilter(0);
  pathwise_backward(model, theta, q, phi, x, ps, w, false, nullptr, g.vector.data());
  check_finite(g);
  return g;
}

GradEstimate grad_theta_mcfo(const StateSpaceModel& model, ParamSpan theta, const Sequence& x,
                             const ParticleSet& ps) {
  GradEstimate g = make(Wrt::theta, Estimator::mcfo, model.layout().size(), ps);
  auto w = normalized_weight_table(ps);
  for (std::size_t t = 0; t < ps.T; ++t)
    for (std::size_t i = 0; i < ps.K; ++i) {
      const double c = w[t * ps.K + i];
      if (c == 0.0) continue;
      latent_log_density_grad(model, theta, ps.parent(t, i), ps.state(t, i), c, g.vector.data(),
                              nullptr, nullptr);
      model.observation_grad(theta, ps.state(t, i), x.at(t), c, g.vector.data(), nullptr);
    }
  check_finite(g);
  return g;
}

namespace {

std::vector<double> aesmc_coefficients(const ParticleSet& ps, bool drop) {
  const std::size_t K = ps.K;
  auto c = normalized_weight_table(ps);
  if (drop) return c;
  const auto w = c;
  // Future reward for the ancestors drawn at step t-1: sum_{s >= t} log mean w_s.
  double reward = 0.0;
  std::vector<double> counts(K);
  for (std::size_t t = ps.T; t-- > 1;) {
    reward += ps.log_mean_weight[t];
    std::fill(counts.begin(), counts.end(), 0.0);
    for (std::size_t i = 0; i < K; ++i) counts[ps.ancestor(t, i)] += 1.0;
    for (std::size_t j = 0; j < K; ++j)
      c[(t - 1) * K + j] += reward * (counts[j] - static_cast<double>(K) * w[(t - 1) * K + j]);
  }
  return c;
}

}  // namespace

GradPair grad_aesmc(const StateSpaceModel& model, ParamSpan theta, const Proposal& q,
                    ParamSpan phi, const Sequence& x, const ParticleSet& ps,
                    bool drop_high_variance_term) {
  Estimator e = drop_high_variance_term ? Estimator::aesmc_biased : Estimator::aesmc_full;
  GradPair out{make(Wrt::theta, e, model.layout().size(), ps),
               make(Wrt::phi, e, q.layout().size(), ps)};
  auto c = aesmc_coefficients(ps, drop_high_variance_term);
  pathwise_backward(model, theta, q, phi, x, ps, c, true, out.theta.vector.data(),
                    out.phi.vector.data());
  check_finite(out.theta);
  check_finite(out.phi);
  return out;
}

GradPair grad_nasmc(const StateSpaceModel& model, ParamSpan theta, const Proposal& q,
                    ParamSpan phi, const Sequence& x, const ParticleSet& ps) {
  GradPair out{grad_theta_mcfo(model, theta, x, ps),
               make(Wrt::phi, Estimator::nasmc, q.layout().size(), ps)};
  out.theta.estimator = Estimator::nasmc;
  auto w = normalized_weight_table(ps);
  for (std::size_t t = 0; t < ps.T; ++t)
    for (std::size_t i = 0; i < ps.K; ++i) {
      const double c = w[t * ps.K + i];
      if (c == 0.0) continue;
      proposal_log_density_grad(q, phi, ps.parent(t, i), x.at(t), ps.state(t, i), c,
                                out.phi.vector.data(), nullptr, nullptr);
    }
  check_finite(out.phi);
  return out;
}

GradPair grad_iwae_from(const StateSpaceModel& model, ParamSpan theta, const Proposal& q,
                        ParamSpan phi, const Sequence& x, const ParticleSet& ps) {
  if (ps.resampled) throw InvalidParameter("grad_iwae: particle set must come from SIS");
  const std::size_t K = ps.K;
  GradPair out{make(Wrt::theta, Estimator::iwae, model.layout().size(), ps),
               make(Wrt::phi, Estimator::iwae, q.layout().size(), ps)};
  std::vector<double> total(K, 0.0), W(K);
  for (std::size_t t = 0; t < ps.T; ++t)
    for (std::size_t i = 0; i < K; ++i) total[i] += ps.log_weights[t * K + i];
  double lse = normalize_log_weights(total, W);
  if (!std::isfinite(lse)) throw DegenerateFilter(ps.T - 1);
  std::vector<double> c(ps.T * K);
  for (std::size_t t = 0; t < ps.T; ++t)
    for (std::size_t i = 0; i < K; ++i) c[t * K + i] = W[i];
  pathwise_backward(model, theta, q, phi, x, ps, c, true, out.theta.vector.data(),
                    out.phi.vector.data());
  check_finite(out.theta);
  check_finite(out.phi);
  return out;
}

GradPair grad_iwae(const StateSpaceModel& model, ParamSpan theta, const Proposal& q,
                   ParamSpan phi, const Sequence& x, std::size_t K, Rng& rng) {
  ParticleSet ps = sis_run(model, theta, q, phi, x, K, rng);
  return grad_iwae_from(model, theta, q, phi, x, ps);
}

double mcfo_phi_surrogate(const StateSpaceModel& model, ParamSpan theta, const Proposal& q,
                          ParamSpan phi, const Sequence& x, const ParticleSet& ps) {
  const std::size_t K = ps.K;
  std::vector<double> lw(K);
  std::array<double, kMaxLatentDim> z;
  double total = 0.0;
  for (std::size_t t = 0; t < ps.T; ++t) {
    for (std::size_t i = 0; i < K; ++i) {
      proposal_sample(q, phi, ps.parent(t, i), x.at(t), ps.noise(t, i), z.data());
      lw[i] = step_log_weight(model, theta, q, phi, ps.parent(t, i), x.at(t), z.data());
    }
    total += log_sum_exp(lw) - std::log(static_cast<double>(K));
  }
  return total;
}

double weighted_joint_surrogate(const StateSpaceModel& model, ParamSpan theta, const Sequence& x,
                                const ParticleSet& ps, const std::vector<double>& w_fixed) {
  double s = 0.0;
  for (std::size_t t = 0; t < ps.T; ++t)
    for (std::size_t i = 0; i < ps.K; ++i)
      s += w_fixed[t * ps.K + i] *
           (latent_log_density(model, theta, ps.parent(t, i), ps.state(t, i)) +
            model.observation_log_density(theta, ps.state(t, i), x.at(t)));
  return s;
}

double nasmc_phi_surrogate(const Proposal& q, ParamSpan phi, const Sequence& x,
                           const ParticleSet& ps, const std::vector<double>& w_fixed) {
  double s = 0.0;
  for (std::size_t t = 0; t < ps.T; ++t)
    for (std::size_t i = 0; i < ps.K; ++i)
      s += w_fixed[t * ps.K + i] *
           proposal_log_density(q, phi, ps.parent(t, i), x.at(t), ps.state(t, i));
  return s;
}

double aesmc_surrogate(const StateSpaceModel& model, ParamSpan theta, const Proposal& q,
                       ParamSpan phi, const Sequence& x, const ParticleSet& ps,
                       bool with_score_term) {
  ParticleSet r = ps;
  replay(model, theta, q, phi, x, r);
  double value = smc_log_marginal(r);
  if (!with_score_term) return value;
  const std::size_t K = ps.K;
  double reward = 0.0;
  std::vector<double> lw(K);
  for (std::size_t t = ps.T; t-- > 1;) {
    reward += ps.log_mean_weight[t];
    const double* l = &r.log_weights[(t - 1) * K];
    double lse = log_sum_exp({l, K});
    double s = 0.0;
    for (std::size_t i = 0; i < K; ++i) s += l[ps.ancestor(t, i)] - lse;
    value += reward * s;
  }
  return value;
}

double iwae_surrogate(const StateSpaceModel& model, ParamSpan theta, const Proposal& q,
                      ParamSpan phi, const Sequence& x, const ParticleSet& ps) {
  ParticleSet r = ps;
  replay(model, theta, q, phi, x, r);
  return sis_log_marginal(r);
}

FiniteDiffResult finite_diff_check(const std::function<double(const std::vector<double>&)>& f,
                                   const std::vector<double>& params,
                                   const std::vector<double>& analytic, double h, double rel_tol,
                                   double abs_floor) {
  if (params.size() != analytic.size())
    throw InvalidParameter("finite_diff_check: size mismatch");
  FiniteDiffResult r;
  r.numeric.resize(params.size());
  r.passed = true;
  std::vector<double> p = params;
  for (std::size_t i = 0; i < params.size(); ++i) {
    p[i] = params[i] + h;
    double fp = f(p);
    p[i] = params[i] - h;
    double fm = f(p);
    p[i] = params[i];
    double fd = (fp - fm) / (2.0 * h);
    r.numeric[i] = fd;
    double err = std::abs(analytic[i] - fd);
    r.max_abs_error = std::max(r.max_abs_error, err);
    r.max_rel_error = std::max(r.max_rel_error, err / std::max(std::abs(fd), abs_floor));
    if (!(err <= std::max(rel_tol * std::abs(fd), abs_floor))) r.passed = false;
  }
  return r;
}

}  // namespace mcfo
