#include "mcfo/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <deque>
#include <memory>
#include <optional>

#include "mcfo/errors.hpp"
#include "mcfo/objectives.hpp"
#include "mcfo/parallel.hpp"

namespace mcfo {

AdamState adam_init(std::size_t n, double lr) {
  AdamState s;
  s.m.assign(n, 0.0);
  s.v.assign(n, 0.0);
  s.lr = lr;
  return s;
}

double adam_learning_rate(const AdamState& s) {
  if (s.decay_every == 0) return s.lr;
  double k = std::floor(static_cast<double>(s.step) / static_cast<double>(s.decay_every));
  return std::max(s.lr_floor, s.lr * std::pow(s.decay_factor, k));
}

void adam_step(AdamState& s, std::vector<double>& params, const std::vector<double>& grad) {
  if (params.size() != grad.size()) throw InvalidParameter("adam_step: size mismatch");
  if (s.m.size() != params.size()) {
    s.m.assign(params.size(), 0.0);
    s.v.assign(params.size(), 0.0);
  }
  for (double g : grad)
    if (!std::isfinite(g)) throw NumericalError("adam_step: non-finite gradient");
  const double lr = adam_learning_rate(s);
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * grad[i];
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * grad[i] * grad[i];
    double m_hat = s.m[i] / c1;
    double v_hat = s.v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + s.eps);
  }
}

std::string TrainConfig::digest_text() const {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "theta_est=%s phi_est=%s train_theta=%d train_phi=%d sampler=%d sweeps=%zu "
                "scheme=%d K_theta=%zu K_phi=%zu batch=%zu iterations=%zu lr=%.17g "
                "decay=%.17g/%llu floor=%.17g seed=%llu",
                to_string(theta_estimator).c_str(), to_string(phi_estimator).c_str(), train_theta,
                train_phi, static_cast<int>(sampler), pimh_sweeps, static_cast<int>(scheme),
                K_theta, K_phi, batch, iterations, lr, decay_factor,
                static_cast<unsigned long long>(decay_every), lr_floor,
                static_cast<unsigned long long>(seed));
  return buf;
}

namespace {

enum : std::uint64_t { kBatchStream = 0x7261, kSweepStream = 0x7377 };

enum class SweepType { smc, sis, pimh };

SweepType sweep_type(Estimator e, SamplerKind s) {
  if (e == Estimator::iwae) return SweepType::sis;
  if (s == SamplerKind::pimh) return SweepType::pimh;
  return SweepType::smc;
}

struct Sweep {
  ParticleSet ps;
  double bound = 0.0;
};

Sweep run_sweep(SweepType type, const StateSpaceModel& model, ParamSpan theta, const Proposal& q,
                ParamSpan phi, const Sequence& x, std::size_t K, Rng& rng,
                const TrainConfig& cfg) {
  Sweep s;
  switch (type) {
    case SweepType::smc:
      s.ps = smc_run(model, theta, q, phi, x, K, rng, {cfg.scheme});
      s.bound = smc_log_marginal(s.ps);
      break;
    case SweepType::sis:
      s.ps = sis_run(model, theta, q, phi, x, K, rng);
      s.bound = sis_log_marginal(s.ps);
      if (!std::isfinite(s.bound)) throw DegenerateFilter(x.T - 1);
      break;
    case SweepType::pimh: {
      auto r = mcfo_pimh(model, theta, q, phi, x, K, cfg.pimh_sweeps, rng, {cfg.scheme});
      s.ps = std::move(r.last);
      s.bound = r.bound.total;
      break;
    }
  }
  return s;
}

struct ElementResult {
  bool ok = false;
  double bound = 0.0;
  double ess = 0.0;
  std::vector<double> g_theta, g_phi;
};

struct GradCache {
  const ParticleSet* ps = nullptr;
  Estimator e{};
  GradPair pair;
};

std::vector<double> estimate(Wrt wrt, Estimator e, const StateSpaceModel& model, ParamSpan theta,
                             const Proposal& q, ParamSpan phi, const Sequence& x,
                             const ParticleSet& ps, std::optional<GradCache>& cache) {
  auto pair_for = [&](auto compute) -> const GradPair& {
    if (!cache || cache->ps != &ps || cache->e != e) cache = GradCache{&ps, e, compute()};
    return cache->pair;
  };
  switch (e) {
    case Estimator::mcfo:
      return wrt == Wrt::theta ? grad_theta_mcfo(model, theta, x, ps).vector
                               : grad_phi_mcfo(model, theta, q, phi, x, ps).vector;
    case Estimator::nasmc:
      if (wrt == Wrt::theta) return grad_theta_mcfo(model, theta, x, ps).vector;
      return grad_nasmc(model, theta, q, phi, x, ps).phi.vector;
    case Estimator::aesmc_biased:
    case Estimator::aesmc_full: {
      bool drop = e == Estimator::aesmc_biased;
      const GradPair& p = pair_for([&] { return grad_aesmc(model, theta, q, phi, x, ps, drop); });
      return wrt == Wrt::theta ? p.theta.vector : p.phi.vector;
    }
    case Estimator::iwae: {
      const GradPair& p = pair_for([&] { return grad_iwae_from(model, theta, q, phi, x, ps); });
      return wrt == Wrt::theta ? p.theta.vector : p.phi.vector;
    }
  }
  return {};
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TrainResult train(const StateSpaceModel& model, const Proposal* q, std::vector<double> theta,
                  std::vector<double> phi, const std::vector<Sequence>& data,
                  const TrainConfig& cfg) {
  AdamState at = adam_init(theta.size(), cfg.lr);
  AdamState ap = adam_init(phi.size(), cfg.lr);
  for (AdamState* s : {&at, &ap}) {
    s->decay_factor = cfg.decay_factor;
    s->decay_every = cfg.decay_every;
    s->lr_floor = cfg.lr_floor;
  }
  return train(model, q, std::move(theta), std::move(phi), std::move(at), std::move(ap), data,
               cfg);
}

TrainResult train(const StateSpaceModel& model, const Proposal* q, std::vector<double> theta,
                  std::vector<double> phi, AdamState adam_theta, AdamState adam_phi,
                  const std::vector<Sequence>& data, const TrainConfig& cfg) {
  if (data.empty()) throw InvalidParameter("train: empty dataset");
  if (cfg.batch < 1 || cfg.K_theta < 1 || cfg.K_phi < 1)
    throw InvalidParameter("train: batch and K must be >= 1");
  if (theta.size() != model.layout().size())
    throw InvalidParameter("train: theta does not match the model layout");
  if (q && phi.size() != q->layout().size())
    throw InvalidParameter("train: phi does not match the proposal layout");
  if (cfg.sampler == SamplerKind::pimh)
    for (Estimator e : {cfg.theta_estimator, cfg.phi_estimator})
      if (e != Estimator::mcfo && e != Estimator::nasmc)
        throw InvalidParameter("train: the PIMH sampler supports mcfo and nasmc estimators only");

  const bool do_theta = cfg.train_theta;
  const bool do_phi = cfg.train_phi && q != nullptr && !phi.empty();
  const SweepType t_type = sweep_type(cfg.theta_estimator, cfg.sampler);
  const SweepType p_type = sweep_type(cfg.phi_estimator, cfg.sampler);
  const bool shared = !do_theta || !do_phi || (t_type == p_type && cfg.K_theta == cfg.K_phi);

  TrainResult res;
  res.adam_theta = std::move(adam_theta);
  res.adam_phi = std::move(adam_phi);
  std::deque<std::size_t> window;

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    Rng brng(derive_stream(cfg.seed, {kBatchStream, it}));
    std::vector<std::size_t> idx(cfg.batch);
    for (auto& i : idx) i = static_cast<std::size_t>(brng.below(data.size()));

    std::vector<ElementResult> out(cfg.batch);
    parallel_for(cfg.batch, cfg.threads, [&](std::size_t b) {
      const Sequence& x = data[idx[b]];
      std::unique_ptr<BootstrapProposal> boot;
      const Proposal* qq = q;
      if (!qq) {
        boot = std::make_unique<BootstrapProposal>(model, theta);
        qq = boot.get();
      }
      ElementResult& r = out[b];
      try {
        std::optional<GradCache> cache;
        SweepType first_type = do_theta ? t_type : p_type;
        std::size_t first_K = do_theta ? cfg.K_theta : cfg.K_phi;
        Rng rng0(derive_stream(cfg.seed, {kSweepStream, it, b, 0}));
        Sweep s0 = run_sweep(first_type, model, theta, *qq, phi, x, first_K, rng0, cfg);
        r.bound = s0.bound;
        r.ess = s0.ps.mean_ess();
        if (do_theta)
          r.g_theta = estimate(Wrt::theta, cfg.theta_estimator, model, theta, *qq, phi, x, s0.ps,
                               cache);
        if (do_phi) {
          if (shared) {
            r.g_phi =
                estimate(Wrt::phi, cfg.phi_estimator, model, theta, *qq, phi, x, s0.ps, cache);
          } else {
            Rng rng1(derive_stream(cfg.seed, {kSweepStream, it, b, 1}));
            Sweep s1 = run_sweep(p_type, model, theta, *qq, phi, x, cfg.K_phi, rng1, cfg);
            r.g_phi =
                estimate(Wrt::phi, cfg.phi_estimator, model, theta, *qq, phi, x, s1.ps, cache);
          }
        }
        r.ok = true;
      } catch (const DegenerateFilter&) {
        r.ok = false;
      }
    });

    TrainLogRow row;
    row.iter = it;
    std::vector<double> gt(theta.size(), 0.0), gp(phi.size(), 0.0);
    std::size_t n_ok = 0;
    for (const auto& r : out) {
      if (!r.ok) {
        ++row.skipped;
        continue;
      }
      ++n_ok;
      row.objective += r.bound;
      row.ess += r.ess;
      for (std::size_t k = 0; k < r.g_theta.size(); ++k) gt[k] += r.g_theta[k];
      for (std::size_t k = 0; k < r.g_phi.size(); ++k) gp[k] += r.g_phi[k];
    }
    res.skipped_total += row.skipped;
    window.push_back(row.skipped);
    if (window.size() > cfg.degenerate_window) window.pop_front();
    std::size_t win_skipped = 0;
    for (auto s : window) win_skipped += s;
    if (static_cast<double>(win_skipped) >
        0.1 * static_cast<double>(window.size() * cfg.batch)) {
      throw NumericalError("train: more than 10% of batch elements degenerate at iteration " +
                           std::to_string(it));
    }
    if (n_ok > 0) {
      const double inv = 1.0 / static_cast<double>(n_ok);
      row.objective *= inv;
      row.ess *= inv;
      for (double& g : gt) g *= inv;
      for (double& g : gp) g *= inv;
      row.grad_norm_theta = norm(gt);
      row.grad_norm_phi = norm(gp);
      if (!std::isfinite(row.grad_norm_theta) || !std::isfinite(row.grad_norm_phi))
        throw NumericalError("train: non-finite gradient at iteration " + std::to_string(it));
      // Ascent on the bound as descent on its negation.
      if (do_theta) {
        for (double& g : gt) g = -g;
        adam_step(res.adam_theta, theta, gt);
      }
      if (do_phi) {
        for (double& g : gp) g = -g;
        adam_step(res.adam_phi, phi, gp);
      }
    }
    row.nll_proxy = -row.objective;
    res.log.push_back(row);
    if (cfg.eval_every > 0 && cfg.on_eval && (it + 1) % cfg.eval_every == 0)
      cfg.on_eval(it + 1, theta, phi);
  }
  res.theta = std::move(theta);
  res.phi = std::move(phi);
  return res;
}

}  // namespace mcfo
