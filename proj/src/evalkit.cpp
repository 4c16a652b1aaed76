#include "mcfo/evalkit.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>

#include "mcfo/dataset.hpp"
#include "mcfo/errors.hpp"
#include "mcfo/kalman.hpp"
#include "mcfo/parallel.hpp"

namespace mcfo {

namespace {

enum : std::uint64_t {
  kEvalStream = 0xE7A1,
  kStudySmc = 0x6257,
  kStudySis = 0x6258,
  kStudyFixed = 0x6A57,
  kStudyFresh = 0x6A58
};

const char* kPhiCoords[] = {"phi1", "phi2", "phi3", "phi4", "phi5"};
const char* kThetaCoords[] = {"theta1", "theta2"};

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = mean_of(v), s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

double one_step_prediction_error(const StateSpaceModel& model, ParamSpan theta,
                                 const Sequence& x, const ParticleSet& ps) {
  const std::size_t d = model.latent_dim(), o = model.obs_dim();
  std::vector<double> pred(d), mean(d), var(d), xo(o);
  double total = 0.0;
  for (std::size_t t = 1; t < ps.T; ++t) {
    std::vector<double> w = ps.normalized_weights(t - 1);
    std::fill(pred.begin(), pred.end(), 0.0);
    for (std::size_t i = 0; i < ps.K; ++i) {
      if (w[i] == 0.0) continue;
      model.transition(theta, ps.state(t - 1, i), mean.data(), var.data());
      for (std::size_t k = 0; k < d; ++k) pred[k] += w[i] * mean[k];
    }
    model.observation_mean(theta, pred.data(), xo.data());
    double sq = 0.0;
    for (std::size_t k = 0; k < o; ++k) {
      double r = xo[k] - x.at(t)[k];
      sq += r * r;
    }
    total += std::sqrt(sq);
  }
  return total;
}

EvalReport evaluate(const StateSpaceModel& model, ParamSpan theta, const Proposal* q,
                    ParamSpan phi, const std::vector<Sequence>& data, const EvalOptions& opt) {
  if (data.empty()) throw ConfigError("evaluate: empty dataset");
  if (opt.K < 1 || opt.repeats < 1) throw InvalidParameter("evaluate: K and repeats must be >= 1");
  std::unique_ptr<BootstrapProposal> boot;
  if (!q) {
    boot = std::make_unique<BootstrapProposal>(model, std::vector<double>(theta.begin(), theta.end()));
    q = boot.get();
    phi = {};
  }
  const std::size_t N = data.size(), R = opt.repeats;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> log_z(R * N, nan), ess(R * N, nan), pred(R * N, nan);
  parallel_for(R * N, opt.threads, [&](std::size_t j) {
    std::size_t r = j / N, n = j % N;
    Rng rng(derive_stream(opt.seed, {kEvalStream, r, n}));
    try {
      ParticleSet ps = smc_run(model, theta, *q, phi, data[n], opt.K, rng, {opt.scheme});
      log_z[j] = smc_log_marginal(ps);
      ess[j] = ps.mean_ess();
      pred[j] = one_step_prediction_error(model, theta, data[n], ps);
    } catch (const DegenerateFilter&) {
    }
  });

  EvalReport rep;
  rep.repeats = R;
  rep.log_z = log_z;
  std::vector<double> per_repeat;
  double ess_sum = 0.0, pred_sum = 0.0;
  std::size_t ok = 0;
  for (std::size_t r = 0; r < R; ++r) {
    double s = 0.0;
    std::size_t c = 0;
    for (std::size_t n = 0; n < N; ++n) {
      std::size_t j = r * N + n;
      if (std::isnan(log_z[j])) {
        ++rep.degenerate;
        continue;
      }
      s -= log_z[j];
      ess_sum += ess[j];
      pred_sum += pred[j];
      ++c;
    }
    ok += c;
    if (c > 0) per_repeat.push_back(s / static_cast<double>(c));
  }
  if (ok == 0) throw NumericalError("evaluate: every evaluation sweep degenerated");
  rep.nll = mean_of(per_repeat);
  rep.nll_stderr = sample_std(per_repeat) / std::sqrt(static_cast<double>(per_repeat.size()));
  rep.ess = ess_sum / static_cast<double>(ok);
  rep.pred_error = pred_sum / static_cast<double>(ok);
  return rep;
}

std::vector<Sequence> grad_study_sequences(const Lgssm& model, ParamSpan theta,
                                           const GradStudyConfig& cfg) {
  if (cfg.mode == SequenceMode::fixed)
    return simulate_dataset(model, theta, std::max<std::size_t>(cfg.num_sequences, 1), cfg.T,
                            derive_seed(cfg.seed, {kStudyFixed}))
        .sequences;
  return simulate_dataset(model, theta, cfg.replicates, cfg.T,
                          derive_seed(cfg.seed, {kStudyFresh}))
      .sequences;
}

GradStudyReport grad_study(const Lgssm& model, ParamSpan theta, ParamSpan phi,
                           const GradStudyConfig& cfg) {
  if (cfg.replicates < 1) throw InvalidParameter("grad_study: replicates must be >= 1");
  LinearProposal q;
  if (phi.size() != q.layout().size()) throw InvalidParameter("grad_study: phi must have 7 entries");
  const std::vector<Sequence> seqs = grad_study_sequences(model, theta, cfg);
  const std::size_t E = cfg.estimators.size(), R = cfg.replicates;
  constexpr std::size_t C = 7;  // theta1, theta2, phi1..phi5

  // Reference for theta: mean Kalman gradient over the sequences replicates use.
  std::vector<std::array<double, 2>> kal(seqs.size());
  for (std::size_t n = 0; n < seqs.size(); ++n) kal[n] = kalman_grad_theta(model, theta, seqs[n].values);
  std::array<double, 2> theta_ref{0.0, 0.0};
  for (std::size_t r = 0; r < R; ++r)
    for (int c = 0; c < 2; ++c) theta_ref[c] += kal[r % seqs.size()][c] / static_cast<double>(R);

  bool need_smc = false, need_sis = false;
  for (Estimator e : cfg.estimators) (e == Estimator::iwae ? need_sis : need_smc) = true;

  GradStudyReport rep;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t K : cfg.K_list) {
    // values[(r * E + e) * C + c]
    std::vector<double> values(R * E * C, nan);
    parallel_for(R, cfg.threads, [&](std::size_t r) {
      const Sequence& x = seqs[r % seqs.size()];
      std::optional<ParticleSet> smc, sis;
      try {
        if (need_smc) {
          Rng rng(derive_stream(cfg.seed, {kStudySmc, K, r}));
          smc = smc_run(model, theta, q, phi, x, K, rng, {cfg.scheme});
        }
        if (need_sis) {
          Rng rng(derive_stream(cfg.seed, {kStudySis, K, r}));
          sis = sis_run(model, theta, q, phi, x, K, rng);
        }
      } catch (const DegenerateFilter&) {
        return;
      }
      for (std::size_t e = 0; e < E; ++e) {
        std::vector<double> gt, gp;
        switch (cfg.estimators[e]) {
          case Estimator::mcfo:
            gt = grad_theta_mcfo(model, theta, x, *smc).vector;
            gp = grad_phi_mcfo(model, theta, q, phi, x, *smc).vector;
            break;
          case Estimator::aesmc_biased:
          case Estimator::aesmc_full: {
            GradPair g = grad_aesmc(model, theta, q, phi, x, *smc,
                                    cfg.estimators[e] == Estimator::aesmc_biased);
            gt = std::move(g.theta.vector);
            gp = std::move(g.phi.vector);
            break;
          }
          case Estimator::nasmc: {
            GradPair g = grad_nasmc(model, theta, q, phi, x, *smc);
            gt = std::move(g.theta.vector);
            gp = std::move(g.phi.vector);
            break;
          }
          case Estimator::iwae: {
            GradPair g = grad_iwae_from(model, theta, q, phi, x, *sis);
            gt = std::move(g.theta.vector);
            gp = std::move(g.phi.vector);
            break;
          }
        }
        double* out = &values[(r * E + e) * C];
        out[0] = gt[0];
        out[1] = gt[1];
        for (std::size_t c = 0; c < 5; ++c) out[2 + c] = gp[c];
      }
    });

    for (std::size_t e = 0; e < E; ++e) {
      for (std::size_t c = 0; c < C; ++c) {
        std::vector<double> col;
        col.reserve(R);
        for (std::size_t r = 0; r < R; ++r) {
          double v = values[(r * E + e) * C + c];
          if (!std::isnan(v)) col.push_back(v);
        }
        GradStudyRow row;
        row.estimator = to_string(cfg.estimators[e]);
        row.wrt = c < 2 ? "theta" : "phi";
        row.coord = c < 2 ? kThetaCoords[c] : kPhiCoords[c - 2];
        row.K = K;
        row.mean = mean_of(col);
        row.std = sample_std(col);
        row.n = col.size();
        row.reference = c < 2 ? theta_ref[c] : (cfg.at_optimum ? 0.0 : nan);
        rep.rows.push_back(row);
        rep.samples.push_back(std::move(col));
      }
    }
  }
  return rep;
}

void write_gradstudy_csv(std::ostream& out, const GradStudyReport& r) {
  out << "estimator,wrt,coord,K,mean,std,n,reference\n";
  for (const auto& row : r.rows)
    out << row.estimator << ',' << row.wrt << ',' << row.coord << ',' << row.K << ','
        << format_double(row.mean) << ',' << format_double(row.std) << ',' << row.n << ','
        << format_double(row.reference) << '\n';
}

void write_train_log_csv(std::ostream& out, const std::vector<TrainLogRow>& log) {
  out << "iter,objective,nll_proxy,grad_norm_theta,grad_norm_phi,ess,skipped\n";
  for (const auto& row : log)
    out << row.iter << ',' << format_double(row.objective) << ',' << format_double(row.nll_proxy)
        << ',' << format_double(row.grad_norm_theta) << ',' << format_double(row.grad_norm_phi)
        << ',' << format_double(row.ess) << ',' << row.skipped << '\n';
}

void write_eval_csv(std::ostream& out, const std::vector<EvalReport>& reports) {
  out << "checkpoint,nll,nll_stderr,ess,pred_error,repeats\n";
  for (const auto& r : reports)
    out << r.checkpoint << ',' << format_double(r.nll) << ',' << format_double(r.nll_stderr) << ','
        << format_double(r.ess) << ',' << format_double(r.pred_error) << ',' << r.repeats << '\n';
}

void write_bias_csv(std::ostream& out, const std::vector<BiasRow>& rows) {
  out << "K,k_gap,k_gap_stderr,predicted\n";
  for (const auto& r : rows)
    out << r.K << ',' << format_double(r.k_gap) << ',' << format_double(r.k_gap_stderr) << ','
        << format_double(r.predicted) << '\n';
}

CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    return cells;
  };
  if (!std::getline(in, line)) return t;
  t.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    t.rows.push_back(split(line));
  }
  return t;
}

}  // namespace mcfo
