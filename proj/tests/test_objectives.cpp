#include <doctest.h>

#include <boost/math/distributions/fisher_f.hpp>
#include <cmath>
#include <vector>

#include "mcfo/dataset.hpp"
#include "mcfo/errors.hpp"
#include "mcfo/kalman.hpp"
#include "mcfo/objectives.hpp"

using namespace mcfo;

namespace {

struct Moments {
  double mean = 0.0, var = 0.0;
  std::size_t n = 0;
  double se() const { return std::sqrt(var / n); }
};

template <class F>
Moments moments(std::size_t n, F f) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = f(i);
  Moments m;
  m.n = n;
  for (double x : v) m.mean += x / n;
  for (double x : v) m.var += (x - m.mean) * (x - m.mean) / (n - 1);
  return m;
}

std::vector<double> inflated_optimal_phi(const Lgssm& m, ParamSpan theta, double scale) {
  auto phi = optimal_linear_phi(m, theta);
  phi[5] += std::log(scale);
  phi[6] += std::log(scale);
  return phi;
}

}  // namespace

TEST_CASE("iwelbo with one particle is the elbo") {
  auto d = lgssm_training_setup();
  LinearProposal q;
  auto phi = linear_proposal_phi(0.5, 0.1, 0.6, 0.3, 0.0, 0.2, 0.5);
  Sequence x = simulate_dataset(d.model, d.theta, 1, 20, 1).sequences[0];
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng a(derive_stream(s, {400})), b(derive_stream(s, {400}));
    double e = eval_elbo(d.model, d.theta, q, phi, x, a).total;
    double iw = eval_iwelbo(d.model, d.theta, q, phi, x, 1, b).total;
    CHECK(iw == doctest::Approx(e).epsilon(1e-12));
  }
}

TEST_CASE("single step with the optimal proposal is exact for every bound") {
  auto d = lgssm_training_setup();
  LinearProposal q;
  auto phi = optimal_linear_phi(d.model, d.theta);
  for (double x1 : {-1.0, 0.6, 2.0}) {
    Sequence x = make_scalar_sequence({x1});
    double truth = kalman_log_marginal(d.model, d.theta, x.values).total;
    Rng r(derive_stream(1, {401}));
    CHECK(eval_elbo(d.model, d.theta, q, phi, x, r).total == doctest::Approx(truth).epsilon(1e-12));
    CHECK(eval_iwelbo(d.model, d.theta, q, phi, x, 8, r).total ==
          doctest::Approx(truth).epsilon(1e-12));
    CHECK(eval_mcfo_smc(d.model, d.theta, q, phi, x, 8, r).total ==
          doctest::Approx(truth).epsilon(1e-12));
    CHECK(eval_mcfo_pimh(d.model, d.theta, q, phi, x, 8, 3, r).total ==
          doctest::Approx(truth).epsilon(1e-12));
  }
}

TEST_CASE("smc bounds read the per-step log mean weights") {
  auto d = lgssm_training_setup();
  LinearProposal q;
  auto phi = linear_proposal_phi(0.5, 0.1, 0.6, 0.3, 0.0, 0.2, 0.5);
  Sequence x = simulate_dataset(d.model, d.theta, 1, 30, 2).sequences[0];
  Rng a(derive_stream(2, {402})), b(derive_stream(2, {402})), c(derive_stream(2, {402}));
  auto ps = smc_run(d.model, d.theta, q, phi, x, 16, a);
  auto m = eval_mcfo_smc(d.model, d.theta, q, phi, x, 16, b);
  auto e = eval_elbo_smc(d.model, d.theta, q, phi, x, 16, c);
  CHECK(m.per_step == ps.log_mean_weight);
  CHECK(e.per_step == ps.log_mean_weight);
  CHECK(m.total == doctest::Approx(smc_log_marginal(ps)).epsilon(1e-14));
  CHECK(m.kind == BoundKind::mcfo_smc);
  CHECK(e.kind == BoundKind::elbo_smc);
  CHECK(to_string(BoundKind::mcfo_pimh) == "mcfo_pimh");
}

TEST_CASE("iwelbo is a lower bound that tightens with K") {
  auto m = lgssm_new(0.9, 1.2, 0.5, 1.0, 1.0, 0.5);
  LinearProposal q;
  auto phi = linear_proposal_phi(0.4, 0.2, 0.3, 0.5, 0.0, 0.6, 0.8);
  Sequence x = simulate_dataset(m.model, m.theta, 1, 5, 3).sequences[0];
  double truth = kalman_log_marginal(m.model, m.theta, x.values).total;
  double prev_gap = INFINITY;
  for (std::size_t K : {1u, 4u, 16u}) {
    auto mo = moments(4000, [&](std::size_t i) {
      Rng r(derive_stream(3, {403, K, i}));
      return eval_iwelbo(m.model, m.theta, q, phi, x, K, r).total;
    });
    double gap = truth - mo.mean;
    MESSAGE("K=" << K << " gap " << gap << " +- " << mo.se());
    CHECK(gap > 4 * mo.se());
    CHECK(gap < prev_gap);
    prev_gap = gap;
  }
}

TEST_CASE("bootstrap smc bound sits below the exact marginal") {
  auto d = lgssm_training_setup();
  Sequence x = simulate_dataset(d.model, d.theta, 1, 50, 4).sequences[0];
  BootstrapProposal b(d.model, d.theta);
  double truth = kalman_log_marginal(d.model, d.theta, x.values).total;
  auto mo = moments(100, [&](std::size_t i) {
    Rng r(derive_stream(4, {404, i}));
    return eval_mcfo_smc(d.model, d.theta, b, {}, x, 100, r).total;
  });
  MESSAGE("gap " << truth - mo.mean << " +- " << mo.se());
  CHECK(mo.mean < truth);
}

TEST_CASE("smc bound approaches the exact marginal as K grows") {
  auto d = lgssm_training_setup();
  LinearProposal q;
  auto phi = inflated_optimal_phi(d.model, d.theta, 4.0);
  Sequence x = simulate_dataset(d.model, d.theta, 1, 50, 5).sequences[0];
  double truth = kalman_log_marginal(d.model, d.theta, x.values).total;
  auto gap_at = [&](std::size_t K, std::size_t n) {
    auto mo = moments(n, [&](std::size_t i) {
      Rng r(derive_stream(5, {405, K, i}));
      return eval_mcfo_smc(d.model, d.theta, q, phi, x, K, r).total;
    });
    return truth - mo.mean;
  };
  double small = gap_at(16, 400), large = gap_at(4096, 20);
  MESSAGE("gap K=16 " << small << " K=4096 " << large);
  CHECK(small > 0);
  CHECK(std::abs(large) < small / 20);
}

TEST_CASE("pimh bound: one sweep matches the smc bound in mean, more sweeps reduce variance") {
  auto d = lgssm_training_setup();
  LinearProposal q;
  auto phi = inflated_optimal_phi(d.model, d.theta, 4.0);
  Sequence x = simulate_dataset(d.model, d.theta, 1, 20, 6).sequences[0];
  const std::size_t n = 1000, K = 4;
  auto smc = moments(n, [&](std::size_t i) {
    Rng r(derive_stream(6, {406, 0, i}));
    return eval_mcfo_smc(d.model, d.theta, q, phi, x, K, r).total;
  });
  std::vector<Moments> pimh;
  for (std::size_t M : {1u, 4u, 16u})
    pimh.push_back(moments(n, [&](std::size_t i) {
      Rng r(derive_stream(6, {406, M, i}));
      return eval_mcfo_pimh(d.model, d.theta, q, phi, x, K, M, r).total;
    }));
  CHECK(std::abs(pimh[0].mean - smc.mean) < 4 * std::hypot(pimh[0].se(), smc.se()));
  boost::math::fisher_f F(n - 1, n - 1);
  double crit = boost::math::quantile(F, 0.999);
  for (std::size_t j = 1; j < pimh.size(); ++j) {
    MESSAGE("var " << pimh[j - 1].var << " -> " << pimh[j].var);
    CHECK(pimh[j].var / pimh[j - 1].var < crit);
  }
  CHECK(pimh[2].var < pimh[0].var);
}

TEST_CASE("pimh acceptance rates are probabilities") {
  auto d = lgssm_training_setup();
  LinearProposal q;
  auto phi = inflated_optimal_phi(d.model, d.theta, 4.0);
  Sequence x = simulate_dataset(d.model, d.theta, 1, 10, 7).sequences[0];
  Rng r(derive_stream(7, {407}));
  auto pb = mcfo_pimh(d.model, d.theta, q, phi, x, 8, 20, r);
  REQUIRE(pb.acceptance_rate.size() == 10);
  CHECK(pb.acceptance_rate[0] == 0.0);
  for (std::size_t t = 1; t < 10; ++t) {
    CHECK(pb.acceptance_rate[t] >= 0.0);
    CHECK(pb.acceptance_rate[t] <= 1.0);
  }
  CHECK(pb.last.K == 8);
  CHECK(pb.last.T == 10);
  CHECK_THROWS_AS(mcfo_pimh(d.model, d.theta, q, phi, x, 8, 0, r), InvalidParameter);
}

TEST_CASE("bias check vanishes for an exact single-step estimate") {
  auto d = lgssm_training_setup();
  LinearProposal q;
  Sequence x = make_scalar_sequence({0.6});
  BiasCheckOptions opt;
  opt.replicates = 50;
  opt.variance_samples = 1000;
  auto rows = asymptotic_bias_check(d.model, d.theta, q, optimal_linear_phi(d.model, d.theta), x,
                                    {4, 16}, opt);
  REQUIRE(rows.size() == 2);
  for (const auto& r : rows) {
    CHECK(std::abs(r.k_gap) < 1e-20);
    CHECK(std::abs(r.predicted) < 1e-20);
  }
}

TEST_CASE("scaled gap matches the predicted limit for a single step") {
  auto d = lgssm_training_setup();
  LinearProposal q;
  auto phi = inflated_optimal_phi(d.model, d.theta, 4.0);
  Sequence x = make_scalar_sequence({0.6});
  BiasCheckOptions opt;
  opt.replicates = 4000;
  opt.variance_samples = 200000;
  auto rows = asymptotic_bias_check(d.model, d.theta, q, phi, x, {1024}, opt);
  MESSAGE("k_gap " << rows[0].k_gap << " +- " << rows[0].k_gap_stderr << " predicted "
                   << rows[0].predicted);
  CHECK(rows[0].k_gap > 0);
  CHECK(std::abs(rows[0].k_gap - rows[0].predicted) < 4 * rows[0].k_gap_stderr + 0.02 * rows[0].predicted);
}
