#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "mcfo/errors.hpp"
#include "mcfo/gradients.hpp"
#include "mcfo/lgssm.hpp"
#include "mcfo/mlp.hpp"
#include "mcfo/samplers.hpp"

using namespace mcfo;

namespace {

using Vec = std::vector<double>;

Vec randn(Rng& r, std::size_t n, double scale = 1.0) {
  Vec v(n);
  for (double& x : v) x = scale * r.normal();
  return v;
}

// Checks model hooks at one (theta, z_prev, z, x) point: gradients of
// log p(z|z_prev) + log p(x|z) in theta, z_prev and z.
void check_model_hooks(const StateSpaceModel& m, const Vec& theta, const Vec& zp, const Vec& z,
                       const Vec& x, bool first_step) {
  const double* zpp = first_step ? nullptr : zp.data();
  auto joint = [&](const Vec& th, const Vec& a, const Vec& b) {
    return latent_log_density(m, th, first_step ? nullptr : a.data(), b.data()) +
           m.observation_log_density(th, b.data(), x.data());
  };
  Vec dth(theta.size(), 0.0), dzp(zp.size(), 0.0), dz(z.size(), 0.0);
  latent_log_density_grad(m, theta, zpp, z.data(), 1.0, dth.data(), first_step ? nullptr : dzp.data(),
                          dz.data());
  m.observation_grad(theta, z.data(), x.data(), 1.0, dth.data(), dz.data());

  auto r1 = finite_diff_check([&](const Vec& th) { return joint(th, zp, z); }, theta, dth, 1e-5);
  CHECK_MESSAGE(r1.passed, "theta rel err " << r1.max_rel_error);
  auto r2 = finite_diff_check([&](const Vec& b) { return joint(theta, zp, b); }, z, dz, 1e-5);
  CHECK_MESSAGE(r2.passed, "z rel err " << r2.max_rel_error);
  if (!first_step) {
    auto r3 = finite_diff_check([&](const Vec& a) { return joint(theta, a, z); }, zp, dzp, 1e-5);
    CHECK_MESSAGE(r3.passed, "z_prev rel err " << r3.max_rel_error);
  }
}

void check_proposal_hooks(const Proposal& q, const Vec& phi, const Vec& zp, const Vec& x,
                          const Vec& eps, const Vec& z, const Vec& c, bool first_step) {
  const double* zpp = first_step ? nullptr : zp.data();
  Vec dphi(phi.size(), 0.0), dzp(zp.size(), 0.0), dz(z.size(), 0.0);
  proposal_log_density_grad(q, phi, zpp, x.data(), z.data(), 1.0, dphi.data(),
                            first_step ? nullptr : dzp.data(), dz.data());
  auto lq = [&](const Vec& p, const Vec& a, const Vec& b) {
    return proposal_log_density(q, p, first_step ? nullptr : a.data(), x.data(), b.data());
  };
  auto r1 = finite_diff_check([&](const Vec& p) { return lq(p, zp, z); }, phi, dphi, 1e-5);
  CHECK_MESSAGE(r1.passed, "log q phi rel err " << r1.max_rel_error);
  auto r2 = finite_diff_check([&](const Vec& b) { return lq(phi, zp, b); }, z, dz, 1e-5);
  CHECK_MESSAGE(r2.passed, "log q z rel err " << r2.max_rel_error);
  if (!first_step) {
    auto r3 = finite_diff_check([&](const Vec& a) { return lq(phi, a, z); }, zp, dzp, 1e-5);
    CHECK_MESSAGE(r3.passed, "log q z_prev rel err " << r3.max_rel_error);
  }

  // Reparameterized sample: pull the adjoint c back to phi and z_prev.
  auto cz = [&](const Vec& p, const Vec& a) {
    Vec out(z.size());
    proposal_sample(q, p, first_step ? nullptr : a.data(), x.data(), eps.data(), out.data());
    double s = 0;
    for (std::size_t k = 0; k < out.size(); ++k) s += c[k] * out[k];
    return s;
  };
  Vec rphi(phi.size(), 0.0), rzp(zp.size(), 0.0);
  reparam_vjp(q, phi, zpp, x.data(), eps.data(), c.data(), rphi.data(),
              first_step ? nullptr : rzp.data());
  auto r4 = finite_diff_check([&](const Vec& p) { return cz(p, zp); }, phi, rphi, 1e-5);
  CHECK_MESSAGE(r4.passed, "reparam phi rel err " << r4.max_rel_error);
  if (!first_step) {
    auto r5 = finite_diff_check([&](const Vec& a) { return cz(phi, a); }, zp, rzp, 1e-5);
    CHECK_MESSAGE(r5.passed, "reparam z_prev rel err " << r5.max_rel_error);
  }
}

}  // namespace

TEST_CASE("parameter layouts partition the vector") {
  ParamLayout l;
  CHECK(l.add("a", 2) == 0);
  CHECK(l.add("b", 1) == 2);
  CHECK(l.size() == 3);
  CHECK(l.coordinate_name(0) == "a[0]");
  CHECK(l.coordinate_name(2) == "b");
  CHECK(l.index("b") == 2);
  CHECK(l.has("a"));
  CHECK_FALSE(l.has("c"));
  Lgssm m({});
  CHECK(m.layout().size() == 2);
  CHECK(m.layout().coordinate_name(1) == "theta2");
  LinearProposal q;
  CHECK(q.layout().size() == 7);
  CHECK(q.layout().coordinate_name(0) == "phi1");
  CHECK(q.layout().coordinate_name(6) == "log_var_qt");
}

TEST_CASE("lgssm presets and validation") {
  auto d2 = lgssm_training_setup();
  CHECK(d2.theta == Vec{0.9, 1.2});
  CHECK(d2.model.constants().mu0 == 0.5);
  CHECK(d2.model.constants().sigma0_sq == 1.0);
  CHECK(d2.model.constants().q_var == 1.0);
  CHECK(d2.model.constants().r_var == 0.01);
  auto d1 = lgssm_gradient_setup();
  CHECK(d1.theta == Vec{0.9, 10.0});
  CHECK(d1.model.constants().r_var == 1.0);
  CHECK_THROWS_AS(lgssm_new(0.9, 1.2, 0.5, 0.0, 1.0, 1.0), InvalidParameter);
  CHECK_THROWS_AS(lgssm_new(0.9, 1.2, 0.5, 1.0, -1.0, 1.0), InvalidParameter);
  CHECK_THROWS_AS(lgssm_new(0.9, 1.2, 0.5, 1.0, 1.0, 0.0), InvalidParameter);
}

TEST_CASE("lgssm transition mean vanishes at z_prev = 0") {
  auto d = lgssm_training_setup();
  double zp = 0.0, mean = 1.0, var = 0.0;
  for (double t1 : {-3.0, 0.0, 0.9, 7.0}) {
    Vec th = {t1, 1.2};
    d.model.transition(th, &zp, &mean, &var);
    CHECK(mean == 0.0);
    CHECK(var == 1.0);
  }
}

TEST_CASE("lgssm closed-form theta derivatives") {
  auto d = lgssm_training_setup();
  Rng r(derive_stream(1, {100}));
  for (int i = 0; i < 20; ++i) {
    Vec th = {r.normal(), r.normal()};
    double zp = r.normal(), z = r.normal(), x = r.normal();
    Vec g(2, 0.0);
    latent_log_density_grad(d.model, th, &zp, &z, 1.0, g.data(), nullptr, nullptr);
    CHECK(g[0] == doctest::Approx((z - th[0] * zp) * zp / 1.0));
    CHECK(g[1] == 0.0);
    Vec h(2, 0.0);
    d.model.observation_grad(th, &z, &x, 1.0, h.data(), nullptr);
    CHECK(h[0] == 0.0);
    CHECK(h[1] == doctest::Approx((x - th[1] * z) * z / 0.01));
  }
}

TEST_CASE("lgssm gradient hooks match finite differences at 100 points") {
  for (auto inst : {lgssm_training_setup(), lgssm_gradient_setup()}) {
    Rng r(derive_stream(2, {101}));
    for (int i = 0; i < 100; ++i) {
      Vec th = {r.normal(), 2.0 * r.normal()};
      check_model_hooks(inst.model, th, {r.normal()}, {r.normal()}, {r.normal()}, i % 10 == 0);
    }
  }
}

TEST_CASE("optimal proposal closed forms") {
  auto d = lgssm_training_setup();
  auto p1 = lgssm_optimal_proposal(d.model, d.theta, 0.6, std::nullopt);
  CHECK(p1.mean[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(p1.variance[0] == doctest::Approx(0.01 / 1.45).epsilon(1e-14));
  auto p2 = lgssm_optimal_proposal(d.model, d.theta, 0.0, 0.0);
  CHECK(p2.mean[0] == 0.0);

  // Uninformative observation: the proposal tends to the transition.
  auto wide = lgssm_new(0.9, 1.2, 0.5, 1.0, 1.0, 1e12);
  auto pw = lgssm_optimal_proposal(wide.model, wide.theta, 3.0, 2.0);
  CHECK(pw.mean[0] == doctest::Approx(1.8).epsilon(1e-9));
  CHECK(pw.variance[0] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("optimal linear phi reproduces the optimal proposal") {
  auto d = lgssm_training_setup();
  LinearProposal q;
  Vec phi = optimal_linear_phi(d.model, d.theta);
  const double den = 0.01 + 1.0 * 1.2 * 1.2;
  CHECK(phi[2] == doctest::Approx(0.01 * 0.9 / den));
  CHECK(phi[3] == doctest::Approx(1.0 * 1.2 / den));
  Rng r(derive_stream(3, {1}));
  for (int i = 0; i < 50; ++i) {
    double x = 2 * r.normal(), zp = r.normal(), mean, var;
    q.params(phi, nullptr, &x, &mean, &var);
    auto a = lgssm_optimal_proposal(d.model, d.theta, x, std::nullopt);
    CHECK(mean == doctest::Approx(a.mean[0]).epsilon(1e-13));
    CHECK(var == doctest::Approx(a.variance[0]).epsilon(1e-13));
    q.params(phi, &zp, &x, &mean, &var);
    auto b = lgssm_optimal_proposal(d.model, d.theta, x, zp);
    CHECK(mean == doctest::Approx(b.mean[0]).epsilon(1e-13));
    CHECK(var == doctest::Approx(b.variance[0]).epsilon(1e-13));
  }
}

TEST_CASE("optimal proposal: weight does not depend on the sampled state") {
  auto d = lgssm_training_setup();
  LinearProposal q;
  Vec phi = optimal_linear_phi(d.model, d.theta);
  Rng r(derive_stream(3, {2}));
  for (int i = 0; i < 20; ++i) {
    double x = 2 * r.normal(), zp = r.normal();
    const double* parents[] = {nullptr, &zp};
    for (const double* parent : parents) {
      double ref = 0.0;
      for (int k = 0; k < 10; ++k) {
        double e = r.normal(), z;
        proposal_sample(q, phi, parent, &x, &e, &z);
        double lw = step_log_weight(d.model, d.theta, q, phi, parent, &x, &z);
        if (k == 0)
          ref = lw;
        else
          CHECK(std::abs(lw - ref) <= 1e-10 * std::abs(ref) + 1e-12);
      }
    }
  }
}

TEST_CASE("linear proposal basics") {
  LinearProposal q;
  Vec phi = linear_proposal_phi(0.3, -0.2, 0.7, 0.4, 0.1, 0.5, 2.0);
  CHECK(phi[5] == doctest::Approx(std::log(0.5)));
  double zp = 1.5, x = -0.5, mean, var, z, e = 0.0;
  q.params(phi, &zp, &x, &mean, &var);
  CHECK(mean == doctest::Approx(0.7 * 1.5 + 0.4 * -0.5 + 0.1));
  CHECK(var == doctest::Approx(2.0));
  proposal_sample(q, phi, &zp, &x, &e, &z);
  CHECK(z == mean);

  // Zero coefficients and unit variance: a standard normal ignoring inputs.
  Vec zero(7, 0.0);
  q.params(zero, &zp, &x, &mean, &var);
  CHECK(mean == 0.0);
  CHECK(var == 1.0);
  q.params(zero, nullptr, &x, &mean, &var);
  CHECK(mean == 0.0);
  CHECK(var == 1.0);

  // dz/dphi3 = z_prev, dz/dphi4 = x, dz/dphi5 = 1, dz/dlog_var = sqrt(var) eps / 2.
  double eps = 0.8, dz = 1.0;
  Vec g(7, 0.0);
  reparam_vjp(q, phi, &zp, &x, &eps, &dz, g.data(), nullptr);
  CHECK(g[2] == doctest::Approx(zp));
  CHECK(g[3] == doctest::Approx(x));
  CHECK(g[4] == doctest::Approx(1.0));
  CHECK(g[6] == doctest::Approx(0.5 * std::sqrt(2.0) * eps));
  Vec g0(7, 0.0);
  double eps0 = 0.0;
  reparam_vjp(q, phi, &zp, &x, &eps0, &dz, g0.data(), nullptr);
  CHECK(g0[6] == 0.0);
}

TEST_CASE("linear proposal hooks match finite differences at 100 points") {
  LinearProposal q;
  Rng r(derive_stream(4, {1}));
  for (int i = 0; i < 100; ++i) {
    Vec phi = randn(r, 7, 0.5);
    Vec eps = {r.normal()}, zp = {r.normal()}, x = {r.normal()};
    Vec z(1);
    bool first = i % 10 == 0;
    proposal_sample(q, phi, first ? nullptr : zp.data(), x.data(), eps.data(), z.data());
    check_proposal_hooks(q, phi, zp, x, eps, z, {r.normal()}, first);
  }
}

TEST_CASE("proposal density integrates to one") {
  LinearProposal q;
  Vec phi = linear_proposal_phi(0.3, -0.2, 0.7, 0.4, 0.1, 0.5, 2.0);
  double zp = 1.5, x = -0.5;
  const double* parents[] = {nullptr, &zp};
  for (const double* parent : parents) {
    double mean, var;
    q.params(phi, parent, &x, &mean, &var);
    const int n = 20001;
    const double lo = mean - 12 * std::sqrt(var), hi = mean + 12 * std::sqrt(var);
    const double h = (hi - lo) / (n - 1);
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      double z = lo + i * h;
      double f = std::exp(proposal_log_density(q, phi, parent, &x, &z));
      s += (i == 0 || i == n - 1) ? 0.5 * f : f;
    }
    CHECK(std::abs(s * h - 1.0) < 1e-6);
  }
}

TEST_CASE("mlp ssm with zero weights") {
  MlpSsm m(3, 2, 16);
  Vec theta(m.layout().size(), 0.0);
  Vec zp = {0.3, -1.0, 2.0}, mean(3), var(3);
  m.transition(theta, zp.data(), mean.data(), var.data());
  for (int k = 0; k < 3; ++k) {
    CHECK(mean[k] == 0.0);
    CHECK(var[k] == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  }
}

TEST_CASE("mlp ssm parameter count") {
  MlpSsm m(3, 2, 16);
  // trans: 16*3 + 16 + 6*16 + 6; obs: 16*3 + 16 + 2*16 + 2; obs.log_var: 2.
  std::size_t expect = (48 + 16 + 96 + 6) + (48 + 16 + 32 + 2) + 2;
  CHECK(m.layout().size() == expect);
  std::size_t total = 0;
  for (const auto& s : m.layout().slices()) total += s.length;
  CHECK(total == expect);
  CHECK_THROWS_AS(MlpSsm(3, 2, 65), InvalidParameter);
  CHECK_THROWS_AS(MlpSsm(0, 2, 8), InvalidParameter);
}

TEST_CASE("mlp ssm hooks match finite differences") {
  for (auto kind : {ObservationKind::gaussian, ObservationKind::bernoulli}) {
    Rng r(derive_stream(5, {static_cast<std::uint64_t>(kind)}));
    auto inst = mlp_ssm_new(3, 2, 16, r, kind);
    for (int i = 0; i < 10; ++i) {
      Vec th = inst.theta;
      for (double& v : th) v += 0.3 * r.normal();
      Vec x = randn(r, 2);
      if (kind == ObservationKind::bernoulli)
        for (double& v : x) v = v > 0 ? 1.0 : 0.0;
      check_model_hooks(inst.model, th, randn(r, 3), randn(r, 3), x, i == 0);
    }
  }
}

TEST_CASE("mlp proposal") {
  Rng r(derive_stream(6, {1}));
  auto inst = mlp_proposal_new(3, 2, 8, r);
  CHECK(inst.proposal.encoder_dim() == 8);
  CHECK(inst.proposal.layout().slice("enc.W").length == 8 * 2);
  CHECK(inst.proposal.layout().slice("head.W").length == 6 * (3 + 8 + 1));

  // Zero weights: output ignores inputs.
  Vec zero(inst.proposal.layout().size(), 0.0);
  Vec m1(3), v1(3), m2(3), v2(3), zp = {1, 2, 3}, x1 = {0.5, -1}, x2 = {4, 4};
  inst.proposal.params(zero, zp.data(), x1.data(), m1.data(), v1.data());
  inst.proposal.params(zero, nullptr, x2.data(), m2.data(), v2.data());
  CHECK(m1 == m2);
  CHECK(v1 == v2);

  for (int i = 0; i < 10; ++i) {
    Vec phi = inst.phi;
    for (double& v : phi) v += 0.3 * r.normal();
    Vec eps = randn(r, 3), zpv = randn(r, 3), x = randn(r, 2), z(3);
    bool first = i == 0;
    proposal_sample(inst.proposal, phi, first ? nullptr : zpv.data(), x.data(), eps.data(),
                    z.data());
    check_proposal_hooks(inst.proposal, phi, zpv, x, eps, z, randn(r, 3), first);
  }
}

TEST_CASE("bootstrap proposal equals the model transition") {
  auto d = lgssm_training_setup();
  BootstrapProposal b(d.model, d.theta);
  CHECK(b.layout().size() == 0);
  double zp = 0.7, x = 9.0, mean, var, pm, pv;
  b.params({}, &zp, &x, &mean, &var);
  d.model.transition(d.theta, &zp, &pm, &pv);
  CHECK(mean == pm);
  CHECK(var == pv);
  b.params({}, nullptr, &x, &mean, &var);
  d.model.prior(d.theta, &pm, &pv);
  CHECK(mean == pm);
  CHECK(var == pv);
}
