#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "mcfo/cli.hpp"
#include "mcfo/config.hpp"
#include "mcfo/dataset.hpp"
#include "mcfo/errors.hpp"
#include "mcfo/evalkit.hpp"
#include "mcfo/kalman.hpp"

using namespace mcfo;
using Vec = std::vector<double>;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("mcfo_evalkit_" + name)).string();
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void spit(const std::string& path, const std::string& data) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << data;
}

int run(const std::vector<std::string>& args) { return cli_main(args); }

}  // namespace

TEST_CASE("simulate: empty dataset has only a header") {
  auto d = lgssm_training_setup();
  auto ds = simulate_dataset(d.model, d.theta, 0, 10, 1);
  CHECK(ds.sequences.empty());
  const std::string path = temp_path("empty.csv");
  write_dataset(path, ds);
  std::string text = slurp(path);
  CHECK(text.rfind("dims=1 T=10 model_digest=", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 1);
  std::remove(path.c_str());
}

TEST_CASE("simulate: reproducible and with the right first-step law") {
  auto d = lgssm_training_setup();
  auto a = simulate_dataset(d.model, d.theta, 2000, 3, 5);
  auto b = simulate_dataset(d.model, d.theta, 2000, 3, 5);
  for (std::size_t n = 0; n < a.sequences.size(); ++n) CHECK(a.sequences[n].values == b.sequences[n].values);
  // x_1 ~ N(theta2 mu0, theta2^2 sigma0^2 + r) = N(0.6, 1.45).
  double s = 0;
  for (const auto& seq : a.sequences) s += seq.values[0];
  CHECK(std::abs(s / 2000 - 0.6) < 4 * std::sqrt(1.45 / 2000));
  auto c = simulate_dataset(d.model, d.theta, 1, 3, 6);
  CHECK(c.sequences[0].values != a.sequences[0].values);
}

TEST_CASE("dataset round trip and malformed input") {
  auto d = lgssm_training_setup();
  auto ds = simulate_dataset(d.model, d.theta, 4, 7, 2);
  const std::string path = temp_path("ds.csv");
  write_dataset(path, ds);
  auto back = read_dataset(path);
  CHECK(back.T == 7);
  CHECK(back.dim == 1);
  CHECK(back.model_digest == ds.model_digest);
  REQUIRE(back.sequences.size() == 4);
  for (std::size_t n = 0; n < 4; ++n) CHECK(back.sequences[n].values == ds.sequences[n].values);

  spit(path, "dims=1 T=3 model_digest=00\n1,2\n");
  CHECK_THROWS_AS(read_dataset(path), ConfigError);
  spit(path, "dims=1 T=2 model_digest=00\n1,abc\n");
  CHECK_THROWS_AS(read_dataset(path), ConfigError);
  spit(path, "T=2\n1,2\n");
  CHECK_THROWS_AS(read_dataset(path), ConfigError);
  std::remove(path.c_str());
  CHECK_THROWS_AS(read_dataset(temp_path("missing.csv")), ConfigError);
}

TEST_CASE("format_double round-trips") {
  for (double v : {0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, 0.0}) CHECK(std::stod(format_double(v)) == v);
}

TEST_CASE("evaluate: single particle has ESS one, exact single-step estimate") {
  auto d = lgssm_training_setup();
  LinearProposal q;
  auto phi = optimal_linear_phi(d.model, d.theta);
  auto data = simulate_dataset(d.model, d.theta, 5, 10, 3).sequences;
  EvalOptions opt;
  opt.K = 1;
  opt.repeats = 3;
  auto r1 = evaluate(d.model, d.theta, &q, phi, data, opt);
  CHECK(r1.ess == 1.0);
  CHECK(r1.repeats == 3);

  std::vector<Sequence> one = {make_scalar_sequence({0.6}), make_scalar_sequence({-1.0})};
  opt.K = 20;
  auto r2 = evaluate(d.model, d.theta, &q, phi, one, opt);
  double expect = -0.5 * (kalman_log_marginal(d.model, d.theta, one[0].values).total +
                          kalman_log_marginal(d.model, d.theta, one[1].values).total);
  CHECK(r2.nll == doctest::Approx(expect).epsilon(1e-12));
  CHECK(r2.ess == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(r2.nll_stderr == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(evaluate(d.model, d.theta, &q, phi, {}, opt), ConfigError);
}

TEST_CASE("evaluate: ESS bounds, finite outputs, bootstrap fallback") {
  auto d = lgssm_training_setup();
  auto data = simulate_dataset(d.model, d.theta, 5, 20, 4).sequences;
  EvalOptions opt;
  opt.K = 30;
  opt.repeats = 4;
  auto r = evaluate(d.model, d.theta, nullptr, {}, data, opt);
  CHECK(r.ess >= 1.0);
  CHECK(r.ess <= 30.0);
  CHECK(std::isfinite(r.nll));
  CHECK(std::isfinite(r.pred_error));
  CHECK(r.pred_error > 0.0);
  CHECK(r.log_z.size() == 20);
  CHECK(r.degenerate == 0);
}

TEST_CASE("one-step prediction error with a single exact particle") {
  auto d = lgssm_training_setup();
  BootstrapProposal b(d.model, d.theta);
  Sequence x = make_scalar_sequence({0.3, -0.2, 0.8});
  Rng rng(derive_stream(1, {700}));
  ParticleSet ps = smc_run(d.model, d.theta, b, {}, x, 1, rng);
  double expect = 0.0;
  for (std::size_t t = 1; t < 3; ++t) expect += std::abs(1.2 * 0.9 * ps.z[t - 1] - x.values[t]);
  CHECK(one_step_prediction_error(d.model, d.theta, x, ps) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("gradient study rows and references") {
  auto d = lgssm_gradient_setup();
  GradStudyConfig cfg;
  cfg.K_list = {10, 20};
  cfg.replicates = 20;
  cfg.T = 10;
  cfg.at_optimum = true;
  auto phi = optimal_linear_phi(d.model, d.theta);
  auto rep = grad_study(d.model, d.theta, phi, cfg);
  CHECK(rep.rows.size() == 3 * 2 * 7);
  auto seqs = grad_study_sequences(d.model, d.theta, cfg);
  REQUIRE(seqs.size() == 1);
  auto g = kalman_grad_theta(d.model, d.theta, seqs[0].values);
  for (const auto& row : rep.rows) {
    CHECK(row.n == 20);
    if (row.wrt == "theta")
      CHECK(row.reference == doctest::Approx(row.coord == "theta1" ? g[0] : g[1]).epsilon(1e-12));
    else
      CHECK(row.reference == 0.0);
  }
  cfg.mode = SequenceMode::fresh;
  CHECK(grad_study_sequences(d.model, d.theta, cfg).size() == 20);
}

TEST_CASE("csv writers round trip through the reader") {
  GradStudyReport rep;
  rep.rows.push_back({"mcfo", "phi", "phi1", 100, 0.1, 1.0 / 3.0, 1000, 0.0});
  std::stringstream ss;
  write_gradstudy_csv(ss, rep);
  auto t = read_csv(ss);
  CHECK(t.header == std::vector<std::string>{"estimator", "wrt", "coord", "K", "mean", "std", "n",
                                             "reference"});
  REQUIRE(t.rows.size() == 1);
  CHECK(t.rows[0][0] == "mcfo");
  CHECK(std::stod(t.rows[0][5]) == 1.0 / 3.0);

  std::vector<TrainLogRow> log(1);
  log[0].objective = -1.0 / 7.0;
  log[0].ess = 12.5;
  std::stringstream s2;
  write_train_log_csv(s2, log);
  auto t2 = read_csv(s2);
  CHECK(t2.header.size() == 7);
  CHECK(std::stod(t2.rows[0][1]) == -1.0 / 7.0);

  EvalReport er;
  er.checkpoint = "a.ckpt";
  er.nll = 12.0 / 11.0;
  std::stringstream s3;
  write_eval_csv(s3, {er});
  auto t3 = read_csv(s3);
  CHECK(t3.header == std::vector<std::string>{"checkpoint", "nll", "nll_stderr", "ess",
                                              "pred_error", "repeats"});
  CHECK(std::stod(t3.rows[0][1]) == 12.0 / 11.0);
}

TEST_CASE("config parsing and overrides") {
  auto s = Settings::from_text("[model]\nkind = lgssm\npreset = d2\n[proposal]\nkind = optimal\n");
  s.apply_override("model.theta1=0.5");
  CHECK(s.get("model.kind", "") == "lgssm");
  CHECK(s.get_double("model.theta1", 0.0) == 0.5);
  auto setup = build_setup(s);
  CHECK(setup.theta == Vec{0.5, 1.2});
  CHECK_THROWS_AS(s.apply_override("novalue"), ConfigError);
  CHECK_THROWS_AS(s.get_double("model.kind", 0.0), ConfigError);
  auto bad = Settings::from_text("[model]\nkind = spline\n");
  CHECK_THROWS_AS(build_setup(bad), ConfigError);
  CHECK(split_list("10, 100,1000") == std::vector<std::string>{"10", "100", "1000"});
}

TEST_CASE("cli: exit codes") {
  const std::string empty = temp_path("cli_empty.csv"), out = temp_path("cli_out.csv");
  auto d = lgssm_training_setup();
  write_dataset(empty, simulate_dataset(d.model, d.theta, 0, 5, 1));
  CHECK(run({"eval", "--data", empty, "--out", out}) == 2);
  CHECK(run({"simulate", "--bogus"}) == 2);
  CHECK(run({"frobnicate"}) == 2);
  CHECK(run({"--help"}) == 0);
  CHECK(run({"simulate", "--set", "model.nonsense=1", "--out", out}) == 2);

  const std::string bad = temp_path("cli_bad.csv");
  auto ds = simulate_dataset(d.model, d.theta, 4, 5, 1);
  for (auto& s : ds.sequences) s.values[2] = 1e300;
  write_dataset(bad, ds);
  CHECK(run({"train", "--data", bad, "--out", out, "--set", "train.iterations=3", "--set",
             "train.batch=4"}) == 3);
  for (const auto& p : {empty, out, bad}) std::remove(p.c_str());
}

TEST_CASE("cli: subcommands are deterministic and honour the seed fallback") {
  const std::string a = temp_path("det_a.csv"), b = temp_path("det_b.csv"), ds = temp_path("det_ds.csv");
  CHECK(run({"simulate", "--N", "3", "--T", "5", "--model", "lgssm-d2", "--seed", "4", "--out", a}) == 0);
  CHECK(run({"simulate", "--N", "3", "--T", "5", "--model", "lgssm-d2", "--seed", "4", "--out", b}) == 0);
  CHECK(slurp(a) == slurp(b));
  auto back = read_dataset(a);
  CHECK(back.sequences.size() == 3);

  ::setenv("MCFO_SEED", "4", 1);
  CHECK(run({"simulate", "--N", "3", "--T", "5", "--model", "lgssm-d2", "--out", b}) == 0);
  ::unsetenv("MCFO_SEED");
  CHECK(slurp(a) == slurp(b));
  CHECK(run({"simulate", "--N", "3", "--T", "5", "--model", "lgssm-d2", "--seed", "5", "--out", b}) == 0);
  CHECK(slurp(a) != slurp(b));

  CHECK(run({"simulate", "--N", "10", "--T", "10", "--model", "lgssm-d2", "--out", ds}) == 0);
  std::vector<std::string> train = {"train", "--data", ds, "--set", "train.iterations=3", "--set",
                                    "train.batch=2", "--set", "proposal.kind=linear"};
  auto t1 = train, t2 = train;
  t1.insert(t1.end(), {"--out", a});
  t2.insert(t2.end(), {"--out", b});
  CHECK(run(t1) == 0);
  CHECK(run(t2) == 0);
  CHECK(slurp(a) == slurp(b));
  CHECK(slurp(a).rfind("iter,objective,nll_proxy,grad_norm_theta,grad_norm_phi,ess,skipped\n", 0) == 0);

  std::vector<std::string> gs = {"gradstudy", "--K", "5,10", "--reps", "4", "--at", "optimum",
                                 "--set", "gradstudy.T=8"};
  auto g1 = gs, g2 = gs;
  g1.insert(g1.end(), {"--out", a});
  g2.insert(g2.end(), {"--out", b, "--threads", "2"});
  CHECK(run(g1) == 0);
  CHECK(run(g2) == 0);
  CHECK(slurp(a) == slurp(b));
  std::stringstream ss(slurp(a));
  CHECK(read_csv(ss).rows.size() == 3 * 2 * 7);
  for (const auto& p : {a, b, ds}) std::remove(p.c_str());
}

TEST_CASE("grad study sequences follow the study seed in both modes") {
  auto d = lgssm_gradient_setup();
  for (auto mode : {SequenceMode::fixed, SequenceMode::fresh}) {
    GradStudyConfig a, b;
    a.mode = b.mode = mode;
    a.replicates = b.replicates = 2;
    a.T = b.T = 5;
    b.seed = a.seed + 1;
    CHECK(grad_study_sequences(d.model, d.theta, a)[0].values !=
          grad_study_sequences(d.model, d.theta, b)[0].values);
    CHECK(grad_study_sequences(d.model, d.theta, a)[0].values ==
          grad_study_sequences(d.model, d.theta, a)[0].values);
  }
}

TEST_CASE("train writes periodic evaluation rows") {
  const std::string data = temp_path("cadence_data.csv"), out = temp_path("cadence_log.csv"),
                    ev = temp_path("cadence_eval.csv");
  REQUIRE(run({"simulate", "--N", "6", "--T", "8", "--seed", "3", "--out", data}) == 0);
  REQUIRE(run({"train", "--data", data, "--seed", "3", "--set", "train.iterations=4", "--set",
               "train.batch=2", "--set", "train.K_theta=8", "--set", "train.K_phi=8", "--set",
               "train.eval_every=2", "--set", "train.eval_data=" + data, "--set",
               "train.eval_K=8", "--set", "train.eval_out=" + ev, "--out", out}) == 0);
  std::ifstream in(ev);
  CsvTable t = read_csv(in);
  REQUIRE(t.rows.size() == 2);
  CHECK(t.header[0] == "checkpoint");
  CHECK(t.rows[0][0] == "iter=2");
  CHECK(t.rows[1][0] == "iter=4");
  CHECK(run({"train", "--data", data, "--set", "train.iterations=2", "--set",
             "train.eval_every=1", "--set", "train.eval_data=" + data, "--out", out}) == 2);
}
