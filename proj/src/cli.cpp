#include "mcfo/cli.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "mcfo/checkpoint.hpp"
#include "mcfo/config.hpp"
#include "mcfo/dataset.hpp"
#include "mcfo/errors.hpp"
#include "mcfo/evalkit.hpp"
#include "mcfo/trainer.hpp"

namespace mcfo {

namespace {

const std::set<std::string> kModelKeys = {
    "model.kind",  "model.preset",     "model.theta1",     "model.theta2", "model.mu0",
    "model.sigma0_sq", "model.q_var",  "model.r_var",      "model.latent_dim",
    "model.obs_dim", "model.hidden",   "model.observation", "model.init", "model.init_seed",
    "proposal.kind", "proposal.init",  "proposal.phi",     "proposal.variance_scale",
    "proposal.encoder", "proposal.init_seed", "run.seed",  "run.threads"};

const std::set<std::string> kSimulateKeys = {"simulate.N", "simulate.T"};
const std::set<std::string> kTrainKeys = {
    "train.data",          "train.train_size",   "train.iterations",  "train.batch",
    "train.K_theta",       "train.K_phi",        "train.lr",          "train.decay_factor",
    "train.decay_every",   "train.lr_floor",     "train.theta_estimator",
    "train.phi_estimator", "train.train_theta",  "train.train_phi",   "train.sampler",
    "train.pimh_sweeps",   "train.resample",     "train.degenerate_window",
    "train.checkpoint",    "train.resume",       "train.eval_every",  "train.eval_data",
    "train.eval_out",      "train.eval_K",       "train.eval_repeats"};
const std::set<std::string> kEvalKeys = {"eval.data", "eval.checkpoints", "eval.K",
                                         "eval.repeats", "eval.resample"};
const std::set<std::string> kGradKeys = {"gradstudy.estimators", "gradstudy.K",
                                         "gradstudy.replicates", "gradstudy.at",
                                         "gradstudy.sequences", "gradstudy.num_sequences",
                                         "gradstudy.T", "gradstudy.resample"};
const std::set<std::string> kBiasKeys = {"biascheck.K", "biascheck.replicates",
                                         "biascheck.variance_samples", "biascheck.T",
                                         "biascheck.x"};

std::set<std::string> allowed_keys(const std::set<std::string>& extra) {
  std::set<std::string> s = kModelKeys;
  s.insert(extra.begin(), extra.end());
  return s;
}

ResampleScheme parse_scheme(const std::string& s) {
  if (s == "multinomial") return ResampleScheme::multinomial;
  if (s == "systematic") return ResampleScheme::systematic;
  throw ConfigError("config: resample must be multinomial or systematic");
}

std::vector<std::size_t> to_sizes(const std::vector<std::uint64_t>& v) {
  return std::vector<std::size_t>(v.begin(), v.end());
}

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> threads;
  std::string config;
  std::vector<std::string> sets;
};

struct Context {
  Settings settings;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  std::string out;
};

Context make_context(const Globals& g, const std::set<std::string>& allowed,
                     const std::map<std::string, std::string>& defaults,
                     const std::map<std::string, std::string>& flags) {
  Context c;
  if (!g.config.empty()) c.settings = Settings::from_file(g.config);
  for (const auto& [k, v] : defaults)
    if (!c.settings.has(k)) c.settings.set(k, v);
  for (const auto& [k, v] : flags) c.settings.set(k, v);
  for (const auto& s : g.sets) c.settings.apply_override(s);
  c.settings.check_known(allowed_keys(allowed));
  if (g.seed) {
    c.seed = *g.seed;
  } else if (c.settings.has("run.seed")) {
    c.seed = c.settings.get_uint("run.seed", 1);
  } else if (const char* env = std::getenv("MCFO_SEED")) {
    char* end = nullptr;
    unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') throw ConfigError("MCFO_SEED must be a non-negative integer");
    c.seed = v;
  }
  c.threads = g.threads ? *g.threads : c.settings.get_uint("run.threads", 1);
  if (c.threads < 1) c.threads = 1;
  c.out = g.out;
  return c;
}

// Writes text to path, or stdout when path is empty.
void emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ConfigError("cannot write " + path);
  f << text;
  if (!f) throw ConfigError("write failed for " + path);
}

std::vector<Sequence> load_sequences(const std::string& path, const StateSpaceModel& model) {
  if (path.empty()) throw ConfigError("a dataset path is required");
  Dataset d = read_dataset(path);
  if (d.dim != model.obs_dim())
    throw ConfigError("dataset " + path + " has dims=" + std::to_string(d.dim) +
                      " but the model observes " + std::to_string(model.obs_dim()));
  return std::move(d.sequences);
}

void check_layouts(const Checkpoint& c, const Setup& st) {
  ParamLayout empty;
  const ParamLayout& phi_layout = st.proposal ? st.proposal->layout() : empty;
  if (!(c.theta.layout == st.model->layout()) || !(c.phi.layout == phi_layout))
    throw CheckpointError(CheckpointError::Kind::layout_mismatch,
                          "checkpoint: parameter layout does not match the configured model");
}

int run_simulate(const Context& c) {
  if (c.out.empty()) throw ConfigError("simulate: --out is required");
  Setup st = build_setup(c.settings);
  Dataset d = simulate_dataset(*st.model, st.theta, c.settings.get_uint("simulate.N", 5000),
                               c.settings.get_uint("simulate.T", 50), c.seed);
  write_dataset(c.out, d);
  return 0;
}

TrainConfig train_config(const Context& c) {
  const Settings& s = c.settings;
  TrainConfig t;
  t.theta_estimator = parse_estimator(s.get("train.theta_estimator", "mcfo"));
  t.phi_estimator = parse_estimator(s.get("train.phi_estimator", "mcfo"));
  t.train_theta = s.get_bool("train.train_theta", true);
  t.train_phi = s.get_bool("train.train_phi", true);
  std::string sampler = s.get("train.sampler", "smc");
  if (sampler == "smc")
    t.sampler = SamplerKind::smc;
  else if (sampler == "pimh")
    t.sampler = SamplerKind::pimh;
  else
    throw ConfigError("config: train.sampler must be smc or pimh");
  t.pimh_sweeps = s.get_uint("train.pimh_sweeps", t.pimh_sweeps);
  t.scheme = parse_scheme(s.get("train.resample", "multinomial"));
  t.K_theta = s.get_uint("train.K_theta", t.K_theta);
  t.K_phi = s.get_uint("train.K_phi", t.K_phi);
  t.batch = s.get_uint("train.batch", t.batch);
  t.iterations = s.get_uint("train.iterations", t.iterations);
  t.lr = s.get_double("train.lr", t.lr);
  t.decay_factor = s.get_double("train.decay_factor", t.decay_factor);
  t.decay_every = s.get_uint("train.decay_every", t.decay_every);
  t.lr_floor = s.get_double("train.lr_floor", t.lr_floor);
  t.degenerate_window = s.get_uint("train.degenerate_window", t.degenerate_window);
  t.seed = c.seed;
  t.threads = c.threads;
  if (t.K_theta < 1 || t.K_phi < 1 || t.batch < 1)
    throw ConfigError("config: K_theta, K_phi and batch must be >= 1");
  return t;
}

int run_train(const Context& c) {
  Setup st = build_setup(c.settings);
  TrainConfig cfg = train_config(c);
  std::vector<Sequence> data = load_sequences(c.settings.get("train.data", ""), *st.model);
  std::size_t n = c.settings.get_uint("train.train_size", data.size());
  if (n < data.size()) data.resize(n);
  if (data.empty()) throw ConfigError("train: empty dataset");

  std::vector<EvalReport> evals;
  std::vector<Sequence> eval_data;
  cfg.eval_every = c.settings.get_uint("train.eval_every", 0);
  if (cfg.eval_every > 0) {
    eval_data = load_sequences(c.settings.get("train.eval_data", ""), *st.model);
    if (eval_data.empty()) throw ConfigError("train: the evaluation dataset has no sequences");
    if (!c.settings.has("train.eval_out")) throw ConfigError("train: train.eval_out is required");
    EvalOptions opt;
    opt.K = c.settings.get_uint("train.eval_K", 100);
    opt.repeats = c.settings.get_uint("train.eval_repeats", 1);
    opt.seed = c.seed;
    opt.threads = c.threads;
    opt.scheme = cfg.scheme;
    if (opt.K < 1 || opt.repeats < 1)
      throw ConfigError("config: train.eval_K and train.eval_repeats must be >= 1");
    cfg.on_eval = [&, opt](std::size_t iter, const std::vector<double>& theta,
                           const std::vector<double>& phi) {
      EvalReport r = evaluate(*st.model, theta, st.proposal.get(), phi, eval_data, opt);
      r.checkpoint = "iter=" + std::to_string(iter);
      evals.push_back(std::move(r));
    };
  }

  TrainResult res;
  if (c.settings.has("train.resume")) {
    Checkpoint ck = checkpoint_load(c.settings.get("train.resume", ""));
    check_layouts(ck, st);
    res = train(*st.model, st.proposal.get(), ck.theta.values, ck.phi.values, ck.adam_theta,
                ck.adam_phi, data, cfg);
  } else {
    res = train(*st.model, st.proposal.get(), st.theta, st.phi, data, cfg);
  }
  if (c.settings.has("train.checkpoint")) {
    Checkpoint ck;
    ck.setup = st.description;
    ck.config_digest = digest64(cfg.digest_text());
    ck.theta = {res.theta, st.model->layout()};
    ck.phi = {res.phi, st.proposal ? st.proposal->layout() : ParamLayout()};
    ck.adam_theta = res.adam_theta;
    ck.adam_phi = res.adam_phi;
    checkpoint_save(c.settings.get("train.checkpoint", ""), ck);
  }
  if (cfg.eval_every > 0) {
    std::ostringstream es;
    write_eval_csv(es, evals);
    emit(c.settings.get("train.eval_out", ""), es.str());
  }
  std::ostringstream os;
  write_train_log_csv(os, res.log);
  emit(c.out, os.str());
  return 0;
}

int run_eval(const Context& c) {
  Setup st = build_setup(c.settings);
  std::vector<Sequence> data = load_sequences(c.settings.get("eval.data", ""), *st.model);
  if (data.empty()) throw ConfigError("eval: the dataset has no sequences");
  EvalOptions opt;
  opt.K = c.settings.get_uint("eval.K", 1000);
  opt.repeats = c.settings.get_uint("eval.repeats", 10);
  opt.seed = c.seed;
  opt.threads = c.threads;
  opt.scheme = parse_scheme(c.settings.get("eval.resample", "multinomial"));
  if (opt.K < 1 || opt.repeats < 1) throw ConfigError("config: eval.K and eval.repeats must be >= 1");

  std::vector<EvalReport> reports;
  std::vector<std::string> ckpts = c.settings.get_list("eval.checkpoints", {});
  if (ckpts.empty()) {
    EvalReport r = evaluate(*st.model, st.theta, st.proposal.get(), st.phi, data, opt);
    r.checkpoint = "config";
    reports.push_back(std::move(r));
  }
  for (const auto& path : ckpts) {
    Checkpoint ck = checkpoint_load(path);
    Setup cs = build_setup(Settings::from_text(ck.setup));
    check_layouts(ck, cs);
    if (cs.model->obs_dim() != st.model->obs_dim())
      throw ConfigError("eval: checkpoint " + path + " observes a different dimension");
    EvalReport r = evaluate(*cs.model, ck.theta.values, cs.proposal.get(), ck.phi.values, data, opt);
    r.checkpoint = path;
    reports.push_back(std::move(r));
  }
  std::ostringstream os;
  write_eval_csv(os, reports);
  emit(c.out, os.str());
  return 0;
}

int run_gradstudy(const Context& c) {
  const Settings& s = c.settings;
  Setup st = build_setup(s);
  const Lgssm* lg = st.lgssm();
  if (!lg || !st.proposal || st.phi.size() != 7)
    throw ConfigError("gradstudy: needs model.kind = lgssm with the linear proposal");
  GradStudyConfig g;
  g.estimators.clear();
  for (const auto& e : s.get_list("gradstudy.estimators", {"mcfo", "aesmc", "iwae"}))
    g.estimators.push_back(parse_estimator(e));
  g.K_list = to_sizes(s.get_uints("gradstudy.K", {10, 100, 1000}));
  g.replicates = s.get_uint("gradstudy.replicates", 1000);
  std::string mode = s.get("gradstudy.sequences", "fixed");
  if (mode == "fixed")
    g.mode = SequenceMode::fixed;
  else if (mode == "fresh")
    g.mode = SequenceMode::fresh;
  else
    throw ConfigError("config: gradstudy.sequences must be fixed or fresh");
  g.num_sequences = s.get_uint("gradstudy.num_sequences", 1);
  g.T = s.get_uint("gradstudy.T", 50);
  g.seed = c.seed;
  g.threads = c.threads;
  g.scheme = parse_scheme(s.get("gradstudy.resample", "multinomial"));
  std::string at = s.get("gradstudy.at", "optimum");
  std::vector<double> phi = st.phi;
  if (at == "optimum") {
    g.at_optimum = true;
    phi = optimal_linear_phi(*lg, st.theta);
  } else if (at == "custom") {
    g.at_optimum = false;
  } else {
    throw ConfigError("config: gradstudy.at must be optimum or custom");
  }
  if (g.replicates < 1 || g.K_list.empty() || g.T < 1)
    throw ConfigError("config: gradstudy needs replicates >= 1, T >= 1 and a K list");
  GradStudyReport rep = grad_study(*lg, st.theta, phi, g);
  std::ostringstream os;
  write_gradstudy_csv(os, rep);
  emit(c.out, os.str());
  return 0;
}

int run_biascheck(const Context& c) {
  const Settings& s = c.settings;
  Setup st = build_setup(s);
  const Lgssm* lg = st.lgssm();
  if (!lg || !st.proposal) throw ConfigError("biascheck: needs model.kind = lgssm and a proposal");
  Sequence x;
  if (s.has("biascheck.x")) {
    x = make_scalar_sequence(s.get_doubles("biascheck.x"));
  } else {
    Dataset d = simulate_dataset(*lg, st.theta, 1, s.get_uint("biascheck.T", 1),
                                 derive_seed(c.seed, {0xB1A5, 0}));
    x = d.sequences[0];
  }
  if (x.T < 1) throw ConfigError("biascheck: empty sequence");
  BiasCheckOptions opt;
  opt.replicates = s.get_uint("biascheck.replicates", opt.replicates);
  opt.variance_samples = s.get_uint("biascheck.variance_samples", opt.variance_samples);
  opt.seed = c.seed;
  auto rows = asymptotic_bias_check(*lg, st.theta, *st.proposal, st.phi, x,
                                    to_sizes(s.get_uints("biascheck.K", {64, 256, 1024, 4096})),
                                    opt);
  std::ostringstream os;
  write_bias_csv(os, rows);
  emit(c.out, os.str());
  return 0;
}

}  // namespace

int cli_main(const std::vector<std::string>& args) {
  CLI::App app{"Monte Carlo filtering objective toolkit", "mcfo"};
  app.require_subcommand(1);
  Globals g;
  auto add_globals = [&g](CLI::App* a) {
    a->add_option("--seed", g.seed, "random seed (fallback: run.seed, then MCFO_SEED)");
    a->add_option("--out", g.out, "output path (stdout when omitted)");
    a->add_option("--threads", g.threads, "worker threads");
    a->add_option("--config", g.config, "INI config file");
    a->add_option("--set", g.sets, "override, section.key=value (repeatable)");
  };

  std::map<std::string, std::string> flags;
  std::string model_flag;

  auto* sim = app.add_subcommand("simulate", "forward-sample a dataset");
  std::optional<std::uint64_t> sim_n, sim_t;
  sim->add_option("--N", sim_n, "number of sequences");
  sim->add_option("--T", sim_t, "sequence length");
  sim->add_option("--model", model_flag, "lgssm-d1 | lgssm-d2 | mlp");

  auto* tr = app.add_subcommand("train", "train model and proposal");
  std::string data_flag;
  tr->add_option("--data", data_flag, "training dataset");

  auto* ev = app.add_subcommand("eval", "evaluate checkpoints on a dataset");
  std::vector<std::string> ckpt_flag;
  ev->add_option("--data", data_flag, "evaluation dataset");
  ev->add_option("--checkpoint", ckpt_flag, "checkpoint paths");

  auto* gs = app.add_subcommand("gradstudy", "gradient bias/variance study on the LGSSM");
  std::string est_flag, k_flag, at_flag, seq_flag;
  std::optional<std::uint64_t> reps_flag;
  gs->add_option("--model", model_flag, "lgssm-d1 | lgssm-d2");
  gs->add_option("--estimators", est_flag, "comma list of mcfo, aesmc, aesmc_full, nasmc, iwae");
  gs->add_option("--K", k_flag, "comma list of particle counts");
  gs->add_option("--reps", reps_flag, "replicates per cell");
  gs->add_option("--at", at_flag, "optimum | custom");
  gs->add_option("--sequences", seq_flag, "fixed | fresh");

  auto* bc = app.add_subcommand("biascheck", "K-scaled bias of the bound against its limit");
  bc->add_option("--K", k_flag, "comma list of particle counts");
  bc->add_option("--reps", reps_flag, "replicates per K");

  for (CLI::App* a : {&app, sim, tr, ev, gs, bc}) add_globals(a);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  auto set_model = [&](const std::string& m) {
    if (m.empty()) return;
    if (m == "lgssm-d1" || m == "lgssm-d2") {
      flags["model.kind"] = "lgssm";
      flags["model.preset"] = m.substr(6);
    } else if (m == "mlp") {
      flags["model.kind"] = "mlp";
    } else {
      throw ConfigError("--model must be lgssm-d1, lgssm-d2 or mlp");
    }
  };

  try {
    set_model(model_flag);
    if (sim->parsed()) {
      if (sim_n) flags["simulate.N"] = std::to_string(*sim_n);
      if (sim_t) flags["simulate.T"] = std::to_string(*sim_t);
      return run_simulate(make_context(g, kSimulateKeys, {}, flags));
    }
    if (tr->parsed()) {
      if (!data_flag.empty()) flags["train.data"] = data_flag;
      return run_train(make_context(g, kTrainKeys, {}, flags));
    }
    if (ev->parsed()) {
      if (!data_flag.empty()) flags["eval.data"] = data_flag;
      if (!ckpt_flag.empty()) {
        std::string joined;
        for (const auto& p : ckpt_flag) joined += (joined.empty() ? "" : ",") + p;
        flags["eval.checkpoints"] = joined;
      }
      return run_eval(make_context(g, kEvalKeys, {}, flags));
    }
    if (gs->parsed()) {
      if (!est_flag.empty()) flags["gradstudy.estimators"] = est_flag;
      if (!k_flag.empty()) flags["gradstudy.K"] = k_flag;
      if (reps_flag) flags["gradstudy.replicates"] = std::to_string(*reps_flag);
      if (!at_flag.empty()) flags["gradstudy.at"] = at_flag;
      if (!seq_flag.empty()) flags["gradstudy.sequences"] = seq_flag;
      return run_gradstudy(
          make_context(g, kGradKeys, {{"model.kind", "lgssm"}, {"model.preset", "d1"}}, flags));
    }
    if (bc->parsed()) {
      if (!k_flag.empty()) flags["biascheck.K"] = k_flag;
      if (reps_flag) flags["biascheck.replicates"] = std::to_string(*reps_flag);
      return run_biascheck(make_context(
          g, kBiasKeys,
          {{"model.kind", "lgssm"}, {"proposal.kind", "optimal"}, {"proposal.variance_scale", "4"}},
          flags));
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidParameter& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DegenerateFilter& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  }
  return 2;
}

int cli_main(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return cli_main(args);
}

}  // namespace mcfo
