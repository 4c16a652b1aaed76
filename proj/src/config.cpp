#include "mcfo/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include "mcfo/errors.hpp"
#include "mcfo/mlp.hpp"

namespace mcfo {

namespace {

Settings from_ptree(const boost::property_tree::ptree& pt) {
  Settings s;
  for (const auto& [section, body] : pt) {
    if (body.empty()) {
      s.set(section, body.data());
      continue;
    }
    for (const auto& [key, value] : body) s.set(section + "." + key, value.data());
  }
  return s;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

Settings Settings::from_file(const std::string& path) {
  boost::property_tree::ptree pt;
  try {
    boost::property_tree::ini_parser::read_ini(path, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return from_ptree(pt);
}

Settings Settings::from_text(const std::string& text) {
  boost::property_tree::ptree pt;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return from_ptree(pt);
}

void Settings::apply_override(const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("config override must look like section.key=value: " + assignment);
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::string Settings::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Settings::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  char* end = nullptr;
  double v = std::strtod(it->second.c_str(), &end);
  if (end == it->second.c_str() || *end != '\0')
    throw ConfigError("config: " + key + " must be a number, got '" + it->second + "'");
  return v;
}

std::uint64_t Settings::get_uint(const std::string& key, std::uint64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  char* end = nullptr;
  const std::string& s = it->second;
  if (s.empty() || s[0] == '-') throw ConfigError("config: " + key + " must be a non-negative integer");
  unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (*end != '\0') throw ConfigError("config: " + key + " must be a non-negative integer");
  return v;
}

bool Settings::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config: " + key + " must be a boolean");
}

std::vector<double> Settings::get_doubles(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split_list(get(key, ""))) {
    char* end = nullptr;
    double v = std::strtod(item.c_str(), &end);
    if (*end != '\0') throw ConfigError("config: " + key + " must be a list of numbers");
    out.push_back(v);
  }
  return out;
}

std::vector<std::uint64_t> Settings::get_uints(const std::string& key,
                                               std::vector<std::uint64_t> fallback) const {
  if (!has(key)) return fallback;
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(get(key, ""))) {
    char* end = nullptr;
    if (item[0] == '-') throw ConfigError("config: " + key + " must be a list of integers");
    unsigned long long v = std::strtoull(item.c_str(), &end, 10);
    if (*end != '\0') throw ConfigError("config: " + key + " must be a list of integers");
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> Settings::get_list(const std::string& key,
                                            std::vector<std::string> fallback) const {
  if (!has(key)) return fallback;
  return split_list(get(key, ""));
}

void Settings::check_known(const std::set<std::string>& allowed) const {
  for (const auto& [key, value] : values_) {
    if (allowed.count(key)) continue;
    auto dot = key.find('.');
    if (dot != std::string::npos && allowed.count(key.substr(0, dot) + ".*")) continue;
    throw ConfigError("config: unknown key " + key);
  }
}

std::string Settings::canonical(const std::vector<std::string>& sections) const {
  std::string out;
  for (const auto& [key, value] : values_)
    for (const auto& sec : sections)
      if (key.rfind(sec + ".", 0) == 0) {
        out += key + "=" + value + "\n";
        break;
      }
  return out;
}

Setup build_setup(const Settings& s) {
  Setup st;
  st.description = s.canonical({"model", "proposal"});
  const std::string kind = s.get("model.kind", "lgssm");
  if (kind == "lgssm") {
    const std::string preset = s.get("model.preset", "d2");
    LgssmInstance base = preset == "d1"   ? lgssm_gradient_setup()
                         : preset == "d2" ? lgssm_training_setup()
                                          : lgssm_new(0.9, 1.2, 0.5, 1.0, 1.0, 1.0);
    if (preset != "d1" && preset != "d2" && preset != "custom")
      throw ConfigError("config: model.preset must be d1, d2 or custom");
    LgssmConstants c = base.model.constants();
    c.mu0 = s.get_double("model.mu0", c.mu0);
    c.sigma0_sq = s.get_double("model.sigma0_sq", c.sigma0_sq);
    c.q_var = s.get_double("model.q_var", c.q_var);
    c.r_var = s.get_double("model.r_var", c.r_var);
    std::vector<double> theta = {s.get_double("model.theta1", base.theta[0]),
                                 s.get_double("model.theta2", base.theta[1])};
    try {
      st.model = std::make_unique<Lgssm>(c);
    } catch (const InvalidParameter& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    const std::string init = s.get("model.init", "truth");
    if (init == "uniform") {
      Rng rng(derive_stream(s.get_uint("model.init_seed", 1), {0x1417}));
      for (double& v : theta) v = 0.1 + 0.4 * rng.uniform();
    } else if (init != "truth") {
      throw ConfigError("config: model.init must be truth or uniform");
    }
    st.theta = theta;
  } else if (kind == "mlp") {
    Rng rng(derive_stream(s.get_uint("model.init_seed", 1), {0x1417}));
    std::string obs = s.get("model.observation", "gaussian");
    if (obs != "gaussian" && obs != "bernoulli")
      throw ConfigError("config: model.observation must be gaussian or bernoulli");
    try {
      auto inst = mlp_ssm_new(s.get_uint("model.latent_dim", 3), s.get_uint("model.obs_dim", 2),
                              s.get_uint("model.hidden", 16), rng,
                              obs == "gaussian" ? ObservationKind::gaussian
                                                : ObservationKind::bernoulli);
      st.theta = inst.theta;
      st.model = std::make_unique<MlpSsm>(std::move(inst.model));
    } catch (const InvalidParameter& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  } else {
    throw ConfigError("config: model.kind must be lgssm or mlp");
  }

  const std::string pkind = s.get("proposal.kind", kind == "lgssm" ? "linear" : "mlp");
  if (pkind == "bootstrap") return st;
  if (pkind == "linear" || pkind == "optimal") {
    const Lgssm* lg = st.lgssm();
    if (!lg) throw ConfigError("config: linear proposals need model.kind = lgssm");
    st.proposal = std::make_unique<LinearProposal>();
    std::string init = pkind == "optimal" ? "optimal" : s.get("proposal.init", "zeros");
    if (init == "zeros") {
      st.phi.assign(7, 0.0);
    } else if (init == "optimal") {
      // Optimal coefficients at the configured (not initialized) theta.
      std::vector<double> ref = {s.get_double("model.theta1", lgssm_training_setup().theta[0]),
                                 s.get_double("model.theta2", lgssm_training_setup().theta[1])};
      if (s.get("model.preset", "d2") == "d1" && !s.has("model.theta1")) ref[0] = 0.9;
      if (s.get("model.preset", "d2") == "d1" && !s.has("model.theta2")) ref[1] = 10.0;
      st.phi = optimal_linear_phi(*lg, ref);
      double scale = s.get_double("proposal.variance_scale", 1.0);
      if (!(scale > 0.0)) throw ConfigError("config: proposal.variance_scale must be positive");
      st.phi[5] += std::log(scale);
      st.phi[6] += std::log(scale);
    } else if (init == "custom") {
      st.phi = s.get_doubles("proposal.phi");
      if (st.phi.size() != 7)
        throw ConfigError("config: proposal.phi needs 7 values (phi1..phi5, log_var_q1, log_var_qt)");
    } else {
      throw ConfigError("config: proposal.init must be zeros, optimal or custom");
    }
  } else if (pkind == "mlp") {
    Rng rng(derive_stream(s.get_uint("proposal.init_seed", 2), {0x1418}));
    try {
      auto inst = mlp_proposal_new(st.model->latent_dim(), st.model->obs_dim(),
                                   s.get_uint("proposal.encoder", 16), rng);
      st.phi = inst.phi;
      st.proposal = std::make_unique<MlpProposal>(std::move(inst.proposal));
    } catch (const InvalidParameter& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  } else {
    throw ConfigError("config: proposal.kind must be linear, optimal, bootstrap or mlp");
  }
  return st;
}

}  // namespace mcfo
