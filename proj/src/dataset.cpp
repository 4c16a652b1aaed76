#include "mcfo/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <fstream>
#include <sstream>

#include "mcfo/checkpoint.hpp"
#include "mcfo/errors.hpp"

namespace mcfo {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string model_digest(const StateSpaceModel& model, ParamSpan theta) {
  std::string text = model.describe();
  for (double v : theta) text += " " + format_double(v);
  return hex64(digest64(text));
}

Dataset simulate_dataset(const StateSpaceModel& model, ParamSpan theta, std::size_t N,
                         std::size_t T, std::uint64_t seed) {
  if (T < 1) throw InvalidParameter("simulate_dataset: T must be >= 1");
  const std::size_t d = model.latent_dim(), o = model.obs_dim();
  Dataset ds;
  ds.dim = o;
  ds.T = T;
  ds.model_digest = model_digest(model, theta);
  ds.sequences.reserve(N);
  std::vector<double> z(d), z_next(d), mean(d), var(d);
  for (std::size_t n = 0; n < N; ++n) {
    Rng rng(derive_stream(seed, {0x5157, n}));
    Sequence s;
    s.T = T;
    s.dim = o;
    s.values.resize(T * o);
    for (std::size_t t = 0; t < T; ++t) {
      if (t == 0)
        model.prior(theta, mean.data(), var.data());
      else
        model.transition(theta, z.data(), mean.data(), var.data());
      for (std::size_t k = 0; k < d; ++k) z_next[k] = mean[k] + std::sqrt(var[k]) * rng.normal();
      z.swap(z_next);
      model.sample_observation(theta, z.data(), rng, &s.values[t * o]);
    }
    ds.sequences.push_back(std::move(s));
  }
  return ds;
}

void write_dataset(const std::string& path, const Dataset& d) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write dataset " + path);
  f << "dims=" << d.dim << " T=" << d.T << " model_digest=" << d.model_digest << "\n";
  for (const auto& s : d.sequences) {
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      if (i) f << ',';
      f << format_double(s.values[i]);
    }
    f << '\n';
  }
  if (!f) throw std::runtime_error("write failed for dataset " + path);
}

Dataset read_dataset(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read dataset " + path);
  std::string header;
  if (!std::getline(f, header)) throw ConfigError("dataset " + path + ": missing header");
  Dataset d;
  {
    unsigned long long dims = 0, T = 0;
    char digest[64] = {0};
    if (std::sscanf(header.c_str(), "dims=%llu T=%llu model_digest=%63s", &dims, &T, digest) != 3)
      throw ConfigError("dataset " + path + ": malformed header");
    d.dim = dims;
    d.T = T;
    d.model_digest = digest;
  }
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    Sequence s;
    s.T = d.T;
    s.dim = d.dim;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || *end != '\0')
        throw ConfigError("dataset " + path + ": bad number on line " + std::to_string(lineno));
      s.values.push_back(v);
    }
    if (s.values.size() != d.T * d.dim)
      throw ConfigError("dataset " + path + ": wrong value count on line " +
                        std::to_string(lineno));
    d.sequences.push_back(std::move(s));
  }
  return d;
}

}  // namespace mcfo
