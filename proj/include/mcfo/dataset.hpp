#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mcfo/models.hpp"
#include "mcfo/sequence.hpp"

namespace mcfo {

struct Dataset {
  std::size_t dim = 0;
  std::size_t T = 0;
  std::string model_digest;  // hex
  std::vector<Sequence> sequences;
};

std::string hex64(std::uint64_t v);
std::string model_digest(const StateSpaceModel& model, ParamSpan theta);

// Forward-samples N sequences of length T; sequence n uses its own stream.
Dataset simulate_dataset(const StateSpaceModel& model, ParamSpan theta, std::size_t N,
                         std::size_t T, std::uint64_t seed);

// Text format: header "dims=<obs_dim> T=<T> model_digest=<hex>", then one line
// per sequence of T*dim comma-separated values.
void write_dataset(const std::string& path, const Dataset& d);
Dataset read_dataset(const std::string& path);

// Full-precision decimal that parses back to the same double.
std::string format_double(double v);

}  // namespace mcfo
