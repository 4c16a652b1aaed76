#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mcfo/gradients.hpp"
#include "mcfo/samplers.hpp"

namespace mcfo {

struct AdamState {
  std::vector<double> m, v;
  std::uint64_t step = 0;
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double decay_factor = 1.0;
  std::uint64_t decay_every = 0;  // 0 disables decay
  double lr_floor = 0.0;

  bool operator==(const AdamState&) const = default;
};

AdamState adam_init(std::size_t n, double lr);
double adam_learning_rate(const AdamState& s);
// One bias-corrected Adam step descending `grad`.
void adam_step(AdamState& s, std::vector<double>& params, const std::vector<double>& grad);

enum class SamplerKind { smc, pimh };

struct TrainConfig {
  Estimator theta_estimator = Estimator::mcfo;
  Estimator phi_estimator = Estimator::mcfo;
  bool train_theta = true;
  bool train_phi = true;
  SamplerKind sampler = SamplerKind::smc;
  std::size_t pimh_sweeps = 5;
  ResampleScheme scheme = ResampleScheme::multinomial;
  std::size_t K_theta = 100;
  std::size_t K_phi = 10;
  std::size_t batch = 64;
  std::size_t iterations = 2000;
  double lr = 0.01;
  double decay_factor = 1.0;
  std::uint64_t decay_every = 0;
  double lr_floor = 0.0;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  // Abort when more than 10% of the batch elements in this many consecutive
  // iterations are degenerate.
  std::size_t degenerate_window = 10;
  // Called with the updated parameters after every eval_every-th iteration
  // (iter counts completed iterations); 0 disables it.
  std::size_t eval_every = 0;
  std::function<void(std::size_t iter, const std::vector<double>& theta,
                     const std::vector<double>& phi)>
      on_eval;

  std::string digest_text() const;
};

struct TrainLogRow {
  std::size_t iter = 0;
  double objective = 0.0;  // mean bound over the batch
  double nll_proxy = 0.0;  // negated objective
  double grad_norm_theta = 0.0;
  double grad_norm_phi = 0.0;
  double ess = 0.0;        // mean over steps and batch elements
  std::size_t skipped = 0;
};

struct TrainResult {
  std::vector<TrainLogRow> log;
  std::vector<double> theta;
  std::vector<double> phi;
  AdamState adam_theta;
  AdamState adam_phi;
  std::size_t skipped_total = 0;
};

// Joint stochastic-gradient ascent on the bound. With q == nullptr the
// bootstrap proposal at the current theta is used and phi is ignored.
TrainResult train(const StateSpaceModel& model, const Proposal* q, std::vector<double> theta,
                  std::vector<double> phi, const std::vector<Sequence>& data,
                  const TrainConfig& cfg);

// Continues from saved optimizer states (empty moment vectors start fresh).
TrainResult train(const StateSpaceModel& model, const Proposal* q, std::vector<double> theta,
                  std::vector<double> phi, AdamState adam_theta, AdamState adam_phi,
                  const std::vector<Sequence>& data, const TrainConfig& cfg);

}  // namespace mcfo
