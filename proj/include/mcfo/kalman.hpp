#pragma once

#include <array>
#include <span>
#include <vector>

#include "mcfo/lgssm.hpp"

namespace mcfo {

struct KalmanBelief {
  double m_minus = 0.0;
  double P_minus = 0.0;
  double S = 0.0;
  double K_gain = 0.0;
  double v = 0.0;
  double m = 0.0;
  double P = 0.0;
};

// Sensitivities of one step's filter quantities; index 0 is theta1, 1 is theta2.
struct KalmanGradState {
  std::array<double, 2> m_minus{}, P_minus{}, S{}, K_gain{}, v{}, m{}, P{};
};

struct KalmanLogMarginal {
  double total = 0.0;
  std::vector<double> per_step;  // log p(x_t | x_{1:t-1})
};

std::vector<KalmanBelief> kalman_filter_means(const Lgssm& model, ParamSpan theta,
                                              std::span<const double> x);

KalmanLogMarginal kalman_log_marginal(const Lgssm& model, ParamSpan theta,
                                      std::span<const double> x);

// d log p(x_{1:T}) / d(theta1, theta2) via forward sensitivity recursions.
// When states is non-null it receives the per-step sensitivities.
std::array<double, 2> kalman_grad_theta(const Lgssm& model, ParamSpan theta,
                                        std::span<const double> x,
                                        std::vector<KalmanGradState>* states = nullptr);

}  // namespace mcfo
