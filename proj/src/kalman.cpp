#include "mcfo/kalman.hpp"

#include <cmath>

#include "mcfo/errors.hpp"

namespace mcfo {

namespace {

void check_finite(std::span<const double> x) {
  for (double v : x)
    if (!std::isfinite(v)) throw InvalidParameter("kalman: non-finite observation");
}

}  // namespace

std::vector<KalmanBelief> kalman_filter_means(const Lgssm& model, ParamSpan theta,
                                              std::span<const double> x) {
  check_finite(x);
  const auto& c = model.constants();
  const double t1 = theta[0], t2 = theta[1];
  std::vector<KalmanBelief> out(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) {
    KalmanBelief& b = out[t];
    if (t == 0) {
      b.m_minus = c.mu0;
      b.P_minus = c.sigma0_sq;
    } else {
      b.m_minus = t1 * out[t - 1].m;
      b.P_minus = t1 * t1 * out[t - 1].P + c.q_var;
    }
    b.S = t2 * t2 * b.P_minus + c.r_var;
    b.v = x[t] - t2 * b.m_minus;
    b.K_gain = t2 * b.P_minus / b.S;
    b.m = b.m_minus + b.K_gain * b.v;
    b.P = b.P_minus - b.K_gain * b.K_gain * b.S;
  }
  return out;
}

KalmanLogMarginal kalman_log_marginal(const Lgssm& model, ParamSpan theta,
                                      std::span<const double> x) {
  auto beliefs = kalman_filter_means(model, theta, x);
  KalmanLogMarginal r;
  r.per_step.resize(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) {
    r.per_step[t] = normal_logpdf(x[t], theta[1] * beliefs[t].m_minus, beliefs[t].S);
    r.total += r.per_step[t];
  }
  return r;
}

std::array<double, 2> kalman_grad_theta(const Lgssm& model, ParamSpan theta,
                                        std::span<const double> x,
                                        std::vector<KalmanGradState>* states) {
  auto b = kalman_filter_means(model, theta, x);
  const double t1 = theta[0], t2 = theta[1];
  std::array<double, 2> grad{};
  KalmanGradState prev, g;
  if (states) states->assign(x.size(), {});
  for (std::size_t t = 0; t < x.size(); ++t) {
    const KalmanBelief& s = b[t];
    g = KalmanGradState{};
    if (t > 0) {
      const double P_prev = b[t - 1].P, m_prev = b[t - 1].m;
      g.P_minus[0] = 2.0 * t1 * P_prev + t1 * t1 * prev.P[0];
      g.P_minus[1] = t1 * t1 * prev.P[1];
      g.m_minus[0] = m_prev + t1 * prev.m[0];
      g.m_minus[1] = t1 * prev.m[1];
    }
    g.S[0] = g.P_minus[0] * t2 * t2;
    g.S[1] = g.P_minus[1] * t2 * t2 + 2.0 * s.P_minus * t2;
    g.K_gain[0] = t2 * g.P_minus[0] / s.S - t2 * s.P_minus * g.S[0] / (s.S * s.S);
    g.K_gain[1] = (t2 * g.P_minus[1] + s.P_minus) / s.S - t2 * s.P_minus * g.S[1] / (s.S * s.S);
    g.v[0] = -t2 * g.m_minus[0];
    g.v[1] = -s.m_minus - t2 * g.m_minus[1];
    for (int k = 0; k < 2; ++k) {
      g.m[k] = g.m_minus[k] + s.v * g.K_gain[k] + s.K_gain * g.v[k];
      g.P[k] = g.P_minus[k] - 2.0 * s.K_gain * s.S * g.K_gain[k] - s.K_gain * s.K_gain * g.S[k];
      grad[k] += -0.5 * g.S[k] / s.S + 0.5 * g.S[k] * s.v * s.v / (s.S * s.S) -
                 s.v * g.v[k] / s.S;
    }
    if (states) (*states)[t] = g;
    prev = g;
  }
  return grad;
}

}  // namespace mcfo
