#include "mcfo/mlp.hpp"

#include <cmath>

#include "mcfo/errors.hpp"

namespace mcfo {

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

TanhMlp TanhMlp::add_to(ParamLayout& layout, const std::string& prefix, std::size_t in,
                        std::size_t hidden, std::size_t out) {
  TanhMlp m;
  m.in = in;
  m.hidden = hidden;
  m.out = out;
  m.w1 = layout.add(prefix + ".W1", hidden * in);
  m.b1 = layout.add(prefix + ".b1", hidden);
  m.w2 = layout.add(prefix + ".W2", out * hidden);
  m.b2 = layout.add(prefix + ".b2", out);
  return m;
}

void TanhMlp::forward(ParamSpan p, const double* x, double* h, double* y) const {
  for (std::size_t j = 0; j < hidden; ++j) {
    const double* w = &p[w1 + j * in];
    double a = p[b1 + j];
    for (std::size_t k = 0; k < in; ++k) a += w[k] * x[k];
    h[j] = std::tanh(a);
  }
  for (std::size_t o = 0; o < out; ++o) {
    const double* w = &p[w2 + o * hidden];
    double a = p[b2 + o];
    for (std::size_t j = 0; j < hidden; ++j) a += w[j] * h[j];
    y[o] = a;
  }
}

void TanhMlp::backward(ParamSpan p, const double* x, const double* h, const double* d_y,
                       double* d_p, double* d_x) const {
  thread_local std::vector<double> d_a;
  d_a.assign(hidden, 0.0);
  for (std::size_t o = 0; o < out; ++o) {
    const double g = d_y[o];
    if (g == 0.0) continue;
    const double* w = &p[w2 + o * hidden];
    if (d_p) {
      double* dw = d_p + w2 + o * hidden;
      for (std::size_t j = 0; j < hidden; ++j) dw[j] += g * h[j];
      d_p[b2 + o] += g;
    }
    for (std::size_t j = 0; j < hidden; ++j) d_a[j] += g * w[j];
  }
  for (std::size_t j = 0; j < hidden; ++j) {
    const double g = d_a[j] * (1.0 - h[j] * h[j]);
    if (d_p) {
      double* dw = d_p + w1 + j * in;
      for (std::size_t k = 0; k < in; ++k) dw[k] += g * x[k];
      d_p[b1 + j] += g;
    }
    if (d_x) {
      const double* w = &p[w1 + j * in];
      for (std::size_t k = 0; k < in; ++k) d_x[k] += g * w[k];
    }
  }
}

void TanhMlp::init_uniform(std::vector<double>& p, Rng& rng) const {
  double a1 = 1.0 / std::sqrt(static_cast<double>(in));
  double a2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (std::size_t i = 0; i < hidden * in; ++i) p[w1 + i] = a1 * (2.0 * rng.uniform() - 1.0);
  for (std::size_t i = 0; i < hidden; ++i) p[b1 + i] = 0.0;
  for (std::size_t i = 0; i < out * hidden; ++i) p[w2 + i] = a2 * (2.0 * rng.uniform() - 1.0);
  for (std::size_t i = 0; i < out; ++i) p[b2 + i] = 0.0;
}

MlpSsm::MlpSsm(std::size_t latent_dim, std::size_t obs_dim, std::size_t hidden,
               ObservationKind kind)
    : d_(latent_dim), o_(obs_dim), h_(hidden), kind_(kind) {
  if (d_ < 1 || o_ < 1 || h_ < 1) throw InvalidParameter("MlpSsm: dimensions must be >= 1");
  if (h_ > 64) throw InvalidParameter("MlpSsm: hidden width must be <= 64");
  if (d_ > kMaxLatentDim) throw InvalidParameter("MlpSsm: latent dimension too large");
  trans_ = TanhMlp::add_to(layout_, "trans", d_, h_, 2 * d_);
  obs_ = TanhMlp::add_to(layout_, "obs", d_, h_, o_);
  if (kind_ == ObservationKind::gaussian) log_var_ = layout_.add("obs.log_var", o_);
}

std::string MlpSsm::describe() const {
  return "mlp_ssm latent=" + std::to_string(d_) + " obs=" + std::to_string(o_) +
         " hidden=" + std::to_string(h_) +
         (kind_ == ObservationKind::gaussian ? " gaussian" : " bernoulli");
}

void MlpSsm::prior(ParamSpan, double* mean, double* var) const {
  for (std::size_t k = 0; k < d_; ++k) {
    mean[k] = 0.0;
    var[k] = 1.0;
  }
}

void MlpSsm::transition(ParamSpan theta, const double* z_prev, double* mean, double* var) const {
  double h[64];
  double y[2 * kMaxLatentDim];
  trans_.forward(theta, z_prev, h, y);
  for (std::size_t k = 0; k < d_; ++k) {
    mean[k] = y[k];
    var[k] = softplus(y[d_ + k]);
  }
}

void MlpSsm::transition_vjp(ParamSpan theta, const double* z_prev, const double* d_mean,
                            const double* d_var, double* d_theta, double* d_z_prev) const {
  double h[64];
  double y[2 * kMaxLatentDim];
  double d_y[2 * kMaxLatentDim];
  trans_.forward(theta, z_prev, h, y);
  for (std::size_t k = 0; k < d_; ++k) {
    d_y[k] = d_mean[k];
    d_y[d_ + k] = d_var[k] * sigmoid(y[d_ + k]);
  }
  trans_.backward(theta, z_prev, h, d_y, d_theta, d_z_prev);
}

double MlpSsm::observation_log_density(ParamSpan theta, const double* z, const double* x) const {
  double h[64];
  thread_local std::vector<double> y;
  y.resize(o_);
  obs_.forward(theta, z, h, y.data());
  double s = 0.0;
  if (kind_ == ObservationKind::gaussian) {
    for (std::size_t k = 0; k < o_; ++k)
      s += normal_logpdf(x[k], y[k], std::exp(theta[log_var_ + k]));
  } else {
    for (std::size_t k = 0; k < o_; ++k) s += x[k] * y[k] - softplus(y[k]);
  }
  return s;
}

void MlpSsm::observation_grad(ParamSpan theta, const double* z, const double* x, double scale,
                              double* d_theta, double* d_z) const {
  double h[64];
  thread_local std::vector<double> y, d_y;
  y.resize(o_);
  d_y.resize(o_);
  obs_.forward(theta, z, h, y.data());
  if (kind_ == ObservationKind::gaussian) {
    for (std::size_t k = 0; k < o_; ++k) {
      double v = std::exp(theta[log_var_ + k]);
      double r = x[k] - y[k];
      d_y[k] = scale * r / v;
      if (d_theta) d_theta[log_var_ + k] += scale * (-0.5 + 0.5 * r * r / v);
    }
  } else {
    for (std::size_t k = 0; k < o_; ++k) d_y[k] = scale * (x[k] - sigmoid(y[k]));
  }
  obs_.backward(theta, z, h, d_y.data(), d_theta, d_z);
}

void MlpSsm::observation_mean(ParamSpan theta, const double* z, double* out) const {
  double h[64];
  obs_.forward(theta, z, h, out);
  if (kind_ == ObservationKind::bernoulli)
    for (std::size_t k = 0; k < o_; ++k) out[k] = sigmoid(out[k]);
}

void MlpSsm::sample_observation(ParamSpan theta, const double* z, Rng& rng, double* out) const {
  observation_mean(theta, z, out);
  for (std::size_t k = 0; k < o_; ++k) {
    if (kind_ == ObservationKind::gaussian)
      out[k] += std::sqrt(std::exp(theta[log_var_ + k])) * rng.normal();
    else
      out[k] = rng.uniform() < out[k] ? 1.0 : 0.0;
  }
}

std::vector<double> MlpSsm::init_params(Rng& rng) const {
  std::vector<double> p(layout_.size(), 0.0);
  trans_.init_uniform(p, rng);
  obs_.init_uniform(p, rng);
  return p;
}

MlpProposal::MlpProposal(std::size_t latent_dim, std::size_t obs_dim, std::size_t encoder_dim)
    : d_(latent_dim), o_(obs_dim), e_(encoder_dim) {
  if (d_ < 1 || o_ < 1 || e_ < 1) throw InvalidParameter("MlpProposal: dimensions must be >= 1");
  if (e_ > 64) throw InvalidParameter("MlpProposal: encoder width must be <= 64");
  if (d_ > kMaxLatentDim) throw InvalidParameter("MlpProposal: latent dimension too large");
  enc_w_ = layout_.add("enc.W", e_ * o_);
  enc_b_ = layout_.add("enc.b", e_);
  head_w_ = layout_.add("head.W", 2 * d_ * (d_ + e_ + 1));
  head_b_ = layout_.add("head.b", 2 * d_);
}

std::string MlpProposal::describe() const {
  return "mlp_proposal latent=" + std::to_string(d_) + " obs=" + std::to_string(o_) +
         " encoder=" + std::to_string(e_);
}

void MlpProposal::encode(ParamSpan phi, const double* x, double* enc) const {
  for (std::size_t j = 0; j < e_; ++j) {
    const double* w = &phi[enc_w_ + j * o_];
    double a = phi[enc_b_ + j];
    for (std::size_t k = 0; k < o_; ++k) a += w[k] * x[k];
    enc[j] = std::tanh(a);
  }
}

void MlpProposal::head(ParamSpan phi, const double* z_prev, const double* enc,
                       double* out) const {
  const std::size_t in = d_ + e_ + 1;
  for (std::size_t o = 0; o < 2 * d_; ++o) {
    const double* w = &phi[head_w_ + o * in];
    double a = phi[head_b_ + o];
    if (z_prev)
      for (std::size_t k = 0; k < d_; ++k) a += w[k] * z_prev[k];
    for (std::size_t j = 0; j < e_; ++j) a += w[d_ + j] * enc[j];
    if (!z_prev) a += w[d_ + e_];
    out[o] = a;
  }
}

void MlpProposal::params(ParamSpan phi, const double* z_prev, const double* x, double* mean,
                         double* var) const {
  double enc[64];
  double out[2 * kMaxLatentDim];
  encode(phi, x, enc);
  head(phi, z_prev, enc, out);
  for (std::size_t k = 0; k < d_; ++k) {
    mean[k] = out[k];
    var[k] = softplus(out[d_ + k]);
  }
}

void MlpProposal::params_vjp(ParamSpan phi, const double* z_prev, const double* x,
                             const double* d_mean, const double* d_var, double* d_phi,
                             double* d_z_prev) const {
  double enc[64];
  double out[2 * kMaxLatentDim];
  double d_out[2 * kMaxLatentDim];
  double d_enc[64] = {};
  encode(phi, x, enc);
  head(phi, z_prev, enc, out);
  for (std::size_t k = 0; k < d_; ++k) {
    d_out[k] = d_mean[k];
    d_out[d_ + k] = d_var[k] * sigmoid(out[d_ + k]);
  }
  const std::size_t in = d_ + e_ + 1;
  for (std::size_t o = 0; o < 2 * d_; ++o) {
    const double g = d_out[o];
    const double* w = &phi[head_w_ + o * in];
    if (d_phi) {
      double* dw = d_phi + head_w_ + o * in;
      if (z_prev)
        for (std::size_t k = 0; k < d_; ++k) dw[k] += g * z_prev[k];
      for (std::size_t j = 0; j < e_; ++j) dw[d_ + j] += g * enc[j];
      if (!z_prev) dw[d_ + e_] += g;
      d_phi[head_b_ + o] += g;
    }
    if (z_prev && d_z_prev)
      for (std::size_t k = 0; k < d_; ++k) d_z_prev[k] += g * w[k];
    for (std::size_t j = 0; j < e_; ++j) d_enc[j] += g * w[d_ + j];
  }
  if (!d_phi) return;
  for (std::size_t j = 0; j < e_; ++j) {
    const double g = d_enc[j] * (1.0 - enc[j] * enc[j]);
    double* dw = d_phi + enc_w_ + j * o_;
    for (std::size_t k = 0; k < o_; ++k) dw[k] += g * x[k];
    d_phi[enc_b_ + j] += g;
  }
}

std::vector<double> MlpProposal::init_params(Rng& rng) const {
  std::vector<double> p(layout_.size(), 0.0);
  double a_enc = 1.0 / std::sqrt(static_cast<double>(o_));
  double a_head = 1.0 / std::sqrt(static_cast<double>(d_ + e_ + 1));
  for (std::size_t i = 0; i < e_ * o_; ++i) p[enc_w_ + i] = a_enc * (2.0 * rng.uniform() - 1.0);
  for (std::size_t i = 0; i < 2 * d_ * (d_ + e_ + 1); ++i)
    p[head_w_ + i] = a_head * (2.0 * rng.uniform() - 1.0);
  return p;
}

MlpSsmInstance mlp_ssm_new(std::size_t latent_dim, std::size_t obs_dim, std::size_t hidden,
                           Rng& rng, ObservationKind kind) {
  MlpSsm m(latent_dim, obs_dim, hidden, kind);
  auto theta = m.init_params(rng);
  return {std::move(m), std::move(theta)};
}

MlpProposalInstance mlp_proposal_new(std::size_t latent_dim, std::size_t obs_dim,
                                     std::size_t hidden, Rng& rng) {
  MlpProposal q(latent_dim, obs_dim, hidden);
  auto phi = q.init_params(rng);
  return {std::move(q), std::move(phi)};
}

}  // namespace mcfo
