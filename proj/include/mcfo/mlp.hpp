#pragma once

#include <vector>

#include "mcfo/models.hpp"

namespace mcfo {

// One tanh hidden layer followed by a linear output layer, addressing a
// block of a flat parameter vector: W1 (hidden x in), b1, W2 (out x hidden), b2.
struct TanhMlp {
  std::size_t in = 0, hidden = 0, out = 0;
  std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0;  // offsets into the parameter vector

  // Registers the four blocks as prefix.W1, prefix.b1, prefix.W2, prefix.b2.
  static TanhMlp add_to(ParamLayout& layout, const std::string& prefix, std::size_t in,
                        std::size_t hidden, std::size_t out);

  // h receives the hidden activations (size hidden) for use by backward.
  void forward(ParamSpan p, const double* x, double* h, double* y) const;
  void backward(ParamSpan p, const double* x, const double* h, const double* d_y, double* d_p,
                double* d_x) const;
  void init_uniform(std::vector<double>& p, Rng& rng) const;
};

double softplus(double x);
double sigmoid(double x);

enum class ObservationKind { gaussian, bernoulli };

// Gaussian-MLP state-space model: z_1 ~ N(0, I),
// z_t ~ N(mu(z_{t-1}), softplus(s(z_{t-1}))), x_t ~ N(g(z_t), exp(obs.log_var))
// or factorized Bernoulli with logits g(z_t).
class MlpSsm : public StateSpaceModel {
 public:
  MlpSsm(std::size_t latent_dim, std::size_t obs_dim, std::size_t hidden,
         ObservationKind kind = ObservationKind::gaussian);

  std::size_t latent_dim() const override { return d_; }
  std::size_t obs_dim() const override { return o_; }
  const ParamLayout& layout() const override { return layout_; }
  std::string describe() const override;

  void prior(ParamSpan theta, double* mean, double* var) const override;
  void transition(ParamSpan theta, const double* z_prev, double* mean, double* var) const override;
  void transition_vjp(ParamSpan theta, const double* z_prev, const double* d_mean,
                      const double* d_var, double* d_theta, double* d_z_prev) const override;
  double observation_log_density(ParamSpan theta, const double* z, const double* x) const override;
  void observation_grad(ParamSpan theta, const double* z, const double* x, double scale,
                        double* d_theta, double* d_z) const override;
  void observation_mean(ParamSpan theta, const double* z, double* out) const override;
  void sample_observation(ParamSpan theta, const double* z, Rng& rng, double* out) const override;

  std::vector<double> init_params(Rng& rng) const;
  std::size_t hidden() const { return h_; }
  ObservationKind kind() const { return kind_; }

 private:
  std::size_t d_, o_, h_;
  ObservationKind kind_;
  ParamLayout layout_;
  TanhMlp trans_, obs_;
  std::size_t log_var_ = 0;
};

// q(z_t|z_{t-1}, x_t): x is encoded by e = tanh(We x + be), then a linear head
// on [z_{t-1}; e; first_step] gives the mean and softplus variance. At t = 1
// z_{t-1} is replaced by zeros and first_step = 1.
class MlpProposal : public Proposal {
 public:
  MlpProposal(std::size_t latent_dim, std::size_t obs_dim, std::size_t encoder_dim);

  std::size_t latent_dim() const override { return d_; }
  const ParamLayout& layout() const override { return layout_; }
  std::string describe() const override;
  void params(ParamSpan phi, const double* z_prev, const double* x, double* mean,
              double* var) const override;
  void params_vjp(ParamSpan phi, const double* z_prev, const double* x, const double* d_mean,
                  const double* d_var, double* d_phi, double* d_z_prev) const override;

  std::vector<double> init_params(Rng& rng) const;
  std::size_t encoder_dim() const { return e_; }

 private:
  void encode(ParamSpan phi, const double* x, double* enc) const;
  void head(ParamSpan phi, const double* z_prev, const double* enc, double* out) const;

  std::size_t d_, o_, e_;
  ParamLayout layout_;
  std::size_t enc_w_, enc_b_, head_w_, head_b_;
};

struct MlpSsmInstance {
  MlpSsm model;
  std::vector<double> theta;
};

struct MlpProposalInstance {
  MlpProposal proposal;
  std::vector<double> phi;
};

MlpSsmInstance mlp_ssm_new(std::size_t latent_dim, std::size_t obs_dim, std::size_t hidden,
                           Rng& rng, ObservationKind kind = ObservationKind::gaussian);
MlpProposalInstance mlp_proposal_new(std::size_t latent_dim, std::size_t obs_dim,
                                     std::size_t hidden, Rng& rng);

}  // namespace mcfo
