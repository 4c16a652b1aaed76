#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace mcfo {

// Identifies one independent random stream. Cheap to copy; sampling state
// lives in Rng.
struct RngStream {
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
};

// splitmix64-based mixing used to derive stream ids from structured tuples
// such as (purpose, iteration, batch element).
std::uint64_t mix64(std::uint64_t x);
RngStream derive_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path);
// A new top-level seed depending on both seed and path.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

// Sequential cursor over a Philox stream. Draw n of a given stream is a pure
// function of (seed, stream_id, n).
class Rng {
 public:
  explicit Rng(RngStream stream);

  std::uint32_t next_u32();
  std::uint64_t next_u64();
  // Uniform on the open interval (0, 1) with 53 bits of resolution.
  double uniform();
  double normal();
  // Exponential(1).
  double exponential();
  std::uint64_t below(std::uint64_t n);

  const RngStream& stream() const { return stream_; }

 private:
  void refill();

  RngStream stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  int pos_ = 4;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

struct GaussianParams {
  std::vector<double> mean;
  std::vector<double> variance;
};

struct GaussianDraw {
  std::vector<double> value;
  std::vector<double> eps;
};

void validate(const GaussianParams& p);

GaussianDraw gaussian_sample(const GaussianParams& p, Rng& rng);
// Deterministic variant for a given standard-normal noise vector.
std::vector<double> gaussian_transform(const GaussianParams& p, std::span<const double> eps);

double gaussian_log_density(std::span<const double> x, const GaussianParams& p);

// Scalar hot-path helpers.
// std::log / std::exp memoized on the previous argument of the calling thread.
double memo_log(double v);
double memo_exp(double v);
double normal_logpdf(double x, double mean, double var);
// Partial derivatives of log N(x; mean, var).
inline double normal_dlog_dx(double x, double mean, double var) { return -(x - mean) / var; }
inline double normal_dlog_dmean(double x, double mean, double var) { return (x - mean) / var; }
inline double normal_dlog_dvar(double x, double mean, double var) {
  double r = x - mean;
  return -0.5 / var + 0.5 * r * r / (var * var);
}

enum class ResampleScheme { multinomial, systematic };

std::vector<std::uint32_t> resample_indices(std::span<const double> normalized_weights,
                                            ResampleScheme scheme, Rng& rng);
// No validation; used by the samplers on weights they normalized themselves.
void resample_into(std::span<const double> normalized_weights, ResampleScheme scheme, Rng& rng,
                   std::span<std::uint32_t> out);

double log_sum_exp(std::span<const double> values);

// Normalizes log-weights into out and returns log_sum_exp(log_w).
double normalize_log_weights(std::span<const double> log_w, std::span<double> out);

double ess(std::span<const double> normalized_weights);

}  // namespace mcfo
