#include "mcfo/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "mcfo/errors.hpp"

namespace mcfo {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

}  // namespace

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

RngStream derive_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = 0x6A09E667F3BCC908ull;
  for (std::uint64_t p : path) h = mix64(h ^ mix64(p + 0x632BE59BD9B4E019ull));
  return RngStream{seed, h};
}

std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  return mix64(seed ^ derive_stream(seed, path).stream_id);
}

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> c,
                                        std::array<std::uint32_t, 2> k) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, c[0], hi0, lo0);
    mulhilo(kMul1, c[2], hi1, lo1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    k[0] += kWeyl0;
    k[1] += kWeyl1;
  }
  return c;
}

Rng::Rng(RngStream stream) : stream_(stream) {}

void Rng::refill() {
  std::array<std::uint32_t, 4> ctr = {
      static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
      static_cast<std::uint32_t>(stream_.stream_id),
      static_cast<std::uint32_t>(stream_.stream_id >> 32)};
  std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(stream_.seed),
                                      static_cast<std::uint32_t>(stream_.seed >> 32)};
  buf_ = philox4x32(ctr, key);
  ++block_;
  pos_ = 0;
}

std::uint32_t Rng::next_u32() {
  if (pos_ == 4) refill();
  return buf_[pos_++];
}

std::uint64_t Rng::next_u64() {
  std::uint64_t hi = next_u32();
  return (hi << 32) | next_u32();
}

double Rng::uniform() {
  std::uint64_t bits = next_u64() >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(a);
  have_spare_ = true;
  return r * std::cos(a);
}

double Rng::exponential() { return -std::log(uniform()); }

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw InvalidParameter("Rng::below: empty range");
  // Rejection keeps the draw exactly uniform.
  std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                        std::numeric_limits<std::uint64_t>::max() % n;
  for (;;) {
    std::uint64_t v = next_u64();
    if (v < limit) return v % n;
  }
}

void validate(const GaussianParams& p) {
  if (p.mean.size() != p.variance.size())
    throw InvalidParameter("GaussianParams: mean/variance size mismatch");
  for (double v : p.variance)
    if (!(v > 0.0) || !std::isfinite(v))
      throw InvalidParameter("GaussianParams: variance must be positive and finite");
}

GaussianDraw gaussian_sample(const GaussianParams& p, Rng& rng) {
  validate(p);
  GaussianDraw d;
  d.eps.resize(p.mean.size());
  for (double& e : d.eps) e = rng.normal();
  d.value = gaussian_transform(p, d.eps);
  return d;
}

std::vector<double> gaussian_transform(const GaussianParams& p, std::span<const double> eps) {
  validate(p);
  if (eps.size() != p.mean.size()) throw InvalidParameter("gaussian_transform: size mismatch");
  std::vector<double> out(eps.size());
  for (std::size_t i = 0; i < eps.size(); ++i)
    out[i] = p.mean[i] + std::sqrt(p.variance[i]) * eps[i];
  return out;
}

double memo_log(double v) {
  thread_local double last_in = 1.0, last_out = 0.0;
  if (v != last_in) {
    last_in = v;
    last_out = std::log(v);
  }
  return last_out;
}

double memo_exp(double v) {
  thread_local double last_in = 0.0, last_out = 1.0;
  if (v != last_in) {
    last_in = v;
    last_out = std::exp(v);
  }
  return last_out;
}

double normal_logpdf(double x, double mean, double var) {
  constexpr double kLog2Pi = 1.8378770664093454836;
  double r = x - mean;
  return -0.5 * (kLog2Pi + memo_log(var) + r * r / var);
}

double gaussian_log_density(std::span<const double> x, const GaussianParams& p) {
  validate(p);
  if (x.size() != p.mean.size())
    throw InvalidParameter("gaussian_log_density: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += normal_logpdf(x[i], p.mean[i], p.variance[i]);
  return s;
}

void resample_into(std::span<const double> w, ResampleScheme scheme, Rng& rng,
                   std::span<std::uint32_t> out) {
  const std::size_t K = w.size();
  const std::size_t n = out.size();
  if (n == 0) return;
  if (scheme == ResampleScheme::systematic) {
    double u = rng.uniform() / static_cast<double>(n);
    double step = 1.0 / static_cast<double>(n);
    double cum = w[0];
    std::size_t j = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double target = u + step * static_cast<double>(i);
      while (target > cum && j + 1 < K) cum += w[++j];
      out[i] = static_cast<std::uint32_t>(j);
    }
    for (auto& a : out)
      while (w[a] == 0.0 && a > 0) --a;
    return;
  }
  // Multinomial: sorted uniforms from normalized exponential spacings.
  thread_local std::vector<double> spacing;
  spacing.resize(n + 1);
  double total = 0.0;
  for (std::size_t i = 0; i <= n; ++i) {
    spacing[i] = rng.exponential();
    total += spacing[i];
  }
  double cum_u = 0.0;
  double cum_w = w[0];
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i) {
    cum_u += spacing[i];
    double u = cum_u / total;
    while (u > cum_w && j + 1 < K) cum_w += w[++j];
    out[i] = static_cast<std::uint32_t>(j);
  }
  // Rounding at the tail of the cumulative sum can land on a zero-weight index.
  for (auto& a : out)
    while (w[a] == 0.0 && a > 0) --a;
}

std::vector<std::uint32_t> resample_indices(std::span<const double> w, ResampleScheme scheme,
                                            Rng& rng) {
  if (w.empty()) throw InvalidParameter("resample_indices: empty weight vector");
  double sum = 0.0;
  for (double v : w) {
    if (std::isnan(v)) throw InvalidParameter("resample_indices: NaN weight");
    if (v < 0.0) throw InvalidParameter("resample_indices: negative weight");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw InvalidParameter("resample_indices: weights do not sum to 1");
  std::vector<std::uint32_t> out(w.size());
  resample_into(w, scheme, rng, out);
  return out;
}

double log_sum_exp(std::span<const double> v) {
  if (v.empty()) return -std::numeric_limits<double>::infinity();
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) {
    if (std::isnan(x)) return x;
    m = std::max(m, x);
  }
  if (m == -std::numeric_limits<double>::infinity()) return m;
  if (m == std::numeric_limits<double>::infinity()) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

double normalize_log_weights(std::span<const double> log_w, std::span<double> out) {
  const double inf = std::numeric_limits<double>::infinity();
  double m = -inf;
  bool nan = false;
  for (double x : log_w) {
    nan |= std::isnan(x);
    m = std::max(m, x);
  }
  if (nan || m == inf || m == -inf) {
    double lse = log_sum_exp(log_w);
    for (std::size_t i = 0; i < log_w.size(); ++i) out[i] = std::exp(log_w[i] - lse);
    return lse;
  }
  double s = 0.0;
  for (std::size_t i = 0; i < log_w.size(); ++i) s += (out[i] = std::exp(log_w[i] - m));
  const double inv = 1.0 / s;
  for (std::size_t i = 0; i < log_w.size(); ++i) out[i] *= inv;
  return m + std::log(s);
}

double ess(std::span<const double> w) {
  double s = 0.0;
  for (double v : w) s += v * v;
  return 1.0 / s;
}

}  // namespace mcfo
