#include "mcfo/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "mcfo/errors.hpp"

namespace mcfo {

namespace {

constexpr char kMagic[8] = {'M', 'C', 'F', 'O', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f64(double d) { u64(std::bit_cast<std::uint64_t>(d)); }
  void str(const std::string& s) {
    u64(s.size());
    buf.append(s);
  }
  void vec(const std::vector<double>& v) {
    u64(v.size());
    for (double d : v) f64(d);
  }
  std::string buf;
};

class Reader {
 public:
  explicit Reader(std::string data) : buf_(std::move(data)) {}

  std::uint64_t uint(int bytes) {
    need(bytes);
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += bytes;
    return v;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
  std::uint64_t u64() { return uint(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    std::uint64_t n = u64();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<double> vec() {
    std::uint64_t n = u64();
    need(n * 8);
    std::vector<double> v(n);
    for (auto& d : v) d = f64();
    return v;
  }
  void raw(char* out, std::size_t n) {
    need(n);
    std::memcpy(out, buf_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::uint64_t n) {
    if (n > buf_.size() - pos_)
      throw CheckpointError(CheckpointError::Kind::truncated, "checkpoint: truncated file");
  }
  std::string buf_;
  std::size_t pos_ = 0;
};

void write_layout(Writer& w, const std::string& name, const ParamLayout& l,
                  const std::vector<double>& values) {
  w.str(name);
  w.u64(l.slices().size());
  for (const auto& s : l.slices()) {
    w.str(s.name);
    w.u64(s.offset);
    w.u64(s.length);
  }
  w.vec(values);
}

void read_layout(Reader& r, const std::string& name, ParamLayout& l, std::vector<double>& values) {
  if (r.str() != name)
    throw CheckpointError(CheckpointError::Kind::layout_mismatch,
                          "checkpoint: expected parameter block " + name);
  std::uint64_t n = r.u64();
  l = ParamLayout();
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string s = r.str();
    std::uint64_t off = r.u64();
    std::uint64_t len = r.u64();
    if (off != l.size())
      throw CheckpointError(CheckpointError::Kind::layout_mismatch,
                            "checkpoint: layout slices do not partition the vector");
    l.add(s, len);
  }
  values = r.vec();
  if (values.size() != l.size())
    throw CheckpointError(CheckpointError::Kind::layout_mismatch,
                          "checkpoint: value count does not match layout");
}

void write_adam(Writer& w, const AdamState& s) {
  w.u64(s.step);
  w.f64(s.lr);
  w.f64(s.beta1);
  w.f64(s.beta2);
  w.f64(s.eps);
  w.f64(s.decay_factor);
  w.u64(s.decay_every);
  w.f64(s.lr_floor);
  w.vec(s.m);
  w.vec(s.v);
}

AdamState read_adam(Reader& r) {
  AdamState s;
  s.step = r.u64();
  s.lr = r.f64();
  s.beta1 = r.f64();
  s.beta2 = r.f64();
  s.eps = r.f64();
  s.decay_factor = r.f64();
  s.decay_every = r.u64();
  s.lr_floor = r.f64();
  s.m = r.vec();
  s.v = r.vec();
  return s;
}

}  // namespace

bool Checkpoint::operator==(const Checkpoint& o) const {
  auto same_bits = [](const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
  };
  return setup == o.setup && config_digest == o.config_digest && theta.layout == o.theta.layout &&
         phi.layout == o.phi.layout && same_bits(theta.values, o.theta.values) &&
         same_bits(phi.values, o.phi.values) && adam_theta == o.adam_theta &&
         adam_phi == o.adam_phi;
}

std::uint64_t digest64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

void checkpoint_save(const std::string& path, const Checkpoint& c) {
  Writer w;
  w.buf.append(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.u64(c.config_digest);
  w.str(c.setup);
  write_layout(w, "theta", c.theta.layout, c.theta.values);
  write_layout(w, "phi", c.phi.layout, c.phi.values);
  write_adam(w, c.adam_theta);
  write_adam(w, c.adam_phi);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError(CheckpointError::Kind::io, "checkpoint: cannot write " + path);
  f.write(w.buf.data(), static_cast<std::streamsize>(w.buf.size()));
  if (!f) throw CheckpointError(CheckpointError::Kind::io, "checkpoint: write failed " + path);
}

Checkpoint checkpoint_load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError(CheckpointError::Kind::io, "checkpoint: cannot read " + path);
  std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r(std::move(data));
  char magic[8];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw CheckpointError(CheckpointError::Kind::bad_magic, "checkpoint: bad magic header");
  std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointError(CheckpointError::Kind::version_mismatch,
                          "checkpoint: version " + std::to_string(version) + ", expected " +
                              std::to_string(kCheckpointVersion),
                          version, kCheckpointVersion);
  Checkpoint c;
  c.config_digest = r.u64();
  c.setup = r.str();
  read_layout(r, "theta", c.theta.layout, c.theta.values);
  read_layout(r, "phi", c.phi.layout, c.phi.values);
  c.adam_theta = read_adam(r);
  c.adam_phi = read_adam(r);
  if (!r.done())
    throw CheckpointError(CheckpointError::Kind::truncated, "checkpoint: trailing bytes");
  return c;
}

Checkpoint checkpoint_load(const std::string& path, const ParamLayout& theta_layout,
                           const ParamLayout& phi_layout) {
  Checkpoint c = checkpoint_load(path);
  if (!(c.theta.layout == theta_layout) || !(c.phi.layout == phi_layout))
    throw CheckpointError(CheckpointError::Kind::layout_mismatch,
                          "checkpoint: parameter layout does not match the model");
  return c;
}

}  // namespace mcfo
