#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace mcfo {

class InvalidParameter : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Every particle weight at some step was zero (or NaN).
class DegenerateFilter : public std::runtime_error {
 public:
  explicit DegenerateFilter(std::size_t step)
      : std::runtime_error("degenerate filter at step " + std::to_string(step)), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { io, bad_magic, version_mismatch, layout_mismatch, truncated };

  CheckpointError(Kind kind, const std::string& what, std::uint32_t found = 0,
                  std::uint32_t expected = 0)
      : std::runtime_error(what), kind_(kind), found_(found), expected_(expected) {}

  Kind kind() const { return kind_; }
  std::uint32_t found_version() const { return found_; }
  std::uint32_t expected_version() const { return expected_; }

 private:
  Kind kind_;
  std::uint32_t found_;
  std::uint32_t expected_;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mcfo
