#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace mcfo {

struct ParamSlice {
  std::string name;
  std::size_t offset = 0;
  std::size_t length = 0;
};

// Named slices partitioning [0, size()). Variance-typed slots hold
// log-variances so the flat vector is unconstrained.
class ParamLayout {
 public:
  ParamLayout() = default;

  // Appends a slice at the current end and returns its offset.
  std::size_t add(const std::string& name, std::size_t length);

  std::size_t size() const { return size_; }
  const std::vector<ParamSlice>& slices() const { return slices_; }
  const ParamSlice& slice(const std::string& name) const;
  std::size_t index(const std::string& name) const { return slice(name).offset; }
  bool has(const std::string& name) const;
  // Name of the entry at a flat index, e.g. "theta1" or "trans.W1[3]".
  std::string coordinate_name(std::size_t i) const;

  bool operator==(const ParamLayout& o) const;

 private:
  std::vector<ParamSlice> slices_;
  std::size_t size_ = 0;
};

struct ModelParams {
  std::vector<double> values;
  ParamLayout layout;
};

struct ProposalParams {
  std::vector<double> values;
  ParamLayout layout;
};

}  // namespace mcfo
