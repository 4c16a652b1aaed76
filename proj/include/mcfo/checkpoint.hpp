#pragma once

#include <cstdint>
#include <string>

#include "mcfo/params.hpp"
#include "mcfo/trainer.hpp"

namespace mcfo {

constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  // Flat "section.key=value" lines describing how to rebuild model and proposal.
  std::string setup;
  std::uint64_t config_digest = 0;
  ModelParams theta;
  ProposalParams phi;
  AdamState adam_theta;
  AdamState adam_phi;

  bool operator==(const Checkpoint& o) const;
};

// FNV-1a 64-bit.
std::uint64_t digest64(const std::string& text);

void checkpoint_save(const std::string& path, const Checkpoint& c);
Checkpoint checkpoint_load(const std::string& path);
// Additionally verifies both parameter layouts.
Checkpoint checkpoint_load(const std::string& path, const ParamLayout& theta_layout,
                           const ParamLayout& phi_layout);

}  // namespace mcfo
