#pragma once

#include "rsd/nets.hpp"
#include "rsd/types.hpp"

#include <map>
#include <string>

namespace rsd {

// Container: magic "RSDCKPT", version u32, arch-text length u32 + bytes,
// parameter count u64, parameters as little-endian float32. Round-trips
// bit-exactly.
void save_checkpoint(const std::string& path, const std::string& arch_text,
                     const Vec& params);

struct Checkpoint {
  std::string arch_text;
  Vec params;  // float32 values widened to double
};
Checkpoint load_checkpoint(const std::string& path);

void save_net(const std::string& path, const PredictorNet& net);
PredictorNet load_net(const std::string& path);

void save_disc(const std::string& path, const DiscriminatorHead& disc);
DiscriminatorHead load_disc(const std::string& path);

/// Full-precision training state sidecar ("RSDSTAT") used by --resume:
/// named f64 tensors (parameters, optimizer moments) plus named counters.
struct StateBlob {
  std::map<std::string, Vec> tensors;
  std::map<std::string, long> counters;
};
void save_state_blob(const std::string& path, const StateBlob& blob);
StateBlob load_state_blob(const std::string& path);

}  // namespace rsd
