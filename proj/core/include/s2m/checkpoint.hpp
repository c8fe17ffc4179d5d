#pragma once

#include <cstdint>
#include <string>

#include "s2m/param_store.hpp"

namespace s2m {

// Checkpoint container: magic "S2MCKPT1", u32 entry count, then per entry
// u16 name length, UTF-8 name, u8 rank, u32 dims[rank], float32 LE data.
// Optimizer moments live under "<name>.m1"/"<name>.m2", the step counter
// under "__step", batch-norm running stats under their buffer names and
// the producing config hash under "__config_hash".
//
// Data is float32 on disk; loading a checkpoint therefore rounds doubles.

void save_checkpoint(const ParamStore& ps, const std::string& path, uint64_t config_hash);

// Loads into an empty or compatible store. If the store already has
// parameters, every loaded shape must match (structural config check).
// Returns the stored config hash.
uint64_t load_checkpoint(ParamStore& ps, const std::string& path);

// FNV-1a over a canonical string; used for config hashes.
uint64_t fnv1a_hash(const std::string& s);

}  // namespace s2m
