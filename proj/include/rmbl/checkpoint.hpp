#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rmbl/layers.hpp"

namespace rmbl {

// Versioned binary checkpoint, little-endian:
//   bytes 0..3   magic "RMBL"
//   u32          format version (currently 1)
//   u64          parameter count
//   per parameter:
//     u32          name length, then name bytes (no terminator)
//     u32          rank, then u32 dims[rank]
//     f64          row-major values (product of dims entries)
struct CheckpointEntry {
  std::vector<int> shape;
  std::vector<double> values;
};

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, const ParamStore*>>& stores);
std::map<std::string, CheckpointEntry> load_checkpoint(const std::string& path);

// Restores every parameter of `store` from entries named `prefix + name`.
// Throws if a parameter is missing or its shape differs.
void load_into(const std::map<std::string, CheckpointEntry>& entries, const std::string& prefix,
               const ParamStore& store);
bool checkpoint_has_prefix(const std::map<std::string, CheckpointEntry>& entries,
                           const std::string& prefix);

}  // namespace rmbl
