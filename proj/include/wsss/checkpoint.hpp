#pragma once

#include <filesystem>
#include <string>

#include "wsss/vit.hpp"

namespace wsss {

// Binary checkpoint, all integers and doubles little-endian:
//
//   char[8]  magic "WSSSCKPT"
//   u32      format version (1)
//   u64      length L of the embedded config text
//   char[L]  config text (same syntax as config files)
//   u32      tensor count N
//   N times:
//     u32    name length, then the name bytes
//     u32    rank R, then R x u64 dimensions
//     f64    values, row-major, product(dimensions) of them
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const std::string& config_text,
                     const ParamList& params);

struct CheckpointData {
  std::string config_text;
  ParamList tensors;
};

CheckpointData read_checkpoint(const std::filesystem::path& path);

// Copies stored values into the given parameters, matching by name and shape.
void load_into(const CheckpointData& data, const ParamList& params);

}  // namespace wsss
