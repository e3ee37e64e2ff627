#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "twnn/models.hpp"

namespace twnn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout, little-endian throughout:
//   "TWNN" | version u32 | block_count u32
//   per block: width u32 | kind u32 | activation u32 | tolerance f64 | max_iter u32 |
//              damping f64 | tensor_count u32 (4) | tensors w1 b1 w2 b2
//   has_projection u32 [| tensor] | has_readout u32 [| weight tensor | bias tensor]
//   tensor: rank u32 | dims u32 x rank | row-major f64 payload
void write_checkpoint(std::ostream& out, const ResidualStack& stack);
void save_checkpoint(const std::filesystem::path& path, const ResidualStack& stack);

/// Throws BadCheckpoint on malformed input.
ResidualStack read_checkpoint(std::istream& in);
ResidualStack load_checkpoint(const std::filesystem::path& path);

}  // namespace twnn
