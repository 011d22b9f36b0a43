#pragma once

// Binary checkpoint format, all integers little-endian:
//
//   "HAASEG1\n"
//   u64 record count
//   per record: u32 name length, name bytes, u32 rank, rank x u64 extents,
//               numel x f64 values
//
// The reader rejects truncated files and trailing bytes.

#include "haaseg/axial_attention.hpp"
#include "haaseg/network.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace haaseg {

inline constexpr char kCheckpointMagic[] = "HAASEG1\n";

std::vector<char> encode_checkpoint(const ParamList& params);
ParamList decode_checkpoint(const std::vector<char>& bytes);

void save_checkpoint(const std::filesystem::path& path, const ParamList& params);
ParamList load_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint values into the network's parameters. Throws
/// IncompatibleCheckpoint when names or shapes differ.
void apply_checkpoint(HAANet& net, const ParamList& records);

} // namespace haaseg
