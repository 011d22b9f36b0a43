#pragma once

// 8-bit binary PGM (P5, maxval 255).

#include "haaseg/tensor.hpp"

#include <filesystem>
#include <string>

namespace haaseg {

/// Encodes a [1, H, W] or [H, W] map with values in [0, 1] as round(255 v).
std::string encode_pgm(const Tensor& map);
/// Decodes to a [1, H, W] map of byte / 255. Throws ParseError with the
/// byte offset of the first malformed header field.
Tensor decode_pgm(const std::string& bytes);

void write_pgm(const Tensor& map, const std::filesystem::path& path);
Tensor read_pgm(const std::filesystem::path& path);

} // namespace haaseg
