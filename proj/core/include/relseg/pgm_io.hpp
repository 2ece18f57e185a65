#pragma once

#include <filesystem>

#include "relseg/tensor.hpp"

namespace relseg {

/// Binary PGM (P5, maxval 255) mask I/O. Writing maps 1 -> 255, 0 -> 0;
/// reading maps values > 127 to 1.
void write_pgm_mask(const std::filesystem::path& path, const Tensor& mask);
Tensor read_pgm_mask(const std::filesystem::path& path);

/// Reads either a PGM mask or a TNSR map depending on extension.
Tensor read_mask_any(const std::filesystem::path& path);

} // namespace relseg
