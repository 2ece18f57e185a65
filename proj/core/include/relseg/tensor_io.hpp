#pragma once

#include <filesystem>

#include "relseg/tensor.hpp"

namespace relseg {

/// Binary tensor container "TNSR v1".
///
/// Layout (little-endian):
///   magic   "TNSR" (4 bytes)
///   version u8 = 1
///   dtype   u8 = 0 (f32 little-endian)
///   ndim    u8
///   pad     u8 = 0
///   extents ndim x u32
///   payload row-major f32
///
/// Round-trips are bit-exact.
void write_tnsr(const std::filesystem::path& path, const Tensor& t);
Tensor read_tnsr(const std::filesystem::path& path);

} // namespace relseg
