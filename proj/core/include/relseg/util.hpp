#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace relseg {

/// FNV-1a 64-bit over raw bytes; used for artifact content hashes in manifests.
inline std::uint64_t fnv1a64(const void* data, size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t hash_file(const std::filesystem::path& path);
std::string hex64(std::uint64_t v);

/// splitmix64; used to derive independent per-counter RNG streams.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

/// Runs fn(i) for i in [0,n) across `workers` threads. Each index owns its
/// output slot, so results are identical for any worker count.
void parallel_for(std::int64_t n, int workers, const std::function<void(std::int64_t)>& fn);

/// Sorted list of regular files in `dir` with one of the given extensions.
std::vector<std::filesystem::path> list_files(const std::filesystem::path& dir,
                                              const std::vector<std::string>& extensions);

} // namespace relseg
