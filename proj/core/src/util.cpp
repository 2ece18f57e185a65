#include "relseg/util.hpp"

#include <algorithm>
#include <fstream>

#include "relseg/errors.hpp"

namespace relseg {

std::uint64_t hash_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) data_error("cannot hash missing file: " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[65536];
    while (f) {
        f.read(buf, sizeof buf);
        h = fnv1a64(buf, static_cast<size_t>(f.gcount()), h);
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

void parallel_for(std::int64_t n, int workers, const std::function<void(std::int64_t)>& fn) {
    if (n <= 0) return;
    workers = std::max(1, std::min<std::int64_t>(workers, n) > 0
                              ? std::min(workers, static_cast<int>(std::min<std::int64_t>(n, 64)))
                              : 1);
    if (workers == 1) {
        for (std::int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> threads;
    threads.reserve(static_cast<size_t>(workers));
    for (int t = 0; t < workers; ++t) {
        threads.emplace_back([&, t] {
            for (std::int64_t i = t; i < n; i += workers) fn(i);
        });
    }
    for (auto& th : threads) th.join();
}

std::vector<std::filesystem::path> list_files(const std::filesystem::path& dir,
                                              const std::vector<std::string>& extensions) {
    if (!std::filesystem::is_directory(dir)) {
        data_error("not a directory: " + dir.string());
    }
    std::vector<std::filesystem::path> out;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const auto ext = entry.path().extension().string();
        if (std::find(extensions.begin(), extensions.end(), ext) != extensions.end()) {
            out.push_back(entry.path());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace relseg
