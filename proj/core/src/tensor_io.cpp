#include "relseg/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace relseg {

static_assert(std::endian::native == std::endian::little,
              "TNSR v1 reader/writer assumes a little-endian host");

void write_tnsr(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream f(path, std::ios::binary);
    if (!f) data_error("cannot open for writing: " + path.string());

    const char magic[4] = {'T', 'N', 'S', 'R'};
    f.write(magic, 4);
    const unsigned char header[4] = {1 /*version*/, 0 /*dtype f32*/,
                                     static_cast<unsigned char>(t.ndim()), 0 /*pad*/};
    f.write(reinterpret_cast<const char*>(header), 4);
    for (int d = 0; d < t.ndim(); ++d) {
        const std::uint32_t e = static_cast<std::uint32_t>(t.extent(d));
        f.write(reinterpret_cast<const char*>(&e), 4);
    }
    f.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!f) data_error("short write: " + path.string());
}

Tensor read_tnsr(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) data_error("cannot open: " + path.string());

    char magic[4];
    unsigned char header[4];
    f.read(magic, 4);
    f.read(reinterpret_cast<char*>(header), 4);
    if (!f || std::memcmp(magic, "TNSR", 4) != 0) {
        data_error("not a TNSR file: " + path.string());
    }
    if (header[0] != 1) data_error("unsupported TNSR version in " + path.string());
    if (header[1] != 0) data_error("unsupported TNSR dtype in " + path.string());
    const int ndim = header[2];
    if (ndim < 1 || ndim > 4) data_error("bad TNSR ndim in " + path.string());

    std::vector<int> shape(static_cast<size_t>(ndim));
    for (int d = 0; d < ndim; ++d) {
        std::uint32_t e = 0;
        f.read(reinterpret_cast<char*>(&e), 4);
        if (!f || e == 0) data_error("bad TNSR extent in " + path.string());
        shape[static_cast<size_t>(d)] = static_cast<int>(e);
    }
    Tensor t(shape);
    f.read(reinterpret_cast<char*>(t.data()),
           static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!f) data_error("truncated TNSR payload: " + path.string());
    return t;
}

} // namespace relseg
