#include "relseg/pgm_io.hpp"

#include <fstream>
#include <string>

#include "relseg/tensor_io.hpp"

namespace relseg {

void write_pgm_mask(const std::filesystem::path& path, const Tensor& mask) {
    if (mask.ndim() != 2) data_error("write_pgm_mask: expected [H,W], got " + mask.shape_str());
    std::ofstream f(path, std::ios::binary);
    if (!f) data_error("cannot open for writing: " + path.string());
    const int h = mask.extent(0), w = mask.extent(1);
    f << "P5\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> row(static_cast<size_t>(w));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            row[static_cast<size_t>(x)] = mask.at(y, x) > 0.5f ? 255 : 0;
        }
        f.write(reinterpret_cast<const char*>(row.data()), w);
    }
    if (!f) data_error("short write: " + path.string());
}

static int next_pnm_int(std::istream& in, const std::string& path) {
    // skips whitespace and '#' comment lines per the PNM header grammar
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (!std::isspace(c)) {
            break;
        }
        c = in.get();
    }
    if (c == EOF || !std::isdigit(c)) data_error("malformed PGM header: " + path);
    int v = 0;
    while (c != EOF && std::isdigit(c)) {
        v = v * 10 + (c - '0');
        c = in.get();
    }
    return v;
}

Tensor read_pgm_mask(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) data_error("cannot open: " + path.string());
    char m0 = 0, m1 = 0;
    f.get(m0);
    f.get(m1);
    if (m0 != 'P' || m1 != '5') data_error("not a binary PGM (P5): " + path.string());
    const int w = next_pnm_int(f, path.string());
    const int h = next_pnm_int(f, path.string());
    const int maxval = next_pnm_int(f, path.string());
    if (w < 1 || h < 1 || maxval < 1 || maxval > 255) {
        data_error("unsupported PGM geometry in " + path.string());
    }
    std::vector<unsigned char> buf(static_cast<size_t>(w) * h);
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!f) data_error("truncated PGM payload: " + path.string());
    Tensor mask({h, w});
    for (size_t i = 0; i < buf.size(); ++i) {
        mask[static_cast<std::int64_t>(i)] = buf[i] > 127 ? 1.0f : 0.0f;
    }
    return mask;
}

Tensor read_mask_any(const std::filesystem::path& path) {
    const auto ext = path.extension().string();
    if (ext == ".pgm") return read_pgm_mask(path);
    if (ext == ".tnsr") return read_tnsr(path);
    data_error("unsupported mask format (want .pgm or .tnsr): " + path.string());
}

} // namespace relseg
