#include "relseg/bundle.hpp"

#include <fstream>

#include <json.hpp>

#include "relseg/tensor_io.hpp"
#include "relseg/util.hpp"

namespace relseg {

using nlohmann::json;

const Tensor& WeightBundle::get(const std::string& name) const {
    for (const auto& [n, t] : entries) {
        if (n == name) return t;
    }
    data_error("weight bundle has no tensor named '" + name + "'");
}

bool WeightBundle::has(const std::string& name) const {
    for (const auto& [n, t] : entries) {
        if (n == name) return true;
    }
    return false;
}

void WeightBundle::put(const std::string& name, Tensor t) {
    for (auto& [n, existing] : entries) {
        if (n == name) {
            existing = std::move(t);
            return;
        }
    }
    entries.emplace_back(name, std::move(t));
}

static std::string tensor_filename(const std::string& name) {
    std::string s = name;
    for (char& c : s) {
        if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
    }
    return s + ".tnsr";
}

void save_bundle(const std::filesystem::path& dir, const WeightBundle& bundle) {
    std::filesystem::create_directories(dir);
    json manifest = json::array();
    for (const auto& [name, tensor] : bundle.entries) {
        const auto file = tensor_filename(name);
        write_tnsr(dir / file, tensor);
        manifest.push_back({{"name", name},
                            {"shape", tensor.shape()},
                            {"file", file},
                            {"fnv1a64", hex64(hash_file(dir / file))}});
    }
    std::ofstream f(dir / "manifest.json");
    if (!f) data_error("cannot write bundle manifest in " + dir.string());
    f << manifest.dump(2) << "\n";
}

WeightBundle load_bundle(const std::filesystem::path& dir) {
    std::ifstream f(dir / "manifest.json");
    if (!f) data_error("missing bundle manifest: " + (dir / "manifest.json").string());
    json manifest;
    try {
        f >> manifest;
    } catch (const json::exception& e) {
        data_error("malformed bundle manifest in " + dir.string() + ": " + e.what());
    }
    WeightBundle bundle;
    for (const auto& item : manifest) {
        const std::string name = item.at("name").get<std::string>();
        const std::string file = item.at("file").get<std::string>();
        Tensor t = read_tnsr(dir / file);
        const auto shape = item.at("shape").get<std::vector<int>>();
        if (t.shape() != shape) {
            data_error("bundle tensor '" + name + "' shape " + t.shape_str() +
                       " disagrees with manifest");
        }
        bundle.entries.emplace_back(name, std::move(t));
    }
    return bundle;
}

} // namespace relseg
