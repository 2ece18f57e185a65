#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "relseg/tensor.hpp"

namespace relseg {

/// Named-tensor archive: a directory of TNSR files plus manifest.json
/// listing tensor names, shapes, files and content hashes. Used for
/// attention/RABC weight bundles.
struct WeightBundle {
    std::vector<std::pair<std::string, Tensor>> entries;

    const Tensor& get(const std::string& name) const;
    bool has(const std::string& name) const;
    void put(const std::string& name, Tensor t);
};

void save_bundle(const std::filesystem::path& dir, const WeightBundle& bundle);
WeightBundle load_bundle(const std::filesystem::path& dir);

} // namespace relseg
