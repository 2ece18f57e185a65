#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "relseg/metrics.hpp"
#include "relseg/opsearch.hpp"
#include "relseg/phantom.hpp"

namespace relseg {

/// Protocol constants echoed verbatim into every run manifest.
struct E2eConstants {
    std::vector<float> stage1_weights = {0.15f, 0.03f, 0.15f, 0.08f, 0.05f, 0.08f};
    std::vector<float> stage2_weights = {0.10f, 0.02f, 0.10f, 0.05f, 0.03f, 0.05f};
    std::vector<float> rabc_loss_weights = {0.04f, 0.02f, 0.01f};
    float rabc_far_margin = 0.02f;
    int rabc_band_k = 5;
    float distill_w_max = 0.8f;
};

struct E2eConfig {
    std::filesystem::path out_dir = "e2e_run";
    int workers = 1;

    // dataset source: a phantom spec (generated into out_dir/dataset) or
    // two pre-existing directories in the phantom file layout
    bool use_phantom = true;
    PhantomSpec phantom;
    std::filesystem::path val_dir;
    std::filesystem::path test_dir;
    int val_count = 8; // phantom split: first val_count images are validation

    std::vector<std::string> arms = {"base", "dil", "rabc"};
    int dilate_iterations = 1;
    std::filesystem::path rabc_params_bundle; // empty: default-initialized head
    std::uint64_t rabc_seed = 0;              // nonzero: random-init head

    SearchSpace space = SearchSpace::defaults();
    bool has_fixed_op = false;
    OperatingPoint fixed_op;

    bool run_pseudo_stage = true;
    E2eConstants constants;
};

E2eConfig e2e_config_from_json(const nlohmann::json& j);
nlohmann::json e2e_config_to_json(const E2eConfig& cfg);

struct E2eResult {
    std::filesystem::path manifest_path;
    nlohmann::json manifest;
    std::map<std::string, MetricReport> reports;          // per arm
    std::map<std::string, OperatingPoint> selected_points; // per arm
};

/// Chains pseudo-label construction, optional logit calibration,
/// validation operating-point search, test inference and metrics; writes
/// masks, per-arm reports, a comparison table and a hash manifest. Any
/// stage failure aborts with the stage name and input hash in the message.
E2eResult run_e2e(const E2eConfig& cfg);

} // namespace relseg
