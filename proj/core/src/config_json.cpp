#include "relseg/config_json.hpp"

#include <fstream>

namespace relseg {

using nlohmann::json;

void to_json(json& j, const OperatingPoint& op) {
    j = json{{"tau", op.tau},
             {"sigma", op.sigma},
             {"tta", tta_mode_name(op.tta)},
             {"fill_holes", op.fill_holes},
             {"keep_largest", op.keep_largest}};
}

void from_json(const json& j, OperatingPoint& op) {
    try {
        op.tau = j.at("tau").get<float>();
        op.sigma = j.value("sigma", 0.0f);
        op.tta = tta_mode_from_name(j.value("tta", std::string("none")));
        op.fill_holes = j.value("fill_holes", false);
        op.keep_largest = j.value("keep_largest", false);
    } catch (const json::exception& e) {
        config_error(std::string("operating point: ") + e.what());
    }
    op.validate();
}

void to_json(json& j, const SearchSpace& s) {
    std::vector<std::string> ttas;
    for (TtaMode m : s.tta_modes) ttas.push_back(tta_mode_name(m));
    j = json{{"taus", s.taus},
             {"sigmas", s.sigmas},
             {"tta_modes", ttas},
             {"fill_holes", s.fill_holes_options},
             {"keep_largest", s.keep_largest_options},
             {"objective", s.objective}};
}

void from_json(const json& j, SearchSpace& s) {
    try {
        s = SearchSpace::defaults();
        if (j.contains("taus")) s.taus = j.at("taus").get<std::vector<float>>();
        if (j.contains("sigmas")) s.sigmas = j.at("sigmas").get<std::vector<float>>();
        if (j.contains("tta_modes")) {
            s.tta_modes.clear();
            for (const auto& name : j.at("tta_modes")) {
                s.tta_modes.push_back(tta_mode_from_name(name.get<std::string>()));
            }
        }
        if (j.contains("fill_holes")) {
            s.fill_holes_options = j.at("fill_holes").get<std::vector<bool>>();
        }
        if (j.contains("keep_largest")) {
            s.keep_largest_options = j.at("keep_largest").get<std::vector<bool>>();
        }
        s.objective = j.value("objective", std::string("jac"));
    } catch (const json::exception& e) {
        config_error(std::string("search space: ") + e.what());
    }
    s.validate();
}

void to_json(json& j, const PhantomSpec& s) {
    j = json{{"n_images", s.n_images},   {"height", s.height},
             {"width", s.width},         {"radius_lo", s.radius_lo},
             {"radius_hi", s.radius_hi}, {"noise", s.noise},
             {"blur", s.blur},           {"phi_channels", s.phi_channels},
             {"seed", s.seed}};
}

void from_json(const json& j, PhantomSpec& s) {
    try {
        s.n_images = j.value("n_images", s.n_images);
        s.height = j.value("height", s.height);
        s.width = j.value("width", s.width);
        s.radius_lo = j.value("radius_lo", s.radius_lo);
        s.radius_hi = j.value("radius_hi", s.radius_hi);
        s.noise = j.value("noise", s.noise);
        s.blur = j.value("blur", s.blur);
        s.phi_channels = j.value("phi_channels", s.phi_channels);
        s.seed = j.value("seed", s.seed);
    } catch (const json::exception& e) {
        config_error(std::string("phantom spec: ") + e.what());
    }
    s.validate();
}

void to_json(json& j, const PerImageMetrics& m) {
    j = json{{"acc", m.acc}, {"dice", m.dice}, {"jac", m.jac},   {"sen", m.sen},
             {"spe", m.spe}, {"hd95", m.hd95}, {"assd", m.assd}};
}

void to_json(json& j, const CalibrationMetrics& m) {
    j = json{{"ece", m.ece}, {"brier", m.brier}, {"nll", m.nll}, {"band_pixels", m.band_pixels}};
}

void to_json(json& j, const MetricReport& r) {
    j = json{{"n", r.n},
             {"aggregate", r.aggregate},
             {"per_image", r.per_image},
             {"conventions", r.conventions}};
    if (r.calibration) {
        j["calibration"] = *r.calibration;
        j["calibration_images"] = r.calibration_images;
    }
    if (!r.protocol_flag.empty()) j["protocol"] = r.protocol_flag;
}

void to_json(json& j, const StageWeights& w) {
    j = json{{"consensus", w.consensus},
             {"boundary", w.boundary},
             {"boundary_head", w.boundary_head},
             {"uncertainty", w.uncertainty},
             {"aux", w.aux},
             {"detail", w.detail},
             {"distill_max", w.distill_max},
             {"rabc", {w.rabc_bnd, w.rabc_far, w.rabc_sp}}};
}

void to_json(json& j, const LossBreakdown& b) {
    j = json{{"terms",
              {{"dul", b.terms.dul},
               {"consensus", b.terms.consensus},
               {"boundary_l1", b.terms.boundary_l1},
               {"boundary_head", b.terms.boundary_head},
               {"uncertainty_head", b.terms.uncertainty_head},
               {"aux", b.terms.aux},
               {"detail", b.terms.detail},
               {"distill", b.terms.distill},
               {"rabc_bnd", b.terms.rabc_bnd},
               {"rabc_far", b.terms.rabc_far},
               {"rabc_sp", b.terms.rabc_sp}}},
             {"weights", b.weights},
             {"distill_weight", b.distill_weight},
             {"total", b.total}};
}

void to_json(json& j, const GradCheckEntry& e) {
    j = json{{"name", e.name},
             {"instances", e.instances},
             {"max_rel_err", e.max_rel_err},
             {"pass", e.pass}};
}

void to_json(json& j, const GradCheckReport& r) {
    j = json{{"entries", r.entries},
             {"all_pass", r.all_pass},
             {"seconds", r.seconds},
             {"tolerance", r.tolerance}};
}

void to_json(json& j, const BootstrapResult& r) {
    j = json{{"mean_diff", r.mean_diff}, {"p_two_sided", r.p_two_sided}};
}

json load_json_file(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) config_error("cannot open config: " + path.string());
    try {
        json j;
        f >> j;
        return j;
    } catch (const json::exception& e) {
        config_error("malformed JSON in " + path.string() + ": " + e.what());
    }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
    std::ofstream f(path);
    if (!f) data_error("cannot write " + path.string());
    f << j.dump(2) << "\n";
}

} // namespace relseg
