#include "relseg/e2e.hpp"

#include <algorithm>
#include <fstream>

#include "relseg/config_json.hpp"
#include "relseg/pgm_io.hpp"
#include "relseg/pseudo.hpp"
#include "relseg/rabc.hpp"
#include "relseg/tensor_io.hpp"
#include "relseg/util.hpp"

namespace relseg {

using nlohmann::json;

E2eConfig e2e_config_from_json(const json& j) {
    E2eConfig cfg;
    try {
        cfg.out_dir = j.value("out_dir", std::string("e2e_run"));
        cfg.workers = j.value("workers", 1);
        if (j.contains("phantom")) {
            cfg.use_phantom = true;
            cfg.phantom = j.at("phantom").get<PhantomSpec>();
            cfg.val_count = j.value("val_count", cfg.val_count);
        } else if (j.contains("val_dir") || j.contains("test_dir")) {
            cfg.use_phantom = false;
            cfg.val_dir = j.value("val_dir", std::string());
            cfg.test_dir = j.value("test_dir", std::string());
        }
        cfg.arms = j.value("arms", cfg.arms);
        cfg.dilate_iterations = j.value("dilate_iterations", 1);
        cfg.rabc_params_bundle = j.value("rabc_params_bundle", std::string());
        cfg.rabc_seed = j.value("rabc_seed", static_cast<std::uint64_t>(0));
        if (j.contains("search_space")) cfg.space = j.at("search_space").get<SearchSpace>();
        if (j.contains("fixed_operating_point") && !j.at("fixed_operating_point").is_null()) {
            cfg.has_fixed_op = true;
            cfg.fixed_op = j.at("fixed_operating_point").get<OperatingPoint>();
        }
        cfg.run_pseudo_stage = j.value("pseudo_stage", true);
        if (j.contains("constants")) {
            const auto& c = j.at("constants");
            cfg.constants.stage1_weights =
                c.value("stage1_weights", cfg.constants.stage1_weights);
            cfg.constants.stage2_weights =
                c.value("stage2_weights", cfg.constants.stage2_weights);
            cfg.constants.rabc_loss_weights =
                c.value("rabc_loss_weights", cfg.constants.rabc_loss_weights);
            cfg.constants.rabc_far_margin =
                c.value("rabc_far_margin", cfg.constants.rabc_far_margin);
            cfg.constants.rabc_band_k = c.value("rabc_band_k", cfg.constants.rabc_band_k);
            cfg.constants.distill_w_max = c.value("distill_w_max", cfg.constants.distill_w_max);
        }
    } catch (const json::exception& e) {
        config_error(std::string("e2e config: ") + e.what());
    }
    for (const auto& arm : cfg.arms) {
        if (arm != "base" && arm != "dil" && arm != "rabc") {
            config_error("e2e config: unknown arm '" + arm + "'");
        }
    }
    if (!cfg.use_phantom) {
        if (cfg.val_dir.empty() || cfg.test_dir.empty()) {
            config_error("e2e config: val_dir and test_dir are both required");
        }
        if (std::filesystem::weakly_canonical(cfg.val_dir) ==
            std::filesystem::weakly_canonical(cfg.test_dir)) {
            config_error("e2e config: val_dir and test_dir must be disjoint");
        }
    } else if (cfg.val_count < 1 || cfg.val_count >= cfg.phantom.n_images) {
        config_error("e2e config: val_count must leave a nonempty test split");
    }
    return cfg;
}

json e2e_config_to_json(const E2eConfig& cfg) {
    json j;
    j["out_dir"] = cfg.out_dir.string();
    j["workers"] = cfg.workers;
    if (cfg.use_phantom) {
        j["phantom"] = cfg.phantom;
        j["val_count"] = cfg.val_count;
    } else {
        j["val_dir"] = cfg.val_dir.string();
        j["test_dir"] = cfg.test_dir.string();
    }
    j["arms"] = cfg.arms;
    j["dilate_iterations"] = cfg.dilate_iterations;
    j["rabc_params_bundle"] = cfg.rabc_params_bundle.string();
    j["rabc_seed"] = cfg.rabc_seed;
    j["search_space"] = cfg.space;
    if (cfg.has_fixed_op) {
        j["fixed_operating_point"] = cfg.fixed_op;
    } else {
        j["fixed_operating_point"] = nullptr;
    }
    j["pseudo_stage"] = cfg.run_pseudo_stage;
    j["constants"] = {{"stage1_weights", cfg.constants.stage1_weights},
                      {"stage2_weights", cfg.constants.stage2_weights},
                      {"rabc_loss_weights", cfg.constants.rabc_loss_weights},
                      {"rabc_far_margin", cfg.constants.rabc_far_margin},
                      {"rabc_band_k", cfg.constants.rabc_band_k},
                      {"distill_w_max", cfg.constants.distill_w_max}};
    return j;
}

namespace {

template <typename F>
auto run_stage(const char* stage, const std::string& input_hash, F&& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        throw Error(e.kind(), "stage '" + std::string(stage) + "' failed (inputs " + input_hash +
                                  "): " + e.what());
    }
}

std::uint64_t hash_images(const std::vector<PhantomImage>& images) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& img : images) {
        h = fnv1a64(img.prob.data(), static_cast<size_t>(img.prob.numel()) * sizeof(float), h);
        h = fnv1a64(img.gt.data(), static_cast<size_t>(img.gt.numel()) * sizeof(float), h);
    }
    return h;
}

json record_artifact(const std::filesystem::path& root, const std::filesystem::path& file) {
    return json{{"file", std::filesystem::relative(file, root).string()},
                {"fnv1a64", hex64(hash_file(file))}};
}

Tensor slice3(const Tensor& phi, int c0, int c1) {
    const int h = phi.extent(1), w = phi.extent(2);
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    Tensor out({c1 - c0, h, w});
    std::copy_n(phi.data() + c0 * hw, (c1 - c0) * hw, out.data());
    return out;
}

} // namespace

E2eResult run_e2e(const E2eConfig& cfg) {
    std::filesystem::create_directories(cfg.out_dir);
    json artifacts = json::array();

    // ---- stage: dataset ----
    std::vector<PhantomImage> val_set, test_set;
    std::string dataset_hash;
    run_stage("dataset", "n/a", [&] {
        if (cfg.use_phantom) {
            const auto ds_dir = cfg.out_dir / "dataset";
            gen_phantom(cfg.phantom, ds_dir);
            auto all = load_phantom_dir(ds_dir);
            val_set.assign(all.begin(), all.begin() + cfg.val_count);
            test_set.assign(all.begin() + cfg.val_count, all.end());
        } else {
            val_set = load_phantom_dir(cfg.val_dir);
            test_set = load_phantom_dir(cfg.test_dir);
        }
        if (test_set.empty()) data_error("empty test set");
        if (val_set.empty()) data_error("empty validation set");
        dataset_hash = hex64(hash_images(val_set) ^ hash_images(test_set));
        return 0;
    });

    // ---- stage: pseudo ----
    if (cfg.run_pseudo_stage) {
        run_stage("pseudo", dataset_hash, [&] {
            const auto pseudo_dir = cfg.out_dir / "pseudo";
            std::filesystem::create_directories(pseudo_dir);
            for (size_t i = 0; i < test_set.size(); ++i) {
                const PhantomImage& img = test_set[i];
                std::vector<Tensor> labels;
                labels.push_back(morph_refine(lesion_cluster_select(
                    kmeans2_binarize(slice3(img.phi, 0, 3), cfg.phantom.seed + i).assign,
                    img.image)));
                labels.push_back(morph_refine(otsu_binarize(img.prob)));
                labels.push_back(morph_refine(lesion_cluster_select(
                    kmeans2_binarize(slice3(img.phi, 3, 6), cfg.phantom.seed + 31 * i + 1).assign,
                    img.image)));
                labels.push_back(morph_refine(lesion_cluster_select(
                    kmeans2_binarize(slice3(img.phi, 5, 8), cfg.phantom.seed + 77 * i + 2).assign,
                    img.image)));
                const PseudoStack stack = build_stack(std::move(labels));
                char stem[32];
                std::snprintf(stem, sizeof stem, "img_%04zu", i);
                write_tnsr(pseudo_dir / (std::string(stem) + ".consensus.tnsr"), stack.consensus);
                write_tnsr(pseudo_dir / (std::string(stem) + ".consistency.tnsr"),
                           stack.consistency);
                artifacts.push_back(record_artifact(
                    cfg.out_dir, pseudo_dir / (std::string(stem) + ".consensus.tnsr")));
                artifacts.push_back(record_artifact(
                    cfg.out_dir, pseudo_dir / (std::string(stem) + ".consistency.tnsr")));
            }
            return 0;
        });
    }

    const bool want_rabc =
        std::find(cfg.arms.begin(), cfg.arms.end(), "rabc") != cfg.arms.end();

    // ---- stage: rabc calibration ----
    std::vector<Tensor> val_probs_base, test_probs_base, val_probs_rabc, test_probs_rabc;
    for (const auto& img : val_set) val_probs_base.push_back(img.prob);
    for (const auto& img : test_set) test_probs_base.push_back(img.prob);

    ParamBudgetAudit budget_audit;
    if (want_rabc) {
        run_stage("rabc", dataset_hash, [&] {
            const int c_dec = val_set[0].phi.extent(0);
            RabcConfig rcfg;
            rcfg.c_dec = c_dec;
            rcfg.far_margin = cfg.constants.rabc_far_margin;
            rcfg.band_k = cfg.constants.rabc_band_k;
            RabcParams params;
            if (!cfg.rabc_params_bundle.empty()) {
                params = RabcParams::from_bundle(load_bundle(cfg.rabc_params_bundle));
            } else if (cfg.rabc_seed != 0) {
                params = RabcParams::random_init(rcfg, cfg.rabc_seed);
            } else {
                params = RabcParams::zeros(rcfg);
            }
            budget_audit = audit_param_budget(RabcParams::zeros(RabcConfig{}));

            const auto rabc_dir = cfg.out_dir / "rabc";
            std::filesystem::create_directories(rabc_dir);
            auto calibrate = [&](const std::vector<PhantomImage>& images,
                                 std::vector<Tensor>& out_probs, const char* tag) {
                for (size_t i = 0; i < images.size(); ++i) {
                    const PhantomImage& img = images[i];
                    const RabcCues cues = RabcCues::make(img.logits, img.cue_b, img.cue_u, img.phi);
                    const RabcForward fwd = rabc_apply(cues, params);
                    out_probs.push_back(sigmoid(fwd.z_hat));
                    if (std::string(tag) == "test") {
                        char stem[32];
                        std::snprintf(stem, sizeof stem, "img_%04zu", i);
                        write_tnsr(rabc_dir / (std::string(stem) + ".zhat.tnsr"), fwd.z_hat);
                        write_tnsr(rabc_dir / (std::string(stem) + ".delta.tnsr"), fwd.delta_z);
                        artifacts.push_back(record_artifact(
                            cfg.out_dir, rabc_dir / (std::string(stem) + ".zhat.tnsr")));
                        artifacts.push_back(record_artifact(
                            cfg.out_dir, rabc_dir / (std::string(stem) + ".delta.tnsr")));
                    }
                }
            };
            calibrate(val_set, val_probs_rabc, "val");
            calibrate(test_set, test_probs_rabc, "test");
            return 0;
        });
    }

    // ---- stage: operating-point search (validation only) ----
    std::vector<Tensor> val_gts, test_gts;
    for (const auto& img : val_set) val_gts.push_back(img.gt);
    for (const auto& img : test_set) test_gts.push_back(img.gt);

    std::map<std::string, OperatingPoint> selected;
    std::map<std::string, double> selected_obj;
    run_stage("opsearch", dataset_hash, [&] {
        if (cfg.has_fixed_op) {
            selected["base"] = cfg.fixed_op;
            selected["rabc"] = cfg.fixed_op;
        } else {
            const GridSearchResult base =
                grid_search(val_probs_base, val_gts, cfg.space, cfg.workers);
            selected["base"] = base.best;
            selected_obj["base"] = base.best_objective;
            if (want_rabc) {
                const GridSearchResult rb =
                    grid_search(val_probs_rabc, val_gts, cfg.space, cfg.workers);
                selected["rabc"] = rb.best;
                selected_obj["rabc"] = rb.best_objective;
            }
        }
        selected["dil"] = selected["base"]; // dilation arm reuses the base point
        return 0;
    });

    // ---- stage: inference + metrics ----
    E2eResult result;
    json comparison = json::array();
    run_stage("infer+metrics", dataset_hash, [&] {
        for (const auto& arm : cfg.arms) {
            const std::vector<Tensor>& probs = (arm == "rabc") ? test_probs_rabc : test_probs_base;
            const OperatingPoint op = selected.at(arm);
            const auto mask_dir = cfg.out_dir / "masks" / arm;
            std::filesystem::create_directories(mask_dir);

            std::vector<Tensor> masks(probs.size());
            parallel_for(static_cast<std::int64_t>(probs.size()), cfg.workers,
                         [&](std::int64_t i) {
                             Tensor m = run_pipeline(identity_prob_source(),
                                                     probs[static_cast<size_t>(i)], op)
                                            .final_mask;
                             if (arm == "dil") m = dilate_mask(m, cfg.dilate_iterations);
                             masks[static_cast<size_t>(i)] = std::move(m);
                         });
            for (size_t i = 0; i < masks.size(); ++i) {
                char stem[32];
                std::snprintf(stem, sizeof stem, "img_%04zu", i);
                write_pgm_mask(mask_dir / (std::string(stem) + ".pgm"), masks[i]);
                artifacts.push_back(
                    record_artifact(cfg.out_dir, mask_dir / (std::string(stem) + ".pgm")));
            }

            MetricReport report = evaluate_masks(masks, test_gts, &probs);
            result.reports[arm] = report;
            json jr = report;
            jr["arm"] = arm;
            jr["operating_point"] = op;
            write_json_file(cfg.out_dir / ("report_" + arm + ".json"), jr);
            artifacts.push_back(
                record_artifact(cfg.out_dir, cfg.out_dir / ("report_" + arm + ".json")));

            comparison.push_back({{"arm", arm},
                                  {"dice", report.aggregate.dice},
                                  {"jac", report.aggregate.jac},
                                  {"sen", report.aggregate.sen},
                                  {"spe", report.aggregate.spe},
                                  {"hd95", report.aggregate.hd95},
                                  {"assd", report.aggregate.assd}});
        }
        return 0;
    });

    // comparison table (CSV for external plotting)
    {
        std::ofstream csv(cfg.out_dir / "comparison.csv");
        csv << "arm,dice,jac,sen,spe,hd95,assd\n";
        for (const auto& row : comparison) {
            csv << row.at("arm").get<std::string>() << "," << row.at("dice").get<double>() << ","
                << row.at("jac").get<double>() << "," << row.at("sen").get<double>() << ","
                << row.at("spe").get<double>() << "," << row.at("hd95").get<double>() << ","
                << row.at("assd").get<double>() << "\n";
        }
    }
    artifacts.push_back(record_artifact(cfg.out_dir, cfg.out_dir / "comparison.csv"));

    json manifest;
    manifest["tool"] = "relseg";
    manifest["version"] = "0.1.0";
    manifest["config"] = e2e_config_to_json(cfg);
    manifest["constants"] = manifest["config"]["constants"];
    manifest["dataset_hash"] = dataset_hash;
    json ops = json::object();
    for (const auto& [arm, op] : selected) {
        if (std::find(cfg.arms.begin(), cfg.arms.end(), arm) == cfg.arms.end()) continue;
        ops[arm] = op;
        if (selected_obj.count(arm)) ops[arm]["validation_objective"] = selected_obj.at(arm);
    }
    manifest["operating_points"] = ops;
    if (want_rabc) {
        manifest["rabc_param_budget"] = {{"count", budget_audit.count},
                                         {"reference", budget_audit.reference},
                                         {"gap", budget_audit.gap},
                                         {"gap_percent", budget_audit.gap_percent},
                                         {"audit", budget_audit.line}};
    }
    manifest["comparison"] = comparison;
    manifest["artifacts"] = artifacts;
    const auto manifest_path = cfg.out_dir / "manifest.json";
    write_json_file(manifest_path, manifest);

    result.manifest_path = manifest_path;
    result.manifest = manifest;
    for (const auto& [arm, op] : selected) {
        if (std::find(cfg.arms.begin(), cfg.arms.end(), arm) != cfg.arms.end()) {
            result.selected_points[arm] = op;
        }
    }
    return result;
}

} // namespace relseg
