// relseg — reliability-aware segmentation post-processing toolkit.
//
// Subcommands cover the full desk-scale workflow: phantom data generation,
// pseudo-label construction, loss evaluation and gradient checking, logit
// calibration, inference, metrics, bootstrap significance and validation
// operating-point search. Exit codes: 0 ok, 2 config error, 3 data error,
// 4 invariant/gradcheck failure.

#include <algorithm>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "relseg/bundle.hpp"
#include "relseg/config_json.hpp"
#include "relseg/e2e.hpp"
#include "relseg/errors.hpp"
#include "relseg/gradcheck.hpp"
#include "relseg/inference.hpp"
#include "relseg/losses.hpp"
#include "relseg/metrics.hpp"
#include "relseg/opsearch.hpp"
#include "relseg/pgm_io.hpp"
#include "relseg/phantom.hpp"
#include "relseg/pseudo.hpp"
#include "relseg/rabc.hpp"
#include "relseg/tensor_io.hpp"
#include "relseg/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace relseg;

namespace {

std::vector<fs::path> files_with_suffix(const fs::path& dir, const std::string& suffix) {
    if (!fs::is_directory(dir)) data_error("not a directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = entry.path().filename().string();
        if (name.size() >= suffix.size() &&
            name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
            out.push_back(entry.path());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<Tensor> read_tensors(const std::vector<fs::path>& paths) {
    std::vector<Tensor> out;
    out.reserve(paths.size());
    for (const auto& p : paths) out.push_back(read_tnsr(p));
    return out;
}

std::vector<Tensor> read_masks(const std::vector<fs::path>& paths) {
    std::vector<Tensor> out;
    out.reserve(paths.size());
    for (const auto& p : paths) out.push_back(read_mask_any(p));
    return out;
}

std::vector<double> read_metric_csv(const fs::path& path) {
    std::ifstream f(path);
    if (!f) data_error("cannot open: " + path.string());
    std::vector<double> out;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        try {
            size_t used = 0;
            const double v = std::stod(line, &used);
            out.push_back(v);
        } catch (const std::exception&) {
            // non-numeric line (header): skip
        }
    }
    if (out.empty()) data_error("no numeric values in " + path.string());
    return out;
}

OperatingPoint op_from_file_or_flags(const std::string& op_json, float tau, float sigma,
                                     const std::string& tta, bool fill, bool keep) {
    if (!op_json.empty()) {
        return load_json_file(op_json).get<OperatingPoint>();
    }
    OperatingPoint op{tau, sigma, tta_mode_from_name(tta), fill, keep};
    op.validate();
    return op;
}

// ---- subcommand bodies ----

int cmd_gen_phantom(const std::string& spec_file, const PhantomSpec& flags_spec,
                    const std::string& out) {
    PhantomSpec spec = flags_spec;
    if (!spec_file.empty()) spec = load_json_file(spec_file).get<PhantomSpec>();
    gen_phantom(spec, out);
    std::cout << "phantom dataset: " << out << " (" << spec.n_images << " images "
              << spec.height << "x" << spec.width << ", seed " << spec.seed << ")\n";
    return 0;
}

int cmd_pseudo(const std::vector<std::string>& kmeans_files,
               const std::vector<std::string>& otsu_files, const std::string& image_file,
               const std::string& out, std::uint64_t seed) {
    if (kmeans_files.empty() && otsu_files.empty()) {
        config_error("pseudo: need at least one --kmeans or --otsu input");
    }
    const Tensor gray = read_tnsr(image_file);
    std::vector<Tensor> labels;
    for (size_t i = 0; i < kmeans_files.size(); ++i) {
        const Tensor feats = read_tnsr(kmeans_files[i]);
        const KMeansResult km = kmeans2_binarize(feats, seed + i);
        labels.push_back(morph_refine(lesion_cluster_select(km.assign, gray)));
    }
    for (const auto& f : otsu_files) {
        labels.push_back(morph_refine(otsu_binarize(read_tnsr(f))));
    }
    const PseudoStack stack = build_stack(std::move(labels));
    fs::create_directories(out);
    for (int i = 0; i < stack.k(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "label_%d.pgm", i);
        write_pgm_mask(fs::path(out) / name, stack.labels[static_cast<size_t>(i)]);
    }
    write_tnsr(fs::path(out) / "consensus.tnsr", stack.consensus);
    write_tnsr(fs::path(out) / "consistency.tnsr", stack.consistency);
    std::cout << "pseudo stack: K=" << stack.k() << " -> " << out << "\n";
    return 0;
}

struct LossEvalInputs {
    std::string z, consensus, consistency, teacher, pred_boundary;
    std::string boundary_head, uncertainty_head, aux, detail;
    std::vector<std::string> paths, sigmas;
    std::string stage = "stage1";
    int step = 0, rampup = 1;
    std::string out_file;
};

int cmd_loss_eval(const LossEvalInputs& in) {
    const Tensor z = read_tnsr(in.z);
    const Tensor pc = read_tnsr(in.consensus);
    if (in.stage != "stage1" && in.stage != "stage2") {
        config_error("loss-eval: stage must be stage1 or stage2");
    }
    const StageWeights weights =
        in.stage == "stage2" ? StageWeights::stage2() : StageWeights::stage1();

    LossTerms terms;
    Tensor consistency;
    const Tensor* a = nullptr;
    if (!in.consistency.empty()) {
        consistency = read_tnsr(in.consistency);
        a = &consistency;
    }
    if (!in.paths.empty()) {
        if (in.paths.size() != in.sigmas.size()) {
            config_error("loss-eval: --path and --sigma counts must match");
        }
        std::vector<double> path_losses;
        std::vector<Tensor> sigmas;
        for (size_t i = 0; i < in.paths.size(); ++i) {
            const Tensor p = read_tnsr(in.paths[i]);
            sigmas.push_back(read_tnsr(in.sigmas[i]));
            path_losses.push_back(dul_path_loss(z, p, sigmas.back(), a).value);
        }
        terms.dul = dul_total(path_losses, sigmas).value;
    }
    terms.consensus = bce_logits(z, pc).value + dice_loss(z, pc).value;
    if (!in.pred_boundary.empty()) {
        terms.boundary_l1 = boundary_l1(read_tnsr(in.pred_boundary), sobel_mag(pc)).value;
    }
    if (!in.boundary_head.empty()) {
        terms.boundary_head = bce_logits(read_tnsr(in.boundary_head), sobel_mag(pc)).value;
    }
    if (!in.uncertainty_head.empty()) {
        if (!a) config_error("loss-eval: --uncertainty-head requires --consistency");
        Tensor one_minus_a(consistency.shape());
        for (std::int64_t i = 0; i < consistency.numel(); ++i) {
            one_minus_a[i] = 1.0f - consistency[i];
        }
        terms.uncertainty_head = bce_logits(read_tnsr(in.uncertainty_head), one_minus_a).value;
    }
    // aux/detail heads supervise against the consensus at their own scale
    if (!in.aux.empty()) terms.aux = bce_logits(read_tnsr(in.aux), pc).value;
    if (!in.detail.empty()) terms.detail = bce_logits(read_tnsr(in.detail), pc).value;
    double ramp = 0.0;
    if (!in.teacher.empty()) {
        terms.distill = distill_loss(z, read_tnsr(in.teacher)).value;
        ramp = distill_weight(in.step, in.rampup, weights.distill_max);
    }
    const LossBreakdown breakdown = total_loss(terms, weights, ramp);
    const json j = breakdown;
    if (in.out_file.empty()) {
        std::cout << j.dump(2) << "\n";
    } else {
        write_json_file(in.out_file, j);
    }
    return 0;
}

int cmd_gradcheck(std::uint64_t seed, int instances) {
    const GradCheckReport report = run_gradcheck_suite(seed, instances);
    for (const auto& e : report.entries) {
        std::printf("%-26s instances=%-3d max_rel_err=%.3e  %s\n", e.name.c_str(), e.instances,
                    e.max_rel_err, e.pass ? "ok" : "FAIL");
    }
    std::printf("gradcheck: %s in %.2fs (tolerance %.1e)\n",
                report.all_pass ? "all passed" : "FAILURES", report.seconds, report.tolerance);
    if (!report.all_pass) invariant_error("gradcheck suite failed");
    return 0;
}

int cmd_rabc_apply(const std::string& z_file, const std::string& b_file,
                   const std::string& u_file, const std::string& phi_file,
                   const std::string& params_dir, const std::string& out) {
    const Tensor phi = read_tnsr(phi_file);
    RabcConfig cfg;
    cfg.c_dec = phi.extent(0);
    RabcParams params = params_dir.empty() ? RabcParams::zeros(cfg)
                                           : RabcParams::from_bundle(load_bundle(params_dir));
    const RabcCues cues =
        RabcCues::make(read_tnsr(z_file), read_tnsr(b_file), read_tnsr(u_file), phi);
    const RabcForward fwd = rabc_apply(cues, params);
    fs::create_directories(out);
    write_tnsr(fs::path(out) / "zhat.tnsr", fwd.z_hat);
    write_tnsr(fs::path(out) / "delta.tnsr", fwd.delta_z);
    write_tnsr(fs::path(out) / "alpha.tnsr", fwd.alpha);
    write_tnsr(fs::path(out) / "dtau.tnsr", fwd.delta_tau);
    write_tnsr(fs::path(out) / "s.tnsr", fwd.s_gate);
    std::cout << audit_param_budget(params).line << "\n";
    std::cout << "calibrated logits -> " << out << "\n";
    return 0;
}

int cmd_rabc_adapt(const std::string& phantom_dir, const PhantomSpec& spec, int steps, double lr,
                   std::uint64_t init_seed, std::vector<std::string> trainable,
                   const std::string& out) {
    std::vector<PhantomImage> images;
    if (!phantom_dir.empty()) {
        images = load_phantom_dir(phantom_dir);
    } else {
        images = gen_phantom_memory(spec);
    }
    RabcConfig cfg;
    cfg.c_dec = images[0].phi.extent(0);
    RabcParams params = RabcParams::random_init(cfg, init_seed);
    if (trainable.empty()) {
        for (const auto& [name, t] : params.named_tensors()) trainable.push_back(name);
    } else if (trainable.size() == 1 && trainable[0] == "none") {
        trainable.clear();
    }

    std::vector<AdaptItem> batch;
    for (auto& img : images) {
        batch.push_back(AdaptItem{
            RabcCues::make(img.logits, img.cue_b, img.cue_u, img.phi), img.consensus});
    }
    const AdaptResult result = adapt_demo(batch, std::move(params), steps, lr, trainable, cfg);
    if (result.diverged) {
        invariant_error("rabc-adapt diverged at step " + std::to_string(result.diverged_step));
    }

    fs::create_directories(out);
    save_bundle(fs::path(out) / "params", result.params.to_bundle());
    json trace;
    trace["trace"] = result.trace;
    trace["smoothed"] = result.smoothed;
    trace["smoothed_decreased"] = result.smoothed_decreased;
    trace["monotone_fraction"] = result.monotone_fraction;
    trace["trainable_fraction"] = result.trainable_fraction;
    write_json_file(fs::path(out) / "trace.json", trace);

    std::printf("adapt: %d steps, loss %.6f -> %.6f, smoothed %s (monotone %.0f%%)\n", steps,
                result.trace.front(), result.trace.back(),
                result.smoothed_decreased ? "decreased" : "NOT decreased",
                100.0 * result.monotone_fraction);
    std::cout << audit_param_budget(result.params).line << "\n";
    return 0;
}

int cmd_infer(const std::string& prob_path, const std::string& suffix, const OperatingPoint& op,
              const std::string& out, bool dump_stages, int workers) {
    std::vector<fs::path> inputs;
    if (fs::is_directory(prob_path)) {
        inputs = files_with_suffix(prob_path, suffix);
        if (inputs.empty()) data_error("no '" + suffix + "' files in " + prob_path);
    } else {
        inputs.push_back(prob_path);
    }
    fs::create_directories(out);
    std::vector<PipelineTrace> traces(inputs.size());
    parallel_for(static_cast<std::int64_t>(inputs.size()), workers, [&](std::int64_t i) {
        const Tensor prob = read_tnsr(inputs[static_cast<size_t>(i)]);
        traces[static_cast<size_t>(i)] = run_pipeline(identity_prob_source(), prob, op);
    });
    for (size_t i = 0; i < inputs.size(); ++i) {
        std::string stem = inputs[i].filename().string();
        stem = stem.substr(0, stem.find('.'));
        write_pgm_mask(fs::path(out) / (stem + ".pgm"), traces[i].final_mask);
        if (dump_stages) {
            write_tnsr(fs::path(out) / (stem + ".averaged.tnsr"), traces[i].averaged);
            write_tnsr(fs::path(out) / (stem + ".smoothed.tnsr"), traces[i].smoothed);
            write_pgm_mask(fs::path(out) / (stem + ".thresholded.pgm"), traces[i].thresholded);
            write_pgm_mask(fs::path(out) / (stem + ".filled.pgm"), traces[i].after_fill);
        }
    }
    std::cout << "masks: " << inputs.size() << " -> " << out << "\n";
    return 0;
}

int cmd_metrics(const std::string& pred_dir, const std::string& gt_dir,
                const std::string& probs_dir, int band_radius, const std::string& out_file) {
    auto pred_files = files_with_suffix(pred_dir, ".pgm");
    if (pred_files.empty()) pred_files = files_with_suffix(pred_dir, ".tnsr");
    auto gt_files = files_with_suffix(gt_dir, ".pgm");
    if (gt_files.empty()) gt_files = files_with_suffix(gt_dir, ".tnsr");
    if (pred_files.size() != gt_files.size() || pred_files.empty()) {
        data_error("metrics: pred and gt dirs must contain the same nonzero number of masks");
    }
    const std::vector<Tensor> preds = read_masks(pred_files);
    const std::vector<Tensor> gts = read_masks(gt_files);
    std::vector<Tensor> probs;
    const std::vector<Tensor>* probs_p = nullptr;
    if (!probs_dir.empty()) {
        probs = read_tensors(files_with_suffix(probs_dir, ".tnsr"));
        if (probs.size() != preds.size()) data_error("metrics: probs dir count mismatch");
        probs_p = &probs;
    }
    const MetricReport report = evaluate_masks(preds, gts, probs_p, band_radius);
    const json j = report;
    if (out_file.empty()) {
        std::cout << j.dump(2) << "\n";
    } else {
        write_json_file(out_file, j);
        std::printf("n=%d dice=%.4f jac=%.4f hd95=%.2f assd=%.2f -> %s\n", report.n,
                    report.aggregate.dice, report.aggregate.jac, report.aggregate.hd95,
                    report.aggregate.assd, out_file.c_str());
    }
    return 0;
}

int cmd_bootstrap(const std::string& a_file, const std::string& b_file, int resamples,
                  std::uint64_t seed, const std::string& out_file) {
    const auto a = read_metric_csv(a_file);
    const auto b = read_metric_csv(b_file);
    const BootstrapResult r = paired_bootstrap(a, b, resamples, seed);
    const json j = r;
    if (out_file.empty()) {
        std::cout << j.dump(2) << "\n";
    } else {
        write_json_file(out_file, j);
    }
    return 0;
}

int cmd_opsearch(const std::string& val_probs_dir, const std::string& val_gts_dir,
                 const std::string& space_file, const std::string& best_file,
                 const std::string& leaderboard_file, int workers, const std::string& prob_suffix,
                 const std::string& gt_suffix) {
    const std::vector<Tensor> probs = read_tensors(files_with_suffix(val_probs_dir, prob_suffix));
    const std::vector<Tensor> gts = read_masks(files_with_suffix(val_gts_dir, gt_suffix));
    SearchSpace space = SearchSpace::defaults();
    if (!space_file.empty()) space = load_json_file(space_file).get<SearchSpace>();
    const GridSearchResult result = grid_search(probs, gts, space, workers);

    json best = result.best;
    best["validation_objective"] = result.best_objective;
    best["objective_name"] = space.objective;
    if (best_file.empty()) {
        std::cout << best.dump(2) << "\n";
    } else {
        write_json_file(best_file, best);
    }
    if (!leaderboard_file.empty()) {
        std::ofstream csv(leaderboard_file);
        if (!csv) data_error("cannot write " + leaderboard_file);
        csv << "tau,sigma,tta,fill_holes,keep_largest," << space.objective << "\n";
        for (const auto& row : result.leaderboard) {
            csv << row.op.tau << "," << row.op.sigma << "," << tta_mode_name(row.op.tta) << ","
                << (row.op.fill_holes ? 1 : 0) << "," << (row.op.keep_largest ? 1 : 0) << ","
                << row.objective << "\n";
        }
    }
    std::printf("best: tau=%.2f sigma=%.1f tta=%s fill=%d keep=%d  %s=%.4f\n", result.best.tau,
                result.best.sigma, tta_mode_name(result.best.tta).c_str(),
                result.best.fill_holes ? 1 : 0, result.best.keep_largest ? 1 : 0,
                space.objective.c_str(), result.best_objective);
    return 0;
}

int cmd_e2e(const std::string& config_file) {
    const E2eConfig cfg = e2e_config_from_json(load_json_file(config_file));
    const E2eResult result = run_e2e(cfg);
    std::cout << "run dir: " << cfg.out_dir.string() << "\n";
    for (const auto& [arm, report] : result.reports) {
        const OperatingPoint& op = result.selected_points.at(arm);
        std::printf("%-5s tau=%.2f sigma=%.1f tta=%-5s fill=%d keep=%d | dice=%.4f jac=%.4f\n",
                    arm.c_str(), op.tau, op.sigma, tta_mode_name(op.tta).c_str(),
                    op.fill_holes ? 1 : 0, op.keep_largest ? 1 : 0, report.aggregate.dice,
                    report.aggregate.jac);
    }
    return 0;
}

int cmd_dump_config() {
    json j;
    j["e2e"] = e2e_config_to_json(E2eConfig{});
    j["search_space"] = SearchSpace::defaults();
    j["operating_point"] = OperatingPoint{};
    j["raw_p0"] = raw_p0();
    j["phantom"] = PhantomSpec{};
    j["stage1_weights"] = StageWeights::stage1();
    j["stage2_weights"] = StageWeights::stage2();
    std::cout << j.dump(2) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"relseg: reliability-aware segmentation post-processing toolkit"};
    app.require_subcommand(1);

    // gen-phantom
    auto* gen = app.add_subcommand("gen-phantom", "generate a synthetic lesion dataset");
    std::string gen_spec, gen_out;
    PhantomSpec gspec;
    gen->add_option("--spec", gen_spec, "phantom spec JSON file");
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--n", gspec.n_images, "image count");
    gen->add_option("--height", gspec.height);
    gen->add_option("--width", gspec.width);
    gen->add_option("--noise", gspec.noise, "logit noise stddev");
    gen->add_option("--blur", gspec.blur, "boundary softness");
    gen->add_option("--phi-channels", gspec.phi_channels);
    gen->add_option("--seed", gspec.seed);

    // pseudo
    auto* pseudo = app.add_subcommand("pseudo", "build the pseudo-label stack");
    std::vector<std::string> ps_kmeans, ps_otsu;
    std::string ps_image, ps_out;
    std::uint64_t ps_seed = 0;
    pseudo->add_option("--kmeans", ps_kmeans, "feature TNSR for a k-means path (repeatable)");
    pseudo->add_option("--otsu", ps_otsu, "heatmap TNSR for an Otsu path (repeatable)");
    pseudo->add_option("--image", ps_image, "grayscale image TNSR")->required();
    pseudo->add_option("--out", ps_out, "output directory")->required();
    pseudo->add_option("--seed", ps_seed, "k-means seed");

    // loss-eval
    auto* loss = app.add_subcommand("loss-eval", "evaluate the weighted training objective");
    std::string le_z, le_pc, le_a, le_teacher, le_pb, le_stage = "stage1", le_out;
    std::vector<std::string> le_paths, le_sigmas;
    int le_step = 0, le_rampup = 1;
    loss->add_option("--z", le_z, "logits TNSR")->required();
    loss->add_option("--consensus", le_pc, "consensus TNSR")->required();
    loss->add_option("--consistency", le_a, "consistency TNSR (optional)");
    loss->add_option("--path", le_paths, "pseudo-label path TNSR (repeatable)");
    loss->add_option("--sigma", le_sigmas, "per-path sigma TNSR (repeatable)");
    loss->add_option("--teacher-prob", le_teacher, "teacher probability TNSR");
    loss->add_option("--pred-boundary", le_pb, "predicted boundary TNSR");
    loss->add_option("--stage", le_stage, "stage1|stage2");
    loss->add_option("--step", le_step, "training step for distill ramp");
    loss->add_option("--rampup", le_rampup, "ramp-up length");
    loss->add_option("--out", le_out, "write breakdown JSON here");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    std::uint64_t gc_seed = 20240501;
    int gc_instances = 20;
    gc->add_option("--seed", gc_seed);
    gc->add_option("--instances", gc_instances, ">= 20 per loss");

    // rabc-apply
    auto* ra = app.add_subcommand("rabc-apply", "apply boundary calibration to logits");
    std::string ra_z, ra_b, ra_u, ra_phi, ra_params, ra_out;
    ra->add_option("--z", ra_z)->required();
    ra->add_option("--b", ra_b)->required();
    ra->add_option("--u", ra_u)->required();
    ra->add_option("--phi", ra_phi)->required();
    ra->add_option("--params", ra_params, "weight bundle directory");
    ra->add_option("--out", ra_out)->required();

    // rabc-adapt
    auto* ad = app.add_subcommand("rabc-adapt", "desk-scale restricted adaptation demo");
    std::string ad_phantom, ad_out;
    PhantomSpec ad_spec;
    ad_spec.n_images = 50;
    ad_spec.height = 32;
    ad_spec.width = 32;
    ad_spec.noise = 0.5f;
    ad_spec.blur = 1.0f;
    ad_spec.seed = 7;
    int ad_steps = 200;
    double ad_lr = 1e-2;
    std::uint64_t ad_init_seed = 1;
    std::vector<std::string> ad_trainable;
    ad->add_option("--phantom-dir", ad_phantom, "existing phantom dataset dir");
    ad->add_option("--n", ad_spec.n_images);
    ad->add_option("--size", ad_spec.height)->each([&ad_spec](const std::string& v) {
        ad_spec.width = std::stoi(v);
    });
    ad->add_option("--noise", ad_spec.noise);
    ad->add_option("--blur", ad_spec.blur);
    ad->add_option("--seed", ad_spec.seed);
    ad->add_option("--steps", ad_steps);
    ad->add_option("--lr", ad_lr);
    ad->add_option("--init-seed", ad_init_seed);
    ad->add_option("--trainable", ad_trainable,
                   "trainable parameter names (default all; 'none' freezes everything)");
    ad->add_option("--out", ad_out)->required();

    // infer
    auto* infer = app.add_subcommand("infer", "run the deployment pipeline on prob maps");
    std::string in_prob, in_suffix = ".tnsr", in_op_json, in_tta = "none", in_out;
    float in_tau = 0.30f, in_sigma = 0.0f;
    bool in_fill = false, in_keep = false, in_dump = false;
    int in_workers = 1;
    infer->add_option("--prob", in_prob, "prob TNSR file or directory")->required();
    infer->add_option("--suffix", in_suffix, "filename suffix filter for directories");
    infer->add_option("--op", in_op_json, "operating point JSON file");
    infer->add_option("--tau", in_tau);
    infer->add_option("--sigma", in_sigma);
    infer->add_option("--tta", in_tta, "none|flip2|flip4");
    infer->add_flag("--fill-holes", in_fill);
    infer->add_flag("--keep-largest", in_keep);
    infer->add_flag("--dump-stages", in_dump, "write per-stage intermediates");
    infer->add_option("--workers", in_workers);
    infer->add_option("--out", in_out)->required();

    // metrics
    auto* met = app.add_subcommand("metrics", "overlap/boundary/calibration report");
    std::string me_pred, me_gt, me_probs, me_out;
    int me_band = 5;
    met->add_option("--pred", me_pred)->required();
    met->add_option("--gt", me_gt)->required();
    met->add_option("--probs", me_probs, "prob dir for boundary-band calibration");
    met->add_option("--band-radius", me_band);
    met->add_option("--out", me_out);

    // bootstrap
    auto* boot = app.add_subcommand("bootstrap", "paired bootstrap significance test");
    std::string bo_a, bo_b, bo_out;
    int bo_resamples = 5000;
    std::uint64_t bo_seed = 42;
    boot->add_option("--a", bo_a, "per-image metric CSV (method A)")->required();
    boot->add_option("--b", bo_b, "per-image metric CSV (method B)")->required();
    boot->add_option("--resamples", bo_resamples);
    boot->add_option("--seed", bo_seed);
    boot->add_option("--out", bo_out);

    // opsearch
    auto* ops = app.add_subcommand("opsearch", "validation grid search for the operating point");
    std::string op_probs, op_gts, op_space, op_best, op_lb;
    std::string op_prob_suffix = ".tnsr", op_gt_suffix = ".pgm";
    int op_workers = 1;
    ops->add_option("--val-probs", op_probs)->required();
    ops->add_option("--val-gts", op_gts)->required();
    ops->add_option("--space", op_space, "search space JSON (default: full grid)");
    ops->add_option("--best", op_best, "write best point JSON here");
    ops->add_option("--leaderboard", op_lb, "write full leaderboard CSV here");
    ops->add_option("--prob-suffix", op_prob_suffix);
    ops->add_option("--gt-suffix", op_gt_suffix);
    ops->add_option("--workers", op_workers);

    // e2e
    auto* e2e = app.add_subcommand("e2e", "full chained run from a config file");
    std::string e2e_config;
    e2e->add_option("--config", e2e_config)->required();

    // dump-config
    app.add_subcommand("dump-config", "print all defaults as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2; // malformed invocations are config errors
    }

    try {
        if (gen->parsed()) return cmd_gen_phantom(gen_spec, gspec, gen_out);
        if (pseudo->parsed()) return cmd_pseudo(ps_kmeans, ps_otsu, ps_image, ps_out, ps_seed);
        if (loss->parsed()) {
            return cmd_loss_eval(le_z, le_pc, le_a, le_paths, le_sigmas, le_teacher, le_pb,
                                 le_stage, le_step, le_rampup, le_out);
        }
        if (gc->parsed()) return cmd_gradcheck(gc_seed, gc_instances);
        if (ra->parsed()) return cmd_rabc_apply(ra_z, ra_b, ra_u, ra_phi, ra_params, ra_out);
        if (ad->parsed()) {
            return cmd_rabc_adapt(ad_phantom, ad_spec, ad_steps, ad_lr, ad_init_seed,
                                  ad_trainable, ad_out);
        }
        if (infer->parsed()) {
            const OperatingPoint op =
                op_from_file_or_flags(in_op_json, in_tau, in_sigma, in_tta, in_fill, in_keep);
            return cmd_infer(in_prob, in_suffix, op, in_out, in_dump, in_workers);
        }
        if (met->parsed()) return cmd_metrics(me_pred, me_gt, me_probs, me_band, me_out);
        if (boot->parsed()) return cmd_bootstrap(bo_a, bo_b, bo_resamples, bo_seed, bo_out);
        if (ops->parsed()) {
            return cmd_opsearch(op_probs, op_gts, op_space, op_best, op_lb, op_workers,
                                op_prob_suffix, op_gt_suffix);
        }
        if (e2e->parsed()) return cmd_e2e(e2e_config);
        return cmd_dump_config();
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
