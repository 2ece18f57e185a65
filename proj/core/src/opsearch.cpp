#include "relseg/opsearch.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "relseg/util.hpp"

namespace relseg {

SearchSpace SearchSpace::defaults() {
    SearchSpace s;
    s.taus.reserve(99);
    for (int i = 1; i <= 99; ++i) {
        s.taus.push_back(static_cast<float>(i) / 100.0f);
    }
    return s;
}

void SearchSpace::validate() const {
    if (taus.empty() || sigmas.empty() || tta_modes.empty() || fill_holes_options.empty() ||
        keep_largest_options.empty()) {
        config_error("search space: every grid must be nonempty");
    }
    for (float t : taus) {
        if (!(t > 0.0f && t < 1.0f)) config_error("search space: tau grid must lie in (0,1)");
    }
    for (float s : sigmas) {
        if (s < 0.0f) config_error("search space: sigma grid must be >= 0");
    }
    static const std::vector<std::string> known = {"acc", "dice", "jac", "sen", "spe",
                                                   "hd95", "assd"};
    if (std::find(known.begin(), known.end(), objective) == known.end()) {
        config_error("search space: unknown objective '" + objective + "'");
    }
}

std::vector<OperatingPoint> SearchSpace::candidates() const {
    std::vector<OperatingPoint> out;
    out.reserve(taus.size() * sigmas.size() * tta_modes.size() * fill_holes_options.size() *
                keep_largest_options.size());
    for (float sigma : sigmas) {
        for (TtaMode tta : tta_modes) {
            for (bool fill : fill_holes_options) {
                for (bool keep : keep_largest_options) {
                    for (float tau : taus) {
                        out.push_back(OperatingPoint{tau, sigma, tta, fill, keep});
                    }
                }
            }
        }
    }
    return out;
}

double objective_value(const PerImageMetrics& m, const std::string& objective) {
    if (objective == "acc") return m.acc;
    if (objective == "dice") return m.dice;
    if (objective == "jac") return m.jac;
    if (objective == "sen") return m.sen;
    if (objective == "spe") return m.spe;
    if (objective == "hd95") return -m.hd95; // lower is better
    if (objective == "assd") return -m.assd;
    config_error("unknown objective '" + objective + "'");
}

static int tta_rank(TtaMode m) {
    switch (m) {
        case TtaMode::None: return 0;
        case TtaMode::Flip2: return 1;
        case TtaMode::Flip4: return 2;
    }
    return 0;
}

bool cheaper_point(const OperatingPoint& a, const OperatingPoint& b) {
    if (a.sigma != b.sigma) return a.sigma < b.sigma;
    if (a.enabled_flag_count() != b.enabled_flag_count()) {
        return a.enabled_flag_count() < b.enabled_flag_count();
    }
    if (a.tau != b.tau) return a.tau < b.tau;
    if (tta_rank(a.tta) != tta_rank(b.tta)) return tta_rank(a.tta) < tta_rank(b.tta);
    if (a.fill_holes != b.fill_holes) return !a.fill_holes;
    return !a.keep_largest && b.keep_largest;
}

namespace {

bool needs_distances(const std::string& objective) {
    return objective == "hd95" || objective == "assd";
}

PerImageMetrics eval_pair(const Tensor& mask, const Tensor& gt, bool with_distances) {
    const OverlapMetrics om = overlap_metrics(mask, gt);
    PerImageMetrics pm{om.acc, om.dice, om.jac, om.sen, om.spe, 0.0, 0.0};
    if (with_distances) {
        const BoundaryDistances bd = boundary_distance(mask, gt);
        pm.hd95 = bd.hd95;
        pm.assd = bd.assd;
    }
    return pm;
}

} // namespace

GridSearchResult grid_search(const std::vector<Tensor>& val_probs,
                             const std::vector<Tensor>& val_gts, const SearchSpace& space,
                             int workers) {
    space.validate();
    if (val_probs.empty() || val_probs.size() != val_gts.size()) {
        data_error("grid_search: need a nonempty matched validation set");
    }
    const bool dist = needs_distances(space.objective);

    // stage the (sigma, tta)-processed maps once; tau and the morphology
    // flags are cheap per-candidate work
    std::map<std::pair<float, TtaMode>, std::vector<Tensor>> staged;
    for (float sigma : space.sigmas) {
        for (TtaMode tta : space.tta_modes) {
            std::vector<Tensor> maps(val_probs.size());
            for (size_t i = 0; i < val_probs.size(); ++i) {
                Tensor averaged = tta_average(identity_prob_source(), val_probs[i], tta);
                maps[i] = sigma > 0.0f ? gaussian_blur(averaged, sigma) : std::move(averaged);
            }
            staged.emplace(std::make_pair(sigma, tta), std::move(maps));
        }
    }

    const std::vector<OperatingPoint> cands = space.candidates();
    std::vector<double> scores(cands.size(), 0.0);
    parallel_for(static_cast<std::int64_t>(cands.size()), workers, [&](std::int64_t ci) {
        const OperatingPoint& op = cands[static_cast<size_t>(ci)];
        const auto& maps = staged.at({op.sigma, op.tta});
        double acc = 0.0;
        for (size_t i = 0; i < maps.size(); ++i) {
            Tensor mask = threshold(maps[i], op.tau);
            if (op.fill_holes) mask = fill_holes(mask);
            if (op.keep_largest) mask = keep_largest(mask);
            acc += objective_value(eval_pair(mask, val_gts[i], dist), space.objective);
        }
        scores[static_cast<size_t>(ci)] = acc / static_cast<double>(maps.size());
    });

    GridSearchResult result;
    result.leaderboard.reserve(cands.size());
    bool have_best = false;
    for (size_t ci = 0; ci < cands.size(); ++ci) {
        result.leaderboard.push_back({cands[ci], scores[ci]});
        if (!have_best || scores[ci] > result.best_objective ||
            (scores[ci] == result.best_objective && cheaper_point(cands[ci], result.best))) {
            result.best = cands[ci];
            result.best_objective = scores[ci];
            have_best = true;
        }
    }
    return result;
}

MetricReport transfer_protocol(const OperatingPoint& source_best,
                               const std::vector<Tensor>& target_probs,
                               const std::vector<Tensor>& target_gts) {
    source_best.validate();
    if (target_probs.size() != target_gts.size() || target_probs.empty()) {
        data_error("transfer_protocol: need a nonempty matched target set");
    }
    std::vector<Tensor> masks(target_probs.size());
    for (size_t i = 0; i < target_probs.size(); ++i) {
        masks[i] = run_pipeline(identity_prob_source(), target_probs[i], source_best).final_mask;
    }
    MetricReport report = evaluate_masks(masks, target_gts);
    report.protocol_flag = "target-label-free";
    return report;
}

} // namespace relseg
