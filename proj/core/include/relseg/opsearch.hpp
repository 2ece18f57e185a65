#pragma once

#include <string>
#include <vector>

#include "relseg/inference.hpp"
#include "relseg/metrics.hpp"

namespace relseg {

/// Candidate grids for the validation operating-point search. The tau grid
/// step is 0.01 so every deployment threshold of interest lies on it.
struct SearchSpace {
    std::vector<float> taus;
    std::vector<float> sigmas = {0.0f, 0.5f, 1.0f, 1.5f};
    std::vector<TtaMode> tta_modes = {TtaMode::None, TtaMode::Flip2, TtaMode::Flip4};
    std::vector<bool> fill_holes_options = {false, true};
    std::vector<bool> keep_largest_options = {false, true};
    std::string objective = "jac";

    static SearchSpace defaults();
    void validate() const;
    std::vector<OperatingPoint> candidates() const;
};

struct LeaderboardRow {
    OperatingPoint op;
    double objective = 0.0;
};

struct GridSearchResult {
    OperatingPoint best;
    double best_objective = 0.0;
    std::vector<LeaderboardRow> leaderboard; // full table, candidate order
};

/// Mean per-image value of the named objective for one mask/gt evaluation.
double objective_value(const PerImageMetrics& m, const std::string& objective);

/// Exhaustive evaluation over the candidate cross-product on the supplied
/// validation arrays. Ties prefer the cheaper point: smaller sigma, fewer
/// morphology flags, smaller tau, then lighter TTA.
GridSearchResult grid_search(const std::vector<Tensor>& val_probs,
                             const std::vector<Tensor>& val_gts, const SearchSpace& space,
                             int workers = 1);

/// Total candidate order used for tie-breaking; exposed for the
/// permutation-invariance tests.
bool cheaper_point(const OperatingPoint& a, const OperatingPoint& b);

/// Evaluates a fixed operating point on a target set with zero target
/// tuning; the report carries the "target-label-free" protocol flag.
MetricReport transfer_protocol(const OperatingPoint& source_best,
                               const std::vector<Tensor>& target_probs,
                               const std::vector<Tensor>& target_gts);

} // namespace relseg
