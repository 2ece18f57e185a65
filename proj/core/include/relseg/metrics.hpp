#pragma once

#include <optional>
#include <string>
#include <vector>

#include "relseg/tensor.hpp"

namespace relseg {

struct OverlapMetrics {
    double acc = 0.0, dice = 0.0, jac = 0.0, sen = 0.0, spe = 0.0;
};

/// Confusion-matrix overlap metrics. 0/0 ratios (both-empty cases) are
/// defined as 1; the convention is echoed in MetricReport::conventions.
OverlapMetrics overlap_metrics(const Tensor& pred, const Tensor& gt);

struct BoundaryDistances {
    double hd95 = 0.0, assd = 0.0;
};

/// Boundary pixels are foreground pixels 4-adjacent to background (the
/// image border counts as background). Directed distances are exact
/// Euclidean, via a two-pass squared distance transform. Empty-empty
/// pairs score 0; one-empty pairs score the image diagonal.
BoundaryDistances boundary_distance(const Tensor& pred, const Tensor& gt);

/// Exact squared Euclidean distance transform to the nearest seed pixel
/// (seed = value > 0.5). Exposed for the brute-force oracle tests.
std::vector<double> squared_edt(const Tensor& seeds);

struct CalibrationMetrics {
    double ece = 0.0, brier = 0.0, nll = 0.0;
    std::int64_t band_pixels = 0;
};

/// Probability calibration restricted to pixels within Chebyshev distance
/// band_radius of the ground-truth boundary. ECE uses equal-width bins.
CalibrationMetrics boundary_band_calibration(const Tensor& prob, const Tensor& gt,
                                             int band_radius = 5, int bins = 15);

struct BootstrapResult {
    double mean_diff = 0.0;
    double p_two_sided = 1.0;
};

/// Paired bootstrap over per-image metric pairs: resamples indices with
/// replacement, p = 2*min(count(diff<=0)+1, count(diff>=0)+1)/(R+1),
/// capped at 1. Deterministic under seed via counter-derived streams.
BootstrapResult paired_bootstrap(const std::vector<double>& metric_a,
                                 const std::vector<double>& metric_b, int resamples,
                                 std::uint64_t seed);

struct PerImageMetrics {
    double acc = 0.0, dice = 0.0, jac = 0.0, sen = 0.0, spe = 0.0;
    double hd95 = 0.0, assd = 0.0;
};

struct MetricReport {
    std::vector<PerImageMetrics> per_image;
    PerImageMetrics aggregate; // arithmetic mean of per_image
    std::optional<CalibrationMetrics> calibration; // mean over images with a band
    int calibration_images = 0;
    int n = 0;
    std::string conventions;
    std::string protocol_flag; // e.g. "target-label-free" for transfers
};

MetricReport evaluate_masks(const std::vector<Tensor>& preds, const std::vector<Tensor>& gts,
                            const std::vector<Tensor>* probs = nullptr, int band_radius = 5);

/// Unweighted mean across per-dataset aggregate vectors (equal lengths).
std::vector<double> macro_average(const std::vector<std::vector<double>>& per_dataset);

} // namespace relseg
