#pragma once

#include <functional>
#include <string>
#include <vector>

#include "relseg/tensor.hpp"

namespace relseg {

enum class TtaMode { None, Flip2, Flip4 };

std::string tta_mode_name(TtaMode mode);
TtaMode tta_mode_from_name(const std::string& name);

/// Deployment tuple: threshold, reference smoothing, flip TTA and the two
/// morphology flags. Selected on validation data only.
struct OperatingPoint {
    float tau = 0.30f;
    float sigma = 0.0f;
    TtaMode tta = TtaMode::None;
    bool fill_holes = false;
    bool keep_largest = false;

    int enabled_flag_count() const { return (fill_holes ? 1 : 0) + (keep_largest ? 1 : 0); }
    void validate() const;
};

/// Fixed label-free control protocol: tau=0.30, no TTA, no morphology.
OperatingPoint raw_p0();

using ProbFn = std::function<Tensor(const Tensor&)>;

/// Forward every flip view through prob_fn, inverse-flip the outputs and
/// average them (in double). View order is fixed: id, h, v, hv.
Tensor tta_average(const ProbFn& prob_fn, const Tensor& image, TtaMode mode);

/// Strict comparison per the deployment indicator: mask = 1[prob > tau].
Tensor threshold(const Tensor& prob, float tau);

/// Fills background regions not reachable from the border (4-connected
/// background flood fill).
Tensor fill_holes(const Tensor& mask);

/// Keeps the largest 8-connected foreground component; ties resolve to the
/// component seen first in row-major order. Empty masks pass through.
Tensor keep_largest(const Tensor& mask);

/// Binary dilation with a 3x3 square element, n iterations. Only used by
/// the dilation control arm of the comparison pipeline.
Tensor dilate_mask(const Tensor& mask, int iterations);

struct PipelineTrace {
    Tensor averaged;      // after TTA
    Tensor smoothed;      // after optional blur (== averaged when sigma == 0)
    Tensor thresholded;   // binary
    Tensor after_fill;    // == thresholded when fill_holes is off
    Tensor final_mask;
};

/// TTA -> optional Gaussian smoothing -> threshold -> optional fill_holes
/// -> optional keep_largest, recording every stage.
PipelineTrace run_pipeline(const ProbFn& prob_source, const Tensor& image,
                           const OperatingPoint& op);

/// Pipeline over an already-averaged probability map (no TTA source).
PipelineTrace run_pipeline_on_prob(const Tensor& prob, const OperatingPoint& op);

/// Wraps a precomputed probability map as a pixelwise prob source, so flip
/// TTA distributes over it exactly.
ProbFn identity_prob_source();

} // namespace relseg
