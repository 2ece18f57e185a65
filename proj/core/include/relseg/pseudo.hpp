#pragma once

#include <vector>

#include "relseg/tensor.hpp"

namespace relseg {

/// K binary pseudo-label maps plus the per-pixel consensus and
/// entropy-based consistency maps derived from them.
struct PseudoStack {
    std::vector<Tensor> labels; // K maps [H,W], values exactly 0 or 1
    Tensor consensus;           // mean vote, exact multiples of 1/K
    Tensor consistency;         // 1 - normalized binary entropy of consensus
    int k() const { return static_cast<int>(labels.size()); }
};

struct KMeansResult {
    Tensor assign;                        // [H,W] cluster ids as 0/1 floats
    std::vector<std::vector<float>> centroids; // 2 x C
    int iterations = 0;
};

/// Lloyd's algorithm on per-pixel C-vectors, k=2, k-means++ init from seed,
/// at most 100 iterations or until the centroid shift drops below 1e-4.
/// Cluster ids carry no lesion semantics; see lesion_cluster_select.
KMeansResult kmeans2_binarize(const Tensor& features, std::uint64_t seed);

struct ClusterSelectConfig {
    float w_darkness = 0.5f;
    float w_centrality = 0.3f;
    float w_area = 0.2f;
    float area_lo = 0.02f;
    float area_hi = 0.80f;
};

/// Scores the two clusters of `assign` with brightness, centrality and
/// area-band cues and returns the map with the winning (lesion) cluster
/// as 1. Ties go to the darker cluster.
Tensor lesion_cluster_select(const Tensor& assign, const Tensor& image_gray,
                             const ClusterSelectConfig& cfg = {});

/// 256-bin Otsu threshold on the min-max rescaled map; foreground is
/// strictly above the selected threshold, ties pick the lowest threshold.
Tensor otsu_binarize(const Tensor& heat);

/// Index (0..255) of the selected Otsu bin threshold; exposed for audit.
int otsu_threshold_bin(const Tensor& heat);

/// Morphological opening then closing with a 3x3 square structuring
/// element, one iteration each.
Tensor morph_refine(const Tensor& mask);

Tensor binary_erode3x3(const Tensor& mask);
Tensor binary_dilate3x3(const Tensor& mask);

/// Consensus = mean vote; consistency = 1 - binary entropy of consensus
/// normalized by ln 2, with eps = 1e-8 inside the logs.
PseudoStack build_stack(std::vector<Tensor> labels);

/// Scalar consistency transform used by build_stack.
double consistency_from_consensus(double pc);

} // namespace relseg
