#pragma once

#include <vector>

#include "relseg/bundle.hpp"
#include "relseg/tensor.hpp"

namespace relseg {

/// Projection weights for one cross-attention stage plus a 3x3 sigma head.
/// Projections are bias-free; d_att defaults to the input channel count.
struct AttentionParams {
    Tensor w_q; // [d_att, d_in]
    Tensor w_k; // [d_att, d_in]
    Tensor w_v; // [d_att, d_in]
    Tensor sigma_w; // [1, d_att, 3, 3]
    std::vector<float> sigma_b = {0.0f};

    int d_in() const { return w_q.extent(1); }
    int d_att() const { return w_q.extent(0); }

    static AttentionParams identity(int channels);
    static AttentionParams random(int d_in, int d_att, std::uint64_t seed);

    WeightBundle to_bundle() const;
    static AttentionParams from_bundle(const WeightBundle& bundle);
};

/// Image-to-pseudo cross-attention: queries from image features, keys and
/// values from pseudo-label features, softmax over key positions at full
/// spatial resolution, single head. Output is [d_att,H,W].
Tensor ipc_forward(const Tensor& img_feat, const Tensor& pl_feat,
                   const AttentionParams& params);

/// Pseudo-to-pseudo interaction: path i queries against the concatenated
/// key/value positions of all other paths. Requires K >= 2 equal shapes.
std::vector<Tensor> pia_forward(const std::vector<Tensor>& pl_feats,
                                const AttentionParams& params);

/// Per-path log-variance head: one 3x3 zero-padded convolution to a single
/// channel, raw output (no squashing).
Tensor sigma_head(const Tensor& fused, const Tensor& head_w, float head_b);

} // namespace relseg
