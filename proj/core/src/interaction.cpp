#include "relseg/interaction.hpp"

#include <cmath>
#include <random>

namespace relseg {

namespace {

// [d_att,H*W] projection of a [C,H,W] map: out[d][px] = sum_c w[d][c] * feat[c][px]
std::vector<double> project(const Tensor& feat, const Tensor& w) {
    const int c = feat.extent(0);
    const std::int64_t hw = feat.numel() / c;
    const int d_att = w.extent(0);
    std::vector<double> out(static_cast<size_t>(d_att) * hw, 0.0);
    for (int d = 0; d < d_att; ++d) {
        for (int ch = 0; ch < c; ++ch) {
            const double wv = w.at(d, ch);
            const float* src = feat.data() + static_cast<std::int64_t>(ch) * hw;
            double* dst = out.data() + static_cast<std::int64_t>(d) * hw;
            for (std::int64_t px = 0; px < hw; ++px) dst[px] += wv * src[px];
        }
    }
    return out;
}

// softmax(QK^T/sqrt(d)) V over `nk` key positions for `nq` query positions
Tensor attend(const std::vector<double>& q, std::int64_t nq,
              const std::vector<double>& k, const std::vector<double>& v, std::int64_t nk,
              int d_att, int out_h, int out_w) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_att));
    Tensor out({d_att, out_h, out_w});
    std::vector<double> logits(static_cast<size_t>(nk));
    std::vector<double> acc(static_cast<size_t>(d_att));
    for (std::int64_t qi = 0; qi < nq; ++qi) {
        double max_logit = -1e300;
        for (std::int64_t ki = 0; ki < nk; ++ki) {
            double dot = 0.0;
            for (int d = 0; d < d_att; ++d) {
                dot += q[static_cast<size_t>(d) * nq + qi] * k[static_cast<size_t>(d) * nk + ki];
            }
            logits[static_cast<size_t>(ki)] = dot * scale;
            max_logit = std::max(max_logit, logits[static_cast<size_t>(ki)]);
        }
        double denom = 0.0;
        for (std::int64_t ki = 0; ki < nk; ++ki) {
            logits[static_cast<size_t>(ki)] = std::exp(logits[static_cast<size_t>(ki)] - max_logit);
            denom += logits[static_cast<size_t>(ki)];
        }
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::int64_t ki = 0; ki < nk; ++ki) {
            const double a = logits[static_cast<size_t>(ki)] / denom;
            for (int d = 0; d < d_att; ++d) {
                acc[static_cast<size_t>(d)] += a * v[static_cast<size_t>(d) * nk + ki];
            }
        }
        for (int d = 0; d < d_att; ++d) {
            out[static_cast<std::int64_t>(d) * nq + qi] = static_cast<float>(acc[static_cast<size_t>(d)]);
        }
    }
    debug_check_finite(out, "attention");
    return out;
}

} // namespace

AttentionParams AttentionParams::identity(int channels) {
    AttentionParams p;
    p.w_q = Tensor({channels, channels});
    p.w_k = Tensor({channels, channels});
    p.w_v = Tensor({channels, channels});
    for (int i = 0; i < channels; ++i) {
        p.w_q.at(i, i) = 1.0f;
        p.w_k.at(i, i) = 1.0f;
        p.w_v.at(i, i) = 1.0f;
    }
    p.sigma_w = Tensor({1, channels, 3, 3});
    return p;
}

AttentionParams AttentionParams::random(int d_in, int d_att, std::uint64_t seed) {
    std::mt19937 rng(static_cast<std::uint32_t>(seed));
    auto uniform = [&rng](float lo, float hi) {
        return lo + (hi - lo) * static_cast<float>(rng() / 4294967296.0);
    };
    AttentionParams p;
    const float s = 1.0f / std::sqrt(static_cast<float>(d_in));
    for (Tensor* t : {&p.w_q, &p.w_k, &p.w_v}) {
        *t = Tensor({d_att, d_in});
        for (std::int64_t i = 0; i < t->numel(); ++i) (*t)[i] = uniform(-s, s);
    }
    p.sigma_w = Tensor({1, d_att, 3, 3});
    for (std::int64_t i = 0; i < p.sigma_w.numel(); ++i) p.sigma_w[i] = uniform(-s, s);
    return p;
}

WeightBundle AttentionParams::to_bundle() const {
    WeightBundle b;
    b.put("w_q", w_q);
    b.put("w_k", w_k);
    b.put("w_v", w_v);
    b.put("sigma_w", sigma_w);
    b.put("sigma_b", Tensor({1}, {sigma_b[0]}));
    return b;
}

AttentionParams AttentionParams::from_bundle(const WeightBundle& bundle) {
    AttentionParams p;
    p.w_q = bundle.get("w_q");
    p.w_k = bundle.get("w_k");
    p.w_v = bundle.get("w_v");
    p.sigma_w = bundle.get("sigma_w");
    p.sigma_b = {bundle.get("sigma_b")[0]};
    return p;
}

Tensor ipc_forward(const Tensor& img_feat, const Tensor& pl_feat,
                   const AttentionParams& params) {
    if (img_feat.ndim() != 3 || pl_feat.ndim() != 3) {
        data_error("ipc_forward: features must be [C,H,W]");
    }
    if (img_feat.extent(1) != pl_feat.extent(1) || img_feat.extent(2) != pl_feat.extent(2)) {
        data_error("ipc_forward: spatial dims differ, " + img_feat.shape_str() + " vs " +
                   pl_feat.shape_str());
    }
    if (img_feat.extent(0) != params.d_in() || pl_feat.extent(0) != params.d_in()) {
        data_error("ipc_forward: channel count " + std::to_string(img_feat.extent(0)) +
                   " does not match projection d_in " + std::to_string(params.d_in()));
    }
    const int h = img_feat.extent(1), w = img_feat.extent(2);
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    const auto q = project(img_feat, params.w_q);
    const auto k = project(pl_feat, params.w_k);
    const auto v = project(pl_feat, params.w_v);
    return attend(q, hw, k, v, hw, params.d_att(), h, w);
}

std::vector<Tensor> pia_forward(const std::vector<Tensor>& pl_feats,
                                const AttentionParams& params) {
    if (pl_feats.size() < 2) data_error("pia_forward: need K >= 2 paths");
    for (size_t i = 1; i < pl_feats.size(); ++i) {
        require_same_shape(pl_feats[0], pl_feats[i], "pia_forward");
    }
    const int c = pl_feats[0].extent(0);
    if (c != params.d_in()) {
        data_error("pia_forward: channel count does not match projection d_in");
    }
    const int h = pl_feats[0].extent(1), w = pl_feats[0].extent(2);
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    const int kpaths = static_cast<int>(pl_feats.size());
    const int d_att = params.d_att();

    std::vector<std::vector<double>> qs(pl_feats.size()), ks(pl_feats.size()), vs(pl_feats.size());
    for (size_t i = 0; i < pl_feats.size(); ++i) {
        qs[i] = project(pl_feats[i], params.w_q);
        ks[i] = project(pl_feats[i], params.w_k);
        vs[i] = project(pl_feats[i], params.w_v);
    }

    std::vector<Tensor> out;
    out.reserve(pl_feats.size());
    for (int i = 0; i < kpaths; ++i) {
        // keys/values: concatenation of all other paths' positions, in path order
        const std::int64_t nk = hw * (kpaths - 1);
        std::vector<double> kc(static_cast<size_t>(d_att) * nk), vc(static_cast<size_t>(d_att) * nk);
        std::int64_t off = 0;
        for (int j = 0; j < kpaths; ++j) {
            if (j == i) continue;
            for (int d = 0; d < d_att; ++d) {
                std::copy_n(ks[static_cast<size_t>(j)].begin() + static_cast<std::int64_t>(d) * hw, hw,
                            kc.begin() + static_cast<std::int64_t>(d) * nk + off);
                std::copy_n(vs[static_cast<size_t>(j)].begin() + static_cast<std::int64_t>(d) * hw, hw,
                            vc.begin() + static_cast<std::int64_t>(d) * nk + off);
            }
            off += hw;
        }
        out.push_back(attend(qs[static_cast<size_t>(i)], hw, kc, vc, nk, d_att, h, w));
    }
    return out;
}

Tensor sigma_head(const Tensor& fused, const Tensor& head_w, float head_b) {
    if (head_w.ndim() != 4 || head_w.extent(0) != 1 || head_w.extent(2) != 3 ||
        head_w.extent(3) != 3) {
        data_error("sigma_head: weights must be [1,C,3,3], got " + head_w.shape_str());
    }
    Tensor conv = conv2d(fused, head_w, {head_b}, Padding::Same);
    return Tensor({conv.extent(1), conv.extent(2)}, std::move(conv.vec()));
}

} // namespace relseg
