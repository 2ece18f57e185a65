#pragma once

#include <string>
#include <utility>
#include <vector>

#include "relseg/bundle.hpp"
#include "relseg/tensor.hpp"

namespace relseg {

struct RabcConfig {
    int c_dec = 128;          // decoder feature channels
    int hidden = 64;          // context-head hidden width
    float lambda_b = 2.0f;    // boundary weight scale in the bnd loss
    float far_margin = 0.02f; // m in the far-background loss
    int band_k = 5;           // maxpool window for the boundary band
};

/// Weights of the boundary-calibration head: a 1x1 -> 3x3 -> 1x1 context
/// stack producing alpha / delta-tau / s maps, a 1x1 residual conv on
/// decoder features, and a nonnegative background-preservation scale
/// beta = softplus(beta_raw).
struct RabcParams {
    Tensor head1_w, head1_b; // [hidden, c_dec+3, 1, 1], [hidden]
    Tensor head2_w, head2_b; // [hidden, hidden, 3, 3], [hidden]
    Tensor head3_w, head3_b; // [3, hidden, 1, 1], [3]
    Tensor residual_w, residual_b; // [1, c_dec, 1, 1], [1]
    Tensor beta_raw;               // [1]

    int c_dec() const { return head1_w.extent(1) - 3; }
    int hidden() const { return head1_w.extent(0); }

    std::int64_t parameter_count() const;

    /// Stable name -> tensor view used for gradient masking and bundles.
    std::vector<std::pair<std::string, Tensor>> named_tensors() const;
    static RabcParams from_named(const std::vector<std::pair<std::string, Tensor>>& named);

    WeightBundle to_bundle() const;
    static RabcParams from_bundle(const WeightBundle& bundle);

    static RabcParams zeros(const RabcConfig& cfg);
    static RabcParams random_init(const RabcConfig& cfg, std::uint64_t seed);
};

/// Reference budget for the full-scale configuration; the closest
/// reproducible 1x1 -> 3x3(hidden 64) -> 1x1 layout lands 138 parameters
/// short, which the audit line reports rather than hiding.
constexpr std::int64_t kRabcReferenceParamCount = 45839;

struct ParamBudgetAudit {
    std::int64_t count = 0;
    std::int64_t reference = kRabcReferenceParamCount;
    std::int64_t gap = 0;
    double gap_percent = 0.0;
    std::string line; // human-readable audit line
};
ParamBudgetAudit audit_param_budget(const RabcParams& params);

/// Inputs to calibration: logits z, boundary confidence b, uncertainty u,
/// decoder features phi; p = sigmoid(z) is derived once at construction.
struct RabcCues {
    Tensor z;   // [H,W]
    Tensor p;   // sigmoid(z)
    Tensor b;   // [H,W], in (0,1)
    Tensor u;   // [H,W], in (0,1)
    Tensor phi; // [c_dec,H,W]

    static RabcCues make(Tensor z, Tensor b, Tensor u, Tensor phi);
};

/// c = b * (0.35 + 0.65 u) * (1 - p); zero wherever the model is already
/// confidently foreground, maximal on uncertain boundary candidates.
Tensor candidate_map(const RabcCues& cues);

/// 3x3 box average with replicate padding (the local logit mixer).
Tensor mixer3x3(const Tensor& z);

/// Forward pass outputs plus double-precision caches consumed by
/// rabc_losses / rabc_backward.
struct RabcForward {
    Tensor z_hat, delta_z;            // [H,W]
    Tensor alpha, delta_tau, s_gate;  // [H,W]
    Tensor candidate;                 // c, [H,W]
    double beta = 0.0;

    // f64 caches (internal layouts, channel-major where multi-channel)
    std::vector<double> x, h1, a1, h2, a2, h3;
    std::vector<double> alpha_d, dtau_d, s_d, res_d, c_d, k1_d, k2_d, dz_d, zhat_d, z_d;
    int height = 0, width = 0;
};

RabcForward rabc_apply(const RabcCues& cues, const RabcParams& params);

struct RabcLossValues {
    double bnd = 0.0;
    double far = 0.0;
    double sp = 0.0;
};

/// Boundary-consistency, far-background-preservation and sparsity losses.
/// The consensus map, its Sobel magnitude and the maxpooled band are
/// constants with respect to the calibration parameters.
RabcLossValues rabc_losses(const RabcForward& fwd, const RabcCues& cues, const Tensor& p_c,
                           const RabcConfig& cfg);

/// Gradient of (w_bnd*L_bnd + w_far*L_far + w_sp*L_sp) with respect to
/// every tensor in RabcParams. Pass unit weight for a single loss to
/// gradcheck it in isolation.
RabcParams rabc_losses_backward(const RabcForward& fwd, const RabcCues& cues, const Tensor& p_c,
                                const RabcConfig& cfg, const RabcParams& params,
                                double w_bnd, double w_far, double w_sp);

/// Uncertainty-gated refinement head used by the decoder boundary branch:
/// g = sigmoid(conv1x1([phi_s; b; u])), z_hat = z + R(phi_s * g) with
/// R = conv3x3 -> relu -> conv1x1.
struct BoundaryGateParams {
    Tensor gate_w, gate_b; // [1, c_s+2, 1, 1], [1]
    Tensor r1_w, r1_b;     // [hidden, c_s, 3, 3], [hidden]
    Tensor r2_w, r2_b;     // [1, hidden, 1, 1], [1]
};
Tensor boundary_gate(const Tensor& z, const Tensor& phi_s, const Tensor& b, const Tensor& u,
                     const BoundaryGateParams& params);

struct AdaptItem {
    RabcCues cues;
    Tensor p_c;
};

struct AdaptResult {
    RabcParams params;
    std::vector<double> trace;    // weighted RABC loss per step (pre-update)
    std::vector<double> smoothed; // 10-step moving average of trace
    bool smoothed_decreased = false; // smoothed.back() < smoothed.front()
    double monotone_fraction = 0.0;  // consecutive strictly-decreasing pairs
    bool diverged = false;
    int diverged_step = -1;
    double trainable_fraction = 0.0;
};

/// Plain gradient descent on the weighted (0.04/0.02/0.01) calibration
/// losses, cycling through the batch one item per step, with gradients
/// masked to the trainable name set.
AdaptResult adapt_demo(const std::vector<AdaptItem>& batch, RabcParams params, int steps,
                       double lr, const std::vector<std::string>& trainable,
                       const RabcConfig& cfg);

} // namespace relseg
