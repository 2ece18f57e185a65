#pragma once

#include <string>
#include <utility>
#include <vector>

#include "relseg/tensor.hpp"

namespace relseg {

/// Per-term weights for the combined training objective. The two stage
/// presets carry the source-training and target-adaptation coefficient
/// vectors; the main uncertainty-weighted term always has weight 1.
struct StageWeights {
    float consensus = 0.0f;
    float boundary = 0.0f;
    float boundary_head = 0.0f;
    float uncertainty = 0.0f;
    float aux = 0.0f;
    float detail = 0.0f;
    float distill_max = 0.8f;
    float rabc_bnd = 0.04f;
    float rabc_far = 0.02f;
    float rabc_sp = 0.01f;

    static StageWeights stage1() {
        StageWeights w;
        w.consensus = 0.15f;
        w.boundary = 0.03f;
        w.boundary_head = 0.15f;
        w.uncertainty = 0.08f;
        w.aux = 0.05f;
        w.detail = 0.08f;
        return w;
    }
    static StageWeights stage2() {
        StageWeights w;
        w.consensus = 0.10f;
        w.boundary = 0.02f;
        w.boundary_head = 0.10f;
        w.uncertainty = 0.05f;
        w.aux = 0.03f;
        w.detail = 0.05f;
        return w;
    }
};

struct LossTerms {
    double dul = 0.0;
    double consensus = 0.0;
    double boundary_l1 = 0.0;
    double boundary_head = 0.0;
    double uncertainty_head = 0.0;
    double aux = 0.0;
    double detail = 0.0;
    double distill = 0.0;
    double rabc_bnd = 0.0;
    double rabc_far = 0.0;
    double rabc_sp = 0.0;
};

/// Itemized weighted objective; total == sum of weight*term.
struct LossBreakdown {
    LossTerms terms;
    StageWeights weights;
    double distill_weight = 0.0; // resolved ramp value applied to terms.distill
    double total = 0.0;
};

struct ScalarWithGrad {
    double value = 0.0;
    Tensor grad; // d value / d first-tensor-argument
};

/// Numerically stable binary cross-entropy on logits:
/// mean of w * (softplus(z) - t*z); gradient w * (sigmoid(z) - t) / N.
ScalarWithGrad bce_logits(const Tensor& z, const Tensor& target,
                          const Tensor* pixel_weights = nullptr);

/// Elementwise stable BCE-with-logits, no reduction.
double bce_logits_elem(double z, double t);

struct DulPathResult {
    double value = 0.0;
    Tensor grad_z;
    Tensor grad_sigma;
};

/// Per-path uncertainty-attenuated loss:
/// mean of [ A * bce(z,P) * exp(-sigma) + 0.5 * sigma ].
/// The 0.5*sigma term can push the value negative; that is preserved.
DulPathResult dul_path_loss(const Tensor& z, const Tensor& p_label, const Tensor& sigma,
                            const Tensor* consistency = nullptr);

struct DulTotalResult {
    double value = 0.0;
    std::vector<double> alphas;            // inverse-variance path weights
    std::vector<double> grad_path_losses;  // d value / d L_i
    std::vector<Tensor> grad_sigmas;       // d value / d sigma_i (through alpha_i)
};

/// alpha_i = 1 / (mean(softplus(sigma_i)^2) + eps), value = sum(alpha_i L_i) / (sum alpha + eps).
DulTotalResult dul_total(const std::vector<double>& path_losses,
                         const std::vector<Tensor>& sigmas);

/// Soft Dice loss on sigmoid(z) with smoothing 1.0.
ScalarWithGrad dice_loss(const Tensor& z, const Tensor& target);

/// Tversky loss with FP weight a, FN weight b, smoothing 0.5.
/// tversky_loss(z,t,0.5,0.5) coincides exactly with dice_loss(z,t).
ScalarWithGrad tversky_loss(const Tensor& z, const Tensor& target, double a, double b);

/// Mean absolute difference; gradient is the sign map / N (0 at kinks).
ScalarWithGrad boundary_l1(const Tensor& pred_boundary, const Tensor& target_boundary);

/// BCE of student logits against frozen teacher probabilities.
ScalarWithGrad distill_loss(const Tensor& z, const Tensor& teacher_prob);

/// Gaussian ramp-up: w_max * exp(-5 (1-r)^2), r = min(1, (t+1)/T).
double distill_weight(int t, int t_rampup, double w_max);

LossBreakdown total_loss(const LossTerms& terms, const StageWeights& weights,
                         double resolved_distill_weight);

struct TrainableMaskReport {
    std::int64_t total_params = 0;
    std::int64_t trainable_params = 0;
    double fraction() const {
        return total_params > 0 ? static_cast<double>(trainable_params) / total_params : 0.0;
    }
};

/// Zeroes every gradient tensor whose name is not in the trainable set;
/// unknown names in the set are rejected.
TrainableMaskReport apply_trainable_mask(std::vector<std::pair<std::string, Tensor>>& grads,
                                         const std::vector<std::string>& trainable_names);

} // namespace relseg
