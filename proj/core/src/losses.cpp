#include "relseg/losses.hpp"

#include <algorithm>
#include <cmath>

namespace relseg {

namespace {
constexpr double kEps = 1e-8;
} // namespace

double bce_logits_elem(double z, double t) {
    // softplus(z) - t*z in the max/log1p form
    return std::max(z, 0.0) - t * z + std::log1p(std::exp(-std::fabs(z)));
}

ScalarWithGrad bce_logits(const Tensor& z, const Tensor& target, const Tensor* pixel_weights) {
    require_same_shape(z, target, "bce_logits");
    if (pixel_weights) require_same_shape(z, *pixel_weights, "bce_logits weights");
    const std::int64_t n = z.numel();
    ScalarWithGrad out;
    out.grad = Tensor(z.shape());
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double w = pixel_weights ? (*pixel_weights)[i] : 1.0;
        const double zi = z[i], ti = target[i];
        acc += w * bce_logits_elem(zi, ti);
        out.grad[i] = static_cast<float>(w * (sigmoid_d(zi) - ti) / n);
    }
    out.value = acc / n;
    return out;
}

DulPathResult dul_path_loss(const Tensor& z, const Tensor& p_label, const Tensor& sigma,
                            const Tensor* consistency) {
    require_same_shape(z, p_label, "dul_path_loss");
    require_same_shape(z, sigma, "dul_path_loss sigma");
    if (consistency) require_same_shape(z, *consistency, "dul_path_loss consistency");
    const std::int64_t n = z.numel();
    DulPathResult out;
    out.grad_z = Tensor(z.shape());
    out.grad_sigma = Tensor(z.shape());
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double a = consistency ? (*consistency)[i] : 1.0;
        const double zi = z[i], pi = p_label[i], si = sigma[i];
        const double inv_var = std::exp(-si);
        const double ell = bce_logits_elem(zi, pi);
        acc += a * ell * inv_var + 0.5 * si;
        out.grad_z[i] = static_cast<float>(a * (sigmoid_d(zi) - pi) * inv_var / n);
        out.grad_sigma[i] = static_cast<float>((-a * ell * inv_var + 0.5) / n);
    }
    out.value = acc / n;
    return out;
}

DulTotalResult dul_total(const std::vector<double>& path_losses,
                         const std::vector<Tensor>& sigmas) {
    if (path_losses.empty() || path_losses.size() != sigmas.size()) {
        data_error("dul_total: need K >= 1 matched path losses and sigma maps");
    }
    const size_t k = path_losses.size();
    DulTotalResult out;
    out.alphas.resize(k);
    std::vector<double> sp_means(k);
    for (size_t i = 0; i < k; ++i) {
        double m = 0.0;
        for (std::int64_t j = 0; j < sigmas[i].numel(); ++j) {
            const double sp = softplus_d(sigmas[i][j]);
            m += sp * sp;
        }
        m /= static_cast<double>(sigmas[i].numel());
        sp_means[i] = m;
        out.alphas[i] = 1.0 / (m + kEps);
    }
    double denom = kEps, numer = 0.0;
    for (size_t i = 0; i < k; ++i) {
        denom += out.alphas[i];
        numer += out.alphas[i] * path_losses[i];
    }
    out.value = numer / denom;

    out.grad_path_losses.resize(k);
    out.grad_sigmas.resize(k);
    for (size_t i = 0; i < k; ++i) {
        out.grad_path_losses[i] = out.alphas[i] / denom;
        const double dv_dalpha = (path_losses[i] - out.value) / denom;
        out.grad_sigmas[i] = Tensor(sigmas[i].shape());
        const double n_i = static_cast<double>(sigmas[i].numel());
        for (std::int64_t j = 0; j < sigmas[i].numel(); ++j) {
            const double sp = softplus_d(sigmas[i][j]);
            const double dmean = 2.0 * sp * sigmoid_d(sigmas[i][j]) / n_i;
            const double dalpha = -out.alphas[i] * out.alphas[i] * dmean;
            out.grad_sigmas[i][j] = static_cast<float>(dv_dalpha * dalpha);
        }
    }
    return out;
}

ScalarWithGrad tversky_loss(const Tensor& z, const Tensor& target, double a, double b) {
    require_same_shape(z, target, "tversky_loss");
    if (a <= 0.0 || b <= 0.0) data_error("tversky_loss: weights a,b must be > 0");
    constexpr double smooth = 0.5;
    const std::int64_t n = z.numel();
    std::vector<double> probs(static_cast<size_t>(n));
    double s_pt = 0.0, s_fp = 0.0, s_fn = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double p = sigmoid_d(z[i]);
        probs[static_cast<size_t>(i)] = p;
        const double t = target[i];
        s_pt += p * t;
        s_fp += p * (1.0 - t);
        s_fn += (1.0 - p) * t;
    }
    const double num = s_pt + smooth;
    const double den = s_pt + a * s_fp + b * s_fn + smooth;
    ScalarWithGrad out;
    out.value = 1.0 - num / den;
    out.grad = Tensor(z.shape());
    for (std::int64_t i = 0; i < n; ++i) {
        const double p = probs[static_cast<size_t>(i)];
        const double t = target[i];
        const double dden_dp = t + a * (1.0 - t) - b * t;
        const double dti_dp = (t * den - num * dden_dp) / (den * den);
        out.grad[i] = static_cast<float>(-dti_dp * p * (1.0 - p));
    }
    return out;
}

ScalarWithGrad dice_loss(const Tensor& z, const Tensor& target) {
    // dice with smoothing 1.0 == tversky(a=b=0.5) with smoothing 0.5
    return tversky_loss(z, target, 0.5, 0.5);
}

ScalarWithGrad boundary_l1(const Tensor& pred_boundary, const Tensor& target_boundary) {
    require_same_shape(pred_boundary, target_boundary, "boundary_l1");
    const std::int64_t n = pred_boundary.numel();
    ScalarWithGrad out;
    out.grad = Tensor(pred_boundary.shape());
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(pred_boundary[i]) - target_boundary[i];
        acc += std::fabs(d);
        out.grad[i] = static_cast<float>((d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) / n);
    }
    out.value = acc / n;
    return out;
}

ScalarWithGrad distill_loss(const Tensor& z, const Tensor& teacher_prob) {
    return bce_logits(z, teacher_prob, nullptr);
}

double distill_weight(int t, int t_rampup, double w_max) {
    if (t < 0) data_error("distill_weight: step must be >= 0");
    if (t_rampup < 1) data_error("distill_weight: ramp-up length must be >= 1");
    const double r = std::min(1.0, static_cast<double>(t + 1) / t_rampup);
    return w_max * std::exp(-5.0 * (1.0 - r) * (1.0 - r));
}

LossBreakdown total_loss(const LossTerms& terms, const StageWeights& weights,
                         double resolved_distill_weight) {
    for (float w : {weights.consensus, weights.boundary, weights.boundary_head,
                    weights.uncertainty, weights.aux, weights.detail, weights.distill_max,
                    weights.rabc_bnd, weights.rabc_far, weights.rabc_sp}) {
        if (w < 0.0f) config_error("total_loss: negative stage weight");
    }
    if (resolved_distill_weight < 0.0) config_error("total_loss: negative distill weight");

    LossBreakdown b;
    b.terms = terms;
    b.weights = weights;
    b.distill_weight = resolved_distill_weight;
    b.total = terms.dul +
              weights.consensus * terms.consensus +
              weights.boundary * terms.boundary_l1 +
              weights.boundary_head * terms.boundary_head +
              weights.uncertainty * terms.uncertainty_head +
              weights.aux * terms.aux +
              weights.detail * terms.detail +
              resolved_distill_weight * terms.distill +
              weights.rabc_bnd * terms.rabc_bnd +
              weights.rabc_far * terms.rabc_far +
              weights.rabc_sp * terms.rabc_sp;
    return b;
}

TrainableMaskReport apply_trainable_mask(std::vector<std::pair<std::string, Tensor>>& grads,
                                         const std::vector<std::string>& trainable_names) {
    for (const auto& name : trainable_names) {
        bool known = false;
        for (const auto& [gname, g] : grads) {
            if (gname == name) {
                known = true;
                break;
            }
        }
        if (!known) config_error("apply_trainable_mask: unknown parameter name '" + name + "'");
    }
    TrainableMaskReport report;
    for (auto& [name, g] : grads) {
        report.total_params += g.numel();
        const bool trainable =
            std::find(trainable_names.begin(), trainable_names.end(), name) != trainable_names.end();
        if (trainable) {
            report.trainable_params += g.numel();
        } else {
            std::fill(g.vec().begin(), g.vec().end(), 0.0f);
        }
    }
    return report;
}

} // namespace relseg
