#include "relseg/rabc.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "relseg/losses.hpp"

namespace relseg {

namespace {

constexpr double kEps = 1e-8;
// weighted-objective triple used by the adaptation demo
constexpr double kWBnd = 0.04, kWFar = 0.02, kWSp = 0.01;
// beta_raw with softplus(beta_raw) == 0.5
constexpr float kBetaRawInit = -0.43275213f;

// ---- double-precision conv helpers on channel-major planes ----

std::vector<double> conv1x1_fwd(const std::vector<double>& in, int c_in, std::int64_t hw,
                                const Tensor& wt, const Tensor& bias) {
    const int c_out = wt.extent(0);
    std::vector<double> out(static_cast<size_t>(c_out) * hw);
    for (int o = 0; o < c_out; ++o) {
        double* op = out.data() + static_cast<std::int64_t>(o) * hw;
        const double b = bias[o];
        for (std::int64_t i = 0; i < hw; ++i) op[i] = b;
        for (int c = 0; c < c_in; ++c) {
            const double wv = wt.at(o, c, 0, 0);
            if (wv == 0.0) continue;
            const double* ip = in.data() + static_cast<std::int64_t>(c) * hw;
            for (std::int64_t i = 0; i < hw; ++i) op[i] += wv * ip[i];
        }
    }
    return out;
}

std::vector<double> conv3x3_fwd(const std::vector<double>& in, int c_in, int h, int w,
                                const Tensor& wt, const Tensor& bias) {
    const int c_out = wt.extent(0);
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    std::vector<double> out(static_cast<size_t>(c_out) * hw);
    for (int o = 0; o < c_out; ++o) {
        double* op = out.data() + static_cast<std::int64_t>(o) * hw;
        const double b = bias[o];
        for (std::int64_t i = 0; i < hw; ++i) op[i] = b;
        for (int c = 0; c < c_in; ++c) {
            const double* ip = in.data() + static_cast<std::int64_t>(c) * hw;
            for (int p = 0; p < 3; ++p) {
                const int dy = p - 1;
                for (int q = 0; q < 3; ++q) {
                    const int dx = q - 1;
                    const double wv = wt.at(o, c, p, q);
                    if (wv == 0.0) continue;
                    const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
                    const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                    for (int y = y0; y < y1; ++y) {
                        const double* irow = ip + static_cast<std::int64_t>(y + dy) * w + dx;
                        double* orow = op + static_cast<std::int64_t>(y) * w;
                        for (int x = x0; x < x1; ++x) orow[x] += wv * irow[x];
                    }
                }
            }
        }
    }
    return out;
}

void conv1x1_bwd(const std::vector<double>& in, int c_in, std::int64_t hw, const Tensor& wt,
                 const std::vector<double>& gout, std::vector<double>* gin, Tensor* gw,
                 Tensor* gb) {
    const int c_out = wt.extent(0);
    for (int o = 0; o < c_out; ++o) {
        const double* gp = gout.data() + static_cast<std::int64_t>(o) * hw;
        if (gb) {
            double acc = 0.0;
            for (std::int64_t i = 0; i < hw; ++i) acc += gp[i];
            (*gb)[o] += static_cast<float>(acc);
        }
        for (int c = 0; c < c_in; ++c) {
            const double* ip = in.data() + static_cast<std::int64_t>(c) * hw;
            if (gw) {
                double acc = 0.0;
                for (std::int64_t i = 0; i < hw; ++i) acc += gp[i] * ip[i];
                gw->at(o, c, 0, 0) += static_cast<float>(acc);
            }
            if (gin) {
                const double wv = wt.at(o, c, 0, 0);
                double* gi = gin->data() + static_cast<std::int64_t>(c) * hw;
                for (std::int64_t i = 0; i < hw; ++i) gi[i] += wv * gp[i];
            }
        }
    }
}

void conv3x3_bwd(const std::vector<double>& in, int c_in, int h, int w, const Tensor& wt,
                 const std::vector<double>& gout, std::vector<double>* gin, Tensor* gw,
                 Tensor* gb) {
    const int c_out = wt.extent(0);
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    for (int o = 0; o < c_out; ++o) {
        const double* gp = gout.data() + static_cast<std::int64_t>(o) * hw;
        if (gb) {
            double acc = 0.0;
            for (std::int64_t i = 0; i < hw; ++i) acc += gp[i];
            (*gb)[o] += static_cast<float>(acc);
        }
        for (int c = 0; c < c_in; ++c) {
            const double* ip = in.data() + static_cast<std::int64_t>(c) * hw;
            double* gi = gin ? gin->data() + static_cast<std::int64_t>(c) * hw : nullptr;
            for (int p = 0; p < 3; ++p) {
                const int dy = p - 1;
                for (int q = 0; q < 3; ++q) {
                    const int dx = q - 1;
                    const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
                    const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                    double acc = 0.0;
                    const double wv = wt.at(o, c, p, q);
                    for (int y = y0; y < y1; ++y) {
                        const double* irow = ip + static_cast<std::int64_t>(y + dy) * w + dx;
                        const double* grow = gp + static_cast<std::int64_t>(y) * w;
                        if (gi) {
                            double* girow = gi + static_cast<std::int64_t>(y + dy) * w + dx;
                            for (int x = x0; x < x1; ++x) {
                                acc += grow[x] * irow[x];
                                girow[x] += wv * grow[x];
                            }
                        } else {
                            for (int x = x0; x < x1; ++x) acc += grow[x] * irow[x];
                        }
                    }
                    if (gw) gw->at(o, c, p, q) += static_cast<float>(acc);
                }
            }
        }
    }
}

std::vector<double> upcast(const Tensor& t) {
    std::vector<double> v(static_cast<size_t>(t.numel()));
    for (std::int64_t i = 0; i < t.numel(); ++i) v[static_cast<size_t>(i)] = t[i];
    return v;
}

Tensor downcast(const std::vector<double>& v, std::vector<int> shape) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(v[static_cast<size_t>(i)]);
    return t;
}

} // namespace

std::int64_t RabcParams::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : named_tensors()) n += t.numel();
    return n;
}

std::vector<std::pair<std::string, Tensor>> RabcParams::named_tensors() const {
    return {{"head1.w", head1_w},     {"head1.b", head1_b},
            {"head2.w", head2_w},     {"head2.b", head2_b},
            {"head3.w", head3_w},     {"head3.b", head3_b},
            {"residual.w", residual_w}, {"residual.b", residual_b},
            {"beta_raw", beta_raw}};
}

RabcParams RabcParams::from_named(const std::vector<std::pair<std::string, Tensor>>& named) {
    RabcParams p;
    for (const auto& [name, t] : named) {
        if (name == "head1.w") p.head1_w = t;
        else if (name == "head1.b") p.head1_b = t;
        else if (name == "head2.w") p.head2_w = t;
        else if (name == "head2.b") p.head2_b = t;
        else if (name == "head3.w") p.head3_w = t;
        else if (name == "head3.b") p.head3_b = t;
        else if (name == "residual.w") p.residual_w = t;
        else if (name == "residual.b") p.residual_b = t;
        else if (name == "beta_raw") p.beta_raw = t;
        else data_error("RabcParams::from_named: unexpected tensor '" + name + "'");
    }
    return p;
}

WeightBundle RabcParams::to_bundle() const {
    WeightBundle b;
    for (const auto& [name, t] : named_tensors()) b.put(name, t);
    return b;
}

RabcParams RabcParams::from_bundle(const WeightBundle& bundle) {
    std::vector<std::pair<std::string, Tensor>> named;
    for (const auto& [name, t] : bundle.entries) named.emplace_back(name, t);
    RabcParams p = from_named(named);
    if (p.head1_w.numel() == 0 || p.beta_raw.numel() == 0) {
        data_error("RabcParams bundle is missing tensors");
    }
    return p;
}

RabcParams RabcParams::zeros(const RabcConfig& cfg) {
    RabcParams p;
    p.head1_w = Tensor({cfg.hidden, cfg.c_dec + 3, 1, 1});
    p.head1_b = Tensor({cfg.hidden});
    p.head2_w = Tensor({cfg.hidden, cfg.hidden, 3, 3});
    p.head2_b = Tensor({cfg.hidden});
    p.head3_w = Tensor({3, cfg.hidden, 1, 1});
    p.head3_b = Tensor({3});
    p.residual_w = Tensor({1, cfg.c_dec, 1, 1});
    p.residual_b = Tensor({1});
    p.beta_raw = Tensor({1}, {kBetaRawInit});
    return p;
}

RabcParams RabcParams::random_init(const RabcConfig& cfg, std::uint64_t seed) {
    RabcParams p = zeros(cfg);
    std::mt19937 rng(static_cast<std::uint32_t>(seed));
    auto fill = [&rng](Tensor& t, float scale) {
        for (std::int64_t i = 0; i < t.numel(); ++i) {
            t[i] = scale * (2.0f * static_cast<float>(rng() / 4294967296.0) - 1.0f);
        }
    };
    fill(p.head1_w, 1.0f / std::sqrt(static_cast<float>(cfg.c_dec + 3)));
    fill(p.head2_w, 1.0f / std::sqrt(9.0f * cfg.hidden));
    fill(p.head3_w, 1.0f / std::sqrt(static_cast<float>(cfg.hidden)));
    fill(p.residual_w, 0.1f / std::sqrt(static_cast<float>(cfg.c_dec)));
    return p;
}

ParamBudgetAudit audit_param_budget(const RabcParams& params) {
    ParamBudgetAudit a;
    a.count = params.parameter_count();
    a.gap = a.reference - a.count;
    a.gap_percent = 100.0 * static_cast<double>(a.gap) / static_cast<double>(a.reference);
    std::ostringstream os;
    if (params.c_dec() == 128 && params.hidden() == 64) {
        os << "rabc parameter budget: " << a.count << " (reference " << a.reference << ", gap "
           << a.gap << " = " << std::abs(a.gap_percent) << "%, expected and documented)";
    } else {
        // reference figure applies to the default 128/64 layout only
        os << "rabc parameter budget: " << a.count << " (layout c_dec=" << params.c_dec()
           << " hidden=" << params.hidden() << "; default 128/64 layout: 45701 vs reference "
           << a.reference << ")";
    }
    a.line = os.str();
    return a;
}

RabcCues RabcCues::make(Tensor z, Tensor b, Tensor u, Tensor phi) {
    if (z.ndim() != 2) data_error("RabcCues: z must be [H,W], got " + z.shape_str());
    require_same_shape(z, b, "RabcCues b");
    require_same_shape(z, u, "RabcCues u");
    if (phi.ndim() != 3 || phi.extent(1) != z.extent(0) || phi.extent(2) != z.extent(1)) {
        data_error("RabcCues: phi " + phi.shape_str() + " does not spatially match z " +
                   z.shape_str());
    }
    RabcCues cues;
    cues.p = sigmoid(z);
    cues.z = std::move(z);
    cues.b = std::move(b);
    cues.u = std::move(u);
    cues.phi = std::move(phi);
    return cues;
}

Tensor candidate_map(const RabcCues& cues) {
    Tensor c(cues.z.shape());
    for (std::int64_t i = 0; i < c.numel(); ++i) {
        const double b = cues.b[i], u = cues.u[i], p = cues.p[i];
        c[i] = static_cast<float>(b * (0.35 + 0.65 * u) * (1.0 - p));
    }
    debug_check_finite(c, "candidate_map");
    return c;
}

Tensor mixer3x3(const Tensor& z) {
    if (z.ndim() != 2) data_error("mixer3x3: expected [H,W]");
    const int h = z.extent(0), w = z.extent(1);
    Tensor out({h, w});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int p = -1; p <= 1; ++p) {
                const int yy = std::clamp(y + p, 0, h - 1);
                for (int q = -1; q <= 1; ++q) {
                    acc += z.at(yy, std::clamp(x + q, 0, w - 1));
                }
            }
            out.at(y, x) = static_cast<float>(acc / 9.0);
        }
    }
    return out;
}

RabcForward rabc_apply(const RabcCues& cues, const RabcParams& params) {
    const int h = cues.z.extent(0), w = cues.z.extent(1);
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    const int c_dec = cues.phi.extent(0);
    if (params.c_dec() != c_dec) {
        data_error("rabc_apply: params expect " + std::to_string(params.c_dec()) +
                   " decoder channels, phi has " + std::to_string(c_dec));
    }
    const int hidden = params.hidden();

    RabcForward f;
    f.height = h;
    f.width = w;
    f.z_d = upcast(cues.z);
    const auto b_d = upcast(cues.b);
    const auto u_d = upcast(cues.u);
    const auto p_d = upcast(cues.p);
    const auto phi_d = upcast(cues.phi);

    f.x.resize(static_cast<size_t>(c_dec + 3) * hw);
    std::copy(phi_d.begin(), phi_d.end(), f.x.begin());
    std::copy(b_d.begin(), b_d.end(), f.x.begin() + static_cast<std::int64_t>(c_dec) * hw);
    std::copy(u_d.begin(), u_d.end(), f.x.begin() + static_cast<std::int64_t>(c_dec + 1) * hw);
    std::copy(p_d.begin(), p_d.end(), f.x.begin() + static_cast<std::int64_t>(c_dec + 2) * hw);

    f.h1 = conv1x1_fwd(f.x, c_dec + 3, hw, params.head1_w, params.head1_b);
    f.a1 = f.h1;
    for (double& v : f.a1) v = v > 0.0 ? v : 0.0;
    f.h2 = conv3x3_fwd(f.a1, hidden, h, w, params.head2_w, params.head2_b);
    f.a2 = f.h2;
    for (double& v : f.a2) v = v > 0.0 ? v : 0.0;
    f.h3 = conv1x1_fwd(f.a2, hidden, hw, params.head3_w, params.head3_b);

    f.alpha_d.resize(static_cast<size_t>(hw));
    f.dtau_d.resize(static_cast<size_t>(hw));
    f.s_d.resize(static_cast<size_t>(hw));
    for (std::int64_t i = 0; i < hw; ++i) {
        f.alpha_d[static_cast<size_t>(i)] = sigmoid_d(f.h3[static_cast<size_t>(i)]);
        f.dtau_d[static_cast<size_t>(i)] = f.h3[static_cast<size_t>(hw + i)];
        f.s_d[static_cast<size_t>(i)] = sigmoid_d(f.h3[static_cast<size_t>(2 * hw + i)]);
    }
    f.res_d = conv1x1_fwd(phi_d, c_dec, hw, params.residual_w, params.residual_b);
    f.beta = softplus_d(params.beta_raw[0]);

    // mixer on logits (replicate padding)
    std::vector<double> mz(static_cast<size_t>(hw));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int p = -1; p <= 1; ++p) {
                const int yy = std::clamp(y + p, 0, h - 1);
                for (int q = -1; q <= 1; ++q) {
                    acc += f.z_d[static_cast<size_t>(yy) * w + std::clamp(x + q, 0, w - 1)];
                }
            }
            mz[static_cast<size_t>(y) * w + x] = acc / 9.0;
        }
    }

    f.c_d.resize(static_cast<size_t>(hw));
    f.k1_d.resize(static_cast<size_t>(hw));
    f.k2_d.resize(static_cast<size_t>(hw));
    f.dz_d.resize(static_cast<size_t>(hw));
    f.zhat_d.resize(static_cast<size_t>(hw));
    for (std::int64_t i = 0; i < hw; ++i) {
        const size_t si = static_cast<size_t>(i);
        const double bb = b_d[si], uu = u_d[si], pp = p_d[si];
        f.c_d[si] = bb * (0.35 + 0.65 * uu) * (1.0 - pp);
        f.k1_d[si] = f.c_d[si] * (mz[si] - f.z_d[si]);
        f.k2_d[si] = (1.0 - bb) * (1.0 - uu) * pp;
        f.dz_d[si] = f.alpha_d[si] * f.k1_d[si] + f.dtau_d[si] -
                     f.s_d[si] * f.beta * f.k2_d[si] + f.c_d[si] * f.res_d[si];
        f.zhat_d[si] = f.z_d[si] + f.dz_d[si];
    }

    f.z_hat = downcast(f.zhat_d, {h, w});
    f.delta_z = downcast(f.dz_d, {h, w});
    f.alpha = downcast(f.alpha_d, {h, w});
    f.delta_tau = downcast(f.dtau_d, {h, w});
    f.s_gate = downcast(f.s_d, {h, w});
    f.candidate = downcast(f.c_d, {h, w});
    debug_check_finite(f.z_hat, "rabc_apply");
    return f;
}

namespace {

struct RabcLossConstants {
    std::vector<double> w_b;      // boundary BCE weights
    std::vector<double> far_mask; // (1-P_c)(1-Bbar)
    double far_den = 0.0;         // sum(far_mask) + eps
};

RabcLossConstants loss_constants(const RabcCues& cues, const Tensor& p_c, const RabcConfig& cfg) {
    const Tensor bmag = sobel_mag(p_c);
    const Tensor band = maxpool_same(bmag, cfg.band_k);
    const std::int64_t n = p_c.numel();
    RabcLossConstants k;
    k.w_b.resize(static_cast<size_t>(n));
    k.far_mask.resize(static_cast<size_t>(n));
    double den = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double pc = p_c[i];
        const double maxbb = std::max<double>(bmag[i], cues.b[i]);
        k.w_b[static_cast<size_t>(i)] =
            1.0 + cfg.lambda_b * pc * maxbb * (0.5 + 0.5 * cues.u[i]) * (1.0 - cues.p[i]);
        const double fm = (1.0 - pc) * (1.0 - band[i]);
        k.far_mask[static_cast<size_t>(i)] = fm;
        den += fm;
    }
    k.far_den = den + kEps;
    return k;
}

} // namespace

RabcLossValues rabc_losses(const RabcForward& fwd, const RabcCues& cues, const Tensor& p_c,
                           const RabcConfig& cfg) {
    require_same_shape(cues.z, p_c, "rabc_losses consensus");
    const auto k = loss_constants(cues, p_c, cfg);
    const std::int64_t n = p_c.numel();
    RabcLossValues out;
    double bnd = 0.0, far_num = 0.0, sp = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const size_t si = static_cast<size_t>(i);
        bnd += k.w_b[si] * bce_logits_elem(fwd.zhat_d[si], p_c[i]);
        const double lift = sigmoid_d(fwd.zhat_d[si]) - sigmoid_d(fwd.z_d[si]) - cfg.far_margin;
        if (lift > 0.0) far_num += lift * k.far_mask[si];
        sp += std::fabs(fwd.dz_d[si]) * (1.0 - fwd.alpha_d[si]);
    }
    out.bnd = bnd / n;
    out.far = far_num / k.far_den;
    out.sp = sp / n;
    return out;
}

RabcParams rabc_losses_backward(const RabcForward& fwd, const RabcCues& cues, const Tensor& p_c,
                                const RabcConfig& cfg, const RabcParams& params,
                                double w_bnd, double w_far, double w_sp) {
    const auto k = loss_constants(cues, p_c, cfg);
    const int h = fwd.height, w = fwd.width;
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    const double n = static_cast<double>(hw);
    const int c_dec = params.c_dec();
    const int hidden = params.hidden();

    // d(weighted loss)/d z_hat and the sparsity term's direct alpha path
    std::vector<double> g_dz(static_cast<size_t>(hw));
    std::vector<double> g_alpha(static_cast<size_t>(hw));
    for (std::int64_t i = 0; i < hw; ++i) {
        const size_t si = static_cast<size_t>(i);
        const double zh = fwd.zhat_d[si];
        double g_zhat = w_bnd * k.w_b[si] * (sigmoid_d(zh) - p_c[i]) / n;
        const double lift = sigmoid_d(zh) - sigmoid_d(fwd.z_d[si]) - cfg.far_margin;
        if (lift > 0.0) {
            const double sz = sigmoid_d(zh);
            g_zhat += w_far * sz * (1.0 - sz) * k.far_mask[si] / k.far_den;
        }
        double gd = g_zhat;
        const double sgn = fwd.dz_d[si] > 0.0 ? 1.0 : (fwd.dz_d[si] < 0.0 ? -1.0 : 0.0);
        gd += w_sp * sgn * (1.0 - fwd.alpha_d[si]) / n;
        g_dz[si] = gd;
        g_alpha[si] = gd * fwd.k1_d[si] - w_sp * std::fabs(fwd.dz_d[si]) / n;
    }

    RabcParams g = RabcParams::zeros(RabcConfig{c_dec, hidden, cfg.lambda_b, cfg.far_margin,
                                                cfg.band_k});
    g.beta_raw[0] = 0.0f;

    // scalar beta path: dz has the term -s * beta * k2
    double g_beta = 0.0;
    std::vector<double> g_h3(static_cast<size_t>(3) * hw);
    for (std::int64_t i = 0; i < hw; ++i) {
        const size_t si = static_cast<size_t>(i);
        const double a = fwd.alpha_d[si], s = fwd.s_d[si];
        g_h3[si] = g_alpha[si] * a * (1.0 - a);
        g_h3[static_cast<size_t>(hw + i)] = g_dz[si];
        const double g_s = -g_dz[si] * fwd.beta * fwd.k2_d[si];
        g_h3[static_cast<size_t>(2 * hw + i)] = g_s * s * (1.0 - s);
        g_beta += -g_dz[si] * s * fwd.k2_d[si];
    }
    g.beta_raw[0] = static_cast<float>(g_beta * sigmoid_d(params.beta_raw[0]));

    // residual conv: g_res = g_dz * c, input phi
    std::vector<double> g_res(static_cast<size_t>(hw));
    for (std::int64_t i = 0; i < hw; ++i) {
        g_res[static_cast<size_t>(i)] = g_dz[static_cast<size_t>(i)] * fwd.c_d[static_cast<size_t>(i)];
    }
    const auto phi_d = upcast(cues.phi);
    conv1x1_bwd(phi_d, c_dec, hw, params.residual_w, g_res, nullptr, &g.residual_w,
                &g.residual_b);

    // context head backward: conv3 -> relu -> conv2 -> relu -> conv1
    std::vector<double> g_a2(static_cast<size_t>(hidden) * hw, 0.0);
    conv1x1_bwd(fwd.a2, hidden, hw, params.head3_w, g_h3, &g_a2, &g.head3_w, &g.head3_b);
    for (size_t i = 0; i < g_a2.size(); ++i) {
        if (fwd.h2[i] <= 0.0) g_a2[i] = 0.0;
    }
    std::vector<double> g_a1(static_cast<size_t>(hidden) * hw, 0.0);
    conv3x3_bwd(fwd.a1, hidden, h, w, params.head2_w, g_a2, &g_a1, &g.head2_w, &g.head2_b);
    for (size_t i = 0; i < g_a1.size(); ++i) {
        if (fwd.h1[i] <= 0.0) g_a1[i] = 0.0;
    }
    conv1x1_bwd(fwd.x, c_dec + 3, hw, params.head1_w, g_a1, nullptr, &g.head1_w, &g.head1_b);
    return g;
}

Tensor boundary_gate(const Tensor& z, const Tensor& phi_s, const Tensor& b, const Tensor& u,
                     const BoundaryGateParams& params) {
    if (z.ndim() != 2 || phi_s.ndim() != 3) {
        data_error("boundary_gate: z must be [H,W] and phi_s [C,H,W]");
    }
    require_same_shape(z, b, "boundary_gate b");
    require_same_shape(z, u, "boundary_gate u");
    const int c_s = phi_s.extent(0), h = z.extent(0), w = z.extent(1);
    if (phi_s.extent(1) != h || phi_s.extent(2) != w) {
        data_error("boundary_gate: phi_s " + phi_s.shape_str() + " does not match z " +
                   z.shape_str());
    }
    if (params.gate_w.extent(1) != c_s + 2) {
        data_error("boundary_gate: gate conv expects " + std::to_string(params.gate_w.extent(1)) +
                   " channels, got " + std::to_string(c_s + 2));
    }

    Tensor gate_in({c_s + 2, h, w});
    std::copy_n(phi_s.data(), phi_s.numel(), gate_in.data());
    std::copy_n(b.data(), b.numel(), gate_in.data() + phi_s.numel());
    std::copy_n(u.data(), u.numel(), gate_in.data() + phi_s.numel() + b.numel());
    const Tensor g = sigmoid(conv2d(gate_in, params.gate_w, {params.gate_b[0]}, Padding::Same));

    Tensor gated(phi_s.shape());
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    for (int c = 0; c < c_s; ++c) {
        for (std::int64_t i = 0; i < hw; ++i) {
            gated[c * hw + i] = phi_s[c * hw + i] * g[i];
        }
    }
    std::vector<float> r1b(params.r1_b.vec().begin(), params.r1_b.vec().end());
    const Tensor r1 = relu(conv2d(gated, params.r1_w, r1b, Padding::Same));
    const Tensor r2 = conv2d(r1, params.r2_w, {params.r2_b[0]}, Padding::Same);

    Tensor out({h, w});
    for (std::int64_t i = 0; i < hw; ++i) out[i] = z[i] + r2[i];
    debug_check_finite(out, "boundary_gate");
    return out;
}

AdaptResult adapt_demo(const std::vector<AdaptItem>& batch, RabcParams params, int steps,
                       double lr, const std::vector<std::string>& trainable,
                       const RabcConfig& cfg) {
    if (batch.empty()) data_error("adapt_demo: empty batch");
    if (steps < 1) data_error("adapt_demo: steps must be >= 1");

    AdaptResult result;
    result.trace.reserve(static_cast<size_t>(steps));
    for (int step = 0; step < steps; ++step) {
        const AdaptItem& item = batch[static_cast<size_t>(step) % batch.size()];
        const RabcForward fwd = rabc_apply(item.cues, params);
        const RabcLossValues lv = rabc_losses(fwd, item.cues, item.p_c, cfg);
        const double loss = kWBnd * lv.bnd + kWFar * lv.far + kWSp * lv.sp;
        if (!std::isfinite(loss)) {
            result.diverged = true;
            result.diverged_step = step;
            break;
        }
        result.trace.push_back(loss);

        RabcParams grads =
            rabc_losses_backward(fwd, item.cues, item.p_c, cfg, params, kWBnd, kWFar, kWSp);
        auto named = grads.named_tensors();
        const TrainableMaskReport mask = apply_trainable_mask(named, trainable);
        result.trainable_fraction = mask.fraction();
        grads = RabcParams::from_named(named);

        auto theta = params.named_tensors();
        auto gvec = grads.named_tensors();
        for (size_t t = 0; t < theta.size(); ++t) {
            Tensor& pt = theta[t].second;
            const Tensor& gt = gvec[t].second;
            for (std::int64_t i = 0; i < pt.numel(); ++i) {
                pt[i] = static_cast<float>(static_cast<double>(pt[i]) - lr * gt[i]);
            }
        }
        params = RabcParams::from_named(theta);
    }

    const size_t window = std::min<size_t>(10, result.trace.size());
    if (window > 0) {
        for (size_t k = 0; k + window <= result.trace.size(); ++k) {
            double acc = 0.0;
            for (size_t j = 0; j < window; ++j) acc += result.trace[k + j];
            result.smoothed.push_back(acc / static_cast<double>(window));
        }
    }
    if (result.smoothed.size() >= 2) {
        result.smoothed_decreased = result.smoothed.back() < result.smoothed.front();
        std::int64_t dec = 0;
        for (size_t i = 0; i + 1 < result.smoothed.size(); ++i) {
            if (result.smoothed[i + 1] < result.smoothed[i]) ++dec;
        }
        result.monotone_fraction =
            static_cast<double>(dec) / static_cast<double>(result.smoothed.size() - 1);
    } else if (result.smoothed.size() == 1) {
        result.smoothed_decreased = false;
        result.monotone_fraction = 1.0;
    }
    result.params = std::move(params);
    return result;
}

} // namespace relseg
