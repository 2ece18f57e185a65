#include "relseg/gradcheck.hpp"

#include <chrono>
#include <cmath>
#include <random>

#include "relseg/losses.hpp"
#include "relseg/rabc.hpp"
#include "relseg/util.hpp"

namespace relseg {

namespace {

double rel_err(double ga, double gfd) {
    return std::fabs(ga - gfd) / std::max({std::fabs(ga), std::fabs(gfd), 1e-2});
}

struct Rand {
    std::mt19937_64 engine;
    explicit Rand(std::uint64_t seed) : engine(seed) {}
    double uniform() { return static_cast<double>(engine() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    Tensor tensor(std::vector<int> shape, double lo, double hi) {
        Tensor t(std::move(shape));
        for (std::int64_t i = 0; i < t.numel(); ++i) {
            t[i] = static_cast<float>(uniform(lo, hi));
        }
        return t;
    }
};

} // namespace

double fd_max_rel_err(Tensor& x, const std::function<double()>& eval, const Tensor& analytic,
                      double h) {
    double worst = 0.0;
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        const float saved = x[i];
        const double base = static_cast<double>(saved);

        x[i] = static_cast<float>(base + h);
        const double h_plus = static_cast<double>(x[i]) - base;
        const double l_plus = eval();

        x[i] = static_cast<float>(base - h);
        const double h_minus = base - static_cast<double>(x[i]);
        const double l_minus = eval();

        x[i] = saved;
        const double gfd = (l_plus - l_minus) / (h_plus + h_minus);
        worst = std::max(worst, rel_err(static_cast<double>(analytic[i]), gfd));
    }
    return worst;
}

double fd_rel_err_scalar(double& x, const std::function<double()>& eval, double analytic,
                         double h) {
    const double saved = x;
    x = saved + h;
    const double l_plus = eval();
    x = saved - h;
    const double l_minus = eval();
    x = saved;
    return rel_err(analytic, (l_plus - l_minus) / (2.0 * h));
}

namespace {

constexpr double kTol = 1e-4;
const std::vector<int> kShape = {2, 8, 8}; // per-instance tensor shape

struct SuiteState {
    std::uint64_t seed;
    GradCheckReport report;

    void add(const std::string& name, int instances, double max_err) {
        report.entries.push_back({name, instances, max_err, max_err < kTol});
    }
};

void check_bce(SuiteState& st, int instances, bool weighted) {
    double worst = 0.0;
    for (int it = 0; it < instances; ++it) {
        Rand rng(splitmix64(st.seed ^ (weighted ? 0x11u : 0x10u) ^ (static_cast<std::uint64_t>(it) << 8)));
        Tensor z = rng.tensor(kShape, -3.0, 3.0);
        const Tensor t = rng.tensor(kShape, 0.0, 1.0);
        const Tensor w = rng.tensor(kShape, 0.2, 2.0);
        const Tensor* wp = weighted ? &w : nullptr;
        const ScalarWithGrad res = bce_logits(z, t, wp);
        worst = std::max(worst, fd_max_rel_err(z, [&] { return bce_logits(z, t, wp).value; },
                                               res.grad));
    }
    st.add(weighted ? "bce_logits_weighted/z" : "bce_logits/z", instances, worst);
}

void check_dul_path(SuiteState& st, int instances, bool with_a) {
    double worst_z = 0.0, worst_s = 0.0;
    for (int it = 0; it < instances; ++it) {
        Rand rng(splitmix64(st.seed ^ (with_a ? 0x21u : 0x20u) ^ (static_cast<std::uint64_t>(it) << 8)));
        Tensor z = rng.tensor(kShape, -3.0, 3.0);
        const Tensor p = rng.tensor(kShape, 0.0, 1.0);
        Tensor s = rng.tensor(kShape, -1.5, 1.5);
        const Tensor a = rng.tensor(kShape, 0.0, 1.0);
        const Tensor* ap = with_a ? &a : nullptr;
        const DulPathResult res = dul_path_loss(z, p, s, ap);
        worst_z = std::max(worst_z,
                           fd_max_rel_err(z, [&] { return dul_path_loss(z, p, s, ap).value; },
                                          res.grad_z));
        worst_s = std::max(worst_s,
                           fd_max_rel_err(s, [&] { return dul_path_loss(z, p, s, ap).value; },
                                          res.grad_sigma));
    }
    st.add(with_a ? "dul_path_weighted/z" : "dul_path/z", instances, worst_z);
    st.add(with_a ? "dul_path_weighted/sigma" : "dul_path/sigma", instances, worst_s);
}

void check_dul_total(SuiteState& st, int instances) {
    double worst_l = 0.0, worst_s = 0.0;
    for (int it = 0; it < instances; ++it) {
        Rand rng(splitmix64(st.seed ^ 0x30u ^ (static_cast<std::uint64_t>(it) << 8)));
        const int k = 2 + static_cast<int>(rng.engine() % 3);
        std::vector<double> losses(static_cast<size_t>(k));
        std::vector<Tensor> sigmas;
        for (int i = 0; i < k; ++i) {
            losses[static_cast<size_t>(i)] = rng.uniform(-0.5, 1.5);
            sigmas.push_back(rng.tensor({4, 4}, -1.5, 1.5));
        }
        const DulTotalResult res = dul_total(losses, sigmas);
        for (int i = 0; i < k; ++i) {
            worst_l = std::max(worst_l, fd_rel_err_scalar(losses[static_cast<size_t>(i)],
                                                          [&] { return dul_total(losses, sigmas).value; },
                                                          res.grad_path_losses[static_cast<size_t>(i)]));
            worst_s = std::max(worst_s, fd_max_rel_err(sigmas[static_cast<size_t>(i)],
                                                       [&] { return dul_total(losses, sigmas).value; },
                                                       res.grad_sigmas[static_cast<size_t>(i)]));
        }
    }
    st.add("dul_total/path_losses", instances, worst_l);
    st.add("dul_total/sigmas", instances, worst_s);
}

void check_overlap_losses(SuiteState& st, int instances) {
    double worst_dice = 0.0, worst_tv = 0.0;
    for (int it = 0; it < instances; ++it) {
        Rand rng(splitmix64(st.seed ^ 0x40u ^ (static_cast<std::uint64_t>(it) << 8)));
        Tensor z = rng.tensor(kShape, -3.0, 3.0);
        Tensor t(kShape);
        for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform() < 0.5 ? 0.0f : 1.0f;
        const ScalarWithGrad d = dice_loss(z, t);
        worst_dice = std::max(worst_dice,
                              fd_max_rel_err(z, [&] { return dice_loss(z, t).value; }, d.grad));
        const ScalarWithGrad tv = tversky_loss(z, t, 0.3, 0.7);
        worst_tv = std::max(worst_tv,
                            fd_max_rel_err(z, [&] { return tversky_loss(z, t, 0.3, 0.7).value; },
                                           tv.grad));
    }
    st.add("dice/z", instances, worst_dice);
    st.add("tversky/z", instances, worst_tv);
}

void check_boundary_l1(SuiteState& st, int instances) {
    double worst = 0.0;
    for (int it = 0; it < instances; ++it) {
        Rand rng(splitmix64(st.seed ^ 0x50u ^ (static_cast<std::uint64_t>(it) << 8)));
        const Tensor t = rng.tensor(kShape, 0.0, 1.0);
        // keep |pred - target| away from the kink by more than the step
        Tensor pred(kShape);
        for (std::int64_t i = 0; i < pred.numel(); ++i) {
            const double gap = rng.uniform(0.05, 0.5) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
            pred[i] = static_cast<float>(t[i] + gap);
        }
        const ScalarWithGrad res = boundary_l1(pred, t);
        worst = std::max(worst,
                         fd_max_rel_err(pred, [&] { return boundary_l1(pred, t).value; }, res.grad));
    }
    st.add("boundary_l1/pred", instances, worst);
}

void check_distill(SuiteState& st, int instances) {
    double worst = 0.0;
    for (int it = 0; it < instances; ++it) {
        Rand rng(splitmix64(st.seed ^ 0x60u ^ (static_cast<std::uint64_t>(it) << 8)));
        Tensor z = rng.tensor(kShape, -3.0, 3.0);
        const Tensor tp = rng.tensor(kShape, 0.0, 1.0);
        const ScalarWithGrad res = distill_loss(z, tp);
        worst = std::max(worst,
                         fd_max_rel_err(z, [&] { return distill_loss(z, tp).value; }, res.grad));
    }
    st.add("distill/z", instances, worst);
}

// ---- calibration-loss instances ----

struct RabcInstance {
    RabcCues cues;
    RabcParams params;
    Tensor p_c;
};

/// Kink-free instance: activations, |delta z| and the far margin stay more
/// than one finite-difference step away from their nondifferentiable points,
/// and at least one pixel genuinely exercises the far-background loss. The
/// consensus map is a smooth ramp; a white-noise map would saturate the
/// Sobel band and zero out the far mask.
RabcInstance make_rabc_instance(const RabcConfig& cfg, std::uint64_t seed) {
    for (std::uint64_t attempt = 0;; ++attempt) {
        Rand rng(splitmix64(seed + attempt * 0x1000193u));
        const int h = 5, w = 5;
        Tensor z = rng.tensor({h, w}, -2.0, 2.0);
        Tensor b = rng.tensor({h, w}, 0.1, 0.9);
        Tensor u = rng.tensor({h, w}, 0.1, 0.9);
        Tensor phi = rng.tensor({cfg.c_dec, h, w}, -1.0, 1.0);
        Tensor p_c({h, w});
        const double base = rng.uniform(0.1, 0.4);
        const double sx = rng.uniform(-0.03, 0.03), sy = rng.uniform(-0.03, 0.03);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                p_c.at(y, x) = static_cast<float>(base + sx * x + sy * y +
                                                  rng.uniform(-0.008, 0.008) + 0.2);
            }
        }

        RabcParams params = RabcParams::random_init(cfg, static_cast<std::uint64_t>(rng.engine()));
        // push biases off zero so relu inputs are well separated from 0
        for (Tensor* bias : {&params.head1_b, &params.head2_b, &params.head3_b}) {
            for (std::int64_t i = 0; i < bias->numel(); ++i) {
                (*bias)[i] = static_cast<float>(rng.uniform(0.2, 0.6) *
                                                (rng.uniform() < 0.5 ? -1.0 : 1.0));
            }
        }

        RabcInstance inst{RabcCues::make(std::move(z), std::move(b), std::move(u), std::move(phi)),
                          std::move(params), std::move(p_c)};
        const RabcForward fwd = rabc_apply(inst.cues, inst.params);

        bool clean = true;
        bool far_active = false;
        const double band = 4e-3;
        for (double v : fwd.h1) {
            if (std::fabs(v) < band) clean = false;
        }
        for (double v : fwd.h2) {
            if (std::fabs(v) < band) clean = false;
        }
        for (size_t i = 0; i < fwd.dz_d.size() && clean; ++i) {
            if (std::fabs(fwd.dz_d[i]) < band) clean = false;
            const double lift = sigmoid_d(fwd.zhat_d[i]) - sigmoid_d(fwd.z_d[i]) - cfg.far_margin;
            if (std::fabs(lift) < band) clean = false;
            if (lift > band) far_active = true;
        }
        if (clean && far_active) return inst;
        if (attempt > 2000) invariant_error("gradcheck: cannot find kink-free rabc instance");
    }
}

void check_rabc_loss(SuiteState& st, int instances, const char* name, double wb, double wf,
                     double ws) {
    const RabcConfig cfg{3 /*c_dec*/, 5 /*hidden*/, 2.0f, 0.02f, 5};
    double worst = 0.0;
    for (int it = 0; it < instances; ++it) {
        RabcInstance inst = make_rabc_instance(
            cfg, splitmix64(st.seed ^ 0x70u ^ (static_cast<std::uint64_t>(it) << 8) ^
                            static_cast<std::uint64_t>(wb * 977 + wf * 7919 + ws * 104729)));
        const RabcForward fwd = rabc_apply(inst.cues, inst.params);
        const RabcParams grads =
            rabc_losses_backward(fwd, inst.cues, inst.p_c, cfg, inst.params, wb, wf, ws);

        auto named_params = inst.params.named_tensors();
        auto named_grads = grads.named_tensors();
        for (size_t t = 0; t < named_params.size(); ++t) {
            Tensor copy = named_params[t].second;
            // rebuild params with the perturbed tensor live inside
            auto eval_with = [&]() {
                auto np = named_params;
                np[t].second = copy;
                const RabcParams p = RabcParams::from_named(np);
                const RabcForward f = rabc_apply(inst.cues, p);
                const RabcLossValues lv = rabc_losses(f, inst.cues, inst.p_c, cfg);
                return wb * lv.bnd + wf * lv.far + ws * lv.sp;
            };
            worst = std::max(worst, fd_max_rel_err(copy, eval_with, named_grads[t].second));
        }
    }
    st.add(name, instances, worst);
}

} // namespace

GradCheckReport run_gradcheck_suite(std::uint64_t seed, int instances_per_loss) {
    const auto t0 = std::chrono::steady_clock::now();
    SuiteState st{seed, {}};

    check_bce(st, instances_per_loss, false);
    check_bce(st, instances_per_loss, true);
    check_dul_path(st, instances_per_loss, false);
    check_dul_path(st, instances_per_loss, true);
    check_dul_total(st, instances_per_loss);
    check_overlap_losses(st, instances_per_loss);
    check_boundary_l1(st, instances_per_loss);
    check_distill(st, instances_per_loss);
    check_rabc_loss(st, instances_per_loss, "rabc_bnd/params", 1.0, 0.0, 0.0);
    check_rabc_loss(st, instances_per_loss, "rabc_far/params", 0.0, 1.0, 0.0);
    check_rabc_loss(st, instances_per_loss, "rabc_sp/params", 0.0, 0.0, 1.0);
    check_rabc_loss(st, instances_per_loss, "rabc_weighted/params", 0.04, 0.02, 0.01);

    st.report.all_pass = true;
    for (const auto& e : st.report.entries) {
        if (!e.pass) st.report.all_pass = false;
    }
    st.report.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return st.report;
}

} // namespace relseg
