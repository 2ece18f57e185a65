#include "relseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "relseg/util.hpp"

namespace relseg {

namespace {

constexpr double kEps = 1e-8;
constexpr double kInf = std::numeric_limits<double>::infinity();

double ratio_or_one(double num, double den) { return den > 0.0 ? num / den : 1.0; }

/// Foreground pixels with a 4-neighbor that is background or off-image.
Tensor boundary_pixels(const Tensor& mask) {
    const int h = mask.extent(0), w = mask.extent(1);
    Tensor out({h, w});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (mask.at(y, x) <= 0.5f) continue;
            const bool edge = y == 0 || y == h - 1 || x == 0 || x == w - 1 ||
                              mask.at(y - 1, x) <= 0.5f || mask.at(y + 1, x) <= 0.5f ||
                              mask.at(y, x - 1) <= 0.5f || mask.at(y, x + 1) <= 0.5f;
            if (edge) out.at(y, x) = 1.0f;
        }
    }
    return out;
}

// 1-D squared distance transform (lower envelope of parabolas), skipping
// infinite parabolas; all-infinite rows stay infinite
void edt_1d(const double* f, double* d, int n, int* v, double* z) {
    int q0 = -1;
    for (int q = 0; q < n; ++q) {
        if (f[q] < kInf) {
            q0 = q;
            break;
        }
    }
    if (q0 < 0) {
        for (int q = 0; q < n; ++q) d[q] = kInf;
        return;
    }
    int k = 0;
    v[0] = q0;
    z[0] = -kInf;
    z[1] = kInf;
    auto crossing = [&](int q, int vk) {
        return ((f[q] + static_cast<double>(q) * q) - (f[vk] + static_cast<double>(vk) * vk)) /
               (2.0 * q - 2.0 * vk);
    };
    for (int q = q0 + 1; q < n; ++q) {
        if (f[q] == kInf) continue;
        double s = crossing(q, v[k]);
        while (s <= z[k]) {
            --k;
            s = crossing(q, v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        d[q] = (q - static_cast<double>(v[k])) * (q - static_cast<double>(v[k])) + f[v[k]];
    }
}

} // namespace

std::vector<double> squared_edt(const Tensor& seeds) {
    const int h = seeds.extent(0), w = seeds.extent(1);
    std::vector<double> dist(static_cast<size_t>(h) * w);
    for (std::int64_t i = 0; i < seeds.numel(); ++i) {
        dist[static_cast<size_t>(i)] = seeds[i] > 0.5f ? 0.0 : kInf;
    }
    const int nmax = std::max(h, w);
    std::vector<double> f(static_cast<size_t>(nmax)), d(static_cast<size_t>(nmax));
    std::vector<double> z(static_cast<size_t>(nmax) + 1);
    std::vector<int> v(static_cast<size_t>(nmax));
    // columns first, then rows
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) f[static_cast<size_t>(y)] = dist[static_cast<size_t>(y) * w + x];
        edt_1d(f.data(), d.data(), h, v.data(), z.data());
        for (int y = 0; y < h; ++y) dist[static_cast<size_t>(y) * w + x] = d[static_cast<size_t>(y)];
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) f[static_cast<size_t>(x)] = dist[static_cast<size_t>(y) * w + x];
        edt_1d(f.data(), d.data(), w, v.data(), z.data());
        for (int x = 0; x < w; ++x) dist[static_cast<size_t>(y) * w + x] = d[static_cast<size_t>(x)];
    }
    return dist;
}

OverlapMetrics overlap_metrics(const Tensor& pred, const Tensor& gt) {
    require_same_shape(pred, gt, "overlap_metrics");
    std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::int64_t i = 0; i < pred.numel(); ++i) {
        const bool p = pred[i] > 0.5f, g = gt[i] > 0.5f;
        if (p && g) ++tp;
        else if (p && !g) ++fp;
        else if (!p && g) ++fn;
        else ++tn;
    }
    OverlapMetrics m;
    m.acc = static_cast<double>(tp + tn) / static_cast<double>(pred.numel());
    m.dice = ratio_or_one(2.0 * tp, 2.0 * static_cast<double>(tp) + fp + fn);
    m.jac = ratio_or_one(static_cast<double>(tp), static_cast<double>(tp) + fp + fn);
    m.sen = ratio_or_one(static_cast<double>(tp), static_cast<double>(tp) + fn);
    m.spe = ratio_or_one(static_cast<double>(tn), static_cast<double>(tn) + fp);
    return m;
}

BoundaryDistances boundary_distance(const Tensor& pred, const Tensor& gt) {
    require_same_shape(pred, gt, "boundary_distance");
    const int h = pred.extent(0), w = pred.extent(1);

    bool pred_empty = true, gt_empty = true;
    for (std::int64_t i = 0; i < pred.numel(); ++i) {
        if (pred[i] > 0.5f) pred_empty = false;
        if (gt[i] > 0.5f) gt_empty = false;
    }
    if (pred_empty && gt_empty) return {0.0, 0.0};
    if (pred_empty != gt_empty) {
        const double diag = std::sqrt(static_cast<double>(h) * h + static_cast<double>(w) * w);
        return {diag, diag};
    }

    const Tensor bp = boundary_pixels(pred);
    const Tensor bg = boundary_pixels(gt);
    const auto dist_to_gt = squared_edt(bg);
    const auto dist_to_pred = squared_edt(bp);

    std::vector<double> pooled;
    double sum_p2g = 0.0, sum_g2p = 0.0;
    std::int64_t n_p = 0, n_g = 0;
    for (std::int64_t i = 0; i < bp.numel(); ++i) {
        if (bp[i] > 0.5f) {
            const double d = std::sqrt(dist_to_gt[static_cast<size_t>(i)]);
            pooled.push_back(d);
            sum_p2g += d;
            ++n_p;
        }
        if (bg[i] > 0.5f) {
            const double d = std::sqrt(dist_to_pred[static_cast<size_t>(i)]);
            pooled.push_back(d);
            sum_g2p += d;
            ++n_g;
        }
    }

    std::sort(pooled.begin(), pooled.end());
    const double pos = 0.95 * static_cast<double>(pooled.size() - 1);
    const size_t lo = static_cast<size_t>(pos);
    const size_t hi = std::min(lo + 1, pooled.size() - 1);
    const double frac = pos - static_cast<double>(lo);

    BoundaryDistances out;
    out.hd95 = pooled[lo] + frac * (pooled[hi] - pooled[lo]);
    out.assd = 0.5 * (sum_p2g / n_p + sum_g2p / n_g);
    return out;
}

CalibrationMetrics boundary_band_calibration(const Tensor& prob, const Tensor& gt,
                                             int band_radius, int bins) {
    require_same_shape(prob, gt, "boundary_band_calibration");
    if (band_radius < 0 || bins < 1) config_error("boundary_band_calibration: bad band/bins");

    const Tensor bg = boundary_pixels(gt);
    // Chebyshev ball of radius r is the (2r+1)^2 window
    const Tensor band = band_radius > 0 ? maxpool_same(bg, 2 * band_radius + 1) : bg;

    std::vector<double> bin_conf(static_cast<size_t>(bins), 0.0);
    std::vector<double> bin_pos(static_cast<size_t>(bins), 0.0);
    std::vector<std::int64_t> bin_n(static_cast<size_t>(bins), 0);
    double brier = 0.0, nll = 0.0;
    std::int64_t n = 0;
    for (std::int64_t i = 0; i < prob.numel(); ++i) {
        if (band[i] <= 0.5f) continue;
        const double p = prob[i];
        const double y = gt[i] > 0.5f ? 1.0 : 0.0;
        const int b = std::min(bins - 1, static_cast<int>(p * bins));
        bin_conf[static_cast<size_t>(b)] += p;
        bin_pos[static_cast<size_t>(b)] += y;
        ++bin_n[static_cast<size_t>(b)];
        brier += (p - y) * (p - y);
        nll += -(y * std::log(p + kEps) + (1.0 - y) * std::log(1.0 - p + kEps));
        ++n;
    }
    if (n == 0) data_error("boundary_band_calibration: no boundary band (empty gt boundary)");

    CalibrationMetrics m;
    m.band_pixels = n;
    m.brier = brier / n;
    m.nll = nll / n;
    for (int b = 0; b < bins; ++b) {
        if (bin_n[static_cast<size_t>(b)] == 0) continue;
        const double conf = bin_conf[static_cast<size_t>(b)] / bin_n[static_cast<size_t>(b)];
        const double acc = bin_pos[static_cast<size_t>(b)] / bin_n[static_cast<size_t>(b)];
        m.ece += (static_cast<double>(bin_n[static_cast<size_t>(b)]) / n) * std::fabs(conf - acc);
    }
    return m;
}

BootstrapResult paired_bootstrap(const std::vector<double>& metric_a,
                                 const std::vector<double>& metric_b, int resamples,
                                 std::uint64_t seed) {
    if (metric_a.size() != metric_b.size()) {
        data_error("paired_bootstrap: series lengths differ (" + std::to_string(metric_a.size()) +
                   " vs " + std::to_string(metric_b.size()) + ")");
    }
    const size_t n = metric_a.size();
    if (n < 2) data_error("paired_bootstrap: need n >= 2 paired samples");
    if (resamples < 1000) config_error("paired_bootstrap: need >= 1000 resamples");

    std::vector<double> diffs(n);
    double mean_diff = 0.0;
    for (size_t i = 0; i < n; ++i) {
        diffs[i] = metric_a[i] - metric_b[i];
        mean_diff += diffs[i];
    }
    mean_diff /= static_cast<double>(n);

    std::int64_t c_le = 0, c_ge = 0;
    for (int r = 0; r < resamples; ++r) {
        // independent per-resample stream: deterministic for any threading
        std::mt19937_64 rng(splitmix64(seed ^ (0x9e3779b97f4a7c15ull * (static_cast<std::uint64_t>(r) + 1))));
        double acc = 0.0;
        for (size_t i = 0; i < n; ++i) acc += diffs[rng() % n];
        const double d = acc / static_cast<double>(n);
        if (d <= 0.0) ++c_le;
        if (d >= 0.0) ++c_ge;
    }
    BootstrapResult out;
    out.mean_diff = mean_diff;
    const double p = 2.0 * static_cast<double>(std::min(c_le, c_ge) + 1) / (resamples + 1);
    out.p_two_sided = std::min(1.0, p);
    return out;
}

MetricReport evaluate_masks(const std::vector<Tensor>& preds, const std::vector<Tensor>& gts,
                            const std::vector<Tensor>* probs, int band_radius) {
    if (preds.size() != gts.size() || preds.empty()) {
        data_error("evaluate_masks: need equal nonempty pred/gt lists");
    }
    if (probs && probs->size() != preds.size()) {
        data_error("evaluate_masks: probs list length mismatch");
    }
    MetricReport report;
    report.n = static_cast<int>(preds.size());
    report.conventions =
        "per-image metrics averaged arithmetically; 0/0 overlap ratios := 1; "
        "hd95/assd: empty-empty = 0, one-empty = image diagonal; boundary = foreground "
        "4-adjacent to background (image border counts as background)";

    CalibrationMetrics cal_sum;
    int cal_n = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
        const OverlapMetrics om = overlap_metrics(preds[i], gts[i]);
        const BoundaryDistances bd = boundary_distance(preds[i], gts[i]);
        PerImageMetrics pm{om.acc, om.dice, om.jac, om.sen, om.spe, bd.hd95, bd.assd};
        report.per_image.push_back(pm);
        report.aggregate.acc += pm.acc;
        report.aggregate.dice += pm.dice;
        report.aggregate.jac += pm.jac;
        report.aggregate.sen += pm.sen;
        report.aggregate.spe += pm.spe;
        report.aggregate.hd95 += pm.hd95;
        report.aggregate.assd += pm.assd;
        if (probs) {
            bool gt_nonempty = false;
            for (std::int64_t j = 0; j < gts[i].numel(); ++j) {
                if (gts[i][j] > 0.5f) {
                    gt_nonempty = true;
                    break;
                }
            }
            if (gt_nonempty) {
                const CalibrationMetrics cm =
                    boundary_band_calibration((*probs)[i], gts[i], band_radius);
                cal_sum.ece += cm.ece;
                cal_sum.brier += cm.brier;
                cal_sum.nll += cm.nll;
                cal_sum.band_pixels += cm.band_pixels;
                ++cal_n;
            }
        }
    }
    const double inv = 1.0 / report.n;
    report.aggregate.acc *= inv;
    report.aggregate.dice *= inv;
    report.aggregate.jac *= inv;
    report.aggregate.sen *= inv;
    report.aggregate.spe *= inv;
    report.aggregate.hd95 *= inv;
    report.aggregate.assd *= inv;
    if (probs && cal_n > 0) {
        CalibrationMetrics cm;
        cm.ece = cal_sum.ece / cal_n;
        cm.brier = cal_sum.brier / cal_n;
        cm.nll = cal_sum.nll / cal_n;
        cm.band_pixels = cal_sum.band_pixels;
        report.calibration = cm;
        report.calibration_images = cal_n;
    }
    return report;
}

std::vector<double> macro_average(const std::vector<std::vector<double>>& per_dataset) {
    if (per_dataset.empty()) data_error("macro_average: need >= 1 dataset aggregate");
    const size_t m = per_dataset[0].size();
    for (const auto& v : per_dataset) {
        if (v.size() != m) data_error("macro_average: aggregate vectors have unequal lengths");
    }
    std::vector<double> out(m, 0.0);
    for (const auto& v : per_dataset) {
        for (size_t j = 0; j < m; ++j) out[j] += v[j];
    }
    for (double& x : out) x /= static_cast<double>(per_dataset.size());
    return out;
}

} // namespace relseg
