#include "relseg/pseudo.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace relseg {

namespace {

constexpr double kEps = 1e-8;

std::vector<float> pixel_vec(const Tensor& features, int c_count, int px) {
    std::vector<float> v(static_cast<size_t>(c_count));
    const std::int64_t plane = features.numel() / c_count;
    for (int c = 0; c < c_count; ++c) {
        v[static_cast<size_t>(c)] = features[static_cast<std::int64_t>(c) * plane + px];
    }
    return v;
}

double sq_dist(const std::vector<float>& a, const std::vector<float>& b) {
    double d = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double diff = static_cast<double>(a[i]) - b[i];
        d += diff * diff;
    }
    return d;
}

} // namespace

KMeansResult kmeans2_binarize(const Tensor& features, std::uint64_t seed) {
    if (features.ndim() != 3) {
        data_error("kmeans2_binarize: expected [C,H,W], got " + features.shape_str());
    }
    const int c = features.extent(0), h = features.extent(1), w = features.extent(2);
    const int n = h * w;
    if (n < 2) data_error("kmeans2_binarize: need at least 2 pixels");

    // degenerate input: every pixel identical
    bool degenerate = true;
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    for (int ch = 0; ch < c && degenerate; ++ch) {
        const float v0 = features[ch * plane];
        for (std::int64_t i = 1; i < plane; ++i) {
            if (features[ch * plane + i] != v0) {
                degenerate = false;
                break;
            }
        }
    }
    if (degenerate) data_error("kmeans2_binarize: degenerate features (all pixels identical)");

    std::mt19937 rng(static_cast<std::uint32_t>(seed));

    // k-means++ for k=2: first center uniform, second weighted by squared distance
    std::vector<std::vector<float>> centroids(2);
    const int first = static_cast<int>(rng() % static_cast<std::uint32_t>(n));
    centroids[0] = pixel_vec(features, c, first);

    std::vector<double> d2(static_cast<size_t>(n));
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        d2[static_cast<size_t>(i)] = sq_dist(pixel_vec(features, c, i), centroids[0]);
        total += d2[static_cast<size_t>(i)];
    }
    // total > 0 because the input is not degenerate
    const double u = (static_cast<double>(rng()) / 4294967296.0) * total;
    double cum = 0.0;
    int second = n - 1;
    for (int i = 0; i < n; ++i) {
        cum += d2[static_cast<size_t>(i)];
        if (u < cum) {
            second = i;
            break;
        }
    }
    centroids[1] = pixel_vec(features, c, second);

    std::vector<int> assign(static_cast<size_t>(n), 0);
    int iters = 0;
    for (; iters < 100; ++iters) {
        for (int i = 0; i < n; ++i) {
            const auto v = pixel_vec(features, c, i);
            assign[static_cast<size_t>(i)] = sq_dist(v, centroids[1]) < sq_dist(v, centroids[0]) ? 1 : 0;
        }
        std::vector<std::vector<double>> sums(2, std::vector<double>(static_cast<size_t>(c), 0.0));
        int counts[2] = {0, 0};
        for (int i = 0; i < n; ++i) {
            const int a = assign[static_cast<size_t>(i)];
            ++counts[a];
            for (int ch = 0; ch < c; ++ch) {
                sums[static_cast<size_t>(a)][static_cast<size_t>(ch)] +=
                    features[ch * plane + i];
            }
        }
        double shift = 0.0;
        for (int k = 0; k < 2; ++k) {
            if (counts[k] == 0) continue; // empty cluster keeps its centroid
            std::vector<float> next(static_cast<size_t>(c));
            for (int ch = 0; ch < c; ++ch) {
                next[static_cast<size_t>(ch)] =
                    static_cast<float>(sums[static_cast<size_t>(k)][static_cast<size_t>(ch)] / counts[k]);
            }
            shift = std::max(shift, std::sqrt(sq_dist(next, centroids[static_cast<size_t>(k)])));
            centroids[static_cast<size_t>(k)] = std::move(next);
        }
        if (shift < 1e-4) {
            ++iters;
            break;
        }
    }
    // final assignment against converged centroids
    Tensor out({h, w});
    for (int i = 0; i < n; ++i) {
        const auto v = pixel_vec(features, c, i);
        out[i] = sq_dist(v, centroids[1]) < sq_dist(v, centroids[0]) ? 1.0f : 0.0f;
    }
    return KMeansResult{std::move(out), std::move(centroids), iters};
}

Tensor lesion_cluster_select(const Tensor& assign, const Tensor& image_gray,
                             const ClusterSelectConfig& cfg) {
    require_same_shape(assign, image_gray, "lesion_cluster_select");
    const int h = assign.extent(0), w = assign.extent(1);
    const std::int64_t n = assign.numel();

    double gmin = image_gray[0], gmax = image_gray[0];
    for (std::int64_t i = 0; i < n; ++i) {
        gmin = std::min<double>(gmin, image_gray[i]);
        gmax = std::max<double>(gmax, image_gray[i]);
    }
    const double grange = gmax - gmin;

    double sum_gray[2] = {0, 0};
    double sum_y[2] = {0, 0}, sum_x[2] = {0, 0};
    std::int64_t count[2] = {0, 0};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int a = assign.at(y, x) > 0.5f ? 1 : 0;
            ++count[a];
            sum_gray[a] += image_gray.at(y, x);
            sum_y[a] += y;
            sum_x[a] += x;
        }
    }
    if (count[0] == 0 || count[1] == 0) {
        data_error("lesion_cluster_select: one cluster is empty");
    }

    const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
    const double half_diag = std::sqrt(cy * cy + cx * cx);
    double score[2], darkness[2];
    bool in_band[2];
    for (int k = 0; k < 2; ++k) {
        const double mean_gray = sum_gray[k] / count[k];
        const double norm_gray = grange > 0.0 ? (mean_gray - gmin) / grange : 0.5;
        darkness[k] = 1.0 - norm_gray;
        const double my = sum_y[k] / count[k], mx = sum_x[k] / count[k];
        const double dist = std::sqrt((my - cy) * (my - cy) + (mx - cx) * (mx - cx));
        const double centrality = 1.0 - (half_diag > 0.0 ? dist / half_diag : 0.0);
        const double area_frac = static_cast<double>(count[k]) / n;
        in_band[k] = area_frac >= cfg.area_lo && area_frac <= cfg.area_hi;
        score[k] = cfg.w_darkness * darkness[k] + cfg.w_centrality * centrality +
                   cfg.w_area * (in_band[k] ? 1.0 : 0.0);
    }

    // a plausible lesion area beats an implausible one outright; the
    // weighted score only arbitrates when the band cue cannot
    int lesion;
    if (in_band[0] != in_band[1]) {
        lesion = in_band[1] ? 1 : 0;
    } else if (score[0] == score[1]) {
        lesion = darkness[1] > darkness[0] ? 1 : 0; // tie: darker cluster wins
    } else {
        lesion = score[1] > score[0] ? 1 : 0;
    }

    Tensor out({h, w});
    for (std::int64_t i = 0; i < n; ++i) {
        const int a = assign[i] > 0.5f ? 1 : 0;
        out[i] = (a == lesion) ? 1.0f : 0.0f;
    }
    return out;
}

int otsu_threshold_bin(const Tensor& heat) {
    if (heat.ndim() != 2) data_error("otsu_binarize: expected [H,W], got " + heat.shape_str());
    const std::int64_t n = heat.numel();
    double lo = heat[0], hi = heat[0];
    for (std::int64_t i = 0; i < n; ++i) {
        if (!std::isfinite(heat[i])) data_error("otsu_binarize: non-finite input");
        lo = std::min<double>(lo, heat[i]);
        hi = std::max<double>(hi, heat[i]);
    }
    if (hi <= lo) data_error("otsu_binarize: constant map, no threshold exists");

    // 256-bin histogram of the min-max rescaled values
    std::vector<std::int64_t> hist(256, 0);
    for (std::int64_t i = 0; i < n; ++i) {
        const double v = (heat[i] - lo) / (hi - lo);
        const int b = std::min(255, static_cast<int>(v * 256.0));
        ++hist[static_cast<size_t>(b)];
    }

    double total_mean = 0.0;
    for (int b = 0; b < 256; ++b) total_mean += b * static_cast<double>(hist[static_cast<size_t>(b)]);
    total_mean /= static_cast<double>(n);

    // maximize between-class variance; ties resolve to the lowest threshold
    int best_t = 0;
    double best_var = -1.0;
    double w0 = 0.0, sum0 = 0.0;
    for (int t = 0; t < 255; ++t) {
        w0 += static_cast<double>(hist[static_cast<size_t>(t)]) / n;
        sum0 += t * static_cast<double>(hist[static_cast<size_t>(t)]) / n;
        const double w1 = 1.0 - w0;
        if (w0 <= 0.0 || w1 <= 0.0) continue;
        const double mu0 = sum0 / w0;
        const double mu1 = (total_mean - sum0) / w1;
        const double var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (var > best_var) {
            best_var = var;
            best_t = t;
        }
    }
    return best_t;
}

Tensor otsu_binarize(const Tensor& heat) {
    const int t = otsu_threshold_bin(heat);
    const std::int64_t n = heat.numel();
    double lo = heat[0], hi = heat[0];
    for (std::int64_t i = 0; i < n; ++i) {
        lo = std::min<double>(lo, heat[i]);
        hi = std::max<double>(hi, heat[i]);
    }
    Tensor out(heat.shape());
    for (std::int64_t i = 0; i < n; ++i) {
        const double v = (heat[i] - lo) / (hi - lo);
        const int b = std::min(255, static_cast<int>(v * 256.0));
        out[i] = b > t ? 1.0f : 0.0f;
    }
    return out;
}

// Border convention matches the usual morphology one: erosion treats
// outside-of-image as foreground, dilation as background, so a solid shape
// touching the border is preserved by opening.
Tensor binary_erode3x3(const Tensor& mask) {
    if (mask.ndim() != 2) data_error("binary_erode3x3: expected [H,W]");
    const int h = mask.extent(0), w = mask.extent(1);
    Tensor out({h, w});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            float v = 1.0f;
            for (int p = -1; p <= 1 && v > 0.0f; ++p) {
                for (int q = -1; q <= 1; ++q) {
                    const int yy = y + p, xx = x + q;
                    if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                    if (mask.at(yy, xx) <= 0.5f) {
                        v = 0.0f;
                        break;
                    }
                }
            }
            out.at(y, x) = v;
        }
    }
    return out;
}

Tensor binary_dilate3x3(const Tensor& mask) {
    if (mask.ndim() != 2) data_error("binary_dilate3x3: expected [H,W]");
    const int h = mask.extent(0), w = mask.extent(1);
    Tensor out({h, w});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            float v = 0.0f;
            for (int p = -1; p <= 1 && v < 1.0f; ++p) {
                for (int q = -1; q <= 1; ++q) {
                    const int yy = y + p, xx = x + q;
                    if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                    if (mask.at(yy, xx) > 0.5f) {
                        v = 1.0f;
                        break;
                    }
                }
            }
            out.at(y, x) = v;
        }
    }
    return out;
}

Tensor morph_refine(const Tensor& mask) {
    const Tensor opened = binary_dilate3x3(binary_erode3x3(mask));
    return binary_erode3x3(binary_dilate3x3(opened));
}

double consistency_from_consensus(double pc) {
    const double entropy = -pc * std::log(pc + kEps) - (1.0 - pc) * std::log(1.0 - pc + kEps);
    return 1.0 - entropy / std::log(2.0);
}

PseudoStack build_stack(std::vector<Tensor> labels) {
    if (labels.empty()) data_error("build_stack: need K >= 1 label maps");
    for (size_t i = 1; i < labels.size(); ++i) {
        require_same_shape(labels[0], labels[i], "build_stack");
    }
    const int k = static_cast<int>(labels.size());
    PseudoStack stack;
    stack.consensus = Tensor(labels[0].shape());
    stack.consistency = Tensor(labels[0].shape());
    for (std::int64_t i = 0; i < labels[0].numel(); ++i) {
        double votes = 0.0;
        for (const auto& l : labels) votes += l[i];
        const double pc = votes / k;
        stack.consensus[i] = static_cast<float>(pc);
        stack.consistency[i] = static_cast<float>(consistency_from_consensus(pc));
    }
    stack.labels = std::move(labels);
    debug_check_finite(stack.consistency, "build_stack");
    return stack;
}

} // namespace relseg
