#include "relseg/inference.hpp"

#include <queue>

namespace relseg {

std::string tta_mode_name(TtaMode mode) {
    switch (mode) {
        case TtaMode::None: return "none";
        case TtaMode::Flip2: return "flip2";
        case TtaMode::Flip4: return "flip4";
    }
    return "none";
}

TtaMode tta_mode_from_name(const std::string& name) {
    if (name == "none") return TtaMode::None;
    if (name == "flip2") return TtaMode::Flip2;
    if (name == "flip4") return TtaMode::Flip4;
    config_error("unknown TTA mode '" + name + "' (want none|flip2|flip4)");
}

void OperatingPoint::validate() const {
    if (!(tau > 0.0f && tau < 1.0f)) {
        config_error("operating point: tau must be in (0,1), got " + std::to_string(tau));
    }
    if (sigma < 0.0f) config_error("operating point: sigma must be >= 0");
}

OperatingPoint raw_p0() {
    return OperatingPoint{0.30f, 0.0f, TtaMode::None, false, false};
}

Tensor tta_average(const ProbFn& prob_fn, const Tensor& image, TtaMode mode) {
    if (mode == TtaMode::None) return prob_fn(image);

    std::vector<FlipMode> views = {FlipMode::H};
    if (mode == TtaMode::Flip4) {
        views.push_back(FlipMode::V);
        views.push_back(FlipMode::HV);
    }

    auto forward_view = [&](const Tensor& view_image, const char* tag) {
        try {
            return prob_fn(view_image);
        } catch (const Error&) {
            throw;
        } catch (const std::exception& e) {
            data_error("tta_average: prob source failed on view '" + std::string(tag) +
                       "': " + e.what());
        }
    };

    Tensor first = forward_view(image, "id");
    std::vector<double> acc(static_cast<size_t>(first.numel()));
    for (std::int64_t i = 0; i < first.numel(); ++i) acc[static_cast<size_t>(i)] = first[i];

    for (FlipMode v : views) {
        const char* tag = v == FlipMode::H ? "h" : v == FlipMode::V ? "v" : "hv";
        const Tensor back = flip(forward_view(flip(image, v), tag), v);
        require_same_shape(first, back, "tta_average");
        for (std::int64_t i = 0; i < back.numel(); ++i) acc[static_cast<size_t>(i)] += back[i];
    }
    const double inv = 1.0 / (1.0 + static_cast<double>(views.size()));
    Tensor avg(first.shape());
    for (std::int64_t i = 0; i < avg.numel(); ++i) {
        avg[i] = static_cast<float>(acc[static_cast<size_t>(i)] * inv);
    }
    return avg;
}

Tensor threshold(const Tensor& prob, float tau) {
    Tensor mask(prob.shape());
    for (std::int64_t i = 0; i < prob.numel(); ++i) {
        mask[i] = prob[i] > tau ? 1.0f : 0.0f;
    }
    return mask;
}

Tensor fill_holes(const Tensor& mask) {
    if (mask.ndim() != 2) data_error("fill_holes: expected [H,W]");
    const int h = mask.extent(0), w = mask.extent(1);
    // flood-fill background from the border, 4-connected
    std::vector<char> outside(static_cast<size_t>(h) * w, 0);
    std::queue<int> queue;
    auto push = [&](int y, int x) {
        const std::int64_t i = static_cast<std::int64_t>(y) * w + x;
        if (!outside[static_cast<size_t>(i)] && mask[i] <= 0.5f) {
            outside[static_cast<size_t>(i)] = 1;
            queue.push(static_cast<int>(i));
        }
    };
    for (int x = 0; x < w; ++x) {
        push(0, x);
        push(h - 1, x);
    }
    for (int y = 0; y < h; ++y) {
        push(y, 0);
        push(y, w - 1);
    }
    while (!queue.empty()) {
        const int i = queue.front();
        queue.pop();
        const int y = i / w, x = i % w;
        if (y > 0) push(y - 1, x);
        if (y + 1 < h) push(y + 1, x);
        if (x > 0) push(y, x - 1);
        if (x + 1 < w) push(y, x + 1);
    }
    Tensor out({h, w});
    for (std::int64_t i = 0; i < out.numel(); ++i) {
        out[i] = (mask[i] > 0.5f || !outside[static_cast<size_t>(i)]) ? 1.0f : 0.0f;
    }
    return out;
}

Tensor keep_largest(const Tensor& mask) {
    if (mask.ndim() != 2) data_error("keep_largest: expected [H,W]");
    const int h = mask.extent(0), w = mask.extent(1);
    std::vector<int> label(static_cast<size_t>(h) * w, -1);
    int best_label = -1;
    std::int64_t best_area = 0;
    int next = 0;
    std::vector<int> stack;
    for (std::int64_t seed = 0; seed < mask.numel(); ++seed) {
        if (mask[seed] <= 0.5f || label[static_cast<size_t>(seed)] >= 0) continue;
        std::int64_t area = 0;
        stack.push_back(static_cast<int>(seed));
        label[static_cast<size_t>(seed)] = next;
        while (!stack.empty()) {
            const int i = stack.back();
            stack.pop_back();
            ++area;
            const int y = i / w, x = i % w;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dy == 0 && dx == 0) continue;
                    const int yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                    const std::int64_t j = static_cast<std::int64_t>(yy) * w + xx;
                    if (mask[j] > 0.5f && label[static_cast<size_t>(j)] < 0) {
                        label[static_cast<size_t>(j)] = next;
                        stack.push_back(static_cast<int>(j));
                    }
                }
            }
        }
        // strict > keeps the first component in row-major scan on ties
        if (area > best_area) {
            best_area = area;
            best_label = next;
        }
        ++next;
    }
    Tensor out({h, w});
    if (best_label < 0) return out; // empty in, empty out
    for (std::int64_t i = 0; i < out.numel(); ++i) {
        out[i] = label[static_cast<size_t>(i)] == best_label ? 1.0f : 0.0f;
    }
    return out;
}

Tensor dilate_mask(const Tensor& mask, int iterations) {
    if (iterations < 0) config_error("dilate_mask: iterations must be >= 0");
    Tensor out = mask;
    for (int it = 0; it < iterations; ++it) {
        const Tensor cur = out;
        const int h = cur.extent(0), w = cur.extent(1);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                float v = 0.0f;
                for (int dy = -1; dy <= 1 && v < 1.0f; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int yy = y + dy, xx = x + dx;
                        if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                        if (cur.at(yy, xx) > 0.5f) {
                            v = 1.0f;
                            break;
                        }
                    }
                }
                out.at(y, x) = v;
            }
        }
    }
    return out;
}

PipelineTrace run_pipeline_on_prob(const Tensor& prob, const OperatingPoint& op) {
    op.validate();
    PipelineTrace trace;
    trace.averaged = prob;
    trace.smoothed = op.sigma > 0.0f ? gaussian_blur(prob, op.sigma) : prob;
    trace.thresholded = threshold(trace.smoothed, op.tau);
    trace.after_fill = op.fill_holes ? fill_holes(trace.thresholded) : trace.thresholded;
    trace.final_mask = op.keep_largest ? keep_largest(trace.after_fill) : trace.after_fill;
    return trace;
}

PipelineTrace run_pipeline(const ProbFn& prob_source, const Tensor& image,
                           const OperatingPoint& op) {
    op.validate();
    PipelineTrace trace = run_pipeline_on_prob(tta_average(prob_source, image, op.tta), op);
    return trace;
}

ProbFn identity_prob_source() {
    return [](const Tensor& image) { return image; };
}

} // namespace relseg
