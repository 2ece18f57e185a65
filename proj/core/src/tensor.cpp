#include "relseg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace relseg {

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << ",";
        os << shape_[i];
    }
    os << "]";
    return os.str();
}

void Tensor::validate_shape() const {
    if (shape_.empty() || shape_.size() > 4) {
        invariant_error("tensor rank must be 1..4, got " + std::to_string(shape_.size()));
    }
    for (int e : shape_) {
        if (e < 1) invariant_error("tensor extent must be >= 1, got " + std::to_string(e));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        data_error(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
}

#ifndef NDEBUG
void debug_check_finite(const Tensor& t, const char* op) {
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        if (!std::isfinite(t[i])) {
            invariant_error(std::string(op) + ": non-finite output at flat index " +
                            std::to_string(i));
        }
    }
}
#endif

Tensor conv2d(const Tensor& input, const Tensor& weights,
              const std::vector<float>& bias, Padding padding) {
    if (input.ndim() != 3) {
        data_error("conv2d: input must be [C,H,W], got " + input.shape_str());
    }
    if (weights.ndim() != 4) {
        data_error("conv2d: weights must be [C_out,C_in,k,k], got " + weights.shape_str());
    }
    const int c_in = input.extent(0), h = input.extent(1), w = input.extent(2);
    const int c_out = weights.extent(0), wc_in = weights.extent(1);
    const int kh = weights.extent(2), kw = weights.extent(3);
    if (kh != kw || kh % 2 == 0) {
        data_error("conv2d: kernel must be square with odd size, got " +
                   std::to_string(kh) + "x" + std::to_string(kw));
    }
    if (wc_in != c_in) {
        data_error("conv2d: weights expect " + std::to_string(wc_in) +
                   " input channels, input has " + std::to_string(c_in));
    }
    if (static_cast<int>(bias.size()) != c_out) {
        data_error("conv2d: bias length " + std::to_string(bias.size()) +
                   " != C_out " + std::to_string(c_out));
    }
    const int k = kh;
    const int r = k / 2;
    const int oh = (padding == Padding::Same) ? h : h - k + 1;
    const int ow = (padding == Padding::Same) ? w : w - k + 1;
    if (oh < 1 || ow < 1) {
        data_error("conv2d: kernel " + std::to_string(k) + " too large for input " +
                   input.shape_str() + " with valid padding");
    }
    const int y0 = (padding == Padding::Same) ? -r : 0;
    const int x0 = (padding == Padding::Same) ? -r : 0;

    Tensor out({c_out, oh, ow});
    for (int o = 0; o < c_out; ++o) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double acc = bias[static_cast<size_t>(o)];
                for (int c = 0; c < c_in; ++c) {
                    for (int p = 0; p < k; ++p) {
                        const int iy = y0 + oy + p;
                        if (iy < 0 || iy >= h) continue; // zero padding
                        for (int q = 0; q < k; ++q) {
                            const int ix = x0 + ox + q;
                            if (ix < 0 || ix >= w) continue;
                            acc += static_cast<double>(input.at(c, iy, ix)) *
                                   static_cast<double>(weights.at(o, c, p, q));
                        }
                    }
                }
                out.at(o, oy, ox) = static_cast<float>(acc);
            }
        }
    }
    debug_check_finite(out, "conv2d");
    return out;
}

double sigmoid_d(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus_d(double x) {
    if (x > 30.0) return x; // exp would overflow the useful range; softplus(x) ~ x
    return std::log1p(std::exp(x));
}

template <typename F>
static Tensor elementwise(const Tensor& t, F f, const char* op) {
    Tensor out(t.shape());
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        out[i] = static_cast<float>(f(static_cast<double>(t[i])));
    }
    debug_check_finite(out, op);
    return out;
}

Tensor sigmoid(const Tensor& t) { return elementwise(t, sigmoid_d, "sigmoid"); }
Tensor softplus(const Tensor& t) { return elementwise(t, softplus_d, "softplus"); }
Tensor relu(const Tensor& t) {
    return elementwise(t, [](double x) { return x > 0.0 ? x : 0.0; }, "relu");
}

static int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

Tensor sobel_mag(const Tensor& m) {
    if (m.ndim() != 2) data_error("sobel_mag: expected [H,W], got " + m.shape_str());
    const int h = m.extent(0), w = m.extent(1);
    static const int gx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
    static const int gy[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
    Tensor out({h, w});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double sx = 0.0, sy = 0.0;
            for (int p = -1; p <= 1; ++p) {
                const int yy = clampi(y + p, 0, h - 1);
                for (int q = -1; q <= 1; ++q) {
                    const int xx = clampi(x + q, 0, w - 1);
                    const double v = m.at(yy, xx);
                    sx += gx[p + 1][q + 1] * v;
                    sy += gy[p + 1][q + 1] * v;
                }
            }
            const double mag = std::sqrt(sx * sx + sy * sy);
            out.at(y, x) = static_cast<float>(std::min(1.0, std::max(0.0, mag)));
        }
    }
    debug_check_finite(out, "sobel_mag");
    return out;
}

Tensor maxpool_same(const Tensor& m, int k) {
    if (m.ndim() != 2) data_error("maxpool_same: expected [H,W], got " + m.shape_str());
    if (k < 1 || k % 2 == 0) data_error("maxpool_same: k must be odd and >= 1");
    const int h = m.extent(0), w = m.extent(1);
    const int r = k / 2;
    Tensor out({h, w});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            float best = m.at(clampi(y - r, 0, h - 1), clampi(x - r, 0, w - 1));
            for (int p = -r; p <= r; ++p) {
                const int yy = clampi(y + p, 0, h - 1);
                for (int q = -r; q <= r; ++q) {
                    best = std::max(best, m.at(yy, clampi(x + q, 0, w - 1)));
                }
            }
            out.at(y, x) = best;
        }
    }
    return out;
}

Tensor gaussian_blur(const Tensor& p, float sigma) {
    if (p.ndim() != 2) data_error("gaussian_blur: expected [H,W], got " + p.shape_str());
    if (sigma < 0.0f) data_error("gaussian_blur: sigma must be >= 0");
    if (sigma == 0.0f) return p; // skip rule: bit-identical passthrough

    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
    double ksum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
        kernel[static_cast<size_t>(i + radius)] = v;
        ksum += v;
    }
    for (double& v : kernel) v /= ksum;

    const int h = p.extent(0), w = p.extent(1);
    // horizontal pass in double, then vertical
    std::vector<double> tmp(static_cast<size_t>(h) * w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                acc += kernel[static_cast<size_t>(i + radius)] *
                       static_cast<double>(p.at(y, clampi(x + i, 0, w - 1)));
            }
            tmp[static_cast<size_t>(y) * w + x] = acc;
        }
    }
    Tensor out({h, w});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                acc += kernel[static_cast<size_t>(i + radius)] *
                       tmp[static_cast<size_t>(clampi(y + i, 0, h - 1)) * w + x];
            }
            out.at(y, x) = static_cast<float>(acc);
        }
    }
    debug_check_finite(out, "gaussian_blur");
    return out;
}

Tensor flip(const Tensor& t, FlipMode mode) {
    if (t.ndim() < 2) data_error("flip: tensor must have at least 2 dims");
    const int w = t.extent(t.ndim() - 1);
    const int h = t.extent(t.ndim() - 2);
    const std::int64_t planes = t.numel() / (static_cast<std::int64_t>(h) * w);
    const bool fh = (mode == FlipMode::H || mode == FlipMode::HV);
    const bool fv = (mode == FlipMode::V || mode == FlipMode::HV);

    Tensor out(t.shape());
    for (std::int64_t pl = 0; pl < planes; ++pl) {
        const float* src = t.data() + pl * h * w;
        float* dst = out.data() + pl * h * w;
        for (int y = 0; y < h; ++y) {
            const int sy = fv ? h - 1 - y : y;
            for (int x = 0; x < w; ++x) {
                const int sx = fh ? w - 1 - x : x;
                dst[static_cast<std::int64_t>(y) * w + x] = src[static_cast<std::int64_t>(sy) * w + sx];
            }
        }
    }
    return out;
}

double sum(const Tensor& t) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < t.numel(); ++i) acc += t[i];
    return acc;
}

double mean(const Tensor& t) { return sum(t) / static_cast<double>(t.numel()); }

} // namespace relseg
