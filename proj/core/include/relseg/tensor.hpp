#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "relseg/errors.hpp"

namespace relseg {

/// Dense row-major float tensor with 1-4 dimensions.
///
/// Dimension conventions used throughout the library:
///   [W]            flat vectors
///   [H,W]          single-channel maps (masks, probabilities, logits)
///   [C,H,W]        channel-major feature maps
///   [K,C,H,W]      convolution weights (K output channels)
///
/// Storage is 32-bit float; reductions and convolutions accumulate in
/// 64-bit internally.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape, float fill = 0.0f)
        : shape_(std::move(shape)) {
        validate_shape();
        data_.assign(static_cast<size_t>(numel()), fill);
    }

    Tensor(std::vector<int> shape, std::vector<float> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        validate_shape();
        if (static_cast<std::int64_t>(data_.size()) != numel()) {
            invariant_error("tensor data length " + std::to_string(data_.size()) +
                            " does not match shape product " + std::to_string(numel()));
        }
    }

    int ndim() const { return static_cast<int>(shape_.size()); }
    const std::vector<int>& shape() const { return shape_; }
    int extent(int d) const { return shape_[static_cast<size_t>(d)]; }

    std::int64_t numel() const {
        std::int64_t n = 1;
        for (int e : shape_) n *= e;
        return shape_.empty() ? 0 : n;
    }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::vector<float>& vec() { return data_; }
    const std::vector<float>& vec() const { return data_; }

    float operator[](std::int64_t i) const { return data_[static_cast<size_t>(i)]; }
    float& operator[](std::int64_t i) { return data_[static_cast<size_t>(i)]; }

    // 2-D [H,W]
    float at(int y, int x) const { return data_[static_cast<size_t>(y) * shape_[1] + x]; }
    float& at(int y, int x) { return data_[static_cast<size_t>(y) * shape_[1] + x]; }

    // 3-D [C,H,W]
    float at(int c, int y, int x) const {
        return data_[(static_cast<size_t>(c) * shape_[1] + y) * shape_[2] + x];
    }
    float& at(int c, int y, int x) {
        return data_[(static_cast<size_t>(c) * shape_[1] + y) * shape_[2] + x];
    }

    // 4-D [K,C,H,W]
    float at(int k, int c, int y, int x) const {
        return data_[((static_cast<size_t>(k) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
    }
    float& at(int k, int c, int y, int x) {
        return data_[((static_cast<size_t>(k) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    std::string shape_str() const;

private:
    void validate_shape() const;

    std::vector<int> shape_;
    std::vector<float> data_;
};

enum class Padding { Same, Valid };
enum class FlipMode { H, V, HV };

/// Direct (non-FFT) 2-D cross-correlation, stride 1.
/// input [C_in,H,W], weights [C_out,C_in,k,k] with odd k, bias length C_out.
/// Padding::Same zero-pads, Padding::Valid shrinks to H-k+1 x W-k+1.
Tensor conv2d(const Tensor& input, const Tensor& weights,
              const std::vector<float>& bias, Padding padding);

Tensor sigmoid(const Tensor& t);
Tensor softplus(const Tensor& t);
Tensor relu(const Tensor& t);

double sigmoid_d(double x);
double softplus_d(double x);

/// Sobel gradient magnitude of a [H,W] map in [0,1], replicate-padded,
/// clamped back to [0,1].
Tensor sobel_mag(const Tensor& m);

/// k x k window maximum with replicate padding, output shape unchanged.
Tensor maxpool_same(const Tensor& m, int k);

/// Separable Gaussian blur, radius ceil(3*sigma), kernel renormalized,
/// replicate padding. sigma == 0 returns the input bit-identically.
Tensor gaussian_blur(const Tensor& p, float sigma);

/// Flip the last two dimensions (H for V, W for H). Works on 2-D..4-D.
Tensor flip(const Tensor& t, FlipMode mode);

/// Mean of all elements, accumulated in double.
double mean(const Tensor& t);
double sum(const Tensor& t);

void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

#ifndef NDEBUG
void debug_check_finite(const Tensor& t, const char* op);
#else
inline void debug_check_finite(const Tensor&, const char*) {}
#endif

} // namespace relseg
