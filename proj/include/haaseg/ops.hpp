#pragma once

// Differentiable operations. Every op records its backward pass on the
// thread's current tape when any input requires a gradient.
//
// Image-like tensors are laid out [C, H, W]; there is no batch axis.

#include "haaseg/tensor.hpp"

#include <cstddef>
#include <vector>

namespace haaseg::ops {

/// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);

/// Softmax over the last axis, max-subtracted.
Tensor softmax_lastdim(const Tensor& x);

/// Cross-correlation with zero padding. `bias` may be undefined.
/// Output extent (H + 2p - k) / s + 1 must be exact.
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::size_t stride, std::size_t padding);

/// Window mean; padded cells are excluded from the divisor.
Tensor avg_pool2d(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t padding);

/// Corner-aligned bilinear upsampling by an integer factor.
Tensor bilinear_upsample(const Tensor& x, std::size_t factor);

/// Per-channel standardization over H*W followed by gamma/beta affine.
/// Stands in for batch norm at batch size 1.
Tensor channel_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

Tensor relu(const Tensor& x);

/// While alive, records the smallest |input| that relu sees on this thread.
/// Gradient checks use it to keep finite differences clear of the kink.
class ReluMarginMonitor {
public:
    ReluMarginMonitor();
    ~ReluMarginMonitor();
    ReluMarginMonitor(const ReluMarginMonitor&) = delete;
    ReluMarginMonitor& operator=(const ReluMarginMonitor&) = delete;

    double min_margin() const { return min_margin_; }
    void observe(double v);

private:
    ReluMarginMonitor* previous_;
    double min_margin_;
};
Tensor sigmoid(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// x * c for a constant c (not differentiated).
Tensor scale(const Tensor& x, double c);
/// x * s where s is a learnable one-element tensor.
Tensor mul_scalar(const Tensor& x, const Tensor& s);

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);
Tensor reshape(const Tensor& x, Shape shape);

/// Sum of all elements, shape [1].
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// 1x1 projection over channels: weight [C_out, C_in] applied to x [C_in, H, W].
Tensor project_channels(const Tensor& x, const Tensor& weight);

} // namespace haaseg::ops
