#pragma once

// Batched 1D softmax attention over strided slices of a tensor, with the
// optional relative-position terms used by the RPE variants:
//
//   logit(i, j) = q_i . k_j + q_i . A[r] + k_j . B[r]
//   out_i       = sum_j softmax_j(logit(i, .)) * (v_j + C[r])
//   r           = clip(j - i, k_clip) + k_clip
//
// A, B and C are [2*k_clip + 1, channels] tables; any of them may be absent.
// No 1/sqrt(d) logit scaling is applied.

#include "haaseg/tensor.hpp"

#include <cstddef>

namespace haaseg {

enum class Axis { Height, Width };

/// Addressing of independent 1D problems inside a flat buffer. Element
/// (slice s, position i, channel c) lives at
/// s * slice_stride + i * position_stride + c * channel_stride.
struct SliceLayout {
    std::size_t slices = 1;
    std::size_t length = 1;
    std::size_t channels = 1;
    std::size_t slice_stride = 0;
    std::size_t position_stride = 1;
    std::size_t channel_stride = 1;

    /// Attention along `axis` of a [C, H, W] map.
    static SliceLayout axial(const Shape& chw, Axis axis);
    /// One sequence stored as [L, d].
    static SliceLayout sequence(const Shape& ld);
};

struct RelativeTerms {
    Tensor query_bias; // A: dotted with q_i
    Tensor key_bias;   // B: dotted with k_j
    Tensor value_bias; // C: added to v_j
    std::size_t k_clip = 0;
};

Tensor sliced_attention(const Tensor& q, const Tensor& k, const Tensor& v, const SliceLayout& layout,
                        const RelativeTerms& terms = {});

} // namespace haaseg
