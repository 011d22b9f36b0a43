#pragma once

// Position information for axial attention: fixed sinusoidal tables (APE),
// learnable tables (LPE), their sum (ADPE), and clipped relative biases (RPE).

#include "haaseg/attention_kernel.hpp"
#include "haaseg/rng.hpp"
#include "haaseg/tensor.hpp"

#include <array>
#include <cstddef>
#include <string>
#include <string_view>

namespace haaseg {

enum class EncodingStrategy { None, LPE, APE, RPE, APE_RPE, LPE_RPE, LPE_APE };

inline constexpr std::array<EncodingStrategy, 7> kAllEncodings = {
    EncodingStrategy::None,    EncodingStrategy::LPE,     EncodingStrategy::APE,    EncodingStrategy::RPE,
    EncodingStrategy::APE_RPE, EncodingStrategy::LPE_RPE, EncodingStrategy::LPE_APE,
};

/// Config spelling: "None", "LPE", "APE", "RPE", "APE+RPE", "LPE+RPE", "LPE+APE".
std::string_view to_string(EncodingStrategy s);
/// Throws ConfigError listing the valid spellings.
EncodingStrategy parse_encoding(std::string_view name);

bool uses_learnable_table(EncodingStrategy s);
bool uses_sinusoidal_table(EncodingStrategy s);
/// RPE: key/value biases inside the logits and values.
bool uses_relative_bias(EncodingStrategy s);
/// APE+RPE / LPE+RPE: query/key/value bias terms combined with an absolute table.
bool uses_bias_terms(EncodingStrategy s);

struct SinusoidalTable {
    Tensor table; // [L, d], never requires grad
};

struct LearnableTable {
    Tensor table; // [L, d], requires grad
};

/// Tables are [2 * k_clip + 1, d]. Only the tensors a strategy needs are defined.
struct RelativeBiasParams {
    std::size_t k_clip = 8;
    Tensor key_bias;   // p^k
    Tensor value_bias; // p^v
    Tensor query_term; // r^q
    Tensor key_term;   // r^k
    Tensor value_term; // r^v
};

/// entry (i, 2t) = sin(i / 10000^(2t/d)), entry (i, 2t+1) = cos(i / 10000^(2t/d)).
SinusoidalTable build_sinusoidal(std::size_t length, std::size_t width);

LearnableTable make_learnable_table(std::size_t length, std::size_t width, Rng& rng, double stddev = 0.02);

RelativeBiasParams make_relative_params(EncodingStrategy s, std::size_t width, std::size_t k_clip, Rng& rng,
                                        double stddev = 0.02);

/// max(-k, min(k, x))
long clip_distance(long x, long k);

/// x + table, both [L, d].
Tensor apply_absolute(const Tensor& x, const Tensor& table);

/// f + pl + ps, the adaptive position embedding.
Tensor apply_adpe(const Tensor& f, const LearnableTable& pl, const SinusoidalTable& ps);

/// Adds a [L, C] table to every slice of a [C, H, W] map along `axis`
/// (L == H for Height, L == W for Width).
Tensor add_axis_table(const Tensor& x, const Tensor& table, Axis axis);

/// Relative-position attention on projected [L, d] sequences:
/// logits q_i . (k_j + p^k_r), values v_j + p^v_r.
Tensor rpe_attention_1d(const Tensor& q, const Tensor& k, const Tensor& v, const RelativeBiasParams& params);

/// Absolute table then bias-term attention on raw [L, d_in] input:
/// logits q_i . k_j + q_i . r^q_r + k_j . r^k_r, values v_j + r^v_r.
/// Projection matrices are [d_out, d_in]. `table` may be undefined.
Tensor combined_ape_rpe_attention_1d(const Tensor& x, const Tensor& table, const RelativeBiasParams& params,
                                     const Tensor& wq, const Tensor& wk, const Tensor& wv);

} // namespace haaseg
