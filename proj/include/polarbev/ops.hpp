#pragma once

#include <cstdint>
#include <vector>

#include "polarbev/kernels.hpp"
#include "polarbev/tape.hpp"
#include "polarbev/tensor.hpp"

namespace polarbev::tc {

using kernels::Pad;

// Elementwise and shape ops ------------------------------------------------

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

// scale * x + shift with compile-time constants (not differentiable w.r.t. them)
template <typename T>
Tensor<T> affine(Tape<T>& tape, const Tensor<T>& x, T scale, T shift);

template <typename T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& x);

template <typename T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& x);

// Sum of all elements -> shape [1].
template <typename T>
Tensor<T> sum_reduce(Tape<T>& tape, const Tensor<T>& x);

// Dense linear algebra ------------------------------------------------------

template <typename T>
Tensor<T> matmul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

// x[n x m] + row[m] broadcast over rows (the MLP bias).
template <typename T>
Tensor<T> add_row_broadcast(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& row);

// Broadcast tables onto a [rows x cols x c] tensor.
template <typename T>
Tensor<T> broadcast_add_rows(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& table); // table[rows x c]

template <typename T>
Tensor<T> broadcast_add_cols(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& table); // table[cols x c]

// x[c x h x w] + b[c] broadcast over the spatial plane.
template <typename T>
Tensor<T> add_channel_bias(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& b);

// Convolution and sampling ---------------------------------------------------

// Cross-correlation, stride 1, odd kernel extents, shape-preserving padding
// of (k-1)/2 per axis with the given mode.
template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& kernel, Pad pad_h, Pad pad_w);

// feature[c x h x w], points[n x 2] (u along width, v along height), -> [n x c].
// Differentiable w.r.t. feature values; point coordinates are data.
template <typename T>
Tensor<T> bilinear_sample(Tape<T>& tape, const Tensor<T>& feature, const Tensor<T>& points);

// Normalization ---------------------------------------------------------------

enum class NormScheme {
    per_sample, // stats over non-channel axes of this sample, every call
    batch       // stats from the sample while training, running averages at eval
};

template <typename T>
struct NormState {
    std::vector<T> running_mean;
    std::vector<T> running_var;
    bool initialized = false;
};

// x[c x h x w] normalized per channel, then scaled/shifted by gain[c], bias[c].
// `state` may be null for the per_sample scheme.
template <typename T>
Tensor<T> normalize_channels(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gain,
                             const Tensor<T>& bias, NormScheme scheme, NormState<T>* state,
                             bool training, T eps, T momentum = T(0.1));

// Pooling / resampling / layout ------------------------------------------------

template <typename T>
Tensor<T> avg_pool2(Tape<T>& tape, const Tensor<T>& x); // [c x h x w] -> [c x h/2 x w/2]

template <typename T>
Tensor<T> upsample2_nearest(Tape<T>& tape, const Tensor<T>& x); // [c x h x w] -> [c x 2h x 2w]

template <typename T>
Tensor<T> concat_channels(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

// [h x w x c] -> [c x h x w] and back.
template <typename T>
Tensor<T> to_chw(Tape<T>& tape, const Tensor<T>& x);

template <typename T>
Tensor<T> to_hwc(Tape<T>& tape, const Tensor<T>& x);

// Losses -------------------------------------------------------------------------

// logits[2 x h x w] against labels[h*w] in {0, 1}; mean negative log-likelihood.
template <typename T>
Tensor<T> cross_entropy_2class(Tape<T>& tape, const Tensor<T>& logits, const std::vector<std::uint8_t>& labels);

// Mean squared error against a constant target of identical shape.
template <typename T>
Tensor<T> mse(Tape<T>& tape, const Tensor<T>& pred, const Tensor<T>& target);

// pred[c x h x w], target same shape, mask[h*w]; sum of absolute differences
// over masked cells divided by max(1, #masked). Subgradient 0 at zero.
template <typename T>
Tensor<T> masked_l1(Tape<T>& tape, const Tensor<T>& pred, const Tensor<T>& target,
                    const std::vector<std::uint8_t>& mask);

} // namespace polarbev::tc
