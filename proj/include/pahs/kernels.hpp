#ifndef PAHS_KERNELS_HPP
#define PAHS_KERNELS_HPP

#include <cstdint>
#include <type_traits>
#include <string>

#include "pahs/tensor.hpp"

namespace pahs {

// Convolution layer description. Direct convs store weights as
// (out_channels, in_channels, k, k); transposed convs as
// (in_channels, out_channels, k, k), acting as the adjoint of the direct
// conv that shares the same storage.
struct ConvSpec {
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 3;
    int stride = 1;
    int padding = 1;
    bool transposed = false;
    bool bias = true;

    Dims4 weight_dims() const {
        if (transposed) {
            return Dims4{in_channels, out_channels, kernel, kernel};
        }
        return Dims4{out_channels, in_channels, kernel, kernel};
    }
    Dims4 bias_dims() const { return Dims4{1, out_channels, 1, 1}; }

    // Direct conv output size along one spatial axis.
    std::int64_t conv_out(std::int64_t in, const char* axis) const;
    // Transposed conv output size: stride * in. With kernel/padding chosen so
    // that 2*padding < kernel <= 2*padding + stride this is the exact inverse
    // of conv_out whenever stride divides the original extent.
    std::int64_t tconv_out(std::int64_t in) const { return stride * in; }

    std::string str() const;
};

// All kernels are pure, OpenMP-parallel over disjoint output elements, and
// accumulate reductions in 64-bit regardless of T. Summation order per output
// element is fixed, so results are bit-identical across thread counts.

template <typename T>
Tensor4<T> conv2d(const Tensor4<T>& x, const Tensor4<T>& w, const std::type_identity_t<Tensor4<T>>* bias, const ConvSpec& spec);

// out_h/out_w override the default stride*H result (used by autodiff where
// the primal input shape is known exactly).
template <typename T>
Tensor4<T> conv2d_transpose(const Tensor4<T>& x, const Tensor4<T>& w, const std::type_identity_t<Tensor4<T>>* bias, const ConvSpec& spec,
                            std::int64_t out_h = 0, std::int64_t out_w = 0);

template <typename T>
Tensor4<T> relu(const Tensor4<T>& x);

// Strictly inside (0, 1) for finite input.
template <typename T>
Tensor4<T> sigmoid(const Tensor4<T>& x);

template <typename T>
Tensor4<T> add(const Tensor4<T>& a, const Tensor4<T>& b);

template <typename T>
Tensor4<T> mul(const Tensor4<T>& a, const Tensor4<T>& b);

template <typename T>
Tensor4<T> scale(const Tensor4<T>& a, T factor);

template <typename T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b);

// Batched matrix product over the (b, c) leading axes: a is (N, C, R, K),
// b is (N, C, K, M) (or (N, C, M, K) with transpose_b).
template <typename T>
Tensor4<T> matmul(const Tensor4<T>& a, const Tensor4<T>& b, bool transpose_b = false);

// Row softmax over the last axis with per-row max subtraction.
template <typename T>
Tensor4<T> softmax_rows(const Tensor4<T>& m);

// Arithmetic mean over the last axis, keeping it as size 1.
template <typename T>
Tensor4<T> avg_pool_rows(const Tensor4<T>& m);

// Affine map on the last axis: x (N, C, R, Fin), w (1, 1, Fout, Fin),
// bias (1, 1, 1, Fout).
template <typename T>
Tensor4<T> fully_connected(const Tensor4<T>& x, const Tensor4<T>& w, const std::type_identity_t<Tensor4<T>>* bias);

// Row-wise scaling: a (N, C, R, M) * s (N, C, R, 1).
template <typename T>
Tensor4<T> scale_rows(const Tensor4<T>& a, const Tensor4<T>& s);

// (N, C, GH, GW) -> (N, 1, GH*GW, C) token matrix and back.
template <typename T>
Tensor4<T> tokens_from_grid(const Tensor4<T>& x);

template <typename T>
Tensor4<T> grid_from_tokens(const Tensor4<T>& t, std::int64_t channels, std::int64_t gh, std::int64_t gw);

// Mean absolute difference as a double (64-bit accumulation).
template <typename T>
double l1_value(const Tensor4<T>& a, const Tensor4<T>& b);

template <typename T>
double sum_all_value(const Tensor4<T>& x);

template <typename T>
double weighted_sum_value(const Tensor4<T>& x, const Tensor4<T>& weights);

// ---- adjoints (gather formulations; deterministic, race-free) ----

template <typename T>
Tensor4<T> conv2d_grad_input(const Tensor4<T>& dy, const Tensor4<T>& w, const ConvSpec& spec, const Dims4& x_dims);

template <typename T>
Tensor4<T> conv2d_grad_weight(const Tensor4<T>& dy, const Tensor4<T>& x, const ConvSpec& spec);

template <typename T>
Tensor4<T> conv2d_transpose_grad_input(const Tensor4<T>& dy, const Tensor4<T>& w, const ConvSpec& spec,
                                       const Dims4& x_dims);

template <typename T>
Tensor4<T> conv2d_transpose_grad_weight(const Tensor4<T>& dy, const Tensor4<T>& x, const ConvSpec& spec);

// Per-output-channel sums of dy, shaped (1, C, 1, 1).
template <typename T>
Tensor4<T> grad_bias(const Tensor4<T>& dy);

// Reduce dy over the last axis into shape (N, C, R, 1) (adjoint of row
// broadcast) and over rows for the FC weight/bias.
template <typename T>
Tensor4<T> sum_last_axis(const Tensor4<T>& dy);

template <typename T>
Tensor4<T> softmax_rows_grad(const Tensor4<T>& y, const Tensor4<T>& dy);

template <typename T>
Tensor4<T> matmul_grad_a(const Tensor4<T>& dy, const Tensor4<T>& b, bool transpose_b);

template <typename T>
Tensor4<T> matmul_grad_b(const Tensor4<T>& dy, const Tensor4<T>& a, bool transpose_b);

} // namespace pahs

#endif
