#ifndef PAHS_REF_SERIAL_REF_HPP
#define PAHS_REF_SERIAL_REF_HPP

#include "pahs/kernels.hpp"
#include "pahs/tensor.hpp"

// Serial brute-force reference path. Kept independent of the OpenMP kernels
// on purpose: plain nested loops, per-tap bounds checks, scatter instead of
// gather for the transposed conv. Used by tests as the oracle and by the
// benchmark tool as the comparison baseline.
namespace pahs::ref {

template <typename T>
Tensor4<T> conv2d(const Tensor4<T>& x, const Tensor4<T>& w, const std::type_identity_t<Tensor4<T>>* bias, const ConvSpec& spec);

template <typename T>
Tensor4<T> conv2d_transpose(const Tensor4<T>& x, const Tensor4<T>& w, const std::type_identity_t<Tensor4<T>>* bias, const ConvSpec& spec,
                            std::int64_t out_h = 0, std::int64_t out_w = 0);

template <typename T>
Tensor4<T> matmul(const Tensor4<T>& a, const Tensor4<T>& b, bool transpose_b = false);

template <typename T>
Tensor4<T> softmax_rows(const Tensor4<T>& m);

// Scalar-loop image metrics (per-pixel double math, non-separable SSIM
// window sums).
template <typename T>
double psnr(const Tensor4<T>& a, const Tensor4<T>& b, double max_val = 1.0);

template <typename T>
double ssim(const Tensor4<T>& a, const Tensor4<T>& b);

} // namespace pahs::ref

#endif
