#ifndef PAHS_METRICS_HPP
#define PAHS_METRICS_HPP

#include "pahs/tensor.hpp"

namespace pahs {

// 10*log10(max_val^2 / MSE); +inf for identical inputs.
template <typename T>
double psnr(const Tensor4<T>& a, const Tensor4<T>& b, double max_val = 1.0);

// Mean local SSIM over valid 11x11 window positions (Gaussian sigma 1.5,
// C1=0.01^2, C2=0.03^2 at max_val 1), averaged over channels and batch.
template <typename T>
double ssim(const Tensor4<T>& a, const Tensor4<T>& b);

} // namespace pahs

#endif
