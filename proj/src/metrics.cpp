#include "pahs/metrics.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace pahs {

template <typename T>
double psnr(const Tensor4<T>& a, const Tensor4<T>& b, double max_val) {
    require_dims_equal(b.dims(), a.dims(), "psnr");
    require(a.count() > 0, "psnr: empty tensors");
    const Dims4 d = a.dims();
    const std::int64_t rows = d.b * d.c * d.h;
    double se = 0.0;
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* ap = a.data() + r * d.w;
        const T* bp = b.data() + r * d.w;
        double row = 0.0;
        for (std::int64_t j = 0; j < d.w; ++j) {
            const double diff = static_cast<double>(ap[j]) - static_cast<double>(bp[j]);
            row += diff * diff;
        }
        se += row;
    }
    const double mse = se / static_cast<double>(a.count());
    if (mse == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return 10.0 * std::log10(max_val * max_val / mse);
}

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

// Separable valid-mode Gaussian filter over one plane.
void gauss_filter(const std::vector<double>& plane, std::int64_t h, std::int64_t w, const double* g1,
                  std::vector<double>& tmp, std::vector<double>& out) {
    const std::int64_t wo = w - kWin + 1;
    const std::int64_t ho = h - kWin + 1;
    tmp.assign(static_cast<std::size_t>(h * wo), 0.0);
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < wo; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kWin; ++k) {
                acc += g1[k] * plane[static_cast<std::size_t>(y * w + x + k)];
            }
            tmp[static_cast<std::size_t>(y * wo + x)] = acc;
        }
    }
    out.assign(static_cast<std::size_t>(ho * wo), 0.0);
    for (std::int64_t y = 0; y < ho; ++y) {
        for (std::int64_t x = 0; x < wo; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kWin; ++k) {
                acc += g1[k] * tmp[static_cast<std::size_t>((y + k) * wo + x)];
            }
            out[static_cast<std::size_t>(y * wo + x)] = acc;
        }
    }
}

} // namespace

template <typename T>
double ssim(const Tensor4<T>& a, const Tensor4<T>& b) {
    require_dims_equal(b.dims(), a.dims(), "ssim");
    const Dims4 d = a.dims();
    if (d.h < kWin || d.w < kWin) {
        throw ContractError("ssim: image " + d.str() + " smaller than the " + std::to_string(kWin) + "x" +
                            std::to_string(kWin) + " window");
    }

    double g1[kWin];
    double gsum = 0.0;
    for (int k = 0; k < kWin; ++k) {
        const double dk = k - (kWin - 1) / 2.0;
        g1[k] = std::exp(-dk * dk / (2.0 * kSigma * kSigma));
        gsum += g1[k];
    }
    for (int k = 0; k < kWin; ++k) {
        g1[k] /= gsum;
    }

    const std::int64_t plane_n = d.h * d.w;
    std::vector<double> pa(static_cast<std::size_t>(plane_n));
    std::vector<double> pb(static_cast<std::size_t>(plane_n));
    std::vector<double> paa(static_cast<std::size_t>(plane_n));
    std::vector<double> pbb(static_cast<std::size_t>(plane_n));
    std::vector<double> pab(static_cast<std::size_t>(plane_n));
    std::vector<double> tmp, ma, mb, maa, mbb, mab;

    double total = 0.0;
    std::int64_t count = 0;
    for (std::int64_t n = 0; n < d.b; ++n) {
        for (std::int64_t c = 0; c < d.c; ++c) {
            const T* ap = a.data() + (n * d.c + c) * plane_n;
            const T* bp = b.data() + (n * d.c + c) * plane_n;
            for (std::int64_t i = 0; i < plane_n; ++i) {
                const double av = static_cast<double>(ap[i]);
                const double bv = static_cast<double>(bp[i]);
                pa[static_cast<std::size_t>(i)] = av;
                pb[static_cast<std::size_t>(i)] = bv;
                paa[static_cast<std::size_t>(i)] = av * av;
                pbb[static_cast<std::size_t>(i)] = bv * bv;
                pab[static_cast<std::size_t>(i)] = av * bv;
            }
            gauss_filter(pa, d.h, d.w, g1, tmp, ma);
            gauss_filter(pb, d.h, d.w, g1, tmp, mb);
            gauss_filter(paa, d.h, d.w, g1, tmp, maa);
            gauss_filter(pbb, d.h, d.w, g1, tmp, mbb);
            gauss_filter(pab, d.h, d.w, g1, tmp, mab);
            for (std::size_t i = 0; i < ma.size(); ++i) {
                const double mu_a = ma[i];
                const double mu_b = mb[i];
                const double var_a = maa[i] - mu_a * mu_a;
                const double var_b = mbb[i] - mu_b * mu_b;
                const double cov = mab[i] - mu_a * mu_b;
                const double num = (2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2);
                const double den = (mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2);
                total += num / den;
                ++count;
            }
        }
    }
    return total / static_cast<double>(count);
}

template double psnr<float>(const Tensor4<float>&, const Tensor4<float>&, double);
template double psnr<double>(const Tensor4<double>&, const Tensor4<double>&, double);
template double ssim<float>(const Tensor4<float>&, const Tensor4<float>&);
template double ssim<double>(const Tensor4<double>&, const Tensor4<double>&);

} // namespace pahs
