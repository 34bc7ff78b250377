#include "pahs/ref/serial_ref.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace pahs::ref {

template <typename T>
Tensor4<T> conv2d(const Tensor4<T>& x, const Tensor4<T>& w, const std::type_identity_t<Tensor4<T>>* bias, const ConvSpec& spec) {
    const Dims4 xd = x.dims();
    const std::int64_t N = xd.b, C = xd.c, H = xd.h, W = xd.w;
    const std::int64_t O = spec.out_channels, K = spec.kernel, S = spec.stride, P = spec.padding;
    const std::int64_t OH = (H + 2 * P - K) / S + 1;
    const std::int64_t OW = (W + 2 * P - K) / S + 1;
    Tensor4<T> y{Dims4{N, O, OH, OW}};
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t co = 0; co < O; ++co)
            for (std::int64_t ho = 0; ho < OH; ++ho)
                for (std::int64_t wo = 0; wo < OW; ++wo) {
                    double acc = bias ? static_cast<double>(bias->data()[co]) : 0.0;
                    for (std::int64_t ci = 0; ci < C; ++ci)
                        for (std::int64_t u = 0; u < K; ++u)
                            for (std::int64_t v = 0; v < K; ++v) {
                                const std::int64_t hi = ho * S - P + u;
                                const std::int64_t wi = wo * S - P + v;
                                if (hi < 0 || hi >= H || wi < 0 || wi >= W) {
                                    continue;
                                }
                                acc += static_cast<double>(x.at(n, ci, hi, wi)) *
                                       static_cast<double>(w.at(co, ci, u, v));
                            }
                    y.at(n, co, ho, wo) = static_cast<T>(acc);
                }
    return y;
}

template <typename T>
Tensor4<T> conv2d_transpose(const Tensor4<T>& x, const Tensor4<T>& w, const std::type_identity_t<Tensor4<T>>* bias, const ConvSpec& spec,
                            std::int64_t out_h, std::int64_t out_w) {
    const Dims4 xd = x.dims();
    const std::int64_t N = xd.b, A = xd.c, H = xd.h, W = xd.w;
    const std::int64_t B = spec.out_channels, K = spec.kernel, S = spec.stride, P = spec.padding;
    const std::int64_t OH = out_h > 0 ? out_h : S * H;
    const std::int64_t OW = out_w > 0 ? out_w : S * W;

    // Scatter formulation: every input pixel deposits its weighted kernel
    // footprint. Accumulate in a double buffer, then narrow once.
    std::vector<double> acc(static_cast<std::size_t>(N * B * OH * OW), 0.0);
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t ca = 0; ca < A; ++ca)
            for (std::int64_t i = 0; i < H; ++i)
                for (std::int64_t j = 0; j < W; ++j) {
                    const double xv = static_cast<double>(x.at(n, ca, i, j));
                    for (std::int64_t cb = 0; cb < B; ++cb)
                        for (std::int64_t u = 0; u < K; ++u)
                            for (std::int64_t v = 0; v < K; ++v) {
                                const std::int64_t oy = i * S - P + u;
                                const std::int64_t ox = j * S - P + v;
                                if (oy < 0 || oy >= OH || ox < 0 || ox >= OW) {
                                    continue;
                                }
                                acc[static_cast<std::size_t>(((n * B + cb) * OH + oy) * OW + ox)] +=
                                    xv * static_cast<double>(w.at(ca, cb, u, v));
                            }
                }
    Tensor4<T> y{Dims4{N, B, OH, OW}};
    for (std::int64_t idx = 0; idx < y.count(); ++idx) {
        double v = acc[static_cast<std::size_t>(idx)];
        if (bias) {
            const std::int64_t cb = (idx / (OH * OW)) % B;
            v += static_cast<double>(bias->data()[cb]);
        }
        y.data()[idx] = static_cast<T>(v);
    }
    return y;
}

template <typename T>
Tensor4<T> matmul(const Tensor4<T>& a, const Tensor4<T>& b, bool transpose_b) {
    const Dims4 ad = a.dims(), bd = b.dims();
    const std::int64_t R = ad.h, K = ad.w;
    const std::int64_t M = transpose_b ? bd.h : bd.w;
    Tensor4<T> y{Dims4{ad.b, ad.c, R, M}};
    for (std::int64_t n = 0; n < ad.b; ++n)
        for (std::int64_t c = 0; c < ad.c; ++c)
            for (std::int64_t r = 0; r < R; ++r)
                for (std::int64_t m = 0; m < M; ++m) {
                    double acc = 0.0;
                    for (std::int64_t k = 0; k < K; ++k) {
                        const double bv = transpose_b ? static_cast<double>(b.at(n, c, m, k))
                                                      : static_cast<double>(b.at(n, c, k, m));
                        acc += static_cast<double>(a.at(n, c, r, k)) * bv;
                    }
                    y.at(n, c, r, m) = static_cast<T>(acc);
                }
    return y;
}

template <typename T>
Tensor4<T> softmax_rows(const Tensor4<T>& m) {
    const Dims4 d = m.dims();
    Tensor4<T> y{d};
    for (std::int64_t n = 0; n < d.b; ++n)
        for (std::int64_t c = 0; c < d.c; ++c)
            for (std::int64_t r = 0; r < d.h; ++r) {
                double mx = -std::numeric_limits<double>::infinity();
                for (std::int64_t j = 0; j < d.w; ++j) {
                    mx = std::max(mx, static_cast<double>(m.at(n, c, r, j)));
                }
                double sum = 0.0;
                for (std::int64_t j = 0; j < d.w; ++j) {
                    sum += std::exp(static_cast<double>(m.at(n, c, r, j)) - mx);
                }
                for (std::int64_t j = 0; j < d.w; ++j) {
                    y.at(n, c, r, j) = static_cast<T>(std::exp(static_cast<double>(m.at(n, c, r, j)) - mx) / sum);
                }
            }
    return y;
}

template <typename T>
double psnr(const Tensor4<T>& a, const Tensor4<T>& b, double max_val) {
    double se = 0.0;
    for (std::int64_t i = 0; i < a.count(); ++i) {
        const double d = static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i]);
        se += d * d;
    }
    const double mse = se / static_cast<double>(a.count());
    if (mse == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return 10.0 * std::log10(max_val * max_val / mse);
}

template <typename T>
double ssim(const Tensor4<T>& a, const Tensor4<T>& b) {
    const Dims4 d = a.dims();
    const int win = 11;
    const double sigma = 1.5;
    const double c1 = 0.01 * 0.01;
    const double c2 = 0.03 * 0.03;

    double g[11][11];
    double gsum = 0.0;
    for (int u = 0; u < win; ++u)
        for (int v = 0; v < win; ++v) {
            const double du = u - 5.0, dv = v - 5.0;
            g[u][v] = std::exp(-(du * du + dv * dv) / (2.0 * sigma * sigma));
            gsum += g[u][v];
        }
    for (int u = 0; u < win; ++u)
        for (int v = 0; v < win; ++v) {
            g[u][v] /= gsum;
        }

    double total = 0.0;
    std::int64_t count = 0;
    for (std::int64_t n = 0; n < d.b; ++n)
        for (std::int64_t c = 0; c < d.c; ++c)
            for (std::int64_t y = 0; y + win <= d.h; ++y)
                for (std::int64_t x = 0; x + win <= d.w; ++x) {
                    double ma = 0.0, mb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
                    for (int u = 0; u < win; ++u)
                        for (int v = 0; v < win; ++v) {
                            const double av = static_cast<double>(a.at(n, c, y + u, x + v));
                            const double bv = static_cast<double>(b.at(n, c, y + u, x + v));
                            ma += g[u][v] * av;
                            mb += g[u][v] * bv;
                            saa += g[u][v] * av * av;
                            sbb += g[u][v] * bv * bv;
                            sab += g[u][v] * av * bv;
                        }
                    const double va = saa - ma * ma;
                    const double vb = sbb - mb * mb;
                    const double cov = sab - ma * mb;
                    const double num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
                    const double den = (ma * ma + mb * mb + c1) * (va + vb + c2);
                    total += num / den;
                    ++count;
                }
    return total / static_cast<double>(count);
}

#define PAHS_REF_INSTANTIATE(T)                                                                               \
    template Tensor4<T> conv2d<T>(const Tensor4<T>&, const Tensor4<T>&, const std::type_identity_t<Tensor4<T>>*, const ConvSpec&); \
    template Tensor4<T> conv2d_transpose<T>(const Tensor4<T>&, const Tensor4<T>&, const std::type_identity_t<Tensor4<T>>*,         \
                                            const ConvSpec&, std::int64_t, std::int64_t);                    \
    template Tensor4<T> matmul<T>(const Tensor4<T>&, const Tensor4<T>&, bool);                               \
    template Tensor4<T> softmax_rows<T>(const Tensor4<T>&);                                                  \
    template double psnr<T>(const Tensor4<T>&, const Tensor4<T>&, double);                                   \
    template double ssim<T>(const Tensor4<T>&, const Tensor4<T>&);

PAHS_REF_INSTANTIATE(float)
PAHS_REF_INSTANTIATE(double)
#undef PAHS_REF_INSTANTIATE

} // namespace pahs::ref
