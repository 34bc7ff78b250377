#include "pahs/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <vector>

namespace pahs {

namespace {

constexpr std::int64_t kParallelCutoff = 16384;

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if (a % b != 0 && ((a < 0) != (b < 0))) {
        --q;
    }
    return q;
}

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return floor_div(a + b - 1, b); }

template <typename T>
void check_weight(const Tensor4<T>& w, const ConvSpec& spec, const char* op) {
    require_dims_equal(w.dims(), spec.weight_dims(), std::string(op) + " weight");
}

// Adds one 3-tap row stencil into an accumulator row. Taps are applied in kw
// order per element, matching the generic path's summation order.
template <typename T>
void row3_accum(T* ar, const T* rr, const T* w3, std::int64_t W) {
    const T w0 = w3[0];
    const T w1 = w3[1];
    const T w2 = w3[2];
    ar[0] += w1 * rr[0] + w2 * rr[1];
    for (std::int64_t x = 1; x + 1 < W; ++x) {
        ar[x] += w0 * rr[x - 1] + w1 * rr[x] + w2 * rr[x + 1];
    }
    ar[W - 1] += w0 * rr[W - 2] + w1 * rr[W - 1];
}

// One input channel's 3x3 stride-1 pad-1 contribution into a plane
// accumulator, rows in (kh, kw) tap order per element.
template <typename T>
void conv3x3_s1p1_accum(T* acc, const T* xc, std::int64_t H, std::int64_t W, const T* w9) {
    for (std::int64_t ho = 0; ho < H; ++ho) {
        T* ar = acc + ho * W;
        if (ho > 0) {
            row3_accum(ar, xc + (ho - 1) * W, w9 + 0, W);
        }
        row3_accum(ar, xc + ho * W, w9 + 3, W);
        if (ho + 1 < H) {
            row3_accum(ar, xc + (ho + 1) * W, w9 + 6, W);
        }
    }
}

template <typename T>
void check_bias(const std::type_identity_t<Tensor4<T>>* bias, const ConvSpec& spec, const char* op) {
    if (bias != nullptr) {
        require_dims_equal(bias->dims(), spec.bias_dims(), std::string(op) + " bias");
    }
}

} // namespace

std::int64_t ConvSpec::conv_out(std::int64_t in, const char* axis) const {
    const std::int64_t out = (in + 2 * padding - kernel) / stride + 1;
    if (in + 2 * padding < kernel || out <= 0) {
        throw ShapeError("conv2d: " + std::string(axis) + " " + std::to_string(in) +
                         " too small for kernel " + std::to_string(kernel) + " stride " + std::to_string(stride) +
                         " padding " + std::to_string(padding));
    }
    return out;
}

std::string ConvSpec::str() const {
    std::ostringstream os;
    os << (transposed ? "tconv(" : "conv(") << in_channels << "->" << out_channels << ", k" << kernel << ", s"
       << stride << ", p" << padding << (bias ? ", bias)" : ")");
    return os.str();
}

template <typename T>
Tensor4<T> conv2d(const Tensor4<T>& x, const Tensor4<T>& w, const std::type_identity_t<Tensor4<T>>* bias, const ConvSpec& spec) {
    check_weight(w, spec, "conv2d");
    check_bias<T>(bias, spec, "conv2d");
    const Dims4 xd = x.dims();
    if (xd.c != spec.in_channels) {
        throw ShapeError("conv2d: channel mismatch, input has " + std::to_string(xd.c) + " expected " +
                         std::to_string(spec.in_channels));
    }
    const std::int64_t N = xd.b, C = spec.in_channels, H = xd.h, W = xd.w;
    const std::int64_t O = spec.out_channels, K = spec.kernel, S = spec.stride, P = spec.padding;
    const std::int64_t OH = spec.conv_out(H, "height");
    const std::int64_t OW = spec.conv_out(W, "width");

    Tensor4<T> y = Tensor4<T>::uninit(Dims4{N, O, OH, OW});
    const T* xp = x.data();
    const T* wp = w.data();
    const T* bp = bias ? bias->data() : nullptr;
    T* yp = y.data();

    const bool fast3 = (K == 3 && S == 1 && P == 1 && W >= 2);
    const bool par = N * O * OH * OW * C * K * K > 65536;

#pragma omp parallel if (par)
    {
        // per-output-plane accumulator; summation order per element is the
        // fixed (ci, kh, kw) tap order regardless of thread count
        std::vector<T> acc(static_cast<std::size_t>(OH * OW));
#pragma omp for collapse(2) schedule(static)
        for (std::int64_t n = 0; n < N; ++n) {
            for (std::int64_t co = 0; co < O; ++co) {
                std::fill(acc.begin(), acc.end(), bp ? bp[co] : T(0));
                if (fast3) {
                    for (std::int64_t ci = 0; ci < C; ++ci) {
                        conv3x3_s1p1_accum(acc.data(), xp + ((n * C + ci) * H) * W, H, W,
                                           wp + ((co * C + ci) * K) * K);
                    }
                    T* yplane = yp + ((n * O + co) * OH) * OW;
                    for (std::int64_t i = 0; i < OH * OW; ++i) {
                        yplane[i] = acc[static_cast<std::size_t>(i)];
                    }
                    continue;
                }
                for (std::int64_t ci = 0; ci < C; ++ci) {
                    const T* xc = xp + ((n * C + ci) * H) * W;
                    const T* wc = wp + ((co * C + ci) * K) * K;
                    for (std::int64_t kh = 0; kh < K; ++kh) {
                        const T* wr = wc + kh * K;
                        for (std::int64_t kw = 0; kw < K; ++kw) {
                            const std::int64_t lo = std::max<std::int64_t>(0, ceil_div(P - kw, S));
                            const std::int64_t hi2 = std::min<std::int64_t>(OW, floor_div(W - 1 + P - kw, S) + 1);
                            const T wv = (wr[kw]);
                            const std::int64_t off = kw - P;
                            for (std::int64_t ho = 0; ho < OH; ++ho) {
                                const std::int64_t hi = ho * S - P + kh;
                                if (hi < 0 || hi >= H) {
                                    continue;
                                }
                                T* ar = acc.data() + ho * OW;
                                const T* xr = xc + hi * W;
                                if (S == 1) {
                                    for (std::int64_t wo = lo; wo < hi2; ++wo) {
                                        ar[wo] += wv * (xr[wo + off]);
                                    }
                                } else {
                                    for (std::int64_t wo = lo; wo < hi2; ++wo) {
                                        ar[wo] += wv * (xr[wo * S + off]);
                                    }
                                }
                            }
                        }
                    }
                }
                T* yplane = yp + ((n * O + co) * OH) * OW;
                for (std::int64_t i = 0; i < OH * OW; ++i) {
                    yplane[i] = acc[static_cast<std::size_t>(i)];
                }
            }
        }
    }
    return y;
}

template <typename T>
Tensor4<T> conv2d_transpose(const Tensor4<T>& x, const Tensor4<T>& w, const std::type_identity_t<Tensor4<T>>* bias, const ConvSpec& spec,
                            std::int64_t out_h, std::int64_t out_w) {
    check_weight(w, spec, "conv2d_transpose");
    check_bias<T>(bias, spec, "conv2d_transpose");
    const Dims4 xd = x.dims();
    if (xd.c != spec.in_channels) {
        throw ShapeError("conv2d_transpose: channel mismatch, input has " + std::to_string(xd.c) + " expected " +
                         std::to_string(spec.in_channels));
    }
    const std::int64_t N = xd.b, A = spec.in_channels, H = xd.h, W = xd.w;
    const std::int64_t B = spec.out_channels, K = spec.kernel, S = spec.stride, P = spec.padding;
    const std::int64_t OH = out_h > 0 ? out_h : spec.tconv_out(H);
    const std::int64_t OW = out_w > 0 ? out_w : spec.tconv_out(W);
    if (OH <= 0 || OW <= 0) {
        throw ShapeError("conv2d_transpose: non-positive output size");
    }

    Tensor4<T> y = Tensor4<T>::uninit(Dims4{N, B, OH, OW});
    const T* xp = x.data();
    const T* wp = w.data();
    const T* bp = bias ? bias->data() : nullptr;
    T* yp = y.data();
    const bool par = N * B * OH * OW * A * K * K > 65536;

#pragma omp parallel if (par)
    {
        std::vector<T> acc(static_cast<std::size_t>(OH * OW));
#pragma omp for collapse(2) schedule(static)
        for (std::int64_t n = 0; n < N; ++n) {
            for (std::int64_t cb = 0; cb < B; ++cb) {
                std::fill(acc.begin(), acc.end(), bp ? bp[cb] : T(0));
                for (std::int64_t ca = 0; ca < A; ++ca) {
                    const T* xc = xp + ((n * A + ca) * H) * W;
                    const T* wc = wp + ((ca * B + cb) * K) * K;
                    for (std::int64_t u = 0; u < K; ++u) {
                        const T* wr = wc + u * K;
                        for (std::int64_t v = 0; v < K; ++v) {
                            // ox = j*S - P + v for j in [j_lo, j_hi)
                            const std::int64_t j_lo = std::max<std::int64_t>(0, ceil_div(P - v, S));
                            const std::int64_t j_hi = std::min<std::int64_t>(W, floor_div(OW - 1 + P - v, S) + 1);
                            const T wv = (wr[v]);
                            const std::int64_t off = v - P;
                            for (std::int64_t oy = 0; oy < OH; ++oy) {
                                const std::int64_t num = oy + P - u;
                                if (num % S != 0) {
                                    continue;
                                }
                                const std::int64_t i = num / S;
                                if (i < 0 || i >= H) {
                                    continue;
                                }
                                const T* xr = xc + i * W;
                                T* ar = acc.data() + oy * OW;
                                if (S == 1) {
                                    for (std::int64_t j = j_lo; j < j_hi; ++j) {
                                        ar[j + off] += wv * (xr[j]);
                                    }
                                } else {
                                    for (std::int64_t j = j_lo; j < j_hi; ++j) {
                                        ar[j * S + off] += wv * (xr[j]);
                                    }
                                }
                            }
                        }
                    }
                }
                T* yplane = yp + ((n * B + cb) * OH) * OW;
                for (std::int64_t i = 0; i < OH * OW; ++i) {
                    yplane[i] = acc[static_cast<std::size_t>(i)];
                }
            }
        }
    }
    return y;
}

template <typename T>
Tensor4<T> conv2d_grad_input(const Tensor4<T>& dy, const Tensor4<T>& w, const ConvSpec& spec, const Dims4& x_dims) {
    // Adjoint of the linear part of conv2d: dx[n,ci,y,x] =
    // sum_{co,u,v} dy[n,co,(y+P-u)/S,(x+P-v)/S] * w[co,ci,u,v].
    const Dims4 dyd = dy.dims();
    const std::int64_t N = dyd.b, O = spec.out_channels, C = spec.in_channels;
    const std::int64_t K = spec.kernel, S = spec.stride, P = spec.padding;
    const std::int64_t OH = dyd.h, OW = dyd.w;
    const std::int64_t H = x_dims.h, W = x_dims.w;

    Tensor4<T> dx = Tensor4<T>::uninit(x_dims);
    const T* gp = dy.data();
    const T* wp = w.data();
    T* dp = dx.data();

    // For the 3x3 stride-1 pad-1 family the adjoint is the same stencil with
    // a 180-degree rotated kernel.
    const bool fast3 = (spec.kernel == 3 && spec.stride == 1 && spec.padding == 1 && W >= 2);
    const bool par = N * C * H * W * O * 9 > 65536;

#pragma omp parallel if (par)
    {
        std::vector<T> acc(static_cast<std::size_t>(H * W));
        std::vector<T> wflip(9);
#pragma omp for collapse(2) schedule(static)
        for (std::int64_t n = 0; n < N; ++n) {
            for (std::int64_t ci = 0; ci < C; ++ci) {
                std::fill(acc.begin(), acc.end(), T(0));
                if (fast3) {
                    for (std::int64_t co = 0; co < O; ++co) {
                        const T* wc = wp + ((co * C + ci) * 3) * 3;
                        for (int k = 0; k < 9; ++k) {
                            wflip[static_cast<std::size_t>(k)] = wc[8 - k];
                        }
                        conv3x3_s1p1_accum(acc.data(), gp + ((n * O + co) * OH) * OW, OH, OW, wflip.data());
                    }
                    T* dplane = dp + ((n * C + ci) * H) * W;
                    for (std::int64_t i = 0; i < H * W; ++i) {
                        dplane[i] = acc[static_cast<std::size_t>(i)];
                    }
                    continue;
                }
                for (std::int64_t co = 0; co < O; ++co) {
                    const T* gc = gp + ((n * O + co) * OH) * OW;
                    const T* wc = wp + ((co * C + ci) * K) * K;
                    for (std::int64_t u = 0; u < K; ++u) {
                        const T* wr = wc + u * K;
                        for (std::int64_t v = 0; v < K; ++v) {
                            const std::int64_t j_lo = std::max<std::int64_t>(0, ceil_div(P - v, S));
                            const std::int64_t j_hi = std::min<std::int64_t>(OW, floor_div(W - 1 + P - v, S) + 1);
                            const T wv = (wr[v]);
                            const std::int64_t off = v - P;
                            for (std::int64_t y = 0; y < H; ++y) {
                                const std::int64_t num = y + P - u;
                                if (num % S != 0) {
                                    continue;
                                }
                                const std::int64_t ho = num / S;
                                if (ho < 0 || ho >= OH) {
                                    continue;
                                }
                                const T* gr = gc + ho * OW;
                                T* ar = acc.data() + y * W;
                                if (S == 1) {
                                    for (std::int64_t j = j_lo; j < j_hi; ++j) {
                                        ar[j + off] += wv * (gr[j]);
                                    }
                                } else {
                                    for (std::int64_t j = j_lo; j < j_hi; ++j) {
                                        ar[j * S + off] += wv * (gr[j]);
                                    }
                                }
                            }
                        }
                    }
                }
                T* dplane = dp + ((n * C + ci) * H) * W;
                for (std::int64_t i = 0; i < H * W; ++i) {
                    dplane[i] = acc[static_cast<std::size_t>(i)];
                }
            }
        }
    }
    return dx;
}

template <typename T>
Tensor4<T> conv2d_grad_weight(const Tensor4<T>& dy, const Tensor4<T>& x, const ConvSpec& spec) {
    // dw[co,ci,u,v] = sum_{n,ho,wo} dy[n,co,ho,wo] * x[n,ci,ho*S-P+u,wo*S-P+v]
    const Dims4 dyd = dy.dims();
    const Dims4 xd = x.dims();
    const std::int64_t N = xd.b, O = dyd.c, C = xd.c;
    const std::int64_t K = spec.kernel, S = spec.stride, P = spec.padding;
    const std::int64_t OH = dyd.h, OW = dyd.w, H = xd.h, W = xd.w;

    Tensor4<T> dw = Tensor4<T>::uninit(Dims4{O, C, K, K});
    const T* gp = dy.data();
    const T* xp = x.data();
    T* wp = dw.data();

#pragma omp parallel for collapse(2) schedule(static) if (N * O * C * K * K * OH * OW > 65536)
    for (std::int64_t co = 0; co < O; ++co) {
        for (std::int64_t ci = 0; ci < C; ++ci) {
            for (std::int64_t u = 0; u < K; ++u) {
                for (std::int64_t v = 0; v < K; ++v) {
                    // 8 independent partial sums keep the reduction
                    // vectorizable; the combine order is fixed.
                    T lanes[8] = {0, 0, 0, 0, 0, 0, 0, 0};
                    T tail = T(0);
                    const std::int64_t wo_lo = std::max<std::int64_t>(0, ceil_div(P - v, S));
                    const std::int64_t wo_hi = std::min<std::int64_t>(OW, floor_div(W - 1 + P - v, S) + 1);
                    const std::int64_t off = v - P;
                    for (std::int64_t n = 0; n < N; ++n) {
                        const T* gc = gp + ((n * O + co) * OH) * OW;
                        const T* xc = xp + ((n * C + ci) * H) * W;
                        for (std::int64_t ho = 0; ho < OH; ++ho) {
                            const std::int64_t hi = ho * S - P + u;
                            if (hi < 0 || hi >= H) {
                                continue;
                            }
                            const T* gr = gc + ho * OW;
                            const T* xr = xc + hi * W;
                            std::int64_t wo = wo_lo;
                            if (S == 1) {
                                for (; wo + 8 <= wo_hi; wo += 8) {
                                    for (int l = 0; l < 8; ++l) {
                                        lanes[l] += (gr[wo + l]) *
                                                    (xr[wo + l + off]);
                                    }
                                }
                                for (; wo < wo_hi; ++wo) {
                                    tail += (gr[wo]) * (xr[wo + off]);
                                }
                            } else {
                                for (; wo + 8 <= wo_hi; wo += 8) {
                                    for (int l = 0; l < 8; ++l) {
                                        lanes[l] += (gr[wo + l]) * (xr[(wo + l) * S + off]);
                                    }
                                }
                                for (; wo < wo_hi; ++wo) {
                                    tail += (gr[wo]) * (xr[wo * S + off]);
                                }
                            }
                        }
                    }
                    T acc = tail;
                    for (int l = 0; l < 8; ++l) {
                        acc += lanes[l];
                    }
                    wp[((co * C + ci) * K + u) * K + v] = acc;
                }
            }
        }
    }
    return dw;
}

template <typename T>
Tensor4<T> conv2d_transpose_grad_input(const Tensor4<T>& dy, const Tensor4<T>& w, const ConvSpec& spec,
                                       const Dims4& x_dims) {
    // dx[n,a,i,j] = sum_{b,u,v} dy[n,b,i*S-P+u,j*S-P+v] * w[a,b,u,v]
    const Dims4 dyd = dy.dims();
    const std::int64_t N = dyd.b, A = spec.in_channels, B = spec.out_channels;
    const std::int64_t K = spec.kernel, S = spec.stride, P = spec.padding;
    const std::int64_t OH = dyd.h, OW = dyd.w, H = x_dims.h, W = x_dims.w;

    Tensor4<T> dx = Tensor4<T>::uninit(x_dims);
    const T* gp = dy.data();
    const T* wp = w.data();
    T* dp = dx.data();
    const bool par = N * A * H * W * B * K * K > 65536;

#pragma omp parallel if (par)
    {
        std::vector<T> acc(static_cast<std::size_t>(H * W));
#pragma omp for collapse(2) schedule(static)
        for (std::int64_t n = 0; n < N; ++n) {
            for (std::int64_t ca = 0; ca < A; ++ca) {
                std::fill(acc.begin(), acc.end(), T(0));
                for (std::int64_t cb = 0; cb < B; ++cb) {
                    const T* gc = gp + ((n * B + cb) * OH) * OW;
                    const T* wc = wp + ((ca * B + cb) * K) * K;
                    for (std::int64_t u = 0; u < K; ++u) {
                        const T* wr = wc + u * K;
                        for (std::int64_t v = 0; v < K; ++v) {
                            const std::int64_t j_lo = std::max<std::int64_t>(0, ceil_div(P - v, S));
                            const std::int64_t j_hi = std::min<std::int64_t>(W, floor_div(OW - 1 + P - v, S) + 1);
                            const T wv = (wr[v]);
                            const std::int64_t off = v - P;
                            for (std::int64_t i = 0; i < H; ++i) {
                                const std::int64_t hi = i * S - P + u;
                                if (hi < 0 || hi >= OH) {
                                    continue;
                                }
                                const T* gr = gc + hi * OW;
                                T* ar = acc.data() + i * W;
                                if (S == 1) {
                                    for (std::int64_t j = j_lo; j < j_hi; ++j) {
                                        ar[j] += wv * (gr[j + off]);
                                    }
                                } else {
                                    for (std::int64_t j = j_lo; j < j_hi; ++j) {
                                        ar[j] += wv * (gr[j * S + off]);
                                    }
                                }
                            }
                        }
                    }
                }
                T* dplane = dp + ((n * A + ca) * H) * W;
                for (std::int64_t i = 0; i < H * W; ++i) {
                    dplane[i] = acc[static_cast<std::size_t>(i)];
                }
            }
        }
    }
    return dx;
}

template <typename T>
Tensor4<T> conv2d_transpose_grad_weight(const Tensor4<T>& dy, const Tensor4<T>& x, const ConvSpec& spec) {
    // dw[a,b,u,v] = sum_{n,i,j} x[n,a,i,j] * dy[n,b,i*S-P+u,j*S-P+v]
    const Dims4 dyd = dy.dims();
    const Dims4 xd = x.dims();
    const std::int64_t N = xd.b, A = xd.c, B = dyd.c;
    const std::int64_t K = spec.kernel, S = spec.stride, P = spec.padding;
    const std::int64_t H = xd.h, W = xd.w, OH = dyd.h, OW = dyd.w;

    Tensor4<T> dw = Tensor4<T>::uninit(Dims4{A, B, K, K});
    const T* gp = dy.data();
    const T* xp = x.data();
    T* wp = dw.data();

#pragma omp parallel for collapse(2) schedule(static) if (N * A * B * K * K * H * W > 65536)
    for (std::int64_t ca = 0; ca < A; ++ca) {
        for (std::int64_t cb = 0; cb < B; ++cb) {
            for (std::int64_t u = 0; u < K; ++u) {
                for (std::int64_t v = 0; v < K; ++v) {
                    T lanes[8] = {0, 0, 0, 0, 0, 0, 0, 0};
                    T tail = T(0);
                    const std::int64_t j_lo = std::max<std::int64_t>(0, ceil_div(P - v, S));
                    const std::int64_t j_hi = std::min<std::int64_t>(W, floor_div(OW - 1 + P - v, S) + 1);
                    const std::int64_t off = v - P;
                    for (std::int64_t n = 0; n < N; ++n) {
                        const T* xc = xp + ((n * A + ca) * H) * W;
                        const T* gc = gp + ((n * B + cb) * OH) * OW;
                        for (std::int64_t i = 0; i < H; ++i) {
                            const std::int64_t oy = i * S - P + u;
                            if (oy < 0 || oy >= OH) {
                                continue;
                            }
                            const T* xr = xc + i * W;
                            const T* gr = gc + oy * OW;
                            std::int64_t j = j_lo;
                            for (; j + 8 <= j_hi; j += 8) {
                                for (int l = 0; l < 8; ++l) {
                                    lanes[l] += (xr[j + l]) *
                                                (gr[(j + l) * S + off]);
                                }
                            }
                            for (; j < j_hi; ++j) {
                                tail += (xr[j]) * (gr[j * S + off]);
                            }
                        }
                    }
                    T acc = tail;
                    for (int l = 0; l < 8; ++l) {
                        acc += lanes[l];
                    }
                    wp[((ca * B + cb) * K + u) * K + v] = acc;
                }
            }
        }
    }
    return dw;
}

template <typename T>
Tensor4<T> grad_bias(const Tensor4<T>& dy) {
    const Dims4 d = dy.dims();
    Tensor4<T> db = Tensor4<T>::uninit(Dims4{1, d.c, 1, 1});
    const T* gp = dy.data();
#pragma omp parallel for schedule(static)
    for (std::int64_t c = 0; c < d.c; ++c) {
        double acc = 0.0;
        for (std::int64_t n = 0; n < d.b; ++n) {
            const T* gc = gp + ((n * d.c + c) * d.h) * d.w;
            for (std::int64_t i = 0; i < d.h * d.w; ++i) {
                acc += static_cast<double>(gc[i]);
            }
        }
        db.data()[c] = static_cast<T>(acc);
    }
    return db;
}

template <typename T>
Tensor4<T> relu(const Tensor4<T>& x) {
    Tensor4<T> y = Tensor4<T>::uninit(x.dims());
    const std::int64_t n = x.count();
    const T* xp = x.data();
    T* yp = y.data();
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
    for (std::int64_t i = 0; i < n; ++i) {
        yp[i] = xp[i] > T(0) ? xp[i] : T(0);
    }
    return y;
}

template <typename T>
Tensor4<T> sigmoid(const Tensor4<T>& x) {
    Tensor4<T> y = Tensor4<T>::uninit(x.dims());
    const std::int64_t n = x.count();
    const T* xp = x.data();
    T* yp = y.data();
    const T hi = std::nextafter(T(1), T(0));
    const T lo = std::numeric_limits<T>::denorm_min();
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
    for (std::int64_t i = 0; i < n; ++i) {
        const double v = static_cast<double>(xp[i]);
        double s;
        if (v >= 0.0) {
            s = 1.0 / (1.0 + std::exp(-v));
        } else {
            const double e = std::exp(v);
            s = e / (1.0 + e);
        }
        // keep the image strictly inside (0, 1) after narrowing
        yp[i] = std::clamp(static_cast<T>(s), lo, hi);
    }
    return y;
}

template <typename T>
Tensor4<T> add(const Tensor4<T>& a, const Tensor4<T>& b) {
    require_dims_equal(b.dims(), a.dims(), "add");
    Tensor4<T> y = Tensor4<T>::uninit(a.dims());
    const std::int64_t n = a.count();
    const T* ap = a.data();
    const T* bp = b.data();
    T* yp = y.data();
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
    for (std::int64_t i = 0; i < n; ++i) {
        yp[i] = ap[i] + bp[i];
    }
    return y;
}

template <typename T>
Tensor4<T> mul(const Tensor4<T>& a, const Tensor4<T>& b) {
    require_dims_equal(b.dims(), a.dims(), "mul");
    Tensor4<T> y = Tensor4<T>::uninit(a.dims());
    const std::int64_t n = a.count();
    const T* ap = a.data();
    const T* bp = b.data();
    T* yp = y.data();
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
    for (std::int64_t i = 0; i < n; ++i) {
        yp[i] = ap[i] * bp[i];
    }
    return y;
}

template <typename T>
Tensor4<T> scale(const Tensor4<T>& a, T factor) {
    Tensor4<T> y = Tensor4<T>::uninit(a.dims());
    const std::int64_t n = a.count();
    const T* ap = a.data();
    T* yp = y.data();
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
    for (std::int64_t i = 0; i < n; ++i) {
        yp[i] = ap[i] * factor;
    }
    return y;
}

template <typename T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b) {
    const Dims4 ad = a.dims(), bd = b.dims();
    if (ad.b != bd.b || ad.h != bd.h || ad.w != bd.w) {
        throw ShapeError("concat_channels: non-channel dims differ, " + ad.str() + " vs " + bd.str());
    }
    Tensor4<T> y = Tensor4<T>::uninit(Dims4{ad.b, ad.c + bd.c, ad.h, ad.w});
    const std::int64_t plane = ad.h * ad.w;
    for (std::int64_t n = 0; n < ad.b; ++n) {
        std::memcpy(y.data() + (n * (ad.c + bd.c)) * plane, a.data() + (n * ad.c) * plane,
                    static_cast<std::size_t>(ad.c * plane) * sizeof(T));
        std::memcpy(y.data() + (n * (ad.c + bd.c) + ad.c) * plane, b.data() + (n * bd.c) * plane,
                    static_cast<std::size_t>(bd.c * plane) * sizeof(T));
    }
    return y;
}

template <typename T>
Tensor4<T> matmul(const Tensor4<T>& a, const Tensor4<T>& b, bool transpose_b) {
    const Dims4 ad = a.dims(), bd = b.dims();
    if (ad.b != bd.b || ad.c != bd.c) {
        throw ShapeError("matmul: leading dims differ, " + ad.str() + " vs " + bd.str());
    }
    const std::int64_t R = ad.h, K = ad.w;
    const std::int64_t KB = transpose_b ? bd.w : bd.h;
    const std::int64_t M = transpose_b ? bd.h : bd.w;
    if (K != KB) {
        throw ShapeError("matmul: inner-dim mismatch, " + std::to_string(K) + " vs " + std::to_string(KB));
    }
    const std::int64_t NC = ad.b * ad.c;
    Tensor4<T> y = Tensor4<T>::uninit(Dims4{ad.b, ad.c, R, M});
    const T* ap = a.data();
    const T* bp = b.data();
    T* yp = y.data();

#pragma omp parallel for collapse(2) schedule(static) if (NC * R * M * K > kParallelCutoff)
    for (std::int64_t nc = 0; nc < NC; ++nc) {
        for (std::int64_t r = 0; r < R; ++r) {
            const T* ar = ap + (nc * R + r) * K;
            T* yr = yp + (nc * R + r) * M;
            if (transpose_b) {
                const T* bm = bp + nc * M * K;
                for (std::int64_t m = 0; m < M; ++m) {
                    const T* br = bm + m * K;
                    double acc = 0.0;
                    for (std::int64_t k = 0; k < K; ++k) {
                        acc += static_cast<double>(ar[k]) * static_cast<double>(br[k]);
                    }
                    yr[m] = static_cast<T>(acc);
                }
            } else {
                std::vector<double> acc(static_cast<std::size_t>(M), 0.0);
                const T* bm = bp + nc * K * M;
                for (std::int64_t k = 0; k < K; ++k) {
                    const double av = static_cast<double>(ar[k]);
                    const T* br = bm + k * M;
                    for (std::int64_t m = 0; m < M; ++m) {
                        acc[static_cast<std::size_t>(m)] += av * static_cast<double>(br[m]);
                    }
                }
                for (std::int64_t m = 0; m < M; ++m) {
                    yr[m] = static_cast<T>(acc[static_cast<std::size_t>(m)]);
                }
            }
        }
    }
    return y;
}

template <typename T>
Tensor4<T> matmul_grad_a(const Tensor4<T>& dy, const Tensor4<T>& b, bool transpose_b) {
    // nn: da = dy * b^T; nt: da = dy * b
    return matmul(dy, b, !transpose_b);
}

template <typename T>
Tensor4<T> matmul_grad_b(const Tensor4<T>& dy, const Tensor4<T>& a, bool transpose_b) {
    const Dims4 ad = a.dims(), gd = dy.dims();
    const std::int64_t NC = ad.b * ad.c, R = ad.h, K = ad.w, M = gd.w;
    const T* ap = a.data();
    const T* gp = dy.data();
    if (!transpose_b) {
        // db[k,m] = sum_r a[r,k] * dy[r,m]
        Tensor4<T> db = Tensor4<T>::uninit(Dims4{ad.b, ad.c, K, M});
        T* dp = db.data();
#pragma omp parallel for collapse(2) schedule(static) if (NC * R * M * K > kParallelCutoff)
        for (std::int64_t nc = 0; nc < NC; ++nc) {
            for (std::int64_t k = 0; k < K; ++k) {
                std::vector<double> acc(static_cast<std::size_t>(M), 0.0);
                for (std::int64_t r = 0; r < R; ++r) {
                    const double av = static_cast<double>(ap[(nc * R + r) * K + k]);
                    const T* gr = gp + (nc * R + r) * M;
                    for (std::int64_t m = 0; m < M; ++m) {
                        acc[static_cast<std::size_t>(m)] += av * static_cast<double>(gr[m]);
                    }
                }
                T* dr = dp + (nc * K + k) * M;
                for (std::int64_t m = 0; m < M; ++m) {
                    dr[m] = static_cast<T>(acc[static_cast<std::size_t>(m)]);
                }
            }
        }
        return db;
    }
    // nt: y = a * b^T, so db[m,k] = sum_r dy[r,m] * a[r,k]
    Tensor4<T> db = Tensor4<T>::uninit(Dims4{ad.b, ad.c, M, K});
    T* dp = db.data();
#pragma omp parallel for collapse(2) schedule(static) if (NC * R * M * K > kParallelCutoff)
    for (std::int64_t nc = 0; nc < NC; ++nc) {
        for (std::int64_t m = 0; m < M; ++m) {
            std::vector<double> acc(static_cast<std::size_t>(K), 0.0);
            for (std::int64_t r = 0; r < R; ++r) {
                const double gv = static_cast<double>(gp[(nc * R + r) * M + m]);
                const T* ar = ap + (nc * R + r) * K;
                for (std::int64_t k = 0; k < K; ++k) {
                    acc[static_cast<std::size_t>(k)] += gv * static_cast<double>(ar[k]);
                }
            }
            T* dr = dp + (nc * M + m) * K;
            for (std::int64_t k = 0; k < K; ++k) {
                dr[k] = static_cast<T>(acc[static_cast<std::size_t>(k)]);
            }
        }
    }
    return db;
}

template <typename T>
Tensor4<T> softmax_rows(const Tensor4<T>& m) {
    const Dims4 d = m.dims();
    const std::int64_t rows = d.b * d.c * d.h;
    const std::int64_t cols = d.w;
    Tensor4<T> y = Tensor4<T>::uninit(d);
    const T* mp = m.data();
    T* yp = y.data();
#pragma omp parallel for schedule(static) if (rows * cols > kParallelCutoff)
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* in = mp + r * cols;
        T* out = yp + r * cols;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::int64_t j = 0; j < cols; ++j) {
            mx = std::max(mx, static_cast<double>(in[j]));
        }
        double sum = 0.0;
        for (std::int64_t j = 0; j < cols; ++j) {
            const double e = std::exp(static_cast<double>(in[j]) - mx);
            out[j] = static_cast<T>(e);
            sum += e;
        }
        const double inv = 1.0 / sum;
        for (std::int64_t j = 0; j < cols; ++j) {
            out[j] = static_cast<T>(static_cast<double>(out[j]) * inv);
        }
    }
    return y;
}

template <typename T>
Tensor4<T> softmax_rows_grad(const Tensor4<T>& y, const Tensor4<T>& dy) {
    const Dims4 d = y.dims();
    const std::int64_t rows = d.b * d.c * d.h;
    const std::int64_t cols = d.w;
    Tensor4<T> dx = Tensor4<T>::uninit(d);
    const T* yp = y.data();
    const T* gp = dy.data();
    T* dp = dx.data();
#pragma omp parallel for schedule(static) if (rows * cols > kParallelCutoff)
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* yr = yp + r * cols;
        const T* gr = gp + r * cols;
        T* dr = dp + r * cols;
        double dot = 0.0;
        for (std::int64_t j = 0; j < cols; ++j) {
            dot += static_cast<double>(yr[j]) * static_cast<double>(gr[j]);
        }
        for (std::int64_t j = 0; j < cols; ++j) {
            dr[j] = static_cast<T>(static_cast<double>(yr[j]) * (static_cast<double>(gr[j]) - dot));
        }
    }
    return dx;
}

template <typename T>
Tensor4<T> avg_pool_rows(const Tensor4<T>& m) {
    const Dims4 d = m.dims();
    if (d.w <= 0) {
        throw ShapeError("avg_pool_rows: empty pooled axis");
    }
    const std::int64_t rows = d.b * d.c * d.h;
    Tensor4<T> y = Tensor4<T>::uninit(Dims4{d.b, d.c, d.h, 1});
    const T* mp = m.data();
    T* yp = y.data();
    const double inv = 1.0 / static_cast<double>(d.w);
    for (std::int64_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        const T* in = mp + r * d.w;
        for (std::int64_t j = 0; j < d.w; ++j) {
            acc += static_cast<double>(in[j]);
        }
        yp[r] = static_cast<T>(acc * inv);
    }
    return y;
}

template <typename T>
Tensor4<T> sum_last_axis(const Tensor4<T>& dy) {
    const Dims4 d = dy.dims();
    const std::int64_t rows = d.b * d.c * d.h;
    Tensor4<T> y = Tensor4<T>::uninit(Dims4{d.b, d.c, d.h, 1});
    const T* gp = dy.data();
    T* yp = y.data();
    for (std::int64_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        const T* in = gp + r * d.w;
        for (std::int64_t j = 0; j < d.w; ++j) {
            acc += static_cast<double>(in[j]);
        }
        yp[r] = static_cast<T>(acc);
    }
    return y;
}

template <typename T>
Tensor4<T> fully_connected(const Tensor4<T>& x, const Tensor4<T>& w, const std::type_identity_t<Tensor4<T>>* bias) {
    const Dims4 xd = x.dims(), wd = w.dims();
    if (wd.b != 1 || wd.c != 1) {
        throw ShapeError("fully_connected: weight must be (1,1,Fout,Fin), got " + wd.str());
    }
    if (xd.w != wd.w) {
        throw ShapeError("fully_connected: input feature dim " + std::to_string(xd.w) + " != weight Fin " +
                         std::to_string(wd.w));
    }
    const std::int64_t fout = wd.h, fin = wd.w;
    if (bias != nullptr) {
        require_dims_equal(bias->dims(), Dims4{1, 1, 1, fout}, "fully_connected bias");
    }
    const std::int64_t rows = xd.b * xd.c * xd.h;
    Tensor4<T> y = Tensor4<T>::uninit(Dims4{xd.b, xd.c, xd.h, fout});
    const T* xp = x.data();
    const T* wp = w.data();
    const T* bp = bias ? bias->data() : nullptr;
    T* yp = y.data();
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* xr = xp + r * fin;
        T* yr = yp + r * fout;
        for (std::int64_t fo = 0; fo < fout; ++fo) {
            double acc = bp ? static_cast<double>(bp[fo]) : 0.0;
            const T* wr = wp + fo * fin;
            for (std::int64_t fi = 0; fi < fin; ++fi) {
                acc += static_cast<double>(wr[fi]) * static_cast<double>(xr[fi]);
            }
            yr[fo] = static_cast<T>(acc);
        }
    }
    return y;
}

template <typename T>
Tensor4<T> scale_rows(const Tensor4<T>& a, const Tensor4<T>& s) {
    const Dims4 ad = a.dims(), sd = s.dims();
    if (sd.b != ad.b || sd.c != ad.c || sd.h != ad.h || sd.w != 1) {
        throw ShapeError("scale_rows: scale must be " + Dims4{ad.b, ad.c, ad.h, 1}.str() + ", got " + sd.str());
    }
    const std::int64_t rows = ad.b * ad.c * ad.h;
    Tensor4<T> y = Tensor4<T>::uninit(ad);
    const T* ap = a.data();
    const T* sp = s.data();
    T* yp = y.data();
#pragma omp parallel for schedule(static) if (rows * ad.w > kParallelCutoff)
    for (std::int64_t r = 0; r < rows; ++r) {
        const T f = sp[r];
        const T* ar = ap + r * ad.w;
        T* yr = yp + r * ad.w;
        for (std::int64_t j = 0; j < ad.w; ++j) {
            yr[j] = ar[j] * f;
        }
    }
    return y;
}

template <typename T>
Tensor4<T> tokens_from_grid(const Tensor4<T>& x) {
    const Dims4 d = x.dims();
    Tensor4<T> t = Tensor4<T>::uninit(Dims4{d.b, 1, d.h * d.w, d.c});
    const T* xp = x.data();
    T* tp = t.data();
    for (std::int64_t n = 0; n < d.b; ++n) {
        for (std::int64_t c = 0; c < d.c; ++c) {
            const T* plane = xp + ((n * d.c + c) * d.h) * d.w;
            T* base = tp + n * d.h * d.w * d.c + c;
            for (std::int64_t i = 0; i < d.h * d.w; ++i) {
                base[i * d.c] = plane[i];
            }
        }
    }
    return t;
}

template <typename T>
Tensor4<T> grid_from_tokens(const Tensor4<T>& t, std::int64_t channels, std::int64_t gh, std::int64_t gw) {
    const Dims4 d = t.dims();
    if (d.c != 1 || d.h != gh * gw || d.w != channels) {
        throw ShapeError("grid_from_tokens: token matrix " + d.str() + " does not match grid (" +
                         std::to_string(channels) + "," + std::to_string(gh) + "," + std::to_string(gw) + ")");
    }
    Tensor4<T> x = Tensor4<T>::uninit(Dims4{d.b, channels, gh, gw});
    const T* tp = t.data();
    T* xp = x.data();
    for (std::int64_t n = 0; n < d.b; ++n) {
        for (std::int64_t c = 0; c < channels; ++c) {
            T* plane = xp + ((n * channels + c) * gh) * gw;
            const T* base = tp + n * gh * gw * channels + c;
            for (std::int64_t i = 0; i < gh * gw; ++i) {
                plane[i] = base[i * channels];
            }
        }
    }
    return x;
}

template <typename T>
double l1_value(const Tensor4<T>& a, const Tensor4<T>& b) {
    require_dims_equal(b.dims(), a.dims(), "l1_loss");
    if (a.count() == 0) {
        throw ContractError("l1_loss: empty tensors");
    }
    double acc = 0.0;
    const T* ap = a.data();
    const T* bp = b.data();
    for (std::int64_t i = 0; i < a.count(); ++i) {
        acc += std::abs(static_cast<double>(ap[i]) - static_cast<double>(bp[i]));
    }
    return acc / static_cast<double>(a.count());
}

template <typename T>
double sum_all_value(const Tensor4<T>& x) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < x.count(); ++i) {
        acc += static_cast<double>(x.data()[i]);
    }
    return acc;
}

template <typename T>
double weighted_sum_value(const Tensor4<T>& x, const Tensor4<T>& weights) {
    require_dims_equal(weights.dims(), x.dims(), "weighted_sum");
    double acc = 0.0;
    for (std::int64_t i = 0; i < x.count(); ++i) {
        acc += static_cast<double>(x.data()[i]) * static_cast<double>(weights.data()[i]);
    }
    return acc;
}

#define PAHS_INSTANTIATE(T)                                                                                         \
    template Tensor4<T> conv2d<T>(const Tensor4<T>&, const Tensor4<T>&, const std::type_identity_t<Tensor4<T>>*, const ConvSpec&);       \
    template Tensor4<T> conv2d_transpose<T>(const Tensor4<T>&, const Tensor4<T>&, const std::type_identity_t<Tensor4<T>>*,               \
                                            const ConvSpec&, std::int64_t, std::int64_t);                          \
    template Tensor4<T> conv2d_grad_input<T>(const Tensor4<T>&, const Tensor4<T>&, const ConvSpec&, const Dims4&); \
    template Tensor4<T> conv2d_grad_weight<T>(const Tensor4<T>&, const Tensor4<T>&, const ConvSpec&);              \
    template Tensor4<T> conv2d_transpose_grad_input<T>(const Tensor4<T>&, const Tensor4<T>&, const ConvSpec&,      \
                                                       const Dims4&);                                              \
    template Tensor4<T> conv2d_transpose_grad_weight<T>(const Tensor4<T>&, const Tensor4<T>&, const ConvSpec&);    \
    template Tensor4<T> grad_bias<T>(const Tensor4<T>&);                                                           \
    template Tensor4<T> relu<T>(const Tensor4<T>&);                                                                \
    template Tensor4<T> sigmoid<T>(const Tensor4<T>&);                                                             \
    template Tensor4<T> add<T>(const Tensor4<T>&, const Tensor4<T>&);                                              \
    template Tensor4<T> mul<T>(const Tensor4<T>&, const Tensor4<T>&);                                              \
    template Tensor4<T> scale<T>(const Tensor4<T>&, T);                                                            \
    template Tensor4<T> concat_channels<T>(const Tensor4<T>&, const Tensor4<T>&);                                  \
    template Tensor4<T> matmul<T>(const Tensor4<T>&, const Tensor4<T>&, bool);                                     \
    template Tensor4<T> matmul_grad_a<T>(const Tensor4<T>&, const Tensor4<T>&, bool);                              \
    template Tensor4<T> matmul_grad_b<T>(const Tensor4<T>&, const Tensor4<T>&, bool);                              \
    template Tensor4<T> softmax_rows<T>(const Tensor4<T>&);                                                        \
    template Tensor4<T> softmax_rows_grad<T>(const Tensor4<T>&, const Tensor4<T>&);                                \
    template Tensor4<T> avg_pool_rows<T>(const Tensor4<T>&);                                                       \
    template Tensor4<T> sum_last_axis<T>(const Tensor4<T>&);                                                       \
    template Tensor4<T> fully_connected<T>(const Tensor4<T>&, const Tensor4<T>&, const std::type_identity_t<Tensor4<T>>*);               \
    template Tensor4<T> scale_rows<T>(const Tensor4<T>&, const Tensor4<T>&);                                       \
    template Tensor4<T> tokens_from_grid<T>(const Tensor4<T>&);                                                    \
    template Tensor4<T> grid_from_tokens<T>(const Tensor4<T>&, std::int64_t, std::int64_t, std::int64_t);          \
    template double l1_value<T>(const Tensor4<T>&, const Tensor4<T>&);                                             \
    template double sum_all_value<T>(const Tensor4<T>&);                                                           \
    template double weighted_sum_value<T>(const Tensor4<T>&, const Tensor4<T>&);

PAHS_INSTANTIATE(float)
PAHS_INSTANTIATE(double)
#undef PAHS_INSTANTIATE

} // namespace pahs
