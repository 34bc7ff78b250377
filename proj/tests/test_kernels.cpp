#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <omp.h>

#include "pahs/kernels.hpp"
#include "pahs/ref/serial_ref.hpp"
#include "pahs/rng.hpp"

using namespace pahs;

namespace {

template <typename T>
Tensor4<T> random_tensor(Dims4 d, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor4<T> t{d};
    for (std::int64_t i = 0; i < t.count(); ++i) {
        t.data()[i] = static_cast<T>(rng.uniform(lo, hi));
    }
    return t;
}

template <typename T>
double max_abs_diff(const Tensor4<T>& a, const Tensor4<T>& b) {
    REQUIRE(a.dims() == b.dims());
    double m = 0.0;
    for (std::int64_t i = 0; i < a.count(); ++i) {
        m = std::max(m, std::abs(static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i])));
    }
    return m;
}

// Random spec from the family where the transposed conv exactly inverts the
// spatial downsampling: 2*pad < kernel <= 2*pad + stride.
ConvSpec random_tiling_spec(Rng& rng) {
    ConvSpec s;
    int p_lo = 0, p_hi = -1;
    while (p_lo > p_hi) {
        s.stride = 1 + static_cast<int>(rng.index(3));
        s.kernel = 1 + static_cast<int>(rng.index(4));
        p_lo = std::max(0, (s.kernel - s.stride + 1) / 2);
        p_hi = (s.kernel - 1) / 2;
    }
    s.padding = p_lo + static_cast<int>(rng.index(p_hi - p_lo + 1));
    s.in_channels = 1 + static_cast<int>(rng.index(4));
    s.out_channels = 1 + static_cast<int>(rng.index(4));
    s.bias = false;
    return s;
}

} // namespace

TEST_CASE("conv2d matches the hand example") {
    // all-ones 3x3 input, all-ones 3x3 kernel, stride 1, pad 1
    ConvSpec spec;
    spec.in_channels = 1;
    spec.out_channels = 1;
    const Tensor4d x = Tensor4d::full(Dims4{1, 1, 3, 3}, 1.0);
    const Tensor4d w = Tensor4d::full(Dims4{1, 1, 3, 3}, 1.0);
    const Tensor4d y = conv2d(x, w, nullptr, spec);
    const double want[9] = {4, 6, 4, 6, 9, 6, 4, 6, 4};
    for (int i = 0; i < 9; ++i) {
        CHECK(y.data()[i] == want[i]);
    }
}

TEST_CASE("conv2d zero input gives zero output") {
    Rng rng(3);
    ConvSpec spec;
    spec.in_channels = 2;
    spec.out_channels = 3;
    const Tensor4f x{Dims4{2, 2, 6, 6}};
    const Tensor4f w = random_tensor<float>(spec.weight_dims(), rng);
    const Tensor4f y = conv2d(x, w, nullptr, spec);
    CHECK(y.max_abs() == 0.0);
}

TEST_CASE("conv2d shape formula") {
    ConvSpec spec;
    spec.in_channels = 1;
    spec.out_channels = 1;
    spec.stride = 2;
    Rng rng(4);
    const Tensor4f x = random_tensor<float>(Dims4{1, 1, 4, 4}, rng);
    const Tensor4f w = random_tensor<float>(spec.weight_dims(), rng);
    const Tensor4f y = conv2d(x, w, nullptr, spec);
    CHECK(y.dims() == Dims4{1, 1, 2, 2});
}

TEST_CASE("conv2d errors name the offending axis") {
    ConvSpec spec;
    spec.in_channels = 3;
    spec.out_channels = 1;
    Rng rng(5);
    const Tensor4f x = random_tensor<float>(Dims4{1, 2, 4, 4}, rng);
    const Tensor4f w = random_tensor<float>(spec.weight_dims(), rng);
    CHECK_THROWS_WITH_AS(conv2d(x, w, nullptr, spec), doctest::Contains("channel"), ShapeError);

    spec.in_channels = 2;
    spec.padding = 0;
    spec.kernel = 5;
    const Tensor4f w2 = random_tensor<float>(spec.weight_dims(), rng);
    CHECK_THROWS_WITH_AS(conv2d(x, w2, nullptr, spec), doctest::Contains("height"), ShapeError);
}

TEST_CASE("conv2d agrees with the serial reference") {
    Rng rng(11);
    for (int it = 0; it < 10; ++it) {
        ConvSpec spec;
        spec.in_channels = 1 + static_cast<int>(rng.index(4));
        spec.out_channels = 1 + static_cast<int>(rng.index(4));
        spec.kernel = 1 + static_cast<int>(rng.index(4));
        spec.stride = 1 + static_cast<int>(rng.index(2));
        spec.padding = static_cast<int>(rng.index(spec.kernel));
        const std::int64_t h = spec.kernel + rng.index(6);
        const std::int64_t w = spec.kernel + rng.index(6);
        const Tensor4d x = random_tensor<double>(Dims4{2, spec.in_channels, h, w}, rng);
        const Tensor4d wt = random_tensor<double>(spec.weight_dims(), rng);
        Tensor4d bias{spec.bias_dims()};
        for (std::int64_t i = 0; i < bias.count(); ++i) {
            bias.data()[i] = rng.uniform(-1.0, 1.0);
        }
        const Tensor4d got = conv2d(x, wt, &bias, spec);
        const Tensor4d want = ref::conv2d(x, wt, &bias, spec);
        CHECK(max_abs_diff(got, want) < 1e-12);
        CHECK(got.all_finite());
    }
}

TEST_CASE("conv2d_transpose zero input and shape") {
    ConvSpec spec;
    spec.in_channels = 1;
    spec.out_channels = 1;
    spec.kernel = 2;
    spec.stride = 2;
    spec.padding = 0;
    spec.transposed = true;
    Rng rng(6);
    const Tensor4f w = random_tensor<float>(spec.weight_dims(), rng);
    const Tensor4f x{Dims4{1, 1, 2, 2}};
    const Tensor4f y = conv2d_transpose(x, w, nullptr, spec);
    CHECK(y.dims() == Dims4{1, 1, 4, 4});
    CHECK(y.max_abs() == 0.0);
}

TEST_CASE("conv2d_transpose agrees with the serial scatter reference") {
    Rng rng(12);
    for (int it = 0; it < 10; ++it) {
        ConvSpec spec = random_tiling_spec(rng);
        spec.transposed = true;
        const std::int64_t th = 2 + rng.index(5);
        const std::int64_t tw = 2 + rng.index(5);
        const Tensor4d x = random_tensor<double>(Dims4{2, spec.in_channels, th, tw}, rng);
        const Tensor4d wt = random_tensor<double>(spec.weight_dims(), rng);
        const Tensor4d got = conv2d_transpose(x, wt, nullptr, spec);
        const Tensor4d want = ref::conv2d_transpose(x, wt, nullptr, spec);
        CHECK(max_abs_diff(got, want) < 1e-12);
    }
}

TEST_CASE("transposed conv inverts the conv shape map when stride divides the extent") {
    Rng rng(13);
    for (int it = 0; it < 20; ++it) {
        ConvSpec spec = random_tiling_spec(rng);
        const std::int64_t h = spec.stride * (1 + rng.index(6));
        const std::int64_t w = spec.stride * (1 + rng.index(6));
        CHECK(spec.conv_out(h, "height") == h / spec.stride);
        CHECK(spec.tconv_out(h / spec.stride) == h);
        CHECK(spec.conv_out(w, "width") == w / spec.stride);
    }
}

TEST_CASE("adjointness: <conv(x), y> == <x, convT(y)>") {
    Rng rng(14);
    for (int it = 0; it < 50; ++it) {
        ConvSpec spec = random_tiling_spec(rng);
        const std::int64_t h = spec.stride * (1 + rng.index(5));
        const std::int64_t w = spec.stride * (1 + rng.index(5));
        const Tensor4d x = random_tensor<double>(Dims4{1, spec.in_channels, h, w}, rng);
        const Tensor4d wt = random_tensor<double>(spec.weight_dims(), rng);
        const Tensor4d cx = conv2d(x, wt, nullptr, spec);
        const Tensor4d y = random_tensor<double>(cx.dims(), rng);

        ConvSpec tspec = spec;
        tspec.transposed = true;
        tspec.in_channels = spec.out_channels;
        tspec.out_channels = spec.in_channels;
        const Tensor4d ty = conv2d_transpose(y, wt, nullptr, tspec, h, w);
        REQUIRE(ty.dims() == x.dims());

        // both inner products through the serial reference path as well
        const Tensor4d cx_ref = ref::conv2d(x, wt, nullptr, spec);
        const Tensor4d ty_ref = ref::conv2d_transpose(y, wt, nullptr, tspec, h, w);

        const double lhs = weighted_sum_value(cx, y);
        const double rhs = weighted_sum_value(x, ty);
        const double lhs_ref = weighted_sum_value(cx_ref, y);
        const double rhs_ref = weighted_sum_value(x, ty_ref);
        const double denom = std::max({std::abs(lhs), std::abs(rhs), 1e-30});
        CHECK(std::abs(lhs - rhs) / denom < 1e-10);
        CHECK(std::abs(lhs_ref - rhs_ref) / std::max({std::abs(lhs_ref), std::abs(rhs_ref), 1e-30}) < 1e-10);
        CHECK(std::abs(lhs - lhs_ref) / denom < 1e-10);
    }
}

TEST_CASE("matmul identity and hand example") {
    Tensor4d eye{Dims4{1, 1, 2, 2}};
    eye.at(0, 0, 0, 0) = 1.0;
    eye.at(0, 0, 1, 1) = 1.0;
    Rng rng(15);
    const Tensor4d m = random_tensor<double>(Dims4{1, 1, 2, 2}, rng);
    CHECK(max_abs_diff(matmul(eye, m), m) == 0.0);

    Tensor4d a{Dims4{1, 1, 2, 2}, {1, 2, 3, 4}};
    Tensor4d b{Dims4{1, 1, 2, 1}, {5, 6}};
    const Tensor4d y = matmul(a, b);
    CHECK(y.at(0, 0, 0, 0) == 17.0);
    CHECK(y.at(0, 0, 1, 0) == 39.0);
}

TEST_CASE("matmul with empty contraction is the zero matrix") {
    const Tensor4d a{Dims4{1, 1, 3, 0}};
    const Tensor4d b{Dims4{1, 1, 0, 2}};
    const Tensor4d y = matmul(a, b);
    CHECK(y.dims() == Dims4{1, 1, 3, 2});
    CHECK(y.max_abs() == 0.0);
}

TEST_CASE("matmul inner-dim mismatch") {
    const Tensor4d a{Dims4{1, 1, 2, 3}};
    const Tensor4d b{Dims4{1, 1, 4, 2}};
    CHECK_THROWS_AS(matmul(a, b), ShapeError);
}

TEST_CASE("matmul agrees with reference, both transpose modes") {
    Rng rng(16);
    for (const bool tb : {false, true}) {
        const Tensor4d a = random_tensor<double>(Dims4{2, 3, 4, 5}, rng);
        const Tensor4d b = random_tensor<double>(tb ? Dims4{2, 3, 6, 5} : Dims4{2, 3, 5, 6}, rng);
        CHECK(max_abs_diff(matmul(a, b, tb), ref::matmul(a, b, tb)) < 1e-13);
    }
}

TEST_CASE("softmax rows: uniform, closed form, stability") {
    const Tensor4d u = Tensor4d::full(Dims4{1, 1, 1, 5}, 3.7);
    const Tensor4d su = softmax_rows(u);
    for (int i = 0; i < 5; ++i) {
        CHECK(su.data()[i] == doctest::Approx(0.2).epsilon(1e-12));
    }

    Tensor4d r{Dims4{1, 1, 1, 2}, {0.0, std::log(2.0)}};
    const Tensor4d sr = softmax_rows(r);
    CHECK(sr.data()[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(sr.data()[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

    Tensor4d big{Dims4{1, 1, 1, 3}, {0.0, 1000.0, -5.0}};
    const Tensor4d sb = softmax_rows(big);
    CHECK(sb.all_finite());
    CHECK(sb.data()[1] >= 1.0 - 1e-9);
}

TEST_CASE("softmax rows sum to one and lie in [0,1]") {
    Rng rng(17);
    for (int it = 0; it < 100; ++it) {
        const Tensor4d m = random_tensor<double>(Dims4{1, 2, 5, 8}, rng, -30.0, 30.0);
        const Tensor4d s = softmax_rows(m);
        for (std::int64_t r = 0; r < 10; ++r) {
            double sum = 0.0;
            for (std::int64_t j = 0; j < 8; ++j) {
                const double v = s.data()[r * 8 + j];
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
                sum += v;
            }
            CHECK(std::abs(sum - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("sigmoid, avg_pool, fully_connected basics") {
    Tensor4d z{Dims4{1, 1, 1, 1}};
    CHECK(sigmoid(z).data()[0] == 0.5);

    Tensor4d extreme{Dims4{1, 1, 1, 4}, {1e6, -1e6, 800.0, -800.0}};
    const Tensor4d s = sigmoid(extreme);
    for (int i = 0; i < 4; ++i) {
        CHECK(s.data()[i] > 0.0);
        CHECK(s.data()[i] < 1.0);
    }
    const Tensor4f sf = sigmoid(extreme.cast<float>());
    for (int i = 0; i < 4; ++i) {
        CHECK(sf.data()[i] > 0.0f);
        CHECK(sf.data()[i] < 1.0f);
    }

    const Tensor4d cvec = Tensor4d::full(Dims4{1, 1, 1, 9}, -2.5);
    CHECK(avg_pool_rows(cvec).data()[0] == doctest::Approx(-2.5).epsilon(1e-15));

    Rng rng(18);
    const Tensor4d x = random_tensor<double>(Dims4{1, 1, 4, 3}, rng);
    const Tensor4d w{Dims4{1, 1, 2, 3}};
    Tensor4d b{Dims4{1, 1, 1, 2}, {0.25, -1.5}};
    const Tensor4d y = fully_connected(x, w, &b);
    for (std::int64_t r = 0; r < 4; ++r) {
        CHECK(y.at(0, 0, r, 0) == 0.25);
        CHECK(y.at(0, 0, r, 1) == -1.5);
    }
}

TEST_CASE("scale_rows broadcasts a per-row factor") {
    Rng rng(19);
    const Tensor4d a = random_tensor<double>(Dims4{1, 1, 3, 4}, rng);
    Tensor4d s{Dims4{1, 1, 3, 1}, {2.0, 0.0, -1.0}};
    const Tensor4d y = scale_rows(a, s);
    for (std::int64_t j = 0; j < 4; ++j) {
        CHECK(y.at(0, 0, 0, j) == 2.0 * a.at(0, 0, 0, j));
        CHECK(y.at(0, 0, 1, j) == 0.0);
        CHECK(y.at(0, 0, 2, j) == -a.at(0, 0, 2, j));
    }
}

TEST_CASE("tokens_from_grid round trip") {
    Rng rng(20);
    const Tensor4d x = random_tensor<double>(Dims4{2, 3, 4, 5}, rng);
    const Tensor4d t = tokens_from_grid(x);
    CHECK(t.dims() == Dims4{2, 1, 20, 3});
    const Tensor4d back = grid_from_tokens(t, 3, 4, 5);
    CHECK(back.same_bits(x));
}

TEST_CASE("kernels are bit-deterministic across thread counts") {
    Rng rng(21);
    ConvSpec spec;
    spec.in_channels = 8;
    spec.out_channels = 8;
    const Tensor4f x = random_tensor<float>(Dims4{2, 8, 16, 16}, rng);
    const Tensor4f w = random_tensor<float>(spec.weight_dims(), rng);
    const int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    const Tensor4f y1 = conv2d(x, w, nullptr, spec);
    omp_set_num_threads(saved);
    const Tensor4f y2 = conv2d(x, w, nullptr, spec);
    const Tensor4f y3 = conv2d(x, w, nullptr, spec);
    CHECK(y1.same_bits(y2));
    CHECK(y2.same_bits(y3));
}

TEST_CASE("l1 value examples") {
    const Tensor4d a = Tensor4d::full(Dims4{1, 2, 3, 4}, 1.25);
    CHECK(l1_value(a, a) == 0.0);
    const Tensor4d b = Tensor4d::full(Dims4{1, 2, 3, 4}, 0.75);
    CHECK(l1_value(a, b) == doctest::Approx(0.5).epsilon(1e-15));
    Rng rng(22);
    const Tensor4d u = random_tensor<double>(Dims4{1, 2, 3, 4}, rng);
    const Tensor4d v = random_tensor<double>(Dims4{1, 2, 3, 4}, rng);
    double hand = 0.0;
    for (std::int64_t i = 0; i < u.count(); ++i) {
        hand += std::abs(u.data()[i] - v.data()[i]);
    }
    hand /= static_cast<double>(u.count());
    CHECK(l1_value(u, v) == doctest::Approx(hand).epsilon(1e-15));
}
