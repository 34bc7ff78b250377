// Times the OpenMP kernels against the serial reference path on a few
// representative layer shapes and prints per-kernel speedups.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#include <omp.h>

#include "pahs/kernels.hpp"
#include "pahs/ref/serial_ref.hpp"
#include "pahs/rng.hpp"

using namespace pahs;

namespace {

Tensor4f random_tensor(Dims4 d, Rng& rng) {
    Tensor4f t{d};
    for (std::int64_t i = 0; i < t.count(); ++i) {
        t.data()[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
    }
    return t;
}

double time_best_of(const std::function<void()>& fn, int reps) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
    }
    return best;
}

void report(const std::string& name, double gmacs, double t_par, double t_ser) {
    std::printf("%-34s %9.3f ms %9.3f ms %7.2fx %8.2f GFLOP/s\n", name.c_str(), t_par * 1e3, t_ser * 1e3,
                t_ser / t_par, 2.0 * gmacs / t_par);
}

} // namespace

int main() {
    std::printf("threads: %d\n", omp_get_max_threads());
    std::printf("%-34s %12s %12s %8s %15s\n", "kernel", "parallel", "serial", "speedup", "parallel rate");
    Rng rng(7);

    struct ConvCase {
        const char* name;
        int c_in, c_out, k, s, p, h, w;
    };
    const ConvCase cases[] = {
        {"conv 24x64x64 k3 s1", 24, 24, 3, 1, 1, 64, 64},
        {"conv 24x64x64 k3 s2", 24, 24, 3, 2, 1, 64, 64},
        {"conv 192x16x16 k3 s1", 192, 192, 3, 1, 1, 16, 16},
        {"conv 3->24 64x64 k3 s1", 3, 24, 3, 1, 1, 64, 64},
    };
    for (const auto& cs : cases) {
        ConvSpec spec;
        spec.in_channels = cs.c_in;
        spec.out_channels = cs.c_out;
        spec.kernel = cs.k;
        spec.stride = cs.s;
        spec.padding = cs.p;
        const Tensor4f x = random_tensor(Dims4{1, cs.c_in, cs.h, cs.w}, rng);
        const Tensor4f w = random_tensor(spec.weight_dims(), rng);
        Tensor4f sink;
        const double t_par = time_best_of([&] { sink = conv2d(x, w, nullptr, spec); }, 5);
        const double t_ser = time_best_of([&] { sink = ref::conv2d(x, w, nullptr, spec); }, 3);
        const double oh = static_cast<double>(spec.conv_out(cs.h, "height"));
        const double ow = static_cast<double>(spec.conv_out(cs.w, "width"));
        report(cs.name, cs.c_out * oh * ow * cs.c_in * cs.k * cs.k / 1e9, t_par, t_ser);
    }

    {
        ConvSpec spec;
        spec.in_channels = 24;
        spec.out_channels = 24;
        spec.kernel = 3;
        spec.stride = 2;
        spec.padding = 1;
        spec.transposed = true;
        const Tensor4f x = random_tensor(Dims4{1, 24, 32, 32}, rng);
        const Tensor4f w = random_tensor(spec.weight_dims(), rng);
        Tensor4f sink;
        const double t_par = time_best_of([&] { sink = conv2d_transpose(x, w, nullptr, spec); }, 5);
        const double t_ser = time_best_of([&] { sink = ref::conv2d_transpose(x, w, nullptr, spec); }, 3);
        report("tconv 24x32x32 k3 s2", 32.0 * 32 * 24 * 24 * 9 / 1e9, t_par, t_ser);
    }

    {
        const Tensor4f a = random_tensor(Dims4{1, 1, 256, 64}, rng);
        const Tensor4f b = random_tensor(Dims4{1, 1, 64, 256}, rng);
        Tensor4f sink;
        const double t_par = time_best_of([&] { sink = matmul(a, b); }, 5);
        const double t_ser = time_best_of([&] { sink = ref::matmul(a, b); }, 3);
        report("matmul 256x64 * 64x256", 256.0 * 256 * 64 / 1e9, t_par, t_ser);
    }

    {
        const Tensor4f m = random_tensor(Dims4{1, 1, 1024, 1024}, rng);
        Tensor4f sink;
        const double t_par = time_best_of([&] { sink = softmax_rows(m); }, 5);
        const double t_ser = time_best_of([&] { sink = ref::softmax_rows(m); }, 3);
        report("softmax_rows 1024x1024", 1024.0 * 1024 / 1e9, t_par, t_ser);
    }

    return 0;
}
