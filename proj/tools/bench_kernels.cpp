// Micro-benchmark: OpenMP kernels against the serial reference. Verifies
// bit-identical outputs while timing both paths.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "loadseg/common.hpp"
#include "loadseg/kernels.hpp"

using namespace loadseg;
using Clock = std::chrono::steady_clock;

namespace {

std::vector<float> random_vec(size_t n, uint64_t seed) {
    std::vector<float> v(n);
    Rng rng(seed);
    for (float& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
    return v;
}

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

struct Case {
    const char* name;
    int H, W, Ci, Co, K, stride, pad, reps;
};

void run_case(const Case& c) {
    const int Ho = kernels::conv_out_dim(c.H, c.K, c.stride, c.pad);
    const int Wo = kernels::conv_out_dim(c.W, c.K, c.stride, c.pad);
    const auto x = random_vec(static_cast<size_t>(c.H) * c.W * c.Ci, 1);
    const auto w = random_vec(static_cast<size_t>(c.K) * c.K * c.Ci * c.Co, 2);
    const auto b = random_vec(c.Co, 3);
    const auto gy = random_vec(static_cast<size_t>(Ho) * Wo * c.Co, 4);
    std::vector<float> y_ser(gy.size()), y_par(gy.size());
    std::vector<float> gx_ser(x.size()), gx_par(x.size());
    std::vector<float> gw_ser(w.size()), gw_par(w.size());
    std::vector<float> gb_ser(b.size()), gb_par(b.size());

    auto t0 = Clock::now();
    for (int r = 0; r < c.reps; ++r)
        kernels::reference::conv2d_forward(x.data(), c.H, c.W, c.Ci, w.data(), c.K, c.K, c.Co,
                                           b.data(), c.stride, c.pad, y_ser.data(), Ho, Wo);
    const double fwd_ser = ms_since(t0);

    t0 = Clock::now();
    for (int r = 0; r < c.reps; ++r)
        kernels::conv2d_forward(x.data(), c.H, c.W, c.Ci, w.data(), c.K, c.K, c.Co, b.data(),
                                c.stride, c.pad, y_par.data(), Ho, Wo);
    const double fwd_par = ms_since(t0);

    t0 = Clock::now();
    for (int r = 0; r < c.reps; ++r) {
        std::memset(gx_ser.data(), 0, gx_ser.size() * sizeof(float));
        std::memset(gw_ser.data(), 0, gw_ser.size() * sizeof(float));
        std::memset(gb_ser.data(), 0, gb_ser.size() * sizeof(float));
        kernels::reference::conv2d_backward_input(gy.data(), Ho, Wo, c.Co, w.data(), c.K, c.K, c.Ci,
                                                  c.stride, c.pad, gx_ser.data(), c.H, c.W);
        kernels::reference::conv2d_backward_params(gy.data(), Ho, Wo, c.Co, x.data(), c.H, c.W,
                                                   c.Ci, c.K, c.K, c.stride, c.pad, gw_ser.data(),
                                                   gb_ser.data());
    }
    const double bwd_ser = ms_since(t0);

    t0 = Clock::now();
    for (int r = 0; r < c.reps; ++r) {
        std::memset(gx_par.data(), 0, gx_par.size() * sizeof(float));
        std::memset(gw_par.data(), 0, gw_par.size() * sizeof(float));
        std::memset(gb_par.data(), 0, gb_par.size() * sizeof(float));
        kernels::conv2d_backward_input(gy.data(), Ho, Wo, c.Co, w.data(), c.K, c.K, c.Ci, c.stride,
                                       c.pad, gx_par.data(), c.H, c.W);
        kernels::conv2d_backward_params(gy.data(), Ho, Wo, c.Co, x.data(), c.H, c.W, c.Ci, c.K, c.K,
                                        c.stride, c.pad, gw_par.data(), gb_par.data());
    }
    const double bwd_par = ms_since(t0);

    const bool fwd_ok = std::memcmp(y_ser.data(), y_par.data(), y_ser.size() * sizeof(float)) == 0;
    const bool bwd_ok =
        std::memcmp(gx_ser.data(), gx_par.data(), gx_ser.size() * sizeof(float)) == 0 &&
        std::memcmp(gw_ser.data(), gw_par.data(), gw_ser.size() * sizeof(float)) == 0 &&
        std::memcmp(gb_ser.data(), gb_par.data(), gb_ser.size() * sizeof(float)) == 0;

    std::printf("%-22s fwd %8.2f / %8.2f ms (x%.2f)  bwd %8.2f / %8.2f ms (x%.2f)  %s\n", c.name,
                fwd_ser, fwd_par, fwd_ser / fwd_par, bwd_ser, bwd_par, bwd_ser / bwd_par,
                fwd_ok && bwd_ok ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP: %d thread(s)\n", omp_get_max_threads());
#else
    std::printf("OpenMP: disabled at build time\n");
#endif
    std::printf("%-22s %27s %32s\n", "case", "serial/parallel forward", "serial/parallel backward");
    run_case({"conv 32x32 3->16", 32, 32, 3, 16, 3, 1, 1, 200});
    run_case({"conv 32x32 16->16", 32, 32, 16, 16, 3, 1, 1, 100});
    run_case({"conv 64x64 16->16", 64, 64, 16, 16, 3, 1, 1, 25});
    run_case({"conv s2 32x32 12->32", 32, 32, 12, 32, 3, 2, 1, 200});
    return 0;
}
