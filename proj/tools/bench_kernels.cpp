// SPDX-License-Identifier: Apache-2.0
//
// Times the OpenMP kernels against the serial reference on training-shaped
// workloads and reports GFLOP/s plus the parallel speedup. The two paths must
// agree bit-for-bit; this binary asserts that while it measures.
#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <vector>

#include "duolearn/kernels.h"
#include "duolearn/rng.h"

using namespace duolearn;
using Clock = std::chrono::steady_clock;

namespace {

std::vector<double> random_vec(int64_t n, uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(static_cast<size_t>(n));
    for (auto& x : v) x = rng.next_gaussian();
    return v;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Case {
    const char* name;
    int64_t m, k, n;
    int reps;
};

void bench_matmul(const Case& c) {
    auto a = random_vec(c.m * c.k, 1);
    auto b = random_vec(c.k * c.n, 2);
    std::vector<double> out_par(static_cast<size_t>(c.m * c.n));
    std::vector<double> out_ser(static_cast<size_t>(c.m * c.n));

    const double flops = 2.0 * static_cast<double>(c.m) * static_cast<double>(c.k) *
                         static_cast<double>(c.n) * c.reps;

    auto t0 = Clock::now();
    for (int r = 0; r < c.reps; ++r)
        kernels::matmul_nn_mode(false, a.data(), b.data(), out_ser.data(), c.m, c.k, c.n);
    const double t_ser = seconds_since(t0);

    t0 = Clock::now();
    for (int r = 0; r < c.reps; ++r)
        kernels::matmul_nn_mode(true, a.data(), b.data(), out_par.data(), c.m, c.k, c.n);
    const double t_par = seconds_since(t0);

    if (out_par != out_ser) {
        std::fprintf(stderr, "FATAL: %s parallel/serial mismatch\n", c.name);
        std::exit(1);
    }
    std::printf("%-28s serial %7.2f GFLOP/s   omp %7.2f GFLOP/s   speedup %.2fx\n", c.name,
                flops / t_ser / 1e9, flops / t_par / 1e9, t_ser / t_par);
}

void bench_attention() {
    const int64_t batch = 32, seq = 64, heads = 4, width = 128;
    const int reps = 20;
    auto q = random_vec(batch * seq * width, 3);
    auto k = random_vec(batch * seq * width, 4);
    auto v = random_vec(batch * seq * width, 5);
    std::vector<double> out_par(static_cast<size_t>(batch * seq * width)), out_ser(out_par);
    std::vector<double> probs(static_cast<size_t>(batch * heads * seq * seq));

    auto t0 = Clock::now();
    for (int r = 0; r < reps; ++r)
        kernels::causal_attention_forward_mode(false, q.data(), k.data(), v.data(),
                                               out_ser.data(), probs.data(), batch, seq, heads,
                                               width);
    const double t_ser = seconds_since(t0);
    t0 = Clock::now();
    for (int r = 0; r < reps; ++r)
        kernels::causal_attention_forward_mode(true, q.data(), k.data(), v.data(),
                                               out_par.data(), probs.data(), batch, seq, heads,
                                               width);
    const double t_par = seconds_since(t0);
    if (out_par != out_ser) {
        std::fprintf(stderr, "FATAL: attention parallel/serial mismatch\n");
        std::exit(1);
    }
    std::printf("%-28s serial %7.2f ms/call     omp %7.2f ms/call     speedup %.2fx\n",
                "causal_attention B32 L64", t_ser / reps * 1e3, t_par / reps * 1e3,
                t_ser / t_par);
}

}  // namespace

int main() {
    std::printf("threads: %d\n", kernels::max_threads());
    // Shapes that dominate a training step of the default desk model.
    bench_matmul({"matmul 2048x128x128", 2048, 128, 128, 50});
    bench_matmul({"matmul 2048x128x512", 2048, 128, 512, 20});
    bench_matmul({"matmul 2048x512x128", 2048, 512, 128, 20});
    bench_matmul({"matmul 2048x128x258 (head)", 2048, 128, 258, 20});
    bench_matmul({"matmul 128x2048x512 (grad)", 128, 2048, 512, 20});
    bench_attention();
    return 0;
}
