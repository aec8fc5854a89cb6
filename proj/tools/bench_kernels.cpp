// Compares the OpenMP kernels against their serial references: wall time,
// speedup and a bitwise equality check per kernel.

#include <omp.h>

#include <cstdio>
#include <cstring>
#include <vector>

#include "rclip/kernels.hpp"
#include "rclip/rng.hpp"
#include "rclip/tape.hpp"
#include "rclip/tensor.hpp"

using rclip::Rng;
using rclip::Tensor;
namespace kn = rclip::kernels;

namespace {

std::vector<float> random_vec(int64_t n, uint64_t seed) {
    Rng rng(seed);
    std::vector<float> v(static_cast<size_t>(n));
    for (auto& x : v) x = static_cast<float>(rng.normal());
    return v;
}

template <typename F>
double time_ms(F&& fn, int reps) {
    fn();  // warmup
    const double t0 = omp_get_wtime();
    for (int i = 0; i < reps; ++i) fn();
    return (omp_get_wtime() - t0) * 1000.0 / reps;
}

void report(const char* name, double serial_ms, double omp_ms, bool equal) {
    std::printf("%-14s serial %8.3f ms   omp %8.3f ms   speedup %5.2fx   %s\n", name, serial_ms,
                omp_ms, serial_ms / omp_ms, equal ? "bit-equal" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
    int64_t m = 512, n = 512, k = 512;
    int reps = 5;
    if (argc > 1) m = n = k = std::atoll(argv[1]);
    if (argc > 2) reps = std::atoi(argv[2]);
    std::printf("threads: %d, size: %lld, reps: %d\n", omp_get_max_threads(),
                static_cast<long long>(m), reps);

    const auto x = random_vec(m * k, 1);
    const auto w = random_vec(n * k, 2);
    const auto b = random_vec(n, 3);
    std::vector<float> y_s(static_cast<size_t>(m * n)), y_p(static_cast<size_t>(m * n));

    {
        const double ts = time_ms([&] { kn::serial::linear_nt(x.data(), w.data(), b.data(),
                                                              y_s.data(), m, n, k); }, reps);
        const double tp = time_ms([&] { kn::linear_nt(x.data(), w.data(), b.data(), y_p.data(),
                                                      m, n, k); }, reps);
        report("linear_nt", ts, tp,
               std::memcmp(y_s.data(), y_p.data(), y_s.size() * sizeof(float)) == 0);
    }
    {
        const double ts = time_ms([&] { kn::serial::matmul_tn(x.data(), x.data(), y_s.data(),
                                                              m, k, k); }, reps);
        const double tp = time_ms([&] { kn::matmul_tn(x.data(), x.data(), y_p.data(), m, k, k); },
                                  reps);
        report("matmul_tn", ts, tp,
               std::memcmp(y_s.data(), y_p.data(), static_cast<size_t>(k * k) * sizeof(float)) == 0);
    }
    {
        std::vector<float> sm_s(x.size()), sm_p(x.size());
        const double ts = time_ms([&] { kn::serial::softmax_rows(x.data(), sm_s.data(), m, k); },
                                  reps);
        const double tp = time_ms([&] { kn::softmax_rows(x.data(), sm_p.data(), m, k); }, reps);
        report("softmax_rows", ts, tp,
               std::memcmp(sm_s.data(), sm_p.data(), sm_s.size() * sizeof(float)) == 0);
    }
    {
        std::vector<float> g(static_cast<size_t>(k), 1.f), beta(static_cast<size_t>(k), 0.f);
        std::vector<float> ln_s(x.size()), ln_p(x.size()), mu(static_cast<size_t>(m)),
            rs(static_cast<size_t>(m));
        const double ts = time_ms([&] { kn::serial::layernorm_fwd(x.data(), g.data(), beta.data(),
                                                                  ln_s.data(), mu.data(), rs.data(),
                                                                  m, k, 1e-5f); }, reps);
        const double tp = time_ms([&] { kn::layernorm_fwd(x.data(), g.data(), beta.data(),
                                                          ln_p.data(), mu.data(), rs.data(), m, k,
                                                          1e-5f); }, reps);
        report("layernorm", ts, tp,
               std::memcmp(ln_s.data(), ln_p.data(), ln_s.size() * sizeof(float)) == 0);
    }
    {
        std::vector<float> ge_s(x.size()), ge_p(x.size());
        const double ts = time_ms([&] { kn::serial::quickgelu_fwd(x.data(), ge_s.data(),
                                                                  static_cast<int64_t>(x.size())); },
                                  reps);
        const double tp = time_ms([&] { kn::quickgelu_fwd(x.data(), ge_p.data(),
                                                          static_cast<int64_t>(x.size())); }, reps);
        report("quickgelu", ts, tp,
               std::memcmp(ge_s.data(), ge_p.data(), ge_s.size() * sizeof(float)) == 0);
    }
    {
        // full multi-head attention op (forward) at transformer-ish shape
        const int64_t bsz = 8, t = 64, wdt = 256, heads = 8;
        rclip::Tape<float> tape;
        Tensor<float> qkv({bsz, t, 3 * wdt});
        Rng rng(11);
        for (int64_t i = 0; i < qkv.numel(); ++i) qkv[i] = static_cast<float>(rng.normal());
        const double tp = time_ms(
            [&] {
                rclip::Tape<float> tp_;
                auto v = tp_.constant(qkv);
                tp_.attention(v, static_cast<int>(heads));
            },
            reps);
        std::printf("%-14s omp %8.3f ms (B=%lld T=%lld W=%lld h=%lld)\n", "attention", tp,
                    static_cast<long long>(bsz), static_cast<long long>(t),
                    static_cast<long long>(wdt), static_cast<long long>(heads));
    }
    return 0;
}
