#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "rclip/rng.hpp"
#include "rclip/tape.hpp"

using namespace rclip;
using Var = Tape<double>::Var;

namespace {

Tensor<double> random_tensor(std::vector<int64_t> shape, uint64_t seed, double scale = 1.0) {
    Tensor<double> t(std::move(shape));
    Rng rng(seed);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal() * scale;
    return t;
}

// Scalar objective: sum(weights .* op(inputs)). Checks the tape gradient of
// every input element against central finite differences.
void check_grads(const std::vector<Tensor<double>>& inputs,
                 const std::function<Var(Tape<double>&, const std::vector<Var>&)>& build,
                 double tol = 2e-6) {
    Tape<double> tape;
    std::vector<Var> vars;
    for (const auto& in : inputs) vars.push_back(tape.leaf(in, true));
    const Var y = build(tape, vars);
    const Tensor<double> weights = random_tensor(tape.val(y).shape, 777);
    tape.backward(y, weights);

    auto objective = [&](const std::vector<Tensor<double>>& xs) {
        Tape<double> t2;
        std::vector<Var> vs;
        for (const auto& x : xs) vs.push_back(t2.leaf(x, false));
        const Tensor<double>& out = t2.val(build(t2, vs));
        double L = 0;
        for (int64_t i = 0; i < out.numel(); ++i) L += out[i] * weights[i];
        return L;
    };

    const double h = 1e-5;
    for (size_t which = 0; which < inputs.size(); ++which) {
        const Tensor<double>& analytic = tape.grad(vars[which]);
        REQUIRE(analytic.numel() == inputs[which].numel());
        for (int64_t j = 0; j < inputs[which].numel(); ++j) {
            std::vector<Tensor<double>> plus = inputs, minus = inputs;
            plus[which][j] += h;
            minus[which][j] -= h;
            const double fd = (objective(plus) - objective(minus)) / (2 * h);
            const double a = analytic[j];
            const double denom = std::max({1e-6, std::fabs(fd), std::fabs(a)});
            INFO("input ", which, " element ", j, " fd=", fd, " analytic=", a);
            CHECK(std::fabs(fd - a) / denom < tol);
        }
    }
}

}  // namespace

TEST_CASE("linear gradient (with bias)") {
    check_grads({random_tensor({3, 4}, 1), random_tensor({5, 4}, 2), random_tensor({5}, 3)},
                [](Tape<double>& t, const std::vector<Var>& v) {
                    return t.linear(v[0], v[1], v[2]);
                });
}

TEST_CASE("linear gradient (no bias, batched 3d input)") {
    check_grads({random_tensor({2, 3, 4}, 4), random_tensor({6, 4}, 5)},
                [](Tape<double>& t, const std::vector<Var>& v) { return t.linear(v[0], v[1]); });
}

TEST_CASE("add and add_rows gradients") {
    check_grads({random_tensor({2, 3, 4}, 6), random_tensor({2, 3, 4}, 7)},
                [](Tape<double>& t, const std::vector<Var>& v) { return t.add(v[0], v[1]); });
    check_grads({random_tensor({2, 3, 4}, 8), random_tensor({3, 4}, 9)},
                [](Tape<double>& t, const std::vector<Var>& v) { return t.add_rows(v[0], v[1]); });
}

TEST_CASE("prepend_row gradient") {
    check_grads({random_tensor({4}, 10), random_tensor({2, 3, 4}, 11)},
                [](Tape<double>& t, const std::vector<Var>& v) {
                    return t.prepend_row(v[0], v[1]);
                });
}

TEST_CASE("layernorm gradient") {
    check_grads({random_tensor({5, 7}, 12), random_tensor({7}, 13, 0.5), random_tensor({7}, 14)},
                [](Tape<double>& t, const std::vector<Var>& v) {
                    return t.layernorm(v[0], v[1], v[2]);
                },
                5e-6);
}

TEST_CASE("quickgelu gradient") {
    check_grads({random_tensor({4, 6}, 15)},
                [](Tape<double>& t, const std::vector<Var>& v) { return t.quickgelu(v[0]); });
}

TEST_CASE("attention gradient") {
    check_grads({random_tensor({2, 5, 3 * 8}, 16, 0.5)},
                [](Tape<double>& t, const std::vector<Var>& v) { return t.attention(v[0], 2); },
                5e-6);
}

TEST_CASE("inject gradient and bit-exact passthrough") {
    Tensor<double> mask({2, 4});
    mask[1] = 1;  // (0,1)
    mask[6] = 1;  // (1,2)
    check_grads({random_tensor({2, 4, 3}, 17), random_tensor({2, 3}, 18)},
                [mask](Tape<double>& t, const std::vector<Var>& v) {
                    return t.inject(v[0], mask, v[1]);
                });

    // unmasked rows pass through bit-identically
    Tape<double> t;
    const Tensor<double> e = random_tensor({2, 4, 3}, 19);
    const Tensor<double> a = random_tensor({2, 3}, 20);
    const Tensor<double>& y = t.val(t.inject(t.constant(e), mask, t.constant(a)));
    for (int64_t b = 0; b < 2; ++b)
        for (int64_t l = 0; l < 4; ++l)
            for (int64_t d = 0; d < 3; ++d) {
                const double want = mask[b * 4 + l] != 0 ? a[b * 3 + d] : e[(b * 4 + l) * 3 + d];
                CHECK(y[(b * 4 + l) * 3 + d] == want);
            }
}

TEST_CASE("gather_rows and mean2 gradients") {
    check_grads({random_tensor({3, 5, 4}, 21)},
                [](Tape<double>& t, const std::vector<Var>& v) {
                    return t.gather_rows(v[0], {1, 0, 4});
                });
    check_grads({random_tensor({3, 4}, 22), random_tensor({3, 4}, 23)},
                [](Tape<double>& t, const std::vector<Var>& v) { return t.mean2(v[0], v[1]); });
}

TEST_CASE("composite stack gradient (mini transformer block)") {
    check_grads(
        {random_tensor({2, 4, 6}, 24, 0.5), random_tensor({18, 6}, 25, 0.2),
         random_tensor({18}, 26, 0.1), random_tensor({6, 6}, 27, 0.2), random_tensor({6}, 28, 0.1),
         random_tensor({6}, 29, 0.3), random_tensor({6}, 30, 0.1)},
        [](Tape<double>& t, const std::vector<Var>& v) {
            Var h = t.layernorm(v[0], v[5], v[6]);
            Var qkv = t.linear(h, v[1], v[2]);
            Var a = t.attention(qkv, 3);
            a = t.linear(a, v[3], v[4]);
            Var x = t.add(v[0], a);
            return t.gather_rows(t.quickgelu(x), {0, 2});
        },
        1e-5);
}

TEST_CASE("gradients accumulate across repeated parameter use") {
    // same weight applied twice; analytic grad must cover both paths
    check_grads({random_tensor({3, 4}, 31), random_tensor({4, 4}, 32)},
                [](Tape<double>& t, const std::vector<Var>& v) {
                    Var y1 = t.linear(v[0], v[1]);
                    Var y2 = t.linear(y1, v[1]);
                    return t.add(y1, y2);
                });
}

TEST_CASE("no gradient flows into frozen leaves") {
    Tape<double> t;
    Var frozen = t.leaf(random_tensor({3, 4}, 33), false);
    Var live = t.leaf(random_tensor({5, 4}, 34), true);
    Var y = t.linear(frozen, live);
    Tensor<double> seed(t.val(y).shape);
    seed.fill(1.0);
    t.backward(y, seed);
    CHECK(t.grad(frozen).numel() == 0);
    CHECK(t.grad(live).numel() == t.val(live).numel());
}
