#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rclip/loss.hpp"
#include "rclip/rng.hpp"

using namespace rclip;

namespace {

Tensor<double> random_embeddings(int64_t b, int64_t d, uint64_t seed, double scale = 1.0) {
    Tensor<double> t({b, d});
    Rng rng(seed);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal() * scale;
    return t;
}

// True when every triplet term sits clear of the hinge kink.
bool away_from_hinge(const Tensor<double>& v1, const Tensor<double>& v2, const Tensor<double>& p,
                     double margin, double clearance = 0.02) {
    const int64_t b = v1.dim(0), d = v1.dim(1);
    for (int64_t i = 0; i < b; ++i) {
        double d2 = 0, d1 = 0;
        for (int64_t k = 0; k < d; ++k) {
            d2 += (v2[i * d + k] - p[i * d + k]) * (v2[i * d + k] - p[i * d + k]);
            d1 += (v1[i * d + k] - p[i * d + k]) * (v1[i * d + k] - p[i * d + k]);
        }
        if (std::fabs(std::sqrt(d2) - std::sqrt(d1) + margin) < clearance) return false;
    }
    return true;
}

void check_loss_gradients(uint64_t seed, const LossConfig& cfg, double tol = 1e-4) {
    const int64_t b = 3, d = 8;
    Tensor<double> v1, v2, p;
    uint64_t s = seed;
    do {
        v1 = random_embeddings(b, d, s * 3 + 1);
        v2 = random_embeddings(b, d, s * 3 + 2);
        p = random_embeddings(b, d, s * 3 + 3);
        ++s;
    } while (!away_from_hinge(v1, v2, p, cfg.margin));

    const LossGrads<double> g = loss_gradients(v1, v2, p, cfg);
    auto objective = [&](const Tensor<double>& a, const Tensor<double>& bb,
                         const Tensor<double>& c) { return loss_report(a, bb, c, cfg).total; };

    // Relative error with an absolute floor: entries below the floor sit at
    // the FD noise level (~1e-10 for unit-scale losses) and are compared in
    // absolute terms instead of blowing up a 0/0 ratio.
    const double h = 1e-5;
    auto fd_check = [&](Tensor<double> base, const Tensor<double>& analytic, int which) {
        for (int64_t j = 0; j < base.numel(); ++j) {
            Tensor<double> plus = base, minus = base;
            plus[j] += h;
            minus[j] -= h;
            double fp, fm;
            if (which == 0) {
                fp = objective(plus, v2, p);
                fm = objective(minus, v2, p);
            } else if (which == 1) {
                fp = objective(v1, plus, p);
                fm = objective(v1, minus, p);
            } else {
                fp = objective(v1, v2, plus);
                fm = objective(v1, v2, minus);
            }
            const double fd = (fp - fm) / (2 * h);
            const double a = analytic[j];
            const double denom = std::max({1e-5, std::fabs(fd), std::fabs(a)});
            INFO("input ", which, " elem ", j, " fd=", fd, " analytic=", a);
            CHECK(std::fabs(fd - a) / denom < tol);
        }
    };
    fd_check(v1, g.dv1, 0);
    fd_check(v2, g.dv2, 1);
    fd_check(p, g.dp, 2);
}

}  // namespace

TEST_CASE("correlation matrix: diagonal, hand value, orthogonal, zero norm") {
    Tensor<double> v({2, 2}), p({2, 2});
    v[0] = 1;
    v[1] = 0;
    v[2] = 0;
    v[3] = 2;
    p = v;
    const Tensor<double> f = correlation_matrix(v, p);
    CHECK(f[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(f[3] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(f[1] == doctest::Approx(0.0));
    CHECK(f[2] == doctest::Approx(0.0));

    Tensor<double> p2({2, 2});
    p2[0] = 1;
    p2[1] = 1;
    p2[2] = -1;
    p2[3] = 1;
    const Tensor<double> f2 = correlation_matrix(v, p2);
    CHECK(f2[0] == doctest::Approx(0.7071067811865475).epsilon(1e-12));

    Tensor<double> z({2, 2});
    z[0] = 1;  // second row all zeros
    CHECK_THROWS_AS(correlation_matrix(z, p), ZeroNormEmbedding);
}

TEST_CASE("alignment scores: B=1, uniform rows, scalar softmax oracle") {
    Tensor<double> f1({1, 1});
    f1[0] = 0.37;
    const auto s1 = alignment_scores(f1, 0.07);
    REQUIRE(s1.size() == 1);
    CHECK(s1[0] == doctest::Approx(1.0).epsilon(1e-12));

    Tensor<double> f4({4, 4});
    f4.fill(0.9);
    for (const double s : alignment_scores(f4, 0.07))
        CHECK(s == doctest::Approx(0.25).epsilon(1e-12));

    Tensor<double> row({2, 2});
    row[0] = 1;  // row 0 = [1, 0]
    row[1] = 0;
    row[2] = 0;
    row[3] = 1;
    const double tau = 0.07;
    // scalar oracle computed term by term
    const double expect = std::exp(1.0 / tau) / (std::exp(1.0 / tau) + std::exp(0.0 / tau));
    CHECK(alignment_scores(row, tau)[0] == doctest::Approx(expect).epsilon(1e-12));
    CHECK(expect == doctest::Approx(0.9999993751254396).epsilon(1e-12));
}

TEST_CASE("alignment scores are invariant to per-row shifts") {
    Tensor<double> f = random_embeddings(5, 5, 42, 0.7);
    Tensor<double> shifted = f;
    for (int64_t i = 0; i < 5; ++i)
        for (int64_t j = 0; j < 5; ++j) shifted[i * 5 + j] += 0.37 * static_cast<double>(i + 1);
    const auto a = alignment_scores(f, 0.07);
    const auto b = alignment_scores(shifted, 0.07);
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-10));
}

TEST_CASE("contrastive loss identities") {
    CHECK(contrastive_loss<double>({1.0}, {1.0}) == doctest::Approx(0.0));
    const std::vector<double> uniform(4, 0.25);
    CHECK(contrastive_loss(uniform, uniform) ==
          doctest::Approx(2.772588722239781).epsilon(1e-12));  // 2 ln 4
    // non-negative, and zero only at all-ones
    const std::vector<double> s{0.9, 0.8, 0.99, 0.7};
    CHECK(contrastive_loss(s, s) > 0.0);
}

TEST_CASE("triplet loss identities") {
    const int64_t d = 2;
    Tensor<double> v1({1, d}), v2({1, d}), p({1, d});

    // v1 == v2: distances cancel, loss = margin
    v1[0] = 3;
    v1[1] = -1;
    v2 = v1;
    p[0] = 0;
    p[1] = 0;
    CHECK(triplet_loss(v1, v2, p, 0.2) == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(triplet_loss(v1, v2, p, 0.0) == doctest::Approx(0.0));

    // v2 == p, |v1 - p| = sqrt(2): hinge inactive at margin 0.2
    v2[0] = 0;
    v2[1] = 0;
    v1[0] = 1;
    v1[1] = 1;
    CHECK(triplet_loss(v1, v2, p, 0.2) == doctest::Approx(0.0));

    // v1 == p, |v2 - p| = 1: ordering violated, loss = 1.2
    v1[0] = 0;
    v1[1] = 0;
    v2[0] = 1;
    v2[1] = 0;
    CHECK(triplet_loss(v1, v2, p, 0.2) == doctest::Approx(1.2).epsilon(1e-12));
}

TEST_CASE("total loss arithmetic and default lambda") {
    CHECK(total_loss(0.0, 0.0, 0.1) == doctest::Approx(0.0));
    CHECK(total_loss(2.0, 0.5, 0.1) == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(LossConfig{}.lambda == doctest::Approx(0.1));
    CHECK(LossConfig{}.tau == doctest::Approx(0.07));
    CHECK(LossConfig{}.margin == doctest::Approx(0.2));
}

TEST_CASE("cosine scale invariance of the correlation matrix") {
    const Tensor<double> v = random_embeddings(4, 6, 7);
    const Tensor<double> p = random_embeddings(4, 6, 8);
    const Tensor<double> base = correlation_matrix(v, p);
    Tensor<double> va = v, pb = p;
    for (int64_t i = 0; i < va.numel(); ++i) va[i] *= 3.7;
    for (int64_t i = 0; i < pb.numel(); ++i) pb[i] *= 0.04;
    const Tensor<double> scaled = correlation_matrix(va, pb);
    for (int64_t i = 0; i < base.numel(); ++i)
        CHECK(scaled[i] == doctest::Approx(base[i]).epsilon(1e-6));
}

TEST_CASE("batch permutation leaves the scalar losses unchanged") {
    const int64_t b = 5, d = 7;
    const Tensor<double> v1 = random_embeddings(b, d, 10);
    const Tensor<double> v2 = random_embeddings(b, d, 11);
    const Tensor<double> p = random_embeddings(b, d, 12);
    LossConfig cfg;
    const LossReport<double> base = loss_report(v1, v2, p, cfg);

    const std::vector<int64_t> perm{3, 0, 4, 1, 2};
    auto apply = [&](const Tensor<double>& x) {
        Tensor<double> out({b, d});
        for (int64_t i = 0; i < b; ++i)
            for (int64_t k = 0; k < d; ++k) out[i * d + k] = x[perm[static_cast<size_t>(i)] * d + k];
        return out;
    };
    const LossReport<double> permuted = loss_report(apply(v1), apply(v2), apply(p), cfg);
    CHECK(permuted.contrastive == doctest::Approx(base.contrastive).epsilon(1e-10));
    CHECK(permuted.triplet == doctest::Approx(base.triplet).epsilon(1e-10));
    CHECK(permuted.total == doctest::Approx(base.total).epsilon(1e-10));
    // per-sample alignment scores are permuted, not changed
    for (int64_t i = 0; i < b; ++i)
        CHECK(permuted.s1[static_cast<size_t>(i)] ==
              doctest::Approx(base.s1[static_cast<size_t>(perm[static_cast<size_t>(i)])])
                  .epsilon(1e-10));
}

TEST_CASE("loss report invariants on random batches") {
    for (uint64_t seed : {1u, 2u, 3u}) {
        const Tensor<double> v1 = random_embeddings(4, 8, seed * 10 + 1);
        const Tensor<double> v2 = random_embeddings(4, 8, seed * 10 + 2);
        const Tensor<double> p = random_embeddings(4, 8, seed * 10 + 3);
        const LossReport<double> r = loss_report(v1, v2, p, LossConfig{});
        for (int64_t i = 0; i < r.f1.numel(); ++i) {
            CHECK(r.f1[i] <= 1.0 + 1e-9);
            CHECK(r.f1[i] >= -1.0 - 1e-9);
        }
        for (double s : r.s1) {
            CHECK(s > 0.0);
            CHECK(s <= 1.0);
        }
        CHECK(r.contrastive >= 0.0);
        CHECK(r.triplet >= 0.0);
        CHECK(std::isfinite(r.total));
    }
}

TEST_CASE("analytic gradients match finite differences (default config)") {
    LossConfig cfg;
    for (uint64_t seed : {100u, 200u, 300u, 400u, 500u}) check_loss_gradients(seed, cfg);
}

TEST_CASE("analytic gradients match finite differences (symmetric InfoNCE)") {
    LossConfig cfg;
    cfg.symmetric_infonce = true;
    for (uint64_t seed : {101u, 202u}) check_loss_gradients(seed, cfg);
}

TEST_CASE("analytic gradients match finite differences (single terms)") {
    LossConfig only_triplet;
    only_triplet.use_contrastive = false;
    check_loss_gradients(17, only_triplet);
    LossConfig only_contrastive;
    only_contrastive.use_triplet = false;
    check_loss_gradients(18, only_contrastive);
}

TEST_CASE("loss report serializes with fixed precision") {
    const Tensor<double> v1 = random_embeddings(2, 4, 21);
    const Tensor<double> v2 = random_embeddings(2, 4, 22);
    const Tensor<double> p = random_embeddings(2, 4, 23);
    const std::string json = loss_report(v1, v2, p, LossConfig{}).to_json();
    CHECK(json.find("\"L_total\":") != std::string::npos);
    CHECK(json.find("\"F1\":") != std::string::npos);
    CHECK(json.find("\"S2\":") != std::string::npos);
}

TEST_CASE("config batch size must match inputs when set") {
    const Tensor<double> v = random_embeddings(3, 4, 31);
    LossConfig cfg;
    cfg.batch_size = 4;
    CHECK_THROWS_AS(loss_report(v, v, v, cfg), ShapeMismatch);
}
