#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "rclip/errors.hpp"
#include "rclip/format.hpp"
#include "rclip/tensor.hpp"

namespace rclip {

struct LossConfig {
    double tau = 0.07;      // softmax temperature, > 0
    double margin = 0.2;    // triplet margin
    double lambda = 0.1;    // contrastive weight in the total
    int batch_size = 0;     // 0 = inferred from inputs
    bool symmetric_infonce = false;  // adds the text->image direction
    bool use_contrastive = true;
    bool use_triplet = true;
};

template <typename T>
struct LossReport {
    Tensor<T> f1, f2;       // B x B frame/prompt correlations
    std::vector<T> s1, s2;  // per-sample alignment scores
    T contrastive = T(0);
    T triplet = T(0);
    T total = T(0);

    std::string to_json() const {
        auto mat = [](const Tensor<T>& f) {
            std::string s = "[";
            const int64_t b = f.dim(0);
            for (int64_t i = 0; i < b; ++i) {
                s += i ? ",[" : "[";
                for (int64_t j = 0; j < b; ++j) {
                    if (j) s += ",";
                    s += fmt_g6(static_cast<double>(f[i * b + j]));
                }
                s += "]";
            }
            return s + "]";
        };
        auto vec = [](const std::vector<T>& v) {
            std::string s = "[";
            for (size_t i = 0; i < v.size(); ++i) {
                if (i) s += ",";
                s += fmt_g6(static_cast<double>(v[i]));
            }
            return s + "]";
        };
        std::string s = "{\"F1\":" + mat(f1) + ",\"F2\":" + mat(f2) + ",\"S1\":" + vec(s1) +
                        ",\"S2\":" + vec(s2) +
                        ",\"L_contrastive\":" + fmt_g6(static_cast<double>(contrastive)) +
                        ",\"L_triplet\":" + fmt_g6(static_cast<double>(triplet)) +
                        ",\"L_total\":" + fmt_g6(static_cast<double>(total)) + "}";
        return s;
    }
};

template <typename T>
struct LossGrads {
    Tensor<T> dv1, dv2, dp;  // gradients of the total loss
};

namespace detail {

template <typename T>
std::vector<T> row_norms(const Tensor<T>& x) {
    const int64_t b = x.dim(0), d = x.dim(1);
    std::vector<T> out(static_cast<size_t>(b));
    for (int64_t i = 0; i < b; ++i) {
        T s = T(0);
        for (int64_t j = 0; j < d; ++j) s += x[i * d + j] * x[i * d + j];
        if (s <= T(0)) throw ZeroNormEmbedding("row " + std::to_string(i));
        out[static_cast<size_t>(i)] = std::sqrt(s);
    }
    return out;
}

// softmax of row i of f/tau; returns full probability row
template <typename T>
std::vector<T> softmax_row(const Tensor<T>& f, int64_t i, T tau) {
    const int64_t b = f.dim(0);
    std::vector<T> p(static_cast<size_t>(b));
    T mx = f[i * b];
    for (int64_t j = 1; j < b; ++j) mx = std::max(mx, f[i * b + j]);
    T sum = T(0);
    for (int64_t j = 0; j < b; ++j) {
        p[static_cast<size_t>(j)] = std::exp((f[i * b + j] - mx) / tau);
        sum += p[static_cast<size_t>(j)];
    }
    for (int64_t j = 0; j < b; ++j) p[static_cast<size_t>(j)] /= sum;
    return p;
}

template <typename T>
std::vector<T> softmax_col(const Tensor<T>& f, int64_t j, T tau) {
    const int64_t b = f.dim(0);
    std::vector<T> p(static_cast<size_t>(b));
    T mx = f[j];
    for (int64_t i = 1; i < b; ++i) mx = std::max(mx, f[i * b + j]);
    T sum = T(0);
    for (int64_t i = 0; i < b; ++i) {
        p[static_cast<size_t>(i)] = std::exp((f[i * b + j] - mx) / tau);
        sum += p[static_cast<size_t>(i)];
    }
    for (int64_t i = 0; i < b; ++i) p[static_cast<size_t>(i)] /= sum;
    return p;
}

}  // namespace detail

// Entry (i,j) = cosine(V_i, P_j). Throws ZeroNormEmbedding on degenerate rows.
template <typename T>
Tensor<T> correlation_matrix(const Tensor<T>& v, const Tensor<T>& p) {
    if (v.ndim() != 2 || p.ndim() != 2 || v.dim(0) != p.dim(0) || v.dim(1) != p.dim(1))
        throw ShapeMismatch("correlation_matrix: expects matching [B,D] inputs");
    const int64_t b = v.dim(0), d = v.dim(1);
    const auto nv = detail::row_norms(v);
    const auto np = detail::row_norms(p);
    Tensor<T> f({b, b});
    for (int64_t i = 0; i < b; ++i) {
        for (int64_t j = 0; j < b; ++j) {
            T dot = T(0);
            for (int64_t k = 0; k < d; ++k) dot += v[i * d + k] * p[j * d + k];
            f[i * b + j] = dot / (nv[static_cast<size_t>(i)] * np[static_cast<size_t>(j)]);
        }
    }
    return f;
}

// S_i = softmax over row i of F/tau, taken at the diagonal.
template <typename T>
std::vector<T> alignment_scores(const Tensor<T>& f, T tau) {
    if (tau <= T(0)) throw Error("alignment_scores: tau must be positive");
    const int64_t b = f.dim(0);
    std::vector<T> s(static_cast<size_t>(b));
    for (int64_t i = 0; i < b; ++i)
        s[static_cast<size_t>(i)] = detail::softmax_row(f, i, tau)[static_cast<size_t>(i)];
    return s;
}

// Column-direction scores (text -> image); used by the symmetric variant.
template <typename T>
std::vector<T> alignment_scores_cols(const Tensor<T>& f, T tau) {
    if (tau <= T(0)) throw Error("alignment_scores: tau must be positive");
    const int64_t b = f.dim(0);
    std::vector<T> s(static_cast<size_t>(b));
    for (int64_t j = 0; j < b; ++j)
        s[static_cast<size_t>(j)] = detail::softmax_col(f, j, tau)[static_cast<size_t>(j)];
    return s;
}

template <typename T>
T contrastive_loss(const std::vector<T>& s1, const std::vector<T>& s2) {
    const size_t b = s1.size();
    T sum = T(0);
    for (size_t i = 0; i < b; ++i) sum += std::log(s1[i]) + std::log(s2[i]);
    return -sum / static_cast<T>(b);
}

template <typename T>
T triplet_loss(const Tensor<T>& v1, const Tensor<T>& v2, const Tensor<T>& p, T margin) {
    if (!v1.same_shape(v2) || !v1.same_shape(p))
        throw ShapeMismatch("triplet_loss: inputs must share [B,D]");
    const int64_t b = v1.dim(0), d = v1.dim(1);
    T sum = T(0);
    for (int64_t i = 0; i < b; ++i) {
        T d2 = T(0), d1 = T(0);
        for (int64_t k = 0; k < d; ++k) {
            T a = v2[i * d + k] - p[i * d + k];
            T c = v1[i * d + k] - p[i * d + k];
            d2 += a * a;
            d1 += c * c;
        }
        T h = std::sqrt(d2) - std::sqrt(d1) + margin;
        if (h > T(0)) sum += h;
    }
    return sum / static_cast<T>(b);
}

template <typename T>
T total_loss(T contrastive, T triplet, T lambda) {
    return lambda * contrastive + triplet;
}

template <typename T>
LossReport<T> loss_report(const Tensor<T>& v1, const Tensor<T>& v2, const Tensor<T>& p,
                          const LossConfig& cfg) {
    const int64_t b = v1.dim(0);
    if (cfg.batch_size > 0 && cfg.batch_size != b)
        throw ShapeMismatch("loss_report: configured batch size does not match inputs");
    LossReport<T> r;
    r.f1 = correlation_matrix(v1, p);
    r.f2 = correlation_matrix(v2, p);
    const T tau = static_cast<T>(cfg.tau);
    r.s1 = alignment_scores(r.f1, tau);
    r.s2 = alignment_scores(r.f2, tau);
    if (cfg.symmetric_infonce) {
        const auto s1c = alignment_scores_cols(r.f1, tau);
        const auto s2c = alignment_scores_cols(r.f2, tau);
        r.contrastive = (contrastive_loss(r.s1, r.s2) + contrastive_loss(s1c, s2c)) / T(2);
    } else {
        r.contrastive = contrastive_loss(r.s1, r.s2);
    }
    r.triplet = triplet_loss(v1, v2, p, static_cast<T>(cfg.margin));
    const T lc = cfg.use_contrastive ? r.contrastive : T(0);
    const T lt = cfg.use_triplet ? r.triplet : T(0);
    r.total = total_loss(lc, lt, static_cast<T>(cfg.lambda));
    return r;
}

// Analytic gradients of the total loss w.r.t. v1, v2 and p. Checked against
// central finite differences in the test suite; the hinge uses the inactive
// branch (zero) exactly at the kink.
template <typename T>
LossGrads<T> loss_gradients(const Tensor<T>& v1, const Tensor<T>& v2, const Tensor<T>& p,
                            const LossConfig& cfg) {
    const int64_t b = v1.dim(0), d = v1.dim(1);
    LossGrads<T> g;
    g.dv1 = Tensor<T>({b, d});
    g.dv2 = Tensor<T>({b, d});
    g.dp = Tensor<T>({b, d});

    const T tau = static_cast<T>(cfg.tau);
    const T lam = static_cast<T>(cfg.lambda);

    if (cfg.use_contrastive) {
        const Tensor<T> f1 = correlation_matrix(v1, p);
        const Tensor<T> f2 = correlation_matrix(v2, p);
        const auto nv1 = detail::row_norms(v1);
        const auto nv2 = detail::row_norms(v2);
        const auto np = detail::row_norms(p);

        // dL_contrastive / dF
        auto df_of = [&](const Tensor<T>& f) {
            Tensor<T> df({b, b});
            const T w = cfg.symmetric_infonce ? T(0.5) : T(1);
            for (int64_t i = 0; i < b; ++i) {
                const auto q = detail::softmax_row(f, i, tau);
                for (int64_t j = 0; j < b; ++j)
                    df[i * b + j] += w / (static_cast<T>(b) * tau) *
                                     (q[static_cast<size_t>(j)] - (i == j ? T(1) : T(0)));
            }
            if (cfg.symmetric_infonce) {
                for (int64_t j = 0; j < b; ++j) {
                    const auto q = detail::softmax_col(f, j, tau);
                    for (int64_t i = 0; i < b; ++i)
                        df[i * b + j] += w / (static_cast<T>(b) * tau) *
                                         (q[static_cast<size_t>(i)] - (i == j ? T(1) : T(0)));
                }
            }
            return df;
        };

        // chain through cosine(a_i, p_j)
        auto apply_cosine = [&](const Tensor<T>& f, const Tensor<T>& df, const Tensor<T>& a,
                                const std::vector<T>& na, Tensor<T>& da) {
            for (int64_t i = 0; i < b; ++i) {
                for (int64_t j = 0; j < b; ++j) {
                    const T w = lam * df[i * b + j];
                    if (w == T(0)) continue;
                    const T inv = T(1) / (na[static_cast<size_t>(i)] * np[static_cast<size_t>(j)]);
                    const T fa = f[i * b + j] / (na[static_cast<size_t>(i)] * na[static_cast<size_t>(i)]);
                    const T fp = f[i * b + j] / (np[static_cast<size_t>(j)] * np[static_cast<size_t>(j)]);
                    for (int64_t k = 0; k < d; ++k) {
                        da[i * d + k] += w * (p[j * d + k] * inv - fa * a[i * d + k]);
                        g.dp[j * d + k] += w * (a[i * d + k] * inv - fp * p[j * d + k]);
                    }
                }
            }
        };

        apply_cosine(f1, df_of(f1), v1, nv1, g.dv1);
        apply_cosine(f2, df_of(f2), v2, nv2, g.dv2);
    }

    if (cfg.use_triplet) {
        const T margin = static_cast<T>(cfg.margin);
        const T invb = T(1) / static_cast<T>(b);
        for (int64_t i = 0; i < b; ++i) {
            T d2 = T(0), d1 = T(0);
            for (int64_t k = 0; k < d; ++k) {
                T a = v2[i * d + k] - p[i * d + k];
                T c = v1[i * d + k] - p[i * d + k];
                d2 += a * a;
                d1 += c * c;
            }
            d2 = std::sqrt(d2);
            d1 = std::sqrt(d1);
            if (d2 - d1 + margin <= T(0)) continue;
            for (int64_t k = 0; k < d; ++k) {
                if (d2 > T(0)) {
                    const T u = (v2[i * d + k] - p[i * d + k]) / d2;
                    g.dv2[i * d + k] += invb * u;
                    g.dp[i * d + k] -= invb * u;
                }
                if (d1 > T(0)) {
                    const T u = (v1[i * d + k] - p[i * d + k]) / d1;
                    g.dv1[i * d + k] -= invb * u;
                    g.dp[i * d + k] += invb * u;
                }
            }
        }
    }
    return g;
}

}  // namespace rclip
