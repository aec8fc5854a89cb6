#pragma once

#include <cmath>
#include <cstdint>

namespace rclip::kernels {

// Parallelism policy: loops split only across independent output rows or
// elements; every output value is accumulated by a single thread in a fixed
// (ascending) order. Results are therefore bit-identical for any thread
// count and bit-identical to the serial reference implementations below.

// ---- serial reference ------------------------------------------------------
// Independently written plain loops, kept for correctness tests and as the
// baseline in the kernel benchmark.
namespace serial {

// y[m,n] = x[m,k] @ w[n,k]^T (+ b[n] if b != nullptr)
template <typename T>
void linear_nt(const T* x, const T* w, const T* b, T* y, int64_t m, int64_t n, int64_t k) {
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            T acc = b ? b[j] : T(0);
            const T* xi = x + i * k;
            const T* wj = w + j * k;
            for (int64_t t = 0; t < k; ++t) acc += xi[t] * wj[t];
            y[i * n + j] = acc;
        }
    }
}

// c[m,n] = a[m,k] @ b[k,n]
template <typename T>
void matmul_nn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            T acc = T(0);
            for (int64_t t = 0; t < k; ++t) acc += a[i * k + t] * b[t * n + j];
            c[i * n + j] = acc;
        }
    }
}

// c[k,n] = a[m,k]^T @ b[m,n]
template <typename T>
void matmul_tn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < k; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            T acc = T(0);
            for (int64_t t = 0; t < m; ++t) acc += a[t * k + i] * b[t * n + j];
            c[i * n + j] = acc;
        }
    }
}

// row-wise softmax with max subtraction, y may alias x
template <typename T>
void softmax_rows(const T* x, T* y, int64_t m, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const T* xi = x + i * n;
        T* yi = y + i * n;
        T mx = xi[0];
        for (int64_t j = 1; j < n; ++j)
            if (xi[j] > mx) mx = xi[j];
        T sum = T(0);
        for (int64_t j = 0; j < n; ++j) {
            yi[j] = std::exp(xi[j] - mx);
            sum += yi[j];
        }
        T inv = T(1) / sum;
        for (int64_t j = 0; j < n; ++j) yi[j] *= inv;
    }
}

// dx = p .* (dy - rowsum(dy .* p)), p is the softmax output
template <typename T>
void softmax_rows_bwd(const T* p, const T* dy, T* dx, int64_t m, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const T* pi = p + i * n;
        const T* di = dy + i * n;
        T dot = T(0);
        for (int64_t j = 0; j < n; ++j) dot += di[j] * pi[j];
        for (int64_t j = 0; j < n; ++j) dx[i * n + j] = pi[j] * (di[j] - dot);
    }
}

template <typename T>
void layernorm_fwd(const T* x, const T* gamma, const T* beta, T* y, T* save_mean, T* save_rstd,
                   int64_t m, int64_t n, T eps) {
    for (int64_t i = 0; i < m; ++i) {
        const T* xi = x + i * n;
        T mean = T(0);
        for (int64_t j = 0; j < n; ++j) mean += xi[j];
        mean /= static_cast<T>(n);
        T var = T(0);
        for (int64_t j = 0; j < n; ++j) {
            T d = xi[j] - mean;
            var += d * d;
        }
        var /= static_cast<T>(n);
        T rstd = T(1) / std::sqrt(var + eps);
        save_mean[i] = mean;
        save_rstd[i] = rstd;
        for (int64_t j = 0; j < n; ++j) y[i * n + j] = (xi[j] - mean) * rstd * gamma[j] + beta[j];
    }
}

// dgamma/dbeta are accumulated serially by the caller; this computes dx only.
template <typename T>
void layernorm_bwd_dx(const T* x, const T* gamma, const T* dy, const T* save_mean,
                      const T* save_rstd, T* dx, int64_t m, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const T* xi = x + i * n;
        const T* di = dy + i * n;
        T mean = save_mean[i], rstd = save_rstd[i];
        T sum_dg = T(0), sum_dgx = T(0);
        for (int64_t j = 0; j < n; ++j) {
            T xhat = (xi[j] - mean) * rstd;
            T dg = di[j] * gamma[j];
            sum_dg += dg;
            sum_dgx += dg * xhat;
        }
        T invn = T(1) / static_cast<T>(n);
        for (int64_t j = 0; j < n; ++j) {
            T xhat = (xi[j] - mean) * rstd;
            T dg = di[j] * gamma[j];
            dx[i * n + j] = rstd * (dg - invn * sum_dg - xhat * invn * sum_dgx);
        }
    }
}

// y = x * sigmoid(1.702 x)
template <typename T>
void quickgelu_fwd(const T* x, T* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) {
        T s = T(1) / (T(1) + std::exp(T(-1.702) * x[i]));
        y[i] = x[i] * s;
    }
}

template <typename T>
void quickgelu_bwd(const T* x, const T* dy, T* dx, int64_t n) {
    for (int64_t i = 0; i < n; ++i) {
        T s = T(1) / (T(1) + std::exp(T(-1.702) * x[i]));
        dx[i] = dy[i] * (s + T(1.702) * x[i] * s * (T(1) - s));
    }
}

template <typename T>
void add(const T* a, const T* b, T* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

// y += a
template <typename T>
void acc(T* y, const T* a, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] += a[i];
}

template <typename T>
void scale(const T* a, T s, T* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] = a[i] * s;
}

// out[n] = column sums of a[m,n]
template <typename T>
void colsum(const T* a, T* out, int64_t m, int64_t n) {
    for (int64_t j = 0; j < n; ++j) {
        T acc_ = T(0);
        for (int64_t i = 0; i < m; ++i) acc_ += a[i * n + j];
        out[j] = acc_;
    }
}

}  // namespace serial

// ---- OpenMP-parallel kernels ----------------------------------------------

template <typename T>
void linear_nt(const T* x, const T* w, const T* b, T* y, int64_t m, int64_t n, int64_t k) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            T acc_ = b ? b[j] : T(0);
            const T* xi = x + i * k;
            const T* wj = w + j * k;
            for (int64_t t = 0; t < k; ++t) acc_ += xi[t] * wj[t];
            y[i * n + j] = acc_;
        }
    }
}

template <typename T>
void matmul_nn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            T acc_ = T(0);
            for (int64_t t = 0; t < k; ++t) acc_ += a[i * k + t] * b[t * n + j];
            c[i * n + j] = acc_;
        }
    }
}

template <typename T>
void matmul_tn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < k; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            T acc_ = T(0);
            for (int64_t t = 0; t < m; ++t) acc_ += a[t * k + i] * b[t * n + j];
            c[i * n + j] = acc_;
        }
    }
}

template <typename T>
void softmax_rows(const T* x, T* y, int64_t m, int64_t n) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < m; ++i) serial::softmax_rows(x + i * n, y + i * n, 1, n);
}

template <typename T>
void softmax_rows_bwd(const T* p, const T* dy, T* dx, int64_t m, int64_t n) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < m; ++i) serial::softmax_rows_bwd(p + i * n, dy + i * n, dx + i * n, 1, n);
}

template <typename T>
void layernorm_fwd(const T* x, const T* gamma, const T* beta, T* y, T* save_mean, T* save_rstd,
                   int64_t m, int64_t n, T eps) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < m; ++i)
        serial::layernorm_fwd(x + i * n, gamma, beta, y + i * n, save_mean + i, save_rstd + i, 1, n,
                              eps);
}

template <typename T>
void layernorm_bwd_dx(const T* x, const T* gamma, const T* dy, const T* save_mean,
                      const T* save_rstd, T* dx, int64_t m, int64_t n) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < m; ++i)
        serial::layernorm_bwd_dx(x + i * n, gamma, dy + i * n, save_mean + i, save_rstd + i,
                                 dx + i * n, 1, n);
}

template <typename T>
void quickgelu_fwd(const T* x, T* y, int64_t n) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
        T s = T(1) / (T(1) + std::exp(T(-1.702) * x[i]));
        y[i] = x[i] * s;
    }
}

template <typename T>
void quickgelu_bwd(const T* x, const T* dy, T* dx, int64_t n) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
        T s = T(1) / (T(1) + std::exp(T(-1.702) * x[i]));
        dx[i] = dy[i] * (s + T(1.702) * x[i] * s * (T(1) - s));
    }
}

template <typename T>
void add(const T* a, const T* b, T* y, int64_t n) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

template <typename T>
void acc(T* y, const T* a, int64_t n) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) y[i] += a[i];
}

template <typename T>
void scale(const T* a, T s, T* y, int64_t n) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) y[i] = a[i] * s;
}

template <typename T>
void colsum(const T* a, T* out, int64_t m, int64_t n) {
#pragma omp parallel for schedule(static)
    for (int64_t j = 0; j < n; ++j) {
        T acc_ = T(0);
        for (int64_t i = 0; i < m; ++i) acc_ += a[i * n + j];
        out[j] = acc_;
    }
}

}  // namespace rclip::kernels
