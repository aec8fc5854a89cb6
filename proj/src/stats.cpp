#include "rclip/stats.hpp"

#include <cmath>
#include <cstdlib>
#include <stdexcept>

namespace rclip::stats {

namespace {

double gser(double a, double x) {
    // lower series, returns P(a,x)
    const int kMaxIter = 500;
    const double eps = 1e-14;
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int i = 0; i < kMaxIter; ++i) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::fabs(del) < std::fabs(sum) * eps) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double gcf(double a, double x) {
    // continued fraction, returns Q(a,x)
    const int kMaxIter = 500;
    const double eps = 1e-14;
    const double fpmin = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / fpmin;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= kMaxIter; ++i) {
        double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = b + an / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double gammq(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gammq: bad arguments");
    if (x == 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - gser(a, x);
    return gcf(a, x);
}

double chi_square_pvalue(double stat, int dof) {
    if (dof <= 0) throw std::invalid_argument("chi_square_pvalue: dof must be positive");
    if (stat <= 0.0) return 1.0;
    return gammq(0.5 * dof, 0.5 * stat);
}

TauResult kendall_tau_indexed(const std::vector<double>& ys) {
    TauResult r;
    const size_t n = ys.size();
    if (n < 2) {
        r.degenerate = true;
        return r;
    }
    // x is the frame index: strictly increasing, so x has no ties.
    long long concordant = 0, discordant = 0, ties_y = 0;
    for (size_t i = 0; i + 1 < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
            double d = ys[j] - ys[i];
            if (d > 0)
                ++concordant;
            else if (d < 0)
                ++discordant;
            else
                ++ties_y;
        }
    }
    const long long total = concordant + discordant + ties_y;
    const long long non_tied = concordant + discordant;
    if (non_tied == 0) {
        r.degenerate = true;
        return r;
    }
    // tau-b: x has no ties so the x correction term is the full pair count
    double denom = std::sqrt(static_cast<double>(total)) * std::sqrt(static_cast<double>(non_tied));
    r.tau = static_cast<double>(concordant - discordant) / denom;
    return r;
}

double sign_test_pvalue(const std::vector<double>& diffs) {
    int n = 0, pos = 0;
    for (double d : diffs) {
        if (d > 0) {
            ++n;
            ++pos;
        } else if (d < 0) {
            ++n;
        }
    }
    if (n == 0) return 1.0;
    const int m = pos < n - pos ? pos : n - pos;
    // tail = P(X <= m), X ~ Binomial(n, 1/2)
    double tail = 0.0;
    for (int k = 0; k <= m; ++k) {
        double logc = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
        tail += std::exp(logc - n * std::log(2.0));
    }
    double p = 2.0 * tail;
    return p > 1.0 ? 1.0 : p;
}

}  // namespace rclip::stats
