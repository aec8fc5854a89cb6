#pragma once

#include <cstdint>
#include <vector>

namespace rclip::stats {

// Regularized upper incomplete gamma Q(a, x). Series for x < a+1,
// continued fraction otherwise.
double gammq(double a, double x);

// P(Chi2_dof >= stat)
double chi_square_pvalue(double stat, int dof);

struct TauResult {
    double tau = 0.0;   // Kendall tau-b
    bool degenerate = false;  // all-tied in either variable; tau reported as 0
};

// Kendall tau-b between the index order 0..n-1 and ys.
TauResult kendall_tau_indexed(const std::vector<double>& ys);

// Exact two-sided sign test for paired differences; zero diffs are dropped.
// Returns p in (0,1]; n_effective==0 yields p=1.
double sign_test_pvalue(const std::vector<double>& diffs);

}  // namespace rclip::stats
