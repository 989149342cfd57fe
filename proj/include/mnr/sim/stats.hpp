#pragma once

#include <cstdint>
#include <vector>

// Small statistics kit for the experiment reports: sample moments, Student's
// t distribution (regularized incomplete beta), paired t-test and 95% CIs.

namespace mnr::sim {

double mean(const std::vector<double>& xs);
double sample_sd(const std::vector<double>& xs);

/// Regularized incomplete beta I_x(a, b) via the Lentz continued fraction.
double reg_inc_beta(double a, double b, double x);

/// Two-sided p-value of a Student-t statistic with df degrees of freedom.
double student_t_two_sided_p(double t, std::uint32_t df);

/// 97.5% quantile of Student's t (for two-sided 95% CIs).
double t_critical_975(std::uint32_t df);

struct PairedT {
    double mean_diff = 0.0;
    double t_stat = 0.0;
    double p_value = 1.0;
    std::size_t n = 0;
};

/// Paired two-sided t-test of a vs b (same length, matched by index).
PairedT paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

/// Half-width of the 95% CI of the mean (0 for n < 2).
double ci95_half_width(const std::vector<double>& xs);

}  // namespace mnr::sim
