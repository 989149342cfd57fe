#include "mnr/sim/stats.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace mnr::sim {

double mean(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    double sum = 0.0;
    for (const double x : xs) sum += x;
    return sum / static_cast<double>(xs.size());
}

double sample_sd(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean(xs);
    double ss = 0.0;
    for (const double x : xs) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

namespace {

// Continued fraction for the incomplete beta (Numerical Recipes form).
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16;
    constexpr double kFpMin = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace

double reg_inc_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * betacf(a, b, x) / a;
    }
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, std::uint32_t df) {
    if (df == 0) throw std::invalid_argument("df must be >= 1");
    if (!std::isfinite(t)) return 0.0;
    const double v = static_cast<double>(df);
    return reg_inc_beta(v / 2.0, 0.5, v / (v + t * t));
}

double t_critical_975(std::uint32_t df) {
    if (df == 0) throw std::invalid_argument("df must be >= 1");
    double lo = 0.0;
    double hi = 1e6;
    for (int iter = 0; iter < 200; ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (student_t_two_sided_p(mid, df) > 0.05) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

PairedT paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("paired samples differ in length");
    PairedT result;
    result.n = a.size();
    if (a.size() < 2) return result;
    std::vector<double> diff(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
    result.mean_diff = mean(diff);
    const double sd = sample_sd(diff);
    if (sd == 0.0) {
        result.t_stat = result.mean_diff == 0.0 ? 0.0
                                                : std::numeric_limits<double>::infinity() *
                                                      (result.mean_diff > 0 ? 1.0 : -1.0);
        result.p_value = result.mean_diff == 0.0 ? 1.0 : 0.0;
        return result;
    }
    result.t_stat = result.mean_diff / (sd / std::sqrt(static_cast<double>(a.size())));
    result.p_value =
        student_t_two_sided_p(result.t_stat, static_cast<std::uint32_t>(a.size() - 1));
    return result;
}

double ci95_half_width(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    return t_critical_975(static_cast<std::uint32_t>(xs.size() - 1)) * sample_sd(xs) /
           std::sqrt(static_cast<double>(xs.size()));
}

}  // namespace mnr::sim
