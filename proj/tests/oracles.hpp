#pragma once

// Independent reference computations used by the tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

// Two-sided one-sample Kolmogorov-Smirnov statistic.
inline double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf) {
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double f = cdf(xs[i]);
        d = std::max({d, (static_cast<double>(i) + 1)/n - f, f - static_cast<double>(i)/n});
    }
    return d;
}

// Asymptotic critical value of the KS statistic at level 0.01.
inline double ks_critical_01(std::size_t n) {
    return 1.62762/std::sqrt(static_cast<double>(n));
}

// AUROC by counting every (positive, negative) pair.
inline double pair_count_auroc(const std::vector<double>& pos, const std::vector<double>& neg) {
    double wins = 0;
    for (double p: pos) {
        for (double q: neg) wins += p > q? 1.0: p == q? 0.5: 0.0;
    }
    return wins/(static_cast<double>(pos.size())*static_cast<double>(neg.size()));
}

// Composite Simpson rule with n (even) panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n) {
    double h = (b - a)/n, s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += (i % 2? 4: 2)*f(a + i*h);
    return s*h/3;
}

} // namespace oracle
