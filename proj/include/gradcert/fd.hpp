#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "gradcert/tensor.hpp"

namespace gradcert::fd {

// Central-difference gradient oracle. This is test scaffolding: it exists to
// check the tape's reverse sweep and deliberately knows nothing about tapes;
// it only evaluates the given callable. O(2 * numel) evaluations, so keep it
// to programs with a few hundred parameters.
inline std::vector<double> gradient(const std::function<double(const std::vector<double>&)>& f,
                                    std::vector<double> point, double h = 1e-6) {
    std::vector<double> g(point.size());
    for (std::size_t i = 0; i < point.size(); ++i) {
        const double saved = point[i];
        point[i] = saved + h;
        const double fp = f(point);
        point[i] = saved - h;
        const double fm = f(point);
        point[i] = saved;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

// Relative error with the denominator floored at 1, elementwise maximum.
inline double max_rel_error(const std::vector<double>& got, const std::vector<double>& want) {
    double worst = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        double denom = std::max(1.0, std::abs(want[i]));
        worst = std::max(worst, std::abs(got[i] - want[i]) / denom);
    }
    return worst;
}

}  // namespace gradcert::fd
