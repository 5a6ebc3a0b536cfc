#include "mfgtorus/torus.hpp"

#include <algorithm>
#include <cmath>

namespace mfg {

double perm_invariant_sum(std::vector<double> terms) {
    std::sort(terms.begin(), terms.end());
    double s = 0.0;
    for (double t : terms) s += t;
    return s;
}

double wrap_coord(double c) {
    double w = c - std::floor(c);
    // floor can leave exactly 1.0 for tiny negative inputs
    if (w >= 1.0) w -= 1.0;
    return w;
}

TorusPoint wrap(const Vec& v) {
    check_finite(v, "wrap");
    Vec out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = wrap_coord(v[i]);
    return TorusPoint{std::move(out)};
}

TorusVector min_displacement(const TorusPoint& x, const TorusPoint& y) {
    if (x.dim() != y.dim()) throw std::invalid_argument("min_displacement: dimension mismatch");
    Vec out(x.dim());
    for (std::size_t i = 0; i < x.dim(); ++i) {
        double t = y[i] - x[i];
        // reduce to [-1/2, 1/2); a tie at 1/2 lands on -1/2
        out[i] = t - std::floor(t + 0.5);
    }
    return TorusVector{std::move(out)};
}

double torus_dist(const TorusPoint& x, const TorusPoint& y) {
    return min_displacement(x, y).norm();
}

}  // namespace mfg
