#pragma once

#include <cmath>
#include <vector>

#include "ganlab/errors.hpp"

namespace ganlab {

/// Nodes and weights for integrals of the form  int g(t) exp(-t^2) dt = sum w_i g(t_i).
struct GaussHermite {
    std::vector<double> nodes;
    std::vector<double> weights;

    // E_{X ~ N(mean, stddev^2)}[g(X)]
    template <class G>
    double expect(double mean, double stddev, G&& g) const {
        constexpr double inv_sqrt_pi = 0.5641895835477562869480794515608;
        const double scale = 1.4142135623730950488016887242097 * stddev; // sqrt(2) sigma
        double acc = 0.0;
        for (std::size_t i = 0; i < nodes.size(); ++i)
            acc += weights[i] * g(mean + scale * nodes[i]);
        return acc * inv_sqrt_pi;
    }
};

/// Newton iteration on the orthonormal Hermite recurrence. Standard scheme;
/// accurate to roundoff for the orders used here (<= a few hundred).
inline GaussHermite gauss_hermite(int n) {
    if (n < 1) throw invalid_input_error("gauss_hermite: order must be >= 1");
    constexpr double eps = 3e-14;
    constexpr int max_iter = 60;
    constexpr double pim4 = 0.7511255444649425; // pi^(-1/4)
    std::vector<double> x(n), w(n);
    const int m = (n + 1) / 2;
    double z = 0.0, pp = 0.0;
    for (int i = 0; i < m; ++i) {
        if (i == 0)
            z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -1.0 / 6.0);
        else if (i == 1)
            z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
        else if (i == 2)
            z = 1.86 * z - 0.86 * x[0];
        else if (i == 3)
            z = 1.91 * z - 0.91 * x[1];
        else
            z = 2.0 * z - x[i - 2];
        int it = 0;
        for (; it < max_iter; ++it) {
            double p1 = pim4, p2 = 0.0;
            for (int j = 0; j < n; ++j) {
                double p3 = p2;
                p2 = p1;
                p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
            }
            pp = std::sqrt(2.0 * n) * p2;
            double z1 = z;
            z = z1 - p1 / pp;
            if (std::abs(z - z1) <= eps) break;
        }
        if (it >= max_iter) throw numeric_error("gauss_hermite: Newton iteration did not converge");
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    return {std::move(x), std::move(w)};
}

} // namespace ganlab
