#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "ganlab/errors.hpp"

namespace ganlab {

using Point2 = std::array<double, 2>;

struct SampleSet {
    std::vector<Point2> points;

    void validate() const {
        if (points.empty()) throw invalid_input_error("sample set: empty");
        for (const auto& p : points)
            if (!std::isfinite(p[0]) || !std::isfinite(p[1]))
                throw invalid_input_error("sample set: non-finite coordinate");
    }
};

namespace detail {

inline double dist(const Point2& a, const Point2& b) {
    return std::hypot(a[0] - b[0], a[1] - b[1]);
}

/// Dense linear assignment by shortest augmenting paths with dual potentials
/// (Jonker-Volgenant class). Returns the minimal total cost; col4row receives
/// the optimal assignment.
inline double solve_assignment(int n, const std::vector<double>& cost, std::vector<int>& col4row) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n, 0.0), v(n, 0.0), shortest(n);
    std::vector<int> path(n, -1), row4col(n, -1), remaining(n);
    std::vector<char> scanned_rows(n), scanned_cols(n);
    col4row.assign(n, -1);

    for (int cur_row = 0; cur_row < n; ++cur_row) {
        std::fill(shortest.begin(), shortest.end(), inf);
        std::fill(scanned_rows.begin(), scanned_rows.end(), 0);
        std::fill(scanned_cols.begin(), scanned_cols.end(), 0);
        std::iota(remaining.begin(), remaining.end(), 0);
        int num_remaining = n;

        double min_val = 0.0;
        int i = cur_row, sink = -1;
        while (sink == -1) {
            scanned_rows[i] = 1;
            int closest_idx = -1;
            double lowest = inf;
            for (int k = 0; k < num_remaining; ++k) {
                int j = remaining[k];
                double r = min_val + cost[static_cast<std::size_t>(i) * n + j] - u[i] - v[j];
                if (r < shortest[j]) {
                    shortest[j] = r;
                    path[j] = i;
                }
                if (shortest[j] < lowest ||
                    (shortest[j] == lowest && row4col[j] == -1)) {
                    lowest = shortest[j];
                    closest_idx = k;
                }
            }
            min_val = lowest;
            if (!std::isfinite(min_val))
                throw numeric_error("assignment: infeasible (non-finite reduced cost)");
            int closest = remaining[closest_idx];
            if (row4col[closest] == -1) sink = closest;
            else i = row4col[closest];
            scanned_cols[closest] = 1;
            remaining[closest_idx] = remaining[--num_remaining];
        }

        u[cur_row] += min_val;
        for (int r = 0; r < n; ++r)
            if (scanned_rows[r] && r != cur_row) u[r] += min_val - shortest[col4row[r]];
        for (int j = 0; j < n; ++j)
            if (scanned_cols[j]) v[j] -= min_val - shortest[j];

        int j = sink;
        while (true) {
            int r = path[j];
            row4col[j] = r;
            std::swap(col4row[r], j);
            if (r == cur_row) break;
        }
    }

    double total = 0.0;
    for (int r = 0; r < n; ++r) total += cost[static_cast<std::size_t>(r) * n + col4row[r]];
    return total;
}

} // namespace detail

/// Exact empirical Wasserstein-1 distance between equal-size point sets:
/// (1/n) min over permutations of the summed Euclidean matching cost.
inline double w1_exact(const SampleSet& a, const SampleSet& b) {
    a.validate();
    b.validate();
    if (a.points.size() != b.points.size())
        throw invalid_input_error("w1_exact: sample sets must have equal size");
    const int n = static_cast<int>(a.points.size());
    std::vector<double> cost(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            cost[static_cast<std::size_t>(i) * n + j] = detail::dist(a.points[i], b.points[j]);
    std::vector<int> col4row;
    detail::solve_assignment(n, cost, col4row);
    // summing the matched costs in sorted order makes the value independent
    // of which side was called "a" (the pair costs themselves are symmetric)
    std::vector<double> matched(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        matched[static_cast<std::size_t>(i)] = cost[static_cast<std::size_t>(i) * n + col4row[i]];
    std::sort(matched.begin(), matched.end());
    double total = 0.0;
    for (double c : matched) total += c;
    return total / n;
}

/// Exhaustive minimum over all n! pairings; the ground-truth oracle, n <= 8.
inline double w1_bruteforce(const SampleSet& a, const SampleSet& b) {
    a.validate();
    b.validate();
    if (a.points.size() != b.points.size())
        throw invalid_input_error("w1_bruteforce: sample sets must have equal size");
    const int n = static_cast<int>(a.points.size());
    if (n > 8) throw too_large_error("w1_bruteforce: n must be <= 8");
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) acc += detail::dist(a.points[i], b.points[perm[i]]);
        best = std::min(best, acc);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best / n;
}

} // namespace ganlab
