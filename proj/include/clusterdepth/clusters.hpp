// Threshold geometry on statistic signals: run detection, mass aggregation,
// TFCE transformation and depth-aligned null distributions.

#pragma once

#include "clusterdepth/parallel.hpp"
#include "clusterdepth/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace clusterdepth {

// Maximal runs of strictly supra-threshold statistics, left to right.
// +infinity sentinels count as above any finite tau. When exclude_first is
// set, a run containing time index 0 is dropped (its depth from the head is
// undefined).
inline std::vector<Cluster> form_clusters(const Eigen::Ref<const VectorXd>& signal, double tau,
                                          bool exclude_first) {
    std::vector<Cluster> out;
    const auto m = signal.size();
    Eigen::Index s = 0;
    while (s < m) {
        if (!(signal[s] > tau)) {
            ++s;
            continue;
        }
        const Eigen::Index start = s;
        while (s < m && signal[s] > tau) ++s;
        const Eigen::Index end = s - 1;
        if (exclude_first && start == 0) continue;
        Cluster c;
        c.start = static_cast<int>(start);
        c.end = static_cast<int>(end);
        c.stats = signal.segment(start, end - start + 1);
        c.touches_boundary = {start == 0, end == m - 1};
        out.push_back(std::move(c));
    }
    return out;
}

inline double cluster_mass(const Cluster& cluster, MassAggregation aggregation) {
    if (cluster.stats.size() == 0) throw input_error("cluster mass of an empty cluster");
    return aggregation == MassAggregation::Sum ? cluster.stats.sum()
                                               : cluster.stats.squaredNorm();
}

// Threshold-free cluster enhancement. For each time point the transform
// accumulates extent^E * height^H * dh over the height grid
// h = h_start + dh, h_start + 2*dh, ... up to the signal value; extent is
// the length of the run of values >= h containing the point.
inline VectorXd tfce_transform(const Eigen::Ref<const VectorXd>& signal, double extent_power,
                               double height_power, double dh, double h_start = 0.0) {
    if (!(dh > 0.0)) throw input_error("tfce requires dh > 0");
    if (extent_power < 0.0 || height_power < 0.0)
        throw input_error("tfce requires non-negative exponents");
    const auto m = signal.size();
    VectorXd out = VectorXd::Zero(m);
    double max_finite = 0.0;
    bool any_inf = false;
    for (Eigen::Index s = 0; s < m; ++s) {
        if (std::isinf(signal[s]))
            any_inf = true;
        else
            max_finite = std::max(max_finite, signal[s]);
    }
    for (long k = 1;; ++k) {
        const double h = h_start + dh * static_cast<double>(k);
        if (h > max_finite) break;
        const double weight_h = std::pow(h, height_power) * dh;
        Eigen::Index s = 0;
        while (s < m) {
            if (!(signal[s] >= h)) {
                ++s;
                continue;
            }
            const Eigen::Index start = s;
            while (s < m && signal[s] >= h) ++s;
            const double extent = static_cast<double>(s - start);
            const double add = std::pow(extent, extent_power) * weight_h;
            for (Eigen::Index t = start; t < s; ++t) out[t] += add;
        }
    }
    if (any_inf) {
        for (Eigen::Index s = 0; s < m; ++s)
            if (std::isinf(signal[s])) out[s] = std::numeric_limits<double>::infinity();
    }
    return out;
}

namespace detail {

inline void depth_row_clusters(const VectorXd& row, double tau,
                               std::vector<std::pair<int, int>>& spans) {
    // spans of strictly supra-threshold runs, first-time-point run excluded
    spans.clear();
    const auto m = row.size();
    Eigen::Index s = 0;
    while (s < m) {
        if (!(row[s] > tau)) {
            ++s;
            continue;
        }
        const Eigen::Index start = s;
        while (s < m && row[s] > tau) ++s;
        if (start == 0) continue;
        spans.emplace_back(static_cast<int>(start), static_cast<int>(s - start));
    }
}

}  // namespace detail

// Depth-aligned permutation null distribution. Entry (i, j) is the maximum,
// over row i's clusters of length > j, of the statistic at depth j; 0 when
// no such cluster exists. The number of stored depths is the largest cluster
// length over every row (the observed signal is row 0 of the matrix).
// Tail direction reverses time before forming clusters, so the excluded
// boundary run is the one touching the last time point.
inline DepthNullDistribution depth_null(const PermutedStatMatrix& perm_stats, double tau,
                                        DepthDirection direction, int threads = 1) {
    const auto& stats = perm_stats.stats;
    if (stats.rows() == 0 || stats.cols() == 0)
        throw input_error("depth_null requires a nonempty statistic matrix");
    const int n_p = static_cast<int>(stats.rows());
    const auto m = stats.cols();

    std::vector<int> max_len(static_cast<size_t>(n_p), 0);
    parallel_for(n_p, threads, [&](long lo, long hi) {
        VectorXd row(m);
        std::vector<std::pair<int, int>> spans;
        for (long i = lo; i < hi; ++i) {
            row = stats.row(i);
            if (direction == DepthDirection::Tail) row.reverseInPlace();
            detail::depth_row_clusters(row, tau, spans);
            int longest = 0;
            for (const auto& sp : spans) longest = std::max(longest, sp.second);
            max_len[static_cast<size_t>(i)] = longest;
        }
    });
    const int j_d = *std::max_element(max_len.begin(), max_len.end());

    DepthNullDistribution out;
    out.direction = direction;
    out.tau = tau;
    out.matrix = MatrixXd::Zero(n_p, j_d);
    if (j_d == 0) return out;
    parallel_for(n_p, threads, [&](long lo, long hi) {
        VectorXd row(m);
        std::vector<std::pair<int, int>> spans;
        for (long i = lo; i < hi; ++i) {
            row = stats.row(i);
            if (direction == DepthDirection::Tail) row.reverseInPlace();
            detail::depth_row_clusters(row, tau, spans);
            for (const auto& [start, len] : spans)
                for (int j = 0; j < len; ++j)
                    out.matrix(i, j) = std::max(out.matrix(i, j), row[start + j]);
        }
    });
    return out;
}

}  // namespace clusterdepth
