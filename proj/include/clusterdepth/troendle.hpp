// Step-down multiple-testing correction over a row-aligned permutation null
// distribution, applied to marginal permutation p-values so columns with
// different null distributions stay comparable.

#pragma once

#include "clusterdepth/types.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <vector>

namespace clusterdepth {

namespace detail {

inline std::vector<std::vector<double>> sorted_columns(const MatrixXd& matrix) {
    std::vector<std::vector<double>> out(static_cast<size_t>(matrix.cols()));
    for (Eigen::Index j = 0; j < matrix.cols(); ++j) {
        auto& col = out[static_cast<size_t>(j)];
        col.assign(matrix.col(j).data(), matrix.col(j).data() + matrix.rows());
        std::sort(col.begin(), col.end());
    }
    return out;
}

// Proportion of column entries >= v (ties inclusive).
inline double marginal_p(const std::vector<double>& sorted_col, double v) {
    const auto ge = sorted_col.end() - std::lower_bound(sorted_col.begin(), sorted_col.end(), v);
    return static_cast<double>(ge) / static_cast<double>(sorted_col.size());
}

}  // namespace detail

// Adjusted p-values for J hypotheses. Marginal permutation p-values are
// computed column-wise with >=-counting over all rows (identity row
// included). Hypotheses are visited in significance order (ascending
// marginal p, ties by descending statistic then lower index); the step-k
// adjusted p is the proportion of rows whose minimum marginal p over the
// not-yet-passed set is at most the observed marginal p, made monotone
// non-decreasing along the ordering.
inline VectorXd troendle_stepdown(const TroendleInput& input) {
    const auto J = input.observed.size();
    const auto n_p = input.null_matrix.rows();
    if (input.null_matrix.cols() != J)
        throw input_error("troendle null matrix has " + std::to_string(input.null_matrix.cols()) +
                          " columns, observed has " + std::to_string(J));
    if (J == 0) return VectorXd();
    if (n_p < 1) throw input_error("troendle requires at least one permutation row");
    // +infinity sentinels sort above every finite value and flow through the
    // >=-counting; only NaN is rejected.
    if (input.observed.hasNaN()) throw input_error("troendle observed values contain NaN");

    const auto sorted = detail::sorted_columns(input.null_matrix);
    VectorXd p_obs(J);
    for (Eigen::Index j = 0; j < J; ++j)
        p_obs[j] = detail::marginal_p(sorted[static_cast<size_t>(j)], input.observed[j]);

    std::vector<Eigen::Index> order(static_cast<size_t>(J));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        if (p_obs[a] != p_obs[b]) return p_obs[a] < p_obs[b];
        if (input.observed[a] != input.observed[b]) return input.observed[a] > input.observed[b];
        return a < b;
    });

    std::vector<double> row_min(static_cast<size_t>(n_p),
                                std::numeric_limits<double>::infinity());
    std::vector<double> step_p(static_cast<size_t>(J), 0.0);
    for (Eigen::Index k = J - 1; k >= 0; --k) {
        const auto j = order[static_cast<size_t>(k)];
        const auto& col_sorted = sorted[static_cast<size_t>(j)];
        long count = 0;
        for (Eigen::Index i = 0; i < n_p; ++i) {
            const double pv = detail::marginal_p(col_sorted, input.null_matrix(i, j));
            auto& rm = row_min[static_cast<size_t>(i)];
            if (pv < rm) rm = pv;
            if (rm <= p_obs[j]) ++count;
        }
        step_p[static_cast<size_t>(k)] = static_cast<double>(count) / static_cast<double>(n_p);
    }

    VectorXd adjusted(J);
    double running = 0.0;
    for (Eigen::Index k = 0; k < J; ++k) {
        running = std::max(running, step_p[static_cast<size_t>(k)]);
        adjusted[order[static_cast<size_t>(k)]] = running;
    }
    return adjusted;
}

}  // namespace clusterdepth
