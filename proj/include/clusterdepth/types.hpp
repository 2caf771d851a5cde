// Core domain types shared by every module: response data, designs,
// statistic signals, permutation plans and result maps.

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace clusterdepth {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Thrown when a design matrix / contrast combination cannot support the
// requested test (rank deficiency, non-positive residual df, ...).
struct design_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Malformed caller input that is not a design problem (dimension mismatch,
// bad channel layout, invalid parameter values).
struct input_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Exhaustive enumeration request exceeds the configured cap.
struct capacity_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// File-level ingestion/serialization failures.
struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Covariance factorization failure (matrix numerically not PD).
struct factorization_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class StatisticKind { F, T };
enum class PermScheme { Manly, TerBraak };
enum class DepthDirection { Head, Tail };
enum class MassAggregation { Sum, SumOfSquares };

enum class Procedure {
    ClusterDepthHead,
    ClusterDepthBoth,
    ClusterMass,
    TFCE,
    MinP,
    MaxT,
    Troendle,
};

inline std::string to_string(Procedure p) {
    switch (p) {
        case Procedure::ClusterDepthHead: return "cluster_depth_head";
        case Procedure::ClusterDepthBoth: return "cluster_depth_both";
        case Procedure::ClusterMass: return "cluster_mass";
        case Procedure::TFCE: return "tfce";
        case Procedure::MinP: return "min_p";
        case Procedure::MaxT: return "max_t";
        case Procedure::Troendle: return "troendle";
    }
    return "unknown";
}

inline std::string to_string(PermScheme s) {
    return s == PermScheme::Manly ? "manly" : "terbraak";
}

inline std::string to_string(StatisticKind k) {
    return k == StatisticKind::F ? "F" : "t";
}

inline std::string to_string(MassAggregation a) {
    return a == MassAggregation::Sum ? "sum" : "sum_of_squares";
}

// Response data: n observations x m time points, one matrix per channel.
// All channels share the observation dimension.
struct SignalMatrix {
    std::vector<MatrixXd> channels;          // each n x m
    std::optional<double> sampling_rate_hz;  // metadata only

    SignalMatrix() = default;
    explicit SignalMatrix(MatrixXd single) { channels.push_back(std::move(single)); }

    Eigen::Index n_observations() const { return channels.empty() ? 0 : channels.front().rows(); }
    Eigen::Index n_timepoints() const { return channels.empty() ? 0 : channels.front().cols(); }
    int channel_count() const { return static_cast<int>(channels.size()); }
    const MatrixXd& channel(int c) const { return channels.at(static_cast<size_t>(c)); }
};

inline void validate(const SignalMatrix& s) {
    if (s.channels.empty()) throw input_error("signal matrix has no channels");
    const auto n = s.channels.front().rows();
    const auto m = s.channels.front().cols();
    if (n < 2) throw input_error("signal matrix needs at least 2 observations");
    if (m < 2) throw input_error("signal matrix needs at least 2 time points");
    for (size_t c = 0; c < s.channels.size(); ++c) {
        const auto& ch = s.channels[c];
        if (ch.rows() != n || ch.cols() != m)
            throw input_error("channel " + std::to_string(c + 1) +
                              " dimensions differ from channel 1");
        if (!ch.allFinite())
            throw input_error("channel " + std::to_string(c + 1) +
                              " contains non-finite entries");
    }
}

// Design matrix X (n x q) with contrast G (r x q) selecting the tested
// combination of coefficients. group_labels, when present, partition the
// observation rows (used for effect injection and metadata).
struct DesignSpec {
    MatrixXd X;
    MatrixXd G;
    std::optional<std::vector<int>> group_labels;
};

// Standard two-group design: intercept + indicator of group 2,
// G tests the group coefficient.
inline DesignSpec two_group_design(int n1, int n2) {
    if (n1 < 1 || n2 < 1) throw input_error("each group needs at least one observation");
    const int n = n1 + n2;
    MatrixXd x(n, 2);
    std::vector<int> labels(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        x(i, 0) = 1.0;
        x(i, 1) = i < n1 ? 0.0 : 1.0;
        labels[static_cast<size_t>(i)] = i < n1 ? 0 : 1;
    }
    MatrixXd g(1, 2);
    g << 0.0, 1.0;
    return DesignSpec{std::move(x), std::move(g), std::move(labels)};
}

// One univariate statistic per time point for a single channel.
struct StatSignal {
    VectorXd values;
    StatisticKind kind = StatisticKind::F;
    std::pair<double, double> df{0.0, 0.0};  // numerator, denominator
    std::vector<std::uint8_t> degenerate;    // per time point: zero residual variance
};

// Pre-generated resampling plan. Row 0 is always the identity permutation;
// rows are permutations of 0..n-1 drawn sequentially from the seed.
struct PermutationPlan {
    PermScheme scheme = PermScheme::Manly;
    int n_p = 0;
    int n = 0;
    std::uint64_t seed = 0;
    bool exhaustive = false;
    std::vector<std::int32_t> indices;  // n_p rows x n, row-major

    std::span<const std::int32_t> row(int i) const {
        return {indices.data() + static_cast<size_t>(i) * static_cast<size_t>(n),
                static_cast<size_t>(n)};
    }
};

inline constexpr const char* kRngIdentifier = "mt19937_64/fisher-yates/splitmix64-streams";

// n_p x m statistic matrix; row i is the statistic signal of plan row i.
// Row 0 carries the observed (uncentered) statistics under both schemes.
struct PermutedStatMatrix {
    MatrixXd stats;
    PermScheme scheme = PermScheme::Manly;

    int n_p() const { return static_cast<int>(stats.rows()); }
    Eigen::Index m() const { return stats.cols(); }
};

// Maximal run of adjacent supra-threshold time points.
struct Cluster {
    int start = 0;  // inclusive
    int end = 0;    // inclusive
    VectorXd stats;
    std::pair<bool, bool> touches_boundary{false, false};

    int length() const { return end - start + 1; }
};

// Null distribution of depth-aligned statistics: n_p rows x j_d depths.
// Column j holds the per-permutation maxima at depth j (0-based).
struct DepthNullDistribution {
    MatrixXd matrix;
    DepthDirection direction = DepthDirection::Head;
    double tau = 0.0;

    int j_d() const { return static_cast<int>(matrix.cols()); }
};

// Per-time-point corrected p-values for one channel. Entries outside any
// tested cluster are 1 for cluster procedures.
struct AdjustedPValueMap {
    VectorXd p;
    Procedure procedure = Procedure::MaxT;
    double alpha = 0.05;
    std::vector<std::uint8_t> significant;

    void decide() {
        significant.assign(static_cast<size_t>(p.size()), 0);
        for (Eigen::Index s = 0; s < p.size(); ++s)
            if (p[s] <= alpha) significant[static_cast<size_t>(s)] = 1;
    }
};

// Observed vector against a row-aligned permutation null, consumed by the
// step-down correction.
struct TroendleInput {
    VectorXd observed;
    MatrixXd null_matrix;  // n_p x J
};

}  // namespace clusterdepth
