// The multiple-comparisons procedures: cluster depth tests (head / both),
// cluster mass, TFCE, max-T, min-p, point-wise Troendle and the
// multi-channel depth aggregation. Every procedure consumes a permuted
// statistic matrix whose row 0 is the observed signal, so each *_from_stats
// entry point accepts any statistic a caller can precompute.

#pragma once

#include "clusterdepth/clusters.hpp"
#include "clusterdepth/glm.hpp"
#include "clusterdepth/permutation.hpp"
#include "clusterdepth/troendle.hpp"
#include "clusterdepth/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace clusterdepth {

namespace detail {

inline std::vector<double> sorted_vector(const VectorXd& v) {
    std::vector<double> out(v.data(), v.data() + v.size());
    std::sort(out.begin(), out.end());
    return out;
}

inline double proportion_ge(const std::vector<double>& sorted, double v) {
    const auto ge = sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), v);
    return static_cast<double>(ge) / static_cast<double>(sorted.size());
}

inline double proportion_le(const std::vector<double>& sorted, double v) {
    const auto le = std::upper_bound(sorted.begin(), sorted.end(), v) - sorted.begin();
    return static_cast<double>(le) / static_cast<double>(sorted.size());
}

}  // namespace detail

// Per-direction outcome of the depth tests in the direction's own time
// coordinates (tail direction runs on reversed time).
struct DirectionDepthOutcome {
    VectorXd p;  // length m; 1 where no test is assigned
    int j_d = 0;
    struct TestedCluster {
        int start = 0;
        int end = 0;
        VectorXd adjusted;  // one p per depth, depth 1 first
    };
    std::vector<TestedCluster> clusters;
};

// Tests the observed clusters of `observed_row` (first-time-point run
// excluded) against a depth-aligned null matrix via the step-down
// correction; shorter clusters are zero-filled to the matrix width.
inline DirectionDepthOutcome depth_pvalues_against(const VectorXd& observed_row,
                                                   const MatrixXd& null_matrix, double tau) {
    DirectionDepthOutcome out;
    out.p = VectorXd::Ones(observed_row.size());
    out.j_d = static_cast<int>(null_matrix.cols());
    if (out.j_d == 0) return out;
    for (const Cluster& c : form_clusters(observed_row, tau, /*exclude_first=*/true)) {
        const int len = c.length();
        VectorXd obs = VectorXd::Zero(out.j_d);
        obs.head(len) = c.stats;
        const VectorXd adjusted = troendle_stepdown({obs, null_matrix});
        for (int j = 0; j < len; ++j) out.p[c.start + j] = adjusted[j];
        out.clusters.push_back({c.start, c.end, adjusted.head(len)});
    }
    return out;
}

// Observed cluster with its per-direction depth p-values. Depth vectors are
// empty when the cluster touches the corresponding boundary and receives no
// test from that direction. head_p is indexed from the cluster head,
// tail_p from the cluster tail.
struct DepthClusterReport {
    int channel = 0;  // 0-based
    int start = 0;
    int end = 0;
    double mass_sum = 0.0;
    VectorXd head_p;
    VectorXd tail_p;
};

struct ClusterDepthResult {
    AdjustedPValueMap map;
    VectorXd p_head;
    VectorXd p_tail;
    std::vector<DepthClusterReport> clusters;
    int jd_head = 0;
    int jd_tail = 0;
    double tau = 0.0;
};

namespace detail {

inline void fill_depth_reports(const PermutedStatMatrix& stats, double tau,
                               const DirectionDepthOutcome& head,
                               const DirectionDepthOutcome& tail_reversed, int channel,
                               std::vector<DepthClusterReport>& reports) {
    const auto m = stats.m();
    const VectorXd observed = stats.stats.row(0);
    for (const Cluster& c : form_clusters(observed, tau, /*exclude_first=*/false)) {
        DepthClusterReport rep;
        rep.channel = channel;
        rep.start = c.start;
        rep.end = c.end;
        rep.mass_sum = c.stats.sum();
        for (const auto& tc : head.clusters)
            if (tc.start == c.start) rep.head_p = tc.adjusted;
        const int rev_start = static_cast<int>(m) - 1 - c.end;
        for (const auto& tc : tail_reversed.clusters)
            if (tc.start == rev_start) rep.tail_p = tc.adjusted;
        reports.push_back(std::move(rep));
    }
}

}  // namespace detail

// Cluster depth tests on a single channel. Head p-values come from the
// depth-aligned null with first-time-point clusters excluded; tail p-values
// repeat the procedure on reversed time; the final map takes the
// element-wise maximum of the two. Clusters touching a boundary keep p = 1
// from that direction.
inline ClusterDepthResult cluster_depth_from_stats(const PermutedStatMatrix& stats, double tau,
                                                   double alpha,
                                                   Procedure mode = Procedure::ClusterDepthBoth,
                                                   int threads = 1) {
    if (mode != Procedure::ClusterDepthBoth && mode != Procedure::ClusterDepthHead)
        throw input_error("cluster depth mode must be head or both");
    ClusterDepthResult out;
    out.tau = tau;

    const DepthNullDistribution head_null = depth_null(stats, tau, DepthDirection::Head, threads);
    const VectorXd observed = stats.stats.row(0);
    const DirectionDepthOutcome head = depth_pvalues_against(observed, head_null.matrix, tau);
    out.jd_head = head.j_d;
    out.p_head = head.p;

    PermutedStatMatrix reversed;
    reversed.scheme = stats.scheme;
    reversed.stats = stats.stats.rowwise().reverse();
    const DepthNullDistribution tail_null =
        depth_null(reversed, tau, DepthDirection::Head, threads);
    const VectorXd observed_rev = reversed.stats.row(0);
    const DirectionDepthOutcome tail = depth_pvalues_against(observed_rev, tail_null.matrix, tau);
    out.jd_tail = tail.j_d;
    out.p_tail = tail.p.reverse();

    detail::fill_depth_reports(stats, tau, head, tail, 0, out.clusters);

    out.map.procedure = mode;
    out.map.alpha = alpha;
    if (mode == Procedure::ClusterDepthBoth)
        out.map.p = out.p_head.cwiseMax(out.p_tail);
    else
        out.map.p = out.p_head;
    out.map.decide();
    return out;
}

struct MassCluster {
    int start = 0;
    int end = 0;
    double mass = 0.0;
    double p = 1.0;
};

struct ClusterMassResult {
    AdjustedPValueMap map;
    std::vector<MassCluster> clusters;
    double tau = 0.0;
};

// Cluster mass test: each observed cluster is compared against the
// permutation distribution of the maximal cluster mass (0 for rows with no
// cluster); member time points share the cluster's p. Boundary runs are not
// excluded here.
inline ClusterMassResult cluster_mass_from_stats(const PermutedStatMatrix& stats, double tau,
                                                 MassAggregation aggregation, double alpha,
                                                 int threads = 1) {
    const int n_p = stats.n_p();
    const auto m = stats.m();
    VectorXd max_mass(n_p);
    parallel_for(n_p, threads, [&](long lo, long hi) {
        VectorXd row(m);
        for (long i = lo; i < hi; ++i) {
            row = stats.stats.row(i);
            double best = 0.0;
            for (const Cluster& c : form_clusters(row, tau, /*exclude_first=*/false))
                best = std::max(best, cluster_mass(c, aggregation));
            max_mass[i] = best;
        }
    });
    const auto sorted = detail::sorted_vector(max_mass);

    ClusterMassResult out;
    out.tau = tau;
    out.map.procedure = Procedure::ClusterMass;
    out.map.alpha = alpha;
    out.map.p = VectorXd::Ones(m);
    const VectorXd observed = stats.stats.row(0);
    for (const Cluster& c : form_clusters(observed, tau, /*exclude_first=*/false)) {
        const double mass = cluster_mass(c, aggregation);
        const double p = detail::proportion_ge(sorted, mass);
        for (int s = c.start; s <= c.end; ++s) out.map.p[s] = p;
        out.clusters.push_back({c.start, c.end, mass, p});
    }
    out.map.decide();
    return out;
}

// TFCE test: per permutation row the maximal transformed score over time
// forms the null; each time point is compared against that distribution.
inline AdjustedPValueMap tfce_from_stats(const PermutedStatMatrix& stats, double extent_power,
                                         double height_power, double dh, double alpha,
                                         double h_start = 0.0, int threads = 1) {
    const int n_p = stats.n_p();
    const auto m = stats.m();
    VectorXd row_max(n_p);
    VectorXd observed_tfce;
    parallel_for(n_p, threads, [&](long lo, long hi) {
        VectorXd row(m);
        for (long i = lo; i < hi; ++i) {
            row = stats.stats.row(i);
            const VectorXd scores = tfce_transform(row, extent_power, height_power, dh, h_start);
            row_max[i] = scores.size() > 0 ? scores.maxCoeff() : 0.0;
            if (i == 0) observed_tfce = scores;
        }
    });
    const auto sorted = detail::sorted_vector(row_max);
    AdjustedPValueMap out;
    out.procedure = Procedure::TFCE;
    out.alpha = alpha;
    out.p.resize(m);
    for (Eigen::Index s = 0; s < m; ++s)
        out.p[s] = detail::proportion_ge(sorted, observed_tfce[s]);
    out.decide();
    return out;
}

// Single-step max-T: p[s] is the proportion of rows whose maximal statistic
// over time reaches the observed statistic at s.
inline AdjustedPValueMap maxt_from_stats(const PermutedStatMatrix& stats, double alpha) {
    const int n_p = stats.n_p();
    const auto m = stats.m();
    VectorXd row_max(n_p);
    for (int i = 0; i < n_p; ++i) row_max[i] = stats.stats.row(i).maxCoeff();
    const auto sorted = detail::sorted_vector(row_max);
    AdjustedPValueMap out;
    out.procedure = Procedure::MaxT;
    out.alpha = alpha;
    out.p.resize(m);
    for (Eigen::Index s = 0; s < m; ++s)
        out.p[s] = detail::proportion_ge(sorted, stats.stats(0, s));
    out.decide();
    return out;
}

// Single-step min-p: marginal permutation p-values per time point, then
// p[s] is the proportion of rows whose minimal marginal p is at most the
// observed marginal p at s. With few permutations relative to the number of
// effective tests, the null minimum saturates at 1/n_p and no rejection is
// possible; that behavior is intentional and must not be patched here.
inline AdjustedPValueMap minp_from_stats(const PermutedStatMatrix& stats, double alpha) {
    const int n_p = stats.n_p();
    const auto m = stats.m();
    const auto sorted_cols = detail::sorted_columns(stats.stats);
    VectorXd row_min = VectorXd::Constant(n_p, std::numeric_limits<double>::infinity());
    VectorXd obs_marginal(m);
    for (Eigen::Index s = 0; s < m; ++s) {
        const auto& col = sorted_cols[static_cast<size_t>(s)];
        for (int i = 0; i < n_p; ++i) {
            const double pv = detail::marginal_p(col, stats.stats(i, s));
            if (pv < row_min[i]) row_min[i] = pv;
        }
        obs_marginal[s] = detail::marginal_p(col, stats.stats(0, s));
    }
    const auto sorted_min = detail::sorted_vector(row_min);
    AdjustedPValueMap out;
    out.procedure = Procedure::MinP;
    out.alpha = alpha;
    out.p.resize(m);
    for (Eigen::Index s = 0; s < m; ++s)
        out.p[s] = detail::proportion_le(sorted_min, obs_marginal[s]);
    out.decide();
    return out;
}

// Point-wise step-down correction over the m time points (no clustering).
inline AdjustedPValueMap troendle_from_stats(const PermutedStatMatrix& stats, double alpha) {
    AdjustedPValueMap out;
    out.procedure = Procedure::Troendle;
    out.alpha = alpha;
    out.p = troendle_stepdown({stats.stats.row(0), stats.stats});
    out.decide();
    return out;
}

// ---------------------------------------------------------------------------
// Multi-channel depth aggregation

struct MultiChannelDepthResult {
    std::vector<AdjustedPValueMap> maps;   // one per channel
    std::vector<VectorXd> p_head;
    std::vector<VectorXd> p_tail;
    std::vector<DepthClusterReport> clusters;
    int jd_head = 0;
    int jd_tail = 0;
    double tau = 0.0;
};

// Depth null distributions are built per channel, zero-padded to the global
// depth count and aggregated across channels by element-wise maximum (per
// depth, per permutation row). Every observed cluster on every channel is
// then tested against the aggregated distribution, which controls the error
// rate across all channels jointly.
inline MultiChannelDepthResult multichannel_depth_from_stats(
    const std::vector<PermutedStatMatrix>& stats, double tau, double alpha, int threads = 1) {
    if (stats.size() < 2)
        throw input_error("multi-channel depth test requires at least 2 channels");
    const int n_p = stats.front().n_p();
    const auto m = stats.front().m();
    for (const auto& ch : stats)
        if (ch.n_p() != n_p || ch.m() != m)
            throw input_error("channels disagree on permutation count or signal length");

    MultiChannelDepthResult out;
    out.tau = tau;

    const auto aggregate = [&](bool reversed_time, int& jd_out) {
        std::vector<MatrixXd> per_channel;
        per_channel.reserve(stats.size());
        int jd = 0;
        for (const auto& ch : stats) {
            PermutedStatMatrix use;
            use.scheme = ch.scheme;
            use.stats = reversed_time ? MatrixXd(ch.stats.rowwise().reverse()) : ch.stats;
            DepthNullDistribution dn = depth_null(use, tau, DepthDirection::Head, threads);
            jd = std::max(jd, dn.j_d());
            per_channel.push_back(std::move(dn.matrix));
        }
        MatrixXd agg = MatrixXd::Zero(n_p, jd);
        for (const auto& mat : per_channel)
            agg.leftCols(mat.cols()) = agg.leftCols(mat.cols()).cwiseMax(mat);
        jd_out = jd;
        return agg;
    };

    const MatrixXd agg_head = aggregate(false, out.jd_head);
    const MatrixXd agg_tail = aggregate(true, out.jd_tail);

    for (size_t ch = 0; ch < stats.size(); ++ch) {
        const VectorXd observed = stats[ch].stats.row(0);
        const VectorXd observed_rev = observed.reverse();
        const DirectionDepthOutcome head = depth_pvalues_against(observed, agg_head, tau);
        const DirectionDepthOutcome tail = depth_pvalues_against(observed_rev, agg_tail, tau);
        VectorXd p_tail_fwd = tail.p.reverse();

        AdjustedPValueMap map;
        map.procedure = Procedure::ClusterDepthBoth;
        map.alpha = alpha;
        map.p = head.p.cwiseMax(p_tail_fwd);
        map.decide();

        detail::fill_depth_reports(stats[ch], tau, head, tail, static_cast<int>(ch),
                                   out.clusters);
        out.maps.push_back(std::move(map));
        out.p_head.push_back(head.p);
        out.p_tail.push_back(std::move(p_tail_fwd));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Data-level wrappers (single channel unless stated otherwise)

namespace detail {

inline const MatrixXd& single_channel(const SignalMatrix& signals) {
    validate(signals);
    if (signals.channel_count() != 1)
        throw input_error("this procedure runs on a single channel; use the multi-channel "
                          "depth test for multi-channel data");
    return signals.channel(0);
}

}  // namespace detail

inline ClusterDepthResult cluster_depth_test(const SignalMatrix& signals,
                                             const DesignSpec& design,
                                             const PermutationPlan& plan, double tau,
                                             double alpha,
                                             Procedure mode = Procedure::ClusterDepthBoth,
                                             int threads = 1) {
    const auto& data = detail::single_channel(signals);
    const PermutedStatMatrix stats = permuted_statistics(data, design, plan, threads);
    return cluster_depth_from_stats(stats, tau, alpha, mode, threads);
}

inline ClusterMassResult cluster_mass_test(const SignalMatrix& signals, const DesignSpec& design,
                                           const PermutationPlan& plan, double tau,
                                           MassAggregation aggregation, double alpha,
                                           int threads = 1) {
    const auto& data = detail::single_channel(signals);
    const PermutedStatMatrix stats = permuted_statistics(data, design, plan, threads);
    return cluster_mass_from_stats(stats, tau, aggregation, alpha, threads);
}

inline AdjustedPValueMap tfce_test(const SignalMatrix& signals, const DesignSpec& design,
                                   const PermutationPlan& plan, double extent_power,
                                   double height_power, double dh, double alpha,
                                   double h_start = 0.0, int threads = 1) {
    const auto& data = detail::single_channel(signals);
    const PermutedStatMatrix stats = permuted_statistics(data, design, plan, threads);
    return tfce_from_stats(stats, extent_power, height_power, dh, alpha, h_start, threads);
}

inline AdjustedPValueMap maxt_test(const SignalMatrix& signals, const DesignSpec& design,
                                   const PermutationPlan& plan, double alpha, int threads = 1) {
    const auto& data = detail::single_channel(signals);
    return maxt_from_stats(permuted_statistics(data, design, plan, threads), alpha);
}

inline AdjustedPValueMap minp_test(const SignalMatrix& signals, const DesignSpec& design,
                                   const PermutationPlan& plan, double alpha, int threads = 1) {
    const auto& data = detail::single_channel(signals);
    return minp_from_stats(permuted_statistics(data, design, plan, threads), alpha);
}

inline AdjustedPValueMap troendle_test(const SignalMatrix& signals, const DesignSpec& design,
                                       const PermutationPlan& plan, double alpha,
                                       int threads = 1) {
    const auto& data = detail::single_channel(signals);
    return troendle_from_stats(permuted_statistics(data, design, plan, threads), alpha);
}

inline MultiChannelDepthResult multichannel_cluster_depth(const SignalMatrix& signals,
                                                          const DesignSpec& design,
                                                          const PermutationPlan& plan, double tau,
                                                          double alpha, int threads = 1) {
    validate(signals);
    if (signals.channel_count() < 2)
        throw input_error("multi-channel depth test requires at least 2 channels");
    const std::vector<PermutedStatMatrix> stats =
        permuted_statistics(signals, design, plan, threads);
    return multichannel_depth_from_stats(stats, tau, alpha, threads);
}

}  // namespace clusterdepth
