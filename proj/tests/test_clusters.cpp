#include "clusterdepth/clusters.hpp"

#include "oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

using namespace clusterdepth;

namespace {

VectorXd vec(std::initializer_list<double> values) {
    VectorXd out(static_cast<Eigen::Index>(values.size()));
    Eigen::Index i = 0;
    for (double v : values) out(i++) = v;
    return out;
}

}  // namespace

TEST_CASE("adjacent supra-threshold points form one cluster") {
    const auto clusters = form_clusters(vec({1, 2, 6, 7, 2, 1}), 5.0, false);
    REQUIRE(clusters.size() == 1);
    REQUIRE(clusters[0].start == 2);
    REQUIRE(clusters[0].end == 3);
    REQUIRE(clusters[0].stats == vec({6, 7}));
    REQUIRE_FALSE(clusters[0].touches_boundary.first);
    REQUIRE_FALSE(clusters[0].touches_boundary.second);
}

TEST_CASE("no exceedance gives no clusters") {
    REQUIRE(form_clusters(vec({1, 2, 3, 4}), 5.0, false).empty());
    // exactly at the threshold is not above it
    REQUIRE(form_clusters(vec({5, 5, 5}), 5.0, false).empty());
}

TEST_CASE("exclude_first drops the run containing time point 0") {
    const auto clusters = form_clusters(vec({6, 6, 2, 6}), 5.0, true);
    REQUIRE(clusters.size() == 1);
    REQUIRE(clusters[0].start == 3);
    REQUIRE(clusters[0].end == 3);
    REQUIRE(clusters[0].touches_boundary.second);
}

TEST_CASE("+infinity sentinels count as above any threshold") {
    VectorXd v = vec({0, 1, 0});
    v[1] = std::numeric_limits<double>::infinity();
    const auto clusters = form_clusters(v, 1e300, false);
    REQUIRE(clusters.size() == 1);
    REQUIRE(clusters[0].start == 1);
}

TEST_CASE("cluster mass aggregates by sum or sum of squares") {
    Cluster c;
    c.start = 0;
    c.end = 2;
    c.stats = vec({6, 7, 6});
    REQUIRE(cluster_mass(c, MassAggregation::Sum) == 19.0);
    REQUIRE(cluster_mass(c, MassAggregation::SumOfSquares) == 121.0);
    Cluster single;
    single.start = single.end = 4;
    single.stats = vec({8.5});
    REQUIRE(cluster_mass(single, MassAggregation::Sum) == 8.5);
    REQUIRE(cluster_mass(single, MassAggregation::SumOfSquares) == 72.25);
}

TEST_CASE("clusters partition the exceedance set") {
    const VectorXd signal = oracle::random_matrix(1, 200, 77).row(0) * 3.0;
    const double tau = 1.5;
    const auto clusters = form_clusters(signal, tau, false);
    std::vector<bool> covered(200, false);
    int prev_end = -2;
    for (const auto& c : clusters) {
        REQUIRE(c.start > prev_end + 1);  // disjoint and sorted with a gap
        prev_end = c.end;
        for (int s = c.start; s <= c.end; ++s) {
            REQUIRE(signal[s] > tau);
            covered[static_cast<size_t>(s)] = true;
        }
        if (c.start > 0) REQUIRE(signal[c.start - 1] <= tau);
        if (c.end < 199) REQUIRE(signal[c.end + 1] <= tau);
    }
    for (int s = 0; s < 200; ++s)
        if (signal[s] > tau) REQUIRE(covered[static_cast<size_t>(s)]);
}

TEST_CASE("time reversal swaps boundary roles") {
    for (unsigned seed = 1; seed <= 10; ++seed) {
        const VectorXd signal = oracle::random_matrix(1, 40, seed).row(0) * 2.0;
        const double tau = 1.0;
        const VectorXd reversed = signal.reverse();
        const auto fwd = form_clusters(signal, tau, false);
        const auto rev = form_clusters(reversed, tau, true);
        // forward clusters not touching the END appear reversed in rev
        std::vector<Cluster> expected;
        for (const auto& c : fwd)
            if (!c.touches_boundary.second) expected.push_back(c);
        REQUIRE(rev.size() == expected.size());
        for (size_t k = 0; k < rev.size(); ++k) {
            const auto& e = expected[expected.size() - 1 - k];
            REQUIRE(rev[k].start == 40 - 1 - e.end);
            REQUIRE(rev[k].end == 40 - 1 - e.start);
            REQUIRE(rev[k].stats == VectorXd(e.stats.reverse()));
        }
    }
}

TEST_CASE("tfce of a zero signal is zero") {
    REQUIRE(tfce_transform(VectorXd::Zero(5), 0.5, 1.0, 0.1) == VectorXd::Zero(5));
}

TEST_CASE("tfce hand integration on a single spike") {
    const VectorXd scores = tfce_transform(vec({0, 4, 0}), 0.5, 1.0, 1.0);
    REQUIRE(scores[0] == 0.0);
    REQUIRE(scores[2] == 0.0);
    // extent 1 at heights 1..4: 1+2+3+4
    REQUIRE(scores[1] == Catch::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("tfce is monotone in every single statistic") {
    for (unsigned seed = 2; seed <= 6; ++seed) {
        VectorXd signal = oracle::random_matrix(1, 30, seed).row(0).array().abs() * 3.0;
        const VectorXd base = tfce_transform(signal, 0.5, 1.0, 0.05);
        VectorXd raised = signal;
        raised[seed % 30] += 1.0;
        const VectorXd after = tfce_transform(raised, 0.5, 1.0, 0.05);
        for (int s = 0; s < 30; ++s) REQUIRE(after[s] >= base[s] - 1e-12);
    }
}

TEST_CASE("tfce matches the per-point expansion oracle") {
    const VectorXd signal = oracle::random_matrix(1, 25, 9).row(0).array().abs() * 4.0;
    const VectorXd lib = tfce_transform(signal, 0.5, 1.0, 0.1);
    const VectorXd ref = oracle::tfce_scores(signal, 0.5, 1.0, 0.1);
    for (int s = 0; s < 25; ++s) REQUIRE(lib[s] == Catch::Approx(ref[s]).epsilon(1e-12));
}

TEST_CASE("depth null: a row without clusters is all zeros") {
    PermutedStatMatrix stats;
    stats.stats.resize(2, 6);
    stats.stats.row(0) = vec({0, 8, 6, 7, 0, 0});  // cluster of length 3
    stats.stats.row(1) = vec({1, 1, 1, 1, 1, 1});  // nothing above tau
    const DepthNullDistribution dn = depth_null(stats, 5.0, DepthDirection::Head);
    REQUIRE(dn.j_d() == 3);
    REQUIRE(VectorXd(dn.matrix.row(1)) == VectorXd::Zero(3));
    REQUIRE(VectorXd(dn.matrix.row(0)) == vec({8, 6, 7}));
}

TEST_CASE("depth null aligns multiple clusters by element-wise maximum") {
    PermutedStatMatrix stats;
    stats.stats.resize(2, 9);
    stats.stats.row(0) = vec({0, 8, 6, 0, 5.5, 9, 7, 0, 0});
    stats.stats.row(1) = vec({0, 6, 6, 6, 6, 6, 0, 0, 0});  // length 5 sets j_d
    const DepthNullDistribution dn = depth_null(stats, 5.0, DepthDirection::Head);
    REQUIRE(dn.j_d() == 5);
    REQUIRE(VectorXd(dn.matrix.row(0)) == vec({8, 9, 7, 0, 0}));
    REQUIRE(VectorXd(dn.matrix.row(1)) == vec({6, 6, 6, 6, 6}));
}

TEST_CASE("depth null drops clusters starting at time point 0") {
    PermutedStatMatrix stats;
    stats.stats.resize(2, 5);
    stats.stats.row(0) = vec({9, 9, 0, 7, 0});  // leading run excluded, (3,3) kept
    stats.stats.row(1) = vec({0, 0, 0, 0, 0});
    const DepthNullDistribution dn = depth_null(stats, 5.0, DepthDirection::Head);
    REQUIRE(dn.j_d() == 1);
    REQUIRE(dn.matrix(0, 0) == 7.0);
}

TEST_CASE("tail depth null equals head depth null of reversed time") {
    PermutedStatMatrix stats;
    stats.stats = oracle::random_matrix(40, 25, 15).array().abs() * 3.0;
    const DepthNullDistribution tail = depth_null(stats, 1.5, DepthDirection::Tail);
    PermutedStatMatrix reversed;
    reversed.stats = stats.stats.rowwise().reverse();
    const DepthNullDistribution head = depth_null(reversed, 1.5, DepthDirection::Head);
    REQUIRE(tail.matrix == head.matrix);
}

TEST_CASE("depth null matches the naive per-depth oracle") {
    PermutedStatMatrix stats;
    stats.stats = oracle::random_matrix(30, 20, 23).array().abs() * 3.0;
    const DepthNullDistribution dn = depth_null(stats, 1.2, DepthDirection::Head);
    int jd = 0;
    const MatrixXd ref = oracle::depth_null_head(stats.stats, 1.2, jd);
    REQUIRE(dn.j_d() == jd);
    REQUIRE(dn.matrix == ref);
}

TEST_CASE("depth null parallel evaluation is worker-count invariant") {
    PermutedStatMatrix stats;
    stats.stats = oracle::random_matrix(64, 30, 27).array().abs() * 3.0;
    const DepthNullDistribution one = depth_null(stats, 1.0, DepthDirection::Head, 1);
    const DepthNullDistribution four = depth_null(stats, 1.0, DepthDirection::Head, 4);
    REQUIRE(one.matrix == four.matrix);
}
