// Permutation plan generation and application. Plans are generated
// sequentially from the seed (row 0 = identity) and may then be evaluated
// in any order: workers write disjoint rows, so results are identical for
// every worker count.

#pragma once

#include "clusterdepth/glm.hpp"
#include "clusterdepth/parallel.hpp"
#include "clusterdepth/types.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>

namespace clusterdepth {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Independent stream seed for (master, index, salt); used to make
// per-replication streams worker-count invariant.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index,
                                 std::uint64_t salt = 0) {
    std::uint64_t state = master ^ (0xA0761D6478BD642FULL * (index + 1)) ^
                          (0xE7037ED1A0B428DBULL * (salt + 1));
    return splitmix64(state);
}

// Unbiased draw from [0, bound) by rejection; avoids the
// implementation-defined behavior of std::uniform_int_distribution.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
    const std::uint64_t threshold = (0ULL - bound) % bound;
    for (;;) {
        const std::uint64_t r = rng();
        if (r >= threshold) return r % bound;
    }
}

// n_p rows sampled uniformly with replacement over the permutation group,
// except row 0 which is always the identity.
inline PermutationPlan build_plan(int n, int n_p, std::uint64_t seed, PermScheme scheme) {
    if (n < 2) throw input_error("permutation plan needs n >= 2");
    if (n_p < 2) throw input_error("permutation plan needs n_p >= 2");
    PermutationPlan plan;
    plan.scheme = scheme;
    plan.n = n;
    plan.n_p = n_p;
    plan.seed = seed;
    plan.exhaustive = false;
    plan.indices.resize(static_cast<size_t>(n_p) * static_cast<size_t>(n));
    for (int k = 0; k < n; ++k) plan.indices[static_cast<size_t>(k)] = k;
    std::mt19937_64 rng(seed);
    for (int i = 1; i < n_p; ++i) {
        std::int32_t* row = plan.indices.data() + static_cast<size_t>(i) * static_cast<size_t>(n);
        for (int k = 0; k < n; ++k) row[k] = k;
        for (int k = n - 1; k > 0; --k) {
            const auto j = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(k) + 1));
            std::swap(row[k], row[j]);
        }
    }
    return plan;
}

inline constexpr std::uint64_t kDefaultExhaustiveCap = 362880;  // 9!

// All n! permutations in lexicographic order (row 0 = identity).
inline PermutationPlan build_exhaustive_plan(int n, PermScheme scheme,
                                             std::uint64_t cap = kDefaultExhaustiveCap) {
    if (n < 2) throw input_error("permutation plan needs n >= 2");
    std::uint64_t count = 1;
    for (int k = 2; k <= n; ++k) {
        count *= static_cast<std::uint64_t>(k);
        if (count > cap)
            throw capacity_error("exhaustive enumeration of " + std::to_string(n) +
                                 "! permutations exceeds the cap of " + std::to_string(cap));
    }
    PermutationPlan plan;
    plan.scheme = scheme;
    plan.n = n;
    plan.n_p = static_cast<int>(count);
    plan.seed = 0;
    plan.exhaustive = true;
    plan.indices.resize(static_cast<size_t>(count) * static_cast<size_t>(n));
    std::vector<std::int32_t> perm(static_cast<size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    for (std::uint64_t i = 0; i < count; ++i) {
        std::copy(perm.begin(), perm.end(),
                  plan.indices.begin() + static_cast<size_t>(i) * static_cast<size_t>(n));
        std::next_permutation(perm.begin(), perm.end());
    }
    return plan;
}

namespace detail {

// Statistic signal for every plan row of a single channel. `source` is the
// matrix whose rows get permuted for rows >= 1; `observed` fills row 0.
inline void permuted_stats_into(const MatrixXd& observed_data, const MatrixXd& source,
                                const GlmEngine& engine, const PermutationPlan& plan,
                                int threads, MatrixXd& out) {
    const auto m = observed_data.cols();
    const auto n = observed_data.rows();
    out.resize(plan.n_p, m);
    parallel_for(plan.n_p, threads, [&](long lo, long hi) {
        GlmWorkspace ws = engine.make_workspace();
        bool degen = false;
        for (long i = lo; i < hi; ++i) {
            if (i == 0) {
                for (Eigen::Index s = 0; s < m; ++s)
                    out(0, s) = engine.fit_column(observed_data.col(s), ws, degen);
                continue;
            }
            const auto idx = plan.row(static_cast<int>(i));
            for (Eigen::Index s = 0; s < m; ++s) {
                const double* col = source.col(s).data();
                for (Eigen::Index k = 0; k < n; ++k)
                    ws.y[k] = col[idx[static_cast<size_t>(k)]];
                out(i, s) = engine.fit_loaded(ws, degen);
            }
        }
    });
}

}  // namespace detail

// Statistics for every plan row of one channel.
//  Manly:    raw response rows are permuted and refit.
//  TerBraak: full-model residuals are computed once, their rows permuted and
//            refit; row 0 still carries the observed (uncentered) statistic,
//            so p-values compare the observed value to a full-null reference.
inline PermutedStatMatrix permuted_statistics(const MatrixXd& data, const DesignSpec& design,
                                              const PermutationPlan& plan, int threads = 1) {
    GlmEngine engine(design, data.rows());
    if (plan.n != static_cast<int>(data.rows()))
        throw input_error("plan permutes " + std::to_string(plan.n) +
                          " rows but data has " + std::to_string(data.rows()));
    PermutedStatMatrix out;
    out.scheme = plan.scheme;
    if (plan.scheme == PermScheme::Manly) {
        detail::permuted_stats_into(data, data, engine, plan, threads, out.stats);
    } else {
        MatrixXd resid = data;
        // residuals of the full model: removes fitted group structure
        Eigen::ColPivHouseholderQR<MatrixXd> qr(design.X);
        MatrixXd u = qr.householderQ() * MatrixXd::Identity(data.rows(), qr.rank());
        resid.noalias() -= u * (u.transpose() * data);
        detail::permuted_stats_into(data, resid, engine, plan, threads, out.stats);
    }
    return out;
}

// Per-channel variant sharing one plan across channels.
inline std::vector<PermutedStatMatrix> permuted_statistics(const SignalMatrix& signals,
                                                           const DesignSpec& design,
                                                           const PermutationPlan& plan,
                                                           int threads = 1) {
    validate(signals);
    std::vector<PermutedStatMatrix> out;
    out.reserve(signals.channels.size());
    for (const auto& ch : signals.channels)
        out.push_back(permuted_statistics(ch, design, plan, threads));
    return out;
}

}  // namespace clusterdepth
