// Monte-Carlo laboratory: correlated noise generation, effect injection with
// ground-truth bookkeeping, and FWER/power estimation across procedures.
// Replications derive independent RNG streams from (seed, replication), so
// aggregate results do not depend on the worker count.

#pragma once

#include "clusterdepth/inference.hpp"
#include "clusterdepth/parallel.hpp"
#include "clusterdepth/permutation.hpp"
#include "clusterdepth/types.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace clusterdepth {

enum class NoiseKind { Independent, GaussianACF, ExponentialACF };
enum class EffectShape { Square, Triangular };
enum class RegionLayout { None, One, Two, TwoNearby };

inline std::string to_string(NoiseKind k) {
    switch (k) {
        case NoiseKind::Independent: return "independent";
        case NoiseKind::GaussianACF: return "gaussian";
        case NoiseKind::ExponentialACF: return "exponential";
    }
    return "unknown";
}

inline std::string to_string(EffectShape s) {
    return s == EffectShape::Square ? "square" : "triangular";
}

inline std::string to_string(RegionLayout r) {
    switch (r) {
        case RegionLayout::None: return "none";
        case RegionLayout::One: return "one";
        case RegionLayout::Two: return "two";
        case RegionLayout::TwoNearby: return "two_nearby";
    }
    return "unknown";
}

// Stationary autocovariance of the per-observation noise; unit variance at
// every time point. range is the correlation length in time points.
struct NoiseSpec {
    NoiseKind kind = NoiseKind::Independent;
    double range = 10.0;
    int m = 0;
};

inline MatrixXd covariance_matrix(const NoiseSpec& spec) {
    if (spec.m < 2) throw input_error("noise covariance needs m >= 2");
    if (spec.kind != NoiseKind::Independent && !(spec.range > 0.0))
        throw input_error("autocovariance range must be positive");
    MatrixXd cov = MatrixXd::Identity(spec.m, spec.m);
    if (spec.kind == NoiseKind::Independent) return cov;
    for (int s = 0; s < spec.m; ++s)
        for (int t = 0; t < s; ++t) {
            const double d = static_cast<double>(s - t) / spec.range;
            const double rho =
                spec.kind == NoiseKind::GaussianACF ? std::exp(-d * d) : std::exp(-d);
            cov(s, t) = rho;
            cov(t, s) = rho;
        }
    return cov;
}

// Rows are i.i.d. draws from N(0, Sigma); Sigma is factored with a Cholesky
// decomposition. A numerically non-PD covariance is reported, never patched
// with jitter.
inline MatrixXd generate_noise(const NoiseSpec& spec, int n, std::uint64_t seed) {
    if (n < 2) throw input_error("noise generation needs n >= 2");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    MatrixXd z(n, spec.m);
    for (int i = 0; i < n; ++i)
        for (int s = 0; s < spec.m; ++s) z(i, s) = normal(rng);
    if (spec.kind == NoiseKind::Independent) return z;
    const MatrixXd cov = covariance_matrix(spec);
    Eigen::LLT<MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success)
        throw factorization_error("noise covariance is numerically not positive definite "
                                  "(kind=" + to_string(spec.kind) +
                                  ", range=" + std::to_string(spec.range) + ")");
    return z * MatrixXd(llt.matrixL()).transpose();
}

// Effect layout on the time axis. Region lengths round to the nearest
// integer; a split of an odd total puts the larger region first. The
// TwoNearby layout separates the two regions by exactly one null point.
struct EffectSpec {
    EffectShape shape = EffectShape::Square;
    RegionLayout regions = RegionLayout::None;
    double proportion = 0.0;
    double beta_max = 0.0;
};

struct EffectRegion {
    int start = 0;  // 0-based
    int length = 0;
};

inline std::vector<EffectRegion> effect_regions(const EffectSpec& effect, int m) {
    if (effect.regions == RegionLayout::None) return {};
    if (effect.proportion <= 0.0 || effect.proportion >= 1.0)
        throw input_error("effect proportion must lie in (0, 1)");
    const int total = static_cast<int>(std::lround(effect.proportion * m));
    if (total < 1) throw input_error("effect proportion rounds to zero time points");
    std::vector<EffectRegion> out;
    const auto centered_start = [](int center_1b, int len) { return center_1b - len / 2 - 1; };
    if (effect.regions == RegionLayout::One) {
        out.push_back({centered_start(m / 2, total), total});
    } else {
        const int len1 = (total + 1) / 2;
        const int len2 = total / 2;
        if (effect.regions == RegionLayout::Two) {
            const int c1 = static_cast<int>(std::lround(m / 3.0));
            const int c2 = static_cast<int>(std::lround(2.0 * m / 3.0));
            out.push_back({centered_start(c1, len1), len1});
            if (len2 > 0) out.push_back({centered_start(c2, len2), len2});
        } else {  // TwoNearby
            if (len2 < 1)
                throw input_error("two nearby regions need at least 2 true time points");
            const int block = len1 + 1 + len2;
            const int bs = centered_start(m / 2, block);
            out.push_back({bs, len1});
            out.push_back({bs + len1 + 1, len2});
        }
    }
    for (const auto& r : out)
        if (r.start < 0 || r.start + r.length > m)
            throw input_error("effect region [" + std::to_string(r.start + 1) + ", " +
                              std::to_string(r.start + r.length) +
                              "] does not fit in a signal of length " + std::to_string(m));
    return out;
}

inline std::vector<std::uint8_t> truth_mask(const EffectSpec& effect, int m) {
    std::vector<std::uint8_t> mask(static_cast<size_t>(m), 0);
    for (const auto& r : effect_regions(effect, m))
        for (int s = r.start; s < r.start + r.length; ++s) mask[static_cast<size_t>(s)] = 1;
    return mask;
}

// Per-time-point effect amplitude: beta_max on square regions, a linear
// ramp beta_max*(i+1)/len across triangular regions.
inline VectorXd effect_profile(const EffectSpec& effect, int m) {
    VectorXd beta = VectorXd::Zero(m);
    for (const auto& r : effect_regions(effect, m))
        for (int i = 0; i < r.length; ++i)
            beta[r.start + i] = effect.shape == EffectShape::Square
                                    ? effect.beta_max
                                    : effect.beta_max * static_cast<double>(i + 1) /
                                          static_cast<double>(r.length);
    return beta;
}

// Adds the effect profile to the rows of the second group.
inline MatrixXd inject_effect(const MatrixXd& noise, const DesignSpec& design,
                              const EffectSpec& effect) {
    if (!design.group_labels)
        throw input_error("effect injection requires group labels on the design");
    const auto& labels = *design.group_labels;
    if (static_cast<Eigen::Index>(labels.size()) != noise.rows())
        throw input_error("group labels do not match the number of observations");
    int max_label = labels.front();
    int min_label = labels.front();
    for (int l : labels) {
        max_label = std::max(max_label, l);
        min_label = std::min(min_label, l);
    }
    if (max_label == min_label) throw input_error("effect injection needs two groups");
    const VectorXd beta = effect_profile(effect, static_cast<int>(noise.cols()));
    MatrixXd out = noise;
    for (Eigen::Index i = 0; i < out.rows(); ++i)
        if (labels[static_cast<size_t>(i)] == max_label) out.row(i) += beta.transpose();
    return out;
}

// Approximate binomial interval: center (x+2)/(n+4), half-width
// 1.96*sqrt(p~(1-p~)/(n+4)), clipped to [0, 1].
struct BinomialInterval {
    double estimate = 0.0;
    double low = 0.0;
    double high = 0.0;
    double half_width = 0.0;
};

inline BinomialInterval agresti_coull(long successes, long n, double z = 1.96) {
    if (n <= 0) throw input_error("interval needs n > 0");
    const double nt = static_cast<double>(n) + 4.0;
    const double pt = (static_cast<double>(successes) + 2.0) / nt;
    const double half = z * std::sqrt(pt * (1.0 - pt) / nt);
    BinomialInterval out;
    out.estimate = static_cast<double>(successes) / static_cast<double>(n);
    out.low = std::max(0.0, pt - half);
    out.high = std::min(1.0, pt + half);
    out.half_width = half;
    return out;
}

// One procedure entry in a study. tau_quantile feeds the parametric
// threshold; tfce_dh = 0 selects tau/100.
struct ProcedureConfig {
    Procedure procedure = Procedure::ClusterDepthBoth;
    PermScheme scheme = PermScheme::TerBraak;
    double tau_quantile = 0.95;
    MassAggregation aggregation = MassAggregation::Sum;
    double tfce_extent_power = 0.5;
    double tfce_height_power = 1.0;
    double tfce_dh = 0.0;
    double tfce_h_start = 0.0;

    std::string label() const {
        return to_string(procedure) + ":" + to_string(scheme);
    }
};

struct StudySpec {
    int n1 = 10;
    int n2 = 10;
    NoiseSpec noise;
    EffectSpec effect;
    std::vector<ProcedureConfig> procedures;
    int replications = 1000;
    int n_p = 1000;
    std::uint64_t seed = 1;
    double alpha = 0.05;
    int threads = 1;
};

// Per-replication classification against the truth mask: v false positives,
// s true positives.
struct RepOutcome {
    int v = 0;
    int s = 0;
};

struct SimulationMetrics {
    double fwer = 0.0;
    double fwer_ci_low = 0.0;
    double fwer_ci_high = 0.0;
    double average_power = 0.0;
    double disjunctive_power = 0.0;
    int replications = 0;
    long fwer_exceed_count = 0;
    std::vector<RepOutcome> per_replication;
};

// Streams metrics out of per-replication outcomes; also used to recompute
// metrics from persisted decisions.
inline SimulationMetrics summarize_outcomes(const std::vector<RepOutcome>& outcomes, int m1) {
    SimulationMetrics metrics;
    metrics.replications = static_cast<int>(outcomes.size());
    metrics.per_replication = outcomes;
    long v_pos = 0, s_pos = 0;
    double power_sum = 0.0;
    for (const auto& rep : outcomes) {
        if (rep.v > 0) ++v_pos;
        if (rep.s > 0) ++s_pos;
        if (m1 > 0) power_sum += static_cast<double>(rep.s) / static_cast<double>(m1);
    }
    metrics.fwer_exceed_count = v_pos;
    const auto n = static_cast<long>(outcomes.size());
    const auto ci = agresti_coull(v_pos, n);
    metrics.fwer = ci.estimate;
    metrics.fwer_ci_low = ci.low;
    metrics.fwer_ci_high = ci.high;
    metrics.average_power = n > 0 ? power_sum / static_cast<double>(n) : 0.0;
    metrics.disjunctive_power =
        n > 0 ? static_cast<double>(s_pos) / static_cast<double>(n) : 0.0;
    return metrics;
}

// Runs the full study: per replication, generate noise, inject the effect,
// evaluate every procedure and classify each time point against the truth
// mask. Statistic matrices are shared across procedures with the same
// permutation scheme. Replication r draws its streams from
// derive_seed(seed, r, ...), so results are reproducible and independent of
// the worker count. Per-replication failures would poison every downstream
// count, so they propagate as exceptions instead of being skipped.
inline std::vector<SimulationMetrics> run_study(const StudySpec& spec) {
    if (spec.procedures.empty()) throw input_error("study needs at least one procedure");
    if (spec.replications < 1) throw input_error("study needs at least one replication");
    const int n = spec.n1 + spec.n2;
    const int m = spec.noise.m;
    const DesignSpec design = two_group_design(spec.n1, spec.n2);
    const auto mask = truth_mask(spec.effect, m);
    int m1 = 0;
    for (auto b : mask) m1 += b;

    // thresholds depend only on the design; resolve once
    std::vector<double> taus(spec.procedures.size());
    std::vector<double> dhs(spec.procedures.size(), 0.0);
    for (size_t k = 0; k < spec.procedures.size(); ++k) {
        const auto& pc = spec.procedures[k];
        taus[k] = parametric_threshold(design, pc.tau_quantile);
        if (pc.procedure == Procedure::TFCE)
            dhs[k] = pc.tfce_dh > 0.0 ? pc.tfce_dh : taus[k] / 100.0;
    }
    bool need_manly = false, need_terbraak = false;
    for (const auto& pc : spec.procedures)
        (pc.scheme == PermScheme::Manly ? need_manly : need_terbraak) = true;

    std::vector<std::vector<RepOutcome>> outcomes(
        spec.procedures.size(), std::vector<RepOutcome>(static_cast<size_t>(spec.replications)));

    parallel_for(spec.replications, spec.threads, [&](long lo, long hi) {
        for (long r = lo; r < hi; ++r) {
            const MatrixXd noise =
                generate_noise(spec.noise, n, derive_seed(spec.seed, static_cast<std::uint64_t>(r), 0));
            const MatrixXd data = spec.effect.regions == RegionLayout::None && spec.effect.beta_max == 0.0
                                      ? noise
                                      : inject_effect(noise, design, spec.effect);
            PermutationPlan plan = build_plan(
                n, spec.n_p, derive_seed(spec.seed, static_cast<std::uint64_t>(r), 1),
                PermScheme::Manly);
            PermutedStatMatrix stats_manly, stats_terbraak;
            if (need_manly) stats_manly = permuted_statistics(data, design, plan, 1);
            if (need_terbraak) {
                plan.scheme = PermScheme::TerBraak;
                stats_terbraak = permuted_statistics(data, design, plan, 1);
            }
            for (size_t k = 0; k < spec.procedures.size(); ++k) {
                const auto& pc = spec.procedures[k];
                const PermutedStatMatrix& stats =
                    pc.scheme == PermScheme::Manly ? stats_manly : stats_terbraak;
                AdjustedPValueMap map;
                switch (pc.procedure) {
                    case Procedure::ClusterDepthBoth:
                    case Procedure::ClusterDepthHead:
                        map = cluster_depth_from_stats(stats, taus[k], spec.alpha, pc.procedure)
                                  .map;
                        break;
                    case Procedure::ClusterMass:
                        map = cluster_mass_from_stats(stats, taus[k], pc.aggregation, spec.alpha)
                                  .map;
                        break;
                    case Procedure::TFCE:
                        map = tfce_from_stats(stats, pc.tfce_extent_power, pc.tfce_height_power,
                                              dhs[k], spec.alpha, pc.tfce_h_start);
                        break;
                    case Procedure::MinP:
                        map = minp_from_stats(stats, spec.alpha);
                        break;
                    case Procedure::MaxT:
                        map = maxt_from_stats(stats, spec.alpha);
                        break;
                    case Procedure::Troendle:
                        map = troendle_from_stats(stats, spec.alpha);
                        break;
                }
                RepOutcome rep;
                for (int s = 0; s < m; ++s) {
                    if (!map.significant[static_cast<size_t>(s)]) continue;
                    if (mask[static_cast<size_t>(s)])
                        ++rep.s;
                    else
                        ++rep.v;
                }
                outcomes[k][static_cast<size_t>(r)] = rep;
            }
        }
    });

    std::vector<SimulationMetrics> out;
    out.reserve(spec.procedures.size());
    for (auto& per_proc : outcomes) out.push_back(summarize_outcomes(per_proc, m1));
    return out;
}

}  // namespace clusterdepth
