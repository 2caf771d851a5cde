// Per-time-point general linear model fitting. The engine validates the
// design once and then evaluates the F (or t) statistic column by column.
// Each time point is computed independently from the shared design, so the
// statistic of column s never depends on neighboring columns.

#pragma once

#include "clusterdepth/types.hpp"

#include <boost/math/distributions/fisher_f.hpp>

#include <cmath>
#include <limits>
#include <string>

namespace clusterdepth {

// Preallocated temporaries for the per-column fit; one per worker thread.
struct GlmWorkspace {
    VectorXd y;
    VectorXd t_full;
    VectorXd t_red;
    VectorXd resid;

    void init(Eigen::Index n, Eigen::Index rank_full, Eigen::Index rank_red) {
        y.resize(n);
        t_full.resize(rank_full);
        t_red.resize(rank_red);
        resid.resize(n);
    }
};

// F statistic via residual sums of squares of the full model X and the
// reduced model X*N, N a basis of the null space of G. Both column spaces
// are held as orthonormal bases, so per column the cost is a handful of
// skinny matrix-vector products.
class GlmEngine {
public:
    GlmEngine(const DesignSpec& design, Eigen::Index n_obs) {
        const auto n = design.X.rows();
        const auto q = design.X.cols();
        if (n != n_obs)
            throw design_error("design has " + std::to_string(n) + " rows but data has " +
                               std::to_string(n_obs) + " observations");
        if (q < 1) throw design_error("design matrix has no columns");
        if (design.G.cols() != q)
            throw design_error("contrast matrix has " + std::to_string(design.G.cols()) +
                               " columns, expected " + std::to_string(q));
        if (design.G.rows() < 1) throw design_error("contrast matrix has no rows");
        if (design.group_labels && static_cast<Eigen::Index>(design.group_labels->size()) != n)
            throw design_error("group labels do not partition the observation rows");

        Eigen::FullPivLU<MatrixXd> g_lu(design.G);
        if (g_lu.rank() != design.G.rows())
            throw design_error("contrast matrix does not have full row rank");

        Eigen::ColPivHouseholderQR<MatrixXd> qr_full(design.X);
        rank_full_ = qr_full.rank();
        if (n - rank_full_ < 1)
            throw design_error("non-positive residual degrees of freedom");
        u_full_ = qr_full.householderQ() * MatrixXd::Identity(n, rank_full_);

        MatrixXd reduced;
        if (g_lu.dimensionOfKernel() > 0) {
            reduced = design.X * g_lu.kernel();
        } else {
            reduced.resize(n, 0);
        }
        if (reduced.cols() > 0) {
            Eigen::ColPivHouseholderQR<MatrixXd> qr_red(reduced);
            rank_red_ = qr_red.rank();
            u_red_ = qr_red.householderQ() * MatrixXd::Identity(n, rank_red_);
        } else {
            rank_red_ = 0;
            u_red_.resize(n, 0);
        }

        numerator_df_ = static_cast<double>(rank_full_ - rank_red_);
        denominator_df_ = static_cast<double>(n - rank_full_);
        if (numerator_df_ < static_cast<double>(design.G.rows()))
            throw design_error("design is singular beyond the contrast-implied rank; "
                               "the contrast is not fully testable");

        // Row weights for the t sign: G * pinv(X), usable when rank(G) == 1.
        if (design.G.rows() == 1) {
            MatrixXd pinv = qr_full.solve(MatrixXd::Identity(n, n));
            contrast_weights_ = (design.G * pinv).row(0);
            has_t_ = true;
        }
        n_ = n;
    }

    Eigen::Index n() const { return n_; }
    Eigen::Index rank_full() const { return rank_full_; }
    Eigen::Index rank_red() const { return rank_red_; }
    double numerator_df() const { return numerator_df_; }
    double denominator_df() const { return denominator_df_; }
    bool supports_t() const { return has_t_; }

    GlmWorkspace make_workspace() const {
        GlmWorkspace ws;
        ws.init(n_, rank_full_, rank_red_);
        return ws;
    }

    // F for the column currently loaded in ws.y. Sets degenerate when the
    // residual variance vanishes; the value is then 0 (no numerator signal)
    // or +infinity (numerator signal with zero noise).
    double fit_loaded(GlmWorkspace& ws, bool& degenerate) const {
        ws.t_full.noalias() = u_full_.transpose() * ws.y;
        ws.resid = ws.y;
        ws.resid.noalias() -= u_full_ * ws.t_full;
        const double ssr_full = ws.resid.squaredNorm();

        double ssr_red;
        if (rank_red_ > 0) {
            ws.t_red.noalias() = u_red_.transpose() * ws.y;
            ws.resid = ws.y;
            ws.resid.noalias() -= u_red_ * ws.t_red;
            ssr_red = ws.resid.squaredNorm();
        } else {
            ssr_red = ws.y.squaredNorm();
        }
        double hyp_ss = ssr_red - ssr_full;
        if (hyp_ss < 0.0) hyp_ss = 0.0;

        const double scale = ws.y.squaredNorm();
        const double tol = scale * kDegenerateRelTol;
        if (ssr_full <= tol) {
            degenerate = true;
            if (hyp_ss <= tol) return 0.0;
            return std::numeric_limits<double>::infinity();
        }
        degenerate = false;
        return (hyp_ss / numerator_df_) / (ssr_full / denominator_df_);
    }

    double fit_column(const Eigen::Ref<const VectorXd>& y, GlmWorkspace& ws,
                      bool& degenerate) const {
        ws.y = y;
        return fit_loaded(ws, degenerate);
    }

    // Signed contrast value for the t sign (valid when supports_t()).
    double contrast_value(const Eigen::Ref<const VectorXd>& y) const {
        return contrast_weights_.dot(y);
    }

    StatSignal fit(const MatrixXd& data, StatisticKind kind = StatisticKind::F) const {
        if (data.rows() != n_)
            throw design_error("data has " + std::to_string(data.rows()) +
                               " rows, design expects " + std::to_string(n_));
        if (kind == StatisticKind::T && (!has_t_ || numerator_df_ != 1.0))
            throw design_error("t statistic requires a rank-1 contrast");
        StatSignal out;
        const auto m = data.cols();
        out.values.resize(m);
        out.degenerate.assign(static_cast<size_t>(m), 0);
        out.kind = kind;
        out.df = {numerator_df_, denominator_df_};
        GlmWorkspace ws = make_workspace();
        for (Eigen::Index s = 0; s < m; ++s) {
            bool degen = false;
            double f = fit_column(data.col(s), ws, degen);
            if (kind == StatisticKind::T) {
                const double sign = contrast_value(data.col(s)) < 0.0 ? -1.0 : 1.0;
                f = sign * std::sqrt(f);
            }
            out.values[s] = f;
            if (degen) out.degenerate[static_cast<size_t>(s)] = 1;
        }
        return out;
    }

private:
    static constexpr double kDegenerateRelTol = 1e-12;

    Eigen::Index n_ = 0;
    Eigen::Index rank_full_ = 0;
    Eigen::Index rank_red_ = 0;
    double numerator_df_ = 0.0;
    double denominator_df_ = 0.0;
    MatrixXd u_full_;
    MatrixXd u_red_;
    Eigen::RowVectorXd contrast_weights_;
    bool has_t_ = false;
};

// One StatSignal per channel.
inline std::vector<StatSignal> fit_statistic(const SignalMatrix& signals,
                                             const DesignSpec& design,
                                             StatisticKind kind = StatisticKind::F) {
    validate(signals);
    GlmEngine engine(design, signals.n_observations());
    std::vector<StatSignal> out;
    out.reserve(signals.channels.size());
    for (const auto& ch : signals.channels) out.push_back(engine.fit(ch, kind));
    return out;
}

// Quantile of the parametric F distribution at the design's degrees of
// freedom; the usual cluster-forming threshold is the 0.95 quantile.
inline double parametric_threshold(const DesignSpec& design, double quantile) {
    GlmEngine engine(design, design.X.rows());
    if (quantile <= 0.0 || quantile > 1.0)
        throw input_error("quantile must lie in (0, 1]");
    if (quantile == 1.0) return std::numeric_limits<double>::infinity();
    boost::math::fisher_f_distribution<double> dist(engine.numerator_df(),
                                                    engine.denominator_df());
    return boost::math::quantile(dist, quantile);
}

}  // namespace clusterdepth
