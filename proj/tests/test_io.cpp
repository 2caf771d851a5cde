#include "clusterdepth/io.hpp"

#include "oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

using namespace clusterdepth;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("cdio_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

void write_matrix_csv(const std::string& path, const MatrixXd& m, char delim = ',') {
    std::ofstream out(path);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) out << delim;
            out << io_detail::format_double(m(i, j));
        }
        out << '\n';
    }
}

std::string two_group_design_csv(int n1, int n2) {
    std::string content = "group\n";
    for (int i = 0; i < n1; ++i) content += "A\n";
    for (int i = 0; i < n2; ++i) content += "B\n";
    return content;
}

}  // namespace

TEST_CASE("matrices round-trip through delimited text bit-exactly") {
    TempDir tmp;
    const MatrixXd m = oracle::random_matrix(7, 9, 5);
    write_matrix_csv(tmp.file("m.csv"), m);
    REQUIRE(read_delimited_matrix(tmp.file("m.csv")) == m);
    // tab-delimited, auto-detected
    write_matrix_csv(tmp.file("m.tsv"), m, '\t');
    REQUIRE(read_delimited_matrix(tmp.file("m.tsv")) == m);
}

TEST_CASE("ragged and non-numeric rows raise errors naming the position") {
    TempDir tmp;
    write_file(tmp.file("ragged.csv"), "1,2,3\n4,5\n");
    REQUIRE_THROWS_WITH(read_delimited_matrix(tmp.file("ragged.csv")),
                        Catch::Matchers::ContainsSubstring("row 2"));
    write_file(tmp.file("alpha.csv"), "1,2\n3,oops\n");
    REQUIRE_THROWS_WITH(read_delimited_matrix(tmp.file("alpha.csv")),
                        Catch::Matchers::ContainsSubstring("row 2, column 2"));
    REQUIRE_THROWS_AS(read_delimited_matrix(tmp.file("missing.csv")), io_error);
}

TEST_CASE("a 20x400 data file with a 2-level group column ingests to the standard design") {
    TempDir tmp;
    write_matrix_csv(tmp.file("data.csv"), oracle::random_matrix(20, 400, 9));
    write_file(tmp.file("design.csv"), two_group_design_csv(10, 10));
    const SignalMatrix signals = ingest_data(tmp.file("data.csv"));
    REQUIRE(signals.n_observations() == 20);
    REQUIRE(signals.n_timepoints() == 400);
    REQUIRE(signals.channel_count() == 1);
    const DesignSpec design = ingest_design(tmp.file("design.csv"));
    REQUIRE(design.X.rows() == 20);
    REQUIRE(design.X.cols() == 2);
    REQUIRE(design.G.rows() == 1);
    REQUIRE(design.G(0, 0) == 0.0);
    REQUIRE(design.G(0, 1) == 1.0);
    REQUIRE(design.group_labels.has_value());
    REQUIRE((*design.group_labels)[0] == 0);
    REQUIRE((*design.group_labels)[19] == 1);
}

TEST_CASE("a channel manifest splits a wide file into 64 blocks of 614 columns") {
    TempDir tmp;
    std::string manifest;
    for (int c = 0; c < 64; ++c) manifest += "ch" + std::to_string(c + 1) + ",614\n";
    write_file(tmp.file("manifest.csv"), manifest);
    MatrixXd wide = MatrixXd::Zero(2, 64 * 614);
    wide(0, 0) = 1.0;
    wide(1, 64 * 614 - 1) = 2.0;
    write_matrix_csv(tmp.file("wide.csv"), wide);
    const SignalMatrix signals = ingest_data(tmp.file("wide.csv"), tmp.file("manifest.csv"));
    REQUIRE(signals.channel_count() == 64);
    REQUIRE(signals.n_timepoints() == 614);
    REQUIRE(signals.channel(0)(0, 0) == 1.0);
    REQUIRE(signals.channel(63)(1, 613) == 2.0);

    write_file(tmp.file("bad_manifest.csv"), "a,10\nb,12\n");
    REQUIRE_THROWS_AS(ingest_data(tmp.file("wide.csv"), tmp.file("bad_manifest.csv")), io_error);
}

TEST_CASE("design ingestion covers numeric columns, explicit contrasts and rank checks") {
    TempDir tmp;
    // numeric covariate next to the group factor
    std::string content = "group,age\n";
    for (int i = 0; i < 6; ++i)
        content += std::string(i < 3 ? "A" : "B") + "," + std::to_string(20 + i) + "\n";
    write_file(tmp.file("design.csv"), content);
    const DesignSpec d = ingest_design(tmp.file("design.csv"), "group");
    REQUIRE(d.X.cols() == 3);  // intercept, group dummy, age
    REQUIRE(d.G.rows() == 1);
    REQUIRE(d.G(0, 1) == 1.0);

    const DesignSpec d_age = ingest_design(tmp.file("design.csv"), "age");
    REQUIRE(d_age.G(0, 2) == 1.0);
    REQUIRE_FALSE(d_age.group_labels.has_value());

    write_file(tmp.file("g.csv"), "0,1,0\n");
    const DesignSpec d_g =
        ingest_design(tmp.file("design.csv"), "", tmp.file("g.csv"));
    REQUIRE(d_g.G.rows() == 1);

    REQUIRE_THROWS_AS(ingest_design(tmp.file("design.csv"), "missing"), io_error);

    // duplicated factor makes X rank deficient
    std::string dup = "g1,g2\n";
    for (int i = 0; i < 6; ++i) dup += std::string(i < 3 ? "A,A" : "B,B") + "\n";
    write_file(tmp.file("dup.csv"), dup);
    REQUIRE_THROWS_AS(ingest_design(tmp.file("dup.csv")), design_error);
}

TEST_CASE("results tables round-trip the p vector bit-exactly") {
    TempDir tmp;
    const MatrixXd data = oracle::random_matrix(10, 25, 33).array() * 1.3;
    const DesignSpec design = two_group_design(5, 5);
    const PermutationPlan plan = build_plan(10, 80, 3, PermScheme::TerBraak);
    const double tau = parametric_threshold(design, 0.90);
    const PermutedStatMatrix stats = permuted_statistics(data, design, plan);

    ProcedureRunOutput run;
    run.procedure = Procedure::ClusterDepthBoth;
    run.scheme = PermScheme::TerBraak;
    run.observed = {GlmEngine(design, 10).fit(data)};
    ClusterDepthResult res = cluster_depth_from_stats(stats, tau, 0.05);
    run.maps = {res.map};
    run.depth_clusters = res.clusters;
    run.jd_head = res.jd_head;
    run.jd_tail = res.jd_tail;
    run.tau = tau;

    RunConfig cfg;
    cfg.permutations = 80;
    emit_results({run}, cfg, tmp.file("out"));

    const auto rows = read_results_table(tmp.file("out_results.csv"));
    REQUIRE(rows.size() == 25);
    for (const auto& row : rows) {
        REQUIRE(row.channel == 1);
        REQUIRE(row.p_adjusted == res.map.p[row.time_index - 1]);
        REQUIRE(row.statistic == run.observed[0].values[row.time_index - 1]);
        REQUIRE(row.procedure == "cluster_depth_both");
    }

    // metadata carries the cluster table with both depth p-value columns
    std::ifstream meta(tmp.file("out_meta.json"));
    nlohmann::json j;
    meta >> j;
    REQUIRE(j["config"]["rng"] == kRngIdentifier);
    REQUIRE(j["config"]["permutations"] == 80);
    REQUIRE(j["procedures"][0]["j_d_head"] == res.jd_head);
    for (size_t k = 0; k < res.clusters.size(); ++k) {
        const auto& cj = j["procedures"][0]["clusters"][k];
        const int len = cj["end"].get<int>() - cj["start"].get<int>() + 1;
        const auto& rep = res.clusters[k];
        if (rep.head_p.size() > 0) REQUIRE(cj["head_p"].size() == static_cast<size_t>(len));
        if (rep.tail_p.size() > 0) REQUIRE(cj["tail_p"].size() == static_cast<size_t>(len));
    }
}

TEST_CASE("empty results still emit a complete all-ones table") {
    TempDir tmp;
    const MatrixXd data = MatrixXd::Constant(8, 12, 1.0);
    const DesignSpec design = two_group_design(4, 4);
    const PermutationPlan plan = build_plan(8, 40, 9, PermScheme::TerBraak);
    const double tau = parametric_threshold(design, 0.95);
    const PermutedStatMatrix stats = permuted_statistics(data, design, plan);

    ProcedureRunOutput run;
    run.procedure = Procedure::ClusterDepthBoth;
    run.observed = {GlmEngine(design, 8).fit(data)};
    ClusterDepthResult res = cluster_depth_from_stats(stats, tau, 0.05);
    run.maps = {res.map};
    run.depth_clusters = res.clusters;
    run.jd_head = res.jd_head;
    run.jd_tail = res.jd_tail;

    RunConfig cfg;
    emit_results({run}, cfg, tmp.file("empty"));
    const auto rows = read_results_table(tmp.file("empty_results.csv"));
    REQUIRE(rows.size() == 12);
    for (const auto& row : rows) {
        REQUIRE(row.p_adjusted == 1.0);
        REQUIRE_FALSE(row.significant);
    }
    std::ifstream meta(tmp.file("empty_meta.json"));
    nlohmann::json j;
    meta >> j;
    REQUIRE(j["procedures"][0]["clusters"].empty());
}

TEST_CASE("config files parse flat key=value lines with comments") {
    TempDir tmp;
    write_file(tmp.file("run.cfg"),
               "# comment\nalpha = 0.01\npermutations=250\nscheme = manly\n\n"
               "procedure = clusterdepth,maxt # trailing comment\n");
    const auto kv = load_config_file(tmp.file("run.cfg"));
    REQUIRE(kv.at("alpha") == "0.01");
    REQUIRE(kv.at("permutations") == "250");
    REQUIRE(kv.at("scheme") == "manly");
    REQUIRE(kv.at("procedure") == "clusterdepth,maxt");
    write_file(tmp.file("bad.cfg"), "no_equals_here\n");
    REQUIRE_THROWS_AS(load_config_file(tmp.file("bad.cfg")), io_error);
}

TEST_CASE("invalid run configurations are rejected before compute") {
    RunConfig cfg;
    cfg.alpha = 0.0;
    REQUIRE_THROWS_AS(validate_config(cfg), input_error);
    cfg = RunConfig{};
    cfg.permutations = 1;
    REQUIRE_THROWS_AS(validate_config(cfg), input_error);
    cfg = RunConfig{};
    cfg.tau_quantile = 1.2;
    REQUIRE_THROWS_AS(validate_config(cfg), input_error);
    cfg = RunConfig{};
    REQUIRE_NOTHROW(validate_config(cfg));
}

TEST_CASE("metric tables serialize one row per setting and procedure") {
    TempDir tmp;
    MetricsRow row;
    row.noise = {NoiseKind::GaussianACF, 10.0, 100};
    row.effect.regions = RegionLayout::One;
    row.effect.shape = EffectShape::Square;
    row.effect.proportion = 0.2;
    row.effect.beta_max = 2.0;
    row.procedure.procedure = Procedure::ClusterDepthBoth;
    row.procedure.scheme = PermScheme::TerBraak;
    row.replications = 100;
    row.permutations = 500;
    row.metrics.fwer = 0.04;
    row.metrics.fwer_ci_low = 0.02;
    row.metrics.fwer_ci_high = 0.07;
    row.metrics.average_power = 0.8;
    row.metrics.disjunctive_power = 0.9;
    write_metrics_csv({row}, tmp.file("metrics.csv"));
    const auto lines = io_detail::read_lines(tmp.file("metrics.csv"));
    REQUIRE(lines.size() == 2);
    REQUIRE(lines[0].rfind("noise,", 0) == 0);
    REQUIRE(lines[1].find("gaussian") != std::string::npos);
    REQUIRE(lines[1].find("cluster_depth_both,terbraak") != std::string::npos);
}
