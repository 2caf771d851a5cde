// Delimited-text ingestion, result serialization and run configuration.

#pragma once

#include "clusterdepth/inference.hpp"
#include "clusterdepth/simulation.hpp"
#include "clusterdepth/types.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace clusterdepth {

namespace io_detail {

inline std::string trim(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split(const std::string& line, char delim) {
    std::vector<std::string> out;
    size_t start = 0;
    for (size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == delim) {
            out.push_back(trim(std::string_view(line).substr(start, i - start)));
            start = i + 1;
        }
    }
    return out;
}

inline bool parse_double(const std::string& cell, double& out) {
    const char* begin = cell.data();
    const char* end = cell.data() + cell.size();
    const auto res = std::from_chars(begin, end, out);
    return res.ec == std::errc() && res.ptr == end && !cell.empty();
}

inline char detect_delimiter(const std::string& first_line) {
    return first_line.find('\t') != std::string::npos ? '\t' : ',';
}

// shortest representation that parses back to the same double
inline std::string format_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open file: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

}  // namespace io_detail

// Numeric matrix from delimited text, one row per line. delimiter 0 selects
// auto-detection (tab when present in the first line, comma otherwise).
inline MatrixXd read_delimited_matrix(const std::string& path, char delimiter = 0) {
    const auto lines = io_detail::read_lines(path);
    std::vector<std::vector<double>> rows;
    char delim = delimiter;
    for (size_t ln = 0; ln < lines.size(); ++ln) {
        if (io_detail::trim(lines[ln]).empty()) continue;
        if (delim == 0) delim = io_detail::detect_delimiter(lines[ln]);
        const auto cells = io_detail::split(lines[ln], delim);
        std::vector<double> row;
        row.reserve(cells.size());
        for (size_t c = 0; c < cells.size(); ++c) {
            double v;
            if (!io_detail::parse_double(cells[c], v))
                throw io_error(path + ": non-numeric cell at row " + std::to_string(ln + 1) +
                               ", column " + std::to_string(c + 1) + " ('" + cells[c] + "')");
            row.push_back(v);
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw io_error(path + ": ragged row " + std::to_string(ln + 1) + " has " +
                           std::to_string(row.size()) + " cells, expected " +
                           std::to_string(rows.front().size()));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw io_error(path + ": no data rows");
    MatrixXd out(static_cast<Eigen::Index>(rows.size()),
                 static_cast<Eigen::Index>(rows.front().size()));
    for (size_t i = 0; i < rows.size(); ++i)
        for (size_t j = 0; j < rows.front().size(); ++j)
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return out;
}

struct ChannelBlock {
    std::string name;
    int width = 0;
};

// Manifest for column-blocked multi-channel files: one line per channel,
// "name<delim>width". All blocks must share the same width.
inline std::vector<ChannelBlock> read_channel_manifest(const std::string& path) {
    std::vector<ChannelBlock> out;
    const auto lines = io_detail::read_lines(path);
    for (size_t ln = 0; ln < lines.size(); ++ln) {
        const auto trimmed = io_detail::trim(lines[ln]);
        if (trimmed.empty() || trimmed[0] == '#') continue;
        char delim = io_detail::detect_delimiter(trimmed);
        auto cells = io_detail::split(trimmed, delim);
        if (cells.size() == 1) cells = io_detail::split(trimmed, ' ');
        if (cells.size() != 2)
            throw io_error(path + ": manifest line " + std::to_string(ln + 1) +
                           " must be 'name,width'");
        double w;
        if (!io_detail::parse_double(cells[1], w) || w < 2 || w != std::floor(w))
            throw io_error(path + ": manifest line " + std::to_string(ln + 1) +
                           " has invalid block width '" + cells[1] + "'");
        out.push_back({cells[0], static_cast<int>(w)});
    }
    if (out.empty()) throw io_error(path + ": empty channel manifest");
    for (const auto& b : out)
        if (b.width != out.front().width)
            throw io_error(path + ": channel blocks must all have the same width (" +
                           b.name + " has " + std::to_string(b.width) + ", expected " +
                           std::to_string(out.front().width) + ")");
    return out;
}

// Data file -> SignalMatrix. Without a manifest the file is one channel;
// with a manifest the columns are consecutive per-channel blocks.
inline SignalMatrix ingest_data(const std::string& data_path,
                                const std::string& manifest_path = "", char delimiter = 0) {
    const MatrixXd wide = read_delimited_matrix(data_path, delimiter);
    SignalMatrix out;
    if (manifest_path.empty()) {
        out.channels.push_back(wide);
    } else {
        const auto blocks = read_channel_manifest(manifest_path);
        const auto total = static_cast<Eigen::Index>(blocks.size()) * blocks.front().width;
        if (wide.cols() != total)
            throw io_error(data_path + ": has " + std::to_string(wide.cols()) +
                           " columns but the manifest describes " + std::to_string(total));
        for (size_t c = 0; c < blocks.size(); ++c)
            out.channels.push_back(
                wide.middleCols(static_cast<Eigen::Index>(c) * blocks.front().width,
                                blocks.front().width));
    }
    validate(out);
    return out;
}

// Design file: delimited text with a header of column names. Numeric
// columns enter the design directly; other columns are treated as
// categorical and dummy-coded against their lexicographically first level.
// An intercept is always included. The contrast G tests the coefficients of
// `test_column` (default: first column) unless an explicit G matrix file is
// given.
inline DesignSpec ingest_design(const std::string& design_path, std::string test_column = "",
                                const std::string& gmatrix_path = "", char delimiter = 0) {
    const auto lines = io_detail::read_lines(design_path);
    size_t first = 0;
    while (first < lines.size() && io_detail::trim(lines[first]).empty()) ++first;
    if (first >= lines.size()) throw io_error(design_path + ": empty design file");
    char delim = delimiter ? delimiter : io_detail::detect_delimiter(lines[first]);
    const auto header = io_detail::split(lines[first], delim);
    if (header.empty() || header.front().empty())
        throw io_error(design_path + ": missing header row with column names");

    std::vector<std::vector<std::string>> cols(header.size());
    for (size_t ln = first + 1; ln < lines.size(); ++ln) {
        if (io_detail::trim(lines[ln]).empty()) continue;
        const auto cells = io_detail::split(lines[ln], delim);
        if (cells.size() != header.size())
            throw io_error(design_path + ": ragged row " + std::to_string(ln + 1) + " has " +
                           std::to_string(cells.size()) + " cells, expected " +
                           std::to_string(header.size()));
        for (size_t c = 0; c < cells.size(); ++c) cols[c].push_back(cells[c]);
    }
    const auto n = static_cast<Eigen::Index>(cols.front().size());
    if (n < 2) throw io_error(design_path + ": needs at least 2 observations");

    if (test_column.empty()) test_column = header.front();
    int test_idx = -1;
    for (size_t c = 0; c < header.size(); ++c)
        if (header[c] == test_column) test_idx = static_cast<int>(c);
    if (test_idx < 0)
        throw io_error(design_path + ": no column named '" + test_column + "'");

    // encode: intercept, then one block per file column
    std::vector<VectorXd> coef_cols{VectorXd::Ones(n)};
    std::vector<std::pair<int, int>> column_span(header.size());  // coef range per file column
    std::optional<std::vector<int>> labels;
    for (size_t c = 0; c < header.size(); ++c) {
        bool numeric = true;
        std::vector<double> values(static_cast<size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i)
            if (!io_detail::parse_double(cols[c][static_cast<size_t>(i)],
                                         values[static_cast<size_t>(i)])) {
                numeric = false;
                break;
            }
        const int begin = static_cast<int>(coef_cols.size());
        if (numeric) {
            VectorXd v(n);
            for (Eigen::Index i = 0; i < n; ++i) v[i] = values[static_cast<size_t>(i)];
            coef_cols.push_back(std::move(v));
        } else {
            std::vector<std::string> levels(cols[c]);
            std::sort(levels.begin(), levels.end());
            levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
            if (levels.size() < 2)
                throw io_error(design_path + ": categorical column '" + header[c] +
                               "' has a single level");
            for (size_t l = 1; l < levels.size(); ++l) {
                VectorXd v = VectorXd::Zero(n);
                for (Eigen::Index i = 0; i < n; ++i)
                    if (cols[c][static_cast<size_t>(i)] == levels[l]) v[i] = 1.0;
                coef_cols.push_back(std::move(v));
            }
            if (static_cast<int>(c) == test_idx) {
                std::vector<int> lab(static_cast<size_t>(n));
                for (Eigen::Index i = 0; i < n; ++i)
                    lab[static_cast<size_t>(i)] = static_cast<int>(
                        std::lower_bound(levels.begin(), levels.end(),
                                         cols[c][static_cast<size_t>(i)]) -
                        levels.begin());
                labels = std::move(lab);
            }
        }
        column_span[c] = {begin, static_cast<int>(coef_cols.size())};
    }

    const auto q = static_cast<Eigen::Index>(coef_cols.size());
    DesignSpec design;
    design.X.resize(n, q);
    for (Eigen::Index j = 0; j < q; ++j) design.X.col(j) = coef_cols[static_cast<size_t>(j)];
    design.group_labels = std::move(labels);

    if (!gmatrix_path.empty()) {
        design.G = read_delimited_matrix(gmatrix_path, delimiter);
        if (design.G.cols() != q)
            throw io_error(gmatrix_path + ": contrast has " + std::to_string(design.G.cols()) +
                           " columns but the design has " + std::to_string(q) +
                           " coefficients");
    } else {
        const auto [gb, ge] = column_span[static_cast<size_t>(test_idx)];
        design.G = MatrixXd::Zero(ge - gb, q);
        for (int r = 0; r < ge - gb; ++r) design.G(r, gb + r) = 1.0;
    }

    Eigen::ColPivHouseholderQR<MatrixXd> qr(design.X);
    if (qr.rank() < q)
        throw design_error(design_path + ": design matrix is rank deficient (rank " +
                           std::to_string(qr.rank()) + " < " + std::to_string(q) + ")");
    if (n <= q)
        throw design_error(design_path + ": needs more observations than coefficients (n=" +
                           std::to_string(n) + ", q=" + std::to_string(q) + ")");
    return design;
}

// ---------------------------------------------------------------------------
// Run configuration

struct RunConfig {
    std::vector<std::string> procedures{"clusterdepth"};
    double alpha = 0.05;
    int permutations = 5000;
    std::uint64_t seed = 1;
    PermScheme scheme = PermScheme::TerBraak;
    double tau_quantile = 0.95;
    double tau_override = 0.0;  // 0 = derive from quantile
    MassAggregation aggregation = MassAggregation::Sum;
    double tfce_extent_power = 0.5;
    double tfce_height_power = 1.0;
    double tfce_dh = 0.0;  // 0 = tau/100
    double tfce_h_start = 0.0;
    int threads = 1;
    char delimiter = 0;
    bool exhaustive = false;
    std::uint64_t exhaustive_cap = kDefaultExhaustiveCap;
    std::string data_path;
    std::string design_path;
    std::string manifest_path;
    std::string gmatrix_path;
    std::string test_column;
    std::string out_prefix = "clusterdepth_run";
};

inline void validate_config(const RunConfig& cfg) {
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw input_error("alpha must lie in (0, 1)");
    if (cfg.permutations < 2) throw input_error("permutations must be at least 2");
    if (cfg.threads < 1) throw input_error("threads must be at least 1");
    if (!(cfg.tau_quantile > 0.0 && cfg.tau_quantile < 1.0))
        throw input_error("tau quantile must lie in (0, 1)");
    if (cfg.tau_override < 0.0) throw input_error("tau must be non-negative");
    if (cfg.tfce_extent_power < 0.0 || cfg.tfce_height_power < 0.0)
        throw input_error("tfce exponents must be non-negative");
    if (cfg.tfce_dh < 0.0) throw input_error("tfce dh must be non-negative");
    if (cfg.procedures.empty()) throw input_error("at least one procedure is required");
}

// Flat key=value configuration file; '#' starts a comment.
inline std::map<std::string, std::string> load_config_file(const std::string& path) {
    std::map<std::string, std::string> out;
    for (const auto& raw : io_detail::read_lines(path)) {
        std::string line = raw;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = io_detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw io_error(path + ": expected key=value, got '" + line + "'");
        out[io_detail::trim(line.substr(0, eq))] = io_detail::trim(line.substr(eq + 1));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Result emission

// Everything one procedure produced on one dataset.
struct ProcedureRunOutput {
    Procedure procedure = Procedure::MaxT;
    PermScheme scheme = PermScheme::TerBraak;
    std::vector<StatSignal> observed;     // per channel
    std::vector<AdjustedPValueMap> maps;  // per channel
    double tau = std::numeric_limits<double>::quiet_NaN();
    int jd_head = -1;
    int jd_tail = -1;
    std::vector<DepthClusterReport> depth_clusters;
    std::vector<MassCluster> mass_clusters;
};

inline nlohmann::json config_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["procedures"] = cfg.procedures;
    j["alpha"] = cfg.alpha;
    j["permutations"] = cfg.permutations;
    j["seed"] = cfg.seed;
    j["scheme"] = to_string(cfg.scheme);
    j["tau_quantile"] = cfg.tau_quantile;
    if (cfg.tau_override > 0.0) j["tau_override"] = cfg.tau_override;
    j["mass_aggregation"] = to_string(cfg.aggregation);
    j["tfce_e"] = cfg.tfce_extent_power;
    j["tfce_h"] = cfg.tfce_height_power;
    j["tfce_dh"] = cfg.tfce_dh;
    j["tfce_h0"] = cfg.tfce_h_start;
    j["threads"] = cfg.threads;
    j["exhaustive"] = cfg.exhaustive;
    j["rng"] = kRngIdentifier;
    j["troendle_tie_break"] = "marginal_p_asc,statistic_desc,index_asc";
    return j;
}

// Writes <prefix>_results.csv (long format) and <prefix>_meta.json.
// All indices in the files are 1-based.
inline void emit_results(const std::vector<ProcedureRunOutput>& outputs, const RunConfig& cfg,
                         const std::string& out_prefix) {
    using io_detail::format_double;
    const std::string table_path = out_prefix + "_results.csv";
    std::ofstream table(table_path);
    if (!table) throw io_error("cannot write " + table_path);
    table << "channel,time_index,statistic,p_adjusted,significant,procedure\n";
    for (const auto& run : outputs) {
        for (size_t ch = 0; ch < run.maps.size(); ++ch) {
            const auto& map = run.maps[ch];
            const auto& obs = run.observed[ch];
            for (Eigen::Index s = 0; s < map.p.size(); ++s) {
                table << (ch + 1) << ',' << (s + 1) << ',' << format_double(obs.values[s])
                      << ',' << format_double(map.p[s]) << ','
                      << int(map.significant[static_cast<size_t>(s)]) << ','
                      << to_string(run.procedure) << '\n';
            }
        }
    }
    table.close();
    if (!table) throw io_error("failed writing " + table_path);

    nlohmann::json meta;
    meta["config"] = config_json(cfg);
    if (!outputs.empty() && !outputs.front().observed.empty()) {
        meta["n_timepoints"] = outputs.front().observed.front().values.size();
        meta["n_channels"] = outputs.front().observed.size();
        meta["statistic_df"] = {outputs.front().observed.front().df.first,
                                outputs.front().observed.front().df.second};
    }
    nlohmann::json procs = nlohmann::json::array();
    for (const auto& run : outputs) {
        nlohmann::json p;
        p["procedure"] = to_string(run.procedure);
        p["scheme"] = to_string(run.scheme);
        if (!std::isnan(run.tau)) p["tau"] = run.tau;
        if (run.jd_head >= 0) p["j_d_head"] = run.jd_head;
        if (run.jd_tail >= 0) p["j_d_tail"] = run.jd_tail;
        if (!run.depth_clusters.empty() || run.procedure == Procedure::ClusterDepthBoth ||
            run.procedure == Procedure::ClusterDepthHead) {
            nlohmann::json clusters = nlohmann::json::array();
            for (const auto& c : run.depth_clusters) {
                nlohmann::json cj;
                cj["channel"] = c.channel + 1;
                cj["start"] = c.start + 1;
                cj["end"] = c.end + 1;
                cj["length"] = c.end - c.start + 1;
                cj["mass_sum"] = c.mass_sum;
                cj["head_p"] = std::vector<double>(c.head_p.data(),
                                                   c.head_p.data() + c.head_p.size());
                cj["tail_p"] = std::vector<double>(c.tail_p.data(),
                                                   c.tail_p.data() + c.tail_p.size());
                clusters.push_back(std::move(cj));
            }
            p["clusters"] = std::move(clusters);
        }
        if (run.procedure == Procedure::ClusterMass) {
            nlohmann::json clusters = nlohmann::json::array();
            for (const auto& c : run.mass_clusters) {
                nlohmann::json cj;
                cj["start"] = c.start + 1;
                cj["end"] = c.end + 1;
                cj["mass"] = c.mass;
                cj["p"] = c.p;
                clusters.push_back(std::move(cj));
            }
            p["clusters"] = std::move(clusters);
        }
        procs.push_back(std::move(p));
    }
    meta["procedures"] = std::move(procs);
    const std::string meta_path = out_prefix + "_meta.json";
    std::ofstream mf(meta_path);
    if (!mf) throw io_error("cannot write " + meta_path);
    mf << meta.dump(2) << '\n';
    mf.close();
    if (!mf) throw io_error("failed writing " + meta_path);
}

struct ResultRow {
    int channel = 0;
    int time_index = 0;
    double statistic = 0.0;
    double p_adjusted = 1.0;
    bool significant = false;
    std::string procedure;
};

inline std::vector<ResultRow> read_results_table(const std::string& path) {
    const auto lines = io_detail::read_lines(path);
    if (lines.empty()) throw io_error(path + ": empty results table");
    std::vector<ResultRow> out;
    for (size_t ln = 1; ln < lines.size(); ++ln) {
        if (io_detail::trim(lines[ln]).empty()) continue;
        const auto cells = io_detail::split(lines[ln], ',');
        if (cells.size() != 6)
            throw io_error(path + ": bad row " + std::to_string(ln + 1));
        ResultRow row;
        row.channel = std::stoi(cells[0]);
        row.time_index = std::stoi(cells[1]);
        if (cells[2] == "inf")
            row.statistic = std::numeric_limits<double>::infinity();
        else if (cells[2] == "-inf")
            row.statistic = -std::numeric_limits<double>::infinity();
        else if (!io_detail::parse_double(cells[2], row.statistic))
            throw io_error(path + ": bad statistic at row " + std::to_string(ln + 1));
        if (!io_detail::parse_double(cells[3], row.p_adjusted))
            throw io_error(path + ": bad p value at row " + std::to_string(ln + 1));
        row.significant = cells[4] == "1";
        row.procedure = cells[5];
        out.push_back(std::move(row));
    }
    return out;
}

// Metric table for simulation studies, one row per (setting, procedure).
struct MetricsRow {
    NoiseSpec noise;
    EffectSpec effect;
    ProcedureConfig procedure;
    int replications = 0;
    int permutations = 0;
    double alpha = 0.05;
    SimulationMetrics metrics;
};

inline void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path) {
    using io_detail::format_double;
    std::ofstream out(path);
    if (!out) throw io_error("cannot write " + path);
    out << "noise,acf_range,regions,shape,proportion,beta_max,procedure,scheme,"
           "replications,permutations,alpha,fwer,fwer_ci_low,fwer_ci_high,"
           "average_power,disjunctive_power\n";
    for (const auto& r : rows) {
        out << to_string(r.noise.kind) << ',' << format_double(r.noise.range) << ','
            << to_string(r.effect.regions) << ',' << to_string(r.effect.shape) << ','
            << format_double(r.effect.proportion) << ',' << format_double(r.effect.beta_max)
            << ',' << to_string(r.procedure.procedure) << ',' << to_string(r.procedure.scheme)
            << ',' << r.replications << ',' << r.permutations << ','
            << format_double(r.alpha) << ',' << format_double(r.metrics.fwer) << ','
            << format_double(r.metrics.fwer_ci_low) << ','
            << format_double(r.metrics.fwer_ci_high) << ','
            << format_double(r.metrics.average_power) << ','
            << format_double(r.metrics.disjunctive_power) << '\n';
    }
    out.close();
    if (!out) throw io_error("failed writing " + path);
}

}  // namespace clusterdepth
