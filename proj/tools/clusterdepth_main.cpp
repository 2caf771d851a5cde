// Command-line surface: `test` runs the selected procedures on delimited
// data files, `enumerate` does the same with the exhaustive permutation set,
// `simulate` runs a Monte-Carlo study grid from a config file.

#include "clusterdepth/io.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <set>
#include <string>
#include <vector>

namespace cd = clusterdepth;

namespace {

cd::PermScheme parse_scheme(const std::string& s) {
    if (s == "manly") return cd::PermScheme::Manly;
    if (s == "terbraak") return cd::PermScheme::TerBraak;
    throw cd::input_error("unknown permutation scheme '" + s + "' (manly|terbraak)");
}

cd::MassAggregation parse_aggregation(const std::string& s) {
    if (s == "sum") return cd::MassAggregation::Sum;
    if (s == "sum_of_squares") return cd::MassAggregation::SumOfSquares;
    throw cd::input_error("unknown aggregation '" + s + "' (sum|sum_of_squares)");
}

cd::Procedure parse_procedure(const std::string& s) {
    if (s == "clusterdepth") return cd::Procedure::ClusterDepthBoth;
    if (s == "clusterdepth-head") return cd::Procedure::ClusterDepthHead;
    if (s == "clustermass") return cd::Procedure::ClusterMass;
    if (s == "tfce") return cd::Procedure::TFCE;
    if (s == "minp") return cd::Procedure::MinP;
    if (s == "maxt") return cd::Procedure::MaxT;
    if (s == "troendle") return cd::Procedure::Troendle;
    throw cd::input_error("unknown procedure '" + s +
                          "' (clusterdepth|clusterdepth-head|clustermass|tfce|minp|maxt|troendle)");
}

cd::NoiseKind parse_noise(const std::string& s) {
    if (s == "independent") return cd::NoiseKind::Independent;
    if (s == "gaussian") return cd::NoiseKind::GaussianACF;
    if (s == "exponential") return cd::NoiseKind::ExponentialACF;
    throw cd::input_error("unknown noise kind '" + s + "' (independent|gaussian|exponential)");
}

cd::RegionLayout parse_regions(const std::string& s) {
    if (s == "none") return cd::RegionLayout::None;
    if (s == "one") return cd::RegionLayout::One;
    if (s == "two") return cd::RegionLayout::Two;
    if (s == "two_nearby") return cd::RegionLayout::TwoNearby;
    throw cd::input_error("unknown region layout '" + s + "' (none|one|two|two_nearby)");
}

cd::EffectShape parse_shape(const std::string& s) {
    if (s == "square") return cd::EffectShape::Square;
    if (s == "triangular") return cd::EffectShape::Triangular;
    throw cd::input_error("unknown effect shape '" + s + "' (square|triangular)");
}

std::vector<std::string> parse_list(const std::string& value) {
    std::vector<std::string> out;
    for (auto& item : cd::io_detail::split(value, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

// config-file values before CLI flags, defaults last
void apply_config_file(cd::RunConfig& cfg, const std::string& path) {
    const auto kv = cd::load_config_file(path);
    const auto get = [&](const char* key) -> const std::string* {
        const auto it = kv.find(key);
        return it == kv.end() ? nullptr : &it->second;
    };
    if (const auto* v = get("data")) cfg.data_path = *v;
    if (const auto* v = get("design")) cfg.design_path = *v;
    if (const auto* v = get("manifest")) cfg.manifest_path = *v;
    if (const auto* v = get("gmatrix")) cfg.gmatrix_path = *v;
    if (const auto* v = get("test_column")) cfg.test_column = *v;
    if (const auto* v = get("out")) cfg.out_prefix = *v;
    if (const auto* v = get("procedure")) cfg.procedures = parse_list(*v);
    if (const auto* v = get("alpha")) cfg.alpha = std::stod(*v);
    if (const auto* v = get("permutations")) cfg.permutations = std::stoi(*v);
    if (const auto* v = get("seed")) cfg.seed = std::stoull(*v);
    if (const auto* v = get("scheme")) cfg.scheme = parse_scheme(*v);
    if (const auto* v = get("threads")) cfg.threads = std::stoi(*v);
    if (const auto* v = get("tau_quantile")) cfg.tau_quantile = std::stod(*v);
    if (const auto* v = get("tau")) cfg.tau_override = std::stod(*v);
    if (const auto* v = get("mass_aggregation")) cfg.aggregation = parse_aggregation(*v);
    if (const auto* v = get("tfce_e")) cfg.tfce_extent_power = std::stod(*v);
    if (const auto* v = get("tfce_h")) cfg.tfce_height_power = std::stod(*v);
    if (const auto* v = get("tfce_dh")) cfg.tfce_dh = std::stod(*v);
    if (const auto* v = get("tfce_h0")) cfg.tfce_h_start = std::stod(*v);
    if (const auto* v = get("delimiter")) cfg.delimiter = v->empty() ? 0 : (*v)[0];
    if (const auto* v = get("exhaustive_cap")) cfg.exhaustive_cap = std::stoull(*v);
}

int run_test_command(const cd::RunConfig& cfg) {
    cd::validate_config(cfg);
    if (cfg.data_path.empty() || cfg.design_path.empty())
        throw cd::input_error("both --data and --design are required");

    const cd::SignalMatrix signals =
        cd::ingest_data(cfg.data_path, cfg.manifest_path, cfg.delimiter);
    const cd::DesignSpec design = cd::ingest_design(cfg.design_path, cfg.test_column,
                                                    cfg.gmatrix_path, cfg.delimiter);
    const int n = static_cast<int>(signals.n_observations());

    const cd::PermutationPlan plan =
        cfg.exhaustive ? cd::build_exhaustive_plan(n, cfg.scheme, cfg.exhaustive_cap)
                       : cd::build_plan(n, cfg.permutations, cfg.seed, cfg.scheme);
    const double tau = cfg.tau_override > 0.0
                           ? cfg.tau_override
                           : cd::parametric_threshold(design, cfg.tau_quantile);
    const double dh = cfg.tfce_dh > 0.0 ? cfg.tfce_dh : tau / 100.0;

    const std::vector<cd::StatSignal> observed = cd::fit_statistic(signals, design);
    const std::vector<cd::PermutedStatMatrix> stats =
        cd::permuted_statistics(signals, design, plan, cfg.threads);
    const bool multichannel = signals.channel_count() > 1;

    std::vector<cd::ProcedureRunOutput> outputs;
    for (const auto& name : cfg.procedures) {
        const cd::Procedure proc = parse_procedure(name);
        cd::ProcedureRunOutput run;
        run.procedure = proc;
        run.scheme = cfg.scheme;
        run.observed = observed;
        if (multichannel) {
            if (proc != cd::Procedure::ClusterDepthBoth)
                throw cd::input_error("procedure '" + name +
                                      "' runs on a single channel; multi-channel data "
                                      "supports clusterdepth only");
            cd::MultiChannelDepthResult res =
                cd::multichannel_depth_from_stats(stats, tau, cfg.alpha, cfg.threads);
            run.maps = std::move(res.maps);
            run.depth_clusters = std::move(res.clusters);
            run.jd_head = res.jd_head;
            run.jd_tail = res.jd_tail;
            run.tau = tau;
        } else {
            switch (proc) {
                case cd::Procedure::ClusterDepthBoth:
                case cd::Procedure::ClusterDepthHead: {
                    cd::ClusterDepthResult res = cd::cluster_depth_from_stats(
                        stats[0], tau, cfg.alpha, proc, cfg.threads);
                    run.maps = {res.map};
                    run.depth_clusters = std::move(res.clusters);
                    run.jd_head = res.jd_head;
                    run.jd_tail = res.jd_tail;
                    run.tau = tau;
                    break;
                }
                case cd::Procedure::ClusterMass: {
                    cd::ClusterMassResult res = cd::cluster_mass_from_stats(
                        stats[0], tau, cfg.aggregation, cfg.alpha, cfg.threads);
                    run.maps = {res.map};
                    run.mass_clusters = std::move(res.clusters);
                    run.tau = tau;
                    break;
                }
                case cd::Procedure::TFCE:
                    run.maps = {cd::tfce_from_stats(stats[0], cfg.tfce_extent_power,
                                                    cfg.tfce_height_power, dh, cfg.alpha,
                                                    cfg.tfce_h_start, cfg.threads)};
                    break;
                case cd::Procedure::MinP:
                    run.maps = {cd::minp_from_stats(stats[0], cfg.alpha)};
                    break;
                case cd::Procedure::MaxT:
                    run.maps = {cd::maxt_from_stats(stats[0], cfg.alpha)};
                    break;
                case cd::Procedure::Troendle:
                    run.maps = {cd::troendle_from_stats(stats[0], cfg.alpha)};
                    break;
            }
        }
        outputs.push_back(std::move(run));
    }

    cd::RunConfig echo = cfg;
    echo.permutations = plan.n_p;
    cd::emit_results(outputs, echo, cfg.out_prefix);
    std::cout << "wrote " << cfg.out_prefix << "_results.csv and " << cfg.out_prefix
              << "_meta.json (n_p=" << plan.n_p << ")\n";
    return 0;
}

struct SimulateOptions {
    std::string config_path;
    std::string out_prefix = "clusterdepth_sim";
    int threads = 0;          // 0 = from config
    std::uint64_t seed = 0;   // 0 = from config
};

int run_simulate_command(const SimulateOptions& opt) {
    const auto kv = cd::load_config_file(opt.config_path);
    const auto get = [&](const char* key, const std::string& fallback) {
        const auto it = kv.find(key);
        return it == kv.end() ? fallback : it->second;
    };
    const int m = std::stoi(get("m", "100"));
    const int n_per_group = std::stoi(get("n_per_group", "10"));
    const double acf_range = std::stod(get("acf_range", "10"));
    const int replications = std::stoi(get("replications", "1000"));
    const int permutations = std::stoi(get("permutations", "1000"));
    const double alpha = std::stod(get("alpha", "0.05"));
    const std::uint64_t seed = opt.seed ? opt.seed : std::stoull(get("seed", "1"));
    const int threads = opt.threads ? opt.threads : std::stoi(get("threads", "1"));
    const double tau_quantile = std::stod(get("tau_quantile", "0.95"));
    const cd::MassAggregation aggregation = parse_aggregation(get("mass_aggregation", "sum"));

    const auto noises = parse_list(get("noise", "independent"));
    const auto regions = parse_list(get("regions", "none"));
    const auto shapes = parse_list(get("shape", "square"));
    const auto proportions = parse_list(get("proportion", "0.2"));
    const auto betas = parse_list(get("beta_max", "1"));
    const auto procedure_specs = parse_list(get("procedures", "clusterdepth:terbraak"));

    std::vector<cd::ProcedureConfig> procedures;
    for (const auto& entry : procedure_specs) {
        cd::ProcedureConfig pc;
        const auto colon = entry.find(':');
        pc.procedure = parse_procedure(colon == std::string::npos ? entry
                                                                  : entry.substr(0, colon));
        pc.scheme = colon == std::string::npos ? parse_scheme(get("scheme", "terbraak"))
                                               : parse_scheme(entry.substr(colon + 1));
        pc.tau_quantile = tau_quantile;
        pc.aggregation = aggregation;
        pc.tfce_extent_power = std::stod(get("tfce_e", "0.5"));
        pc.tfce_height_power = std::stod(get("tfce_h", "1"));
        pc.tfce_dh = std::stod(get("tfce_dh", "0"));
        pc.tfce_h_start = std::stod(get("tfce_h0", "0"));
        procedures.push_back(pc);
    }

    std::vector<cd::MetricsRow> rows;
    std::set<std::string> seen;
    for (const auto& noise_name : noises)
        for (const auto& region_name : regions)
            for (const auto& shape_name : shapes)
                for (const auto& prop_str : proportions)
                    for (const auto& beta_str : betas) {
                        cd::StudySpec spec;
                        spec.n1 = n_per_group;
                        spec.n2 = n_per_group;
                        spec.noise = {parse_noise(noise_name), acf_range, m};
                        spec.effect.regions = parse_regions(region_name);
                        spec.effect.shape = parse_shape(shape_name);
                        if (spec.effect.regions == cd::RegionLayout::None) {
                            spec.effect.proportion = 0.0;
                            spec.effect.beta_max = 0.0;
                        } else {
                            spec.effect.proportion = std::stod(prop_str);
                            spec.effect.beta_max = std::stod(beta_str);
                        }
                        const std::string key =
                            noise_name + '|' + region_name + '|' +
                            cd::to_string(spec.effect.shape) + '|' +
                            std::to_string(spec.effect.proportion) + '|' +
                            std::to_string(spec.effect.beta_max);
                        if (!seen.insert(key).second) continue;
                        spec.procedures = procedures;
                        spec.replications = replications;
                        spec.n_p = permutations;
                        spec.seed = seed;
                        spec.alpha = alpha;
                        spec.threads = threads;
                        const auto metrics = cd::run_study(spec);
                        for (size_t k = 0; k < procedures.size(); ++k) {
                            cd::MetricsRow row;
                            row.noise = spec.noise;
                            row.effect = spec.effect;
                            row.procedure = procedures[k];
                            row.replications = replications;
                            row.permutations = permutations;
                            row.alpha = alpha;
                            row.metrics = metrics[k];
                            rows.push_back(std::move(row));
                        }
                        std::cout << "setting " << key << ": done\n";
                    }

    cd::write_metrics_csv(rows, opt.out_prefix + "_metrics.csv");

    nlohmann::json meta;
    meta["m"] = m;
    meta["n_per_group"] = n_per_group;
    meta["acf_range"] = acf_range;
    meta["replications"] = replications;
    meta["permutations"] = permutations;
    meta["alpha"] = alpha;
    meta["seed"] = seed;
    meta["tau_quantile"] = tau_quantile;
    meta["rng"] = cd::kRngIdentifier;
    meta["settings"] = static_cast<int>(rows.size());
    std::ofstream mf(opt.out_prefix + "_meta.json");
    if (!mf) throw cd::io_error("cannot write " + opt.out_prefix + "_meta.json");
    mf << meta.dump(2) << '\n';

    std::cout << "wrote " << opt.out_prefix << "_metrics.csv (" << rows.size() << " rows)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Permutation-based multiple comparisons for massively univariate signals"};
    app.require_subcommand(1);

    cd::RunConfig cfg;
    std::string config_path;

    // pre-scan for --config so file values become defaults the flags override
    for (int i = 1; i < argc - 1; ++i)
        if (std::string(argv[i]) == "--config") config_path = argv[i + 1];
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg.rfind("--config=", 0) == 0) config_path = arg.substr(9);
    }

    try {
        if (!config_path.empty()) apply_config_file(cfg, config_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }

    std::string scheme_name = cd::to_string(cfg.scheme);
    std::string aggregation_name = cd::to_string(cfg.aggregation);
    std::string delimiter_str = cfg.delimiter ? std::string(1, cfg.delimiter) : "";

    const auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "flat key=value config file (flags win)");
        cmd->add_option("--data", cfg.data_path, "delimited data file, one observation per row");
        cmd->add_option("--design", cfg.design_path, "delimited design file with named columns");
        cmd->add_option("--manifest", cfg.manifest_path, "channel manifest for wide data files");
        cmd->add_option("--gmatrix", cfg.gmatrix_path, "explicit contrast matrix file");
        cmd->add_option("--test-column", cfg.test_column, "design column to test");
        cmd->add_option("--out", cfg.out_prefix, "output file prefix");
        cmd->add_option("--procedure", cfg.procedures,
                        "procedures: clusterdepth clusterdepth-head clustermass tfce minp maxt troendle");
        cmd->add_option("--alpha", cfg.alpha, "target family-wise error rate");
        cmd->add_option("--seed", cfg.seed, "RNG seed");
        cmd->add_option("--threads", cfg.threads, "worker threads for the permutation axis");
        cmd->add_option("--scheme", scheme_name, "permutation scheme: manly|terbraak");
        cmd->add_option("--tau-quantile", cfg.tau_quantile, "cluster-forming threshold quantile");
        cmd->add_option("--tau", cfg.tau_override, "explicit cluster-forming threshold");
        cmd->add_option("--aggregation", aggregation_name, "cluster mass: sum|sum_of_squares");
        cmd->add_option("--tfce-e", cfg.tfce_extent_power, "TFCE extent exponent");
        cmd->add_option("--tfce-h", cfg.tfce_height_power, "TFCE height exponent");
        cmd->add_option("--tfce-dh", cfg.tfce_dh, "TFCE height step (0 = tau/100)");
        cmd->add_option("--tfce-h0", cfg.tfce_h_start, "TFCE integration start height");
        cmd->add_option("--delimiter", delimiter_str, "field delimiter (default: auto)");
    };

    CLI::App* cmd_test = app.add_subcommand("test", "run procedures on a dataset");
    add_common(cmd_test);
    cmd_test->add_option("--permutations", cfg.permutations, "number of permutations");

    CLI::App* cmd_enum =
        app.add_subcommand("enumerate", "run procedures with the exhaustive permutation set");
    add_common(cmd_enum);
    cmd_enum->add_option("--max-exhaustive", cfg.exhaustive_cap,
                         "largest allowed exhaustive permutation count");

    SimulateOptions sim;
    CLI::App* cmd_sim = app.add_subcommand("simulate", "Monte-Carlo study grid");
    cmd_sim->add_option("--config", sim.config_path, "grid config file")->required();
    cmd_sim->add_option("--out", sim.out_prefix, "output file prefix");
    cmd_sim->add_option("--threads", sim.threads, "worker threads across replications");
    cmd_sim->add_option("--seed", sim.seed, "RNG seed override");

    CLI11_PARSE(app, argc, argv);

    try {
        cfg.scheme = parse_scheme(scheme_name);
        cfg.aggregation = parse_aggregation(aggregation_name);
        cfg.delimiter = delimiter_str.empty() ? 0 : delimiter_str[0];
        if (cmd_test->parsed()) return run_test_command(cfg);
        if (cmd_enum->parsed()) {
            cfg.exhaustive = true;
            return run_test_command(cfg);
        }
        if (cmd_sim->parsed()) return run_simulate_command(sim);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
