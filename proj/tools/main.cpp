#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "kappasim/kappasim.hpp"

namespace ks = kappasim;
using nlohmann::json;

namespace {

/// Exit-code taxonomy: 0 ok, 2 parse/io, 3 domain/validity, 4 numerical.
int guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const ks::ParseError& e) {
        std::cerr << "error: " << e.what();
        if (e.line() > 0) std::cerr << " (line " << e.line() << ", column " << e.column() << ")";
        std::cerr << "\n";
        return 2;
    } catch (const ks::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ks::DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const ks::ValidityError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const ks::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}

void emit_json(const json& j, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << j.dump(2) << "\n";
    } else {
        ks::write_json_file(out_path, j);
        std::cout << "wrote " << out_path << "\n";
    }
}

struct SimulateArgs {
    std::string config_path;
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string format;
    bool strict = false;
};

int cmd_simulate(const SimulateArgs& args) {
    ks::ExperimentConfig cfg = ks::load_experiment_config(args.config_path);
    if (args.seed_given) cfg.seed = args.seed;
    if (!args.format.empty()) cfg.output.format = args.format;

    std::error_code ec;
    std::filesystem::create_directories(args.out_dir, ec);
    if (ec) throw ks::IoError("cannot create output directory " + args.out_dir);
    const std::string stem = args.out_dir + "/" + cfg.output.prefix;

    json meta = ks::result_metadata(cfg);
    std::string csv;
    json rows;
    std::vector<std::string> problems;

    switch (cfg.mode) {
    case ks::CampaignMode::MonteCarlo: {
        const ks::CampaignResult result = ks::run_campaign(cfg.monte_carlo_config());
        csv = ks::campaign_csv(result);
        rows = ks::campaign_rows_json(result);
        json errors = json::array();
        for (const auto& s : result.per_rate) {
            if (s.error.empty()) continue;
            errors.push_back({{"rate_hz", s.rate}, {"message", s.error}});
            problems.push_back("rate " + ks::format_sci(s.rate) + "/s: " + s.error);
        }
        meta["rate_errors"] = errors;
        break;
    }
    case ks::CampaignMode::CorrectionSweep: {
        ks::SweepOptions opts;
        opts.path_amplitudes = cfg.path_amplitudes;
        opts.dark_rate = cfg.detector_true.dark_rate;
        opts.efficiency = cfg.detector_true.efficiency;
        const ks::CorrectionSweep sweep =
            ks::sweep_corrected_kappa(cfg.detector_true.tau0, cfg.assumed_taus, cfg.rate_grid, opts);
        csv = ks::correction_sweep_csv(sweep);
        rows = json::array();
        for (std::size_t i = 0; i < sweep.rates.size(); ++i)
            rows.push_back({{"rate_hz", sweep.rates[i]}, {"kappa", sweep.kappas[i]}});
        meta["true_tau_s"] = sweep.true_tau;
        meta["assumed_taus_s"] = sweep.assumed_taus;
        meta["warnings"] = sweep.warnings;
        problems = sweep.warnings;
        break;
    }
    case ks::CampaignMode::RateDependentSweep: {
        ks::SweepOptions opts;
        opts.path_amplitudes = cfg.path_amplitudes;
        const ks::RateDependentSweep sweep =
            ks::sweep_rate_dependent(cfg.detector_true, cfg.assumed_constant_tau, cfg.rate_grid, opts);
        csv = ks::rate_dependent_sweep_csv(sweep);
        rows = json::array();
        for (std::size_t i = 0; i < sweep.rates.size(); ++i)
            rows.push_back({{"rate_hz", sweep.rates[i]},
                            {"kappa_matched", sweep.kappa_matched[i]},
                            {"kappa_constant", sweep.kappa_constant[i]}});
        meta["assumed_constant_tau_s"] = sweep.assumed_constant_tau;
        meta["zero_crossings_hz"] = sweep.zero_crossings;
        meta["warnings"] = sweep.warnings;
        problems = sweep.warnings;
        break;
    }
    }

    if (cfg.output.format == "csv") {
        const std::string csv_path = stem + ".csv";
        const std::string meta_path = stem + ".meta.json";
        ks::detail_io::write_text_file(csv_path, csv);
        meta["data_files"] = json::array({cfg.output.prefix + ".csv"});
        ks::write_json_file(meta_path, meta);
        std::cout << "wrote " << csv_path << "\n" << "wrote " << meta_path << "\n";
    } else {
        meta["results"] = rows;
        const std::string json_path = stem + ".json";
        ks::write_json_file(json_path, meta);
        std::cout << "wrote " << json_path << "\n";
    }

    if (args.strict && !problems.empty()) {
        for (const auto& p : problems) std::cerr << "error: " << p << "\n";
        return 3;
    }
    return 0;
}

int cmd_kappa(const std::string& in_path, const std::string& out_path) {
    const std::vector<ks::OctetRecord> records = ks::read_rate_octets(in_path);
    if (records.empty()) throw ks::DomainError("no rate octets in " + in_path);

    json per = json::array();
    std::vector<double> kappas;
    long long undefined = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const double eps = ks::epsilon(records[i].octet);
        const double del = ks::delta(records[i].octet);
        json row;
        row["index"] = i;
        row["epsilon"] = eps;
        row["delta"] = del;
        if (del == 0.0) {
            row["defined"] = false;
            ++undefined;
        } else {
            row["defined"] = true;
            row["kappa"] = eps / del;
            kappas.push_back(eps / del);
        }
        per.push_back(row);
    }

    json agg;
    agg["n"] = records.size();
    agg["n_defined"] = kappas.size();
    agg["n_undefined"] = undefined;
    if (kappas.size() == 1) {
        agg["mean"] = kappas.front();
    } else if (kappas.size() >= 2) {
        const ks::Summary s = ks::summary(kappas);
        agg["mean"] = s.mean;
        agg["std"] = s.std_dev;
        agg["std_error"] = s.std_error;
        try {
            const ks::NormalFit f = ks::fit_normal(kappas, ks::FitMethod::MomentsOnData);
            agg["fit_moments"] = {{"mu", f.mu}, {"sigma", f.sigma}};
        } catch (const ks::Error& e) {
            agg["fit_moments_error"] = e.what();
        }
        try {
            const ks::NormalFit f = ks::fit_normal(kappas, ks::FitMethod::LeastSquaresOnHistogram);
            agg["fit_histogram"] = {{"mu", f.mu}, {"sigma", f.sigma}, {"amplitude", f.amplitude}};
        } catch (const ks::Error& e) {
            agg["fit_histogram_error"] = e.what();
        }
    }

    emit_json(json{{"octets", per}, {"aggregate", agg}}, out_path);
    return 0;
}

struct VisibilityArgs {
    std::string fixture_path;
    std::vector<double> efficiencies;
    std::string column = "experiment";
    double measured_visibility = -1.0;
    std::string format = "text";
};

int cmd_visibility(const VisibilityArgs& args) {
    if (args.fixture_path.empty() == args.efficiencies.empty())
        throw ks::ParseError("give exactly one of --fixture or --efficiencies", 0, 0);

    ks::SplitterSpec spec;
    if (!args.fixture_path.empty()) {
        const ks::GratingFixture fx = ks::load_grating_fixture(args.fixture_path);
        spec = args.column == "theory" ? fx.theory_efficiencies() : fx.experiment_efficiencies();
    } else {
        spec = ks::SplitterSpec{args.efficiencies[0], args.efficiencies[1], args.efficiencies[2]};
    }
    const std::array<double, 3> vis = ks::pairwise_visibilities(spec);
    const char* names[3] = {"ab", "ac", "bc"};

    double qber = -1.0;
    if (args.measured_visibility >= 0.0) qber = ks::qber_from_visibility(args.measured_visibility);

    if (args.format == "json") {
        json j;
        j["efficiencies"] = spec.path_efficiencies();
        for (int i = 0; i < 3; ++i) {
            j["visibility"][names[i]] = vis[static_cast<std::size_t>(i)];
            j["visibility_pct"][names[i]] = 100.0 * vis[static_cast<std::size_t>(i)];
        }
        if (qber >= 0.0) {
            j["qber"]["visibility"] = args.measured_visibility;
            j["qber"]["value"] = qber;
        }
        emit_json(j, "");
    } else {
        char buf[64];
        std::printf("pair  visibility_pct\n");
        for (int i = 0; i < 3; ++i) {
            std::snprintf(buf, sizeof buf, "%.7f", 100.0 * vis[static_cast<std::size_t>(i)]);
            std::printf("%-4s  %s\n", names[i], buf);
        }
        if (qber >= 0.0) {
            std::printf("qber at visibility %s: %s (%.4f%%)\n",
                        ks::format_sci(args.measured_visibility).c_str(),
                        ks::format_sci(qber).c_str(), 100.0 * qber);
        }
    }
    return 0;
}

int cmd_deadtime(const std::string& in_path, const std::string& out_path, bool per_row) {
    const auto rows = ks::read_superposition_csv(in_path);
    if (rows.empty()) throw ks::DomainError("no measurements in " + in_path);
    const ks::DeadtimeEstimate est = ks::characterize_deadtime(rows);
    json j;
    j["tau_s"] = est.tau;
    j["uncertainty_s"] = est.uncertainty;
    j["n"] = rows.size();
    j["objective"] = est.objective;
    if (per_row) j["per_measurement_tau_s"] = est.per_measurement;
    emit_json(j, out_path);
    return 0;
}

int cmd_fit(const std::string& in_path, const std::string& out_path, const std::string& method,
            long long bins) {
    const std::vector<double> samples = ks::read_samples(in_path);
    if (samples.empty()) throw ks::DomainError("no samples in " + in_path);

    auto fit_json = [&](const ks::NormalFit& f) {
        return json{{"mu", f.mu}, {"sigma", f.sigma}, {"method", ks::to_string(f.method)}, {"n", f.n}};
    };
    auto histogram_fit = [&]() {
        if (bins > 0) {
            ks::NormalFit f = ks::fit_normal(ks::build_histogram(samples, static_cast<std::size_t>(bins)));
            return f;
        }
        return ks::fit_normal(samples, ks::FitMethod::LeastSquaresOnHistogram);
    };

    json j;
    if (method == "moments") {
        j = fit_json(ks::fit_normal(samples, ks::FitMethod::MomentsOnData));
    } else if (method == "histogram") {
        j = fit_json(histogram_fit());
    } else {
        j["n"] = samples.size();
        j["moments_on_data"] = fit_json(ks::fit_normal(samples, ks::FitMethod::MomentsOnData));
        j["least_squares_on_histogram"] = fit_json(histogram_fit());
    }
    emit_json(j, out_path);
    return 0;
}

struct ApplyDeadtimeArgs {
    std::string in_path;
    std::string out_path;
    double tau_s = -1.0;
    double tau0_s = -1.0;
    double slope_s_per_cps = 0.0;
    double dark_rate_cps = 0.0;
    double efficiency = 1.0;
    double duration_s = -1.0;
    std::uint64_t seed = 0;
};

int cmd_apply_deadtime(const ApplyDeadtimeArgs& args) {
    const bool constant = args.tau_s >= 0.0;
    const bool linear = args.tau0_s >= 0.0;
    if (constant == linear)
        throw ks::ParseError("give either --tau-s or --tau0-s with --slope-s-per-cps", 0, 0);
    const ks::DeadtimeModel model =
        constant ? ks::DeadtimeModel::constant(args.tau_s, args.dark_rate_cps, args.efficiency)
                 : ks::DeadtimeModel::linear_in_rate(args.tau0_s, args.slope_s_per_cps,
                                                     args.dark_rate_cps, args.efficiency);
    const std::vector<double> arrivals = ks::read_timestamps(args.in_path);
    const std::vector<double> detected =
        ks::apply_deadtime_events(arrivals, model, args.seed, args.duration_s);
    ks::write_timestamps(args.out_path, detected);
    std::cout << "wrote " << args.out_path << " (" << detected.size() << " detections from "
              << arrivals.size() << " arrivals)\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Three-path interference and detector-nonlinearity simulator"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(ks::program_name) + " " + ks::version_string);

    // simulate
    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Run the campaign or sweep described by a config file");
    simulate->add_option("--config", sim.config_path, "Config file (JSON)")->required();
    auto* seed_opt = simulate->add_option("--seed", sim.seed, "Override the config's RNG seed");
    simulate->add_option("--out", sim.out_dir, "Output directory (default: current)");
    simulate->add_option("--format", sim.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
    simulate->add_flag("--strict", sim.strict, "Exit nonzero if any grid rate fails");

    // kappa
    std::string kappa_in, kappa_out;
    auto* kappa_cmd = app.add_subcommand("kappa", "Evaluate epsilon/delta/kappa for measured rate octets");
    kappa_cmd->add_option("--in", kappa_in, "Rate-octet file")->required();
    kappa_cmd->add_option("--out", kappa_out, "Write the JSON report here instead of stdout");

    // visibility
    VisibilityArgs vis;
    auto* vis_cmd = app.add_subcommand("visibility", "Two-path visibilities from splitter efficiencies");
    vis_cmd->add_option("--fixture", vis.fixture_path, "Grating-order fixture file");
    vis_cmd->add_option("--efficiencies", vis.efficiencies, "Three path efficiencies in (0,1]")
        ->expected(3);
    vis_cmd->add_option("--column", vis.column, "Fixture column to use")
        ->check(CLI::IsMember({"experiment", "theory"}));
    vis_cmd->add_option("--measured-visibility", vis.measured_visibility,
                        "Also print the error rate for this visibility (fraction in [0,1])");
    vis_cmd->add_option("--format", vis.format, "Output format")->check(CLI::IsMember({"text", "json"}));

    // deadtime
    std::string dt_in, dt_out;
    bool dt_per_row = false;
    auto* dt_cmd = app.add_subcommand("deadtime", "Estimate the deadtime from superposition measurements");
    dt_cmd->add_option("--in", dt_in, "CSV of r_both,r_only1,r_only2,r_none rows")->required();
    dt_cmd->add_option("--out", dt_out, "Write the JSON report here instead of stdout");
    dt_cmd->add_flag("--per-row", dt_per_row, "Include per-measurement estimates");

    // fit
    std::string fit_in, fit_out, fit_method = "both";
    long long fit_bins = 0;
    auto* fit_cmd = app.add_subcommand("fit", "Fit a normal distribution to a sample file");
    fit_cmd->add_option("--in", fit_in, "Sample file, one value per line")->required();
    fit_cmd->add_option("--out", fit_out, "Write the JSON report here instead of stdout");
    fit_cmd->add_option("--method", fit_method, "Fit method")
        ->check(CLI::IsMember({"moments", "histogram", "both"}));
    fit_cmd->add_option("--bins", fit_bins, "Histogram bin count (default: automatic)");

    // apply-deadtime
    ApplyDeadtimeArgs ad;
    auto* ad_cmd = app.add_subcommand("apply-deadtime", "Gate a timestamp stream through the detector model");
    ad_cmd->add_option("--in", ad.in_path, "Arrival timestamps, one per line, seconds")->required();
    ad_cmd->add_option("--out", ad.out_path, "Detected timestamps output")->required();
    ad_cmd->add_option("--tau-s", ad.tau_s, "Constant deadtime, s");
    ad_cmd->add_option("--tau0-s", ad.tau0_s, "Rate-dependent deadtime intercept, s");
    ad_cmd->add_option("--slope-s-per-cps", ad.slope_s_per_cps, "Rate-dependent deadtime slope");
    ad_cmd->add_option("--dark-rate-cps", ad.dark_rate_cps, "Dark-count rate, counts/s");
    ad_cmd->add_option("--efficiency", ad.efficiency, "Detection efficiency in (0,1]");
    ad_cmd->add_option("--duration-s", ad.duration_s, "Stream duration (default: last arrival)");
    ad_cmd->add_option("--seed", ad.seed, "RNG seed for dark counts and efficiency");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    sim.seed_given = seed_opt->count() > 0;

    if (simulate->parsed()) return guarded([&] { return cmd_simulate(sim); });
    if (kappa_cmd->parsed()) return guarded([&] { return cmd_kappa(kappa_in, kappa_out); });
    if (vis_cmd->parsed()) return guarded([&] { return cmd_visibility(vis); });
    if (dt_cmd->parsed()) return guarded([&] { return cmd_deadtime(dt_in, dt_out, dt_per_row); });
    if (fit_cmd->parsed()) return guarded([&] { return cmd_fit(fit_in, fit_out, fit_method, fit_bins); });
    if (ad_cmd->parsed()) return guarded([&] { return cmd_apply_deadtime(ad); });
    return 1;
}
