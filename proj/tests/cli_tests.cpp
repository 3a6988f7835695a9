#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "json.hpp"

#include "kappasim/kappasim.hpp"

using namespace kappasim;
using Catch::Approx;
using nlohmann::json;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::filesystem::path scratch_root() {
    static const std::filesystem::path root = [] {
        auto p = std::filesystem::temp_directory_path() /
                 ("kappasim_cli_" + std::to_string(::getpid()));
        std::filesystem::remove_all(p);
        std::filesystem::create_directories(p);
        return p;
    }();
    return root;
}

std::string scratch_file(const std::string& name) { return (scratch_root() / name).string(); }

std::string scratch_dir(const std::string& name) {
    const auto p = scratch_root() / name;
    std::filesystem::create_directories(p);
    return p.string();
}

std::string slurp(const std::string& path) { return detail_io::read_file(path); }

RunResult run_cli(const std::string& args) {
    static std::atomic<int> counter{0};
    const int id = counter++;
    const std::string out_path = scratch_file("stdout_" + std::to_string(id));
    const std::string err_path = scratch_file("stderr_" + std::to_string(id));
    const std::string cmd = std::string("\"") + KAPPASIM_CLI_PATH + "\" " + args + " >" + out_path +
                            " 2>" + err_path;
    const int status = std::system(cmd.c_str());
    RunResult r;
    if (status != -1 && WIFEXITED(status)) r.exit_code = WEXITSTATUS(status);
    r.out = slurp(out_path);
    r.err = slurp(err_path);
    return r;
}

} // namespace

TEST_CASE("version and argument errors", "[cli]") {
    const RunResult version = run_cli("--version");
    REQUIRE(version.exit_code == 0);
    REQUIRE(version.out.find("kappasim 0.1.0") != std::string::npos);

    REQUIRE(run_cli("").exit_code == 2);            // a subcommand is required
    REQUIRE(run_cli("frobnicate").exit_code == 2);  // unknown subcommand
    REQUIRE(run_cli("simulate").exit_code == 2);    // missing required --config
}

TEST_CASE("visibility from explicit efficiencies", "[cli]") {
    const RunResult text = run_cli("visibility --efficiencies 0.2828 0.2926 0.2930");
    REQUIRE(text.exit_code == 0);
    REQUIRE(text.out.find("pair  visibility_pct") != std::string::npos);
    REQUIRE(text.out.find("ab") != std::string::npos);
    REQUIRE(text.out.find("99.94") != std::string::npos);

    const RunResult js = run_cli(
        "visibility --efficiencies 0.2828 0.2926 0.2930 --format json --measured-visibility 0.9858");
    REQUIRE(js.exit_code == 0);
    const json j = json::parse(js.out);
    REQUIRE(j["visibility_pct"]["ab"].get<double>() == Approx(99.9429).margin(0.002));
    REQUIRE(j["visibility_pct"]["ac"].get<double>() == Approx(99.9369).margin(0.002));
    REQUIRE(j["visibility_pct"]["bc"].get<double>() == Approx(99.9998).margin(0.002));
    REQUIRE(j["qber"]["value"].get<double>() == Approx(0.0071).margin(1e-6));
}

TEST_CASE("visibility from the shipped fixture", "[cli]") {
    const std::string fixture = std::string(KAPPASIM_DATA_DIR) + "/grating_orders.txt";
    const RunResult exp = run_cli("visibility --fixture " + fixture + " --format json");
    REQUIRE(exp.exit_code == 0);
    const json je = json::parse(exp.out);
    REQUIRE(je["visibility_pct"]["ab"].get<double>() == Approx(99.9429).margin(0.002));

    const RunResult theory =
        run_cli("visibility --fixture " + fixture + " --column theory --format json");
    REQUIRE(theory.exit_code == 0);
    const json jt = json::parse(theory.out);
    REQUIRE(jt["visibility_pct"]["ab"].get<double>() !=
            je["visibility_pct"]["ab"].get<double>());

    // Exactly one of --fixture / --efficiencies.
    REQUIRE(run_cli("visibility --fixture " + fixture + " --efficiencies 0.3 0.3 0.3").exit_code ==
            2);
    REQUIRE(run_cli("visibility").exit_code == 2);
    // Efficiency outside (0, 1] is a domain failure.
    REQUIRE(run_cli("visibility --efficiencies 0.3 0.3 1.5").exit_code == 3);
}

TEST_CASE("kappa evaluates rate octet files", "[cli]") {
    // One interfering octet plus one purely additive (undefined kappa) octet.
    std::vector<OctetRecord> records(2);
    records[0].octet = born_rule_octet({1.0, 1.0, 1.0}, 9e5, 50.0);
    for (ShutterConfig c : ShutterConfig::all()) {
        double r = 10.0;
        if (c.is_open(Path::A)) r += 100.0;
        if (c.is_open(Path::B)) r += 200.0;
        if (c.is_open(Path::C)) r += 300.0;
        records[1].octet[c] = r;
    }
    const std::string in = scratch_file("octets.txt");
    write_rate_octets(in, records);

    const std::string out = scratch_file("kappa.json");
    const RunResult r = run_cli("kappa --in " + in + " --out " + out);
    REQUIRE(r.exit_code == 0);
    const json j = json::parse(slurp(out));
    REQUIRE(j["octets"].size() == 2);
    REQUIRE(j["octets"][0]["defined"].get<bool>());
    REQUIRE(std::abs(j["octets"][0]["kappa"].get<double>()) <= 1e-9);
    REQUIRE_FALSE(j["octets"][1]["defined"].get<bool>());
    REQUIRE(j["aggregate"]["n"] == 2);
    REQUIRE(j["aggregate"]["n_defined"] == 1);
    REQUIRE(j["aggregate"]["n_undefined"] == 1);
    REQUIRE(j["aggregate"]["mean"].get<double>() ==
            Approx(j["octets"][0]["kappa"].get<double>()));

    detail_io::write_text_file(scratch_file("garbage.txt"), "r0 fast\n");
    REQUIRE(run_cli("kappa --in " + scratch_file("garbage.txt")).exit_code == 2);
    REQUIRE(run_cli("kappa --in " + scratch_file("no_such_file.txt")).exit_code == 2);
}

TEST_CASE("deadtime estimation from a measurement CSV", "[cli]") {
    const double tau = 43.5e-9;
    const DeadtimeModel model = DeadtimeModel::constant(tau, 200.0);
    CounterRng rng(97);
    auto noisy = [&](double rate) {
        std::poisson_distribution<long long> d(rate);
        return static_cast<double>(d(rng));
    };
    std::vector<SuperpositionMeasurement> rows;
    for (int i = 0; i < 40; ++i) {
        const double r1 = 1.6e6 + 2e4 * i;
        const double r2 = 2.4e6 - 1e4 * i;
        SuperpositionMeasurement m;
        m.r_only1 = noisy(detected_rate(r1, model));
        m.r_only2 = noisy(detected_rate(r2, model));
        m.r_both = noisy(detected_rate(r1 + r2, model));
        m.r_none = noisy(200.0);
        rows.push_back(m);
    }
    const std::string in = scratch_file("superposition.csv");
    write_superposition_csv(in, rows);

    const RunResult r = run_cli("deadtime --in " + in + " --per-row");
    REQUIRE(r.exit_code == 0);
    const json j = json::parse(r.out);
    REQUIRE(j["n"] == 40);
    REQUIRE(j["per_measurement_tau_s"].size() == 40);
    const double tau_hat = j["tau_s"].get<double>();
    const double unc = j["uncertainty_s"].get<double>();
    REQUIRE(unc > 0.0);
    REQUIRE(std::abs(tau_hat - tau) <= 3.0 * unc);

    // A linear detector has no deadtime to estimate: numerical failure.
    std::vector<SuperpositionMeasurement> linear;
    for (int i = 0; i < 10; ++i) {
        const double a = 1e5 + 1e4 * i, b = 2e5;
        linear.push_back({a + b + 50.0, a + 50.0, b + 50.0, 50.0, 1});
    }
    const std::string lin = scratch_file("linear.csv");
    write_superposition_csv(lin, linear);
    REQUIRE(run_cli("deadtime --in " + lin).exit_code == 4);
}

TEST_CASE("normal fits from a sample file", "[cli]") {
    const double mu = 3.96e-4, sigma = 5.23e-4;
    CounterRng rng(123);
    std::normal_distribution<double> normal(mu, sigma);
    std::vector<double> samples(3000);
    for (double& v : samples) v = normal(rng);
    const std::string in = scratch_file("samples.txt");
    write_samples(in, samples);

    const RunResult both = run_cli("fit --in " + in);
    REQUIRE(both.exit_code == 0);
    const json j = json::parse(both.out);
    REQUIRE(j["n"] == 3000);
    const double mu_m = j["moments_on_data"]["mu"].get<double>();
    const double mu_h = j["least_squares_on_histogram"]["mu"].get<double>();
    REQUIRE(mu_m == Approx(mu).margin(4.0 * sigma / std::sqrt(3000.0)));
    REQUIRE(std::abs(mu_h - mu_m) <= 0.1 * sigma);
    REQUIRE(j["least_squares_on_histogram"]["sigma"].get<double>() ==
            Approx(j["moments_on_data"]["sigma"].get<double>()).epsilon(0.1));

    const RunResult moments = run_cli("fit --in " + in + " --method moments");
    REQUIRE(moments.exit_code == 0);
    REQUIRE(json::parse(moments.out)["method"] == "moments_on_data");

    const RunResult binned = run_cli("fit --in " + in + " --method histogram --bins 25");
    REQUIRE(binned.exit_code == 0);
    REQUIRE(json::parse(binned.out)["n"] == 3000);

    REQUIRE(run_cli("fit --in " + in + " --method banana").exit_code == 2);
}

TEST_CASE("apply-deadtime gates a timestamp file", "[cli]") {
    const std::string in = scratch_file("arrivals.txt");
    write_timestamps(in, {0.0, 10e-9, 20e-9, 100e-9});
    const std::string out = scratch_file("detected.txt");

    const RunResult r = run_cli("apply-deadtime --in " + in + " --out " + out + " --tau-s 45e-9");
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.out.find("2 detections from 4 arrivals") != std::string::npos);
    const auto detected = read_timestamps(out);
    REQUIRE(detected.size() == 2);
    REQUIRE(detected[0] == 0.0);
    REQUIRE(detected[1] == Approx(100e-9));

    // The deadtime model must be specified exactly one way.
    REQUIRE(run_cli("apply-deadtime --in " + in + " --out " + out).exit_code == 2);
    REQUIRE(run_cli("apply-deadtime --in " + in + " --out " + out +
                    " --tau-s 45e-9 --tau0-s 51.8e-9")
                .exit_code == 2);
}

TEST_CASE("simulate runs a small campaign reproducibly", "[cli]") {
    const std::string config = scratch_file("small.json");
    detail_io::write_text_file(config, R"json({
      "source": {"kind": "coherent", "mean_rate_cps": 1e4},
      "detector_true": {"kind": "constant", "tau_s": 4.5e-8},
      "campaign": {"mode": "monte_carlo", "rate_grid_cps": [1e4, 1e5], "runs": 20, "seed": 5},
      "output": {"prefix": "t", "format": "csv"}
    })json");

    const std::string dir_a = scratch_dir("sim_a");
    const std::string dir_b = scratch_dir("sim_b");
    REQUIRE(run_cli("simulate --config " + config + " --out " + dir_a).exit_code == 0);
    REQUIRE(run_cli("simulate --config " + config + " --out " + dir_b).exit_code == 0);

    REQUIRE(std::filesystem::exists(dir_a + "/t.csv"));
    REQUIRE(std::filesystem::exists(dir_a + "/t.meta.json"));
    // Byte-identical outputs for identical configs and seeds.
    REQUIRE(slurp(dir_a + "/t.csv") == slurp(dir_b + "/t.csv"));
    REQUIRE(slurp(dir_a + "/t.meta.json") == slurp(dir_b + "/t.meta.json"));

    const std::string csv = slurp(dir_a + "/t.csv");
    REQUIRE(csv.rfind("rate_hz,", 0) == 0);
    REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 3); // header + 2 rates

    const json meta = json::parse(slurp(dir_a + "/t.meta.json"));
    REQUIRE(meta["program"] == "kappasim");
    REQUIRE(meta["mode"] == "monte_carlo");
    REQUIRE(meta["seed"] == 5);
    REQUIRE(meta["config"]["campaign"]["runs"] == 20);
    REQUIRE(meta["data_files"] == json::array({"t.csv"}));

    // A different seed changes the data.
    const std::string dir_c = scratch_dir("sim_c");
    REQUIRE(run_cli("simulate --config " + config + " --out " + dir_c + " --seed 9").exit_code == 0);
    REQUIRE(json::parse(slurp(dir_c + "/t.meta.json"))["seed"] == 9);
    REQUIRE(slurp(dir_c + "/t.csv") != slurp(dir_a + "/t.csv"));

    // Combined JSON output format.
    const std::string dir_d = scratch_dir("sim_d");
    REQUIRE(run_cli("simulate --config " + config + " --out " + dir_d + " --format json").exit_code ==
            0);
    const json combined = json::parse(slurp(dir_d + "/t.json"));
    REQUIRE(combined["results"].size() == 2);
    REQUIRE(combined["results"][0]["n_runs"] == 20);
}

TEST_CASE("simulate rejects malformed configs without touching the output directory", "[cli]") {
    const std::string bad = scratch_file("bad.json");
    detail_io::write_text_file(bad, "{ this is not json");
    const std::string dir = (scratch_root() / "sim_bad").string();
    const RunResult r = run_cli("simulate --config " + bad + " --out " + dir);
    REQUIRE(r.exit_code == 2);
    REQUIRE(r.err.find("error:") != std::string::npos);
    REQUIRE_FALSE(std::filesystem::exists(dir));
}

TEST_CASE("simulate --strict surfaces per-rate failures", "[cli]") {
    const std::string config = scratch_file("strict.json");
    detail_io::write_text_file(config, R"json({
      "source": {"kind": "ideal_sps", "pulse_period_s": 1e-7},
      "detector_true": {"kind": "constant", "tau_s": 4.5e-8},
      "campaign": {"mode": "monte_carlo", "rate_grid_cps": [1e5, 2e7], "runs": 5, "seed": 1},
      "output": {"prefix": "s", "format": "csv"}
    })json");
    const std::string dir_lax = scratch_dir("strict_off");
    const RunResult lax = run_cli("simulate --config " + config + " --out " + dir_lax);
    REQUIRE(lax.exit_code == 0); // failures recorded in metadata, run still succeeds
    const json meta = json::parse(slurp(dir_lax + "/s.meta.json"));
    REQUIRE(meta["rate_errors"].size() == 1);

    const std::string dir_strict = scratch_dir("strict_on");
    const RunResult strict = run_cli("simulate --config " + config + " --out " + dir_strict + " --strict");
    REQUIRE(strict.exit_code == 3);
    REQUIRE(std::filesystem::exists(dir_strict + "/s.csv")); // outputs still written
}

TEST_CASE("the shipped sweep configs run end to end", "[cli]") {
    const std::string cfg_dir = KAPPASIM_CONFIG_DIR;

    const std::string dir_mc = scratch_dir("shipped_mc");
    const RunResult mc = run_cli("simulate --config " + cfg_dir + "/deadtime_miscorrection.json" +
                                 " --out " + dir_mc);
    REQUIRE(mc.exit_code == 0);
    const std::string mc_csv = slurp(dir_mc + "/deadtime_miscorrection.csv");
    REQUIRE(std::count(mc_csv.begin(), mc_csv.end(), '\n') == 62); // header + 61 grid points

    const std::string dir_rd = scratch_dir("shipped_rd");
    const RunResult rd = run_cli("simulate --config " + cfg_dir + "/rate_dependent_deadtime.json" +
                                 " --out " + dir_rd);
    REQUIRE(rd.exit_code == 0);
    const json meta = json::parse(slurp(dir_rd + "/rate_dependent_deadtime.meta.json"));
    REQUIRE(meta["zero_crossings_hz"].size() == 1);
    const double crossing = meta["zero_crossings_hz"][0].get<double>();
    REQUIRE(crossing > 1e5);
    REQUIRE(crossing < 1e7);
}
