#pragma once

#include <array>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "kappasim/campaign.hpp"
#include "kappasim/errors.hpp"
#include "kappasim/optics.hpp"
#include "kappasim/sorkin.hpp"
#include "kappasim/sources.hpp"
#include "kappasim/spad.hpp"
#include "kappasim/version.hpp"

namespace kappasim {

/// All numeric output goes through this: '.' decimal separator, scientific
/// notation, 13 significant digits, so values survive a text round trip.
inline std::string format_sci(double value) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12e", value);
    return buf;
}

namespace detail_io {

struct NumberedLine {
    std::string text; // comment-stripped, trimmed; may be empty (group separator)
    long number = 0;  // 1-based line in the file
};

inline std::string strip_comment(const std::string& raw) {
    const auto hash = raw.find('#');
    std::string s = hash == std::string::npos ? raw : raw.substr(0, hash);
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.is_open()) throw IoError("cannot open " + path);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

inline std::vector<NumberedLine> read_content_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in.is_open()) throw IoError("cannot open " + path);
    std::vector<NumberedLine> lines;
    std::string raw;
    long number = 0;
    while (std::getline(in, raw)) lines.push_back({strip_comment(raw), ++number});
    return lines;
}

inline std::vector<std::string> split_ws(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

inline std::vector<std::string> split_csv_row(const std::string& s) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(s);
    while (std::getline(in, field, ',')) out.push_back(strip_comment(field));
    return out;
}

inline double parse_number(const std::string& token, long line) {
    double value = 0.0;
    const char* begin = token.data();
    const char* end = begin + token.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end)
        throw ParseError("expected a number, got '" + token + "'", line, 1);
    return value;
}

inline long long parse_integer(const std::string& token, long line) {
    long long value = 0;
    const char* begin = token.data();
    const char* end = begin + token.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end)
        throw ParseError("expected an integer, got '" + token + "'", line, 1);
    return value;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out.is_open()) throw IoError("cannot write " + path);
    out << content;
    if (!out.good()) throw IoError("write failed for " + path);
}

/// Line/column of a byte offset, for pointing at JSON syntax errors.
inline std::pair<long, long> line_column_at(const std::string& text, std::size_t byte) {
    long line = 1, column = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            column = 1;
        } else {
            ++column;
        }
    }
    return {line, column};
}

} // namespace detail_io

// --- timestamp streams (one arrival time in seconds per line) ---

inline std::vector<double> read_timestamps(const std::string& path) {
    std::vector<double> times;
    for (const auto& line : detail_io::read_content_lines(path)) {
        if (line.text.empty()) continue;
        const auto toks = detail_io::split_ws(line.text);
        if (toks.size() != 1)
            throw ParseError("expected one timestamp per line", line.number, 1);
        const double t = detail_io::parse_number(toks[0], line.number);
        if (t < 0.0) throw ParseError("timestamps must be nonnegative", line.number, 1);
        if (!times.empty() && t <= times.back())
            throw ParseError("timestamps must be strictly increasing", line.number, 1);
        times.push_back(t);
    }
    return times;
}

inline void write_timestamps(const std::string& path, const std::vector<double>& times) {
    std::string out;
    out.reserve(times.size() * 20);
    for (double t : times) {
        out += format_sci(t);
        out += '\n';
    }
    detail_io::write_text_file(path, out);
}

// --- scalar sample streams (one value per line; kappa samples etc.) ---

inline std::vector<double> read_samples(const std::string& path) {
    std::vector<double> values;
    for (const auto& line : detail_io::read_content_lines(path)) {
        if (line.text.empty()) continue;
        const auto toks = detail_io::split_ws(line.text);
        if (toks.size() != 1) throw ParseError("expected one value per line", line.number, 1);
        values.push_back(detail_io::parse_number(toks[0], line.number));
    }
    return values;
}

inline void write_samples(const std::string& path, const std::vector<double>& values) {
    std::string out;
    out.reserve(values.size() * 20);
    for (double v : values) {
        out += format_sci(v);
        out += '\n';
    }
    detail_io::write_text_file(path, out);
}

// --- rate octets (named fields, blank-line-separated groups) ---

struct OctetRecord {
    RateOctet octet;
    double acquisition_time = 1.0; // s
};

inline std::vector<OctetRecord> read_rate_octets(const std::string& path) {
    const auto lines = detail_io::read_content_lines(path);
    std::vector<OctetRecord> records;

    std::map<std::string, double> group;
    long group_last_line = 0;
    auto flush = [&]() {
        if (group.empty()) return;
        OctetRecord rec;
        for (ShutterConfig c : ShutterConfig::all()) {
            const std::string key = "r" + c.label();
            auto it = group.find(key);
            if (it == group.end())
                throw ParseError("octet group is missing field '" + key + "'", group_last_line, 1);
            if (it->second < 0.0)
                throw ParseError("rates must be nonnegative ('" + key + "')", group_last_line, 1);
            rec.octet[c] = it->second;
            group.erase(it);
        }
        if (auto it = group.find("acquisition_time_s"); it != group.end()) {
            if (!(it->second > 0.0))
                throw ParseError("acquisition_time_s must be positive", group_last_line, 1);
            rec.acquisition_time = it->second;
            group.erase(it);
        }
        if (!group.empty())
            throw ParseError("unknown field '" + group.begin()->first + "' in octet group",
                             group_last_line, 1);
        records.push_back(rec);
        group.clear();
    };

    for (const auto& line : lines) {
        if (line.text.empty()) {
            flush();
            continue;
        }
        const auto toks = detail_io::split_ws(line.text);
        if (toks.size() != 2)
            throw ParseError("expected '<field> <value>'", line.number, 1);
        if (group.count(toks[0]))
            throw ParseError("duplicate field '" + toks[0] + "' in octet group", line.number, 1);
        group[toks[0]] = detail_io::parse_number(toks[1], line.number);
        group_last_line = line.number;
    }
    flush();
    return records;
}

inline void write_rate_octets(const std::string& path, const std::vector<OctetRecord>& records) {
    std::string out;
    for (const auto& rec : records) {
        for (ShutterConfig c : ShutterConfig::all())
            out += "r" + c.label() + " " + format_sci(rec.octet[c]) + "\n";
        out += "acquisition_time_s " + format_sci(rec.acquisition_time) + "\n\n";
    }
    detail_io::write_text_file(path, out);
}

// --- superposition measurements (CSV) ---

inline std::vector<SuperpositionMeasurement> read_superposition_csv(const std::string& path) {
    std::vector<SuperpositionMeasurement> rows;
    bool first_content = true;
    for (const auto& line : detail_io::read_content_lines(path)) {
        if (line.text.empty()) continue;
        const auto fields = detail_io::split_csv_row(line.text);
        if (first_content) {
            first_content = false;
            // A header row is any row whose first field is not numeric.
            double probe = 0.0;
            const char* b = fields[0].data();
            auto [p, ec] = std::from_chars(b, b + fields[0].size(), probe);
            if (ec != std::errc() || p != b + fields[0].size()) continue;
        }
        if (fields.size() != 4 && fields.size() != 5)
            throw ParseError("expected 4 or 5 comma-separated values", line.number, 1);
        SuperpositionMeasurement m;
        m.r_both = detail_io::parse_number(fields[0], line.number);
        m.r_only1 = detail_io::parse_number(fields[1], line.number);
        m.r_only2 = detail_io::parse_number(fields[2], line.number);
        m.r_none = detail_io::parse_number(fields[3], line.number);
        if (fields.size() == 5) {
            m.repetitions = detail_io::parse_integer(fields[4], line.number);
            if (m.repetitions < 1)
                throw ParseError("repetitions must be >= 1", line.number, 1);
        }
        rows.push_back(m);
    }
    return rows;
}

inline void write_superposition_csv(const std::string& path,
                                    const std::vector<SuperpositionMeasurement>& rows) {
    std::string out = "r_both,r_only1,r_only2,r_none\n";
    for (const auto& m : rows) {
        out += format_sci(m.r_both) + "," + format_sci(m.r_only1) + "," +
               format_sci(m.r_only2) + "," + format_sci(m.r_none) + "\n";
    }
    detail_io::write_text_file(path, out);
}

// --- reference fixtures (shipped measured constants) ---

struct GratingOrderRow {
    int order = 0; // diffraction order: -1, 0, +1
    double theory_pct = 0.0;
    double experiment_pct = 0.0;
};

struct GratingFixture {
    std::array<GratingOrderRow, 3> orders{}; // stored in order -1, 0, +1
    double overall_theory_pct = 0.0;
    double overall_experiment_pct = 0.0;
    double uniformity_theory_pct = 0.0;
    double uniformity_experiment_pct = 0.0;

    const GratingOrderRow& row(int order) const {
        for (const auto& r : orders)
            if (r.order == order) return r;
        throw DomainError("grating fixture: no such diffraction order");
    }
    /// Per-path intensity efficiencies as fractions (order -1 -> path A, ...).
    SplitterSpec experiment_efficiencies() const {
        return SplitterSpec{row(-1).experiment_pct / 100.0, row(0).experiment_pct / 100.0,
                            row(1).experiment_pct / 100.0};
    }
    SplitterSpec theory_efficiencies() const {
        return SplitterSpec{row(-1).theory_pct / 100.0, row(0).theory_pct / 100.0,
                            row(1).theory_pct / 100.0};
    }
};

inline GratingFixture load_grating_fixture(const std::string& path) {
    GratingFixture fx;
    bool have[3] = {false, false, false};
    bool have_overall = false, have_uniformity = false;
    for (const auto& line : detail_io::read_content_lines(path)) {
        if (line.text.empty()) continue;
        const auto toks = detail_io::split_ws(line.text);
        if (toks.size() != 3)
            throw ParseError("expected '<row> <theory_pct> <experiment_pct>'", line.number, 1);
        const double theory = detail_io::parse_number(toks[1], line.number);
        const double experiment = detail_io::parse_number(toks[2], line.number);
        if (toks[0] == "overall") {
            fx.overall_theory_pct = theory;
            fx.overall_experiment_pct = experiment;
            have_overall = true;
        } else if (toks[0] == "uniformity") {
            fx.uniformity_theory_pct = theory;
            fx.uniformity_experiment_pct = experiment;
            have_uniformity = true;
        } else if (toks[0] == "-1" || toks[0] == "0" || toks[0] == "+1" || toks[0] == "1") {
            const int order = toks[0] == "-1" ? -1 : (toks[0] == "0" ? 0 : 1);
            const std::size_t slot = static_cast<std::size_t>(order + 1);
            if (have[slot]) throw ParseError("duplicate diffraction order row", line.number, 1);
            fx.orders[slot] = GratingOrderRow{order, theory, experiment};
            have[slot] = true;
        } else {
            throw ParseError("unknown row label '" + toks[0] + "'", line.number, 1);
        }
    }
    if (!(have[0] && have[1] && have[2] && have_overall && have_uniformity))
        throw ParseError("grating fixture is missing rows", 0, 0);
    return fx;
}

struct VisibilityRow {
    std::string paths; // "ab", "ac", "bc", "abc"
    double theory_pct = 0.0;
    double experiment_pct = 0.0;
};

struct VisibilityFixture {
    std::vector<VisibilityRow> rows;

    const VisibilityRow& row(const std::string& paths) const {
        for (const auto& r : rows)
            if (r.paths == paths) return r;
        throw DomainError("visibility fixture: no row for '" + paths + "'");
    }
};

inline VisibilityFixture load_visibility_fixture(const std::string& path) {
    VisibilityFixture fx;
    for (const auto& line : detail_io::read_content_lines(path)) {
        if (line.text.empty()) continue;
        const auto toks = detail_io::split_ws(line.text);
        if (toks.size() != 3)
            throw ParseError("expected '<paths> <theory_pct> <experiment_pct>'", line.number, 1);
        if (toks[0] != "ab" && toks[0] != "ac" && toks[0] != "bc" && toks[0] != "abc")
            throw ParseError("unknown path set '" + toks[0] + "'", line.number, 1);
        for (const auto& r : fx.rows)
            if (r.paths == toks[0]) throw ParseError("duplicate path set row", line.number, 1);
        fx.rows.push_back(VisibilityRow{toks[0], detail_io::parse_number(toks[1], line.number),
                                        detail_io::parse_number(toks[2], line.number)});
    }
    if (fx.rows.size() != 4) throw ParseError("visibility fixture must have 4 rows", 0, 0);
    return fx;
}

namespace detail_io {

inline void reject_unknown_keys(const nlohmann::json& obj, const std::vector<const char*>& allowed,
                                const std::string& where) {
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const char* k : allowed)
            if (item.key() == k) {
                known = true;
                break;
            }
        if (!known) throw ParseError("unknown key '" + item.key() + "' in " + where, 0, 0);
    }
}

inline const nlohmann::json& require_key(const nlohmann::json& obj, const char* key,
                                         const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError("missing key '" + std::string(key) + "' in " + where, 0, 0);
    return *it;
}

inline double get_number(const nlohmann::json& obj, const char* key, const std::string& where) {
    const auto& v = require_key(obj, key, where);
    if (!v.is_number()) throw ParseError("'" + std::string(key) + "' in " + where + " must be a number", 0, 0);
    return v.get<double>();
}

inline double get_number_or(const nlohmann::json& obj, const char* key, const std::string& where,
                            double fallback) {
    auto it = obj.find(key);
    if (it == obj.end()) return fallback;
    if (!it->is_number()) throw ParseError("'" + std::string(key) + "' in " + where + " must be a number", 0, 0);
    return it->get<double>();
}

inline long long get_integer(const nlohmann::json& obj, const char* key, const std::string& where,
                             long long fallback, bool required = false) {
    auto it = obj.find(key);
    if (it == obj.end()) {
        if (required) throw ParseError("missing key '" + std::string(key) + "' in " + where, 0, 0);
        return fallback;
    }
    if (!it->is_number_integer())
        throw ParseError("'" + std::string(key) + "' in " + where + " must be an integer", 0, 0);
    return it->get<long long>();
}

inline std::string get_string(const nlohmann::json& obj, const char* key, const std::string& where) {
    const auto& v = require_key(obj, key, where);
    if (!v.is_string()) throw ParseError("'" + std::string(key) + "' in " + where + " must be a string", 0, 0);
    return v.get<std::string>();
}

inline bool get_bool_or(const nlohmann::json& obj, const char* key, const std::string& where,
                        bool fallback) {
    auto it = obj.find(key);
    if (it == obj.end()) return fallback;
    if (!it->is_boolean())
        throw ParseError("'" + std::string(key) + "' in " + where + " must be a boolean", 0, 0);
    return it->get<bool>();
}

} // namespace detail_io

struct DetectorReference {
    double superposition_tau_mean_ns = 0.0;
    double superposition_tau_std_ns = 0.0;
    long long superposition_repetitions = 0;
    double tau_intercept_ns = 0.0;
    double tau_slope_fs_per_cps = 0.0;
    double efficiency_at_532_nm = 0.0;
    double efficiency_at_561_nm = 0.0;
    double g2_zero = 0.0;
    double kappa_mean = 0.0;
    double kappa_std = 0.0;
    long long kappa_runs = 0;

    DeadtimeModel rate_dependent_model(double dark_rate = 0.0, double efficiency = 1.0) const {
        return DeadtimeModel::linear_in_rate(tau_intercept_ns * 1e-9, tau_slope_fs_per_cps * 1e-15,
                                             dark_rate, efficiency);
    }
    DeadtimeModel constant_model(double dark_rate = 0.0, double efficiency = 1.0) const {
        return DeadtimeModel::constant(superposition_tau_mean_ns * 1e-9, dark_rate, efficiency);
    }
};

inline DetectorReference load_detector_reference(const std::string& path) {
    using nlohmann::json;
    const std::string text = detail_io::read_file(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        const auto [line, column] = detail_io::line_column_at(text, e.byte);
        throw ParseError(std::string("invalid JSON: ") + e.what(), line, column);
    }
    detail_io::reject_unknown_keys(
        j, {"superposition_tau", "tau_vs_rate", "efficiency", "g2_zero", "reference_kappa"}, path);

    DetectorReference ref;
    {
        const auto& s = detail_io::require_key(j, "superposition_tau", path);
        detail_io::reject_unknown_keys(s, {"mean_ns", "std_ns", "repetitions"}, "superposition_tau");
        ref.superposition_tau_mean_ns = detail_io::get_number(s, "mean_ns", "superposition_tau");
        ref.superposition_tau_std_ns = detail_io::get_number(s, "std_ns", "superposition_tau");
        ref.superposition_repetitions = detail_io::get_integer(s, "repetitions", "superposition_tau", 0, true);
    }
    {
        const auto& s = detail_io::require_key(j, "tau_vs_rate", path);
        detail_io::reject_unknown_keys(s, {"intercept_ns", "slope_fs_per_cps"}, "tau_vs_rate");
        ref.tau_intercept_ns = detail_io::get_number(s, "intercept_ns", "tau_vs_rate");
        ref.tau_slope_fs_per_cps = detail_io::get_number(s, "slope_fs_per_cps", "tau_vs_rate");
    }
    {
        const auto& s = detail_io::require_key(j, "efficiency", path);
        detail_io::reject_unknown_keys(s, {"at_532_nm", "at_561_nm"}, "efficiency");
        ref.efficiency_at_532_nm = detail_io::get_number(s, "at_532_nm", "efficiency");
        ref.efficiency_at_561_nm = detail_io::get_number(s, "at_561_nm", "efficiency");
    }
    ref.g2_zero = detail_io::get_number(j, "g2_zero", path);
    {
        const auto& s = detail_io::require_key(j, "reference_kappa", path);
        detail_io::reject_unknown_keys(s, {"mean", "std", "runs"}, "reference_kappa");
        ref.kappa_mean = detail_io::get_number(s, "mean", "reference_kappa");
        ref.kappa_std = detail_io::get_number(s, "std", "reference_kappa");
        ref.kappa_runs = detail_io::get_integer(s, "runs", "reference_kappa", 0, true);
    }
    return ref;
}

/// Everything shipped under data/: grating splitting ratios, the visibility
/// table they imply, and the detector reference constants.
struct ReferenceFixtures {
    GratingFixture grating;
    VisibilityFixture visibilities;
    DetectorReference detector;
};

inline ReferenceFixtures load_reference_fixtures(const std::string& dir) {
    ReferenceFixtures fx;
    fx.grating = load_grating_fixture(dir + "/grating_orders.txt");
    fx.visibilities = load_visibility_fixture(dir + "/visibilities.txt");
    fx.detector = load_detector_reference(dir + "/detector_reference.json");
    return fx;
}

// --- experiment configuration files ---

enum class CampaignMode { MonteCarlo, CorrectionSweep, RateDependentSweep };

inline std::string to_string(CampaignMode m) {
    switch (m) {
    case CampaignMode::MonteCarlo: return "monte_carlo";
    case CampaignMode::CorrectionSweep: return "correction_sweep";
    case CampaignMode::RateDependentSweep: return "rate_dependent_sweep";
    }
    return "monte_carlo";
}

struct OutputSpec {
    std::string prefix = "result";
    std::string format = "csv"; // "csv" or "json"
};

struct ExperimentConfig {
    CampaignMode mode = CampaignMode::MonteCarlo;
    std::optional<SourceModel> source; // required for monte_carlo
    DeadtimeModel detector_true;
    std::optional<DeadtimeModel> detector_assumed;
    std::array<double, 3> path_amplitudes{1.0, 1.0, 1.0};
    std::vector<double> rate_grid;

    // monte_carlo
    long long runs = 10000;
    double acquisition_time = 1.0;
    std::uint64_t seed = 0;
    bool retain_samples = false;

    // correction_sweep
    std::vector<double> assumed_taus;

    // rate_dependent_sweep
    double assumed_constant_tau = 0.0;

    OutputSpec output;

    CampaignConfig monte_carlo_config() const {
        if (mode != CampaignMode::MonteCarlo)
            throw DomainError("config mode is not monte_carlo");
        CampaignConfig c;
        c.source = *source;
        c.true_detector = detector_true;
        c.assumed_detector = detector_assumed;
        c.path_amplitudes = path_amplitudes;
        c.acquisition_time = acquisition_time;
        c.runs = runs;
        c.seed = seed;
        c.rate_grid = rate_grid;
        c.retain_samples = retain_samples;
        return c;
    }
};

namespace detail_io {

inline SourceModel parse_source(const nlohmann::json& j) {
    const std::string kind = get_string(j, "kind", "source");
    if (kind == "coherent") {
        reject_unknown_keys(j, {"kind", "mean_rate_cps"}, "source");
        return SourceModel::coherent(get_number_or(j, "mean_rate_cps", "source", 1.0));
    }
    if (kind == "ideal_sps") {
        reject_unknown_keys(j, {"kind", "pulse_period_s", "emission_probability"}, "source");
        return SourceModel::ideal_sps(get_number(j, "pulse_period_s", "source"),
                                      get_number_or(j, "emission_probability", "source", 1.0));
    }
    if (kind == "contaminated_sps") {
        reject_unknown_keys(j, {"kind", "pulse_period_s", "emission_probability", "g2_zero"},
                            "source");
        return SourceModel::contaminated_sps(get_number(j, "pulse_period_s", "source"),
                                             get_number_or(j, "emission_probability", "source", 1.0),
                                             get_number(j, "g2_zero", "source"));
    }
    throw ParseError("source kind must be coherent, ideal_sps or contaminated_sps", 0, 0);
}

inline DeadtimeModel parse_detector(const nlohmann::json& j, const std::string& where) {
    const std::string kind = get_string(j, "kind", where);
    if (kind == "constant") {
        reject_unknown_keys(j, {"kind", "tau_s", "dark_rate_cps", "efficiency"}, where);
        return DeadtimeModel::constant(get_number(j, "tau_s", where),
                                       get_number_or(j, "dark_rate_cps", where, 0.0),
                                       get_number_or(j, "efficiency", where, 1.0));
    }
    if (kind == "linear_in_rate") {
        reject_unknown_keys(j, {"kind", "tau0_s", "slope_s_per_cps", "dark_rate_cps", "efficiency"},
                            where);
        return DeadtimeModel::linear_in_rate(get_number(j, "tau0_s", where),
                                             get_number(j, "slope_s_per_cps", where),
                                             get_number_or(j, "dark_rate_cps", where, 0.0),
                                             get_number_or(j, "efficiency", where, 1.0));
    }
    throw ParseError(where + " kind must be constant or linear_in_rate", 0, 0);
}

inline nlohmann::json source_to_json(const SourceModel& s) {
    nlohmann::json j;
    switch (s.kind) {
    case SourceKind::Coherent:
        j["kind"] = "coherent";
        j["mean_rate_cps"] = s.mean_rate;
        break;
    case SourceKind::IdealSps:
        j["kind"] = "ideal_sps";
        j["pulse_period_s"] = s.pulse_period;
        j["emission_probability"] = s.emission_probability;
        break;
    case SourceKind::ContaminatedSps:
        j["kind"] = "contaminated_sps";
        j["pulse_period_s"] = s.pulse_period;
        j["emission_probability"] = s.emission_probability;
        j["g2_zero"] = s.g2_zero;
        break;
    }
    return j;
}

inline nlohmann::json detector_to_json(const DeadtimeModel& d) {
    nlohmann::json j;
    if (d.kind == DeadtimeKind::Constant) {
        j["kind"] = "constant";
        j["tau_s"] = d.tau0;
    } else {
        j["kind"] = "linear_in_rate";
        j["tau0_s"] = d.tau0;
        j["slope_s_per_cps"] = d.slope;
    }
    j["dark_rate_cps"] = d.dark_rate;
    j["efficiency"] = d.efficiency;
    return j;
}

} // namespace detail_io

/// Explicit rate grid from a {min, max, points, spacing} description.
inline std::vector<double> make_rate_grid(double min_rate, double max_rate, long long points,
                                          bool log_spacing) {
    if (!(min_rate > 0.0)) throw DomainError("rate grid: min must be positive");
    if (points < 1) throw DomainError("rate grid: need at least one point");
    if (points == 1) {
        if (min_rate != max_rate) throw DomainError("rate grid: one point requires min == max");
        return {min_rate};
    }
    if (!(max_rate > min_rate)) throw DomainError("rate grid: max must exceed min");
    std::vector<double> grid(static_cast<std::size_t>(points));
    for (long long i = 0; i < points; ++i) {
        const double f = static_cast<double>(i) / static_cast<double>(points - 1);
        grid[static_cast<std::size_t>(i)] =
            log_spacing ? min_rate * std::pow(max_rate / min_rate, f)
                        : min_rate + f * (max_rate - min_rate);
    }
    grid.back() = max_rate; // pin the endpoint against pow() rounding
    return grid;
}

inline ExperimentConfig parse_experiment_config(const std::string& text) {
    using nlohmann::json;
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        const auto [line, column] = detail_io::line_column_at(text, e.byte);
        throw ParseError(std::string("invalid JSON: ") + e.what(), line, column);
    }
    if (!j.is_object()) throw ParseError("config root must be an object", 1, 1);
    detail_io::reject_unknown_keys(
        j, {"source", "detector_true", "detector_assumed", "interferometer", "campaign", "output"},
        "config");

    ExperimentConfig cfg;

    if (auto it = j.find("source"); it != j.end()) cfg.source = detail_io::parse_source(*it);
    cfg.detector_true = detail_io::parse_detector(detail_io::require_key(j, "detector_true", "config"),
                                                  "detector_true");
    if (auto it = j.find("detector_assumed"); it != j.end())
        cfg.detector_assumed = detail_io::parse_detector(*it, "detector_assumed");

    if (auto it = j.find("interferometer"); it != j.end()) {
        const auto& s = *it;
        detail_io::reject_unknown_keys(s, {"path_amplitudes", "efficiency_fixture"}, "interferometer");
        const bool has_amps = s.contains("path_amplitudes");
        const bool has_fixture = s.contains("efficiency_fixture");
        if (has_amps && has_fixture)
            throw ParseError("interferometer: give path_amplitudes or efficiency_fixture, not both",
                             0, 0);
        if (has_amps) {
            const auto& a = s["path_amplitudes"];
            if (!a.is_array() || a.size() != 3)
                throw ParseError("path_amplitudes must be an array of 3 numbers", 0, 0);
            for (std::size_t i = 0; i < 3; ++i) {
                if (!a[i].is_number())
                    throw ParseError("path_amplitudes must be an array of 3 numbers", 0, 0);
                cfg.path_amplitudes[i] = a[i].get<double>();
            }
        } else if (has_fixture) {
            const auto fx = load_grating_fixture(detail_io::get_string(s, "efficiency_fixture",
                                                                       "interferometer"));
            const auto eff = fx.experiment_efficiencies().path_efficiencies();
            cfg.path_amplitudes = eff; // double-pass convention: amplitude tracks intensity efficiency
        }
    }

    {
        const auto& c = detail_io::require_key(j, "campaign", "config");
        const std::string mode = detail_io::get_string(c, "mode", "campaign");
        std::vector<const char*> allowed;
        if (mode == "monte_carlo") {
            cfg.mode = CampaignMode::MonteCarlo;
            allowed = {"mode", "rate_grid_cps", "rate_grid", "runs", "acquisition_time_s", "seed",
                       "retain_samples"};
        } else if (mode == "correction_sweep") {
            cfg.mode = CampaignMode::CorrectionSweep;
            allowed = {"mode", "rate_grid_cps", "rate_grid", "assumed_taus_s"};
        } else if (mode == "rate_dependent_sweep") {
            cfg.mode = CampaignMode::RateDependentSweep;
            allowed = {"mode", "rate_grid_cps", "rate_grid", "assumed_constant_tau_s"};
        } else {
            throw ParseError(
                "campaign mode must be monte_carlo, correction_sweep or rate_dependent_sweep", 0, 0);
        }
        detail_io::reject_unknown_keys(c, allowed, "campaign");

        const bool has_list = c.contains("rate_grid_cps");
        const bool has_range = c.contains("rate_grid");
        if (has_list == has_range)
            throw ParseError("campaign: give exactly one of rate_grid_cps or rate_grid", 0, 0);
        if (has_list) {
            const auto& g = c["rate_grid_cps"];
            if (!g.is_array() || g.empty())
                throw ParseError("rate_grid_cps must be a nonempty array of numbers", 0, 0);
            for (const auto& v : g) {
                if (!v.is_number())
                    throw ParseError("rate_grid_cps must be a nonempty array of numbers", 0, 0);
                cfg.rate_grid.push_back(v.get<double>());
            }
        } else {
            const auto& g = c["rate_grid"];
            detail_io::reject_unknown_keys(g, {"min_cps", "max_cps", "points", "spacing"},
                                           "rate_grid");
            std::string spacing = "log";
            if (g.contains("spacing")) spacing = detail_io::get_string(g, "spacing", "rate_grid");
            if (spacing != "log" && spacing != "linear")
                throw ParseError("rate_grid spacing must be log or linear", 0, 0);
            cfg.rate_grid = make_rate_grid(detail_io::get_number(g, "min_cps", "rate_grid"),
                                           detail_io::get_number(g, "max_cps", "rate_grid"),
                                           detail_io::get_integer(g, "points", "rate_grid", 0, true),
                                           spacing == "log");
        }

        if (cfg.mode == CampaignMode::MonteCarlo) {
            if (!cfg.source)
                throw ParseError("campaign mode monte_carlo requires a source section", 0, 0);
            cfg.runs = detail_io::get_integer(c, "runs", "campaign", 10000);
            cfg.acquisition_time = detail_io::get_number_or(c, "acquisition_time_s", "campaign", 1.0);
            const long long seed = detail_io::get_integer(c, "seed", "campaign", 0);
            if (seed < 0) throw ParseError("seed must be nonnegative", 0, 0);
            cfg.seed = static_cast<std::uint64_t>(seed);
            cfg.retain_samples = detail_io::get_bool_or(c, "retain_samples", "campaign", false);
        } else if (cfg.mode == CampaignMode::CorrectionSweep) {
            if (cfg.detector_true.kind != DeadtimeKind::Constant)
                throw DomainError("correction_sweep requires a constant true detector");
            const auto& taus = detail_io::require_key(c, "assumed_taus_s", "campaign");
            if (!taus.is_array() || taus.empty())
                throw ParseError("assumed_taus_s must be a nonempty array of numbers", 0, 0);
            for (const auto& v : taus) {
                if (!v.is_number())
                    throw ParseError("assumed_taus_s must be a nonempty array of numbers", 0, 0);
                cfg.assumed_taus.push_back(v.get<double>());
            }
        } else {
            if (cfg.detector_true.kind != DeadtimeKind::LinearInRate)
                throw DomainError("rate_dependent_sweep requires a linear_in_rate true detector");
            cfg.assumed_constant_tau = detail_io::get_number(c, "assumed_constant_tau_s", "campaign");
        }
    }

    if (auto it = j.find("output"); it != j.end()) {
        detail_io::reject_unknown_keys(*it, {"prefix", "format"}, "output");
        if (it->contains("prefix")) cfg.output.prefix = detail_io::get_string(*it, "prefix", "output");
        if (it->contains("format")) cfg.output.format = detail_io::get_string(*it, "format", "output");
        if (cfg.output.format != "csv" && cfg.output.format != "json")
            throw ParseError("output format must be csv or json", 0, 0);
        if (cfg.output.prefix.empty()) throw ParseError("output prefix must be nonempty", 0, 0);
    }

    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    return parse_experiment_config(detail_io::read_file(path));
}

inline nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg) {
    using nlohmann::json;
    json j;
    if (cfg.source) j["source"] = detail_io::source_to_json(*cfg.source);
    j["detector_true"] = detail_io::detector_to_json(cfg.detector_true);
    if (cfg.detector_assumed)
        j["detector_assumed"] = detail_io::detector_to_json(*cfg.detector_assumed);
    j["interferometer"]["path_amplitudes"] = cfg.path_amplitudes;
    json c;
    c["mode"] = to_string(cfg.mode);
    c["rate_grid_cps"] = cfg.rate_grid;
    switch (cfg.mode) {
    case CampaignMode::MonteCarlo:
        c["runs"] = cfg.runs;
        c["acquisition_time_s"] = cfg.acquisition_time;
        c["seed"] = cfg.seed;
        c["retain_samples"] = cfg.retain_samples;
        break;
    case CampaignMode::CorrectionSweep:
        c["assumed_taus_s"] = cfg.assumed_taus;
        break;
    case CampaignMode::RateDependentSweep:
        c["assumed_constant_tau_s"] = cfg.assumed_constant_tau;
        break;
    }
    j["campaign"] = c;
    j["output"]["prefix"] = cfg.output.prefix;
    j["output"]["format"] = cfg.output.format;
    return j;
}

inline std::string serialize_experiment_config(const ExperimentConfig& cfg) {
    return experiment_config_to_json(cfg).dump(2) + "\n";
}

inline bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
    return experiment_config_to_json(a) == experiment_config_to_json(b);
}

// --- result emission ---

inline std::string campaign_csv(const CampaignResult& result) {
    std::string out = "rate_hz,mean_kappa,std_kappa,mean_eps,mean_delta,n_undefined\n";
    for (const auto& s : result.per_rate) {
        if (!s.error.empty()) continue;
        out += format_sci(s.rate) + "," + format_sci(s.mean_kappa) + "," + format_sci(s.std_kappa) +
               "," + format_sci(s.mean_epsilon) + "," + format_sci(s.mean_delta) + "," +
               std::to_string(s.n_undefined) + "\n";
    }
    return out;
}

inline nlohmann::json campaign_rows_json(const CampaignResult& result) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& s : result.per_rate) {
        nlohmann::json row;
        row["rate_hz"] = s.rate;
        if (s.error.empty()) {
            row["mean_kappa"] = s.mean_kappa;
            row["std_kappa"] = s.std_kappa;
            row["mean_eps"] = s.mean_epsilon;
            row["mean_delta"] = s.mean_delta;
            row["max_abs_kappa"] = s.max_abs_kappa;
            row["n_runs"] = s.n_runs;
            row["n_undefined"] = s.n_undefined;
        } else {
            row["error"] = s.error;
        }
        rows.push_back(row);
    }
    return rows;
}

inline std::string correction_sweep_csv(const CorrectionSweep& sweep) {
    std::string out = "rate_hz";
    for (double tau : sweep.assumed_taus) out += ",kappa[assumed_tau_s=" + format_sci(tau) + "]";
    out += "\n";
    for (std::size_t i = 0; i < sweep.rates.size(); ++i) {
        out += format_sci(sweep.rates[i]);
        for (double k : sweep.kappas[i]) out += "," + format_sci(k);
        out += "\n";
    }
    return out;
}

inline std::string rate_dependent_sweep_csv(const RateDependentSweep& sweep) {
    std::string out = "rate_hz,kappa_matched,kappa_constant\n";
    for (std::size_t i = 0; i < sweep.rates.size(); ++i) {
        out += format_sci(sweep.rates[i]) + "," + format_sci(sweep.kappa_matched[i]) + "," +
               format_sci(sweep.kappa_constant[i]) + "\n";
    }
    return out;
}

/// Metadata sidecar common to every simulate invocation. Deliberately free of
/// wall-clock data so identical inputs give byte-identical files.
inline nlohmann::json result_metadata(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["program"] = program_name;
    j["version"] = version_string;
    j["mode"] = to_string(cfg.mode);
    if (cfg.mode == CampaignMode::MonteCarlo) j["seed"] = cfg.seed;
    j["config"] = experiment_config_to_json(cfg);
    return j;
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
    detail_io::write_text_file(path, j.dump(2) + "\n");
}

} // namespace kappasim
