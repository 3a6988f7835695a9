#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "kappasim/errors.hpp"
#include "kappasim/rng.hpp"
#include "kappasim/sorkin.hpp"
#include "kappasim/sources.hpp"
#include "kappasim/spad.hpp"
#include "kappasim/stats.hpp"

namespace kappasim {

/// Monte Carlo campaign over a grid of incident photon rates. Per run the
/// exact per-configuration rates are computed from the interferometer model,
/// source noise is drawn, the noisy rates pass through the true detector's
/// steady-state response, and (optionally) the assumed detector's correction
/// is applied before kappa is evaluated.
struct CampaignConfig {
    SourceModel source;
    DeadtimeModel true_detector;
    std::optional<DeadtimeModel> assumed_detector; // correction applied when present
    std::array<double, 3> path_amplitudes{1.0, 1.0, 1.0};
    double acquisition_time = 1.0; // s per configuration
    long long runs = 10000;
    std::uint64_t seed = 0;
    std::vector<double> rate_grid; // incident photon rates, counts/s
    bool retain_samples = false;

    void validate() const {
        source.validate();
        true_detector.validate();
        if (assumed_detector) assumed_detector->validate();
        for (double a : path_amplitudes) {
            if (!(a >= 0.0) || !std::isfinite(a))
                throw DomainError("CampaignConfig: amplitudes must be nonnegative");
        }
        if (!(acquisition_time > 0.0)) throw DomainError("CampaignConfig: acquisition time must be positive");
        if (runs < 1) throw DomainError("CampaignConfig: need at least one run");
        if (rate_grid.empty()) throw DomainError("CampaignConfig: rate grid is empty");
        for (double r : rate_grid) {
            if (!(r > 0.0) || !std::isfinite(r)) throw DomainError("CampaignConfig: rates must be positive");
        }
    }
};

/// Aggregated kappa statistics at one grid rate. `error` is set (and the
/// statistics left empty) when this rate could not be simulated at all;
/// undefined-kappa runs (delta == 0) are counted and excluded from moments.
struct RateStats {
    double rate = 0.0;
    long long n_runs = 0; // runs with a defined kappa
    long long n_undefined = 0;
    double mean_kappa = 0.0;
    double std_kappa = 0.0;
    double mean_epsilon = 0.0;
    double mean_delta = 0.0;
    double max_abs_kappa = 0.0;
    std::string error;
    std::vector<KappaSample> samples; // filled when CampaignConfig::retain_samples
};

struct CampaignResult {
    CampaignConfig config;
    std::vector<RateStats> per_rate;
};

namespace detail_campaign {

/// Per-configuration intensity transmission of the interferometer at the
/// constructive working point (all-open = 1).
inline std::array<double, 8> config_transmissions(const std::array<double, 3>& amplitudes) {
    std::array<double, 8> p{};
    for (ShutterConfig c : ShutterConfig::all())
        p[static_cast<std::size_t>(c.index())] = interferometer_rate(c, amplitudes, 1.0, 0.0);
    return p;
}

struct RunDraw {
    RateOctet octet;
    std::array<ShutterConfig, 8> order;
};

} // namespace detail_campaign

inline CampaignResult run_campaign(const CampaignConfig& config) {
    config.validate();
    const std::array<double, 8> trans = detail_campaign::config_transmissions(config.path_amplitudes);
    const double T = config.acquisition_time;

    CampaignResult result;
    result.config = config;
    result.per_rate.reserve(config.rate_grid.size());

    for (std::size_t rate_i = 0; rate_i < config.rate_grid.size(); ++rate_i) {
        const double rate = config.rate_grid[rate_i];
        RateStats stats;
        stats.rate = rate;
        try {
            const bool pulsed = config.source.kind != SourceKind::Coherent;
            PulseNumberProbs pulse_probs;
            long long n_pulses = 0;
            if (pulsed) {
                // The grid rate is the emitted photon rate, so the per-pulse
                // mean photon number is rate * period.
                const double mu = rate * config.source.pulse_period;
                if (config.source.kind == SourceKind::IdealSps) {
                    if (mu > 1.0 + 1e-12)
                        throw ValidityError("campaign: rate exceeds one photon per pulse period");
                    pulse_probs = PulseNumberProbs{1.0 - mu, mu, 0.0};
                } else {
                    const double g = config.source.g2_zero;
                    const double p2 = 0.5 * g * mu * mu;
                    const double p1 = mu - 2.0 * p2;
                    if (p1 < 0.0 || p1 + p2 > 1.0)
                        throw ValidityError("campaign: rate unreachable for this g2 and pulse period");
                    pulse_probs = PulseNumberProbs{1.0 - p1 - p2, p1, p2};
                }
                // A pulsed train with period > tau never hits a dead window,
                // so the detector responds linearly; the Poissonian
                // steady-state formula would be wrong here.
                if (config.source.pulse_period <= config.true_detector.tau0)
                    throw ValidityError("campaign: pulse period within the detector deadtime");
                n_pulses = detail_sources::pulses_in(T, config.source.pulse_period);
            }

            double sum_kappa = 0.0, sum_kappa2 = 0.0, sum_eps = 0.0, sum_delta = 0.0;
            for (long long run = 0; run < config.runs; ++run) {
                KappaSample sample;
                sample.acquisition_time = T;
                sample.config_order =
                    randomized_config_order(derive_seed(config.seed, {0x6f72646572ULL, rate_i, static_cast<std::uint64_t>(run)}));

                RateOctet octet;
                for (ShutterConfig c : sample.config_order) {
                    const auto ci = static_cast<std::size_t>(c.index());
                    const double p_c = trans[ci];
                    const std::uint64_t draw_seed =
                        derive_seed(config.seed, {0x647261ULL, rate_i, static_cast<std::uint64_t>(run), ci});
                    double value = 0.0;
                    switch (config.source.kind) {
                    case SourceKind::Coherent: {
                        const double mean = rate * p_c * T;
                        long long counts = 0;
                        if (mean > 0.0) {
                            CounterRng rng(draw_seed);
                            std::poisson_distribution<long long> poisson(mean);
                            counts = poisson(rng);
                        }
                        const double measured = static_cast<double>(counts) / T;
                        value = detected_rate(measured, config.true_detector);
                        break;
                    }
                    case SourceKind::IdealSps: {
                        // Deterministic source: matched-configuration ensemble
                        // average, linear detector response (period > tau).
                        value = config.true_detector.efficiency * rate * p_c +
                                config.true_detector.dark_rate;
                        break;
                    }
                    case SourceKind::ContaminatedSps: {
                        // Per-pulse detection: a two-photon pulse can trigger
                        // at most one count, because the pair arrives within
                        // one dead window.
                        const double s = p_c * config.true_detector.efficiency;
                        const double q = pulse_probs.p1 * s +
                                         pulse_probs.p2 * (1.0 - (1.0 - s) * (1.0 - s));
                        long long counts = 0;
                        if (n_pulses > 0 && q > 0.0) {
                            CounterRng rng(draw_seed);
                            std::binomial_distribution<long long> bin(n_pulses, q);
                            counts = bin(rng);
                        }
                        value = static_cast<double>(counts) / T + config.true_detector.dark_rate;
                        break;
                    }
                    }
                    if (config.assumed_detector) value = correct_rate(value, *config.assumed_detector);
                    octet[c] = value;
                }

                sample.epsilon = epsilon(octet);
                sample.delta = delta(octet);
                if (sample.delta == 0.0) {
                    sample.defined = false;
                    ++stats.n_undefined;
                } else {
                    sample.kappa = sample.epsilon / sample.delta;
                    ++stats.n_runs;
                    sum_kappa += sample.kappa;
                    sum_kappa2 += sample.kappa * sample.kappa;
                    sum_eps += sample.epsilon;
                    sum_delta += sample.delta;
                    stats.max_abs_kappa = std::max(stats.max_abs_kappa, std::abs(sample.kappa));
                }
                if (config.retain_samples) stats.samples.push_back(sample);
            }

            if (stats.n_runs > 0) {
                const auto n = static_cast<double>(stats.n_runs);
                stats.mean_kappa = sum_kappa / n;
                stats.mean_epsilon = sum_eps / n;
                stats.mean_delta = sum_delta / n;
                if (stats.n_runs > 1) {
                    const double var = (sum_kappa2 - n * stats.mean_kappa * stats.mean_kappa) /
                                       (n - 1.0);
                    stats.std_kappa = std::sqrt(std::max(var, 0.0));
                }
            }
        } catch (const Error& e) {
            stats = RateStats{};
            stats.rate = rate;
            stats.error = e.what();
        }
        result.per_rate.push_back(std::move(stats));
    }
    return result;
}

/// Options shared by the deterministic sweeps.
struct SweepOptions {
    std::array<double, 3> path_amplitudes{1.0, 1.0, 1.0};
    double dark_rate = 0.0;
    double efficiency = 1.0;
};

namespace detail_campaign {

/// Noise-free kappa of the detected (optionally corrected) octet at one rate.
inline double deterministic_kappa(double rate, const std::array<double, 8>& trans,
                                  const DeadtimeModel& true_detector,
                                  const std::optional<DeadtimeModel>& assumed_detector) {
    RateOctet octet;
    for (ShutterConfig c : ShutterConfig::all()) {
        const double actual = rate * trans[static_cast<std::size_t>(c.index())];
        double value = detected_rate(actual, true_detector);
        if (assumed_detector) value = correct_rate(value, *assumed_detector);
        octet[c] = value;
    }
    return kappa(octet);
}

} // namespace detail_campaign

/// Deterministic miscorrection sweep: the true detector has constant deadtime
/// `true_tau`; each column corrects with one assumed deadtime instead.
struct CorrectionSweep {
    double true_tau = 0.0;
    std::vector<double> assumed_taus;
    std::vector<double> rates;                 // rates actually evaluated
    std::vector<std::vector<double>> kappas;   // kappas[rate][assumed_tau]
    std::vector<std::string> warnings;         // grid truncation reasons
};

inline CorrectionSweep sweep_corrected_kappa(double true_tau, const std::vector<double>& assumed_taus,
                                             const std::vector<double>& rate_grid,
                                             const SweepOptions& opts = {}) {
    if (assumed_taus.empty()) throw DomainError("sweep_corrected_kappa: no assumed deadtimes");
    if (rate_grid.empty()) throw DomainError("sweep_corrected_kappa: empty rate grid");
    const DeadtimeModel true_det = DeadtimeModel::constant(true_tau, opts.dark_rate, opts.efficiency);
    std::vector<DeadtimeModel> assumed;
    assumed.reserve(assumed_taus.size());
    for (double tau : assumed_taus)
        assumed.push_back(DeadtimeModel::constant(tau, opts.dark_rate, opts.efficiency));
    const std::array<double, 8> trans = detail_campaign::config_transmissions(opts.path_amplitudes);

    CorrectionSweep sweep;
    sweep.true_tau = true_tau;
    sweep.assumed_taus = assumed_taus;
    for (double rate : rate_grid) {
        std::vector<double> row;
        row.reserve(assumed.size());
        try {
            for (const DeadtimeModel& a : assumed)
                row.push_back(detail_campaign::deterministic_kappa(rate, trans, true_det, a));
        } catch (const Error& e) {
            sweep.warnings.push_back("grid truncated at " + std::to_string(rate) + " /s: " + e.what());
            break;
        }
        sweep.rates.push_back(rate);
        sweep.kappas.push_back(std::move(row));
    }
    return sweep;
}

/// Deterministic sweep of a rate-dependent true detector corrected either
/// with the matched model or with a constant deadtime. Zero crossings of the
/// constant-corrected curve are located by bisection between grid points.
struct RateDependentSweep {
    double assumed_constant_tau = 0.0;
    std::vector<double> rates;
    std::vector<double> kappa_matched;
    std::vector<double> kappa_constant;
    std::vector<double> zero_crossings;
    std::vector<std::string> warnings;
};

inline RateDependentSweep sweep_rate_dependent(const DeadtimeModel& true_model,
                                               double assumed_constant_tau,
                                               const std::vector<double>& rate_grid,
                                               const SweepOptions& opts = {}) {
    if (true_model.kind != DeadtimeKind::LinearInRate)
        throw DomainError("sweep_rate_dependent: true model must be rate dependent");
    true_model.validate();
    if (rate_grid.empty()) throw DomainError("sweep_rate_dependent: empty rate grid");
    const DeadtimeModel assumed =
        DeadtimeModel::constant(assumed_constant_tau, true_model.dark_rate, true_model.efficiency);
    const std::array<double, 8> trans = detail_campaign::config_transmissions(opts.path_amplitudes);

    RateDependentSweep sweep;
    sweep.assumed_constant_tau = assumed_constant_tau;
    auto kappa_const_at = [&](double rate) {
        return detail_campaign::deterministic_kappa(rate, trans, true_model, assumed);
    };
    for (double rate : rate_grid) {
        try {
            const double km = detail_campaign::deterministic_kappa(rate, trans, true_model, true_model);
            const double kc = kappa_const_at(rate);
            sweep.rates.push_back(rate);
            sweep.kappa_matched.push_back(km);
            sweep.kappa_constant.push_back(kc);
        } catch (const Error& e) {
            sweep.warnings.push_back("grid truncated at " + std::to_string(rate) + " /s: " + e.what());
            break;
        }
    }
    for (std::size_t i = 1; i < sweep.rates.size(); ++i) {
        const double a = sweep.kappa_constant[i - 1];
        const double b = sweep.kappa_constant[i];
        if (a == 0.0) continue;
        if ((a < 0.0 && b >= 0.0) || (a > 0.0 && b <= 0.0)) {
            double lo = sweep.rates[i - 1], hi = sweep.rates[i];
            double flo = a;
            for (int it = 0; it < 200 && (hi - lo) > 1e-9 * hi; ++it) {
                const double mid = 0.5 * (lo + hi);
                const double fmid = kappa_const_at(mid);
                if ((flo < 0.0) == (fmid < 0.0)) {
                    lo = mid;
                    flo = fmid;
                } else {
                    hi = mid;
                }
            }
            sweep.zero_crossings.push_back(0.5 * (lo + hi));
        }
    }
    return sweep;
}

/// Shot-noise bias study at a fixed incident rate: Poisson-only octet draws
/// (no detector nonlinearity), conditional delta statistics by the sign of
/// epsilon, and the resulting mean kappa.
struct BiasStudy {
    double rate = 0.0;
    long long runs = 0;
    long long n_defined = 0;
    long long n_undefined = 0;
    long long n_eps_neg = 0;
    long long n_eps_pos = 0;
    double mean_epsilon = 0.0;
    double mean_delta = 0.0;
    double mean_kappa = 0.0;
    double mean_delta_eps_neg = 0.0; // mean delta over runs with epsilon < 0
    double mean_delta_eps_pos = 0.0; // mean delta over runs with epsilon > 0
};

inline BiasStudy bias_study(double rate, long long runs, std::uint64_t seed,
                            double acquisition_time = 1.0,
                            const std::array<double, 3>& path_amplitudes = {1.0, 1.0, 1.0}) {
    if (!(rate > 0.0)) throw DomainError("bias_study: rate must be positive");
    if (runs < 1) throw DomainError("bias_study: need at least one run");
    if (!(acquisition_time > 0.0)) throw DomainError("bias_study: acquisition time must be positive");
    const std::array<double, 8> trans = detail_campaign::config_transmissions(path_amplitudes);

    BiasStudy study;
    study.rate = rate;
    study.runs = runs;
    double sum_eps = 0.0, sum_delta = 0.0, sum_kappa = 0.0;
    double sum_delta_neg = 0.0, sum_delta_pos = 0.0;
    for (long long run = 0; run < runs; ++run) {
        RateOctet octet;
        for (ShutterConfig c : ShutterConfig::all()) {
            const auto ci = static_cast<std::size_t>(c.index());
            const double mean = rate * trans[ci] * acquisition_time;
            long long counts = 0;
            if (mean > 0.0) {
                CounterRng rng(derive_seed(seed, {0x62696173ULL, static_cast<std::uint64_t>(run), ci}));
                std::poisson_distribution<long long> poisson(mean);
                counts = poisson(rng);
            }
            octet[c] = static_cast<double>(counts) / acquisition_time;
        }
        const double eps = epsilon(octet);
        const double del = delta(octet);
        if (del == 0.0) {
            ++study.n_undefined;
            continue;
        }
        ++study.n_defined;
        sum_eps += eps;
        sum_delta += del;
        sum_kappa += eps / del;
        if (eps < 0.0) {
            ++study.n_eps_neg;
            sum_delta_neg += del;
        } else if (eps > 0.0) {
            ++study.n_eps_pos;
            sum_delta_pos += del;
        }
    }
    if (study.n_defined > 0) {
        study.mean_epsilon = sum_eps / static_cast<double>(study.n_defined);
        study.mean_delta = sum_delta / static_cast<double>(study.n_defined);
        study.mean_kappa = sum_kappa / static_cast<double>(study.n_defined);
    }
    if (study.n_eps_neg > 0) study.mean_delta_eps_neg = sum_delta_neg / static_cast<double>(study.n_eps_neg);
    if (study.n_eps_pos > 0) study.mean_delta_eps_pos = sum_delta_pos / static_cast<double>(study.n_eps_pos);
    return study;
}

} // namespace kappasim
