#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "kappasim/errors.hpp"
#include "kappasim/rng.hpp"

namespace kappasim {

enum class SourceKind { Coherent, IdealSps, ContaminatedSps };

/// Per-pulse photon-number probabilities of a pulsed source restricted to
/// {0, 1, 2} photons.
struct PulseNumberProbs {
    double p0 = 1.0;
    double p1 = 0.0;
    double p2 = 0.0;
};

/// Pulse-wise second-order correlation at zero delay for photon numbers in
/// {0, 1, 2}: g2 = 2 p2 / (p1 + 2 p2)^2.
inline double pulsewise_g2(double p1, double p2) {
    const double mu = p1 + 2.0 * p2;
    if (mu <= 0.0) throw UndefinedValueError("pulsewise_g2: undefined for a source that never emits");
    return 2.0 * p2 / (mu * mu);
}

/// Photon source model: a CW coherent state or a pulsed (ideal or
/// multiphoton-contaminated) single-photon source.
struct SourceModel {
    SourceKind kind = SourceKind::Coherent;
    double mean_rate = 0.0;            // emitted photons/s
    double pulse_period = 0.0;         // s, pulsed kinds only
    double emission_probability = 1.0; // per pulse, P(n >= 1), pulsed kinds only
    double g2_zero = 0.0;              // pulse-wise g2(0), ContaminatedSps only

    static SourceModel coherent(double mean_rate) {
        SourceModel s;
        s.kind = SourceKind::Coherent;
        s.mean_rate = mean_rate;
        s.validate();
        return s;
    }

    static SourceModel ideal_sps(double pulse_period, double emission_probability = 1.0) {
        SourceModel s;
        s.kind = SourceKind::IdealSps;
        s.pulse_period = pulse_period;
        s.emission_probability = emission_probability;
        s.mean_rate = emission_probability / pulse_period;
        s.validate();
        return s;
    }

    static SourceModel contaminated_sps(double pulse_period, double emission_probability,
                                        double g2_zero) {
        SourceModel s;
        s.kind = SourceKind::ContaminatedSps;
        s.pulse_period = pulse_period;
        s.emission_probability = emission_probability;
        s.g2_zero = g2_zero;
        s.validate();
        s.mean_rate = s.emitted_rate();
        return s;
    }

    void validate() const {
        if (kind == SourceKind::Coherent) {
            if (!(mean_rate >= 0.0) || !std::isfinite(mean_rate))
                throw DomainError("SourceModel: mean rate must be nonnegative");
            return;
        }
        if (!(pulse_period > 0.0) || !std::isfinite(pulse_period))
            throw DomainError("SourceModel: pulse period must be positive");
        if (!(emission_probability >= 0.0 && emission_probability <= 1.0))
            throw DomainError("SourceModel: emission probability must lie in [0, 1]");
        if (kind == SourceKind::ContaminatedSps) {
            if (!(g2_zero >= 0.0 && g2_zero < 1.0))
                throw DomainError("SourceModel: g2(0) must lie in [0, 1)");
            pulse_probabilities(); // throws when the calibration is infeasible
        }
    }

    /// Per-pulse photon-number law. For the contaminated source the
    /// two-photon probability solves pulsewise_g2(p1, p2) = g2_zero with
    /// p1 + p2 = emission_probability.
    PulseNumberProbs pulse_probabilities() const {
        if (kind == SourceKind::Coherent)
            throw DomainError("pulse_probabilities: source is not pulsed");
        const double e = emission_probability;
        if (kind == SourceKind::IdealSps) return {1.0 - e, e, 0.0};
        const double g = g2_zero;
        if (g == 0.0) return {1.0 - e, e, 0.0};
        const double disc = 1.0 - 2.0 * g * e;
        if (disc < 0.0)
            throw DomainError("SourceModel: g2 target unreachable with photon numbers in {0,1,2}");
        const double mu = (1.0 - std::sqrt(disc)) / g; // mean photons per pulse
        const double p2 = mu - e;
        const double p1 = 2.0 * e - mu;
        return {1.0 - p1 - p2, p1, p2};
    }

    /// Expected emitted photon rate in photons/s.
    double emitted_rate() const {
        if (kind == SourceKind::Coherent) return mean_rate;
        if (kind == SourceKind::IdealSps) return emission_probability / pulse_period;
        const PulseNumberProbs p = pulse_probabilities();
        return (p.p1 + 2.0 * p.p2) / pulse_period;
    }
};

/// One counting acquisition.
struct CountSample {
    long long counts = 0;
    double duration = 0.0;      // s
    double effective_rate = 0.0; // counts / duration
};

namespace detail_sources {

/// Number of pulse slots k >= 0 with k * period < duration, robust to the
/// rounding of period in binary floating point.
inline long long pulses_in(double duration, double period) {
    long long n = static_cast<long long>(std::floor(duration / period));
    while (static_cast<double>(n) * period < duration) ++n;
    while (n > 0 && static_cast<double>(n - 1) * period >= duration) --n;
    return n;
}

constexpr double memory_guard_events = 1e8;

} // namespace detail_sources

/// Draws the photon count reaching a detector through a path of intensity
/// transmission `transmission` during `duration`. Coherent light stays
/// Poissonian under loss; pulsed sources apply per-photon Bernoulli thinning,
/// so an ideal source at unit transmission has zero variance.
inline CountSample draw_counts(const SourceModel& source, double transmission, double duration,
                               std::uint64_t seed) {
    source.validate();
    if (!(transmission >= 0.0 && transmission <= 1.0) || !std::isfinite(transmission))
        throw DomainError("draw_counts: transmission must lie in [0, 1]");
    if (!(duration > 0.0) || !std::isfinite(duration))
        throw DomainError("draw_counts: duration must be positive");

    CounterRng rng(seed);
    long long counts = 0;
    switch (source.kind) {
    case SourceKind::Coherent: {
        const double mean = source.mean_rate * transmission * duration;
        if (mean > 0.0) {
            std::poisson_distribution<long long> poisson(mean);
            counts = poisson(rng);
        }
        break;
    }
    case SourceKind::IdealSps: {
        const long long pulses = detail_sources::pulses_in(duration, source.pulse_period);
        const long long emitted =
            std::llround(static_cast<double>(pulses) * source.emission_probability);
        if (transmission >= 1.0) {
            counts = emitted;
        } else if (emitted > 0 && transmission > 0.0) {
            std::binomial_distribution<long long> thin(emitted, transmission);
            counts = thin(rng);
        }
        break;
    }
    case SourceKind::ContaminatedSps: {
        const long long pulses = detail_sources::pulses_in(duration, source.pulse_period);
        const PulseNumberProbs p = source.pulse_probabilities();
        long long n2 = 0, n1 = 0;
        if (pulses > 0 && p.p2 > 0.0) {
            std::binomial_distribution<long long> two(pulses, p.p2);
            n2 = two(rng);
        }
        if (pulses - n2 > 0 && p.p1 > 0.0 && p.p2 < 1.0) {
            std::binomial_distribution<long long> one(pulses - n2, p.p1 / (1.0 - p.p2));
            n1 = one(rng);
        }
        const long long emitted = n1 + 2 * n2;
        if (transmission >= 1.0) {
            counts = emitted;
        } else if (emitted > 0 && transmission > 0.0) {
            std::binomial_distribution<long long> thin(emitted, transmission);
            counts = thin(rng);
        }
        break;
    }
    }
    return CountSample{counts, duration, static_cast<double>(counts) / duration};
}

/// Tallies per-pulse photon numbers over `n_pulses` pulses of a pulsed source.
struct PulseTally {
    long long n0 = 0;
    long long n1 = 0;
    long long n2 = 0;

    double estimated_g2() const {
        const long long n = n0 + n1 + n2;
        if (n == 0) throw DomainError("PulseTally: empty tally");
        const double p1 = static_cast<double>(n1) / static_cast<double>(n);
        const double p2 = static_cast<double>(n2) / static_cast<double>(n);
        return pulsewise_g2(p1, p2);
    }
};

inline PulseTally draw_pulse_photon_numbers(const SourceModel& source, long long n_pulses,
                                            std::uint64_t seed) {
    source.validate();
    if (source.kind == SourceKind::Coherent)
        throw DomainError("draw_pulse_photon_numbers: source is not pulsed");
    if (n_pulses < 0) throw DomainError("draw_pulse_photon_numbers: negative pulse count");
    const PulseNumberProbs p = source.pulse_probabilities();
    CounterRng rng(seed);
    PulseTally tally;
    if (n_pulses > 0 && p.p2 > 0.0) {
        std::binomial_distribution<long long> two(n_pulses, p.p2);
        tally.n2 = two(rng);
    }
    if (n_pulses - tally.n2 > 0 && p.p1 > 0.0 && p.p2 < 1.0) {
        std::binomial_distribution<long long> one(n_pulses - tally.n2, p.p1 / (1.0 - p.p2));
        tally.n1 = one(rng);
    }
    tally.n0 = n_pulses - tally.n1 - tally.n2;
    return tally;
}

/// Emission timestamps in [0, duration), strictly increasing. Coherent light
/// is a homogeneous Poisson process; pulsed sources emit at integer multiples
/// of the pulse period, with the second photon of a contaminated pulse offset
/// by 0.1 ps to keep timestamps strictly ordered.
inline std::vector<double> pulse_train_timestamps(const SourceModel& source, double duration,
                                                  std::uint64_t seed) {
    source.validate();
    if (!(duration > 0.0) || !std::isfinite(duration))
        throw DomainError("pulse_train_timestamps: duration must be positive");

    std::vector<double> times;
    CounterRng rng(seed);
    if (source.kind == SourceKind::Coherent) {
        if (source.mean_rate * duration > detail_sources::memory_guard_events)
            throw DomainError("pulse_train_timestamps: expected event count exceeds memory guard (1e8)");
        if (source.mean_rate > 0.0) {
            times.reserve(static_cast<std::size_t>(source.mean_rate * duration * 1.01) + 16);
            std::exponential_distribution<double> gap(source.mean_rate);
            double t = gap(rng);
            while (t < duration) {
                times.push_back(t);
                t += gap(rng);
            }
        }
        return times;
    }

    if (duration / source.pulse_period > detail_sources::memory_guard_events)
        throw DomainError("pulse_train_timestamps: pulse count exceeds memory guard (1e8)");
    const long long pulses = detail_sources::pulses_in(duration, source.pulse_period);
    const PulseNumberProbs p = source.pulse_probabilities();
    std::uniform_real_distribution<double> u(0.0, 1.0);
    times.reserve(static_cast<std::size_t>(
        static_cast<double>(pulses) * (p.p1 + 2.0 * p.p2) * 1.01 + 16));
    constexpr double intra_pulse_offset = 1e-13; // s, same optical pulse
    for (long long k = 0; k < pulses; ++k) {
        const double x = u(rng);
        int n = 0;
        if (x < p.p2) n = 2;
        else if (x < p.p2 + p.p1) n = 1;
        if (n == 0) continue;
        const double t = static_cast<double>(k) * source.pulse_period;
        times.push_back(t);
        if (n == 2) times.push_back(t + intra_pulse_offset);
    }
    return times;
}

} // namespace kappasim
