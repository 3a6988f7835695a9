#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "kappasim/detail/optim.hpp"
#include "kappasim/errors.hpp"
#include "kappasim/rng.hpp"

namespace kappasim {

enum class DeadtimeKind { Constant, LinearInRate };

/// Non-paralyzable single-photon detector: efficiency eta applied before the
/// dead-state gating (an undetected photon never switches the detector dead),
/// deadtime either constant or linear in the detected photon-triggered rate,
/// plus an additive dark-count rate.
struct DeadtimeModel {
    DeadtimeKind kind = DeadtimeKind::Constant;
    double tau0 = 0.0;       // s; deadtime (Constant) or zero-rate intercept (LinearInRate)
    double slope = 0.0;      // s per (count/s); LinearInRate only, tau(R) = tau0 - slope * R
    double dark_rate = 0.0;  // counts/s
    double efficiency = 1.0; // in (0, 1]

    static DeadtimeModel constant(double tau, double dark_rate = 0.0, double efficiency = 1.0) {
        DeadtimeModel m;
        m.kind = DeadtimeKind::Constant;
        m.tau0 = tau;
        m.dark_rate = dark_rate;
        m.efficiency = efficiency;
        m.validate();
        return m;
    }

    static DeadtimeModel linear_in_rate(double tau0, double slope, double dark_rate = 0.0,
                                        double efficiency = 1.0) {
        DeadtimeModel m;
        m.kind = DeadtimeKind::LinearInRate;
        m.tau0 = tau0;
        m.slope = slope;
        m.dark_rate = dark_rate;
        m.efficiency = efficiency;
        m.validate();
        return m;
    }

    void validate() const {
        // tau0 = 0 is allowed for a Constant model: the ideal linear detector.
        const bool tau_ok = (kind == DeadtimeKind::Constant) ? tau0 >= 0.0 : tau0 > 0.0;
        if (!tau_ok || !std::isfinite(tau0)) throw DomainError("DeadtimeModel: invalid deadtime");
        if (!std::isfinite(slope)) throw DomainError("DeadtimeModel: invalid deadtime slope");
        if (!(dark_rate >= 0.0) || !std::isfinite(dark_rate))
            throw DomainError("DeadtimeModel: dark rate must be nonnegative");
        if (!(efficiency > 0.0 && efficiency <= 1.0))
            throw DomainError("DeadtimeModel: efficiency must lie in (0, 1]");
    }
};

/// Deadtime at a given detected photon-triggered rate. The LinearInRate model
/// is only declared valid while tau(rate) > 0 and rate * tau(rate) <= 0.8;
/// beyond that the near-saturation response is deliberately not extrapolated.
inline double tau_at_rate(const DeadtimeModel& model, double rate) {
    model.validate();
    if (!(rate >= 0.0) || !std::isfinite(rate))
        throw DomainError("tau_at_rate: rate must be nonnegative");
    if (model.kind == DeadtimeKind::Constant) return model.tau0;
    const double tau = model.tau0 - model.slope * rate;
    if (tau <= 0.0)
        throw ValidityError("tau_at_rate: rate beyond the model's validity range (tau <= 0)");
    if (rate * tau > 0.8)
        throw ValidityError("tau_at_rate: rate beyond the model's validity range (rate > 0.8/tau)");
    return tau;
}

namespace detail_spad {

/// Detected photon-triggered rate (dark counts excluded) for a given actual
/// photon rate: x = eta R / (1 + tau(x) eta R), solved by damped fixed-point
/// iteration for the rate-dependent model.
inline double detected_photon_rate(double actual_rate, const DeadtimeModel& model) {
    const double incident = model.efficiency * actual_rate;
    if (incident == 0.0) return 0.0;
    if (model.kind == DeadtimeKind::Constant) return incident / (1.0 + model.tau0 * incident);

    double x = incident / (1.0 + model.tau0 * incident); // tau is largest at rate 0
    constexpr int max_iter = 100;
    constexpr double rel_tol = 1e-12;
    constexpr double damping = 0.7;
    for (int i = 0; i < max_iter; ++i) {
        const double tau = tau_at_rate(model, x);
        const double target = incident / (1.0 + tau * incident);
        const double next = (1.0 - damping) * x + damping * target;
        const bool converged = std::abs(next - x) <= rel_tol * std::max(std::abs(next), 1.0e-300);
        x = next;
        if (converged) {
            tau_at_rate(model, x); // final validity check at the solution
            return x;
        }
    }
    throw IllConditionedError("detected_photon_rate: fixed-point iteration did not converge");
}

} // namespace detail_spad

/// Steady-state detected rate of the non-paralyzable detector:
/// R_det = eta R_act / (1 + tau eta R_act) + R_dark, with tau evaluated at
/// the detected photon-triggered rate for the rate-dependent model.
inline double detected_rate(double actual_rate, const DeadtimeModel& model) {
    model.validate();
    if (!(actual_rate >= 0.0) || !std::isfinite(actual_rate))
        throw DomainError("detected_rate: actual rate must be nonnegative");
    return detail_spad::detected_photon_rate(actual_rate, model) + model.dark_rate;
}

/// Inverts the steady-state response: recovers the actual photon rate from a
/// detected rate. Exact closed form, because tau is evaluated at the detected
/// photon-triggered rate, which is known here.
inline double correct_rate(double detected, const DeadtimeModel& model) {
    model.validate();
    if (!std::isfinite(detected)) throw DomainError("correct_rate: detected rate must be finite");
    if (detected < model.dark_rate)
        throw DomainError("correct_rate: detected rate below the model's dark rate");
    const double x = detected - model.dark_rate;
    if (x == 0.0) return 0.0;
    const double tau = tau_at_rate(model, x);
    if (tau * x >= 1.0)
        throw NonInvertibleError("correct_rate: detected rate at or beyond saturation (1/tau)");
    return x / (1.0 - tau * x) / model.efficiency;
}

/// Event-level detector: merges an independent Poisson dark stream into the
/// photon arrivals, applies the efficiency Bernoulli per photon (an
/// undetected photon does not trigger the dead state), then gates
/// non-paralyzably. For the LinearInRate model the deadtime is frozen at the
/// model's steady-state detected rate for the stream's mean arrival rate,
/// since an event-level definition of tau(R) is not part of the model.
/// `duration` defaults to the last arrival time.
inline std::vector<double> apply_deadtime_events(const std::vector<double>& arrivals,
                                                 const DeadtimeModel& model, std::uint64_t seed,
                                                 double duration = -1.0) {
    model.validate();
    double prev = 0.0;
    for (double t : arrivals) {
        if (!(t >= 0.0) || !std::isfinite(t))
            throw DomainError("apply_deadtime_events: arrival times must be nonnegative");
        if (t < prev) throw DomainError("apply_deadtime_events: arrivals must be sorted");
        prev = t;
    }
    if (duration < 0.0) duration = arrivals.empty() ? 0.0 : arrivals.back();
    if (!arrivals.empty() && arrivals.back() > duration)
        throw DomainError("apply_deadtime_events: duration shorter than the last arrival");

    double tau = model.tau0;
    if (model.kind == DeadtimeKind::LinearInRate) {
        const double mean_rate = duration > 0.0 ? static_cast<double>(arrivals.size()) / duration : 0.0;
        tau = tau_at_rate(model, detail_spad::detected_photon_rate(mean_rate, model));
    }

    std::vector<double> darks;
    if (model.dark_rate > 0.0 && duration > 0.0) {
        CounterRng dark_rng(derive_seed(seed, {0x6461726bULL}));
        std::exponential_distribution<double> gap(model.dark_rate);
        double t = gap(dark_rng);
        while (t < duration) {
            darks.push_back(t);
            t += gap(dark_rng);
        }
    }

    CounterRng eta_rng(derive_seed(seed, {0x657461ULL}));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> detected;
    detected.reserve(arrivals.size() / 4 + darks.size() + 16);
    double live_at = 0.0;
    bool first = true;
    std::size_t ip = 0, id = 0;
    while (ip < arrivals.size() || id < darks.size()) {
        const bool take_photon =
            id >= darks.size() || (ip < arrivals.size() && arrivals[ip] <= darks[id]);
        const double t = take_photon ? arrivals[ip++] : darks[id++];
        if (take_photon && model.efficiency < 1.0 && u(eta_rng) >= model.efficiency)
            continue; // photon not seen: no detection, no dead window
        if (first || t >= live_at) {
            detected.push_back(t);
            live_at = t + tau;
            first = false;
        }
    }
    return detected;
}

/// One superposition-method acquisition: detected rates with both calibration
/// lasers on, each alone, and both off (dark rate). `repetitions` records how
/// many raw repeats were averaged into this row.
struct SuperpositionMeasurement {
    double r_both = 0.0;
    double r_only1 = 0.0;
    double r_only2 = 0.0;
    double r_none = 0.0;
    long long repetitions = 1;

    void validate() const {
        for (double r : {r_both, r_only1, r_only2, r_none}) {
            if (!(r >= 0.0) || !std::isfinite(r))
                throw DomainError("SuperpositionMeasurement: rates must be nonnegative");
        }
        if (repetitions < 1) throw DomainError("SuperpositionMeasurement: repetitions must be >= 1");
    }
};

/// Additivity residual of the deadtime-corrected rates of one measurement:
/// corrected(both) - corrected(only1) - corrected(only2), with the dark rate
/// taken from the measurement's own r_none. Zero at the true deadtime.
inline double superposition_residual(const SuperpositionMeasurement& m, double tau) {
    m.validate();
    auto corrected = [&](double r) {
        const double x = r - m.r_none;
        const double denom = 1.0 - tau * x;
        if (denom <= 0.0)
            throw NonInvertibleError("superposition_residual: rate beyond saturation for this tau");
        return x / denom;
    };
    return corrected(m.r_both) - corrected(m.r_only1) - corrected(m.r_only2);
}

struct DeadtimeEstimate {
    double tau = 0.0;                    // s, joint least-squares estimate
    double uncertainty = 0.0;            // s, std over per-measurement estimates (0 when n == 1)
    std::vector<double> per_measurement; // per-measurement tau estimates, s
    double objective = 0.0;              // sum of squared residuals at the estimate
};

/// Superposition-method deadtime characterization: finds the constant tau
/// minimizing the summed squared additivity residuals, and quotes the
/// standard deviation of per-measurement estimates as the uncertainty.
/// Throws IllConditionedError when the data carry no significant
/// nonlinearity (e.g. a linear detector).
inline DeadtimeEstimate characterize_deadtime(const std::vector<SuperpositionMeasurement>& measurements) {
    if (measurements.empty()) throw DomainError("characterize_deadtime: no measurements");
    double x_max = 0.0;
    for (const auto& m : measurements) {
        m.validate();
        x_max = std::max({x_max, m.r_both - m.r_none, m.r_only1 - m.r_none, m.r_only2 - m.r_none});
    }
    if (x_max <= 0.0)
        throw IllConditionedError("characterize_deadtime: no rate excess above the dark rate");
    const double tau_hi = 0.95 / x_max;

    auto objective = [&](double tau) {
        double s = 0.0;
        for (const auto& m : measurements) {
            const double r = superposition_residual(m, tau);
            s += r * r;
        }
        return s;
    };

    DeadtimeEstimate est;
    est.tau = detail::brent_minimize(objective, 0.0, tau_hi, 1e-14);
    if (objective(0.0) <= objective(est.tau)) est.tau = 0.0;
    est.objective = objective(est.tau);

    est.per_measurement.reserve(measurements.size());
    for (const auto& m : measurements) {
        auto f = [&](double tau) { return superposition_residual(m, tau); };
        const double lo = -tau_hi, hi = tau_hi;
        const double flo = f(lo), fhi = f(hi);
        double tau_i;
        if (flo == 0.0 && fhi == 0.0) {
            tau_i = 0.0; // additivity holds identically: linear detector row
        } else if (flo * fhi <= 0.0) {
            tau_i = detail::brent_root(f, lo, hi, 1e-18);
        } else {
            // No sign change (pathological row): take the bracket end with the
            // smaller residual magnitude so the scatter stays honest.
            tau_i = std::abs(flo) < std::abs(fhi) ? lo : hi;
        }
        est.per_measurement.push_back(tau_i);
    }

    if (est.per_measurement.size() >= 2) {
        double mean = 0.0;
        for (double t : est.per_measurement) mean += t;
        mean /= static_cast<double>(est.per_measurement.size());
        double ss = 0.0;
        for (double t : est.per_measurement) ss += (t - mean) * (t - mean);
        est.uncertainty = std::sqrt(ss / static_cast<double>(est.per_measurement.size() - 1));
    }

    constexpr double tau_floor = 1e-12; // 1 ps: far below any physical SPAD deadtime
    if (est.tau < tau_floor)
        throw IllConditionedError("characterize_deadtime: no measurable nonlinearity in the data");
    if (est.per_measurement.size() >= 2 && est.tau < 2.0 * est.uncertainty)
        throw IllConditionedError("characterize_deadtime: deadtime not significant against scatter");
    return est;
}

} // namespace kappasim
