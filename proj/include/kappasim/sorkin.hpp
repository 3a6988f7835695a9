#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <string>

#include "kappasim/errors.hpp"
#include "kappasim/rng.hpp"

namespace kappasim {

/// The three interferometer paths.
enum class Path : int { A = 0, B = 1, C = 2 };

/// One of the 8 shutter settings of a three-path interferometer, encoded as
/// the subset of open paths.
class ShutterConfig {
public:
    constexpr ShutterConfig() noexcept : mask_(0) {}
    constexpr explicit ShutterConfig(unsigned mask) : mask_(mask & 0x7u) {}

    static constexpr ShutterConfig none() { return ShutterConfig(0u); }
    static constexpr ShutterConfig only(Path p) { return ShutterConfig(1u << static_cast<int>(p)); }
    static constexpr ShutterConfig open_ab() { return ShutterConfig(0x3u); }
    static constexpr ShutterConfig open_ac() { return ShutterConfig(0x5u); }
    static constexpr ShutterConfig open_bc() { return ShutterConfig(0x6u); }
    static constexpr ShutterConfig all_open() { return ShutterConfig(0x7u); }

    constexpr bool is_open(Path p) const { return (mask_ >> static_cast<int>(p)) & 1u; }
    constexpr unsigned mask() const { return mask_; }
    constexpr int open_count() const {
        return static_cast<int>((mask_ & 1u) + ((mask_ >> 1) & 1u) + ((mask_ >> 2) & 1u));
    }

    /// Canonical storage index in the order (0, A, B, C, AB, AC, BC, ABC).
    constexpr int index() const {
        constexpr std::array<int, 8> by_mask{0, 1, 2, 4, 3, 5, 6, 7};
        return by_mask[mask_];
    }

    /// All 8 configurations in canonical order.
    static constexpr std::array<ShutterConfig, 8> all() {
        return {ShutterConfig(0u), ShutterConfig(1u), ShutterConfig(2u), ShutterConfig(4u),
                ShutterConfig(3u), ShutterConfig(5u), ShutterConfig(6u), ShutterConfig(7u)};
    }

    /// Text label: "0", "a", "b", "c", "ab", "ac", "bc", "abc".
    std::string label() const {
        if (mask_ == 0) return "0";
        std::string s;
        if (is_open(Path::A)) s += 'a';
        if (is_open(Path::B)) s += 'b';
        if (is_open(Path::C)) s += 'c';
        return s;
    }

    friend constexpr bool operator==(ShutterConfig l, ShutterConfig r) { return l.mask_ == r.mask_; }
    friend constexpr bool operator!=(ShutterConfig l, ShutterConfig r) { return l.mask_ != r.mask_; }

private:
    unsigned mask_;
};

/// Raw (uncorrected) detected rates for the 8 shutter configurations, in
/// counts/s. Background subtraction happens inside the epsilon/delta
/// combinations, never in storage.
struct RateOctet {
    std::array<double, 8> rates{}; // indexed by ShutterConfig::index()

    double& operator[](ShutterConfig c) { return rates[static_cast<std::size_t>(c.index())]; }
    const double& operator[](ShutterConfig c) const { return rates[static_cast<std::size_t>(c.index())]; }

    double r0() const { return (*this)[ShutterConfig::none()]; }
    double ra() const { return (*this)[ShutterConfig::only(Path::A)]; }
    double rb() const { return (*this)[ShutterConfig::only(Path::B)]; }
    double rc() const { return (*this)[ShutterConfig::only(Path::C)]; }
    double rab() const { return (*this)[ShutterConfig::open_ab()]; }
    double rac() const { return (*this)[ShutterConfig::open_ac()]; }
    double rbc() const { return (*this)[ShutterConfig::open_bc()]; }
    double rabc() const { return (*this)[ShutterConfig::all_open()]; }

    void validate() const {
        for (double r : rates) {
            if (!std::isfinite(r)) throw DomainError("RateOctet: rates must be finite");
        }
    }
};

/// Third-order interference term. Zero under Born's rule for any two-path
/// theory; the background rate r0 cancels exactly.
inline double epsilon(const RateOctet& o) {
    o.validate();
    return o.rabc() - o.rab() - o.rac() - o.rbc() + o.ra() + o.rb() + o.rc() - o.r0();
}

/// Normalization: sum of the absolute second-order (pairwise) interference
/// magnitudes, each background-corrected.
inline double delta(const RateOctet& o) {
    o.validate();
    const double iab = o.rab() - o.ra() - o.rb() + o.r0();
    const double iac = o.rac() - o.ra() - o.rc() + o.r0();
    const double ibc = o.rbc() - o.rb() - o.rc() + o.r0();
    return std::abs(iab) + std::abs(iac) + std::abs(ibc);
}

/// Normalized third-order interference, kappa = epsilon / delta.
inline double kappa(const RateOctet& o) {
    const double d = delta(o);
    if (d == 0.0)
        throw UndefinedValueError("kappa: undefined when all pairwise interferences vanish");
    return epsilon(o) / d;
}

/// Per-run record of a kappa evaluation.
struct KappaSample {
    double epsilon = 0.0;
    double delta = 0.0;
    double kappa = 0.0;
    bool defined = true;                       // false when delta == 0
    std::array<ShutterConfig, 8> config_order; // acquisition order used for this run
    double acquisition_time = 0.0;             // seconds per configuration
};

/// Uniformly random acquisition order of the 8 configurations (Fisher-Yates
/// on the canonical order, driven by the counter RNG).
inline std::array<ShutterConfig, 8> randomized_config_order(std::uint64_t seed) {
    std::array<ShutterConfig, 8> order = ShutterConfig::all();
    CounterRng rng(seed);
    for (int i = 7; i > 0; --i) {
        // rejection-free modulo is fine here: 8 divides 2^64 ranges evenly enough
        const std::uint64_t j = rng() % static_cast<std::uint64_t>(i + 1);
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    return order;
}

/// Ideal three-path interferometer rate at the constructive-fringe working
/// point: incident_rate * (sum of open amplitudes)^2 / (sum of all
/// amplitudes)^2 + dark_rate. The normalization makes the all-open rate equal
/// incident_rate when all phases align.
inline double interferometer_rate(ShutterConfig config, const std::array<double, 3>& path_amplitudes,
                                  double incident_rate, double dark_rate) {
    double total = 0.0;
    for (double a : path_amplitudes) {
        if (!(a >= 0.0) || !std::isfinite(a))
            throw DomainError("interferometer_rate: amplitudes must be nonnegative");
        total += a;
    }
    if (!(incident_rate >= 0.0) || !(dark_rate >= 0.0))
        throw DomainError("interferometer_rate: rates must be nonnegative");
    if (total == 0.0) return dark_rate; // no light in any path
    double open = 0.0;
    for (Path p : {Path::A, Path::B, Path::C}) {
        if (config.is_open(p)) open += path_amplitudes[static_cast<std::size_t>(p)];
    }
    const double frac = (open / total) * (open / total);
    return incident_rate * frac + dark_rate;
}

/// Same generator with explicit per-path phases: the open-path field is
/// sum_i a_i e^{i phi_i}; normalization stays the aligned-phase maximum.
inline double interferometer_rate(ShutterConfig config, const std::array<double, 3>& path_amplitudes,
                                  const std::array<double, 3>& path_phases, double incident_rate,
                                  double dark_rate) {
    double total = 0.0;
    for (double a : path_amplitudes) {
        if (!(a >= 0.0) || !std::isfinite(a))
            throw DomainError("interferometer_rate: amplitudes must be nonnegative");
        total += a;
    }
    for (double p : path_phases) {
        if (!std::isfinite(p)) throw DomainError("interferometer_rate: phases must be finite");
    }
    if (!(incident_rate >= 0.0) || !(dark_rate >= 0.0))
        throw DomainError("interferometer_rate: rates must be nonnegative");
    if (total == 0.0) return dark_rate;
    std::complex<double> open{0.0, 0.0};
    for (Path p : {Path::A, Path::B, Path::C}) {
        const auto i = static_cast<std::size_t>(p);
        if (config.is_open(p)) open += std::polar(path_amplitudes[i], path_phases[i]);
    }
    return incident_rate * std::norm(open) / (total * total) + dark_rate;
}

/// Full octet of ideal rates; kappa of such an octet is zero by construction.
inline RateOctet born_rule_octet(const std::array<double, 3>& path_amplitudes, double incident_rate,
                                 double dark_rate) {
    RateOctet o;
    for (ShutterConfig c : ShutterConfig::all())
        o[c] = interferometer_rate(c, path_amplitudes, incident_rate, dark_rate);
    return o;
}

inline RateOctet born_rule_octet(const std::array<double, 3>& path_amplitudes,
                                 const std::array<double, 3>& path_phases, double incident_rate,
                                 double dark_rate) {
    RateOctet o;
    for (ShutterConfig c : ShutterConfig::all())
        o[c] = interferometer_rate(c, path_amplitudes, path_phases, incident_rate, dark_rate);
    return o;
}

} // namespace kappasim
