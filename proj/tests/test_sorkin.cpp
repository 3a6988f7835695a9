#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <vector>

#include "kappasim/rng.hpp"
#include "kappasim/sorkin.hpp"

using namespace kappasim;
using Catch::Approx;

namespace {

double uniform(CounterRng& rng, double lo, double hi) {
    const double u = static_cast<double>(rng()) / static_cast<double>(CounterRng::max());
    return lo + u * (hi - lo);
}

/// Straight-line evaluation of the third-order term from the eight rates,
/// written out independently of the library's accessors.
double epsilon_oracle(const RateOctet& o) {
    return o.rabc() - o.rab() - o.rac() - o.rbc() + o.ra() + o.rb() + o.rc() - o.r0();
}

} // namespace

TEST_CASE("shutter configurations enumerate all eight path subsets", "[sorkin]") {
    const auto all = ShutterConfig::all();
    std::set<int> indices;
    for (ShutterConfig c : all) indices.insert(c.index());
    REQUIRE(indices.size() == 8);
    REQUIRE(*indices.begin() == 0);
    REQUIRE(*indices.rbegin() == 7);

    REQUIRE(ShutterConfig::none().label() == "0");
    REQUIRE(ShutterConfig::only(Path::A).label() == "a");
    REQUIRE(ShutterConfig::only(Path::B).label() == "b");
    REQUIRE(ShutterConfig::only(Path::C).label() == "c");
    REQUIRE(ShutterConfig::open_ab().label() == "ab");
    REQUIRE(ShutterConfig::open_ac().label() == "ac");
    REQUIRE(ShutterConfig::open_bc().label() == "bc");
    REQUIRE(ShutterConfig::all_open().label() == "abc");

    REQUIRE(ShutterConfig::none().open_count() == 0);
    REQUIRE(ShutterConfig::open_ac().open_count() == 2);
    REQUIRE(ShutterConfig::all_open().open_count() == 3);
    REQUIRE(ShutterConfig::open_ab().is_open(Path::A));
    REQUIRE(ShutterConfig::open_ab().is_open(Path::B));
    REQUIRE_FALSE(ShutterConfig::open_ab().is_open(Path::C));

    // Canonical index order: 0, a, b, c, ab, ac, bc, abc.
    REQUIRE(ShutterConfig::none().index() == 0);
    REQUIRE(ShutterConfig::only(Path::A).index() == 1);
    REQUIRE(ShutterConfig::only(Path::B).index() == 2);
    REQUIRE(ShutterConfig::only(Path::C).index() == 3);
    REQUIRE(ShutterConfig::open_ab().index() == 4);
    REQUIRE(ShutterConfig::open_ac().index() == 5);
    REQUIRE(ShutterConfig::open_bc().index() == 6);
    REQUIRE(ShutterConfig::all_open().index() == 7);
}

TEST_CASE("epsilon and delta definitions", "[sorkin]") {
    RateOctet o;
    o[ShutterConfig::none()] = 1.0;
    o[ShutterConfig::only(Path::A)] = 2.0;
    o[ShutterConfig::only(Path::B)] = 3.0;
    o[ShutterConfig::only(Path::C)] = 4.0;
    o[ShutterConfig::open_ab()] = 5.0;
    o[ShutterConfig::open_ac()] = 6.0;
    o[ShutterConfig::open_bc()] = 7.0;
    o[ShutterConfig::all_open()] = 8.0;

    REQUIRE(epsilon(o) == Approx(epsilon_oracle(o)).margin(1e-15));
    // I_ab = 5-2-3+1 = 1, I_ac = 6-2-4+1 = 1, I_bc = 7-3-4+1 = 1.
    REQUIRE(delta(o) == Approx(3.0).margin(1e-15));
    REQUIRE(kappa(o) == Approx(epsilon_oracle(o) / 3.0).margin(1e-15));
}

TEST_CASE("epsilon vanishes for additive rates and kappa is undefined without pairwise interference",
          "[sorkin]") {
    // Rates that are plain sums of per-path contributions plus dark counts.
    // Integer-valued rates keep the sums exact in floating point, so the
    // pairwise interference terms cancel to exactly zero instead of to an
    // ulp-sized residue.
    CounterRng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const double ra = std::floor(uniform(rng, 0.0, 100.0));
        const double rb = std::floor(uniform(rng, 0.0, 100.0));
        const double rc = std::floor(uniform(rng, 0.0, 100.0));
        const double dark = std::floor(uniform(rng, 0.0, 10.0));
        RateOctet o;
        for (ShutterConfig c : ShutterConfig::all()) {
            double r = dark;
            if (c.is_open(Path::A)) r += ra;
            if (c.is_open(Path::B)) r += rb;
            if (c.is_open(Path::C)) r += rc;
            o[c] = r;
        }
        REQUIRE(std::abs(epsilon(o)) < 1e-12);
        REQUIRE(delta(o) < 1e-12);
        REQUIRE_THROWS_AS(kappa(o), UndefinedValueError);
    }
}

TEST_CASE("epsilon and delta are invariant under a uniform dark-rate offset", "[sorkin]") {
    CounterRng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        RateOctet o;
        for (ShutterConfig c : ShutterConfig::all()) o[c] = uniform(rng, 0.0, 1e6);
        RateOctet shifted = o;
        const double offset = uniform(rng, 0.0, 1e4);
        for (ShutterConfig c : ShutterConfig::all()) shifted[c] += offset;
        REQUIRE(epsilon(shifted) == Approx(epsilon(o)).margin(1e-7));
        REQUIRE(delta(shifted) == Approx(delta(o)).margin(1e-7));
    }
}

TEST_CASE("interference octets from squared amplitude sums satisfy the second-order rule",
          "[sorkin]") {
    CounterRng rng(41);
    for (int trial = 0; trial < 200; ++trial) {
        const std::array<double, 3> amps{uniform(rng, 0.1, 1.0), uniform(rng, 0.1, 1.0),
                                         uniform(rng, 0.1, 1.0)};
        const double incident = uniform(rng, 1e3, 1e7);
        const double dark = uniform(rng, 0.0, 1e3);
        const RateOctet o = born_rule_octet(amps, incident, dark);
        REQUIRE(std::abs(kappa(o)) <= 1e-12);
        // All-open rate is the incident rate plus dark by normalization.
        REQUIRE(o.rabc() == Approx(incident + dark).epsilon(1e-12));
        REQUIRE(o.r0() == Approx(dark).margin(1e-15));
    }
}

TEST_CASE("phase-aware octets also cancel in epsilon", "[sorkin]") {
    constexpr double pi = std::numbers::pi;
    CounterRng rng(43);
    for (int trial = 0; trial < 200; ++trial) {
        const std::array<double, 3> amps{uniform(rng, 0.1, 1.0), uniform(rng, 0.1, 1.0),
                                         uniform(rng, 0.1, 1.0)};
        const std::array<double, 3> phases{uniform(rng, -pi / 4, pi / 4),
                                           uniform(rng, -pi / 4, pi / 4),
                                           uniform(rng, -pi / 4, pi / 4)};
        const double incident = uniform(rng, 1e3, 1e7);
        const double dark = uniform(rng, 0.0, 1e3);
        const RateOctet o = born_rule_octet(amps, phases, incident, dark);
        const double scale = delta(o) > 0.0 ? kappa(o) : epsilon(o) / incident;
        REQUIRE(std::abs(scale) <= 1e-12);
    }
}

TEST_CASE("interferometer rate handles edge configurations", "[sorkin]") {
    const std::array<double, 3> amps{1.0, 1.0, 1.0};
    SECTION("all closed measures only dark counts") {
        REQUIRE(interferometer_rate(ShutterConfig::none(), amps, 1e6, 25.0) == Approx(25.0));
    }
    SECTION("all open at the constructive point passes the incident rate") {
        REQUIRE(interferometer_rate(ShutterConfig::all_open(), amps, 1e6, 0.0) == Approx(1e6));
    }
    SECTION("single equal path passes one ninth") {
        REQUIRE(interferometer_rate(ShutterConfig::only(Path::B), amps, 9e6, 0.0) == Approx(1e6));
    }
    SECTION("pair of equal paths passes four ninths") {
        REQUIRE(interferometer_rate(ShutterConfig::open_bc(), amps, 9e6, 0.0) == Approx(4e6));
    }
    SECTION("zero amplitudes give the dark rate") {
        REQUIRE(interferometer_rate(ShutterConfig::all_open(), {0.0, 0.0, 0.0}, 1e6, 7.0) ==
                Approx(7.0));
    }
    SECTION("zero-phase overload agrees with the phase-free one") {
        const std::array<double, 3> uneven{0.4, 0.7, 0.9};
        for (ShutterConfig c : ShutterConfig::all()) {
            REQUIRE(interferometer_rate(c, uneven, {0.0, 0.0, 0.0}, 1e5, 3.0) ==
                    Approx(interferometer_rate(c, uneven, 1e5, 3.0)).margin(1e-9));
        }
    }
    SECTION("invalid inputs") {
        REQUIRE_THROWS_AS(interferometer_rate(ShutterConfig::all_open(), {-0.1, 1.0, 1.0}, 1e6, 0.0),
                          DomainError);
        REQUIRE_THROWS_AS(interferometer_rate(ShutterConfig::all_open(), amps, -1.0, 0.0),
                          DomainError);
        REQUIRE_THROWS_AS(interferometer_rate(ShutterConfig::all_open(), amps, 1e6, -1.0),
                          DomainError);
    }
}

TEST_CASE("randomized configuration order is a uniform permutation", "[sorkin]") {
    SECTION("always a permutation of all eight configurations") {
        for (std::uint64_t seed = 0; seed < 200; ++seed) {
            const auto order = randomized_config_order(seed);
            std::set<int> seen;
            for (ShutterConfig c : order) seen.insert(c.index());
            REQUIRE(seen.size() == 8);
        }
    }
    SECTION("each configuration leads the order with frequency 1/8") {
        constexpr int n = 10000;
        std::array<int, 8> first_counts{};
        for (int seed = 0; seed < n; ++seed)
            ++first_counts[static_cast<std::size_t>(randomized_config_order(
                                                         static_cast<std::uint64_t>(seed))[0]
                                                         .index())];
        // Binomial(n, 1/8): mean 1250, sigma = sqrt(n * 1/8 * 7/8) ~ 33.1.
        const double mean = n / 8.0;
        const double sigma = std::sqrt(n * (1.0 / 8.0) * (7.0 / 8.0));
        for (int count : first_counts) {
            REQUIRE(std::abs(count - mean) <= 3.0 * sigma);
        }
    }
    SECTION("deterministic in the seed") {
        const auto a = randomized_config_order(1234);
        const auto b = randomized_config_order(1234);
        for (int i = 0; i < 8; ++i)
            REQUIRE(a[static_cast<std::size_t>(i)].index() == b[static_cast<std::size_t>(i)].index());
    }
}

TEST_CASE("rate octet rejects non-finite rates", "[sorkin]") {
    RateOctet o;
    o[ShutterConfig::none()] = std::numeric_limits<double>::quiet_NaN();
    REQUIRE_THROWS_AS(epsilon(o), DomainError);
}
