#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "kappasim/detail/optim.hpp"
#include "kappasim/errors.hpp"

namespace kappasim {

/// Equal-width histogram. Bins are right-closed: a value on an interior edge
/// belongs to the lower bin, the minimum clamps into the first bin, so the
/// maximum always lands in the last bin.
struct Histogram {
    std::vector<double> edges;     // n_bins + 1, strictly ascending
    std::vector<long long> counts; // n_bins

    std::size_t n_bins() const { return counts.size(); }
    long long total() const {
        long long t = 0;
        for (long long c : counts) t += c;
        return t;
    }
    double bin_center(std::size_t i) const { return 0.5 * (edges[i] + edges[i + 1]); }
    double bin_width() const { return edges[1] - edges[0]; }
};

inline Histogram build_histogram(const std::vector<double>& data, std::size_t n_bins) {
    if (data.empty()) throw DomainError("build_histogram: no data");
    if (n_bins < 1) throw DomainError("build_histogram: need at least one bin");
    double lo = data.front(), hi = data.front();
    for (double v : data) {
        if (!std::isfinite(v)) throw DomainError("build_histogram: data must be finite");
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (lo == hi) { // degenerate range: widen symmetrically to keep edges ascending
        lo -= 0.5;
        hi += 0.5;
    }
    Histogram h;
    h.edges.resize(n_bins + 1);
    const double width = (hi - lo) / static_cast<double>(n_bins);
    for (std::size_t i = 0; i <= n_bins; ++i)
        h.edges[i] = (i == n_bins) ? hi : lo + width * static_cast<double>(i);
    h.counts.assign(n_bins, 0);
    for (double v : data) {
        const double scaled = (v - lo) / width;
        auto idx = static_cast<long long>(std::ceil(scaled)) - 1; // right-closed bins
        idx = std::clamp<long long>(idx, 0, static_cast<long long>(n_bins) - 1);
        ++h.counts[static_cast<std::size_t>(idx)];
    }
    return h;
}

/// Freedman-Diaconis bin count (width 2 IQR / n^{1/3}), never below 10 bins.
inline std::size_t freedman_diaconis_bins(const std::vector<double>& data) {
    constexpr std::size_t min_bins = 10;
    if (data.size() < 2) return min_bins;
    std::vector<double> sorted = data;
    std::sort(sorted.begin(), sorted.end());
    auto quantile = [&](double p) {
        const double pos = p * static_cast<double>(sorted.size() - 1);
        const auto i = static_cast<std::size_t>(pos);
        if (i + 1 >= sorted.size()) return sorted.back();
        const double frac = pos - static_cast<double>(i);
        return sorted[i] + frac * (sorted[i + 1] - sorted[i]);
    };
    const double iqr = quantile(0.75) - quantile(0.25);
    const double range = sorted.back() - sorted.front();
    if (iqr <= 0.0 || range <= 0.0) return min_bins;
    const double width = 2.0 * iqr / std::cbrt(static_cast<double>(data.size()));
    const auto bins = static_cast<std::size_t>(std::ceil(range / width));
    return std::max(min_bins, bins);
}

enum class FitMethod { MomentsOnData, LeastSquaresOnHistogram };

inline std::string to_string(FitMethod m) {
    return m == FitMethod::MomentsOnData ? "moments_on_data" : "least_squares_on_histogram";
}

struct NormalFit {
    double mu = 0.0;
    double sigma = 0.0;
    double amplitude = 0.0; // peak height; only meaningful for the histogram fit
    FitMethod method = FitMethod::MomentsOnData;
    std::size_t n = 0; // number of samples (or histogram total)
};

struct Summary {
    double mean = 0.0;
    double std_dev = 0.0; // corrected (n - 1)
    double std_error = 0.0;
    std::size_t n = 0;
};

inline Summary summary(const std::vector<double>& data) {
    if (data.size() < 2) throw DomainError("summary: need at least two samples");
    double mean = 0.0;
    for (double v : data) {
        if (!std::isfinite(v)) throw DomainError("summary: data must be finite");
        mean += v;
    }
    mean /= static_cast<double>(data.size());
    double ss = 0.0;
    for (double v : data) ss += (v - mean) * (v - mean);
    Summary s;
    s.n = data.size();
    s.mean = mean;
    s.std_dev = std::sqrt(ss / static_cast<double>(data.size() - 1));
    s.std_error = s.std_dev / std::sqrt(static_cast<double>(data.size()));
    return s;
}

/// Least-squares Gaussian fit A exp(-(x - mu)^2 / (2 sigma^2)) to histogram
/// bin centers and counts. Needs at least three occupied bins.
inline NormalFit fit_normal(const Histogram& hist) {
    std::size_t occupied = 0;
    for (long long c : hist.counts) {
        if (c > 0) ++occupied;
    }
    if (occupied < 3)
        throw IllConditionedError("fit_normal: histogram has fewer than three occupied bins");

    // Moment-based initial guess from the binned data.
    double total = 0.0, mean = 0.0;
    for (std::size_t i = 0; i < hist.n_bins(); ++i) {
        total += static_cast<double>(hist.counts[i]);
        mean += static_cast<double>(hist.counts[i]) * hist.bin_center(i);
    }
    mean /= total;
    double var = 0.0;
    double peak = 0.0;
    for (std::size_t i = 0; i < hist.n_bins(); ++i) {
        const double d = hist.bin_center(i) - mean;
        var += static_cast<double>(hist.counts[i]) * d * d;
        peak = std::max(peak, static_cast<double>(hist.counts[i]));
    }
    var /= total;
    const double sigma0 = std::max(std::sqrt(var), 0.25 * hist.bin_width());

    auto residuals = [&](const std::vector<double>& p) {
        std::vector<double> r(hist.n_bins());
        for (std::size_t i = 0; i < hist.n_bins(); ++i) {
            const double d = hist.bin_center(i) - p[1];
            r[i] = p[0] * std::exp(-0.5 * d * d / (p[2] * p[2])) - static_cast<double>(hist.counts[i]);
        }
        return r;
    };
    const double range = hist.edges.back() - hist.edges.front();
    std::vector<double> params{peak, mean, sigma0};
    const std::vector<double> lo{1e-12, hist.edges.front() - range, 1e-3 * hist.bin_width()};
    const std::vector<double> hi{10.0 * peak + 10.0, hist.edges.back() + range, 10.0 * range};
    detail::levenberg_marquardt(residuals, params, lo, hi, 500, 1e-14);

    NormalFit fit;
    fit.amplitude = params[0];
    fit.mu = params[1];
    fit.sigma = std::abs(params[2]);
    fit.method = FitMethod::LeastSquaresOnHistogram;
    fit.n = static_cast<std::size_t>(hist.total());
    return fit;
}

/// Normal fit of raw samples by the requested method. The histogram method
/// bins with the Freedman-Diaconis rule first.
inline NormalFit fit_normal(const std::vector<double>& data, FitMethod method) {
    if (method == FitMethod::MomentsOnData) {
        const Summary s = summary(data); // throws for n < 2
        if (s.std_dev == 0.0)
            throw IllConditionedError("fit_normal: all samples are identical");
        NormalFit fit;
        fit.mu = s.mean;
        fit.sigma = s.std_dev;
        fit.amplitude = 0.0;
        fit.method = FitMethod::MomentsOnData;
        fit.n = s.n;
        return fit;
    }
    return fit_normal(build_histogram(data, freedman_diaconis_bins(data)));
}

/// Pass iff the final running-mean increment |mean_N - mean_{N+1}| is below
/// `tolerance`; the full increment trace is returned for inspection.
struct ConvergenceTrace {
    bool converged = false;
    std::vector<double> increments; // size n - 1
};

inline ConvergenceTrace convergence_check(const std::vector<double>& samples, double tolerance) {
    if (samples.size() < 2) throw DomainError("convergence_check: need at least two samples");
    if (!(tolerance > 0.0)) throw DomainError("convergence_check: tolerance must be positive");
    ConvergenceTrace trace;
    trace.increments.reserve(samples.size() - 1);
    double mean = samples.front();
    for (std::size_t i = 1; i < samples.size(); ++i) {
        const double next = mean + (samples[i] - mean) / static_cast<double>(i + 1);
        trace.increments.push_back(std::abs(next - mean));
        mean = next;
    }
    trace.converged = trace.increments.back() < tolerance;
    return trace;
}

} // namespace kappasim
