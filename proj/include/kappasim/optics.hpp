#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include "kappasim/detail/optim.hpp"
#include "kappasim/errors.hpp"
#include "kappasim/rng.hpp"

namespace kappasim {

/// Dense complex transfer matrix for 2- or 3-port linear optical networks.
/// Entry (row, col) is the field amplitude coupling input port `col` to
/// output port `row`; ports are 0-indexed.
class TransferMatrix {
public:
    explicit TransferMatrix(int dim) : dim_(dim) {
        if (dim != 2 && dim != 3) throw DomainError("TransferMatrix: dimension must be 2 or 3");
        m_.fill({0.0, 0.0});
    }

    static TransferMatrix identity(int dim) {
        TransferMatrix m(dim);
        for (int i = 0; i < dim; ++i) m.at(i, i) = 1.0;
        return m;
    }

    int dim() const noexcept { return dim_; }

    std::complex<double>& at(int row, int col) {
        check_index(row, col);
        return m_[static_cast<std::size_t>(row * dim_ + col)];
    }
    const std::complex<double>& at(int row, int col) const {
        check_index(row, col);
        return m_[static_cast<std::size_t>(row * dim_ + col)];
    }

    TransferMatrix operator*(const TransferMatrix& rhs) const {
        if (dim_ != rhs.dim_) throw DomainError("TransferMatrix: dimension mismatch in product");
        TransferMatrix out(dim_);
        for (int r = 0; r < dim_; ++r) {
            for (int c = 0; c < dim_; ++c) {
                std::complex<double> s{0.0, 0.0};
                for (int k = 0; k < dim_; ++k) s += at(r, k) * rhs.at(k, c);
                out.at(r, c) = s;
            }
        }
        return out;
    }

    TransferMatrix adjoint() const {
        TransferMatrix out(dim_);
        for (int r = 0; r < dim_; ++r)
            for (int c = 0; c < dim_; ++c) out.at(r, c) = std::conj(at(c, r));
        return out;
    }

private:
    void check_index(int row, int col) const {
        if (row < 0 || row >= dim_ || col < 0 || col >= dim_)
            throw DomainError("TransferMatrix: index out of range");
    }

    int dim_;
    std::array<std::complex<double>, 9> m_;
};

/// One interferometer path: field transmission amplitude and accumulated phase.
struct PathSpec {
    double loss_amplitude = 1.0; // in [0, 1]; 1 = lossless
    double phase = 0.0;          // radians, e^{+i phase} convention

    void validate() const {
        if (!(loss_amplitude >= 0.0 && loss_amplitude <= 1.0) || !std::isfinite(loss_amplitude))
            throw DomainError("PathSpec: loss amplitude must lie in [0, 1]");
        if (!std::isfinite(phase)) throw DomainError("PathSpec: phase must be finite");
    }
};

/// Intensity efficiencies of a 1-to-3 splitter, per diffraction order.
/// Interferometer paths map onto orders as A -> -1, B -> 0, C -> +1.
struct SplitterSpec {
    double t_minus1 = 0.0;
    double t_zero = 0.0;
    double t_plus1 = 0.0;

    void validate() const {
        for (double t : {t_minus1, t_zero, t_plus1}) {
            if (!(t >= 0.0 && t <= 1.0) || !std::isfinite(t))
                throw DomainError("SplitterSpec: efficiencies must lie in [0, 1]");
        }
        if (t_minus1 + t_zero + t_plus1 > 1.0 + 1e-12)
            throw DomainError("SplitterSpec: total efficiency exceeds 1");
    }

    /// Efficiencies in path order (A, B, C).
    std::array<double, 3> path_efficiencies() const { return {t_minus1, t_zero, t_plus1}; }
};

/// Symmetric beamsplitter with intensity reflectivity `reflectivity`:
/// [[sqrt(1-R), i sqrt(R)], [i sqrt(R), sqrt(1-R)]].
inline TransferMatrix beamsplitter(double reflectivity) {
    if (!(reflectivity >= 0.0 && reflectivity <= 1.0) || !std::isfinite(reflectivity))
        throw DomainError("beamsplitter: reflectivity must lie in [0, 1]");
    const double t = std::sqrt(1.0 - reflectivity);
    const double r = std::sqrt(reflectivity);
    TransferMatrix m(2);
    m.at(0, 0) = t;
    m.at(0, 1) = {0.0, r};
    m.at(1, 0) = {0.0, r};
    m.at(1, 1) = t;
    return m;
}

/// Diagonal propagation matrix diag(L_k e^{i phi_k}) for two paths.
inline TransferMatrix path_matrix(const PathSpec& p1, const PathSpec& p2) {
    p1.validate();
    p2.validate();
    TransferMatrix m(2);
    m.at(0, 0) = std::polar(p1.loss_amplitude, p1.phase);
    m.at(1, 1) = std::polar(p2.loss_amplitude, p2.phase);
    return m;
}

/// Diagonal propagation matrix for three paths.
inline TransferMatrix path_matrix(const PathSpec& p1, const PathSpec& p2, const PathSpec& p3) {
    p1.validate();
    p2.validate();
    p3.validate();
    TransferMatrix m(3);
    m.at(0, 0) = std::polar(p1.loss_amplitude, p1.phase);
    m.at(1, 1) = std::polar(p2.loss_amplitude, p2.phase);
    m.at(2, 2) = std::polar(p3.loss_amplitude, p3.phase);
    return m;
}

/// Matrix product of network elements in propagation order: the first element
/// of `elements` is the one light traverses first, so the result is
/// elements[n-1] * ... * elements[0].
inline TransferMatrix compose(std::span<const TransferMatrix> elements) {
    if (elements.empty()) throw DomainError("compose: element list is empty");
    TransferMatrix m = elements.front();
    for (std::size_t i = 1; i < elements.size(); ++i) m = elements[i] * m;
    return m;
}

inline TransferMatrix compose(std::initializer_list<TransferMatrix> elements) {
    const std::vector<TransferMatrix> v(elements);
    return compose(std::span<const TransferMatrix>(v));
}

/// Output intensities for a unit field entering `input_port`: the squared
/// magnitudes of the matrix column action. Sums to 1 exactly iff lossless.
inline std::vector<double> output_intensities(const TransferMatrix& network, int input_port) {
    if (input_port < 0 || input_port >= network.dim())
        throw DomainError("output_intensities: input port out of range");
    std::vector<double> out(static_cast<std::size_t>(network.dim()));
    for (int r = 0; r < network.dim(); ++r) out[static_cast<std::size_t>(r)] = std::norm(network.at(r, input_port));
    return out;
}

/// Largest absolute entry of M^dagger M - I; 0 for a unitary network.
inline double max_unitarity_deviation(const TransferMatrix& m) {
    const TransferMatrix g = m.adjoint() * m;
    double dev = 0.0;
    for (int r = 0; r < m.dim(); ++r) {
        for (int c = 0; c < m.dim(); ++c) {
            const std::complex<double> expect = (r == c) ? 1.0 : 0.0;
            dev = std::max(dev, std::abs(g.at(r, c) - expect));
        }
    }
    return dev;
}

/// Three-port splitter built from three embedded 2x2 beamsplitters: the first
/// mixes ports (0,1) with ratio r1, the second ports (0,2) with r2, the third
/// ports (1,2) with r3, multiplied in that written order.
inline TransferMatrix tritter(double r1, double r2, double r3) {
    for (double r : {r1, r2, r3}) {
        if (!(r >= 0.0 && r <= 1.0) || !std::isfinite(r))
            throw DomainError("tritter: splitting ratios must lie in [0, 1]");
    }
    auto embed = [](int a, int b, double ratio) {
        const double t = std::sqrt(1.0 - ratio);
        const double r = std::sqrt(ratio);
        TransferMatrix m = TransferMatrix::identity(3);
        m.at(a, a) = t;
        m.at(a, b) = {0.0, r};
        m.at(b, a) = {0.0, r};
        m.at(b, b) = t;
        return m;
    };
    return embed(0, 1, r1) * (embed(0, 2, r2) * embed(1, 2, r3));
}

struct TritterSolution {
    std::array<double, 3> ratios{0.0, 0.0, 0.0};
    double residual = 0.0; // max absolute deviation of achieved from target intensities
};

/// Finds splitting ratios so light entering port 0 leaves with the target
/// intensities. Deterministic multi-start local least squares (fixed seed,
/// tolerance 1e-9 on intensities, at most 1e4 iterations in total). The third
/// ratio never affects port-0 input and is reported as 0 by convention.
inline TritterSolution solve_tritter_ratios(const std::array<double, 3>& target_intensities) {
    double sum = 0.0;
    for (double t : target_intensities) {
        if (!(t >= 0.0) || !std::isfinite(t))
            throw DomainError("solve_tritter_ratios: targets must be nonnegative");
        sum += t;
    }
    if (sum > 1.0 + 1e-12)
        throw NoSolutionError("solve_tritter_ratios: targets exceed unit total intensity", sum - 1.0);

    auto max_deviation = [&](const std::vector<double>& p) {
        const std::vector<double> out = output_intensities(tritter(p[0], p[1], p[2]), 0);
        double dev = 0.0;
        for (int i = 0; i < 3; ++i)
            dev = std::max(dev, std::abs(out[static_cast<std::size_t>(i)] - target_intensities[static_cast<std::size_t>(i)]));
        return dev;
    };
    auto residuals = [&](const std::vector<double>& p) {
        const std::vector<double> out = output_intensities(tritter(p[0], p[1], p[2]), 0);
        std::vector<double> r(3);
        for (int i = 0; i < 3; ++i)
            r[static_cast<std::size_t>(i)] = out[static_cast<std::size_t>(i)] - target_intensities[static_cast<std::size_t>(i)];
        return r;
    };

    const std::vector<double> lo{0.0, 0.0, 0.0};
    const std::vector<double> hi{1.0, 1.0, 1.0};
    constexpr long max_total_iters = 10000;
    long iters = 0;

    std::vector<std::vector<double>> starts = {
        {0.5, 1.0 / 3.0, 0.0}, {0.25, 0.25, 0.0}, {0.75, 0.5, 0.0}, {0.1, 0.9, 0.0}, {0.9, 0.1, 0.0}};
    CounterRng rng(derive_seed(0x7417734u, {0}));
    auto uniform = [&rng]() { return static_cast<double>(rng()) / static_cast<double>(CounterRng::max()); };
    for (int k = 0; k < 8; ++k) starts.push_back({uniform(), uniform(), 0.0});

    std::vector<double> best = starts.front();
    double best_dev = max_deviation(best);
    for (auto& start : starts) {
        if (iters >= max_total_iters) break;
        std::vector<double> p = start;
        detail::levenberg_marquardt(residuals, p, lo, hi,
                                    static_cast<int>(max_total_iters - iters), 1e-16, &iters);
        const double dev = max_deviation(p);
        if (dev < best_dev) {
            best = p;
            best_dev = dev;
        }
        if (best_dev <= 1e-10) break;
    }
    best[2] = 0.0; // flat direction from port 0; canonical value
    best_dev = max_deviation(best);

    if (best_dev > 1e-9)
        throw NoSolutionError("solve_tritter_ratios: no ratio triple reaches the target split", best_dev);
    return TritterSolution{{best[0], best[1], best[2]}, best_dev};
}

/// Visibility of a two-path interference fringe for per-path intensity
/// efficiencies t_i, t_j (double-pass geometry: field amplitude per path is
/// proportional to its intensity efficiency): V = 2 t_i t_j / (t_i^2 + t_j^2).
inline double two_path_visibility(double t_i, double t_j) {
    if (t_i == 0.0 && t_j == 0.0)
        throw UndefinedValueError("two_path_visibility: undefined when both efficiencies vanish");
    for (double t : {t_i, t_j}) {
        if (!(t > 0.0 && t <= 1.0) || !std::isfinite(t))
            throw DomainError("two_path_visibility: efficiencies must lie in (0, 1]");
    }
    return 2.0 * t_i * t_j / (t_i * t_i + t_j * t_j);
}

/// Pairwise two-path visibilities (V_AB, V_AC, V_BC) from splitter efficiencies.
inline std::array<double, 3> pairwise_visibilities(const SplitterSpec& s) {
    s.validate();
    return {two_path_visibility(s.t_minus1, s.t_zero),
            two_path_visibility(s.t_minus1, s.t_plus1),
            two_path_visibility(s.t_zero, s.t_plus1)};
}

/// Fringe visibility (max - min) / (max + min) of sampled intensities.
inline double fringe_visibility(std::span<const double> intensity_samples) {
    if (intensity_samples.empty()) throw DomainError("fringe_visibility: no samples");
    double lo = intensity_samples.front(), hi = intensity_samples.front();
    for (double v : intensity_samples) {
        if (!(v >= 0.0) || !std::isfinite(v))
            throw DomainError("fringe_visibility: intensities must be nonnegative");
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi + lo == 0.0)
        throw UndefinedValueError("fringe_visibility: undefined for identically zero fringe");
    return (hi - lo) / (hi + lo);
}

/// Intrinsic quantum bit error rate bound of an interferometric qubit link:
/// QBER = (1 - V) / 2.
inline double qber_from_visibility(double visibility) {
    if (!(visibility >= 0.0 && visibility <= 1.0) || !std::isfinite(visibility))
        throw DomainError("qber_from_visibility: visibility must lie in [0, 1]");
    return 0.5 * (1.0 - visibility);
}

} // namespace kappasim
