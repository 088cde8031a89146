#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "tcmf/grid.hpp"
#include "tcmf/intensity.hpp"
#include "tcmf/levy.hpp"
#include "tcmf/rng.hpp"

namespace tcmf {

/// Value of an integrand over the mark space: one slot for the Gaussian
/// component (mark 0) and one per jump mark.
struct MarkFunction {
    double v0 = 0.0;
    std::vector<double> v;

    static MarkFunction zeros(std::size_t n_marks) {
        MarkFunction m;
        m.v.assign(n_marks, 0.0);
        return m;
    }
    static MarkFunction constant(double value, std::size_t n_marks) {
        MarkFunction m;
        m.v0 = value;
        m.v.assign(n_marks, value);
        return m;
    }
};

/// ||alpha||_{lambda}^2 = alpha(0)^2 lamB + sum_k alpha(z_k)^2 lamH nu_k.
inline double lambda_seminorm_sq(const MarkFunction& alpha, double lamB,
                                 double lamH, const LevyGrid& lg) {
    double s = alpha.v0 * alpha.v0 * lamB;
    for (std::size_t k = 0; k < lg.n_marks(); ++k)
        s += alpha.v[k] * alpha.v[k] * lamH * lg.weights[k];
    return s;
}

inline double lambda_seminorm(const MarkFunction& alpha, double lamB,
                              double lamH, const LevyGrid& lg) {
    return std::sqrt(lambda_seminorm_sq(alpha, lamB, lamH, lg));
}

/// One sampled realization of the mixture noise on a grid.
///
/// dG[i] is the Gaussian increment of step i (variance lamB_i dt). For the
/// jump part, counts[i*M+k] is the raw Poisson count of mark k in step i and
/// comp[i*M+k] = counts - lamH_i nu_k dt the compensated count increment;
/// the measure increments the integral by phi(z_k) * comp. dJ(i,k) exposes
/// the jump-size-weighted increment z_k * comp used by the CSV export.
struct NoiseIncrements {
    TimeGrid grid;
    std::size_t n_marks = 0;
    std::uint64_t seed = 0;
    std::vector<double> dG;           // n_steps
    std::vector<std::uint32_t> counts;  // n_steps * n_marks
    std::vector<double> comp;         // n_steps * n_marks

    double compensated(std::size_t step, std::size_t mark) const {
        return comp[step * n_marks + mark];
    }
    std::uint32_t count(std::size_t step, std::size_t mark) const {
        return counts[step * n_marks + mark];
    }
    double dJ(std::size_t step, std::size_t mark, const LevyGrid& lg) const {
        return lg.marks[mark] * compensated(step, mark);
    }
};

/// Draw the Gaussian and compensated Poisson increments conditionally on an
/// intensity path. Gaussian and per-mark Poisson draws come from independent
/// sub-streams of the seed, one per (step, mark), so results do not depend
/// on evaluation order.
inline NoiseIncrements sample_noise(const IntensityPath& ip, const LevyGrid& lg,
                                    std::uint64_t seed) {
    const TimeGrid& grid = ip.grid;
    NoiseIncrements ni;
    ni.grid = grid;
    ni.n_marks = lg.n_marks();
    ni.seed = seed;
    ni.dG.resize(grid.n_steps);
    ni.counts.resize(grid.n_steps * ni.n_marks);
    ni.comp.resize(grid.n_steps * ni.n_marks);

    RngStream root(seed);
    RngStream gauss = root.child(stream_tag::gaussian);
    RngStream pois = root.child(stream_tag::poisson);
    const double dt = grid.dt;
    for (std::size_t i = 0; i < grid.n_steps; ++i) {
        const double varG = ip.lamB[i] * dt;
        ni.dG[i] = varG > 0.0 ? std::sqrt(varG) * gauss.child(i).next_gaussian() : 0.0;
        for (std::size_t k = 0; k < ni.n_marks; ++k) {
            const double mean = ip.lamH[i] * lg.weights[k] * dt;
            const std::uint64_t n =
                mean > 0.0 ? pois.child(i, k).next_poisson(mean) : 0;
            ni.counts[i * ni.n_marks + k] = static_cast<std::uint32_t>(n);
            ni.comp[i * ni.n_marks + k] = static_cast<double>(n) - mean;
        }
    }
    return ni;
}

/// Mark subset for windows of the random measure Lambda.
struct MarkWindow {
    bool include_gaussian = true;
    std::vector<std::size_t> mark_indices;  // indices into LevyGrid

    static MarkWindow all(const LevyGrid& lg) {
        MarkWindow w;
        w.mark_indices.resize(lg.n_marks());
        for (std::size_t k = 0; k < lg.n_marks(); ++k) w.mark_indices[k] = k;
        return w;
    }
    static MarkWindow gaussian_only() { return MarkWindow{true, {}}; }
    static MarkWindow jumps_only(const LevyGrid& lg) {
        MarkWindow w = all(lg);
        w.include_gaussian = false;
        return w;
    }
};

/// Lambda((s,t] x subset): deterministic mass of the variance measure given
/// the intensity path. A step contributes iff its interval lies in (s,t].
inline double lambda_measure(double s, double t, const MarkWindow& window,
                             const IntensityPath& ip, const LevyGrid& lg) {
    const TimeGrid& grid = ip.grid;
    if (!(s >= 0.0 && s < t && t <= grid.T + 1e-12 * grid.T))
        throw std::invalid_argument("lambda_measure: need 0 <= s < t <= T");
    for (std::size_t k : window.mark_indices)
        if (k >= lg.n_marks())
            throw std::invalid_argument("lambda_measure: mark index out of range");
    const double tol = 1e-9 * grid.dt;
    double total = 0.0;
    for (std::size_t i = 0; i < grid.n_steps; ++i) {
        if (grid.knots[i] < s - tol || grid.knots[i + 1] > t + tol) continue;
        if (window.include_gaussian) total += ip.lamB[i] * grid.dt;
        for (std::size_t k : window.mark_indices)
            total += ip.lamH[i] * lg.weights[k] * grid.dt;
    }
    return total;
}

/// mu((s,t] x subset): the sampled measure of a window, i.e. the integral of
/// the window indicator against the noise.
inline double measure_of_window(double s, double t, const MarkWindow& window,
                                const NoiseIncrements& ni) {
    const TimeGrid& grid = ni.grid;
    if (!(s >= 0.0 && s < t && t <= grid.T + 1e-12 * grid.T))
        throw std::invalid_argument("measure_of_window: need 0 <= s < t <= T");
    const double tol = 1e-9 * grid.dt;
    double total = 0.0;
    for (std::size_t i = 0; i < grid.n_steps; ++i) {
        if (grid.knots[i] < s - tol || grid.knots[i + 1] > t + tol) continue;
        if (window.include_gaussian) total += ni.dG[i];
        for (std::size_t k : window.mark_indices) total += ni.compensated(i, k);
    }
    return total;
}

/// Non-anticipating integral of a step-indexed integrand against the noise:
///   I(phi) = sum_i phi_i(0) dG_i + sum_{i,k} phi_i(z_k) (N_ik - lamH nu_k dt).
/// phi(i, slot) is evaluated per step with slot 0 = Gaussian and slot k+1 =
/// mark k; the caller must only use information up to the left knot t_i.
template <class Phi>
double integrate(Phi&& phi, const NoiseIncrements& ni) {
    double total = 0.0;
    for (std::size_t i = 0; i < ni.grid.n_steps; ++i) {
        total += phi(i, 0) * ni.dG[i];
        for (std::size_t k = 0; k < ni.n_marks; ++k)
            total += phi(i, k + 1) * ni.compensated(i, k);
    }
    return total;
}

}  // namespace tcmf
