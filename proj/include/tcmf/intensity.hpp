#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "tcmf/grid.hpp"
#include "tcmf/rng.hpp"

namespace tcmf {

enum class IntensityKind {
    deterministic_constant,
    deterministic_function,
    square_root_diffusion,
};

/// Specification of one nonnegative intensity component.
struct IntensityComponent {
    IntensityKind kind = IntensityKind::deterministic_constant;
    double level = 0.0;                          // constant model
    std::function<double(double)> fn;            // deterministic-function model
    double init = 0.0, mean_reversion = 0.0, vol = 0.0;  // square-root model

    static IntensityComponent constant(double level) {
        if (level < 0.0)
            throw std::invalid_argument("intensity level must be >= 0");
        IntensityComponent c;
        c.kind = IntensityKind::deterministic_constant;
        c.level = level;
        return c;
    }
    static IntensityComponent function(std::function<double(double)> f) {
        IntensityComponent c;
        c.kind = IntensityKind::deterministic_function;
        c.fn = std::move(f);
        return c;
    }
    static IntensityComponent square_root(double init, double mean_reversion,
                                          double level, double vol) {
        if (init < 0.0 || mean_reversion < 0.0 || level < 0.0 || vol < 0.0)
            throw std::invalid_argument("square-root intensity params must be >= 0");
        IntensityComponent c;
        c.kind = IntensityKind::square_root_diffusion;
        c.init = init;
        c.mean_reversion = mean_reversion;
        c.level = level;
        c.vol = vol;
        return c;
    }

    bool deterministic() const {
        return kind != IntensityKind::square_root_diffusion;
    }
};

/// Two-component intensity (lambda^B drives the Gaussian part, lambda^H the
/// jump part).
struct IntensityModel {
    IntensityComponent B;
    IntensityComponent H;

    static IntensityModel constant(double lamB, double lamH) {
        return {IntensityComponent::constant(lamB),
                IntensityComponent::constant(lamH)};
    }

    bool deterministic() const { return B.deterministic() && H.deterministic(); }
};

/// Sampled intensity trajectory on a grid; values per knot, all >= 0.
struct IntensityPath {
    TimeGrid grid;
    std::vector<double> lamB;  // one value per knot
    std::vector<double> lamH;
};

namespace detail {

inline std::vector<double> sample_component(const IntensityComponent& c,
                                            const TimeGrid& grid,
                                            RngStream stream) {
    std::vector<double> out(grid.n_knots());
    switch (c.kind) {
        case IntensityKind::deterministic_constant:
            std::fill(out.begin(), out.end(), c.level);
            break;
        case IntensityKind::deterministic_function:
            for (std::size_t i = 0; i < out.size(); ++i) {
                out[i] = c.fn(grid.knots[i]);
                if (out[i] < 0.0)
                    throw std::invalid_argument(
                        "intensity function returned a negative value");
            }
            break;
        case IntensityKind::square_root_diffusion: {
            // Full truncation scheme: negative excursions of the latent state
            // are clipped inside drift and diffusion, the emitted path is the
            // clipped value, so it stays nonnegative.
            double x = c.init;
            out[0] = std::max(x, 0.0);
            const double dt = grid.dt;
            const double sq_dt = std::sqrt(dt);
            for (std::size_t i = 1; i < out.size(); ++i) {
                const double xp = std::max(x, 0.0);
                x += c.mean_reversion * (c.level - xp) * dt +
                     c.vol * std::sqrt(xp) * sq_dt * stream.next_gaussian();
                out[i] = std::max(x, 0.0);
            }
            break;
        }
    }
    return out;
}

}  // namespace detail

/// Deterministic kinds ignore the seed; the square-root kind is reproducible
/// per seed.
inline IntensityPath sample_intensity(const IntensityModel& model,
                                      const TimeGrid& grid,
                                      std::uint64_t seed) {
    RngStream root(seed);
    IntensityPath p;
    p.grid = grid;
    p.lamB = detail::sample_component(model.B, grid,
                                      root.child(stream_tag::intensity_b));
    p.lamH = detail::sample_component(model.H, grid,
                                      root.child(stream_tag::intensity_h));
    return p;
}

}  // namespace tcmf
