#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace tcmf {

/// Uniform partition of [0,T]. Integrands are always evaluated at the left
/// knot of each step (predictable convention).
struct TimeGrid {
    double T = 0.0;
    std::size_t n_steps = 0;
    double dt = 0.0;
    std::vector<double> knots;  // n_steps + 1 strictly increasing, knots[0] = 0

    std::size_t n_knots() const { return knots.size(); }

    bool same_as(const TimeGrid& other) const {
        return n_steps == other.n_steps && T == other.T;
    }
};

inline TimeGrid build_grid(double T, std::size_t n_steps) {
    if (!(T > 0.0)) throw std::invalid_argument("build_grid: T must be > 0");
    if (n_steps < 1) throw std::invalid_argument("build_grid: n_steps must be >= 1");
    TimeGrid g;
    g.T = T;
    g.n_steps = n_steps;
    g.dt = T / static_cast<double>(n_steps);
    g.knots.resize(n_steps + 1);
    for (std::size_t i = 0; i <= n_steps; ++i)
        g.knots[i] = (static_cast<double>(i) / static_cast<double>(n_steps)) * T;
    g.knots.back() = T;
    return g;
}

}  // namespace tcmf
