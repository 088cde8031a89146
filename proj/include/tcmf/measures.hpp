#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "tcmf/grid.hpp"

namespace tcmf {

/// Equal-weight empirical measure on R; atoms kept sorted.
struct EmpiricalMeasure {
    std::vector<double> atoms;

    std::size_t size() const { return atoms.size(); }

    double mean() const {
        double s = 0.0;
        for (double a : atoms) s += a;
        return s / static_cast<double>(atoms.size());
    }

    /// Quantile resample to n atoms (used to compare measures of unequal
    /// size); exact when n equals the current size.
    std::vector<double> quantiles(std::size_t n) const {
        std::vector<double> q(n);
        const std::size_t N = atoms.size();
        for (std::size_t j = 0; j < n; ++j) {
            const double p = (static_cast<double>(j) + 0.5) / static_cast<double>(n);
            std::size_t idx = static_cast<std::size_t>(p * static_cast<double>(N));
            if (idx >= N) idx = N - 1;
            q[j] = atoms[idx];
        }
        return q;
    }
};

inline EmpiricalMeasure empirical(std::vector<double> values) {
    if (values.empty())
        throw std::invalid_argument("empirical: need at least one atom");
    std::sort(values.begin(), values.end());
    return EmpiricalMeasure{std::move(values)};
}

/// <g, P> = (1/N) sum g(atom_i).
template <class G>
double mean_functional(const EmpiricalMeasure& P, G&& g) {
    double s = 0.0;
    for (double a : P.atoms) s += g(a);
    return s / static_cast<double>(P.atoms.size());
}

/// W2 between equal-weight empirical measures. In one dimension the optimal
/// coupling pairs sorted atoms; unequal sizes are quantile-resampled to the
/// larger count first.
inline double wasserstein2(const EmpiricalMeasure& P, const EmpiricalMeasure& Q) {
    if (P.atoms.empty() || Q.atoms.empty())
        throw std::invalid_argument("wasserstein2: empty measure");
    const std::size_t n = std::max(P.size(), Q.size());
    auto cost = [n](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = a[i] - b[i];
            s += d * d;
        }
        return std::sqrt(s / static_cast<double>(n));
    };
    if (P.size() == Q.size()) return cost(P.atoms, Q.atoms);
    return cost(P.quantiles(n), Q.quantiles(n));
}

/// Time-indexed family of empirical marginals (one per knot), interpreted as
/// piecewise constant on grid cells.
struct LawFlow {
    TimeGrid grid;
    std::vector<EmpiricalMeasure> marginals;  // n_knots entries

    const EmpiricalMeasure& at(std::size_t knot) const { return marginals[knot]; }

    static LawFlow dirac(const TimeGrid& grid, double x, std::size_t n_atoms = 1) {
        LawFlow f;
        f.grid = grid;
        f.marginals.assign(grid.n_knots(),
                           EmpiricalMeasure{std::vector<double>(n_atoms, x)});
        return f;
    }
};

/// sup over knots of the marginal W2 distance. This lower-bounds the
/// path-space metric and is the convergence monitor for the Picard-on-law
/// iteration.
inline double law_flow_distance(const LawFlow& a, const LawFlow& b) {
    if (!a.grid.same_as(b.grid))
        throw std::invalid_argument("law_flow_distance: grid mismatch");
    if (a.marginals.size() != b.marginals.size())
        throw std::invalid_argument("law_flow_distance: knot count mismatch");
    double d = 0.0;
    for (std::size_t i = 0; i < a.marginals.size(); ++i)
        d = std::max(d, wasserstein2(a.marginals[i], b.marginals[i]));
    return d;
}

}  // namespace tcmf
