#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace tcmf {

/// Finite mark grid standing in for the jump measure nu. Mark 0 is reserved
/// for the Gaussian slot and never appears here.
struct LevyGrid {
    std::vector<double> marks;    // nonzero jump sizes z_k
    std::vector<double> weights;  // nu-mass of each mark cell, > 0
    double truncation = 0.0;      // smallest |z| retained

    std::size_t n_marks() const { return marks.size(); }

    double total_mass() const {
        double s = 0.0;
        for (double w : weights) s += w;
        return s;
    }

    double second_moment() const {
        double s = 0.0;
        for (std::size_t k = 0; k < marks.size(); ++k)
            s += marks[k] * marks[k] * weights[k];
        return s;
    }

    static LevyGrid finite_atoms(std::vector<double> marks,
                                 std::vector<double> weights) {
        if (marks.size() != weights.size())
            throw std::invalid_argument("levy: marks/weights size mismatch");
        for (double z : marks)
            if (z == 0.0)
                throw std::invalid_argument("levy: mark 0 is reserved");
        for (double w : weights)
            if (!(w > 0.0))
                throw std::invalid_argument("levy: weights must be > 0");
        LevyGrid g;
        g.marks = std::move(marks);
        g.weights = std::move(weights);
        return g;
    }
};

enum class LevyFamily {
    finite_atoms,
    two_sided_uniform,  // density `height` on [-a,-eps] u [eps,a]
    exp_tails,          // density c * exp(-|z|) / |z|^(1+alpha) for |z| in [eps, zmax]
};

struct LevySpec {
    LevyFamily family = LevyFamily::finite_atoms;
    std::vector<double> marks;   // finite-atoms
    std::vector<double> weights;
    double height = 1.0;  // two-sided uniform
    double a = 1.0;
    double c = 1.0;  // exp-tails
    double alpha = 0.5;
    double zmax = 40.0;

    static LevySpec atoms(std::vector<double> marks, std::vector<double> weights) {
        LevySpec s;
        s.family = LevyFamily::finite_atoms;
        s.marks = std::move(marks);
        s.weights = std::move(weights);
        return s;
    }
    static LevySpec uniform(double height, double a) {
        LevySpec s;
        s.family = LevyFamily::two_sided_uniform;
        s.height = height;
        s.a = a;
        return s;
    }
    static LevySpec exponential(double c, double alpha, double zmax = 40.0) {
        LevySpec s;
        s.family = LevyFamily::exp_tails;
        s.c = c;
        s.alpha = alpha;
        s.zmax = zmax;
        return s;
    }
};

namespace detail {

// Composite midpoint over [lo,hi]; fine enough that cell moments are
// accurate to ~1e-9 for the smooth densities used here.
template <class F>
double midpoint_integral(F&& f, double lo, double hi, std::size_t n = 2048) {
    const double h = (hi - lo) / static_cast<double>(n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += f(lo + (static_cast<double>(j) + 0.5) * h);
    return s * h;
}

// One side of a symmetric-support family discretized into M cells on
// [lo,hi]. Each cell contributes its exact nu-mass; the representative mark
// preserves the cell's second moment, so sum z_k^2 nu_k reproduces the
// truncated second moment for any M.
template <class Density>
void discretize_side(Density&& density, double lo, double hi, std::size_t M,
                     double sign, std::vector<double>& marks,
                     std::vector<double>& weights) {
    const double w = (hi - lo) / static_cast<double>(M);
    for (std::size_t k = 0; k < M; ++k) {
        const double a = lo + static_cast<double>(k) * w;
        const double b = a + w;
        const double mass = midpoint_integral(density, a, b);
        if (!(mass > 0.0)) continue;
        const double m2 =
            midpoint_integral([&](double z) { return z * z * density(z); }, a, b);
        marks.push_back(sign * std::sqrt(m2 / mass));
        weights.push_back(mass);
    }
}

}  // namespace detail

inline LevyGrid discretize_levy(const LevySpec& spec, std::size_t M, double eps) {
    if (M < 1) throw std::invalid_argument("discretize_levy: M must be >= 1");
    LevyGrid g;
    g.truncation = eps;
    switch (spec.family) {
        case LevyFamily::finite_atoms:
            g = LevyGrid::finite_atoms(spec.marks, spec.weights);
            g.truncation = eps;
            break;
        case LevyFamily::two_sided_uniform: {
            if (eps < 0.0 || eps >= spec.a)
                throw std::invalid_argument("discretize_levy: empty support");
            const double h = spec.height;
            auto density = [h](double) { return h; };
            detail::discretize_side(density, eps, spec.a, M, -1.0, g.marks, g.weights);
            detail::discretize_side(density, eps, spec.a, M, +1.0, g.marks, g.weights);
            break;
        }
        case LevyFamily::exp_tails: {
            if (eps <= 0.0)
                throw std::invalid_argument(
                    "discretize_levy: infinite-activity family needs eps > 0");
            if (eps >= spec.zmax)
                throw std::invalid_argument("discretize_levy: empty support");
            const double c = spec.c, alpha = spec.alpha;
            auto density = [c, alpha](double z) {
                return c * std::exp(-z) / std::pow(z, 1.0 + alpha);
            };
            detail::discretize_side(density, eps, spec.zmax, M, -1.0, g.marks,
                                    g.weights);
            detail::discretize_side(density, eps, spec.zmax, M, +1.0, g.marks,
                                    g.weights);
            break;
        }
    }
    if (g.marks.empty() && spec.family != LevyFamily::finite_atoms)
        throw std::invalid_argument("discretize_levy: no mass in support");
    return g;
}

}  // namespace tcmf
