#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tcmf/errors.hpp"
#include "tcmf/grid.hpp"
#include "tcmf/intensity.hpp"
#include "tcmf/levy.hpp"
#include "tcmf/measures.hpp"
#include "tcmf/noise.hpp"
#include "tcmf/parallel.hpp"
#include "tcmf/rng.hpp"

namespace tcmf {

/// A functional <g,Q> of the one-dimensional law consumed by coefficients.
struct MeasureFeature {
    std::string name;
    std::function<double(double)> g;

    static MeasureFeature mean() {
        return {"mean", [](double x) { return x; }};
    }
};

/// Drift and noise coefficient of a mean-field SDE. The law enters only
/// through the declared feature functionals; z = 0 addresses the Gaussian
/// slot of the jump coefficient.
struct CoefficientSet {
    std::string name;
    std::function<double(double t, double lamB, double lamH, double x,
                         std::span<const double> feats, double u)>
        drift;
    std::function<double(double t, double z, double lamB, double lamH, double x,
                         std::span<const double> feats, double u)>
        jump;
    std::vector<MeasureFeature> features;
    double lipschitz_bound = 0.0;
    double growth_bound = 0.0;
};

enum class IntensitySharing {
    shared,        // one intensity path common to all particles
    per_particle,  // iid intensity path per particle
};

/// Pre-sampled noise for a particle system; reused across Picard iterations
/// (common random numbers) and by the backward solvers.
struct EnsembleNoise {
    TimeGrid grid;
    LevyGrid levy;
    IntensitySharing sharing = IntensitySharing::shared;
    std::vector<IntensityPath> intensity;  // 1 (shared) or N entries
    std::vector<NoiseIncrements> inc;      // N entries

    std::size_t n_particles() const { return inc.size(); }
    const IntensityPath& path_of(std::size_t n) const {
        return intensity[sharing == IntensitySharing::shared ? 0 : n];
    }
};

inline EnsembleNoise sample_ensemble_noise(const IntensityModel& model,
                                           const TimeGrid& grid,
                                           const LevyGrid& levy, std::size_t N,
                                           std::uint64_t seed,
                                           IntensitySharing sharing) {
    EnsembleNoise en;
    en.grid = grid;
    en.levy = levy;
    en.sharing = sharing;
    RngStream root(seed);
    if (sharing == IntensitySharing::shared) {
        en.intensity.push_back(
            sample_intensity(model, grid, root.child(stream_tag::intensity_b).next_u64()));
    } else {
        en.intensity.resize(N);
        parallel_for(N, [&](std::size_t n) {
            en.intensity[n] = sample_intensity(
                model, grid,
                RngStream(seed).child(stream_tag::intensity_b, n).next_u64());
        });
    }
    en.inc.resize(N);
    parallel_for(N, [&](std::size_t n) {
        const std::uint64_t s =
            RngStream(seed).child(stream_tag::particle, n).next_u64();
        en.inc[n] = sample_noise(en.path_of(n), levy, s);
    });
    return en;
}

/// Control values per knot, deterministic or per particle, clamped to U.
struct ControlPath {
    std::size_t n_knots = 0;
    std::size_t n_particles = 1;
    bool per_particle = false;
    std::vector<double> values;  // n_knots or n_particles * n_knots

    double at(std::size_t particle, std::size_t knot) const {
        return per_particle ? values[particle * n_knots + knot] : values[knot];
    }

    void clamp(double lo, double hi) {
        for (double& v : values) v = std::min(hi, std::max(lo, v));
    }

    static ControlPath constant(double v, const TimeGrid& grid) {
        ControlPath u;
        u.n_knots = grid.n_knots();
        u.values.assign(u.n_knots, v);
        return u;
    }
    static ControlPath deterministic(std::vector<double> vals) {
        ControlPath u;
        u.n_knots = vals.size();
        u.values = std::move(vals);
        return u;
    }
};

/// N state paths sharing a grid, plus the noise that produced them.
struct ParticleEnsemble {
    TimeGrid grid;
    std::size_t N = 0;
    std::vector<double> paths;  // N x n_knots, row-major
    std::shared_ptr<const EnsembleNoise> noise;

    double x(std::size_t n, std::size_t knot) const {
        return paths[n * grid.n_knots() + knot];
    }
    double& x(std::size_t n, std::size_t knot) {
        return paths[n * grid.n_knots() + knot];
    }

    EmpiricalMeasure cross_section(std::size_t knot) const {
        std::vector<double> v(N);
        for (std::size_t n = 0; n < N; ++n) v[n] = x(n, knot);
        return empirical(std::move(v));
    }

    LawFlow law() const {
        LawFlow f;
        f.grid = grid;
        f.marginals.resize(grid.n_knots());
        parallel_for(grid.n_knots(),
                     [&](std::size_t i) { f.marginals[i] = cross_section(i); });
        return f;
    }

    std::vector<double> mean_path() const {
        std::vector<double> m(grid.n_knots(), 0.0);
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t i = 0; i < grid.n_knots(); ++i) m[i] += x(n, i);
        for (double& v : m) v /= static_cast<double>(N);
        return m;
    }
};

/// Mean over particles of sup over knots of |X|^2; compared by callers
/// against an explosion bound.
inline double moment_check(const ParticleEnsemble& e) {
    double total = 0.0;
    for (std::size_t n = 0; n < e.N; ++n) {
        double peak = 0.0;
        for (std::size_t i = 0; i < e.grid.n_knots(); ++i)
            peak = std::max(peak, e.x(n, i) * e.x(n, i));
        total += peak;
    }
    return total / static_cast<double>(e.N);
}

struct PicardDiagnostics {
    std::size_t iterations = 0;
    std::vector<double> distances;  // law-flow distance per iteration
    bool converged = false;
    double tol = 0.0;
};

namespace detail {

// Per-knot feature values of a law flow, row-major (knot, feature).
inline std::vector<double> law_features(const CoefficientSet& c, const LawFlow& Q) {
    const std::size_t nf = c.features.size();
    std::vector<double> feats(Q.marginals.size() * nf);
    parallel_for(Q.marginals.size(), [&](std::size_t i) {
        for (std::size_t j = 0; j < nf; ++j)
            feats[i * nf + j] = mean_functional(Q.marginals[i], c.features[j].g);
    });
    return feats;
}

inline void throw_first_explosion(const std::vector<std::size_t>& bad_step,
                                  std::size_t none) {
    std::size_t first_n = none, first_i = none;
    for (std::size_t n = 0; n < bad_step.size(); ++n)
        if (bad_step[n] < first_i) {
            first_i = bad_step[n];
            first_n = n;
        }
    if (first_n != none) throw explosion_error(first_n, first_i);
}

}  // namespace detail

/// Euler scheme for the SDE with a frozen law flow Q: coefficients read the
/// law features of Q at the left knot of each step.
inline ParticleEnsemble euler_solve_fixed_law(
    const CoefficientSet& c, const LawFlow& Q, double x0,
    std::shared_ptr<const EnsembleNoise> noise, const ControlPath* u = nullptr) {
    const TimeGrid& grid = noise->grid;
    if (!Q.grid.same_as(grid))
        throw std::invalid_argument("euler_solve_fixed_law: law grid mismatch");
    const std::size_t N = noise->n_particles();
    const std::size_t nk = grid.n_knots();
    const std::size_t nf = c.features.size();
    const std::vector<double> feats = detail::law_features(c, Q);

    ParticleEnsemble e;
    e.grid = grid;
    e.N = N;
    e.noise = noise;
    e.paths.assign(N * nk, 0.0);

    const std::size_t none = static_cast<std::size_t>(-1);
    std::vector<std::size_t> bad_step(N, none);
    parallel_for(N, [&](std::size_t n) {
        const IntensityPath& ip = noise->path_of(n);
        const NoiseIncrements& ni = noise->inc[n];
        double x = x0;
        e.x(n, 0) = x;
        for (std::size_t i = 0; i < grid.n_steps; ++i) {
            const double t = grid.knots[i];
            const std::span<const double> f(&feats[i * nf], nf);
            const double un = u ? u->at(n, i) : 0.0;
            double dx = c.drift(t, ip.lamB[i], ip.lamH[i], x, f, un) * grid.dt;
            dx += c.jump(t, 0.0, ip.lamB[i], ip.lamH[i], x, f, un) * ni.dG[i];
            for (std::size_t k = 0; k < noise->levy.n_marks(); ++k)
                dx += c.jump(t, noise->levy.marks[k], ip.lamB[i], ip.lamH[i], x, f,
                             un) *
                      ni.compensated(i, k);
            x += dx;
            if (!std::isfinite(x)) {
                bad_step[n] = i;
                for (std::size_t j = i + 1; j < nk; ++j) e.x(n, j) = x;
                break;
            }
            e.x(n, i + 1) = x;
        }
    });
    detail::throw_first_explosion(bad_step, none);
    return e;
}

/// Picard iteration on the law map: Q -> law of the solution under Q, with
/// common random numbers across iterations. Starts from the Dirac flow at
/// x0. Non-convergence is reported in the diagnostics, not thrown.
struct PicardResult {
    LawFlow law;
    ParticleEnsemble ensemble;
    PicardDiagnostics diagnostics;
};

inline PicardResult picard_law_solve(const CoefficientSet& c, double x0,
                                     std::shared_ptr<const EnsembleNoise> noise,
                                     double tol, std::size_t max_iter,
                                     const ControlPath* u = nullptr) {
    if (!(tol > 0.0)) throw std::invalid_argument("picard_law_solve: tol must be > 0");
    PicardResult r;
    r.diagnostics.tol = tol;
    LawFlow Q = LawFlow::dirac(noise->grid, x0);
    for (std::size_t m = 0; m < max_iter; ++m) {
        r.ensemble = euler_solve_fixed_law(c, Q, x0, noise, u);
        LawFlow Qnext = r.ensemble.law();
        const double d = law_flow_distance(Qnext, Q);
        r.diagnostics.distances.push_back(d);
        r.diagnostics.iterations = m + 1;
        Q = std::move(Qnext);
        if (d <= tol) {
            r.diagnostics.converged = true;
            break;
        }
    }
    r.law = std::move(Q);
    return r;
}

/// Direct N-particle system: at every step the feature functionals are read
/// off the current cross-section, then all particles advance (one barrier
/// per step).
inline ParticleEnsemble interacting_particle_solve(
    const CoefficientSet& c, double x0,
    std::shared_ptr<const EnsembleNoise> noise, const ControlPath* u = nullptr) {
    const std::size_t N = noise->n_particles();
    if (N < 2)
        throw std::invalid_argument("interacting_particle_solve: need N >= 2");
    const TimeGrid& grid = noise->grid;
    const std::size_t nk = grid.n_knots();
    const std::size_t nf = c.features.size();

    ParticleEnsemble e;
    e.grid = grid;
    e.N = N;
    e.noise = noise;
    e.paths.assign(N * nk, 0.0);
    for (std::size_t n = 0; n < N; ++n) e.x(n, 0) = x0;

    const std::size_t none = static_cast<std::size_t>(-1);
    std::vector<std::size_t> bad_step(N, none);
    std::vector<double> feats(nf);
    for (std::size_t i = 0; i < grid.n_steps; ++i) {
        for (std::size_t j = 0; j < nf; ++j) {
            double s = 0.0;
            for (std::size_t n = 0; n < N; ++n) s += c.features[j].g(e.x(n, i));
            feats[j] = s / static_cast<double>(N);
        }
        const double t = grid.knots[i];
        parallel_for(N, [&](std::size_t n) {
            if (bad_step[n] != none) {
                e.x(n, i + 1) = e.x(n, i);
                return;
            }
            const IntensityPath& ip = noise->path_of(n);
            const NoiseIncrements& ni = noise->inc[n];
            const double x = e.x(n, i);
            const std::span<const double> f(feats.data(), nf);
            const double un = u ? u->at(n, i) : 0.0;
            double dx = c.drift(t, ip.lamB[i], ip.lamH[i], x, f, un) * grid.dt;
            dx += c.jump(t, 0.0, ip.lamB[i], ip.lamH[i], x, f, un) * ni.dG[i];
            for (std::size_t k = 0; k < noise->levy.n_marks(); ++k)
                dx += c.jump(t, noise->levy.marks[k], ip.lamB[i], ip.lamH[i], x, f,
                             un) *
                      ni.compensated(i, k);
            const double xn = x + dx;
            e.x(n, i + 1) = xn;
            if (!std::isfinite(xn)) bad_step[n] = i;
        });
    }
    detail::throw_first_explosion(bad_step, none);
    return e;
}

}  // namespace tcmf
