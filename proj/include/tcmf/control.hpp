#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "tcmf/mfbsde.hpp"
#include "tcmf/mfsde.hpp"
#include "tcmf/regression.hpp"

namespace tcmf {

struct Interval {
    double lo = 0.0;
    double hi = 1.0;

    bool contains(double u) const { return u >= lo && u <= hi; }
    double clamp(double u) const { return std::min(hi, std::max(lo, u)); }
    bool interior(double u, double margin = 1e-9) const {
        return u > lo + margin * (hi - lo) && u < hi - margin * (hi - lo);
    }
};

/// Controlled mean-field scenario: dynamics b/kappa with the law entering
/// through y2 = E[X], running cost f with y1 = E[phi(X)], terminal cost
/// g(x, E[chi(X_T)]). Partial derivatives may be supplied analytically;
/// otherwise central differences with `fd_step` are used.
struct Scenario {
    using Fb = std::function<double(double t, double lamB, double lamH, double x,
                                    double y2, double u)>;
    using Fk = std::function<double(double t, double z, double lamB, double lamH,
                                    double x, double y2, double u)>;
    using Ff = std::function<double(double t, double lamB, double lamH, double x,
                                    double y1, double u)>;
    using Fg = std::function<double(double x, double y)>;
    using F1 = std::function<double(double)>;

    TimeGrid grid;
    LevyGrid levy;
    IntensityModel intensity;
    IntensitySharing sharing = IntensitySharing::shared;
    double x0 = 0.0;
    std::size_t n_particles = 1000;
    std::uint64_t seed = 12345;
    Interval control_set;

    Fb b;
    Fk kappa;
    Fb db_dx, db_dy, db_du;
    Fk dk_dx, dk_dy, dk_du;

    Ff f;
    Ff df_dx, df_dy, df_du;
    Fg g;
    Fg dg_dx, dg_dy;
    F1 phi, chi, dphi, dchi;

    double declared_bound = 0.0;  // 0 = no (C3')-style bound check
    double picard_tol = 1e-4;
    std::size_t picard_max_iter = 60;
    RegressionBasis basis;
    BSDEPicardParams bsde_params;
    double fd_step = 1e-5;

    void validate() const {
        if (!b || !kappa || !f || !g || !phi || !chi)
            throw std::invalid_argument("scenario: b, kappa, f, g, phi, chi required");
        if (!(control_set.lo <= control_set.hi))
            throw std::invalid_argument("scenario: empty control set");
    }
};

namespace detail {

// central difference in one slot of a callable
template <class F, class... Args>
double central_diff(const F& f, double step, double& slot, Args&&... args) {
    const double saved = slot;
    slot = saved + step;
    const double up = f(std::forward<Args>(args)...);
    slot = saved - step;
    const double down = f(std::forward<Args>(args)...);
    slot = saved;
    return (up - down) / (2.0 * step);
}

}  // namespace detail

/// Partial derivatives of the scenario functions, analytic when supplied.
struct ScenarioPartials {
    const Scenario* s;

    explicit ScenarioPartials(const Scenario& sc) : s(&sc) {}

    double b_x(double t, double lB, double lH, double x, double y2, double u) const {
        if (s->db_dx) return s->db_dx(t, lB, lH, x, y2, u);
        double xx = x;
        return detail::central_diff([&] { return s->b(t, lB, lH, xx, y2, u); },
                                    s->fd_step, xx);
    }
    double b_y(double t, double lB, double lH, double x, double y2, double u) const {
        if (s->db_dy) return s->db_dy(t, lB, lH, x, y2, u);
        double yy = y2;
        return detail::central_diff([&] { return s->b(t, lB, lH, x, yy, u); },
                                    s->fd_step, yy);
    }
    double b_u(double t, double lB, double lH, double x, double y2, double u) const {
        if (s->db_du) return s->db_du(t, lB, lH, x, y2, u);
        double uu = u;
        return detail::central_diff([&] { return s->b(t, lB, lH, x, y2, uu); },
                                    s->fd_step, uu);
    }
    double k_x(double t, double z, double lB, double lH, double x, double y2,
               double u) const {
        if (s->dk_dx) return s->dk_dx(t, z, lB, lH, x, y2, u);
        double xx = x;
        return detail::central_diff([&] { return s->kappa(t, z, lB, lH, xx, y2, u); },
                                    s->fd_step, xx);
    }
    double k_y(double t, double z, double lB, double lH, double x, double y2,
               double u) const {
        if (s->dk_dy) return s->dk_dy(t, z, lB, lH, x, y2, u);
        double yy = y2;
        return detail::central_diff([&] { return s->kappa(t, z, lB, lH, x, yy, u); },
                                    s->fd_step, yy);
    }
    double k_u(double t, double z, double lB, double lH, double x, double y2,
               double u) const {
        if (s->dk_du) return s->dk_du(t, z, lB, lH, x, y2, u);
        double uu = u;
        return detail::central_diff([&] { return s->kappa(t, z, lB, lH, x, y2, uu); },
                                    s->fd_step, uu);
    }
    double f_x(double t, double lB, double lH, double x, double y1, double u) const {
        if (s->df_dx) return s->df_dx(t, lB, lH, x, y1, u);
        double xx = x;
        return detail::central_diff([&] { return s->f(t, lB, lH, xx, y1, u); },
                                    s->fd_step, xx);
    }
    double f_y(double t, double lB, double lH, double x, double y1, double u) const {
        if (s->df_dy) return s->df_dy(t, lB, lH, x, y1, u);
        double yy = y1;
        return detail::central_diff([&] { return s->f(t, lB, lH, x, yy, u); },
                                    s->fd_step, yy);
    }
    double f_u(double t, double lB, double lH, double x, double y1, double u) const {
        if (s->df_du) return s->df_du(t, lB, lH, x, y1, u);
        double uu = u;
        return detail::central_diff([&] { return s->f(t, lB, lH, x, y1, uu); },
                                    s->fd_step, uu);
    }
    double g_x(double x, double y) const {
        if (s->dg_dx) return s->dg_dx(x, y);
        double xx = x;
        return detail::central_diff([&] { return s->g(xx, y); }, s->fd_step, xx);
    }
    double g_y(double x, double y) const {
        if (s->dg_dy) return s->dg_dy(x, y);
        double yy = y;
        return detail::central_diff([&] { return s->g(x, yy); }, s->fd_step, yy);
    }
    double phi_x(double x) const {
        if (s->dphi) return s->dphi(x);
        double xx = x;
        return detail::central_diff([&] { return s->phi(xx); }, s->fd_step, xx);
    }
    double chi_x(double x) const {
        if (s->dchi) return s->dchi(x);
        double xx = x;
        return detail::central_diff([&] { return s->chi(xx); }, s->fd_step, xx);
    }
};

inline std::shared_ptr<const EnsembleNoise> scenario_noise(
    const Scenario& s, std::uint64_t seed_tag = 0) {
    std::uint64_t seed = s.seed;
    if (seed_tag != 0)
        seed = RngStream(s.seed).child(stream_tag::copy_ensemble, seed_tag).next_u64();
    return std::make_shared<EnsembleNoise>(sample_ensemble_noise(
        s.intensity, s.grid, s.levy, s.n_particles, seed, s.sharing));
}

/// Euler + Picard-on-law forward solve of the controlled dynamics; the law
/// enters through E[X].
inline PicardResult solve_controlled_forward(
    const Scenario& s, const ControlPath& u,
    std::shared_ptr<const EnsembleNoise> noise = nullptr) {
    s.validate();
    for (double v : u.values)
        if (!s.control_set.contains(v))
            throw std::invalid_argument("solve_controlled_forward: control not in U");
    if (!noise) noise = scenario_noise(s);
    CoefficientSet c;
    c.name = "controlled";
    c.features = {MeasureFeature::mean()};
    c.drift = [&s](double t, double lB, double lH, double x,
                   std::span<const double> f, double uu) {
        return s.b(t, lB, lH, x, f[0], uu);
    };
    c.jump = [&s](double t, double z, double lB, double lH, double x,
                  std::span<const double> f, double uu) {
        return s.kappa(t, z, lB, lH, x, f[0], uu);
    };
    return picard_law_solve(c, s.x0, noise, s.picard_tol, s.picard_max_iter, &u);
}

struct ObjectiveEstimate {
    double value = 0.0;
    std::vector<double> per_particle;

    double se() const {
        const std::size_t n = per_particle.size();
        double m = 0.0;
        for (double v : per_particle) m += v;
        m /= static_cast<double>(n);
        double var = 0.0;
        for (double v : per_particle) var += (v - m) * (v - m);
        var /= static_cast<double>(n - 1);
        return std::sqrt(var / static_cast<double>(n));
    }
};

/// Monte Carlo estimate of J(u) on an ensemble produced under u. The inner
/// expectations E[phi(X_t)], E[chi(X_T)] are cross-sectional means of the
/// same ensemble; the time integral uses the left-point rule.
inline ObjectiveEstimate estimate_objective(const Scenario& s,
                                            const ParticleEnsemble& e,
                                            const ControlPath& u) {
    const TimeGrid& grid = e.grid;
    const std::size_t N = e.N;
    std::vector<double> y1(grid.n_steps);
    for (std::size_t i = 0; i < grid.n_steps; ++i) {
        double m = 0.0;
        for (std::size_t n = 0; n < N; ++n) m += s.phi(e.x(n, i));
        y1[i] = m / static_cast<double>(N);
    }
    double ybarT = 0.0;
    for (std::size_t n = 0; n < N; ++n) ybarT += s.chi(e.x(n, grid.n_steps));
    ybarT /= static_cast<double>(N);

    ObjectiveEstimate est;
    est.per_particle.assign(N, 0.0);
    parallel_for(N, [&](std::size_t n) {
        const IntensityPath& ip = e.noise->path_of(n);
        double acc = 0.0;
        for (std::size_t i = 0; i < grid.n_steps; ++i)
            acc += s.f(grid.knots[i], ip.lamB[i], ip.lamH[i], e.x(n, i), y1[i],
                       u.at(n, i)) *
                   grid.dt;
        acc += s.g(e.x(n, grid.n_steps), ybarT);
        est.per_particle[n] = acc;
    });
    for (double v : est.per_particle) est.value += v;
    est.value /= static_cast<double>(N);
    return est;
}

/// Adjoint coefficient paths in the display form of the rewritten equation:
/// A = df_x + E'[(df_y)'] dphi_x, B = db_x, C = (db_y)', D = dk_x,
/// E = (dk_y)', F = dg_x + E[dg_y] dchi_x. The backward drift carries these
/// with a minus sign; solve_adjoint applies it.
struct AdjointSpec {
    LinearBSDESpec linear;
};

namespace detail {

inline LinearCoefficientPaths adjoint_paths(const Scenario& s,
                                            const ScenarioPartials& d,
                                            const ParticleEnsemble& e,
                                            const ControlPath& u) {
    const TimeGrid& grid = e.grid;
    const std::size_t N = e.N;
    const std::size_t steps = grid.n_steps;
    const std::size_t slots = e.noise->levy.n_marks() + 1;
    const std::vector<double> mean = e.mean_path();
    std::vector<double> y1(steps);
    for (std::size_t i = 0; i < steps; ++i) {
        double m = 0.0;
        for (std::size_t n = 0; n < N; ++n) m += s.phi(e.x(n, i));
        y1[i] = m / static_cast<double>(N);
    }

    LinearCoefficientPaths p;
    p.a.assign(N * steps, 0.0);
    p.a_primed_factor.assign(N * steps, 0.0);
    p.a_carrier.assign(N * steps, 0.0);
    p.b.assign(N * steps, 0.0);
    p.c.assign(N * steps, 0.0);
    p.d.assign(N * steps * slots, 0.0);
    p.e.assign(N * steps * slots, 0.0);
    parallel_for(N, [&](std::size_t n) {
        const IntensityPath& ip = e.noise->path_of(n);
        for (std::size_t i = 0; i < steps; ++i) {
            const double t = grid.knots[i];
            const double lB = ip.lamB[i], lH = ip.lamH[i];
            const double x = e.x(n, i), un = u.at(n, i);
            const std::size_t idx = n * steps + i;
            p.a[idx] = d.f_x(t, lB, lH, x, y1[i], un);
            p.a_primed_factor[idx] = d.f_y(t, lB, lH, x, y1[i], un);
            p.a_carrier[idx] = d.phi_x(x);
            p.b[idx] = d.b_x(t, lB, lH, x, mean[i], un);
            p.c[idx] = d.b_y(t, lB, lH, x, mean[i], un);
            p.d[idx * slots] = d.k_x(t, 0.0, lB, lH, x, mean[i], un);
            p.e[idx * slots] = d.k_y(t, 0.0, lB, lH, x, mean[i], un);
            for (std::size_t k = 0; k + 1 < slots; ++k) {
                const double z = e.noise->levy.marks[k];
                p.d[idx * slots + k + 1] = d.k_x(t, z, lB, lH, x, mean[i], un);
                p.e[idx * slots + k + 1] = d.k_y(t, z, lB, lH, x, mean[i], un);
            }
        }
    });
    return p;
}

inline std::vector<double> adjoint_terminal(const Scenario& s,
                                            const ScenarioPartials& d,
                                            const ParticleEnsemble& e) {
    const std::size_t N = e.N;
    const std::size_t T = e.grid.n_steps;
    double ybar = 0.0;
    for (std::size_t n = 0; n < N; ++n) ybar += s.chi(e.x(n, T));
    ybar /= static_cast<double>(N);
    double gy = 0.0;
    for (std::size_t n = 0; n < N; ++n) gy += d.g_y(e.x(n, T), ybar);
    gy /= static_cast<double>(N);
    std::vector<double> F(N);
    for (std::size_t n = 0; n < N; ++n)
        F[n] = d.g_x(e.x(n, T), ybar) + gy * d.chi_x(e.x(n, T));
    return F;
}

inline void negate(std::vector<double>& v) {
    for (double& x : v) x = -x;
}

}  // namespace detail

/// Evaluate the adjoint coefficient paths along (X-hat, E[X-hat], u-hat) on
/// the main and copy ensembles. The copy side needs the control realized
/// along its own paths.
inline AdjointSpec assemble_adjoint(const Scenario& s, const ControlPath& u_main,
                                    const ParticleEnsemble& e_main,
                                    const ControlPath& u_copy,
                                    const ParticleEnsemble& e_copy) {
    s.validate();
    const ScenarioPartials d(s);
    AdjointSpec spec;
    spec.linear.on_main = detail::adjoint_paths(s, d, e_main, u_main);
    spec.linear.on_copy = detail::adjoint_paths(s, d, e_copy, u_copy);
    spec.linear.F_main = detail::adjoint_terminal(s, d, e_main);
    spec.linear.F_copy = detail::adjoint_terminal(s, d, e_copy);
    spec.linear.bound = s.declared_bound;
    return spec;
}

/// Basis for the F-conditional projection: functions of the observable path
/// only (state, running Gaussian noise), never of a hidden intensity.
struct FProjectionBasis {
    bool include_x = true;
    bool include_x_sq = true;
    bool include_cum_gauss = true;

    std::size_t n_features() const {
        return 1 + (include_x ? 1 : 0) + (include_x_sq ? 1 : 0) +
               (include_cum_gauss ? 1 : 0);
    }
    void eval(double x, double cum_g, double* out) const {
        std::size_t j = 0;
        out[j++] = 1.0;
        if (include_x) out[j++] = x;
        if (include_x_sq) out[j++] = x * x;
        if (include_cum_gauss) out[j++] = cum_g;
    }
};

/// Adjoint solution (p, q) plus its projections onto the observable
/// filtration.
struct AdjointSolution {
    BSDESolution sol;
    std::vector<double> pF;  // N x n_knots
    std::vector<double> qF;  // N x n_steps x (n_marks+1)

    double pF_at(std::size_t n, std::size_t knot) const {
        return pF[n * sol.grid.n_knots() + knot];
    }
    const double* qF_at(std::size_t n, std::size_t step) const {
        return &qF[(n * sol.grid.n_steps + step) * (sol.n_marks + 1)];
    }
};

/// Project a backward solution onto the observable filtration. With a
/// deterministic intensity the time change carries no extra information and
/// the projection is the identity; otherwise p and each q slot are regressed
/// per knot on the F-basis.
inline AdjointSolution project_to_F(BSDESolution sol, const ParticleEnsemble& e,
                                    bool deterministic_intensity,
                                    const FProjectionBasis& basis = {},
                                    double ridge = 1e-8) {
    AdjointSolution adj;
    adj.pF = sol.Y;
    adj.qF = sol.Z;
    adj.sol = std::move(sol);
    if (deterministic_intensity) return adj;

    const std::size_t N = adj.sol.N;
    const std::size_t steps = adj.sol.grid.n_steps;
    const std::size_t slots = adj.sol.n_marks + 1;
    const std::size_t nf = basis.n_features();
    // cumulative Gaussian increments are observable
    std::vector<double> cumg(N * (steps + 1), 0.0);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < steps; ++i)
            cumg[n * (steps + 1) + i + 1] =
                cumg[n * (steps + 1) + i] + e.noise->inc[n].dG[i];

    std::vector<double> X(N * nf), y(N);
    for (std::size_t i = 0; i <= steps; ++i) {
        for (std::size_t n = 0; n < N; ++n)
            basis.eval(e.x(n, i), cumg[n * (steps + 1) + i], &X[n * nf]);
        for (std::size_t n = 0; n < N; ++n) y[n] = adj.sol.y(n, i);
        const std::vector<double> fit = fit_and_predict(X, y, N, nf, ridge);
        for (std::size_t n = 0; n < N; ++n) adj.pF[n * (steps + 1) + i] = fit[n];
        if (i < steps) {
            for (std::size_t slot = 0; slot < slots; ++slot) {
                for (std::size_t n = 0; n < N; ++n) y[n] = adj.sol.z(n, i)[slot];
                const std::vector<double> fz = fit_and_predict(X, y, N, nf, ridge);
                for (std::size_t n = 0; n < N; ++n)
                    adj.qF[(n * steps + i) * slots + slot] = fz[n];
            }
        }
    }
    return adj;
}

/// Solve the adjoint equation via the linear mean-field BSDE solver. The
/// adjoint drift is -{A + B p + ...}, so the assembled display coefficients
/// enter negated; the terminal F is used as assembled.
inline AdjointSolution solve_adjoint(const AdjointSpec& spec,
                                     const ParticleEnsemble& e_main,
                                     const ParticleEnsemble& e_copy,
                                     const RegressionBasis& basis,
                                     bool deterministic_intensity,
                                     const BSDEPicardParams& params = {},
                                     const FProjectionBasis& fbasis = {}) {
    LinearBSDESpec negated = spec.linear;
    detail::negate(negated.on_main.a);
    detail::negate(negated.on_main.a_primed_factor);
    detail::negate(negated.on_main.b);
    detail::negate(negated.on_main.c);
    detail::negate(negated.on_main.d);
    detail::negate(negated.on_main.e);
    detail::negate(negated.on_copy.a);
    detail::negate(negated.on_copy.a_primed_factor);
    detail::negate(negated.on_copy.b);
    detail::negate(negated.on_copy.c);
    detail::negate(negated.on_copy.d);
    detail::negate(negated.on_copy.e);
    BSDESolution sol = solve_linear(negated, e_main, e_copy, basis, params);
    return project_to_F(std::move(sol), e_main, deterministic_intensity, fbasis,
                        basis.ridge);
}

/// Hamiltonian H(t, lambda, x, y1, y2, u, p, q): running cost plus
/// adjoint-weighted drift and noise coefficients.
inline double hamiltonian(const Scenario& s, double t, double lamB, double lamH,
                          double x, double y1, double y2, double u, double p,
                          const double* q_slots) {
    double H = s.f(t, lamB, lamH, x, y1, u) + s.b(t, lamB, lamH, x, y2, u) * p;
    H += s.kappa(t, 0.0, lamB, lamH, x, y2, u) * q_slots[0] * lamB;
    for (std::size_t k = 0; k < s.levy.n_marks(); ++k)
        H += s.kappa(t, s.levy.marks[k], lamB, lamH, x, y2, u) * q_slots[k + 1] *
             lamH * s.levy.weights[k];
    return H;
}

/// F-Hamiltonian: same formula with (p, q) replaced by their projections.
inline double f_hamiltonian(const Scenario& s, double t, double lamB, double lamH,
                            double x, double y1, double y2, double u, double pF,
                            const double* qF_slots) {
    return hamiltonian(s, t, lamB, lamH, x, y1, y2, u, pF, qF_slots);
}

/// du H^F at a state/control point.
inline double f_hamiltonian_du(const Scenario& s, const ScenarioPartials& d,
                               double t, double lamB, double lamH, double x,
                               double y1, double y2, double u, double pF,
                               const double* qF_slots) {
    double v = d.f_u(t, lamB, lamH, x, y1, u) +
               d.b_u(t, lamB, lamH, x, y2, u) * pF;
    v += d.k_u(t, 0.0, lamB, lamH, x, y2, u) * qF_slots[0] * lamB;
    for (std::size_t k = 0; k < s.levy.n_marks(); ++k)
        v += d.k_u(t, s.levy.marks[k], lamB, lamH, x, y2, u) * qF_slots[k + 1] *
             lamH * s.levy.weights[k];
    return v;
}

/// Variation process of the controlled state in direction v: the linear
/// mean-field SDE with coefficients frozen along (X-hat, E[X-hat], u-hat),
/// driven by the same noise, Z_0 = 0. E[Z] is the running cross-sectional
/// mean (the equation is linear, so one sweep is exact).
inline ParticleEnsemble solve_variation(const Scenario& s, const ControlPath& u_hat,
                                        const ControlPath& v,
                                        const ParticleEnsemble& base) {
    const ScenarioPartials d(s);
    const TimeGrid& grid = base.grid;
    const std::size_t N = base.N;
    const std::size_t M = base.noise->levy.n_marks();
    const std::vector<double> mean = base.mean_path();

    ParticleEnsemble Z;
    Z.grid = grid;
    Z.N = N;
    Z.noise = base.noise;
    Z.paths.assign(N * grid.n_knots(), 0.0);

    for (std::size_t i = 0; i < grid.n_steps; ++i) {
        double mZ = 0.0;
        for (std::size_t n = 0; n < N; ++n) mZ += Z.x(n, i);
        mZ /= static_cast<double>(N);
        const double t = grid.knots[i];
        parallel_for(N, [&](std::size_t n) {
            const IntensityPath& ip = base.noise->path_of(n);
            const NoiseIncrements& ni = base.noise->inc[n];
            const double lB = ip.lamB[i], lH = ip.lamH[i];
            const double x = base.x(n, i), un = u_hat.at(n, i), vn = v.at(n, i);
            const double z = Z.x(n, i);
            double dz = (d.b_x(t, lB, lH, x, mean[i], un) * z +
                         d.b_y(t, lB, lH, x, mean[i], un) * mZ +
                         d.b_u(t, lB, lH, x, mean[i], un) * vn) *
                        grid.dt;
            dz += (d.k_x(t, 0.0, lB, lH, x, mean[i], un) * z +
                   d.k_y(t, 0.0, lB, lH, x, mean[i], un) * mZ +
                   d.k_u(t, 0.0, lB, lH, x, mean[i], un) * vn) *
                  ni.dG[i];
            for (std::size_t k = 0; k < M; ++k) {
                const double zk = base.noise->levy.marks[k];
                dz += (d.k_x(t, zk, lB, lH, x, mean[i], un) * z +
                       d.k_y(t, zk, lB, lH, x, mean[i], un) * mZ +
                       d.k_u(t, zk, lB, lH, x, mean[i], un) * vn) *
                      ni.compensated(i, k);
            }
            Z.x(n, i + 1) = z + dz;
        });
        for (std::size_t n = 0; n < N; ++n)
            if (!std::isfinite(Z.x(n, i + 1))) throw explosion_error(n, i);
    }
    return Z;
}

struct GateauxResult {
    double formula = 0.0;
    double finite_difference = 0.0;
    double se_formula = 0.0;
    double se_fd = 0.0;
};

/// Directional derivative of J at u-hat in direction v: the variational
/// formula against a central finite difference of J with common noise.
inline GateauxResult gateaux_derivative(const Scenario& s, const ControlPath& u_hat,
                                        const ControlPath& v,
                                        const ParticleEnsemble& base,
                                        double fd_theta = 1e-3) {
    const ScenarioPartials d(s);
    const TimeGrid& grid = base.grid;
    const std::size_t N = base.N;
    const ParticleEnsemble Z = solve_variation(s, u_hat, v, base);

    // cross-sectional pieces
    std::vector<double> y1(grid.n_steps), phiZ(grid.n_steps);
    for (std::size_t i = 0; i < grid.n_steps; ++i) {
        double m = 0.0, pz = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            m += s.phi(base.x(n, i));
            pz += d.phi_x(base.x(n, i)) * Z.x(n, i);
        }
        y1[i] = m / static_cast<double>(N);
        phiZ[i] = pz / static_cast<double>(N);
    }
    const std::size_t T = grid.n_steps;
    double ybarT = 0.0, chiZT = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
        ybarT += s.chi(base.x(n, T));
        chiZT += d.chi_x(base.x(n, T)) * Z.x(n, T);
    }
    ybarT /= static_cast<double>(N);
    chiZT /= static_cast<double>(N);

    std::vector<double> per_particle(N, 0.0);
    parallel_for(N, [&](std::size_t n) {
        const IntensityPath& ip = base.noise->path_of(n);
        double acc = 0.0;
        for (std::size_t i = 0; i < grid.n_steps; ++i) {
            const double t = grid.knots[i];
            const double lB = ip.lamB[i], lH = ip.lamH[i];
            const double x = base.x(n, i), un = u_hat.at(n, i);
            acc += (d.f_x(t, lB, lH, x, y1[i], un) * Z.x(n, i) +
                    d.f_y(t, lB, lH, x, y1[i], un) * phiZ[i] +
                    d.f_u(t, lB, lH, x, y1[i], un) * v.at(n, i)) *
                   grid.dt;
        }
        acc += d.g_x(base.x(n, T), ybarT) * Z.x(n, T) +
               d.g_y(base.x(n, T), ybarT) * chiZT;
        per_particle[n] = acc;
    });

    GateauxResult r;
    for (double x : per_particle) r.formula += x;
    r.formula /= static_cast<double>(N);
    {
        double var = 0.0;
        for (double x : per_particle) var += (x - r.formula) * (x - r.formula);
        var /= static_cast<double>(N - 1);
        r.se_formula = std::sqrt(var / static_cast<double>(N));
    }

    // central finite difference with common random numbers
    auto perturbed = [&](double sign) {
        ControlPath up = u_hat;
        if (u_hat.per_particle == v.per_particle &&
            u_hat.values.size() == v.values.size()) {
            for (std::size_t j = 0; j < up.values.size(); ++j)
                up.values[j] += sign * fd_theta * v.values[j];
        } else {
            // mixed layouts: expand to per-particle
            up.per_particle = true;
            up.n_particles = N;
            up.values.resize(N * up.n_knots);
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t i = 0; i < up.n_knots; ++i)
                    up.values[n * up.n_knots + i] =
                        u_hat.at(n, i) + sign * fd_theta * v.at(n, i);
        }
        return up;
    };
    const PicardResult plus = solve_controlled_forward(s, perturbed(+1.0), base.noise);
    const PicardResult minus = solve_controlled_forward(s, perturbed(-1.0), base.noise);
    const ObjectiveEstimate jp = estimate_objective(s, plus.ensemble, perturbed(+1.0));
    const ObjectiveEstimate jm = estimate_objective(s, minus.ensemble, perturbed(-1.0));
    std::vector<double> diff(N);
    for (std::size_t n = 0; n < N; ++n)
        diff[n] = (jp.per_particle[n] - jm.per_particle[n]) / (2.0 * fd_theta);
    r.finite_difference = (jp.value - jm.value) / (2.0 * fd_theta);
    {
        double m = r.finite_difference, var = 0.0;
        for (double x : diff) var += (x - m) * (x - m);
        var /= static_cast<double>(N - 1);
        r.se_fd = std::sqrt(var / static_cast<double>(N));
    }
    return r;
}

struct MaxPrincipleReport {
    double variational_residual = 0.0;   // sup_i mean_n max_v [duH (v-u)]+
    double stationarity_residual = 0.0;  // sup_i mean_n |duH| on interior knots
    double maximization_gap = 0.0;       // max over samples of grid-max - H(u-hat)
    std::size_t concavity_violations = 0;
    std::size_t concavity_probes = 0;
    double tol_necessary = 0.0;
    double tol_maximization = 0.0;
    double tol_concavity = 0.0;
    bool necessary_pass = false;
    bool maximization_pass = false;
    bool concavity_pass = false;
    std::vector<double> mean_du_h_per_knot;  // for CSV export
};

/// Grid over U with ties broken toward the smallest u.
inline std::vector<double> control_grid(const Interval& U, std::size_t G) {
    std::vector<double> g(G);
    for (std::size_t j = 0; j < G; ++j)
        g[j] = U.lo + (U.hi - U.lo) * static_cast<double>(j) /
                          static_cast<double>(G - 1);
    return g;
}

/// Necessary-condition check: the variational inequality
/// duH^F (v - u-hat) <= 0 on a U-grid, plus interior stationarity.
inline MaxPrincipleReport check_necessary(const Scenario& s, const ControlPath& u_hat,
                                          const AdjointSolution& adj,
                                          const ParticleEnsemble& e,
                                          std::size_t G = 101, double tol = 1e-6) {
    const ScenarioPartials d(s);
    const TimeGrid& grid = e.grid;
    const std::size_t N = e.N;
    const std::vector<double> ugrid = control_grid(s.control_set, G);
    const std::vector<double> mean = e.mean_path();
    std::vector<double> y1(grid.n_steps);
    for (std::size_t i = 0; i < grid.n_steps; ++i) {
        double m = 0.0;
        for (std::size_t n = 0; n < N; ++n) m += s.phi(e.x(n, i));
        y1[i] = m / static_cast<double>(N);
    }

    MaxPrincipleReport rep;
    rep.tol_necessary = tol;
    rep.mean_du_h_per_knot.assign(grid.n_steps, 0.0);
    for (std::size_t i = 0; i < grid.n_steps; ++i) {
        double mean_pos = 0.0, mean_abs = 0.0, mean_duh = 0.0;
        std::size_t interior_count = 0;
        for (std::size_t n = 0; n < N; ++n) {
            const IntensityPath& ip = e.noise->path_of(n);
            const double un = u_hat.at(n, i);
            const double duh = f_hamiltonian_du(
                s, d, grid.knots[i], ip.lamB[i], ip.lamH[i], e.x(n, i), y1[i],
                mean[i], un, adj.pF_at(n, i), adj.qF_at(n, i));
            mean_duh += duh;
            double worst = 0.0;
            for (double vv : ugrid) worst = std::max(worst, duh * (vv - un));
            mean_pos += worst;
            if (s.control_set.interior(un)) {
                mean_abs += std::abs(duh);
                ++interior_count;
            }
        }
        mean_pos /= static_cast<double>(N);
        rep.mean_du_h_per_knot[i] = mean_duh / static_cast<double>(N);
        rep.variational_residual = std::max(rep.variational_residual, mean_pos);
        if (interior_count > 0)
            rep.stationarity_residual =
                std::max(rep.stationarity_residual,
                         mean_abs / static_cast<double>(interior_count));
    }
    rep.necessary_pass = rep.variational_residual <= tol;
    return rep;
}

struct SufficientCheckConfig {
    std::size_t n_state_probes = 200;   // random probe pairs for concavity
    std::size_t n_sample_knots = 16;    // subsampled knots
    std::size_t n_sample_particles = 64;
    std::size_t u_grid = 101;
    double tol_maximization = 1e-6;
    double tol_concavity = 1e-9;
    std::uint64_t seed = 99;
};

/// Sufficient-condition check: (i) u-hat attains the U-grid maximum of H^F
/// along the optimal trajectory, (ii) midpoint-concavity probes of
/// h(x,y1,y2) = max_U H^F at random pairs.
inline MaxPrincipleReport check_sufficient(const Scenario& s,
                                           const ControlPath& u_hat,
                                           const AdjointSolution& adj,
                                           const ParticleEnsemble& e,
                                           const SufficientCheckConfig& cfg = {}) {
    const TimeGrid& grid = e.grid;
    const std::size_t N = e.N;
    const std::vector<double> ugrid = control_grid(s.control_set, cfg.u_grid);
    const std::vector<double> mean = e.mean_path();
    std::vector<double> y1(grid.n_steps);
    for (std::size_t i = 0; i < grid.n_steps; ++i) {
        double m = 0.0;
        for (std::size_t n = 0; n < N; ++n) m += s.phi(e.x(n, i));
        y1[i] = m / static_cast<double>(N);
    }

    MaxPrincipleReport rep;
    rep.tol_maximization = cfg.tol_maximization;
    rep.tol_concavity = cfg.tol_concavity;

    RngStream rng(cfg.seed);
    const std::size_t knot_stride =
        std::max<std::size_t>(1, grid.n_steps / cfg.n_sample_knots);
    const std::size_t particle_stride =
        std::max<std::size_t>(1, N / cfg.n_sample_particles);

    // (i) maximization at the realized trajectory points
    for (std::size_t i = 0; i < grid.n_steps; i += knot_stride) {
        for (std::size_t n = 0; n < N; n += particle_stride) {
            const IntensityPath& ip = e.noise->path_of(n);
            const double t = grid.knots[i];
            const double lB = ip.lamB[i], lH = ip.lamH[i];
            const double x = e.x(n, i);
            const double pf = adj.pF_at(n, i);
            const double* qf = adj.qF_at(n, i);
            const double at_uhat = f_hamiltonian(s, t, lB, lH, x, y1[i], mean[i],
                                                 u_hat.at(n, i), pf, qf);
            double best = -std::numeric_limits<double>::infinity();
            for (double vv : ugrid) {
                const double H = f_hamiltonian(s, t, lB, lH, x, y1[i], mean[i], vv,
                                               pf, qf);
                if (H > best) best = H;  // ties keep the smaller u
            }
            rep.maximization_gap = std::max(rep.maximization_gap, best - at_uhat);
        }
    }
    rep.maximization_pass = rep.maximization_gap <= cfg.tol_maximization;

    // (ii) midpoint concavity of h = max_U H^F in (x, y1, y2)
    // probe box from the realized state range
    double xlo = e.x(0, 0), xhi = e.x(0, 0);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i <= grid.n_steps; ++i) {
            xlo = std::min(xlo, e.x(n, i));
            xhi = std::max(xhi, e.x(n, i));
        }
    const double span = std::max(1.0, xhi - xlo);
    xlo -= 0.25 * span;
    xhi += 0.25 * span;

    auto h_of = [&](std::size_t i, std::size_t n, double x, double yy1, double yy2) {
        const IntensityPath& ip = e.noise->path_of(n);
        double best = -std::numeric_limits<double>::infinity();
        for (double vv : ugrid) {
            const double H = f_hamiltonian(s, grid.knots[i], ip.lamB[i], ip.lamH[i],
                                           x, yy1, yy2, vv, adj.pF_at(n, i),
                                           adj.qF_at(n, i));
            if (H > best) best = H;
        }
        return best;
    };
    auto draw = [&](RngStream& r) { return xlo + (xhi - xlo) * r.next_double(); };

    const double alphas[3] = {0.25, 0.5, 0.75};
    for (std::size_t probe = 0; probe < cfg.n_state_probes; ++probe) {
        RngStream r = rng.child(probe);
        const std::size_t i = r.next_u64() % grid.n_steps;
        const std::size_t n = r.next_u64() % N;
        const double P[3] = {draw(r), draw(r), draw(r)};
        const double Pp[3] = {draw(r), draw(r), draw(r)};
        const double hP = h_of(i, n, P[0], P[1], P[2]);
        const double hPp = h_of(i, n, Pp[0], Pp[1], Pp[2]);
        for (double a : alphas) {
            const double hmid =
                h_of(i, n, a * P[0] + (1 - a) * Pp[0], a * P[1] + (1 - a) * Pp[1],
                     a * P[2] + (1 - a) * Pp[2]);
            ++rep.concavity_probes;
            if (hmid < a * hP + (1 - a) * hPp - cfg.tol_concavity)
                ++rep.concavity_violations;
        }
    }
    rep.concavity_pass = rep.concavity_violations == 0;
    return rep;
}

}  // namespace tcmf
