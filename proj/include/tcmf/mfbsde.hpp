#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tcmf/errors.hpp"
#include "tcmf/mfsde.hpp"
#include "tcmf/noise.hpp"
#include "tcmf/parallel.hpp"
#include "tcmf/regression.hpp"

namespace tcmf {

/// Arguments of a general mean-field BSDE driver
/// h(t, lambda, lambda', y, y', z(.), z'(.)). Primed slots refer to the
/// independent copy; z has n_marks+1 entries with slot 0 the Gaussian one.
struct DriverArgs {
    double t = 0.0;
    double lamB = 0.0, lamH = 0.0;
    double lamB_p = 0.0, lamH_p = 0.0;
    double y = 0.0, y_p = 0.0;
    const double* z = nullptr;
    const double* z_p = nullptr;
};

struct Driver {
    enum class Kind { general, linear };
    Kind kind = Kind::general;
    std::function<double(const DriverArgs&)> h;
    double lipschitz = 1.0;  // K: enters the default beta = 16K^2+1
};

/// Solution paths of a backward equation on a particle ensemble. Y is stored
/// per knot, Z per step with n_marks+1 slots (slot 0 = Gaussian).
struct BSDESolution {
    TimeGrid grid;
    std::size_t N = 0;
    std::size_t n_marks = 0;
    std::vector<double> Y;  // N x n_knots
    std::vector<double> Z;  // N x n_steps x (n_marks+1)
    double terminal_residual = 0.0;   // max_n |Y_T - F|, zero by construction
    std::vector<double> beta_trace;   // successive beta-norm distances
    bool converged = true;
    double beta = 0.0;

    double y(std::size_t n, std::size_t knot) const {
        return Y[n * grid.n_knots() + knot];
    }
    double& y(std::size_t n, std::size_t knot) {
        return Y[n * grid.n_knots() + knot];
    }
    const double* z(std::size_t n, std::size_t step) const {
        return &Z[(n * grid.n_steps + step) * (n_marks + 1)];
    }
    double* z(std::size_t n, std::size_t step) {
        return &Z[(n * grid.n_steps + step) * (n_marks + 1)];
    }

    static BSDESolution zeros(const TimeGrid& grid, std::size_t N,
                              std::size_t n_marks) {
        BSDESolution s;
        s.grid = grid;
        s.N = N;
        s.n_marks = n_marks;
        s.Y.assign(N * grid.n_knots(), 0.0);
        s.Z.assign(N * grid.n_steps * (n_marks + 1), 0.0);
        return s;
    }
};

/// E' of a driver: for each unprimed particle, average h over the primed
/// (copy) sample with the unprimed slots held fixed.
inline std::vector<double> eval_eprime(
    const Driver& h, double t, std::span<const double> lamB,
    std::span<const double> lamH, std::span<const double> y,
    std::span<const double> z, std::size_t n_slots,
    std::span<const double> lamB_p, std::span<const double> lamH_p,
    std::span<const double> y_p, std::span<const double> z_p) {
    const std::size_t n = y.size();
    const std::size_t n_copy = y_p.size();
    if (n_copy == 0) throw std::invalid_argument("eval_eprime: empty copy sample");
    std::vector<double> out(n);
    parallel_for(n, [&](std::size_t i) {
        DriverArgs a;
        a.t = t;
        a.lamB = lamB[i];
        a.lamH = lamH[i];
        a.y = y[i];
        a.z = &z[i * n_slots];
        double s = 0.0;
        for (std::size_t m = 0; m < n_copy; ++m) {
            a.lamB_p = lamB_p[m];
            a.lamH_p = lamH_p[m];
            a.y_p = y_p[m];
            a.z_p = &z_p[m * n_slots];
            s += h.h(a);
        }
        out[i] = s / static_cast<double>(n_copy);
    });
    return out;
}

/// Effective driver with the primed slots frozen: maps (step, particle, y,
/// z-slots) to the drift value.
using FrozenDriver =
    std::function<double(std::size_t step, std::size_t particle, double y,
                         const double* z)>;

/// One backward regression sweep of dY = h~ dt + int Z dmu with terminal F.
///
/// Per step (backwards): Z is extracted slot-wise by covariation regression
/// against the noise increments, then Y by regressing the one-step target,
/// with an explicit predictor (Y at the next knot) and one corrector pass
/// for the implicit y-argument of the driver. The covariation responses are
/// centered by the conditional-mean estimate of Y at the next knot; the
/// centering term has zero conditional covariation with the increments, so
/// the estimator is unchanged in expectation but a constant martingale
/// yields Z = 0 to float precision rather than LSMC noise.
inline BSDESolution backward_sweep(const FrozenDriver& h_tilde,
                                   const std::vector<double>& terminal,
                                   const ParticleEnsemble& fwd,
                                   const RegressionBasis& basis) {
    const TimeGrid& grid = fwd.grid;
    const EnsembleNoise& noise = *fwd.noise;
    const LevyGrid& levy = noise.levy;
    const std::size_t N = fwd.N;
    const std::size_t M = levy.n_marks();
    const std::size_t nf = basis.n_features();
    if (terminal.size() != N)
        throw std::invalid_argument("backward_sweep: terminal size mismatch");
    if (N < 10 * nf)
        throw std::invalid_argument(
            "backward_sweep: sample too small for basis (need N >= 10 x features)");
    for (double f : terminal)
        if (!std::isfinite(f))
            throw std::invalid_argument("backward_sweep: non-finite terminal");

    BSDESolution sol = BSDESolution::zeros(grid, N, M);
    for (std::size_t n = 0; n < N; ++n) sol.y(n, grid.n_steps) = terminal[n];

    std::vector<double> X(N * nf);
    std::vector<double> resp(N), masked_X, masked_y;
    std::vector<std::size_t> active;
    const double dt = grid.dt;

    for (std::size_t i = grid.n_steps; i-- > 0;) {
        parallel_for(N, [&](std::size_t n) {
            const IntensityPath& ip = noise.path_of(n);
            basis.eval(fwd.x(n, i), ip.lamB[i], ip.lamH[i], &X[n * nf]);
        });

        // fit once per response against the step's feature matrix
        auto fitted_full = [&](const std::vector<double>& y) {
            return fit_and_predict(X, y, N, nf, basis.ridge);
        };
        // same, restricted to an index subset (zero elsewhere)
        auto fitted_subset = [&](const std::vector<std::size_t>& idx,
                                 const std::vector<double>& y,
                                 std::vector<double>& out) {
            masked_X.resize(idx.size() * nf);
            masked_y.resize(idx.size());
            for (std::size_t j = 0; j < idx.size(); ++j) {
                std::copy_n(&X[idx[j] * nf], nf, &masked_X[j * nf]);
                masked_y[j] = y[j];
            }
            const std::vector<double> beta =
                ridge_fit(masked_X, masked_y, idx.size(), nf, basis.ridge);
            for (std::size_t j = 0; j < idx.size(); ++j)
                out[idx[j]] = dot(&masked_X[j * nf], beta.data(), nf);
        };

        // conditional-mean estimate of Y at the next knot, used to center the
        // covariation responses
        parallel_for(N, [&](std::size_t n) { resp[n] = sol.y(n, i + 1); });
        const std::vector<double> cond_mean = fitted_full(resp);

        // Z slot 0: covariation with the Gaussian increment
        {
            active.clear();
            std::vector<double> responses;
            for (std::size_t n = 0; n < N; ++n) {
                const double mass = noise.path_of(n).lamB[i] * dt;
                if (mass > 0.0) {
                    active.push_back(n);
                    responses.push_back((sol.y(n, i + 1) - cond_mean[n]) *
                                        noise.inc[n].dG[i] / mass);
                }
            }
            std::vector<double> out(N, 0.0);
            if (active.size() == N) {
                out = fitted_full(responses);
            } else if (!active.empty() && active.size() >= 10 * nf) {
                fitted_subset(active, responses, out);
            }
            for (std::size_t n = 0; n < N; ++n) sol.z(n, i)[0] = out[n];
        }
        // Z jump slots: covariation with compensated counts
        for (std::size_t k = 0; k < M; ++k) {
            active.clear();
            std::vector<double> responses;
            for (std::size_t n = 0; n < N; ++n) {
                const double mass = noise.path_of(n).lamH[i] * levy.weights[k] * dt;
                if (mass > 0.0) {
                    active.push_back(n);
                    responses.push_back((sol.y(n, i + 1) - cond_mean[n]) *
                                        noise.inc[n].compensated(i, k) / mass);
                }
            }
            std::vector<double> out(N, 0.0);
            if (active.size() == N) {
                out = fitted_full(responses);
            } else if (!active.empty() && active.size() >= 10 * nf) {
                fitted_subset(active, responses, out);
            }
            for (std::size_t n = 0; n < N; ++n) sol.z(n, i)[k + 1] = out[n];
        }

        // Y: predictor uses Y_{i+1} in the driver's y-argument, then one
        // corrector with the fitted value
        parallel_for(N, [&](std::size_t n) {
            resp[n] = sol.y(n, i + 1) -
                      h_tilde(i, n, sol.y(n, i + 1), sol.z(n, i)) * dt;
        });
        const std::vector<double> predictor = fitted_full(resp);
        parallel_for(N, [&](std::size_t n) {
            resp[n] =
                sol.y(n, i + 1) - h_tilde(i, n, predictor[n], sol.z(n, i)) * dt;
        });
        const std::vector<double> corrected = fitted_full(resp);
        for (std::size_t n = 0; n < N; ++n) sol.y(n, i) = corrected[n];
    }

    double resid = 0.0;
    for (std::size_t n = 0; n < N; ++n)
        resid = std::max(resid, std::abs(sol.y(n, grid.n_steps) - terminal[n]));
    sol.terminal_residual = resid;
    return sol;
}

/// Exponentially weighted distance between two iterates:
/// sqrt( sum_i e^{beta t_i} mean_n(|dY|^2 + ||dZ||^2_lambda) dt ).
inline double beta_norm_distance(const BSDESolution& a, const BSDESolution& b,
                                 const EnsembleNoise& noise, double beta) {
    const TimeGrid& grid = a.grid;
    const std::size_t M = a.n_marks;
    double total = 0.0;
    for (std::size_t i = 0; i < grid.n_steps; ++i) {
        double step_sum = 0.0;
        for (std::size_t n = 0; n < a.N; ++n) {
            const IntensityPath& ip = noise.path_of(n);
            const double dy = a.y(n, i) - b.y(n, i);
            double s = dy * dy;
            const double* za = a.z(n, i);
            const double* zb = b.z(n, i);
            const double dz0 = za[0] - zb[0];
            s += dz0 * dz0 * ip.lamB[i];
            for (std::size_t k = 0; k < M; ++k) {
                const double dzk = za[k + 1] - zb[k + 1];
                s += dzk * dzk * ip.lamH[i] * noise.levy.weights[k];
            }
            step_sum += s;
        }
        total += std::exp(beta * grid.knots[i]) * step_sum /
                 static_cast<double>(a.N) * grid.dt;
    }
    return std::sqrt(total);
}

/// Terminal condition as a functional of an ensemble (so the same condition
/// can be realized on the main and the copy sample).
using TerminalFn = std::function<std::vector<double>(const ParticleEnsemble&)>;

inline TerminalFn constant_terminal(double c) {
    return [c](const ParticleEnsemble& e) {
        return std::vector<double>(e.N, c);
    };
}

namespace detail {

struct PicardState {
    BSDESolution main;
    BSDESolution copy;
};

// Freeze the primed slots of a general driver at the copy side's previous
// iterate. Same partial average as eval_eprime.
inline FrozenDriver freeze_general(const Driver& h, const ParticleEnsemble& self,
                                   const ParticleEnsemble& other,
                                   const BSDESolution& other_prev) {
    return [&h, &self, &other, &other_prev](std::size_t i, std::size_t n, double y,
                                            const double* z) {
        const EnsembleNoise& sn = *self.noise;
        const EnsembleNoise& on = *other.noise;
        DriverArgs a;
        a.t = self.grid.knots[i];
        a.lamB = sn.path_of(n).lamB[i];
        a.lamH = sn.path_of(n).lamH[i];
        a.y = y;
        a.z = z;
        double s = 0.0;
        for (std::size_t m = 0; m < other.N; ++m) {
            a.lamB_p = on.path_of(m).lamB[i];
            a.lamH_p = on.path_of(m).lamH[i];
            a.y_p = other_prev.y(m, i);
            a.z_p = other_prev.z(m, i);
            s += h.h(a);
        }
        return s / static_cast<double>(other.N);
    };
}

}  // namespace detail

struct BSDEPicardParams {
    std::optional<double> beta;  // default 16 K^2 + 1
    double tol = 1e-8;
    std::size_t max_iter = 25;
};

/// Picard iteration on the driver's primed slots. Both the main and the
/// independent-copy ensemble carry a solution; each iteration freezes the
/// primed slots of one side at the other side's previous iterate and runs a
/// backward sweep. Convergence is measured in the beta-norm on the main
/// side; non-convergence is reported, not thrown.
inline BSDESolution picard_bsde(const Driver& h, const TerminalFn& terminal,
                                const ParticleEnsemble& fwd,
                                const ParticleEnsemble& copy,
                                const RegressionBasis& basis,
                                const BSDEPicardParams& params = {}) {
    const double beta =
        params.beta.value_or(16.0 * h.lipschitz * h.lipschitz + 1.0);
    if (!(beta > 0.0)) throw std::invalid_argument("picard_bsde: beta must be > 0");
    if (copy.N == 0) throw std::invalid_argument("picard_bsde: empty copy ensemble");
    if (!fwd.grid.same_as(copy.grid))
        throw std::invalid_argument("picard_bsde: ensemble grid mismatch");

    const std::vector<double> F_main = terminal(fwd);
    const std::vector<double> F_copy = terminal(copy);

    detail::PicardState prev{
        BSDESolution::zeros(fwd.grid, fwd.N, fwd.noise->levy.n_marks()),
        BSDESolution::zeros(copy.grid, copy.N, copy.noise->levy.n_marks())};

    std::vector<double> trace;
    bool converged = false;
    for (std::size_t m = 0; m < params.max_iter; ++m) {
        const FrozenDriver fm = detail::freeze_general(h, fwd, copy, prev.copy);
        const FrozenDriver fc = detail::freeze_general(h, copy, fwd, prev.main);
        BSDESolution next_main = backward_sweep(fm, F_main, fwd, basis);
        BSDESolution next_copy = backward_sweep(fc, F_copy, copy, basis);
        const double d = beta_norm_distance(next_main, prev.main, *fwd.noise, beta);
        trace.push_back(d);
        prev.main = std::move(next_main);
        prev.copy = std::move(next_copy);
        if (d <= params.tol) {
            converged = true;
            break;
        }
    }
    BSDESolution out = std::move(prev.main);
    out.beta = beta;
    out.beta_trace = std::move(trace);
    out.converged = converged;
    return out;
}

/// Linear mean-field driver coefficients along one ensemble, in the form
///   h = A + B y + C y' + D(0) z(0) lamB + E(0) z'(0) lamB'
///       + sum_k [D(z_k) z(z_k) lamH + E(z_k) z'(z_k) lamH'] nu_k
/// where A = a + (mean of a_primed_factor over the copy) * a_carrier.
/// All paths are (particle, step) indexed; empty vectors mean zero. C and E
/// multiply primed quantities and are therefore read off the copy side.
struct LinearCoefficientPaths {
    std::vector<double> a;                // N x n_steps
    std::vector<double> a_primed_factor;  // N x n_steps, averaged on the copy
    std::vector<double> a_carrier;        // N x n_steps
    std::vector<double> b;                // N x n_steps
    std::vector<double> c;                // N x n_steps, read off the copy
    std::vector<double> d;                // N x n_steps x (M+1)
    std::vector<double> e;                // N x n_steps x (M+1), copy side

    static double at(const std::vector<double>& v, std::size_t idx) {
        return v.empty() ? 0.0 : v[idx];
    }
};

struct LinearBSDESpec {
    LinearCoefficientPaths on_main;  // coefficients evaluated along the main paths
    LinearCoefficientPaths on_copy;  // same functions along the copy paths
    std::vector<double> F_main;      // terminal per particle
    std::vector<double> F_copy;
    double bound = 1.0;  // declared coefficient bound (K)

    /// (C3')-style sanity check: all supplied paths finite and within the
    /// declared bound (the A path only needs square-summability).
    void validate(std::size_t n_main, std::size_t n_copy, std::size_t n_steps,
                  std::size_t n_slots) const;
};

inline void check_path(const std::vector<double>& v, std::size_t expected,
                       double bound, const char* name) {
    if (v.empty()) return;
    if (v.size() != expected)
        throw std::invalid_argument(std::string("linear bsde: bad size for ") + name);
    for (double x : v) {
        if (!std::isfinite(x))
            throw std::invalid_argument(std::string("linear bsde: non-finite ") + name);
        if (bound > 0.0 && std::abs(x) > bound)
            throw std::invalid_argument(std::string("linear bsde: ") + name +
                                        " exceeds declared bound");
    }
}

inline void LinearBSDESpec::validate(std::size_t n_main, std::size_t n_copy,
                                     std::size_t n_steps,
                                     std::size_t n_slots) const {
    auto side = [&](const LinearCoefficientPaths& p, std::size_t N) {
        check_path(p.a, N * n_steps, 0.0, "A");
        check_path(p.a_primed_factor, N * n_steps, 0.0, "A'");
        check_path(p.a_carrier, N * n_steps, 0.0, "A carrier");
        check_path(p.b, N * n_steps, bound, "B");
        check_path(p.c, N * n_steps, bound, "C");
        check_path(p.d, N * n_steps * n_slots, bound, "D");
        check_path(p.e, N * n_steps * n_slots, bound, "E");
    };
    side(on_main, n_main);
    side(on_copy, n_copy);
}

namespace detail {

// Frozen driver for one side of a linear spec: the primed terms reduce to
// per-step scalars averaged over the other side's previous iterate.
struct LinearFrozen {
    const LinearCoefficientPaths* self;
    const EnsembleNoise* noise;
    std::size_t n_steps;
    std::size_t n_slots;
    std::vector<double> primed_avg;  // per step: mean[C y' + E(.) z'(.) lambda']
    std::vector<double> a_primed_avg;  // per step: mean of a_primed_factor

    double operator()(std::size_t i, std::size_t n, double y,
                      const double* z) const {
        const std::size_t idx = n * n_steps + i;
        const IntensityPath& ip = noise->path_of(n);
        double v = LinearCoefficientPaths::at(self->a, idx) +
                   a_primed_avg[i] * LinearCoefficientPaths::at(self->a_carrier, idx) +
                   LinearCoefficientPaths::at(self->b, idx) * y + primed_avg[i];
        if (!self->d.empty()) {
            const double* drow = &self->d[idx * n_slots];
            v += drow[0] * z[0] * ip.lamB[i];
            for (std::size_t k = 0; k + 1 < n_slots; ++k)
                v += drow[k + 1] * z[k + 1] * ip.lamH[i] * noise->levy.weights[k];
        }
        return v;
    }
};

inline LinearFrozen freeze_linear(const LinearCoefficientPaths& self,
                                  const LinearCoefficientPaths& other,
                                  const ParticleEnsemble& self_ens,
                                  const ParticleEnsemble& other_ens,
                                  const BSDESolution& other_prev) {
    const std::size_t n_steps = self_ens.grid.n_steps;
    const std::size_t n_slots = self_ens.noise->levy.n_marks() + 1;
    LinearFrozen f;
    f.self = &self;
    f.noise = self_ens.noise.get();
    f.n_steps = n_steps;
    f.n_slots = n_slots;
    f.primed_avg.assign(n_steps, 0.0);
    f.a_primed_avg.assign(n_steps, 0.0);
    const EnsembleNoise& on = *other_ens.noise;
    for (std::size_t i = 0; i < n_steps; ++i) {
        double s = 0.0, sa = 0.0;
        for (std::size_t m = 0; m < other_ens.N; ++m) {
            const std::size_t idx = m * n_steps + i;
            sa += LinearCoefficientPaths::at(other.a_primed_factor, idx);
            s += LinearCoefficientPaths::at(other.c, idx) * other_prev.y(m, i);
            if (!other.e.empty()) {
                const IntensityPath& ip = on.path_of(m);
                const double* erow = &other.e[idx * n_slots];
                const double* zp = other_prev.z(m, i);
                s += erow[0] * zp[0] * ip.lamB[i];
                for (std::size_t k = 0; k + 1 < n_slots; ++k)
                    s += erow[k + 1] * zp[k + 1] * ip.lamH[i] *
                         on.levy.weights[k];
            }
        }
        f.primed_avg[i] = s / static_cast<double>(other_ens.N);
        f.a_primed_avg[i] = sa / static_cast<double>(other_ens.N);
    }
    return f;
}

}  // namespace detail

/// Linear-driver fast path: the E'-averages are per-step scalars, so each
/// Picard iteration costs one backward sweep per side.
inline BSDESolution solve_linear(const LinearBSDESpec& spec,
                                 const ParticleEnsemble& fwd,
                                 const ParticleEnsemble& copy,
                                 const RegressionBasis& basis,
                                 const BSDEPicardParams& params = {}) {
    const std::size_t n_slots = fwd.noise->levy.n_marks() + 1;
    spec.validate(fwd.N, copy.N, fwd.grid.n_steps, n_slots);
    if (!fwd.grid.same_as(copy.grid))
        throw std::invalid_argument("solve_linear: ensemble grid mismatch");
    const double beta =
        params.beta.value_or(16.0 * spec.bound * spec.bound + 1.0);
    if (!(beta > 0.0)) throw std::invalid_argument("solve_linear: beta must be > 0");

    detail::PicardState prev{
        BSDESolution::zeros(fwd.grid, fwd.N, fwd.noise->levy.n_marks()),
        BSDESolution::zeros(copy.grid, copy.N, copy.noise->levy.n_marks())};
    std::vector<double> trace;
    bool converged = false;
    for (std::size_t m = 0; m < params.max_iter; ++m) {
        const auto fm = detail::freeze_linear(spec.on_main, spec.on_copy, fwd, copy,
                                              prev.copy);
        const auto fc = detail::freeze_linear(spec.on_copy, spec.on_main, copy, fwd,
                                              prev.main);
        BSDESolution next_main = backward_sweep(
            [&fm](std::size_t i, std::size_t n, double y, const double* z) {
                return fm(i, n, y, z);
            },
            spec.F_main, fwd, basis);
        BSDESolution next_copy = backward_sweep(
            [&fc](std::size_t i, std::size_t n, double y, const double* z) {
                return fc(i, n, y, z);
            },
            spec.F_copy, copy, basis);
        const double d = beta_norm_distance(next_main, prev.main, *fwd.noise, beta);
        trace.push_back(d);
        prev.main = std::move(next_main);
        prev.copy = std::move(next_copy);
        if (d <= params.tol) {
            converged = true;
            break;
        }
    }
    BSDESolution out = std::move(prev.main);
    out.beta = beta;
    out.beta_trace = std::move(trace);
    out.converged = converged;
    return out;
}

}  // namespace tcmf
