// Acceptance suite: one pass/fail line per criterion, nonzero exit if any
// criterion fails. Oracle values are computed in place (quadrature, scalar
// ODEs, permutation search, piecewise-constant control search), independent
// of the library paths they check.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "tcmf/tcmf.hpp"

using namespace tcmf;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int number, const std::string& name, bool pass,
            const std::string& detail) {
    std::printf("%s  criterion %d: %s  [%s]\n", pass ? "PASS" : "FAIL", number,
                name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// 1. Ito isometry for five registered integrands, 5 SE at 10^4 seeds
// ---------------------------------------------------------------------------
void criterion_1() {
    const TimeGrid grid = build_grid(1.0, 16);
    const LevyGrid lg = discretize_levy(LevySpec::atoms({1.0, -0.5}, {0.6, 0.8}), 1, 0.0);
    IntensityModel model;
    model.B = IntensityComponent::square_root(1.0, 1.5, 1.0, 0.4);
    model.H = IntensityComponent::constant(0.8);

    // integrand(step, slot, running dG-sum) with slot 0 = Gaussian
    using Integrand = std::function<double(std::size_t, std::size_t, double)>;
    struct Registered {
        std::string name;
        Integrand phi;
    };
    const std::vector<Registered> registered = {
        {"all-ones", [](std::size_t, std::size_t, double) { return 1.0; }},
        {"gaussian-slot",
         [](std::size_t, std::size_t slot, double) { return slot == 0 ? 1.0 : 0.0; }},
        {"mark-value",
         [&lg](std::size_t, std::size_t slot, double) {
             return slot == 0 ? 0.0 : lg.marks[slot - 1];
         }},
        {"time-ramp",
         [&grid](std::size_t i, std::size_t, double) {
             return grid.knots[i] + 0.5;
         }},
        {"adapted-tanh",
         [](std::size_t, std::size_t, double w) { return std::tanh(w); }},
    };

    const std::size_t n_seeds = 10000;
    bool all_pass = true;
    std::string detail;
    for (const auto& reg : registered) {
        double s_sq = 0.0, s_norm = 0.0, s_sq2 = 0.0, s_norm2 = 0.0, s_cross = 0.0;
        for (std::size_t s = 0; s < n_seeds; ++s) {
            const std::uint64_t seed = RngStream(1000).child(7, s).next_u64();
            const IntensityPath ip = sample_intensity(model, grid, seed);
            const NoiseIncrements ni = sample_noise(ip, lg, seed);
            double I = 0.0, norm = 0.0, w = 0.0;
            for (std::size_t i = 0; i < grid.n_steps; ++i) {
                MarkFunction mf = MarkFunction::zeros(lg.n_marks());
                mf.v0 = reg.phi(i, 0, w);
                for (std::size_t k = 0; k < lg.n_marks(); ++k)
                    mf.v[k] = reg.phi(i, k + 1, w);
                I += mf.v0 * ni.dG[i];
                for (std::size_t k = 0; k < lg.n_marks(); ++k)
                    I += mf.v[k] * ni.compensated(i, k);
                norm += lambda_seminorm_sq(mf, ip.lamB[i], ip.lamH[i], lg) * grid.dt;
                w += ni.dG[i];  // only used by the adapted integrand at i+1
            }
            s_sq += I * I;
            s_sq2 += I * I * I * I;
            s_norm += norm;
            s_norm2 += norm * norm;
            s_cross += I * I * norm;
        }
        const double n = static_cast<double>(n_seeds);
        const double msq = s_sq / n, mnorm = s_norm / n;
        const double ratio = msq / mnorm;
        const double var_sq = s_sq2 / n - msq * msq;
        const double var_norm = s_norm2 / n - mnorm * mnorm;
        const double cov = s_cross / n - msq * mnorm;
        const double se = std::sqrt(
            std::max(0.0, var_sq / (mnorm * mnorm) +
                              msq * msq * var_norm / std::pow(mnorm, 4) -
                              2.0 * msq * cov / std::pow(mnorm, 3)) /
            n);
        const bool ok = std::abs(ratio - 1.0) <= 5.0 * se;
        if (!ok) all_pass = false;
        detail += reg.name + " ratio " + std::to_string(ratio) + " (5se " +
                  std::to_string(5.0 * se) + "); ";
    }
    report(1, "Ito isometry, 5 integrands, 10^4 seeds", all_pass, detail);
}

// ---------------------------------------------------------------------------
// 2. conditional moments of mu: centering, orthogonality, second moment
// ---------------------------------------------------------------------------
void criterion_2() {
    const TimeGrid grid = build_grid(1.0, 20);
    const LevyGrid lg = discretize_levy(LevySpec::atoms({1.0, -1.0}, {0.6, 0.4}), 1, 0.0);
    IntensityModel model;
    model.B = IntensityComponent::square_root(1.0, 1.0, 1.0, 0.4);
    model.H = IntensityComponent::constant(0.8);
    const IntensityPath ip = sample_intensity(model, grid, 2024);  // fixed path

    const MarkWindow w1 = MarkWindow::all(lg);
    const MarkWindow w2 = MarkWindow::gaussian_only();
    const std::size_t n_seeds = 20000;
    std::vector<double> m1(n_seeds), cross(n_seeds), sq(n_seeds);
    for (std::size_t s = 0; s < n_seeds; ++s) {
        const NoiseIncrements ni =
            sample_noise(ip, lg, RngStream(2025).child(3, s).next_u64());
        m1[s] = measure_of_window(0.0, 0.5, w1, ni);
        cross[s] = m1[s] * measure_of_window(0.5, 1.0, w2, ni);
        sq[s] = m1[s] * m1[s];
    }
    const auto st1 = oracle::stats(m1);
    const auto stc = oracle::stats(cross);
    const auto sts = oracle::stats(sq);
    const double lam = lambda_measure(0.0, 0.5, w1, ip, lg);
    const bool centering = std::abs(st1.mean) <= 5.0 * st1.se_mean();
    const bool orth = std::abs(stc.mean) <= 5.0 * stc.se_mean();
    const bool second = std::abs(sts.mean - lam) <= 5.0 * sts.se_mean();
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "mean %.4g (5se %.4g), cross %.4g (5se %.4g), E[mu^2]-Lambda "
                  "%.4g (5se %.4g)",
                  st1.mean, 5.0 * st1.se_mean(), stc.mean, 5.0 * stc.se_mean(),
                  sts.mean - lam, 5.0 * sts.se_mean());
    report(2, "conditional moments of mu", centering && orth && second, buf);
}

// ---------------------------------------------------------------------------
// 3. 1-D Wasserstein: sorted pairing equals exhaustive permutation minimum
// ---------------------------------------------------------------------------
void criterion_3() {
    RngStream rng(3003);
    double worst = 0.0;
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 1 + rng.next_u64() % 6;
        std::vector<double> a(n), b(n);
        for (auto& v : a) v = 6.0 * rng.next_double() - 3.0;
        for (auto& v : b) v = 6.0 * rng.next_double() - 3.0;
        const double fast = wasserstein2(empirical(a), empirical(b));
        const double slow = oracle::wasserstein2_bruteforce(a, b);
        worst = std::max(worst, std::abs(fast - slow));
    }
    char buf[128];
    std::snprintf(buf, sizeof(buf), "max |sorted - exhaustive| = %.3g over 500 instances",
                  worst);
    report(3, "1-D Wasserstein brute-force equivalence", worst <= 1e-12, buf);
}

// ---------------------------------------------------------------------------
// 4. Picard-on-law contraction and mean ODE match on the linear test
// ---------------------------------------------------------------------------
void criterion_4() {
    const double a = -1.0, c = 0.5;
    CoefficientSet coeffs;
    coeffs.name = "linear-test";
    coeffs.features = {MeasureFeature::mean()};
    coeffs.drift = [a, c](double, double, double, double x,
                          std::span<const double> f, double) {
        return a * x + c * f[0];
    };
    coeffs.jump = [](double, double, double, double, double,
                     std::span<const double>, double) { return 0.0; };
    auto noise = std::make_shared<EnsembleNoise>(sample_ensemble_noise(
        IntensityModel::constant(0.0, 0.0), build_grid(1.0, 1000), LevyGrid{},
        10000, 4004, IntensitySharing::shared));
    const PicardResult r = picard_law_solve(coeffs, 1.0, noise, 1e-12, 60);

    double rho = 0.0;
    const auto& d = r.diagnostics.distances;
    for (std::size_t m = 1; m + 1 < d.size(); ++m) {
        if (d[m + 1] <= 1e-13) break;
        rho = std::max(rho, d[m + 1] / d[m]);
    }
    const std::vector<double> mean = r.ensemble.mean_path();
    double worst_rel = 0.0;
    for (std::size_t i = 0; i <= 1000; i += 50) {
        const double exact = std::exp((a + c) * noise->grid.knots[i]);
        worst_rel = std::max(worst_rel, std::abs(mean[i] - exact) / std::abs(exact));
    }
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "contraction ratio %.3f (<= 0.9), mean ODE rel err %.2e (<= 1e-3), "
                  "%zu iterations",
                  rho, worst_rel, r.diagnostics.iterations);
    report(4, "Picard-on-law contraction + scalar ODE oracle",
           r.diagnostics.converged && rho <= 0.9 && worst_rel <= 1e-3, buf);
}

// ---------------------------------------------------------------------------
// 5. mean-field BSDE: exact trivial, representation, linear driver, beta ratio
// ---------------------------------------------------------------------------
ParticleEnsemble brownian_forward(std::size_t N, std::size_t steps,
                                  std::uint64_t seed) {
    auto noise = std::make_shared<EnsembleNoise>(sample_ensemble_noise(
        IntensityModel::constant(1.0, 0.0), build_grid(1.0, steps), LevyGrid{},
        N, seed, IntensitySharing::shared));
    CoefficientSet c;
    c.name = "bm";
    c.drift = [](double, double, double, double, std::span<const double>, double) {
        return 0.0;
    };
    c.jump = [](double, double z, double, double, double, std::span<const double>,
                double) { return z == 0.0 ? 1.0 : 0.0; };
    return euler_solve_fixed_law(c, LawFlow::dirac(noise->grid, 0.0), 0.0, noise);
}

void criterion_5() {
    RegressionBasis basis;
    std::string detail;
    bool pass = true;

    {  // (i) zero driver, constant terminal: exact to float precision
        const ParticleEnsemble fwd = brownian_forward(400, 50, 5001);
        const BSDESolution sol = backward_sweep(
            [](std::size_t, std::size_t, double, const double*) { return 0.0; },
            std::vector<double>(fwd.N, 3.0), fwd, basis);
        double worst_y = 0.0, worst_z = 0.0;
        for (std::size_t n = 0; n < fwd.N; ++n)
            for (std::size_t i = 0; i < 50; ++i) {
                worst_y = std::max(worst_y, std::abs(sol.y(n, i) - 3.0));
                worst_z = std::max(worst_z, std::abs(sol.z(n, i)[0]));
            }
        const bool ok =
            sol.terminal_residual == 0.0 && worst_y <= 1e-7 && worst_z <= 1e-7;
        pass = pass && ok;
        char buf[96];
        std::snprintf(buf, sizeof(buf), "(i) |Y-c| %.1e, |Z| %.1e; ", worst_y,
                      worst_z);
        detail += buf;
    }
    {  // (ii) martingale representation recovers Z(0) ~ 1
        const ParticleEnsemble fwd = brownian_forward(4000, 50, 5002);
        std::vector<double> F(fwd.N);
        for (std::size_t n = 0; n < fwd.N; ++n) F[n] = fwd.x(n, 50);
        const BSDESolution sol = backward_sweep(
            [](std::size_t, std::size_t, double, const double*) { return 0.0; },
            F, fwd, basis);
        double zbar = 0.0;
        for (std::size_t n = 0; n < fwd.N; ++n)
            for (std::size_t i = 0; i < 50; ++i) zbar += sol.z(n, i)[0];
        zbar /= static_cast<double>(fwd.N * 50);
        const bool ok = std::abs(zbar - 1.0) <= 0.05;
        pass = pass && ok;
        char buf[64];
        std::snprintf(buf, sizeof(buf), "(ii) mean Z0 %.4f; ", zbar);
        detail += buf;
    }
    std::vector<double> trace;
    {  // (iii) linear mean-field driver h = y': E[Y_t] = c e^{-(T-t)}
        const ParticleEnsemble fwd = brownian_forward(2000, 100, 5003);
        const ParticleEnsemble copy = brownian_forward(2000, 100, 5004);
        LinearBSDESpec spec;
        spec.on_main.c.assign(fwd.N * 100, 1.0);
        spec.on_copy.c.assign(copy.N * 100, 1.0);
        spec.F_main.assign(fwd.N, 1.5);
        spec.F_copy.assign(copy.N, 1.5);
        BSDEPicardParams params;
        params.tol = 1e-12;
        params.max_iter = 25;
        const BSDESolution sol = solve_linear(spec, fwd, copy, basis, params);
        trace = sol.beta_trace;
        double worst_rel = 0.0;
        for (std::size_t i = 0; i <= 100; i += 10) {
            double mean = 0.0;
            for (std::size_t n = 0; n < fwd.N; ++n) mean += sol.y(n, i);
            mean /= static_cast<double>(fwd.N);
            const double exact = 1.5 * std::exp(fwd.grid.knots[i] - 1.0);
            worst_rel = std::max(worst_rel, std::abs(mean - exact) / exact);
        }
        const bool ok = worst_rel <= 1e-2;
        pass = pass && ok;
        char buf[64];
        std::snprintf(buf, sizeof(buf), "(iii) mean rel err %.2e; ", worst_rel);
        detail += buf;
    }
    {  // (iv) Psi-iteration beta-norm contraction
        double rho = 0.0;
        for (std::size_t m = 1; m + 1 < trace.size(); ++m) {
            if (trace[m + 1] <= 1e-8 * trace[0]) break;
            rho = std::max(rho, trace[m + 1] / trace[m]);
        }
        const bool ok = trace.size() >= 3 && rho <= 0.9;
        pass = pass && ok;
        char buf[64];
        std::snprintf(buf, sizeof(buf), "(iv) beta ratio %.3f", rho);
        detail += buf;
    }
    report(5, "mean-field BSDE solver", pass, detail);
}

// ---------------------------------------------------------------------------
// 6. Gateaux derivative vs finite differences; variation difference quotient
// ---------------------------------------------------------------------------
void criterion_6() {
    VasicekScenario vs;
    vs.theta = 1.0;
    vs.sigma0 = 0.25;
    vs.r0 = 1.0;
    vs.n_steps = 100;
    vs.N = 2000;
    vs.seed = 6006;
    const Scenario s = build_mean_field_scenario(vs);
    const ControlPath u_hat = ControlPath::constant(0.4, s.grid);
    const PicardResult base = solve_controlled_forward(s, u_hat);

    RngStream rng(6007);
    std::size_t agreements = 0;
    double worst_excess = 0.0;
    const std::size_t n_dirs = 20;
    for (std::size_t dir = 0; dir < n_dirs; ++dir) {
        std::vector<double> vv(s.grid.n_knots());
        RngStream r = rng.child(dir);
        for (auto& x : vv) x = r.next_double() - 0.5;
        const ControlPath v = ControlPath::deterministic(vv);
        const GateauxResult g = gateaux_derivative(s, u_hat, v, base.ensemble);
        const double tol = 5.0 * (g.se_formula + g.se_fd) + 1e-4;
        const double err = std::abs(g.formula - g.finite_difference);
        if (err <= tol) ++agreements;
        worst_excess = std::max(worst_excess, err - tol);
    }
    const bool gateaux_ok = agreements == n_dirs;

    // difference quotient of the variation process on a drift with curvature
    // (the preset's dynamics are affine, where the quotient is exact by
    // linearity, so the limit statement is exercised on a nonlinear variant)
    Scenario sn = build_mean_field_scenario([] {
        VasicekScenario v2;
        v2.theta = 1.0;
        v2.sigma0 = 0.15;
        v2.r0 = 1.0;
        v2.n_steps = 50;
        v2.N = 400;
        v2.seed = 6008;
        return v2;
    }());
    sn.b = [](double, double, double, double x, double y2, double u) {
        return (-x + y2 - u) + 0.4 * std::sin(x);
    };
    sn.db_dx = [](double, double, double, double x, double, double) {
        return -1.0 + 0.4 * std::cos(x);
    };
    sn.db_dy = [](double, double, double, double, double, double) { return 1.0; };
    sn.db_du = [](double, double, double, double, double, double) { return -1.0; };
    const ControlPath uh = ControlPath::constant(0.4, sn.grid);
    const PicardResult b0 = solve_controlled_forward(sn, uh);
    const ControlPath v1 = ControlPath::constant(1.0, sn.grid);
    const ParticleEnsemble Z = solve_variation(sn, uh, v1, b0.ensemble);
    std::vector<double> errs;
    for (double theta : {1e-1, 1e-2, 1e-3}) {
        ControlPath up = uh;
        for (double& x : up.values) x += theta;
        const PicardResult bp = solve_controlled_forward(sn, up, b0.ensemble.noise);
        double err = 0.0;
        for (std::size_t n = 0; n < Z.N; ++n) {
            double worst = 0.0;
            for (std::size_t i = 0; i <= sn.grid.n_steps; ++i) {
                const double q = (bp.ensemble.x(n, i) - b0.ensemble.x(n, i)) / theta;
                worst = std::max(worst, (q - Z.x(n, i)) * (q - Z.x(n, i)));
            }
            err += worst;
        }
        errs.push_back(err / static_cast<double>(Z.N));
    }
    const bool quotient_ok = errs[1] < errs[0] && errs[2] < errs[1];
    char buf[192];
    std::snprintf(buf, sizeof(buf),
                  "%zu/20 directions agree (worst excess %.2e); quotient errors "
                  "%.2e > %.2e > %.2e",
                  agreements, worst_excess, errs[0], errs[1], errs[2]);
    report(6, "Gateaux derivative + variation process", gateaux_ok && quotient_ok,
           buf);
}

// ---------------------------------------------------------------------------
// 7. maximum-principle checks on the Vasicek LQ preset
// ---------------------------------------------------------------------------
void criterion_7() {
    bool pass = true;
    std::string detail;

    // Riccati oracle validated against brute-force piecewise-constant search
    {
        const TimeGrid fine = build_grid(1.0, 2000);
        const RiccatiSolution ric = riccati_oracle(1.0, 1.0, fine);
        const std::vector<double> u_bf =
            oracle::lq_bruteforce_search(1.0, 1.0, 1.0, 20, 2000, 0.0, 10.0);
        const double j_bf = oracle::lq_segment_cost(1.0, 1.0, 1.0, u_bf, 2000);
        const double gap = std::abs(j_bf - ric.reduced_value());
        pass = pass && gap <= 1e-3;
        char buf[96];
        std::snprintf(buf, sizeof(buf), "oracle-vs-search gap %.2e; ", gap);
        detail += buf;
    }

    // (a) sigma = 0 sub-case: candidate matches the oracle in L2(grid)
    {
        VasicekScenario vs;
        vs.theta = 1.0;
        vs.sigma0 = 0.0;
        vs.r0 = 1.0;
        vs.n_steps = 200;
        vs.N = 120;
        vs.seed = 7001;
        const VasicekReport rep = run_example(vs);
        pass = pass && rep.u_hat_vs_star_l2 <= 1e-2;
        char buf[64];
        std::snprintf(buf, sizeof(buf), "(a) rel L2 %.2e; ", rep.u_hat_vs_star_l2);
        detail += buf;
    }

    // (b)(c)(d) on the noisy preset with deterministic lambda
    VasicekScenario vs;
    vs.theta = 1.0;
    vs.sigma0 = 0.25;
    vs.r0 = 1.0;
    vs.n_steps = 100;
    vs.N = 2000;
    vs.seed = 7002;
    const Scenario s = build_mean_field_scenario(vs);
    const RiccatiSolution ric = riccati_oracle(vs.theta, vs.r0, s.grid);
    ControlPath u_star = ControlPath::deterministic(ric.u_star);
    u_star.clamp(s.control_set.lo, s.control_set.hi);
    auto noise_main = scenario_noise(s);
    auto noise_copy = scenario_noise(s, 1);
    const PicardResult fwd = solve_controlled_forward(s, u_star, noise_main);
    const PicardResult fwd_copy = solve_controlled_forward(s, u_star, noise_copy);
    const AdjointSpec aspec =
        assemble_adjoint(s, u_star, fwd.ensemble, u_star, fwd_copy.ensemble);
    const AdjointSolution adj = solve_adjoint(aspec, fwd.ensemble,
                                              fwd_copy.ensemble, s.basis, true);
    const std::size_t N = fwd.ensemble.N;
    const std::size_t nk = s.grid.n_knots();
    ControlPath u_hat;
    u_hat.per_particle = true;
    u_hat.n_particles = N;
    u_hat.n_knots = nk;
    u_hat.values.assign(N * nk, 0.0);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < nk; ++i)
            u_hat.values[n * nk + i] =
                s.control_set.clamp(-0.5 * vs.theta * adj.pF_at(n, i));

    {  // (b) duH^F at the candidate within 5 SE of 0 at every knot
        const ScenarioPartials d(s);
        const std::vector<double> mean = fwd.ensemble.mean_path();
        std::vector<double> y1(s.grid.n_steps);
        for (std::size_t i = 0; i < s.grid.n_steps; ++i) {
            double m = 0.0;
            for (std::size_t n = 0; n < N; ++n) m += s.phi(fwd.ensemble.x(n, i));
            y1[i] = m / static_cast<double>(N);
        }
        bool ok = true;
        double worst = 0.0;
        for (std::size_t i = 0; i < s.grid.n_steps; ++i) {
            std::vector<double> vals(N);
            for (std::size_t n = 0; n < N; ++n) {
                const IntensityPath& ip = fwd.ensemble.noise->path_of(n);
                vals[n] = f_hamiltonian_du(
                    s, d, s.grid.knots[i], ip.lamB[i], ip.lamH[i],
                    fwd.ensemble.x(n, i), y1[i], mean[i], u_hat.at(n, i),
                    adj.pF_at(n, i), adj.qF_at(n, i));
            }
            const auto st = oracle::stats(vals);
            worst = std::max(worst, std::abs(st.mean));
            if (std::abs(st.mean) > 5.0 * st.se_mean() + 1e-12) ok = false;
        }
        pass = pass && ok;
        char buf[64];
        std::snprintf(buf, sizeof(buf), "(b) worst |mean duH| %.2e; ", worst);
        detail += buf;
    }
    {  // (c) concavity of h at tol 1e-9
        SufficientCheckConfig cfg;
        cfg.tol_concavity = 1e-9;
        const MaxPrincipleReport rep =
            check_sufficient(s, u_hat, adj, fwd.ensemble, cfg);
        pass = pass && rep.concavity_violations == 0;
        char buf[64];
        std::snprintf(buf, sizeof(buf), "(c) %zu/%zu concavity violations; ",
                      rep.concavity_violations, rep.concavity_probes);
        detail += buf;
    }
    {  // (d) J(u-hat) beats 40 perturbed admissible controls
        const PicardResult fwd_hat = solve_controlled_forward(s, u_hat, noise_main);
        const ObjectiveEstimate j_hat =
            estimate_objective(s, fwd_hat.ensemble, u_hat);
        RngStream rng(7003);
        std::size_t wins = 0;
        const std::size_t n_pert = 40;
        for (std::size_t p = 0; p < n_pert; ++p) {
            RngStream r = rng.child(p);
            ControlPath up = u_star;
            for (double& x : up.values)
                x = s.control_set.clamp(x + 0.2 * (r.next_double() - 0.5));
            const PicardResult fp = solve_controlled_forward(s, up, noise_main);
            const ObjectiveEstimate jp = estimate_objective(s, fp.ensemble, up);
            // paired comparison with common noise
            std::vector<double> diff(N);
            for (std::size_t n = 0; n < N; ++n)
                diff[n] = j_hat.per_particle[n] - jp.per_particle[n];
            const auto st = oracle::stats(diff);
            if (st.mean >= -5.0 * st.se_mean()) ++wins;
        }
        pass = pass && wins >= 38;  // >= 95% of 40
        char buf[64];
        std::snprintf(buf, sizeof(buf), "(d) %zu/40 perturbations beaten", wins);
        detail += buf;
    }
    report(7, "Vasicek LQ maximum principle", pass, detail);
}

// ---------------------------------------------------------------------------
// 8. propagation of chaos: log-log W2 slope in [-0.8, -0.2]
// ---------------------------------------------------------------------------
void criterion_8() {
    VasicekScenario vs;
    vs.theta = 1.0;
    vs.sigma0 = 0.3;
    vs.r0 = 1.0;
    vs.n_steps = 50;
    vs.seed = 8008;
    const TimeGrid grid = build_grid(vs.T, vs.n_steps);
    const ControlPath zero = ControlPath::constant(0.0, grid);

    VasicekScenario ref = vs;
    ref.N = 20000;
    ref.seed = 8888;
    const Scenario s = build_mean_field_scenario(ref);
    const PicardResult mf = solve_controlled_forward(s, zero);
    const EmpiricalMeasure mf_T = mf.ensemble.cross_section(grid.n_steps);

    const std::vector<std::size_t> n_list = {100, 1000, 10000};
    const std::size_t reps = 8;
    std::vector<double> lw2, ln;
    std::string detail = "w2:";
    for (std::size_t j = 0; j < n_list.size(); ++j) {
        double acc = 0.0;
        for (std::size_t rep = 1; rep <= reps; ++rep)
            acc += wasserstein2(
                n_agent_simulate(vs, n_list[j], zero,
                                 MeanFieldAveraging::one_over_n,
                                 j * reps + rep)
                    .cross_section(grid.n_steps),
                mf_T);
        acc /= static_cast<double>(reps);
        lw2.push_back(std::log(acc));
        ln.push_back(std::log(static_cast<double>(n_list[j])));
        detail += " " + std::to_string(acc);
    }
    const double slope = oracle::slope(ln, lw2);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "; slope %.3f", slope);
    detail += buf;
    report(8, "propagation of chaos slope", slope >= -0.8 && slope <= -0.2, detail);
}

// ---------------------------------------------------------------------------
// 9. reproducibility: byte-identical outputs, thread-count invariance
// ---------------------------------------------------------------------------
void criterion_9() {
    const fs::path dir = fs::temp_directory_path() / "tcmf_acceptance_repro";
    fs::remove_all(dir);
    const char* config_text = R"({
        "grid": {"T": 1.0, "n_steps": 32},
        "intensity": {"B": {"kind": "sqrt", "init": 1.0, "rev": 1.0,
                             "level": 1.0, "vol": 0.4},
                      "H": {"kind": "constant", "level": 0.5}},
        "levy": {"family": "atoms", "marks": [1.0, -1.0], "weights": [0.6, 0.4]},
        "coefficients": {"name": "linear-test", "a": -1.0, "c": 0.5,
                          "sigma0": 0.3, "x0": 1.0},
        "solver": {"N": 500, "tol": 1e-8, "max_iter": 30},
        "seeds": {"master": 909}
    })";
    const ScenarioConfig cfg = parse_config(config_text);

    bool pass = true;
    std::string detail;
    {
        cmd_simulate_noise(cfg, (dir / "n1").string());
        cmd_simulate_noise(cfg, (dir / "n2").string());
        const bool same =
            slurp(dir / "n1" / "increments.csv") == slurp(dir / "n2" / "increments.csv") &&
            slurp(dir / "n1" / "isometry.json") == slurp(dir / "n2" / "isometry.json");
        pass = pass && same;
        detail += std::string("noise rerun ") + (same ? "identical" : "DIFFERS") + "; ";
    }
    {
        set_max_threads(1);
        cmd_solve_mfsde(cfg, (dir / "t1").string());
        set_max_threads(4);
        cmd_solve_mfsde(cfg, (dir / "t4").string());
        set_max_threads(0);
        const bool same =
            slurp(dir / "t1" / "ensemble.csv") == slurp(dir / "t4" / "ensemble.csv") &&
            slurp(dir / "t1" / "law.csv") == slurp(dir / "t4" / "law.csv");
        pass = pass && same;
        detail += std::string("threads 1 vs 4 ") + (same ? "identical" : "DIFFERS");
    }
    report(9, "reproducibility of CLI outputs", pass, detail);
}

}  // namespace

int main() {
    std::printf("acceptance suite (%s)\n", version_string());
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    criterion_8();
    criterion_9();
    if (g_failures == 0)
        std::printf("all criteria passed\n");
    else
        std::printf("%d criteria FAILED\n", g_failures);
    return g_failures == 0 ? 0 : 1;
}
