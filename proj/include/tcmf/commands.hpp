#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "tcmf/config.hpp"
#include "tcmf/control.hpp"
#include "tcmf/io.hpp"
#include "tcmf/measures.hpp"
#include "tcmf/mfbsde.hpp"
#include "tcmf/mfsde.hpp"
#include "tcmf/vasicek.hpp"
#include "tcmf/version.hpp"

namespace tcmf {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int config = 2;
inline constexpr int non_convergence = 3;
inline constexpr int explosion = 4;
}  // namespace exit_code

/// Wall clock and per-stage timings written next to every command's output.
class RunManifest {
public:
    RunManifest(const ScenarioConfig& cfg, std::string command)
        : command_(std::move(command)),
          hash_(config_hash(cfg.raw_text)),
          seed_(cfg.master_seed),
          t0_(std::chrono::steady_clock::now()),
          stage_start_(t0_) {}

    void stage(const std::string& name) {
        const auto now = std::chrono::steady_clock::now();
        if (!current_.empty())
            stages_.emplace_back(current_,
                                 std::chrono::duration<double>(now - stage_start_).count());
        current_ = name;
        stage_start_ = now;
    }

    void write(const std::filesystem::path& dir) {
        stage("");
        JsonWriter w;
        w.begin_object();
        w.key("command").value(command_);
        w.key("config_hash").value(hash_);
        w.key("version").value(version_string());
        w.key("master_seed").value(seed_);
        w.key("wall_clock_seconds")
            .value(std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                 t0_)
                       .count());
        w.key("stages").begin_object();
        for (const auto& [name, secs] : stages_) w.key(name).value(secs);
        w.end_object();
        w.end_object();
        w.write(dir / "manifest.json");
    }

private:
    std::string command_;
    std::string hash_;
    std::uint64_t seed_;
    std::chrono::steady_clock::time_point t0_;
    std::chrono::steady_clock::time_point stage_start_;
    std::string current_;
    std::vector<std::pair<std::string, double>> stages_;
};

namespace detail {

inline std::filesystem::path prepare_out_dir(const ScenarioConfig& cfg,
                                             const std::string& out_override) {
    const std::filesystem::path dir =
        out_override.empty() ? cfg.out_dir : out_override;
    std::filesystem::create_directories(dir);
    return dir;
}

inline void write_ensemble_csv(const ParticleEnsemble& e,
                               const std::filesystem::path& path) {
    CsvWriter csv(path);
    csv.header({"particle", "knot", "value"});
    for (std::size_t n = 0; n < e.N; ++n)
        for (std::size_t i = 0; i < e.grid.n_knots(); ++i) {
            csv.field(n);
            csv.field(i);
            csv.field(e.x(n, i));
            csv.end_row();
        }
}

inline void write_law_csv(const LawFlow& law, const std::filesystem::path& path) {
    CsvWriter csv(path);
    std::vector<std::string> head{"knot", "t"};
    for (int d = 1; d <= 9; ++d) head.push_back("d" + std::to_string(d));
    csv.header(head);
    for (std::size_t i = 0; i < law.marginals.size(); ++i) {
        csv.field(i);
        csv.field(law.grid.knots[i]);
        const auto& atoms = law.marginals[i].atoms;
        for (int d = 1; d <= 9; ++d) {
            std::size_t idx = static_cast<std::size_t>(
                0.1 * static_cast<double>(d) * static_cast<double>(atoms.size()));
            if (idx >= atoms.size()) idx = atoms.size() - 1;
            csv.field(atoms[idx]);
        }
        csv.end_row();
    }
}

inline void write_picard_trace(const PicardDiagnostics& d,
                               const std::filesystem::path& path) {
    JsonWriter w;
    w.begin_object();
    w.key("iterations").value(d.iterations);
    w.key("converged").value(d.converged);
    w.key("tol").value(d.tol);
    w.key("distances").values(d.distances);
    w.end_object();
    w.write(path);
}

}  // namespace detail

/// simulate-noise: sampled increments CSV plus an isometry summary.
inline int cmd_simulate_noise(const ScenarioConfig& cfg,
                              const std::string& out_override = "") {
    const auto dir = detail::prepare_out_dir(cfg, out_override);
    RunManifest manifest(cfg, "simulate-noise");
    const TimeGrid grid = build_grid(cfg.T, cfg.n_steps);

    manifest.stage("sample");
    const IntensityPath ip = sample_intensity(cfg.intensity, grid, cfg.master_seed);
    const NoiseIncrements ni =
        sample_noise(ip, cfg.levy, RngStream(cfg.master_seed).child(1).next_u64());
    if (cfg.fmt_csv) {
        CsvWriter csv(dir / "increments.csv");
        std::vector<std::string> head{"step", "t", "dG"};
        for (std::size_t k = 0; k < cfg.levy.n_marks(); ++k)
            head.push_back("dJ_" + std::to_string(k + 1));
        csv.header(head);
        for (std::size_t i = 0; i < grid.n_steps; ++i) {
            csv.field(i);
            csv.field(grid.knots[i]);
            csv.field(ni.dG[i]);
            for (std::size_t k = 0; k < cfg.levy.n_marks(); ++k)
                csv.field(ni.dJ(i, k, cfg.levy));
            csv.end_row();
        }
    }

    // Monte Carlo isometry summary for the all-ones integrand
    manifest.stage("isometry");
    const std::size_t n_seeds = 2000;
    double sum_sq = 0.0, sum_norm = 0.0, sum_sq2 = 0.0, sum_cross = 0.0,
           sum_norm2 = 0.0;
    const MarkFunction ones = MarkFunction::constant(1.0, cfg.levy.n_marks());
    for (std::size_t s = 0; s < n_seeds; ++s) {
        const std::uint64_t seed =
            RngStream(cfg.master_seed).child(2, s).next_u64();
        const IntensityPath ips = sample_intensity(cfg.intensity, grid, seed);
        const NoiseIncrements nis = sample_noise(ips, cfg.levy, seed);
        const double I =
            integrate([](std::size_t, std::size_t) { return 1.0; }, nis);
        double norm = 0.0;
        for (std::size_t i = 0; i < grid.n_steps; ++i)
            norm += lambda_seminorm_sq(ones, ips.lamB[i], ips.lamH[i], cfg.levy) *
                    grid.dt;
        sum_sq += I * I;
        sum_sq2 += I * I * I * I;
        sum_norm += norm;
        sum_norm2 += norm * norm;
        sum_cross += I * I * norm;
    }
    const double n = static_cast<double>(n_seeds);
    const double mean_sq = sum_sq / n, mean_norm = sum_norm / n;
    const double ratio = mean_sq / mean_norm;
    // delta-method standard error of the ratio estimator
    const double var_sq = sum_sq2 / n - mean_sq * mean_sq;
    const double var_norm = sum_norm2 / n - mean_norm * mean_norm;
    const double cov = sum_cross / n - mean_sq * mean_norm;
    const double se =
        std::sqrt(std::max(0.0, var_sq / (mean_norm * mean_norm) +
                                    mean_sq * mean_sq * var_norm /
                                        std::pow(mean_norm, 4) -
                                    2.0 * mean_sq * cov / std::pow(mean_norm, 3)) /
                  n);
    if (cfg.fmt_json) {
        JsonWriter w;
        w.begin_object();
        w.key("integrand").value("all-ones");
        w.key("seeds").value(n_seeds);
        w.key("ratio").value(ratio);
        w.key("se").value(se);
        w.key("pass").value(std::abs(ratio - 1.0) <= 5.0 * se);
        w.end_object();
        w.write(dir / "isometry.json");
    }
    manifest.write(dir);
    return exit_code::ok;
}

/// solve-mfsde: law flow, ensemble and Picard trace for a registry preset.
inline int cmd_solve_mfsde(const ScenarioConfig& cfg,
                           const std::string& out_override = "") {
    const auto dir = detail::prepare_out_dir(cfg, out_override);
    RunManifest manifest(cfg, "solve-mfsde");
    const TimeGrid grid = build_grid(cfg.T, cfg.n_steps);
    const CoefficientSet coeffs = make_coefficients(cfg);

    manifest.stage("noise");
    auto noise = std::make_shared<EnsembleNoise>(
        sample_ensemble_noise(cfg.intensity, grid, cfg.levy, cfg.N,
                              cfg.master_seed, IntensitySharing::shared));
    manifest.stage("picard");
    const PicardResult r =
        picard_law_solve(coeffs, cfg.x0, noise, cfg.tol, cfg.max_iter);

    manifest.stage("emit");
    if (cfg.fmt_csv) {
        detail::write_law_csv(r.law, dir / "law.csv");
        detail::write_ensemble_csv(r.ensemble, dir / "ensemble.csv");
    }
    if (cfg.fmt_json)
        detail::write_picard_trace(r.diagnostics, dir / "picard_trace.json");
    manifest.write(dir);
    return r.diagnostics.converged ? exit_code::ok : exit_code::non_convergence;
}

/// solve-mfbsde: Y/Z paths and the beta-norm trace for a registry driver.
inline int cmd_solve_mfbsde(const ScenarioConfig& cfg,
                            const std::string& out_override = "") {
    const auto dir = detail::prepare_out_dir(cfg, out_override);
    RunManifest manifest(cfg, "solve-mfbsde");
    const TimeGrid grid = build_grid(cfg.T, cfg.n_steps);
    const CoefficientSet coeffs = make_coefficients(cfg);

    manifest.stage("forward");
    auto make_fwd = [&](std::uint64_t tag) {
        auto noise = std::make_shared<EnsembleNoise>(sample_ensemble_noise(
            cfg.intensity, grid, cfg.levy, cfg.N,
            tag == 0 ? cfg.master_seed
                     : RngStream(cfg.master_seed)
                           .child(stream_tag::copy_ensemble, tag)
                           .next_u64(),
            IntensitySharing::shared));
        return picard_law_solve(coeffs, cfg.x0, noise, cfg.tol, cfg.max_iter);
    };
    const PicardResult fwd = make_fwd(0);
    const PicardResult copy = make_fwd(1);

    Driver h;
    if (cfg.bsde_driver == "zero") {
        h.h = [](const DriverArgs&) { return 0.0; };
        h.lipschitz = 0.1;
    } else if (cfg.bsde_driver == "decay") {
        const double a = cfg.bsde_a;
        h.h = [a](const DriverArgs& args) { return -a * args.y; };
        h.lipschitz = std::abs(a);
    } else {  // copy-mean
        const double c = cfg.bsde_c;
        h.h = [c](const DriverArgs& args) { return c * args.y_p; };
        h.lipschitz = std::abs(c);
    }
    TerminalFn terminal;
    if (cfg.bsde_terminal == "constant") {
        terminal = constant_terminal(cfg.bsde_terminal_value);
    } else {
        terminal = [](const ParticleEnsemble& e) {
            std::vector<double> F(e.N, 0.0);
            for (std::size_t n = 0; n < e.N; ++n)
                for (std::size_t i = 0; i < e.grid.n_steps; ++i)
                    F[n] += e.noise->inc[n].dG[i];
            return F;
        };
    }
    RegressionBasis basis{cfg.basis_degree, cfg.ridge};
    BSDEPicardParams params;
    params.beta = cfg.beta;
    params.tol = 1e-8;
    params.max_iter = cfg.max_iter;

    manifest.stage("backward");
    const BSDESolution sol =
        picard_bsde(h, terminal, fwd.ensemble, copy.ensemble, basis, params);

    manifest.stage("emit");
    if (cfg.fmt_csv) {
        CsvWriter csv(dir / "bsde.csv");
        std::vector<std::string> head{"particle", "knot", "Y", "Z0"};
        for (std::size_t k = 0; k < cfg.levy.n_marks(); ++k)
            head.push_back("Z_" + std::to_string(k + 1));
        csv.header(head);
        for (std::size_t n = 0; n < sol.N; ++n)
            for (std::size_t i = 0; i < grid.n_knots(); ++i) {
                csv.field(n);
                csv.field(i);
                csv.field(sol.y(n, i));
                const bool has_z = i < grid.n_steps;
                for (std::size_t slot = 0; slot <= cfg.levy.n_marks(); ++slot)
                    csv.field(has_z ? sol.z(n, i)[slot] : 0.0);
                csv.end_row();
            }
    }
    if (cfg.fmt_json) {
        JsonWriter w;
        w.begin_object();
        w.key("beta").value(sol.beta);
        w.key("converged").value(sol.converged);
        w.key("terminal_residual").value(sol.terminal_residual);
        w.key("distances").values(sol.beta_trace);
        std::vector<double> ratios;
        for (std::size_t m = 1; m < sol.beta_trace.size(); ++m)
            if (sol.beta_trace[m - 1] > 0.0)
                ratios.push_back(sol.beta_trace[m] / sol.beta_trace[m - 1]);
        w.key("contraction_ratios").values(ratios);
        w.end_object();
        w.write(dir / "beta_trace.json");
    }
    manifest.write(dir);
    return sol.converged ? exit_code::ok : exit_code::non_convergence;
}

namespace detail {

inline void write_necessary_json(JsonWriter& w, const MaxPrincipleReport& r) {
    w.key("necessary").begin_object();
    w.key("variational_residual").value(r.variational_residual);
    w.key("stationarity_residual").value(r.stationarity_residual);
    w.key("tol").value(r.tol_necessary);
    w.key("pass").value(r.necessary_pass);
    w.end_object();
}

inline void write_sufficient_json(JsonWriter& w, const MaxPrincipleReport& r) {
    w.key("sufficient").begin_object();
    w.key("maximization_gap").value(r.maximization_gap);
    w.key("tol_maximization").value(r.tol_maximization);
    w.key("maximization_pass").value(r.maximization_pass);
    w.key("concavity_violations").value(r.concavity_violations);
    w.key("concavity_probes").value(r.concavity_probes);
    w.key("tol_concavity").value(r.tol_concavity);
    w.key("concavity_pass").value(r.concavity_pass);
    w.end_object();
}

inline void write_report_json(const VasicekReport& rep,
                              const std::filesystem::path& path) {
    JsonWriter w;
    w.begin_object();
    w.key("J").begin_object();
    w.key("u_star").value(rep.J_u_star);
    w.key("u_hat").value(rep.J_u_hat);
    w.key("zero").value(rep.J_zero);
    w.key("se").value(rep.se_J);
    w.end_object();
    w.key("u_hat_vs_star_l2").value(rep.u_hat_vs_star_l2);
    w.key("clamped_fraction").value(rep.clamped_fraction);
    w.key("forward_converged").value(rep.forward_diagnostics.converged);
    w.key("bsde_converged").value(rep.bsde_converged);
    write_necessary_json(w, rep.necessary);
    write_sufficient_json(w, rep.sufficient);
    w.end_object();
    w.write(path);
}

inline void write_series_csv(const VasicekReport& rep,
                             const std::filesystem::path& path) {
    CsvWriter csv(path);
    csv.header({"knot", "t", "mean_rate", "u_star", "u_hat_mean", "pF_mean"});
    for (std::size_t i = 0; i < rep.grid.n_knots(); ++i) {
        csv.field(i);
        csv.field(rep.grid.knots[i]);
        csv.field(rep.mean_rate[i]);
        csv.field(rep.u_star[i]);
        csv.field(rep.u_hat_mean[i]);
        csv.field(rep.pF_mean[i]);
        csv.end_row();
    }
}

}  // namespace detail

/// run-vasicek: the full worked-example pipeline.
inline int cmd_run_vasicek(const ScenarioConfig& cfg,
                           const std::string& out_override = "") {
    const auto dir = detail::prepare_out_dir(cfg, out_override);
    RunManifest manifest(cfg, "run-vasicek");
    manifest.stage("pipeline");
    const VasicekReport rep = run_example(make_vasicek(cfg), cfg.u_grid);
    manifest.stage("emit");
    if (cfg.fmt_json) detail::write_report_json(rep, dir / "report.json");
    if (cfg.fmt_csv) detail::write_series_csv(rep, dir / "series.csv");
    manifest.write(dir);
    if (!rep.forward_diagnostics.converged || !rep.bsde_converged)
        return exit_code::non_convergence;
    return exit_code::ok;
}

/// check-maxprinciple: adjoint-based checks at a configurable control source.
inline int cmd_check_maxprinciple(const ScenarioConfig& cfg,
                                  const std::string& out_override = "") {
    const auto dir = detail::prepare_out_dir(cfg, out_override);
    RunManifest manifest(cfg, "check-maxprinciple");
    const VasicekScenario vs = make_vasicek(cfg);
    Scenario s = build_mean_field_scenario(vs);

    manifest.stage("control");
    ControlPath u = ControlPath::constant(0.0, s.grid);
    if (cfg.control_source == "constant") {
        u = ControlPath::constant(s.control_set.clamp(cfg.control_value), s.grid);
    } else if (cfg.control_source == "riccati" ||
               cfg.control_source == "riccati-perturbed") {
        const RiccatiSolution ric = riccati_oracle(vs.theta, vs.r0, s.grid);
        u = ControlPath::deterministic(ric.u_star);
        if (cfg.control_source == "riccati-perturbed")
            for (double& v : u.values) v += cfg.control_perturbation;
        u.clamp(s.control_set.lo, s.control_set.hi);
    }

    manifest.stage("forward");
    auto noise_main = scenario_noise(s);
    auto noise_copy = scenario_noise(s, 1);
    const PicardResult fwd = solve_controlled_forward(s, u, noise_main);
    const PicardResult fwd_copy = solve_controlled_forward(s, u, noise_copy);

    manifest.stage("adjoint");
    const AdjointSpec spec =
        assemble_adjoint(s, u, fwd.ensemble, u, fwd_copy.ensemble);
    const AdjointSolution adj =
        solve_adjoint(spec, fwd.ensemble, fwd_copy.ensemble, s.basis,
                      s.intensity.deterministic());

    ControlPath u_check = u;
    if (cfg.control_source == "adjoint") {
        const std::size_t nk = s.grid.n_knots();
        u_check.per_particle = true;
        u_check.n_particles = fwd.ensemble.N;
        u_check.n_knots = nk;
        u_check.values.assign(fwd.ensemble.N * nk, 0.0);
        for (std::size_t n = 0; n < fwd.ensemble.N; ++n)
            for (std::size_t i = 0; i < nk; ++i)
                u_check.values[n * nk + i] = s.control_set.clamp(
                    -0.5 * vs.theta_at(s.grid.knots[i]) * adj.pF_at(n, i));
    }

    manifest.stage("checks");
    const MaxPrincipleReport nec =
        check_necessary(s, u_check, adj, fwd.ensemble, cfg.u_grid);
    SufficientCheckConfig scfg;
    scfg.u_grid = cfg.u_grid;
    const MaxPrincipleReport suf =
        check_sufficient(s, u_check, adj, fwd.ensemble, scfg);

    manifest.stage("emit");
    if (cfg.fmt_json) {
        JsonWriter w;
        w.begin_object();
        w.key("control_source").value(cfg.control_source);
        detail::write_necessary_json(w, nec);
        detail::write_sufficient_json(w, suf);
        w.end_object();
        w.write(dir / "report.json");
    }
    if (cfg.fmt_csv) {
        CsvWriter csv(dir / "duH.csv");
        csv.header({"knot", "t", "mean_duH"});
        for (std::size_t i = 0; i < nec.mean_du_h_per_knot.size(); ++i) {
            csv.field(i);
            csv.field(s.grid.knots[i]);
            csv.field(nec.mean_du_h_per_knot[i]);
            csv.end_row();
        }
    }
    manifest.write(dir);
    return fwd.diagnostics.converged ? exit_code::ok : exit_code::non_convergence;
}

/// chaos-study: tagged-agent W2 distance to the mean-field law across N.
inline int cmd_chaos_study(const ScenarioConfig& cfg,
                           const std::string& out_override = "",
                           MeanFieldAveraging averaging =
                               MeanFieldAveraging::one_over_n) {
    const auto dir = detail::prepare_out_dir(cfg, out_override);
    RunManifest manifest(cfg, "chaos-study");
    VasicekScenario vs = make_vasicek(cfg);
    const TimeGrid grid = build_grid(vs.T, vs.n_steps);
    const ControlPath zero = ControlPath::constant(0.0, grid);

    manifest.stage("reference");
    VasicekScenario ref = vs;
    ref.N = cfg.chaos_reference_n;
    ref.seed = RngStream(vs.seed).child(stream_tag::copy_ensemble, 999).next_u64();
    const Scenario s = build_mean_field_scenario(ref);
    const PicardResult mf = solve_controlled_forward(s, zero);
    const EmpiricalMeasure mf_T = mf.ensemble.cross_section(grid.n_steps);

    manifest.stage("sweep");
    std::vector<double> w2(cfg.chaos_n_list.size(), 0.0);
    for (std::size_t j = 0; j < cfg.chaos_n_list.size(); ++j) {
        for (std::size_t rep = 1; rep <= cfg.chaos_replications; ++rep) {
            const ParticleEnsemble e = n_agent_simulate(
                vs, cfg.chaos_n_list[j], zero, averaging,
                j * cfg.chaos_replications + rep);
            w2[j] += wasserstein2(e.cross_section(grid.n_steps), mf_T);
        }
        w2[j] /= static_cast<double>(cfg.chaos_replications);
    }
    double slope = 0.0;
    if (cfg.chaos_n_list.size() >= 2) {
        std::vector<double> lx, ly;
        for (std::size_t j = 0; j < w2.size(); ++j) {
            lx.push_back(std::log(static_cast<double>(cfg.chaos_n_list[j])));
            ly.push_back(std::log(std::max(w2[j], 1e-300)));
        }
        const double n = static_cast<double>(lx.size());
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (std::size_t j = 0; j < lx.size(); ++j) {
            sx += lx[j];
            sy += ly[j];
            sxx += lx[j] * lx[j];
            sxy += lx[j] * ly[j];
        }
        slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    }

    manifest.stage("emit");
    if (cfg.fmt_csv) {
        CsvWriter csv(dir / "chaos.csv");
        csv.header({"N", "w2"});
        for (std::size_t j = 0; j < w2.size(); ++j) {
            csv.field(static_cast<std::uint64_t>(cfg.chaos_n_list[j]));
            csv.field(w2[j]);
            csv.end_row();
        }
    }
    if (cfg.fmt_json) {
        JsonWriter w;
        w.begin_object();
        w.key("slope").value(slope);
        w.key("replications").value(cfg.chaos_replications);
        w.key("reference_N").value(cfg.chaos_reference_n);
        w.key("w2").values(w2);
        w.end_object();
        w.write(dir / "chaos.json");
    }
    manifest.write(dir);
    return exit_code::ok;
}

}  // namespace tcmf
