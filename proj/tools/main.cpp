#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "tcmf/tcmf.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw tcmf::config_error("cannot read config file " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

struct GlobalOptions {
    std::string config_path;
    std::string out_dir;
    long long seed = -1;
    unsigned threads = 0;
    bool paper_averaging = false;
    std::vector<std::string> formats;
};

tcmf::ScenarioConfig load(const GlobalOptions& g) {
    tcmf::ScenarioConfig cfg = tcmf::parse_config(read_file(g.config_path));
    if (g.seed >= 0) cfg.master_seed = static_cast<std::uint64_t>(g.seed);
    if (!g.formats.empty()) {
        cfg.fmt_csv = false;
        cfg.fmt_json = false;
        for (const auto& f : g.formats) {
            if (f == "csv")
                cfg.fmt_csv = true;
            else if (f == "json")
                cfg.fmt_json = true;
            else
                throw tcmf::config_error("unknown --format value '" + f + "'");
        }
    }
    if (g.threads > 0) tcmf::set_max_threads(g.threads);
    return cfg;
}

void add_common(CLI::App* cmd, GlobalOptions& g) {
    cmd->add_option("--config", g.config_path, "scenario JSON file")->required();
    cmd->add_option("--seed", g.seed, "override seeds.master");
    cmd->add_option("--threads", g.threads, "cap worker threads");
    cmd->add_option("--out", g.out_dir, "override output directory");
    cmd->add_option("--format", g.formats, "output formats (csv, json)");
    cmd->add_flag("--paper-averaging", g.paper_averaging,
                  "use the literal 1/sqrt(N) cross-sectional averaging");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"time-changed mean-field control engine"};
    app.require_subcommand(1);
    app.set_version_flag("--version", tcmf::version_string());

    GlobalOptions g;
    CLI::App* c_noise = app.add_subcommand("simulate-noise",
                                           "sample noise increments + isometry summary");
    CLI::App* c_mfsde = app.add_subcommand("solve-mfsde",
                                           "forward mean-field SDE solve");
    CLI::App* c_mfbsde = app.add_subcommand("solve-mfbsde",
                                            "backward mean-field BSDE solve");
    CLI::App* c_check = app.add_subcommand("check-maxprinciple",
                                           "maximum-principle checks");
    CLI::App* c_vasicek = app.add_subcommand("run-vasicek",
                                             "full worked-example pipeline");
    CLI::App* c_chaos = app.add_subcommand("chaos-study",
                                           "particle-count convergence table");
    for (CLI::App* cmd :
         {c_noise, c_mfsde, c_mfbsde, c_check, c_vasicek, c_chaos})
        add_common(cmd, g);

    CLI11_PARSE(app, argc, argv);

    try {
        const tcmf::ScenarioConfig cfg = load(g);
        if (c_noise->parsed()) return tcmf::cmd_simulate_noise(cfg, g.out_dir);
        if (c_mfsde->parsed()) return tcmf::cmd_solve_mfsde(cfg, g.out_dir);
        if (c_mfbsde->parsed()) return tcmf::cmd_solve_mfbsde(cfg, g.out_dir);
        if (c_check->parsed()) return tcmf::cmd_check_maxprinciple(cfg, g.out_dir);
        if (c_vasicek->parsed()) return tcmf::cmd_run_vasicek(cfg, g.out_dir);
        if (c_chaos->parsed())
            return tcmf::cmd_chaos_study(
                cfg, g.out_dir,
                g.paper_averaging ? tcmf::MeanFieldAveraging::one_over_sqrt_n
                                  : tcmf::MeanFieldAveraging::one_over_n);
    } catch (const tcmf::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return tcmf::exit_code::config;
    } catch (const tcmf::explosion_error& e) {
        std::cerr << "explosion: " << e.what() << "\n";
        return tcmf::exit_code::explosion;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
