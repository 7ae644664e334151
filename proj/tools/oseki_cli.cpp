#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "oseki.h"

namespace {

int exit_code(oseki_status s) {
    switch (s) {
    case OSEKI_OK:
        return 0;
    case OSEKI_ERR_CONFIG:
    case OSEKI_ERR_ARGUMENT:
        return 2;
    case OSEKI_ERR_NUMERICAL:
        return 3;
    default:
        return 1;
    }
}

int fail(oseki_status s) {
    std::fprintf(stderr, "oseki: %s\n", oseki_last_error());
    return exit_code(s);
}

struct RunArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::optional<double> t_end;
    std::string out;
    std::vector<std::string> sets;
};

int run(const RunArgs &a) {
    oseki_config *cfg = nullptr;
    oseki_status s = oseki_config_load(a.config.c_str(), &cfg);
    if (s != OSEKI_OK) return fail(s);
    std::vector<std::pair<std::string, std::string>> overrides;
    for (const std::string &kv : a.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            std::fprintf(stderr, "oseki: --set expects section.key=value, got '%s'\n", kv.c_str());
            oseki_config_free(cfg);
            return 2;
        }
        overrides.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (a.seed) overrides.emplace_back("seeds.solver", std::to_string(*a.seed));
    if (a.workers) overrides.emplace_back("solver.workers", std::to_string(*a.workers));
    if (a.t_end) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", *a.t_end);
        overrides.emplace_back("solver.t_end", buf);
    }
    for (const auto &[k, v] : overrides) {
        s = oseki_config_set(cfg, k.c_str(), v.c_str());
        if (s != OSEKI_OK) {
            oseki_config_free(cfg);
            return fail(s);
        }
    }

    std::string out = a.out;
    if (out.empty()) {
        char *id = nullptr, *method = nullptr;
        oseki_config_get(cfg, "experiment.id", &id);
        oseki_config_get(cfg, "experiment.method", &method);
        out = std::string("runs/") + id + "_" + method;
        oseki_string_free(id);
        oseki_string_free(method);
    }
    s = oseki_run(cfg, out.c_str());
    oseki_config_free(cfg);
    if (s != OSEKI_OK) return fail(s);
    std::printf("%s\n", out.c_str());
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Ensemble Kalman inversion for one-shot PDE inverse problems"};
    app.require_subcommand(1);
    app.set_version_flag("--version", oseki_version());

    RunArgs ra;
    CLI::App *run_cmd = app.add_subcommand("run", "Run an experiment from a config file");
    run_cmd->add_option("config", ra.config, "Experiment config (INI)")->required();
    run_cmd->add_option("--seed", ra.seed, "Solver seed (seeds.solver)");
    run_cmd->add_option("--workers", ra.workers, "Threads for particle evaluations")->check(CLI::PositiveNumber);
    run_cmd->add_option("--t-end", ra.t_end, "Final pseudo-time of the particle flow");
    run_cmd->add_option("--out", ra.out, "Output directory (default runs/<id>_<method>)");
    run_cmd->add_option("--set", ra.sets, "Override a config key, section.key=value")->take_all();

    std::vector<std::string> dirs;
    std::string compare_out;
    CLI::App *cmp = app.add_subcommand("compare", "Tabulate finished runs of one experiment");
    cmp->add_option("dirs", dirs, "Run directories")->required();
    cmp->add_option("--out", compare_out, "Write the table to this file instead of stdout");

    std::string mesh_out = "data";
    std::size_t n_y = 50;
    std::uint64_t mesh_seed = 20210131;
    CLI::App *mesh = app.add_subcommand("mesh", "Mesh utilities");
    mesh->require_subcommand(1);
    CLI::App *mexp = mesh->add_subcommand("export", "Write the built-in 2D mesh and observation points");
    mexp->add_option("--out", mesh_out, "Output directory");
    mexp->add_option("--n-y", n_y, "Number of observation points")->check(CLI::PositiveNumber);
    mexp->add_option("--seed", mesh_seed, "Seed for the observation points");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (*run_cmd) return run(ra);

    if (*cmp) {
        std::vector<const char *> ptrs;
        for (const auto &d : dirs) ptrs.push_back(d.c_str());
        char *table = nullptr;
        const oseki_status s = oseki_compare(ptrs.data(), ptrs.size(), &table);
        if (s != OSEKI_OK) return fail(s);
        int code = 0;
        if (compare_out.empty()) {
            std::fputs(table, stdout);
        } else if (FILE *f = std::fopen(compare_out.c_str(), "w")) {
            std::fputs(table, f);
            std::fclose(f);
        } else {
            std::fprintf(stderr, "oseki: cannot write %s\n", compare_out.c_str());
            code = 1;
        }
        oseki_string_free(table);
        return code;
    }

    std::error_code ec;
    std::filesystem::create_directories(mesh_out, ec);
    const std::string mesh_path = (std::filesystem::path(mesh_out) / "mesh2d_v1.txt").string();
    const std::string points_path = (std::filesystem::path(mesh_out) / "obs2d_v1.txt").string();
    const oseki_status s = oseki_mesh_export(mesh_path.c_str(), points_path.c_str(), n_y, mesh_seed);
    if (s != OSEKI_OK) return fail(s);
    std::printf("%s\n%s\n", mesh_path.c_str(), points_path.c_str());
    return 0;
}
