#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

int run(const std::string &args) {
    const std::string cmd = std::string(OSEKI_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string &name) {
    const fs::path p = fs::temp_directory_path() / ("oseki_test_cli_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path &p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("run with flag overrides") {
    const fs::path out = scratch("run");
    CHECK(run("run configs/oned_linear_osEKI_2.cfg --seed 7 --workers 2 --t-end 50 --set model.n_u=15 "
              "--set solver.particles=20 --out " + out.string()) == 0);
    const std::string cfg = slurp(out / "config.ini");
    CHECK(cfg.find("solver=7") != std::string::npos);
    CHECK(cfg.find("t_end=50") != std::string::npos);
    CHECK(cfg.find("workers=2") != std::string::npos);
    CHECK(fs::exists(out / "trace.tsv"));
    CHECK(run("compare " + out.string()) == 0);
    fs::remove_all(out);
}

TEST_CASE("exit codes") {
    const fs::path out = scratch("codes");
    CHECK(run("run configs/does_not_exist.cfg --out " + out.string()) == 1);
    CHECK(run("run configs/oned_linear_osEKI_2.cfg --set solver.nothing=1 --out " + out.string()) == 2);
    CHECK(run("run configs/oned_nonlinear_osEKI_2.cfg --set experiment.method=redTik --out " + out.string()) == 2);
    CHECK(run("run configs/oned_nonlinear_osEKI_2.cfg --set prior.beta=1e9 --set model.n_u=8 --out " +
              out.string()) == 3);
    CHECK(run("frobnicate") == 2);
    CHECK(run("") == 2);
    CHECK(run("compare") == 2);
    fs::remove_all(out);
}

TEST_CASE("mesh export") {
    const fs::path out = scratch("mesh");
    CHECK(run("mesh export --out " + out.string()) == 0);
    CHECK(slurp(out / "mesh2d_v1.txt") == slurp("data/mesh2d_v1.txt"));
    CHECK(slurp(out / "obs2d_v1.txt") == slurp("data/obs2d_v1.txt"));
    fs::remove_all(out);
}
