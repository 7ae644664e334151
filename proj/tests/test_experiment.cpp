#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "oseki/experiment.hpp"

using namespace oseki;
using namespace oseki::experiment;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string &name) {
    const fs::path p = fs::temp_directory_path() / ("oseki_test_experiment_" + name);
    fs::remove_all(p);
    return p;
}

ExperimentConfig small_linear(const std::string &method) {
    ExperimentConfig c = ExperimentConfig::defaults("oned_linear", method);
    c.n_u = 15;
    c.particles = 20;
    c.t_end = 1e3;
    c.stages = 3;
    return c;
}

} // namespace

TEST_CASE("experiment defaults") {
    const ExperimentConfig a = ExperimentConfig::defaults("oned_linear", "osEKI_2");
    CHECK(a.beta == 5.0);
    CHECK(a.nu == 1.5);
    CHECK(a.gamma_obs == 0.1);
    CHECK(a.gamma_model == 100.0);
    CHECK(a.alpha1 == 0.002);
    CHECK(a.alpha2 == 0.0);
    CHECK(a.particles == 150);
    CHECK(a.n_u == 64);
    CHECK(a.hidden_layers == std::vector<int>{10, 10});
    CHECK(a.schedule == "ode_inv");
    CHECK(a.t_end == 1e10);
    CHECK(a.state_variance == 5.0);
    CHECK(a.network_variance == 1.0);
    CHECK(ExperimentConfig::defaults("oned_linear", "osEKI_1").schedule == "cubic_k3");
    CHECK(ExperimentConfig::defaults("oned_linear", "osEKI_1").stages == 50);

    const ExperimentConfig b = ExperimentConfig::defaults("oned_nonlinear", "nnosEKI_2");
    CHECK(b.model == "nonlinear_diffusion_1d");
    CHECK(b.beta == 1.0);
    CHECK(b.nu == 2.0);
    CHECK(b.gamma_obs == 1e-4);
    CHECK(b.gamma_model == 10.0);
    CHECK(b.alpha1 == 2.0);
    CHECK(b.alpha2 == 0.0);
    CHECK(b.schedule == "ode_const");

    const ExperimentConfig c = ExperimentConfig::defaults("twod_poisson", "nnosEKI_2");
    CHECK(c.model == "poisson_2d");
    CHECK(c.beta == 100.0);
    CHECK(c.nu == 2.0);
    CHECK(c.tau == 1.0);
    CHECK(c.gamma_obs == 0.01);
    CHECK(c.gamma_model == 0.1);
    CHECK(c.alpha1 == 0.002);
    CHECK(c.particles == 300);
    CHECK(c.n_y == 50);
    CHECK(c.schedule == "ode_inv_sq");

    CHECK_THROWS_AS(ExperimentConfig::defaults("threed", "osEKI_2"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::defaults("oned_linear", "osEKI_3"), ConfigError);
}

TEST_CASE("config round trip is field exact") {
    for (const char *e : {"oned_linear", "oned_nonlinear", "twod_poisson", "custom"}) {
        for (const char *m : {"redTik", "osEKI_1", "osEKI_2", "osQN_1", "nnosEKI_2", "nnosQN_1"}) {
            const ExperimentConfig c = ExperimentConfig::defaults(e, m);
            CHECK(parse_config(serialize_config(c)) == c);
        }
    }
    ExperimentConfig odd = ExperimentConfig::defaults("custom", "osEKI_2");
    odd.alpha1 = 0.1 + 0.2;
    odd.beta = 1e-300;
    odd.t_end = 123456789.123456789;
    odd.gamma_obs = 5e-324;
    odd.hidden_layers = {7, 3, 5};
    odd.warm_start = false;
    odd.truth_seed = 18446744073709551615ull;
    odd.mesh = "some/where mesh.txt";
    const ExperimentConfig back = parse_config(serialize_config(odd));
    CHECK(back == odd);
    CHECK(serialize_config(back) == serialize_config(odd));
}

TEST_CASE("config parsing errors") {
    CHECK_THROWS_AS(parse_config("[solver]\nparticels=10\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[solver]\nparticles=ten\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[solver]\nt_end=1e10x\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[seeds]\ntruth=-1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[solver\nparticles=10\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[experiment]\nid=oned_nonlinear\nmethod=redTik\n").validate(), ConfigError);
    CHECK_THROWS_AS(parse_config("[experiment]\nmethod=osEKI_1\n[solver]\nschedule=ode_inv\n").validate(), ConfigError);
    CHECK_THROWS_AS(parse_config("[experiment]\nmethod=osEKI_2\n[solver]\nschedule=ode_inv\nlambda0=0\n").validate(),
                    ConfigError);
    CHECK_THROWS_AS(parse_config("[experiment]\nid=oned_linear\n[model]\nkind=poisson_2d\n").validate(), ConfigError);
    CHECK_THROWS_AS(parse_config("[solver]\nflow=fast\n").validate(), ConfigError);

    const ExperimentConfig partial = parse_config("[experiment]\nid=twod_poisson\nmethod=nnosEKI_2\n[solver]\nparticles=40\n");
    ExperimentConfig expect = ExperimentConfig::defaults("twod_poisson", "nnosEKI_2");
    expect.particles = 40;
    CHECK(partial == expect);

    ExperimentConfig c;
    set_value(c, "solver.t_end", "2.5e3");
    CHECK(c.t_end == 2500.0);
    CHECK(get_value(c, "solver.t_end") == "2500");
    CHECK_THROWS_AS(set_value(c, "solver.nothing", "1"), ConfigError);
}

TEST_CASE("shipped configs are the defaults") {
    for (const auto &entry : fs::directory_iterator("configs")) {
        const ExperimentConfig c = load_config(entry.path().string());
        CHECK_NOTHROW(c.validate());
        CHECK(c == ExperimentConfig::defaults(c.experiment, c.method));
        CHECK(entry.path().stem().string() == c.experiment + "_" + c.method);
    }
}

TEST_CASE("redTik run writes a closed-form estimate") {
    const fs::path dir = scratch("redtik");
    const RunResult r = run_experiment(ExperimentConfig::defaults("oned_linear", "redTik"), dir.string());
    CHECK(r.trace.empty());
    CHECK(r.reference_distance == 0.0);
    CHECK((r.u - r.reference_u).norm() == 0.0);
    for (const char *f : {"config.ini", "seeds.txt", "truth.tsv", "data.tsv", "estimate.tsv", "reference.tsv",
                          "trace.tsv", "report.tsv", "summary.tsv", "meta.txt"}) {
        CHECK(fs::exists(dir / f));
    }
    CHECK(slurp(dir / "trace.tsv") == "lambda\ttime\tdata_misfit\tmodel_residual\tmodel_weighted\tloss\n");
    CHECK(r.data.size() == 7);
    CHECK(load_config((dir / "config.ini").string()) == r.config);
    fs::remove_all(dir);
}

TEST_CASE("invalid combination fails before any output") {
    const fs::path dir = scratch("invalid");
    ExperimentConfig c = ExperimentConfig::defaults("oned_nonlinear", "osEKI_2");
    c.method = "redTik";
    CHECK_THROWS_AS(run_experiment(c, dir.string()), ConfigError);
    CHECK_FALSE(fs::exists(dir));
}

TEST_CASE("identical configs give identical artifacts") {
    for (const char *method : {"osEKI_2", "osEKI_1", "osQN_1", "nnosEKI_2"}) {
        ExperimentConfig c = small_linear(method);
        c.bfgs_max_iterations = 200;
        const fs::path a = scratch(std::string("det_a_") + method), b = scratch(std::string("det_b_") + method);
        run_experiment(c, a.string());
        c.workers = 3;
        run_experiment(c, b.string());
        for (const auto &entry : fs::directory_iterator(a)) {
            const std::string name = entry.path().filename().string();
            if (name == "meta.txt" || name == "config.ini") continue;
            CHECK_MESSAGE(slurp(entry.path()) == slurp(b / name), method << " " << name);
        }
        fs::remove_all(a);
        fs::remove_all(b);
    }
}

TEST_CASE("compare runs") {
    const fs::path a = scratch("cmp_a"), b = scratch("cmp_b"), n = scratch("cmp_n");
    run_experiment(small_linear("osEKI_2"), a.string());
    run_experiment(small_linear("redTik"), b.string());
    const std::string one = compare_runs({a.string()});
    CHECK(std::count(one.begin(), one.end(), '\n') == 2);
    const std::string two = compare_runs({a.string(), b.string() + "/"});
    CHECK(std::count(two.begin(), two.end(), '\n') == 3);
    CHECK(two.find("redTik") != std::string::npos);
    CHECK(two.find("cmp_b") != std::string::npos);

    ExperimentConfig nl = ExperimentConfig::defaults("oned_nonlinear", "osEKI_2");
    nl.n_u = 15;
    nl.particles = 20;
    nl.t_end = 10.0;
    nl.bfgs_max_iterations = 50;
    run_experiment(nl, n.string());
    CHECK_THROWS_AS(compare_runs({a.string(), n.string()}), InvalidArgument);
    CHECK_THROWS_AS(compare_runs({}), InvalidArgument);
    CHECK_THROWS_AS(compare_runs({(a / "missing").string()}), IoError);
    for (const auto &d : {a, b, n}) fs::remove_all(d);
}

TEST_CASE("mesh export reproduces the shipped files") {
    const fs::path dir = scratch("mesh");
    fs::create_directories(dir);
    export_mesh((dir / "mesh.txt").string(), (dir / "obs.txt").string());
    CHECK(slurp(dir / "mesh.txt") == slurp("data/mesh2d_v1.txt"));
    CHECK(slurp(dir / "obs.txt") == slurp("data/obs2d_v1.txt"));
    fs::remove_all(dir);
}

TEST_CASE("2D run from shipped files matches the built-in setup") {
    ExperimentConfig c = ExperimentConfig::defaults("twod_poisson", "redTik");
    const fs::path a = scratch("twod_a"), b = scratch("twod_b");
    const RunResult ra = run_experiment(c, a.string());
    c.mesh = "data/mesh2d_v1.txt";
    c.obs_points = "data/obs2d_v1.txt";
    const RunResult rb = run_experiment(c, b.string());
    CHECK(ra.u.size() == 95);
    CHECK(ra.data.size() == 50);
    CHECK((ra.u - rb.u).norm() == 0.0);
    c.mesh = (a / "nope.txt").string();
    CHECK_THROWS_AS(run_experiment(c, b.string()), IoError);
    fs::remove_all(a);
    fs::remove_all(b);
}
