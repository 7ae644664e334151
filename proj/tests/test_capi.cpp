#include "doctest.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>

#include "oseki.h"

namespace fs = std::filesystem;

namespace {

std::string take(char *s) {
    std::string out = s ? s : "";
    oseki_string_free(s);
    return out;
}

fs::path scratch(const std::string &name) {
    const fs::path p = fs::temp_directory_path() / ("oseki_test_capi_" + name);
    fs::remove_all(p);
    return p;
}

} // namespace

TEST_CASE("config handle life cycle") {
    oseki_config *cfg = nullptr;
    REQUIRE(oseki_config_default("oned_linear", "osEKI_2", &cfg) == OSEKI_OK);
    CHECK(std::string(oseki_last_error()).empty());

    char *value = nullptr;
    REQUIRE(oseki_config_get(cfg, "prior.beta", &value) == OSEKI_OK);
    CHECK(take(value) == "5");
    REQUIRE(oseki_config_set(cfg, "solver.particles", "42") == OSEKI_OK);
    REQUIRE(oseki_config_get(cfg, "solver.particles", &value) == OSEKI_OK);
    CHECK(take(value) == "42");

    char *text = nullptr;
    REQUIRE(oseki_config_serialize(cfg, &text) == OSEKI_OK);
    const std::string serialized = take(text);
    oseki_config *copy = nullptr;
    REQUIRE(oseki_config_parse(serialized.c_str(), &copy) == OSEKI_OK);
    REQUIRE(oseki_config_serialize(copy, &text) == OSEKI_OK);
    CHECK(take(text) == serialized);

    const fs::path file = scratch("cfg.ini");
    REQUIRE(oseki_config_save(cfg, file.c_str()) == OSEKI_OK);
    oseki_config *loaded = nullptr;
    REQUIRE(oseki_config_load(file.c_str(), &loaded) == OSEKI_OK);
    REQUIRE(oseki_config_get(loaded, "solver.particles", &value) == OSEKI_OK);
    CHECK(take(value) == "42");
    CHECK(oseki_config_validate(loaded) == OSEKI_OK);

    oseki_config_free(cfg);
    oseki_config_free(copy);
    oseki_config_free(loaded);
    oseki_config_free(nullptr);
    fs::remove(file);
}

TEST_CASE("status codes") {
    oseki_config *cfg = nullptr;
    CHECK(oseki_config_default("oned_linear", "nope", &cfg) == OSEKI_ERR_CONFIG);
    CHECK(std::string(oseki_last_error()).find("nope") != std::string::npos);
    CHECK(cfg == nullptr);
    CHECK(oseki_config_default(nullptr, "osEKI_2", &cfg) == OSEKI_ERR_ARGUMENT);
    CHECK(oseki_config_load("/nonexistent/dir/x.ini", &cfg) == OSEKI_ERR_IO);
    CHECK(oseki_config_parse("[solver]\nparticles=many\n", &cfg) == OSEKI_ERR_CONFIG);

    REQUIRE(oseki_config_default("oned_nonlinear", "osEKI_2", &cfg) == OSEKI_OK);
    CHECK(oseki_config_set(cfg, "solver.bogus", "1") == OSEKI_ERR_CONFIG);
    REQUIRE(oseki_config_set(cfg, "experiment.method", "redTik") == OSEKI_OK);
    CHECK(oseki_config_validate(cfg) == OSEKI_ERR_CONFIG);
    const fs::path dir = scratch("bad_combo");
    CHECK(oseki_run(cfg, dir.c_str()) == OSEKI_ERR_CONFIG);
    CHECK_FALSE(fs::exists(dir));

    // a truth with exp(u) overflow is a numerical failure
    REQUIRE(oseki_config_set(cfg, "experiment.method", "osEKI_2") == OSEKI_OK);
    REQUIRE(oseki_config_set(cfg, "prior.beta", "1e9") == OSEKI_OK);
    REQUIRE(oseki_config_set(cfg, "model.n_u", "8") == OSEKI_OK);
    CHECK(oseki_run(cfg, dir.c_str()) == OSEKI_ERR_NUMERICAL);
    CHECK(std::string(oseki_last_error()).find("overflow") != std::string::npos);
    oseki_config_free(cfg);
    fs::remove_all(dir);

    char *table = nullptr;
    CHECK(oseki_compare(nullptr, 0, &table) == OSEKI_ERR_ARGUMENT);
    CHECK(oseki_mesh_export("/nonexistent/dir/m.txt", "/nonexistent/dir/p.txt", 50, 1) == OSEKI_ERR_IO);
}

TEST_CASE("last error is per thread") {
    oseki_config *cfg = nullptr;
    CHECK(oseki_config_default("oned_linear", "nope", &cfg) == OSEKI_ERR_CONFIG);
    std::string other;
    std::thread t([&] { other = oseki_last_error(); });
    t.join();
    CHECK(other.empty());
    CHECK_FALSE(std::string(oseki_last_error()).empty());
}

TEST_CASE("run and compare through the C interface") {
    oseki_config *cfg = nullptr;
    REQUIRE(oseki_config_default("oned_linear", "redTik", &cfg) == OSEKI_OK);
    const fs::path dir = scratch("run");
    REQUIRE(oseki_run(cfg, dir.c_str()) == OSEKI_OK);
    oseki_config_free(cfg);
    CHECK(fs::exists(dir / "summary.tsv"));

    const std::string d = dir.string();
    const char *dirs[] = {d.c_str()};
    char *table = nullptr;
    REQUIRE(oseki_compare(dirs, 1, &table) == OSEKI_OK);
    const std::string t = take(table);
    CHECK(t.rfind("run\tmethod\t", 0) == 0);
    CHECK(t.find("redTik") != std::string::npos);
    fs::remove_all(dir);

    const fs::path mesh = scratch("mesh");
    fs::create_directories(mesh);
    CHECK(oseki_mesh_export((mesh / "m.txt").c_str(), (mesh / "p.txt").c_str(), 50, 20210131) == OSEKI_OK);
    CHECK(fs::file_size(mesh / "p.txt") == fs::file_size("data/obs2d_v1.txt"));
    fs::remove_all(mesh);
    CHECK(std::strlen(oseki_version()) > 0);
}
