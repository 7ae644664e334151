#include "oseki.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <new>

#include "oseki/experiment.hpp"

struct oseki_config {
    oseki::experiment::ExperimentConfig value;
};

namespace {

thread_local std::string last_error;

template <class F>
oseki_status guarded(F &&body) {
    try {
        body();
        last_error.clear();
        return OSEKI_OK;
    } catch (const oseki::ConfigError &e) {
        last_error = e.what();
        return OSEKI_ERR_CONFIG;
    } catch (const oseki::NumericalError &e) {
        last_error = e.what();
        return OSEKI_ERR_NUMERICAL;
    } catch (const oseki::IoError &e) {
        last_error = e.what();
        return OSEKI_ERR_IO;
    } catch (const std::filesystem::filesystem_error &e) {
        last_error = e.what();
        return OSEKI_ERR_IO;
    } catch (const std::invalid_argument &e) {
        last_error = e.what();
        return OSEKI_ERR_ARGUMENT;
    } catch (const std::bad_alloc &) {
        last_error = "out of memory";
        return OSEKI_ERR_INTERNAL;
    } catch (const std::exception &e) {
        last_error = e.what();
        return OSEKI_ERR_INTERNAL;
    } catch (...) {
        last_error = "unknown error";
        return OSEKI_ERR_INTERNAL;
    }
}

void need(const void *p, const char *what) {
    if (!p) throw oseki::InvalidArgument(std::string(what) + " must not be null");
}

char *copy_string(const std::string &s) {
    char *out = new char[s.size() + 1];
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

} // namespace

extern "C" {

oseki_status oseki_config_default(const char *experiment, const char *method, oseki_config **out) {
    return guarded([&] {
        need(experiment, "experiment");
        need(method, "method");
        need(out, "out");
        *out = new oseki_config{oseki::experiment::ExperimentConfig::defaults(experiment, method)};
    });
}

oseki_status oseki_config_load(const char *path, oseki_config **out) {
    return guarded([&] {
        need(path, "path");
        need(out, "out");
        *out = new oseki_config{oseki::experiment::load_config(path)};
    });
}

oseki_status oseki_config_parse(const char *text, oseki_config **out) {
    return guarded([&] {
        need(text, "text");
        need(out, "out");
        *out = new oseki_config{oseki::experiment::parse_config(text)};
    });
}

oseki_status oseki_config_set(oseki_config *config, const char *key, const char *value) {
    return guarded([&] {
        need(config, "config");
        need(key, "key");
        need(value, "value");
        oseki::experiment::set_value(config->value, key, value);
    });
}

oseki_status oseki_config_get(const oseki_config *config, const char *key, char **value) {
    return guarded([&] {
        need(config, "config");
        need(key, "key");
        need(value, "value");
        *value = copy_string(oseki::experiment::get_value(config->value, key));
    });
}

oseki_status oseki_config_serialize(const oseki_config *config, char **text) {
    return guarded([&] {
        need(config, "config");
        need(text, "text");
        *text = copy_string(oseki::experiment::serialize_config(config->value));
    });
}

oseki_status oseki_config_save(const oseki_config *config, const char *path) {
    return guarded([&] {
        need(config, "config");
        need(path, "path");
        std::ofstream out(path);
        if (!out) throw oseki::IoError(std::string("cannot write ") + path);
        out << oseki::experiment::serialize_config(config->value);
        if (!out) throw oseki::IoError(std::string("cannot write ") + path);
    });
}

oseki_status oseki_config_validate(const oseki_config *config) {
    return guarded([&] {
        need(config, "config");
        config->value.validate();
    });
}

void oseki_config_free(oseki_config *config) { delete config; }

oseki_status oseki_run(const oseki_config *config, const char *out_dir) {
    return guarded([&] {
        need(config, "config");
        need(out_dir, "out_dir");
        oseki::experiment::run_experiment(config->value, out_dir);
    });
}

oseki_status oseki_compare(const char *const *dirs, size_t count, char **table) {
    return guarded([&] {
        need(table, "table");
        if (count) need(dirs, "dirs");
        std::vector<std::string> list;
        for (size_t i = 0; i < count; ++i) {
            need(dirs[i], "dirs entry");
            list.emplace_back(dirs[i]);
        }
        *table = copy_string(oseki::experiment::compare_runs(list));
    });
}

oseki_status oseki_mesh_export(const char *mesh_path, const char *points_path, size_t n_y, uint64_t seed) {
    return guarded([&] {
        need(mesh_path, "mesh_path");
        need(points_path, "points_path");
        if (n_y == 0) throw oseki::InvalidArgument("n_y must be positive");
        oseki::experiment::export_mesh(mesh_path, points_path, static_cast<oseki::Index>(n_y), seed);
    });
}

void oseki_string_free(char *s) { delete[] s; }

const char *oseki_last_error(void) { return last_error.c_str(); }

const char *oseki_version(void) { return "1.0.0"; }

} // extern "C"
