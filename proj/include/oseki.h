/* C interface to the oseki library. All functions are safe to call from
 * several threads on distinct handles; the error text is per thread. */
#ifndef OSEKI_H
#define OSEKI_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define OSEKI_API __declspec(dllexport)
#else
#define OSEKI_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum oseki_status {
    OSEKI_OK = 0,
    OSEKI_ERR_ARGUMENT = 1,
    OSEKI_ERR_CONFIG = 2,
    OSEKI_ERR_NUMERICAL = 3,
    OSEKI_ERR_IO = 4,
    OSEKI_ERR_INTERNAL = 5
} oseki_status;

typedef struct oseki_config oseki_config;

/* Defaults for an experiment id and method. */
OSEKI_API oseki_status oseki_config_default(const char *experiment, const char *method, oseki_config **out);
OSEKI_API oseki_status oseki_config_load(const char *path, oseki_config **out);
OSEKI_API oseki_status oseki_config_parse(const char *text, oseki_config **out);
/* key is "section.key", e.g. "solver.t_end". */
OSEKI_API oseki_status oseki_config_set(oseki_config *config, const char *key, const char *value);
/* *value is allocated; release with oseki_string_free. */
OSEKI_API oseki_status oseki_config_get(const oseki_config *config, const char *key, char **value);
OSEKI_API oseki_status oseki_config_serialize(const oseki_config *config, char **text);
OSEKI_API oseki_status oseki_config_save(const oseki_config *config, const char *path);
OSEKI_API oseki_status oseki_config_validate(const oseki_config *config);
OSEKI_API void oseki_config_free(oseki_config *config);

/* Runs the experiment and writes its artifacts into out_dir. */
OSEKI_API oseki_status oseki_run(const oseki_config *config, const char *out_dir);
/* Comparison table of finished runs; release with oseki_string_free. */
OSEKI_API oseki_status oseki_compare(const char *const *dirs, size_t count, char **table);
/* Built-in 2D mesh and n_y seeded observation points. */
OSEKI_API oseki_status oseki_mesh_export(const char *mesh_path, const char *points_path, size_t n_y,
                                         uint64_t seed);

OSEKI_API void oseki_string_free(char *s);
/* Message of the last failed call on this thread, "" if none. */
OSEKI_API const char *oseki_last_error(void);
OSEKI_API const char *oseki_version(void);

#ifdef __cplusplus
}
#endif

#endif
