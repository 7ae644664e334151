#pragma once

#include <string>
#include <vector>

#include "oseki/baselines.hpp"

namespace oseki::experiment {

/**
 * One experiment run, stored as a flat INI file with sections [experiment],
 * [model], [prior], [noise], [loss], [network], [solver], [bfgs], [seeds].
 * Keys that are not written keep the defaults of the experiment id and method.
 */
struct ExperimentConfig {
    std::string experiment = "oned_linear"; // oned_linear | oned_nonlinear | twod_poisson | custom
    std::string method = "osEKI_2";         // redTik | osEKI_1 | osEKI_2 | osQN_1 | nnosEKI_2 | nnosQN_1

    // model
    std::string model = "reaction_diffusion_1d"; // | nonlinear_diffusion_1d | poisson_2d
    Index n_u = 64;                              // 1D interior nodes
    double length = 3.14159265358979323846;      // 1D domain length
    double source = 10.0;                        // nonlinear right-hand side
    int obs_levels = 3;                          // 1D: 2^levels - 1 equispaced points
    std::string mesh = "builtin";                // 2D: "builtin" or a mesh file
    std::string obs_points = "builtin";          // 2D: "builtin" (n_y seeded points) or a points file
    Index n_y = 50;

    // prior N(0, beta (tau I - Laplace)^(-nu)); tau is ignored in 1D
    double beta = 5.0;
    double nu = 1.5;
    double tau = 1.0;

    double gamma_obs = 0.1;    // Gamma_obs = gamma_obs I
    double gamma_model = 100.0; // Gamma_model = gamma_model I
    double alpha1 = 0.002;
    double alpha2 = 0.0;

    std::vector<int> hidden_layers{10, 10};

    // solver
    Index particles = 150;
    std::string schedule = "ode_inv";
    double lambda0 = 1.0;
    int stages = 50;
    double lambda_max = 1e12;
    double t_end = 1e10;
    double rtol = 1e-6;
    double atol = 1e-9;
    std::string flow = "basic";
    double state_variance = 5.0;   // initial spread of theta for the FEM state
    double network_variance = 1.0; // initial spread of theta for the network weights
    int workers = 1;

    int bfgs_max_iterations = 2000;
    double bfgs_gradient_tol = 1e-8;
    double bfgs_fd_step = 1e-6;
    bool warm_start = true;

    std::uint64_t truth_seed = 1;
    std::uint64_t noise_seed = 2;
    std::uint64_t solver_seed = 3;
    std::uint64_t observation_seed = 20210131;

    static ExperimentConfig defaults(const std::string &experiment, const std::string &method);

    bool uses_network() const { return method.rfind("nn", 0) == 0; }
    bool is_stagewise() const; // osEKI_1, osQN_1, nnosQN_1
    bool linear_model() const { return model != "nonlinear_diffusion_1d"; }
    /// Throws ConfigError.
    void validate() const;

    bool operator==(const ExperimentConfig &) const = default;
};

ExperimentConfig parse_config(const std::string &text);
ExperimentConfig load_config(const std::string &path);
std::string serialize_config(const ExperimentConfig &config);
/// Sets "section.key" from text, as if it had been written in the file.
void set_value(ExperimentConfig &config, const std::string &key, const std::string &value);
std::string get_value(const ExperimentConfig &config, const std::string &key);

/// One row of the misfit / residual versus lambda table.
struct TraceRow {
    double lambda = 0.0;
    double time = 0.0;
    double data_misfit = 0.0;
    double model_residual = 0.0;
    double model_weighted = 0.0;
    double loss = 0.0;
};

struct RunResult {
    std::string directory;
    ExperimentConfig config;
    VectorXd truth;
    VectorXd data;
    VectorXd u;
    VectorXd p;
    bool has_reference = false;
    VectorXd reference_u;
    /// ||u - u_ref|| / ||u_ref||, Euclidean and prior-weighted.
    double reference_distance = 0.0;
    double reference_distance_c = 0.0;
    std::vector<TraceRow> trace;
    bool completed = true;
    std::string failure;
    double wall_seconds = 0.0;
};

/**
 * Runs one experiment and writes config.ini, seeds.txt, truth.tsv, data.tsv,
 * estimate.tsv, reference.tsv (when a reduced reference exists), trace.tsv,
 * report.tsv and summary.tsv into `directory`; wall time and date go to
 * meta.txt. Numeric files depend only on the config. A numerical failure is
 * recorded in summary.tsv and rethrown as NumericalError.
 */
RunResult run_experiment(const ExperimentConfig &config, const std::string &directory);

/// Table of final misfit, residual, reference distance and wall time, one row
/// per run directory. All runs must share the experiment id.
std::string compare_runs(const std::vector<std::string> &directories);

/// Writes the built-in 2D mesh and the seeded observation points.
void export_mesh(const std::string &mesh_path, const std::string &points_path, Index n_y = 50,
                 std::uint64_t seed = 20210131);

} // namespace oseki::experiment
