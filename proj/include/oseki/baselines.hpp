#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include "oseki/oneshot.hpp"

namespace oseki::baselines {

struct TikhonovSolution {
    VectorXd u;
    double objective = 0.0;
    /// ||H u - b|| / ||b|| for the normal equations H u = b.
    double residual = 0.0;
};

/// argmin 1/2 ||O S u - y||^2_{Gamma_obs} + alpha1/2 ||u - u0||^2_C for linear S.
TikhonovSolution tikhonov_reduced(const fem::ForwardModel &model, const fem::ObservationOperator &obs,
                                  const VectorXd &y, const MatrixXd &gamma_obs, const GaussianPrior &prior,
                                  double alpha1);

/// The reduced objective above, evaluated with the model's solve.
double tikhonov_objective(const fem::ForwardModel &model, const fem::ObservationOperator &obs,
                          const VectorXd &y, const MatrixXd &gamma_obs, const GaussianPrior &prior,
                          double alpha1, const VectorXd &u);

struct BfgsConfig {
    int max_iterations = 2000;
    double gradient_tol = 1e-8;
    double c1 = 1e-4; // sufficient decrease
    double c2 = 0.9;  // curvature
    int max_line_search = 60;
    /// Central differences with step fd_step * (1 + |x_i|).
    double fd_step = 1e-6;
    int workers = 1;

    void validate() const;
};

struct BfgsIterate {
    int iteration = 0;
    double value = 0.0;
    double gradient_norm = 0.0;
    double step = 0.0;
    /// max |H - H^T| / max |H| of the inverse-Hessian approximation.
    double symmetry_error = 0.0;
};

struct BfgsResult {
    VectorXd x;
    double value = 0.0;
    double gradient_norm = 0.0;
    int iterations = 0;
    long evaluations = 0;
    bool converged = false;
    bool line_search_failed = false;
    std::vector<BfgsIterate> trace;
};

using Objective = std::function<double(const VectorXd &)>;

/// Must be reentrant when workers > 1.
VectorXd fd_gradient(const Objective &f, const VectorXd &x, double step, int workers = 1);

BfgsResult bfgs_minimize(const Objective &f, const VectorXd &x0, const BfgsConfig &config);

struct QuasiNewtonResult {
    std::vector<oneshot::Estimate> stages;
    std::vector<BfgsResult> runs;
    /// Some stage ended on a line-search failure or the iteration limit.
    bool warning = false;
};

/// Penalty continuation with BFGS on each lambda_k-loss, warm-started from
/// the previous minimizer unless warm_start is off.
QuasiNewtonResult quasi_newton_penalty(std::shared_ptr<const oneshot::Problem> problem,
                                       const oneshot::PenaltySchedule &schedule, const VectorXd &x0,
                                       const BfgsConfig &config, bool warm_start = true);

/// Same columns as the EKI report: time is the cumulative BFGS iteration
/// count, misfit is 2 x loss, the spread columns are nan.
void write_trace(std::ostream &out, const QuasiNewtonResult &result);

} // namespace oseki::baselines
