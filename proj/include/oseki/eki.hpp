#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "oseki/core.hpp"

namespace oseki::eki {

/**
 * Block-diagonal noise covariance Gamma = diag(Gamma_1 / s_1, Gamma_2 / s_2, ...).
 *
 * Blocks are stored through their precision scale s_b, so s_b = 0 is a block
 * with infinite variance: it contributes nothing to Gamma^{-1} but cannot be
 * densified or sampled.
 */
class BlockCovariance {
public:
    std::size_t add_block(std::string name, const MatrixXd &cov, double scale = 1.0);
    std::size_t add_identity_block(std::string name, Index size, double variance, double scale = 1.0);

    Index dim() const { return dim_; }
    std::size_t block_count() const { return blocks_.size(); }
    const std::string &name(std::size_t b) const { return blocks_.at(b).name; }
    Index offset(std::size_t b) const { return blocks_.at(b).offset; }
    Index size(std::size_t b) const { return blocks_.at(b).size; }
    double scale(std::size_t b) const { return blocks_.at(b).scale; }
    void set_scale(std::size_t b, double scale);
    /// Block index by name, or -1.
    int find(const std::string &name) const;

    /// Gamma^{-1} x, column-wise.
    MatrixXd apply_inverse(const MatrixXd &x) const;
    /// Gamma^{-1/2} x with the block Cholesky factors, so that
    /// ||whiten(x)||^2 = x^T Gamma^{-1} x.
    MatrixXd whiten(const MatrixXd &x) const;
    /// x^T Gamma^{-1} x.
    double norm_sq(const VectorXd &x) const;
    MatrixXd dense() const;
    /// One draw from N(0, Gamma).
    VectorXd sample(Rng &rng) const;

private:
    struct Block {
        std::string name;
        Index offset = 0;
        Index size = 0;
        double scale = 1.0;
        double variance = 1.0; // identity blocks
        std::shared_ptr<const MatrixXd> cov;
        std::shared_ptr<const Eigen::LLT<MatrixXd>> llt;
    };
    std::vector<Block> blocks_;
    Index dim_ = 0;
};

/// Black-box forward map G with data y and noise covariance Gamma.
struct InverseProblem {
    Index input_dim = 0;
    VectorXd data;
    BlockCovariance noise;
    /// Must be reentrant: called concurrently for different particles.
    std::function<VectorXd(const VectorXd &)> forward;

    Index output_dim() const { return data.size(); }
    void validate() const;
};

/// Images G(v_j) as columns. Non-finite output raises NumericalError naming
/// the particle.
MatrixXd evaluate(const InverseProblem &problem, const MatrixXd &particles, int workers = 1);

enum class Perturbation { unperturbed, perturbed };

/// One tempered update with step h; perturbed mode adds xi ~ N(0, Gamma / h).
Ensemble discrete_step(const InverseProblem &problem, const Ensemble &ensemble, double h,
                       Perturbation mode, Rng &rng, int workers = 1);

/**
 * basic:       dv_j/dt = C^{vy} Gamma^{-1} (y - G(v_j))
 * square_root: dv_j/dt = C^{vy} Gamma^{-1} (y - (G(v_j) + G bar) / 2)
 *
 * Both share the mean dynamics and fixed points. For linear G the square-root
 * form evolves the empirical covariance by dC/dt = -C A^T Gamma^-1 A C, the
 * large-ensemble moment equations of the perturbed-observation flow.
 */
enum class Flow { basic, square_root };

/// Field at the particles given their images (n_v x J).
MatrixXd vector_field(const InverseProblem &problem, const MatrixXd &particles, const MatrixXd &images,
                      Flow flow = Flow::basic);
MatrixXd vector_field(const InverseProblem &problem, const Ensemble &ensemble, Flow flow = Flow::basic,
                      int workers = 1);

struct IntegratorOptions {
    double t_end = 1e10;
    double rtol = 1e-6;
    double atol = 1e-9;
    /// Relative tolerance on the penalty variable, which is a single cheap
    /// component whose global error would otherwise accumulate over decades.
    double lambda_rtol = 1e-10;
    /// Log-spaced checkpoints from first_checkpoint to t_end; `checkpoints`
    /// replaces them when non-empty. t = 0 is always recorded.
    double first_checkpoint = 1e-2;
    int checkpoints_per_decade = 4;
    std::vector<double> checkpoints;
    /// Stop once misfit and spread both change by less than this between
    /// consecutive checkpoints.
    double stagnation_tol = 1e-12;
    bool early_exit = true;
    long max_steps = 5000000;
    Flow flow = Flow::basic;
    int workers = 1;
};

/// Scalar penalty ODE dlambda/dt = rate(lambda) driving the precision scale of
/// one noise block. lambda is held at lambda_max once it gets there.
struct PenaltyFlow {
    std::size_t block = 0;
    double lambda0 = 0.0;
    std::function<double(double)> rate;
    double lambda_max = 1e12;
};

struct EkiRunReport {
    std::vector<double> times;
    std::vector<double> lambda;       // penalty value (empty without a penalty flow)
    std::vector<double> misfit;       // ||G(v bar) - y||^2_Gamma at the current lambda
    std::vector<double> spread;       // max pairwise particle distance
    std::vector<double> image_spread; // (1/J) sum_j ||G(v_j) - G bar||^2_Gamma
    MatrixXd means;                   // n_v x checkpoints
    Ensemble final_ensemble{MatrixXd::Zero(1, 2)};
    long steps = 0;
    long rejected = 0;
    long evaluations = 0;
    bool stagnated = false;
    bool saturated = false;
};

/// Called at every recorded checkpoint with time, lambda and ensemble mean.
using CheckpointHook = std::function<void(double, double, const VectorXd &)>;

/// Dormand-Prince 5(4) integration of the particle system.
EkiRunReport integrate_eki(const InverseProblem &problem, const Ensemble &initial,
                           const IntegratorOptions &options, const PenaltyFlow *penalty = nullptr,
                           const CheckpointHook &hook = {});

/// Columnar text: time, lambda, misfit, spread, image_spread.
void write_report(std::ostream &out, const EkiRunReport &report);
/// One row per checkpoint, the mean vector.
void write_means(std::ostream &out, const EkiRunReport &report);

struct MeanField {
    VectorXd mean;
    MatrixXd covariance;
};

/// C(t)^{-1} = C0^{-1} + A^T Gamma^{-1} A t,
/// m(t) = C(t) (A^T Gamma^{-1} y t + C0^{-1} v0).
MeanField mean_field_linear_reference(const MatrixXd &a, const MatrixXd &gamma, const MatrixXd &c0,
                                      const VectorXd &v0, const VectorXd &y, double t);

} // namespace oseki::eki
