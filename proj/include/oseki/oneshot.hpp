#pragma once

#include <memory>
#include <string>
#include <vector>

#include "oseki/eki.hpp"
#include "oseki/fem.hpp"
#include "oseki/nn.hpp"

namespace oseki::oneshot {

/// Maps the second optimization variable theta to the interior state p.
class StateMap {
public:
    virtual ~StateMap() = default;
    virtual Index dim() const = 0;
    virtual Index state_dim() const = 0;
    virtual VectorXd state(const VectorXd &theta) const = 0;
    virtual bool is_linear() const = 0;
};

/// theta is the FEM state itself.
class IdentityState : public StateMap {
public:
    explicit IdentityState(Index n) : n_(n) {}
    Index dim() const override { return n_; }
    Index state_dim() const override { return n_; }
    VectorXd state(const VectorXd &theta) const override;
    bool is_linear() const override { return true; }

private:
    Index n_;
};

/// p = B theta.
class LinearState : public StateMap {
public:
    explicit LinearState(MatrixXd basis) : basis_(std::move(basis)) {}
    Index dim() const override { return basis_.cols(); }
    Index state_dim() const override { return basis_.rows(); }
    VectorXd state(const VectorXd &theta) const override;
    bool is_linear() const override { return true; }
    const MatrixXd &basis() const { return basis_; }

private:
    MatrixXd basis_;
};

/// Network evaluated at the interior nodes.
class NetworkState : public StateMap {
public:
    NetworkState(nn::Architecture arch, MatrixXd points);
    Index dim() const override { return count_; }
    Index state_dim() const override { return points_.rows(); }
    VectorXd state(const VectorXd &theta) const override;
    bool is_linear() const override { return false; }
    const nn::Architecture &architecture() const { return arch_; }

private:
    nn::Architecture arch_;
    MatrixXd points_;
    Index count_;
};

/**
 * One-shot problem: forward model M(u, p) = 0, observations y = O(p) + eta,
 * prior N(u0, C) on u, state map p = p(theta) and the weights of the
 * regularized loss.
 */
struct Problem {
    std::shared_ptr<const fem::ForwardModel> model;
    std::shared_ptr<const fem::ObservationOperator> observation;
    std::shared_ptr<const StateMap> state;
    std::shared_ptr<const GaussianPrior> prior; // mean is u0
    VectorXd data;
    MatrixXd gamma_obs;
    MatrixXd gamma_model;
    double alpha1 = 1.0;
    double alpha2 = 0.0;

    Index u_dim() const { return model->param_dim(); }
    Index theta_dim() const { return state->dim(); }
    Index dim() const { return u_dim() + theta_dim(); }
    void validate() const;

    VectorXd join(const VectorXd &u, const VectorXd &theta) const;
    VectorXd u_part(const VectorXd &v) const { return v.head(u_dim()); }
    VectorXd theta_part(const VectorXd &v) const { return v.tail(theta_dim()); }
};

struct LossTerms {
    double data = 0.0;    // 1/2 ||O(p) - y||^2_{Gamma_obs}
    double model = 0.0;   // lambda/2 ||M(u, p)||^2_{Gamma_model}
    double param = 0.0;   // alpha1/2 ||u - u0||^2_C
    double network = 0.0; // alpha2/2 ||theta||^2
    double total() const { return data + model + param + network; }
};

LossTerms augmented_loss(const Problem &problem, double lambda, const VectorXd &u, const VectorXd &theta);

/// Quantities reported per estimate.
struct Diagnostics {
    double data_misfit = 0.0;    // ||O(p) - y||^2_{Gamma_obs}
    double model_residual = 0.0; // ||M(u, p)||^2 (Euclidean)
    double model_weighted = 0.0; // ||M(u, p)||^2_{Gamma_model}
};

Diagnostics diagnose(const Problem &problem, const VectorXd &u, const VectorXd &theta);

/**
 * Augmented forward map G(u, theta) = (M(u, p); O(p); u; theta) with data
 * (0; y; u0; 0) and covariance diag(Gamma_model / lambda, Gamma_obs,
 * C / alpha1, I / alpha2). Blocks with a zero weight are left out; lambda = 0
 * keeps the model block with zero precision.
 */
class AugmentedSystem {
public:
    AugmentedSystem(std::shared_ptr<const Problem> problem, double lambda);

    const Problem &problem() const { return *problem_; }
    const eki::InverseProblem &inverse_problem() const { return inverse_; }
    double lambda() const;
    void set_lambda(double lambda);
    std::size_t model_block() const { return 0; }
    bool has_param_block() const { return param_block_ >= 0; }
    bool has_network_block() const { return network_block_ >= 0; }
    int param_block() const { return param_block_; }
    int network_block() const { return network_block_; }

    VectorXd forward(const VectorXd &v) const { return inverse_.forward(v); }
    /// G(v) - y hat.
    VectorXd residual(const VectorXd &v) const;
    /// 1/2 ||G(v) - y hat||^2_Gamma.
    double loss(const VectorXd &v) const;

private:
    std::shared_ptr<const Problem> problem_;
    eki::InverseProblem inverse_;
    int param_block_ = -1;
    int network_block_ = -1;
};

/**
 * Penalty continuation: a strictly increasing sequence lambda_k, or an ODE
 * dlambda/dt = f(lambda) from lambda0.
 */
struct PenaltySchedule {
    enum class Kind { discrete, ode };
    Kind kind = Kind::ode;
    std::string name;
    std::vector<double> values;
    double lambda0 = 0.0;
    std::function<double(double)> rate;
    double lambda_max = 1e12;

    static PenaltySchedule discrete(std::vector<double> values);
    /// lambda_k = k^3, k = 1 .. stages.
    static PenaltySchedule cubic(int stages = 50);
    /// f = 1.
    static PenaltySchedule ode_const(double lambda0 = 0.0);
    /// f = 1 / lambda.
    static PenaltySchedule ode_inv(double lambda0 = 1.0);
    /// f = 1 / lambda^2.
    static PenaltySchedule ode_inv_sq(double lambda0 = 1.0);
    /// cubic_k3, ode_const, ode_inv or ode_inv_sq.
    static PenaltySchedule named(const std::string &name, double lambda0, int stages);

    void validate() const;
};

struct SolverOptions {
    Index particles = 150;
    /// Initial theta ~ N(0, theta_variance I); u is drawn from the prior.
    double theta_variance = 1.0;
    /// Algorithm 1 redraws around the previous estimate with diag(C, this * I).
    double redraw_theta_variance = 1.0;
    eki::IntegratorOptions integrator;
    std::uint64_t seed = 1;
};

struct Estimate {
    double lambda = 0.0;
    double time = 0.0;
    VectorXd u;
    VectorXd theta;
    LossTerms loss;
    Diagnostics diagnostics;
};

struct Algorithm1Result {
    std::vector<Estimate> stages;
    std::vector<eki::EkiRunReport> reports;
    bool completed = true;
    std::string failure;
};

struct Algorithm2Result {
    eki::EkiRunReport report;
    std::vector<Estimate> trace; // one per checkpoint
    Estimate final;
    bool saturated = false;
};

/// J draws: u from the prior, theta from N(0, theta_variance I).
Ensemble initial_ensemble(const Problem &problem, Index particles, double theta_variance, Rng &rng);
/// J draws from N(center, diag(C, theta_variance I)).
Ensemble redraw_ensemble(const Problem &problem, const VectorXd &center, Index particles,
                         double theta_variance, Rng &rng);

Estimate make_estimate(const Problem &problem, double lambda, double time, const VectorXd &v);

/// Penalty EKI: one integration to stagnation (or t_end) per lambda_k.
Algorithm1Result algorithm1(std::shared_ptr<const Problem> problem, const PenaltySchedule &schedule,
                            const SolverOptions &options);

/// Simultaneous penalty EKI: particles and lambda integrated together.
Algorithm2Result algorithm2(std::shared_ptr<const Problem> problem, const PenaltySchedule &schedule,
                            const SolverOptions &options);

/// Exact minimizer of the lambda-loss for linear M, O and state map, from the
/// whitened least-squares problem. Returns v = (u, theta).
VectorXd penalty_reference_solve(std::shared_ptr<const Problem> problem, double lambda);

} // namespace oseki::oneshot
