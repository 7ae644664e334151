#include "oseki/oneshot.hpp"

#include <cmath>

namespace oseki::oneshot {

namespace {

bool is_scaled_identity(const MatrixXd &m, double &value) {
    if (m.rows() != m.cols() || m.rows() == 0) return false;
    value = m(0, 0);
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j)
            if (m(i, j) != (i == j ? value : 0.0)) return false;
    return value > 0.0;
}

MatrixXd symmetric(const MatrixXd &m) { return 0.5 * (m + m.transpose()); }

void add_covariance(eki::BlockCovariance &noise, const std::string &name, const MatrixXd &cov, double scale) {
    double value = 0.0;
    if (is_scaled_identity(cov, value)) {
        noise.add_identity_block(name, cov.rows(), value, scale);
    } else {
        noise.add_block(name, symmetric(cov), scale);
    }
}

} // namespace

VectorXd IdentityState::state(const VectorXd &theta) const {
    require(theta.size() == n_, "IdentityState: dimension mismatch");
    return theta;
}

VectorXd LinearState::state(const VectorXd &theta) const {
    require(theta.size() == basis_.cols(), "LinearState: dimension mismatch");
    return basis_ * theta;
}

NetworkState::NetworkState(nn::Architecture arch, MatrixXd points)
    : arch_(std::move(arch)), points_(std::move(points)), count_(nn::param_count(arch_)) {
    require(points_.cols() == arch_.input_dim, "NetworkState: point dimension differs from network input");
    require(arch_.layers.back() == 1, "NetworkState: scalar network output expected");
}

VectorXd NetworkState::state(const VectorXd &theta) const { return nn::eval_on_grid(arch_, theta, points_); }

void Problem::validate() const {
    require(model && observation && state && prior, "Problem: model, observation, state map and prior required");
    require(state->state_dim() == model->state_dim(), "Problem: state map and model state dimensions differ");
    require(observation->state_dim() == model->state_dim(), "Problem: observation and model state dimensions differ");
    require(prior->dim() == model->param_dim(), "Problem: prior and parameter dimensions differ");
    require(data.size() == observation->count(), "Problem: data length differs from observation count");
    require(gamma_obs.rows() == data.size() && gamma_obs.cols() == data.size(), "Problem: Gamma_obs has wrong size");
    require(gamma_model.rows() == model->residual_dim() && gamma_model.cols() == model->residual_dim(),
            "Problem: Gamma_model has wrong size");
    require(alpha1 >= 0.0 && alpha2 >= 0.0 && std::isfinite(alpha1) && std::isfinite(alpha2),
            "Problem: regularization weights must be finite and >= 0");
}

VectorXd Problem::join(const VectorXd &u, const VectorXd &theta) const {
    require(u.size() == u_dim() && theta.size() == theta_dim(), "Problem: dimension mismatch");
    VectorXd v(dim());
    v << u, theta;
    return v;
}

LossTerms augmented_loss(const Problem &problem, double lambda, const VectorXd &u, const VectorXd &theta) {
    require(lambda >= 0.0, "augmented_loss: lambda must be >= 0");
    const VectorXd p = problem.state->state(theta);
    const VectorXd misfit = problem.observation->apply(p) - problem.data;
    const VectorXd m = problem.model->residual(u, p);
    LossTerms t;
    t.data = 0.5 * WeightedMetric(problem.gamma_obs).norm_sq(misfit);
    t.model = 0.5 * lambda * WeightedMetric(problem.gamma_model).norm_sq(m);
    t.param = 0.5 * problem.alpha1 * problem.prior->norm_sq(u - problem.prior->mean());
    t.network = 0.5 * problem.alpha2 * theta.squaredNorm();
    if (!std::isfinite(t.total())) throw NumericalError("augmented_loss: non-finite value");
    return t;
}

Diagnostics diagnose(const Problem &problem, const VectorXd &u, const VectorXd &theta) {
    const VectorXd p = problem.state->state(theta);
    const VectorXd m = problem.model->residual(u, p);
    Diagnostics d;
    d.data_misfit = WeightedMetric(problem.gamma_obs).norm_sq(problem.observation->apply(p) - problem.data);
    d.model_residual = m.squaredNorm();
    d.model_weighted = WeightedMetric(problem.gamma_model).norm_sq(m);
    return d;
}

AugmentedSystem::AugmentedSystem(std::shared_ptr<const Problem> problem, double lambda)
    : problem_(std::move(problem)) {
    require(problem_ != nullptr, "AugmentedSystem: problem required");
    problem_->validate();
    require(lambda >= 0.0 && std::isfinite(lambda), "AugmentedSystem: lambda must be finite and >= 0");
    const Problem &pr = *problem_;
    const Index n_w = pr.model->residual_dim(), n_y = pr.data.size();

    add_covariance(inverse_.noise, "model", pr.gamma_model, lambda);
    add_covariance(inverse_.noise, "obs", pr.gamma_obs, 1.0);
    if (pr.alpha1 > 0.0) {
        param_block_ = static_cast<int>(inverse_.noise.add_block("param", symmetric(pr.prior->covariance()), pr.alpha1));
    }
    if (pr.alpha2 > 0.0) {
        network_block_ =
            static_cast<int>(inverse_.noise.add_identity_block("network", pr.theta_dim(), 1.0, pr.alpha2));
    }

    const bool with_u = param_block_ >= 0, with_theta = network_block_ >= 0;
    inverse_.input_dim = pr.dim();
    inverse_.data = VectorXd::Zero(inverse_.noise.dim());
    inverse_.data.segment(n_w, n_y) = pr.data;
    if (with_u) inverse_.data.segment(n_w + n_y, pr.u_dim()) = pr.prior->mean();

    const std::shared_ptr<const Problem> keep = problem_;
    const Index n_out = inverse_.noise.dim();
    inverse_.forward = [keep, n_w, n_y, n_out, with_u, with_theta](const VectorXd &v) -> VectorXd {
        const Problem &q = *keep;
        const VectorXd u = v.head(q.u_dim());
        const VectorXd theta = v.tail(q.theta_dim());
        const VectorXd p = q.state->state(theta);
        VectorXd g(n_out);
        g.head(n_w) = q.model->residual(u, p);
        g.segment(n_w, n_y) = q.observation->apply(p);
        Index offset = n_w + n_y;
        if (with_u) {
            g.segment(offset, u.size()) = u;
            offset += u.size();
        }
        if (with_theta) g.segment(offset, theta.size()) = theta;
        return g;
    };
}

double AugmentedSystem::lambda() const { return inverse_.noise.scale(model_block()); }

void AugmentedSystem::set_lambda(double lambda) {
    require(lambda >= 0.0 && std::isfinite(lambda), "AugmentedSystem: lambda must be finite and >= 0");
    inverse_.noise.set_scale(model_block(), lambda);
}

VectorXd AugmentedSystem::residual(const VectorXd &v) const {
    require(v.size() == problem_->dim(), "AugmentedSystem: dimension mismatch");
    return forward(v) - inverse_.data;
}

double AugmentedSystem::loss(const VectorXd &v) const { return 0.5 * inverse_.noise.norm_sq(residual(v)); }

PenaltySchedule PenaltySchedule::discrete(std::vector<double> values) {
    PenaltySchedule s;
    s.kind = Kind::discrete;
    s.name = "discrete";
    s.values = std::move(values);
    s.validate();
    return s;
}

PenaltySchedule PenaltySchedule::cubic(int stages) {
    require(stages >= 1, "cubic schedule: at least one stage required");
    std::vector<double> values;
    for (int k = 1; k <= stages; ++k) values.push_back(static_cast<double>(k) * k * k);
    PenaltySchedule s = discrete(std::move(values));
    s.name = "cubic_k3";
    return s;
}

PenaltySchedule PenaltySchedule::ode_const(double lambda0) {
    PenaltySchedule s;
    s.name = "ode_const";
    s.lambda0 = lambda0;
    s.rate = [](double) { return 1.0; };
    s.validate();
    return s;
}

PenaltySchedule PenaltySchedule::ode_inv(double lambda0) {
    PenaltySchedule s;
    s.name = "ode_inv";
    s.lambda0 = lambda0;
    s.rate = [](double l) { return 1.0 / l; };
    s.validate();
    return s;
}

PenaltySchedule PenaltySchedule::ode_inv_sq(double lambda0) {
    PenaltySchedule s;
    s.name = "ode_inv_sq";
    s.lambda0 = lambda0;
    s.rate = [](double l) { return 1.0 / (l * l); };
    s.validate();
    return s;
}

PenaltySchedule PenaltySchedule::named(const std::string &name, double lambda0, int stages) {
    if (name == "cubic_k3") return cubic(stages);
    if (name == "ode_const") return ode_const(lambda0);
    if (name == "ode_inv") return ode_inv(lambda0);
    if (name == "ode_inv_sq") return ode_inv_sq(lambda0);
    throw InvalidArgument("unknown penalty schedule '" + name + "'");
}

void PenaltySchedule::validate() const {
    require(lambda_max > 0.0, "schedule: lambda_max must be positive");
    if (kind == Kind::discrete) {
        require(!values.empty(), "schedule: empty lambda sequence");
        require(values.front() > 0.0, "schedule: lambda values must be positive");
        for (std::size_t k = 1; k < values.size(); ++k)
            require(values[k] > values[k - 1], "schedule: lambda sequence must be strictly increasing");
    } else {
        require(static_cast<bool>(rate), "schedule: rate function missing");
        require(lambda0 >= 0.0 && std::isfinite(lambda0), "schedule: lambda0 must be finite and >= 0");
        const double f0 = rate(lambda0);
        require(std::isfinite(f0) && f0 > 0.0, "schedule: rate must be positive and finite at lambda0");
    }
}

Ensemble initial_ensemble(const Problem &problem, Index particles, double theta_variance, Rng &rng) {
    require(particles >= 2, "initial_ensemble: at least two particles required");
    require(theta_variance >= 0.0, "initial_ensemble: variance must be >= 0");
    const std::vector<VectorXd> us = prior_sample(*problem.prior, particles, rng);
    MatrixXd v(problem.dim(), particles);
    const double s = std::sqrt(theta_variance);
    for (Index j = 0; j < particles; ++j) {
        v.col(j) << us[static_cast<std::size_t>(j)], s * rng.normal_vector(problem.theta_dim());
    }
    return Ensemble(v);
}

Ensemble redraw_ensemble(const Problem &problem, const VectorXd &center, Index particles,
                         double theta_variance, Rng &rng) {
    require(center.size() == problem.dim(), "redraw_ensemble: dimension mismatch");
    require(particles >= 2, "redraw_ensemble: at least two particles required");
    const GaussianPrior around = problem.prior->with_mean(problem.u_part(center));
    const std::vector<VectorXd> us = prior_sample(around, particles, rng);
    const VectorXd theta = problem.theta_part(center);
    MatrixXd v(problem.dim(), particles);
    const double s = std::sqrt(theta_variance);
    for (Index j = 0; j < particles; ++j) {
        v.col(j) << us[static_cast<std::size_t>(j)], theta + s * rng.normal_vector(problem.theta_dim());
    }
    return Ensemble(v);
}

Estimate make_estimate(const Problem &problem, double lambda, double time, const VectorXd &v) {
    Estimate e;
    e.lambda = lambda;
    e.time = time;
    e.u = problem.u_part(v);
    e.theta = problem.theta_part(v);
    e.loss = augmented_loss(problem, lambda, e.u, e.theta);
    e.diagnostics = diagnose(problem, e.u, e.theta);
    return e;
}

Algorithm1Result algorithm1(std::shared_ptr<const Problem> problem, const PenaltySchedule &schedule,
                            const SolverOptions &options) {
    require(schedule.kind == PenaltySchedule::Kind::discrete, "algorithm1: discrete schedule required");
    schedule.validate();
    AugmentedSystem system(problem, std::min(schedule.values.front(), schedule.lambda_max));
    const Rng root(options.seed);
    Algorithm1Result result;
    VectorXd center;
    for (std::size_t k = 0; k < schedule.values.size(); ++k) {
        const double lambda = std::min(schedule.values[k], schedule.lambda_max);
        system.set_lambda(lambda);
        Rng rng = root.split(k);
        const Ensemble start =
            k == 0 ? initial_ensemble(*problem, options.particles, options.theta_variance, rng)
                   : redraw_ensemble(*problem, center, options.particles, options.redraw_theta_variance, rng);
        try {
            eki::EkiRunReport report = eki::integrate_eki(system.inverse_problem(), start, options.integrator);
            center = report.final_ensemble.mean();
            result.stages.push_back(make_estimate(*problem, lambda, report.times.back(), center));
            result.reports.push_back(std::move(report));
        } catch (const NumericalError &e) {
            result.completed = false;
            result.failure = "stage " + std::to_string(k) + " (lambda = " + format_number(lambda) + "): " + e.what();
            break;
        }
    }
    return result;
}

Algorithm2Result algorithm2(std::shared_ptr<const Problem> problem, const PenaltySchedule &schedule,
                            const SolverOptions &options) {
    require(schedule.kind == PenaltySchedule::Kind::ode, "algorithm2: ODE schedule required");
    schedule.validate();
    AugmentedSystem system(problem, schedule.lambda0);
    Rng rng = Rng(options.seed).split(0);
    const Ensemble start = initial_ensemble(*problem, options.particles, options.theta_variance, rng);

    eki::PenaltyFlow flow;
    flow.block = system.model_block();
    flow.lambda0 = schedule.lambda0;
    flow.rate = schedule.rate;
    flow.lambda_max = schedule.lambda_max;

    Algorithm2Result result;
    const auto hook = [&](double t, double lambda, const VectorXd &mean) {
        result.trace.push_back(make_estimate(*problem, lambda, t, mean));
    };
    eki::IntegratorOptions integrator = options.integrator;
    // lambda keeps changing, so misfit stagnation is not a fixed point
    integrator.early_exit = false;
    result.report = eki::integrate_eki(system.inverse_problem(), start, integrator, &flow, hook);
    result.final = result.trace.back();
    result.saturated = result.report.saturated;
    return result;
}

VectorXd penalty_reference_solve(std::shared_ptr<const Problem> problem, double lambda) {
    require(problem != nullptr, "penalty_reference_solve: problem required");
    if (!problem->model->is_linear() || !problem->state->is_linear()) {
        throw InvalidArgument("penalty_reference_solve: linear model and state map required");
    }
    const AugmentedSystem system(problem, lambda);
    const Index n = problem->dim();
    const VectorXd g0 = system.forward(VectorXd::Zero(n));
    MatrixXd jac(g0.size(), n);
    for (Index i = 0; i < n; ++i) jac.col(i) = system.forward(VectorXd::Unit(n, i)) - g0;
    const auto &noise = system.inverse_problem().noise;
    const MatrixXd wj = noise.whiten(jac);
    const VectorXd wr = noise.whiten(system.inverse_problem().data - g0);
    const Eigen::ColPivHouseholderQR<MatrixXd> qr(wj);
    require(qr.rank() == n, "penalty_reference_solve: loss is not strictly convex");
    return qr.solve(wr);
}

} // namespace oseki::oneshot
