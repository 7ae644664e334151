#include "doctest.h"

#include <cmath>

#include "oseki/oneshot.hpp"

using namespace oseki;
using namespace oseki::oneshot;

namespace {

fem::SparseMatrix scalar_sparse(double value) {
    fem::SparseMatrix m(1, 1);
    m.insert(0, 0) = value;
    m.makeCompressed();
    return m;
}

// M(u, p) = p - u, O p = p, one unknown each.
std::shared_ptr<Problem> scalar_toy(double y = 1.0) {
    const fem::Grid1D grid{1, 2.0};
    auto p = std::make_shared<Problem>();
    p->model = std::make_shared<fem::LinearModel>(scalar_sparse(1.0), scalar_sparse(1.0), grid.interior_points());
    p->observation = std::make_shared<fem::ObservationOperator>(
        fem::ObservationOperator::on_grid(grid, MatrixXd::Constant(1, 1, 1.0)));
    p->state = std::make_shared<IdentityState>(1);
    p->prior = std::make_shared<GaussianPrior>(GaussianPrior::from_covariance(VectorXd::Zero(1), MatrixXd::Identity(1, 1)));
    p->data = VectorXd::Constant(1, y);
    p->gamma_obs = MatrixXd::Identity(1, 1);
    p->gamma_model = MatrixXd::Identity(1, 1);
    p->alpha1 = 1.0;
    p->alpha2 = 0.0;
    return p;
}

// Minimizer of 1/2 (p - 1)^2 + lambda/2 (p - u)^2 + 1/2 u^2.
std::pair<double, double> toy_minimizer(double lambda) {
    return {lambda / (1.0 + 2.0 * lambda), (1.0 + lambda) / (1.0 + 2.0 * lambda)};
}

std::shared_ptr<Problem> linear_1d(Index interior, double alpha1, Rng &rng) {
    const fem::Grid1D grid{interior, 3.14159265358979323846};
    auto model = std::make_shared<fem::LinearModel>(fem::reaction_diffusion_1d(grid));
    auto obs = std::make_shared<fem::ObservationOperator>(
        fem::ObservationOperator::on_grid(grid, fem::equispaced_points_1d(grid, 3)));
    auto prior = std::make_shared<GaussianPrior>(fem::sine_prior_1d(grid, 5.0, 1.5));
    const VectorXd truth = prior_sample(*prior, 1, rng)[0];
    const MatrixXd gamma_obs = 0.1 * MatrixXd::Identity(obs->count(), obs->count());
    auto p = std::make_shared<Problem>();
    p->model = model;
    p->observation = obs;
    p->state = std::make_shared<IdentityState>(interior);
    p->prior = prior;
    p->data = fem::synthesize_data(*model, *obs, truth, gamma_obs, rng).data;
    p->gamma_obs = gamma_obs;
    p->gamma_model = 100.0 * MatrixXd::Identity(interior, interior);
    p->alpha1 = alpha1;
    p->alpha2 = 0.0;
    return p;
}

// argmin 1/2 ||O S u - y||^2_Gamma + alpha/2 ||u - u0||^2_C from the normal equations.
VectorXd reduced_tikhonov(const Problem &p) {
    const auto &lin = dynamic_cast<const fem::LinearModel &>(*p.model);
    const MatrixXd f = MatrixXd(p.observation->matrix()) * lin.solution_matrix();
    const MatrixXd gi = p.gamma_obs.inverse();
    const MatrixXd ci = p.prior->covariance().inverse();
    const MatrixXd h = f.transpose() * gi * f + p.alpha1 * ci;
    const VectorXd u0 = p.prior->mean();
    return u0 + h.ldlt().solve(f.transpose() * gi * (p.data - f * u0));
}

class ThrowingModel : public fem::ForwardModel {
public:
    Index param_dim() const override { return 1; }
    Index state_dim() const override { return 1; }
    const MatrixXd &state_points() const override { return points_; }
    VectorXd residual(const VectorXd &u, const VectorXd &p) const override {
        if (std::abs(p[0]) > 0.0) throw NumericalError("blow-up");
        return p - u;
    }
    VectorXd solve(const VectorXd &u) const override { return u; }

private:
    MatrixXd points_ = MatrixXd::Constant(1, 1, 1.0);
};

} // namespace

TEST_CASE("scalar toy loss by hand") {
    const auto p = scalar_toy();
    const VectorXd u = VectorXd::Zero(1), theta = VectorXd::Constant(1, 0.5);
    const LossTerms a = augmented_loss(*p, 2.0, u, theta);
    CHECK(a.data == doctest::Approx(0.125));
    CHECK(a.model == doctest::Approx(0.25));
    CHECK(a.param == doctest::Approx(0.0));
    CHECK(a.total() == doctest::Approx(0.375));

    const LossTerms b = augmented_loss(*p, 4.0, u, theta);
    CHECK(b.model == doctest::Approx(2.0 * a.model));
    CHECK(b.data == a.data);
    CHECK(b.param == a.param);

    const Diagnostics d = diagnose(*p, u, theta);
    CHECK(d.data_misfit == doctest::Approx(0.25));
    CHECK(d.model_residual == doctest::Approx(0.25));
}

TEST_CASE("augmented system layout") {
    Rng rng(3);
    auto p = linear_1d(15, 0.002, rng);
    p->alpha2 = 0.5;
    const AugmentedSystem sys(p, 7.0);
    const auto &noise = sys.inverse_problem().noise;
    REQUIRE(noise.block_count() == 4);
    CHECK(noise.name(0) == "model");
    CHECK(noise.name(1) == "obs");
    CHECK(noise.name(2) == "param");
    CHECK(noise.name(3) == "network");
    CHECK(noise.size(0) == 15);
    CHECK(noise.size(1) == 7);
    CHECK(noise.size(2) == 15);
    CHECK(noise.size(3) == 15);
    CHECK(noise.scale(0) == 7.0);
    CHECK(noise.scale(2) == 0.002);
    CHECK(noise.scale(3) == 0.5);
    CHECK(sys.lambda() == 7.0);
    CHECK(sys.inverse_problem().input_dim == 30);
    const VectorXd &yhat = sys.inverse_problem().data;
    CHECK(yhat.head(15).norm() == 0.0);
    CHECK((yhat.segment(15, 7) - p->data).norm() == 0.0);
    CHECK(yhat.tail(15).norm() == 0.0);

    p->alpha1 = 0.0;
    p->alpha2 = 0.0;
    AugmentedSystem bare(p, 0.0);
    CHECK(bare.inverse_problem().noise.block_count() == 2);
    CHECK_FALSE(bare.has_param_block());
    CHECK_FALSE(bare.has_network_block());
    bare.set_lambda(3.0);
    CHECK(bare.lambda() == 3.0);
    CHECK_THROWS_AS(bare.set_lambda(-1.0), InvalidArgument);
}

TEST_CASE("system loss equals the sum of the loss terms") {
    Rng rng(11);
    auto p = linear_1d(15, 0.3, rng);
    p->alpha2 = 0.25;
    const AugmentedSystem sys(p, 12.5);
    for (int trial = 0; trial < 5; ++trial) {
        const VectorXd v = rng.normal_vector(p->dim());
        const LossTerms t = augmented_loss(*p, 12.5, p->u_part(v), p->theta_part(v));
        CHECK(sys.loss(v) == doctest::Approx(t.total()).epsilon(1e-10));
    }

    // network state on the nonlinear model
    const fem::Grid1D grid{20, 1.0};
    auto q = std::make_shared<Problem>();
    q->model = std::make_shared<fem::NonlinearDiffusion1D>(grid);
    q->observation = std::make_shared<fem::ObservationOperator>(
        fem::ObservationOperator::on_grid(grid, fem::equispaced_points_1d(grid, 3)));
    q->state = std::make_shared<NetworkState>(nn::Architecture{}, grid.interior_points());
    q->prior = std::make_shared<GaussianPrior>(fem::sine_prior_1d(grid, 1.0, 2.0));
    q->data = VectorXd::LinSpaced(7, 0.1, 0.7);
    q->gamma_obs = 1e-4 * MatrixXd::Identity(7, 7);
    q->gamma_model = 10.0 * MatrixXd::Identity(20, 20);
    q->alpha1 = 2.0;
    q->alpha2 = 0.1;
    const AugmentedSystem nsys(q, 3.0);
    CHECK(q->theta_dim() == 141);
    const VectorXd v = 0.3 * rng.normal_vector(q->dim());
    const LossTerms t = augmented_loss(*q, 3.0, q->u_part(v), q->theta_part(v));
    CHECK(nsys.loss(v) == doctest::Approx(t.total()).epsilon(1e-10));
}

TEST_CASE("reference solve on the scalar toy") {
    const auto p = scalar_toy();
    for (double lambda : {0.0, 0.5, 1.0, 10.0, 1e6}) {
        const VectorXd v = penalty_reference_solve(p, lambda);
        const auto [u, s] = toy_minimizer(lambda);
        CHECK(v[0] == doctest::Approx(u).epsilon(1e-12));
        CHECK(v[1] == doctest::Approx(s).epsilon(1e-12));
    }
    // grid search at lambda = 2
    double best = 1e300, bu = 0, bp = 0;
    for (int i = 0; i <= 400; ++i)
        for (int j = 0; j <= 400; ++j) {
            const double u = i / 400.0, s = j / 400.0;
            const double l = augmented_loss(*p, 2.0, VectorXd::Constant(1, u), VectorXd::Constant(1, s)).total();
            if (l < best) best = l, bu = u, bp = s;
        }
    const VectorXd v = penalty_reference_solve(p, 2.0);
    CHECK(std::abs(v[0] - bu) <= 1.5 / 400.0);
    CHECK(std::abs(v[1] - bp) <= 1.5 / 400.0);
}

TEST_CASE("strong parameter weight pins u to the prior mean") {
    Rng rng(5);
    auto p = linear_1d(15, 1e8, rng);
    const VectorXd v = penalty_reference_solve(p, 100.0);
    CHECK(p->u_part(v).norm() < 1e-5);
}

TEST_CASE("large penalty recovers reduced Tikhonov") {
    Rng rng(7);
    auto p = linear_1d(64, 0.002, rng);
    const VectorXd v = penalty_reference_solve(p, 1e12);
    const VectorXd tik = reduced_tikhonov(*p);
    const double rel = (p->u_part(v) - tik).norm() / tik.norm();
    CHECK(rel < 1e-4);
    const auto &lin = dynamic_cast<const fem::LinearModel &>(*p->model);
    CHECK((p->theta_part(v) - lin.solve(p->u_part(v))).norm() < 1e-4 * p->theta_part(v).norm());
}

TEST_CASE("reference solve requires linear maps") {
    const fem::Grid1D grid{8, 1.0};
    auto q = std::make_shared<Problem>();
    q->model = std::make_shared<fem::NonlinearDiffusion1D>(grid);
    q->observation = std::make_shared<fem::ObservationOperator>(
        fem::ObservationOperator::on_grid(grid, fem::equispaced_points_1d(grid, 2)));
    q->state = std::make_shared<IdentityState>(8);
    q->prior = std::make_shared<GaussianPrior>(fem::sine_prior_1d(grid, 1.0, 2.0));
    q->data = VectorXd::Zero(3);
    q->gamma_obs = MatrixXd::Identity(3, 3);
    q->gamma_model = MatrixXd::Identity(8, 8);
    CHECK_THROWS_AS(penalty_reference_solve(q, 1.0), InvalidArgument);
}

TEST_CASE("schedules") {
    const PenaltySchedule c = PenaltySchedule::cubic(50);
    REQUIRE(c.values.size() == 50);
    CHECK(c.values.front() == 1.0);
    CHECK(c.values[1] == 8.0);
    CHECK(c.values.back() == 125000.0);
    CHECK(PenaltySchedule::named("ode_inv_sq", 1.0, 0).rate(2.0) == 0.25);
    CHECK(PenaltySchedule::named("ode_inv", 1.0, 0).rate(4.0) == 0.25);
    CHECK(PenaltySchedule::named("ode_const", 0.0, 0).rate(9.0) == 1.0);
    CHECK_THROWS_AS(PenaltySchedule::named("linear", 1.0, 0), InvalidArgument);
    CHECK_THROWS_AS(PenaltySchedule::ode_inv(0.0), InvalidArgument);
    CHECK_THROWS_AS(PenaltySchedule::discrete({1.0, 1.0}), InvalidArgument);
}

TEST_CASE("simultaneous penalty follows the closed-form lambda") {
    const auto p = scalar_toy();
    SolverOptions opt;
    opt.particles = 8;
    opt.integrator.t_end = 1e6;
    struct Case {
        PenaltySchedule s;
        std::function<double(double)> exact;
    };
    const std::vector<Case> cases{
        {PenaltySchedule::ode_const(0.0), [](double t) { return t; }},
        {PenaltySchedule::ode_inv(1.0), [](double t) { return std::sqrt(1.0 + 2.0 * t); }},
        {PenaltySchedule::ode_inv_sq(1.0), [](double t) { return std::cbrt(1.0 + 3.0 * t); }},
    };
    for (const auto &c : cases) {
        const Algorithm2Result r = algorithm2(p, c.s, opt);
        REQUIRE(r.trace.size() == r.report.times.size());
        for (const Estimate &e : r.trace) {
            CHECK(e.lambda == doctest::Approx(c.exact(e.time)).epsilon(1e-6));
        }
        // the mean ends near the minimizer at the final lambda
        const auto [u, s] = toy_minimizer(r.final.lambda);
        CHECK(std::abs(r.final.u[0] - u) < 1e-2);
        CHECK(std::abs(r.final.theta[0] - s) < 1e-2);
    }
}

TEST_CASE("penalty stages approach the normal-equation minimizers") {
    Rng rng(13);
    auto p = linear_1d(7, 0.5, rng);
    SolverOptions opt;
    opt.particles = 40;
    opt.seed = 21;
    opt.integrator.flow = eki::Flow::square_root;
    const Algorithm1Result r = algorithm1(p, PenaltySchedule::discrete({1.0, 10.0, 100.0}), opt);
    REQUIRE(r.completed);
    REQUIRE(r.stages.size() == 3);
    for (const Estimate &e : r.stages) {
        const VectorXd ref = penalty_reference_solve(p, e.lambda);
        const VectorXd v = p->join(e.u, e.theta);
        CHECK((v - ref).norm() < 1e-4 * ref.norm());
        CHECK(e.loss.total() >= augmented_loss(*p, e.lambda, p->u_part(ref), p->theta_part(ref)).total() - 1e-9);
    }
    for (const auto &rep : r.reports)
        for (std::size_t k = 1; k < rep.misfit.size(); ++k) CHECK(rep.misfit[k] <= rep.misfit[k - 1] * (1 + 1e-9));
}

TEST_CASE("algorithm 1 reports a failing stage") {
    auto p = scalar_toy();
    p->model = std::make_shared<ThrowingModel>();
    SolverOptions opt;
    opt.particles = 4;
    const Algorithm1Result r = algorithm1(p, PenaltySchedule::cubic(3), opt);
    CHECK_FALSE(r.completed);
    CHECK(r.stages.empty());
    CHECK(r.failure.find("stage 0") != std::string::npos);
}

TEST_CASE("ensembles are reproducible and centred") {
    Rng rng(2);
    auto p = linear_1d(7, 1.0, rng);
    Rng a(99), b(99);
    const Ensemble e1 = initial_ensemble(*p, 10, 5.0, a);
    const Ensemble e2 = initial_ensemble(*p, 10, 5.0, b);
    CHECK((e1.particles() - e2.particles()).norm() == 0.0);

    const VectorXd center = VectorXd::LinSpaced(p->dim(), -1.0, 1.0);
    Rng c(4);
    const Ensemble big = redraw_ensemble(*p, center, 20000, 1.0, c);
    CHECK((big.mean() - center).lpNorm<Eigen::Infinity>() < 0.05);
    const MatrixXd cov = big.covariance();
    CHECK(cov(p->dim() - 1, p->dim() - 1) == doctest::Approx(1.0).epsilon(0.05));
    CHECK((cov.topLeftCorner(7, 7) - p->prior->covariance()).norm() < 0.05 * p->prior->covariance().norm());
}
