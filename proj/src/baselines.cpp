#include "oseki/baselines.hpp"

#include <cmath>
#include <limits>
#include <ostream>

namespace oseki::baselines {

namespace {

MatrixXd solution_matrix(const fem::ForwardModel &model) {
    if (const auto *lin = dynamic_cast<const fem::LinearModel *>(&model)) return lin->solution_matrix();
    const Index n = model.param_dim();
    MatrixXd s(model.state_dim(), n);
    for (Index i = 0; i < n; ++i) s.col(i) = model.solve(VectorXd::Unit(n, i));
    return s;
}

MatrixXd prior_precision(const GaussianPrior &prior) {
    const MatrixXd &v = prior.eigenvectors();
    return v * prior.eigenvalues().cwiseInverse().asDiagonal() * v.transpose();
}

struct LinePoint {
    double alpha = 0.0;
    double value = 0.0;
    double slope = 0.0;
    VectorXd grad;
};

// Minimizer of the cubic through (a, fa, da), (b, fb, db), or the midpoint
// when it falls outside the safe part of the bracket.
double interpolate(const LinePoint &a, const LinePoint &b) {
    const double lo = std::min(a.alpha, b.alpha), hi = std::max(a.alpha, b.alpha);
    const double d1 = a.slope + b.slope - 3.0 * (a.value - b.value) / (a.alpha - b.alpha);
    const double disc = d1 * d1 - a.slope * b.slope;
    double t = 0.5 * (lo + hi);
    if (disc >= 0.0) {
        const double d2 = std::copysign(std::sqrt(disc), b.alpha - a.alpha);
        const double denom = b.slope - a.slope + 2.0 * d2;
        if (denom != 0.0) {
            const double c = b.alpha - (b.alpha - a.alpha) * (b.slope + d2 - d1) / denom;
            if (std::isfinite(c)) t = c;
        }
    }
    const double margin = 0.1 * (hi - lo);
    if (t < lo + margin || t > hi - margin) t = 0.5 * (lo + hi);
    return t;
}

} // namespace

TikhonovSolution tikhonov_reduced(const fem::ForwardModel &model, const fem::ObservationOperator &obs,
                                  const VectorXd &y, const MatrixXd &gamma_obs, const GaussianPrior &prior,
                                  double alpha1) {
    if (!model.is_linear()) throw InvalidArgument("tikhonov_reduced: linear forward model required");
    require(y.size() == obs.count() && gamma_obs.rows() == y.size() && gamma_obs.cols() == y.size(),
            "tikhonov_reduced: data dimension mismatch");
    require(prior.dim() == model.param_dim(), "tikhonov_reduced: prior dimension mismatch");
    require(alpha1 >= 0.0, "tikhonov_reduced: alpha1 must be >= 0");

    const MatrixXd f = MatrixXd(obs.matrix()) * solution_matrix(model);
    const Eigen::LLT<MatrixXd> gl(gamma_obs);
    if (gl.info() != Eigen::Success) throw InvalidArgument("tikhonov_reduced: Gamma_obs not SPD");
    const MatrixXd gf = gl.solve(f);
    const MatrixXd cinv = prior_precision(prior);
    MatrixXd h = f.transpose() * gf + alpha1 * cinv;
    h = 0.5 * (h + h.transpose());
    const VectorXd b = gf.transpose() * y + alpha1 * (cinv * prior.mean());

    const Eigen::LDLT<MatrixXd> ldlt(h);
    if (ldlt.info() != Eigen::Success) throw NumericalError("tikhonov_reduced: normal equations not solvable");
    TikhonovSolution s;
    s.u = ldlt.solve(b);
    s.u += ldlt.solve(b - h * s.u);
    const double bn = b.norm();
    s.residual = (h * s.u - b).norm() / (bn > 0.0 ? bn : 1.0);
    s.objective = tikhonov_objective(model, obs, y, gamma_obs, prior, alpha1, s.u);
    return s;
}

double tikhonov_objective(const fem::ForwardModel &model, const fem::ObservationOperator &obs,
                          const VectorXd &y, const MatrixXd &gamma_obs, const GaussianPrior &prior,
                          double alpha1, const VectorXd &u) {
    const VectorXd r = obs.apply(model.solve(u)) - y;
    return 0.5 * WeightedMetric(gamma_obs).norm_sq(r) + 0.5 * alpha1 * prior.norm_sq(u - prior.mean());
}

void BfgsConfig::validate() const {
    require(max_iterations >= 0, "bfgs: max_iterations must be >= 0");
    require(gradient_tol > 0.0 && fd_step > 0.0, "bfgs: tolerances must be positive");
    require(0.0 < c1 && c1 < c2 && c2 < 1.0, "bfgs: Wolfe constants need 0 < c1 < c2 < 1");
    require(max_line_search >= 1, "bfgs: max_line_search must be >= 1");
    require(workers >= 1, "bfgs: workers must be >= 1");
}

VectorXd fd_gradient(const Objective &f, const VectorXd &x, double step, int workers) {
    VectorXd g(x.size());
    parallel_for(x.size(), workers, [&](Index i) {
        const double h = step * (1.0 + std::abs(x[i]));
        VectorXd xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        g[i] = (f(xp) - f(xm)) / (xp[i] - xm[i]);
    });
    return g;
}

BfgsResult bfgs_minimize(const Objective &f, const VectorXd &x0, const BfgsConfig &config) {
    config.validate();
    const Index n = x0.size();
    BfgsResult r;
    long evals = 0;
    const auto value = [&](const VectorXd &x) {
        ++evals;
        try {
            const double v = f(x);
            return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
        } catch (const NumericalError &) {
            // outside the domain of the objective; the line search backs off
            return std::numeric_limits<double>::infinity();
        }
    };
    const auto gradient = [&](const VectorXd &x) {
        evals += 2 * n;
        return fd_gradient(f, x, config.fd_step, config.workers);
    };

    VectorXd x = x0;
    double fx = value(x);
    if (!std::isfinite(fx)) throw NumericalError("bfgs: objective not finite at the starting point");
    VectorXd g = gradient(x);
    MatrixXd h = MatrixXd::Identity(n, n);
    bool scaled = false;

    r.trace.push_back({0, fx, g.norm(), 0.0, 0.0});
    int it = 0;
    while (g.norm() > config.gradient_tol && it < config.max_iterations) {
        VectorXd d = -h * g;
        double slope0 = g.dot(d);
        if (!(slope0 < 0.0)) {
            h.setIdentity();
            d = -g;
            slope0 = -g.squaredNorm();
        }

        // strong Wolfe line search, bracketing then zoom
        const LinePoint start{0.0, fx, slope0, g};
        const auto probe = [&](double a) {
            LinePoint p;
            p.alpha = a;
            const VectorXd xa = x + a * d;
            p.value = value(xa);
            if (std::isfinite(p.value)) {
                p.grad = gradient(xa);
                p.slope = p.grad.dot(d);
            }
            return p;
        };
        const auto armijo = [&](const LinePoint &p) { return p.value <= fx + config.c1 * p.alpha * slope0; };
        const auto curvature = [&](const LinePoint &p) { return std::abs(p.slope) <= -config.c2 * slope0; };

        LinePoint accepted;
        bool found = false;
        int tries = 0;
        const auto zoom = [&](LinePoint lo, LinePoint hi) {
            while (tries++ < config.max_line_search) {
                const double a = interpolate(lo, hi);
                if (!(std::abs(hi.alpha - lo.alpha) > 1e-16 * std::max(1.0, std::abs(lo.alpha)))) break;
                LinePoint p = probe(a);
                if (!std::isfinite(p.value) || !armijo(p) || p.value >= lo.value) {
                    hi = p;
                    if (!std::isfinite(p.value)) hi.value = std::numeric_limits<double>::max();
                } else {
                    if (curvature(p)) {
                        accepted = p;
                        found = true;
                        return;
                    }
                    if (p.slope * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
                    lo = p;
                }
            }
            // no Wolfe point; keep any strict decrease
            if (lo.alpha > 0.0 && lo.value < fx) {
                accepted = lo;
                found = true;
            }
        };

        LinePoint prev = start;
        double a = 1.0;
        while (tries++ < config.max_line_search) {
            LinePoint p = probe(a);
            if (!std::isfinite(p.value)) {
                a = 0.5 * (prev.alpha + a);
                continue;
            }
            if (!armijo(p) || (prev.alpha > 0.0 && p.value >= prev.value)) {
                zoom(prev, p);
                break;
            }
            if (curvature(p)) {
                accepted = p;
                found = true;
                break;
            }
            if (p.slope >= 0.0) {
                zoom(p, prev);
                break;
            }
            prev = p;
            a *= 2.0;
        }
        if (!found) {
            r.line_search_failed = true;
            break;
        }

        const VectorXd s = accepted.alpha * d;
        const VectorXd yv = accepted.grad - g;
        x += s;
        fx = accepted.value;
        g = accepted.grad;
        ++it;

        const double sy = s.dot(yv);
        if (sy > 0.0) {
            if (!scaled) {
                h *= sy / yv.squaredNorm();
                scaled = true;
            }
            const double rho = 1.0 / sy;
            const VectorXd hy = h * yv;
            const double yhy = yv.dot(hy);
            h += (rho * rho * (sy + yhy)) * (s * s.transpose()) - rho * (hy * s.transpose() + s * hy.transpose());
        }
        const double hmax = h.cwiseAbs().maxCoeff();
        const double sym = hmax > 0.0 ? (h - h.transpose()).cwiseAbs().maxCoeff() / hmax : 0.0;
        r.trace.push_back({it, fx, g.norm(), accepted.alpha, sym});
    }

    r.x = x;
    r.value = fx;
    r.gradient_norm = g.norm();
    r.iterations = it;
    r.evaluations = evals;
    r.converged = r.gradient_norm <= config.gradient_tol;
    return r;
}

QuasiNewtonResult quasi_newton_penalty(std::shared_ptr<const oneshot::Problem> problem,
                                       const oneshot::PenaltySchedule &schedule, const VectorXd &x0,
                                       const BfgsConfig &config, bool warm_start) {
    require(schedule.kind == oneshot::PenaltySchedule::Kind::discrete,
            "quasi_newton_penalty: discrete schedule required");
    schedule.validate();
    require(x0.size() == problem->dim(), "quasi_newton_penalty: starting point has wrong dimension");
    oneshot::AugmentedSystem system(problem, std::min(schedule.values.front(), schedule.lambda_max));
    QuasiNewtonResult result;
    VectorXd x = x0;
    for (double value : schedule.values) {
        const double lambda = std::min(value, schedule.lambda_max);
        system.set_lambda(lambda);
        const Objective f = [&system](const VectorXd &v) { return system.loss(v); };
        BfgsResult run = bfgs_minimize(f, warm_start ? x : x0, config);
        if (!run.converged) result.warning = true;
        x = run.x;
        result.stages.push_back(oneshot::make_estimate(*problem, lambda, static_cast<double>(run.iterations), x));
        result.runs.push_back(std::move(run));
    }
    return result;
}

void write_trace(std::ostream &out, const QuasiNewtonResult &result) {
    out << "time\tlambda\tmisfit\tspread\timage_spread\n";
    long total = 0;
    for (std::size_t k = 0; k < result.stages.size(); ++k) {
        total += result.runs[k].iterations;
        out << total << '\t' << format_number(result.stages[k].lambda) << '\t'
            << format_number(2.0 * result.runs[k].value) << "\tnan\tnan\n";
    }
}

} // namespace oseki::baselines
