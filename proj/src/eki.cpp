#include "oseki/eki.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

namespace oseki::eki {

std::size_t BlockCovariance::add_block(std::string name, const MatrixXd &cov, double scale) {
    require(cov.rows() == cov.cols() && cov.rows() > 0, "BlockCovariance: square block expected");
    require(scale >= 0.0 && std::isfinite(scale), "BlockCovariance: scale must be finite and >= 0");
    const WeightedMetric check(cov); // validates symmetry and definiteness
    Block b;
    b.name = std::move(name);
    b.offset = dim_;
    b.size = cov.rows();
    b.scale = scale;
    b.cov = std::make_shared<const MatrixXd>(cov);
    b.llt = std::make_shared<const Eigen::LLT<MatrixXd>>(cov);
    dim_ += b.size;
    blocks_.push_back(std::move(b));
    return blocks_.size() - 1;
}

std::size_t BlockCovariance::add_identity_block(std::string name, Index size, double variance,
                                                double scale) {
    require(size > 0, "BlockCovariance: empty block");
    require(variance > 0.0 && std::isfinite(variance), "BlockCovariance: variance must be positive");
    require(scale >= 0.0 && std::isfinite(scale), "BlockCovariance: scale must be finite and >= 0");
    Block b;
    b.name = std::move(name);
    b.offset = dim_;
    b.size = size;
    b.scale = scale;
    b.variance = variance;
    dim_ += size;
    blocks_.push_back(std::move(b));
    return blocks_.size() - 1;
}

void BlockCovariance::set_scale(std::size_t b, double scale) {
    require(scale >= 0.0 && std::isfinite(scale), "BlockCovariance: scale must be finite and >= 0");
    blocks_.at(b).scale = scale;
}

int BlockCovariance::find(const std::string &name) const {
    for (std::size_t b = 0; b < blocks_.size(); ++b)
        if (blocks_[b].name == name) return static_cast<int>(b);
    return -1;
}

MatrixXd BlockCovariance::apply_inverse(const MatrixXd &x) const {
    require(x.rows() == dim_, "BlockCovariance: dimension mismatch");
    MatrixXd out(x.rows(), x.cols());
    for (const Block &b : blocks_) {
        auto rows = x.middleRows(b.offset, b.size);
        if (b.scale == 0.0) {
            out.middleRows(b.offset, b.size).setZero();
        } else if (b.llt) {
            out.middleRows(b.offset, b.size) = b.scale * b.llt->solve(rows);
        } else {
            out.middleRows(b.offset, b.size) = (b.scale / b.variance) * rows;
        }
    }
    return out;
}

MatrixXd BlockCovariance::whiten(const MatrixXd &x) const {
    require(x.rows() == dim_, "BlockCovariance: dimension mismatch");
    MatrixXd out(x.rows(), x.cols());
    for (const Block &b : blocks_) {
        auto rows = x.middleRows(b.offset, b.size);
        if (b.scale == 0.0) {
            out.middleRows(b.offset, b.size).setZero();
        } else if (b.llt) {
            out.middleRows(b.offset, b.size) = std::sqrt(b.scale) * b.llt->matrixL().solve(rows);
        } else {
            out.middleRows(b.offset, b.size) = std::sqrt(b.scale / b.variance) * rows;
        }
    }
    return out;
}

double BlockCovariance::norm_sq(const VectorXd &x) const {
    require(x.size() == dim_, "BlockCovariance: dimension mismatch");
    double total = 0.0;
    for (const Block &b : blocks_) {
        if (b.scale == 0.0) continue;
        const auto seg = x.segment(b.offset, b.size);
        if (b.llt) {
            total += b.scale * b.llt->matrixL().solve(seg).squaredNorm();
        } else {
            total += b.scale / b.variance * seg.squaredNorm();
        }
    }
    return total;
}

MatrixXd BlockCovariance::dense() const {
    MatrixXd out = MatrixXd::Zero(dim_, dim_);
    for (const Block &b : blocks_) {
        if (b.scale == 0.0) throw InvalidArgument("BlockCovariance: block '" + b.name + "' has infinite variance");
        if (b.llt) {
            out.block(b.offset, b.offset, b.size, b.size) = *b.cov / b.scale;
        } else {
            out.block(b.offset, b.offset, b.size, b.size).diagonal().setConstant(b.variance / b.scale);
        }
    }
    return out;
}

VectorXd BlockCovariance::sample(Rng &rng) const {
    VectorXd out(dim_);
    for (const Block &b : blocks_) {
        if (b.scale == 0.0) throw InvalidArgument("BlockCovariance: block '" + b.name + "' has infinite variance");
        const VectorXd xi = rng.normal_vector(b.size);
        if (b.llt) {
            out.segment(b.offset, b.size) = b.llt->matrixL() * xi / std::sqrt(b.scale);
        } else {
            out.segment(b.offset, b.size) = std::sqrt(b.variance / b.scale) * xi;
        }
    }
    return out;
}

void InverseProblem::validate() const {
    require(input_dim > 0, "InverseProblem: input dimension must be positive");
    require(static_cast<bool>(forward), "InverseProblem: forward map missing");
    require(noise.dim() == data.size(), "InverseProblem: noise and data dimensions differ");
}

MatrixXd evaluate(const InverseProblem &problem, const MatrixXd &particles, int workers) {
    require(particles.rows() == problem.input_dim, "evaluate: particle dimension mismatch");
    const Index n_out = problem.output_dim();
    MatrixXd images(n_out, particles.cols());
    parallel_for(particles.cols(), workers, [&](Index j) {
        VectorXd g;
        try {
            g = problem.forward(particles.col(j));
        } catch (const NumericalError &e) {
            throw NumericalError("forward map failed for particle " + std::to_string(j) + ": " + e.what());
        }
        if (g.size() != n_out) throw InvalidArgument("forward map returned a vector of wrong length");
        if (!g.allFinite()) {
            throw NumericalError("forward map returned non-finite values for particle " + std::to_string(j));
        }
        images.col(j) = g;
    });
    return images;
}

Ensemble discrete_step(const InverseProblem &problem, const Ensemble &ensemble, double h,
                       Perturbation mode, Rng &rng, int workers) {
    require(h > 0.0, "discrete_step: step size must be positive");
    require(ensemble.size() >= 2, "discrete_step: at least two particles required");
    problem.validate();
    const MatrixXd images = evaluate(problem, ensemble.particles(), workers);
    const EmpiricalStats stats = empirical_stats(ensemble, images);
    const MatrixXd system = stats.image_cov + problem.noise.dense() / h;
    // K = C^{vy} (C^{yy} + Gamma / h)^{-1}; the system matrix is SPD
    const Eigen::LLT<MatrixXd> llt(system);
    if (llt.info() != Eigen::Success) throw NumericalError("discrete_step: gain system not positive definite");
    const MatrixXd gain = llt.solve(stats.cross_cov.transpose()).transpose();

    MatrixXd innovations = (-images).colwise() + problem.data;
    if (mode == Perturbation::perturbed) {
        const double s = 1.0 / std::sqrt(h);
        for (Index j = 0; j < ensemble.size(); ++j) innovations.col(j) += s * problem.noise.sample(rng);
    }
    return Ensemble(ensemble.particles() + gain * innovations);
}

MatrixXd vector_field(const InverseProblem &problem, const MatrixXd &particles, const MatrixXd &images,
                      Flow flow) {
    const Index J = particles.cols();
    require(J >= 2, "vector_field: at least two particles required");
    require(images.cols() == J && images.rows() == problem.output_dim(), "vector_field: image shape mismatch");
    const VectorXd v_mean = column_mean(particles);
    const VectorXd g_mean = column_mean(images);
    const MatrixXd dv = centered(particles, v_mean);
    const MatrixXd dg = centered(images, g_mean);
    MatrixXd residual;
    if (flow == Flow::basic) {
        residual = (-images).colwise() + problem.data;
    } else {
        residual = (-0.5 * images).colwise() + (problem.data - 0.5 * g_mean);
    }
    // C^{vy} Gamma^{-1} R = (1/J) dV (dG^T Gamma^{-1} R), never forming C^{vy}
    const MatrixXd weights = dg.transpose() * problem.noise.apply_inverse(residual);
    return dv * weights / static_cast<double>(J);
}

MatrixXd vector_field(const InverseProblem &problem, const Ensemble &ensemble, Flow flow, int workers) {
    return vector_field(problem, ensemble.particles(), evaluate(problem, ensemble.particles(), workers), flow);
}

namespace {

std::vector<double> checkpoint_grid(const IntegratorOptions &o) {
    std::vector<double> grid;
    if (!o.checkpoints.empty()) {
        for (double t : o.checkpoints)
            if (t > 0.0 && t < o.t_end) grid.push_back(t);
    } else {
        require(o.first_checkpoint > 0.0 && o.checkpoints_per_decade > 0, "integrate_eki: bad checkpoint grid");
        const double pd = o.checkpoints_per_decade;
        const long lo = static_cast<long>(std::ceil(pd * std::log10(o.first_checkpoint) - 1e-9));
        for (long k = lo;; ++k) {
            const double t = std::pow(10.0, static_cast<double>(k) / pd);
            if (t >= o.t_end * (1 - 1e-12)) break;
            grid.push_back(t);
        }
    }
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    if (o.t_end > 0.0) grid.push_back(o.t_end);
    return grid;
}

// Dormand-Prince 5(4) tableau; the system is autonomous so the nodes c_i are unused
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

struct State {
    MatrixXd v;
    double lambda = 0.0;
};

struct Derivative {
    MatrixXd dv;
    double dlambda = 0.0;
    MatrixXd images;
};

class System {
public:
    System(const InverseProblem &problem, const IntegratorOptions &options, const PenaltyFlow *penalty)
        : problem_(problem), options_(options), penalty_(penalty) {}

    double effective_lambda(double lambda) const {
        return penalty_ ? std::min(lambda, penalty_->lambda_max) : 0.0;
    }

    InverseProblem at(double lambda) const {
        InverseProblem p = problem_;
        if (penalty_) p.noise.set_scale(penalty_->block, effective_lambda(lambda));
        return p;
    }

    Derivative operator()(const State &s) {
        const InverseProblem p = at(s.lambda);
        Derivative d;
        d.images = evaluate(p, s.v, options_.workers);
        evaluations += s.v.cols();
        d.dv = vector_field(p, s.v, d.images, options_.flow);
        if (penalty_ && s.lambda < penalty_->lambda_max) {
            d.dlambda = penalty_->rate(s.lambda);
            if (!std::isfinite(d.dlambda) || d.dlambda < 0.0)
                throw NumericalError("penalty rate is negative or non-finite at lambda = " + format_number(s.lambda));
        }
        return d;
    }

    long evaluations = 0;

private:
    const InverseProblem &problem_;
    const IntegratorOptions &options_;
    const PenaltyFlow *penalty_;
};

double error_norm(const State &y0, const State &y1, const MatrixXd &err, double err_lambda,
                  const IntegratorOptions &o, bool with_lambda) {
    double worst = 0.0;
    const Index n = err.size();
    const double *e = err.data(), *a = y0.v.data(), *b = y1.v.data();
    for (Index i = 0; i < n; ++i) {
        const double sc = o.atol + o.rtol * std::max(std::abs(a[i]), std::abs(b[i]));
        worst = std::max(worst, std::abs(e[i]) / sc);
    }
    if (with_lambda) {
        const double sc = o.atol + o.lambda_rtol * std::max(std::abs(y0.lambda), std::abs(y1.lambda));
        worst = std::max(worst, std::abs(err_lambda) / sc);
    }
    return std::isfinite(worst) ? worst : std::numeric_limits<double>::infinity();
}

} // namespace

EkiRunReport integrate_eki(const InverseProblem &problem, const Ensemble &initial,
                           const IntegratorOptions &options, const PenaltyFlow *penalty,
                           const CheckpointHook &hook) {
    problem.validate();
    require(initial.dim() == problem.input_dim, "integrate_eki: ensemble dimension mismatch");
    require(initial.size() >= 2, "integrate_eki: at least two particles required");
    require(options.t_end >= 0.0, "integrate_eki: t_end must be >= 0");
    require(options.rtol > 0.0 && options.atol > 0.0, "integrate_eki: tolerances must be positive");
    require(options.lambda_rtol > 0.0, "integrate_eki: lambda_rtol must be positive");
    if (penalty) {
        require(penalty->block < problem.noise.block_count(), "integrate_eki: penalty block out of range");
        require(static_cast<bool>(penalty->rate), "integrate_eki: penalty rate missing");
        require(penalty->lambda0 >= 0.0, "integrate_eki: lambda0 must be >= 0");
    }
    const bool with_lambda = penalty != nullptr;
    const std::vector<double> grid = checkpoint_grid(options);
    System f(problem, options, penalty);

    EkiRunReport report;
    std::vector<VectorXd> means;
    State y{initial.particles(), penalty ? penalty->lambda0 : 0.0};
    Derivative k1 = f(y);

    auto record = [&](double t, const State &s, const MatrixXd &images) {
        const InverseProblem p = f.at(s.lambda);
        const VectorXd mean = column_mean(s.v);
        const MatrixXd at_mean = evaluate(p, mean, 1);
        f.evaluations += 1;
        const MatrixXd dg = centered(images, column_mean(images));
        const MatrixXd weighted = p.noise.apply_inverse(dg);
        report.times.push_back(t);
        if (penalty) report.lambda.push_back(f.effective_lambda(s.lambda));
        report.misfit.push_back(p.noise.norm_sq(at_mean.col(0) - p.data));
        report.spread.push_back(Ensemble(s.v).max_pairwise_distance());
        report.image_spread.push_back(dg.cwiseProduct(weighted).sum() / static_cast<double>(s.v.cols()));
        means.push_back(mean);
        if (hook) hook(t, f.effective_lambda(s.lambda), mean);
    };
    record(0.0, y, k1.images);

    double t = 0.0;
    double h = 0.0;
    {
        // starting step from the scaled size of state and field
        double d0 = 0.0, d1 = 0.0;
        for (Index i = 0; i < y.v.size(); ++i) {
            const double sc = options.atol + options.rtol * std::abs(y.v.data()[i]);
            d0 = std::max(d0, std::abs(y.v.data()[i]) / sc);
            d1 = std::max(d1, std::abs(k1.dv.data()[i]) / sc);
        }
        h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    }

    std::size_t next = 0;
    std::string last_failure;
    while (next < grid.size()) {
        const double target = grid[next];
        const double proposal = h;
        bool clamped = false;
        if (t + h >= target) {
            h = target - t;
            clamped = true;
        }
        // the first checkpoint sets the time scale below which steps count as underflow
        if (!(h > 16.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(t), grid.front()))) {
            std::ostringstream msg;
            msg << "integrate_eki: step size underflow at t = " << format_number(t)
                << ", h = " << format_number(h);
            if (penalty) msg << ", lambda = " << format_number(y.lambda);
            if (!report.misfit.empty()) msg << ", last misfit = " << format_number(report.misfit.back());
            if (!last_failure.empty()) msg << " (" << last_failure << ")";
            throw NumericalError(msg.str());
        }
        if (report.steps + report.rejected >= options.max_steps) {
            throw NumericalError("integrate_eki: step limit reached at t = " + format_number(t));
        }

        State y_new;
        Derivative k7;
        MatrixXd err;
        double err_lambda = 0.0;
        double norm = std::numeric_limits<double>::infinity();
        try {
            auto stage = [&](std::initializer_list<std::pair<double, const Derivative *>> terms) {
                State s{y.v, y.lambda};
                for (const auto &[a, k] : terms) {
                    s.v += (h * a) * k->dv;
                    s.lambda += h * a * k->dlambda;
                }
                return s;
            };
            const Derivative k2 = f(stage({{a21, &k1}}));
            const Derivative k3 = f(stage({{a31, &k1}, {a32, &k2}}));
            const Derivative k4 = f(stage({{a41, &k1}, {a42, &k2}, {a43, &k3}}));
            const Derivative k5 = f(stage({{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}}));
            const Derivative k6 = f(stage({{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}}));
            y_new = stage({{b1, &k1}, {b3, &k3}, {b4, &k4}, {b5, &k5}, {b6, &k6}});
            k7 = f(y_new);
            err = h * (e1 * k1.dv + e3 * k3.dv + e4 * k4.dv + e5 * k5.dv + e6 * k6.dv + e7 * k7.dv);
            err_lambda = h * (e1 * k1.dlambda + e3 * k3.dlambda + e4 * k4.dlambda + e5 * k5.dlambda +
                              e6 * k6.dlambda + e7 * k7.dlambda);
            norm = error_norm(y, y_new, err, err_lambda, options, with_lambda);
        } catch (const NumericalError &e) {
            last_failure = e.what();
            norm = std::numeric_limits<double>::infinity();
        }

        if (norm <= 1.0) {
            t = clamped ? target : t + h;
            y = std::move(y_new);
            k1 = std::move(k7);
            ++report.steps;
            const double factor = norm == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(norm, -0.2), 0.2, 5.0);
            h = clamped ? std::max(proposal, h * factor) : h * factor;
            if (clamped) {
                ++next;
                record(t, y, k1.images);
                const std::size_t n = report.times.size();
                if (options.early_exit && n >= 2 &&
                    std::abs(report.misfit[n - 1] - report.misfit[n - 2]) < options.stagnation_tol &&
                    std::abs(report.spread[n - 1] - report.spread[n - 2]) < options.stagnation_tol) {
                    report.stagnated = true;
                    break;
                }
            }
        } else {
            ++report.rejected;
            h *= std::isfinite(norm) ? std::max(0.2, 0.9 * std::pow(norm, -0.25)) : 0.25;
        }
    }

    report.means.resize(problem.input_dim, static_cast<Index>(means.size()));
    for (std::size_t i = 0; i < means.size(); ++i) report.means.col(static_cast<Index>(i)) = means[i];
    report.final_ensemble = Ensemble(y.v);
    report.evaluations = f.evaluations;
    report.saturated = penalty && y.lambda >= penalty->lambda_max;
    return report;
}

void write_report(std::ostream &out, const EkiRunReport &report) {
    out << "time\tlambda\tmisfit\tspread\timage_spread\n";
    for (std::size_t i = 0; i < report.times.size(); ++i) {
        out << format_number(report.times[i]) << '\t'
            << (report.lambda.empty() ? std::string("nan") : format_number(report.lambda[i])) << '\t'
            << format_number(report.misfit[i]) << '\t' << format_number(report.spread[i]) << '\t'
            << format_number(report.image_spread[i]) << '\n';
    }
}

void write_means(std::ostream &out, const EkiRunReport &report) {
    for (Index c = 0; c < report.means.cols(); ++c) {
        for (Index r = 0; r < report.means.rows(); ++r) {
            if (r) out << '\t';
            out << format_number(report.means(r, c));
        }
        out << '\n';
    }
}

MeanField mean_field_linear_reference(const MatrixXd &a, const MatrixXd &gamma, const MatrixXd &c0,
                                      const VectorXd &v0, const VectorXd &y, double t) {
    require(a.rows() == gamma.rows() && a.cols() == c0.rows() && v0.size() == c0.rows() &&
                y.size() == a.rows(),
            "mean_field_linear_reference: dimension mismatch");
    require(t >= 0.0, "mean_field_linear_reference: t must be >= 0");
    const Eigen::LLT<MatrixXd> g(gamma), c(c0);
    const MatrixXd gi_a = g.solve(a);
    const MatrixXd c0_inv = c.solve(MatrixXd::Identity(c0.rows(), c0.cols()));
    const MatrixXd precision = c0_inv + t * a.transpose() * gi_a;
    const Eigen::LLT<MatrixXd> p(precision);
    MeanField out;
    out.covariance = p.solve(MatrixXd::Identity(c0.rows(), c0.cols()));
    out.mean = p.solve(t * gi_a.transpose() * y + c0_inv * v0);
    return out;
}

} // namespace oseki::eki
