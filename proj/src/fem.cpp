#include "oseki/fem.hpp"

#include <cmath>
#include <limits>

namespace oseki::fem {

namespace {

using Triplet = Eigen::Triplet<double>;

SparseMatrix tridiagonal(Index n, double diag, double off) {
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(3 * n));
    for (Index i = 0; i < n; ++i) {
        t.emplace_back(i, i, diag);
        if (i + 1 < n) {
            t.emplace_back(i, i + 1, off);
            t.emplace_back(i + 1, i, off);
        }
    }
    SparseMatrix m(n, n);
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

// Degree-5 seven-point rule on the reference triangle; barycentric
// coordinates and weights summing to 1.
struct TriQuad {
    double l1, l2, l3, w;
};
constexpr TriQuad kTriRule[7] = {
    {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.225},
    {0.059715871789770, 0.470142064105115, 0.470142064105115, 0.132394152788506},
    {0.470142064105115, 0.059715871789770, 0.470142064105115, 0.132394152788506},
    {0.470142064105115, 0.470142064105115, 0.059715871789770, 0.132394152788506},
    {0.797426985353087, 0.101286507323456, 0.101286507323456, 0.125939180544827},
    {0.101286507323456, 0.797426985353087, 0.101286507323456, 0.125939180544827},
    {0.101286507323456, 0.101286507323456, 0.797426985353087, 0.125939180544827},
};

// Five-point Gauss-Legendre on [-1, 1].
constexpr double kGaussX[5] = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                               0.9061798459386640};
constexpr double kGaussW[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                               0.4786286704993665, 0.2369268850561891};

void element_matrices(const Mesh2D &mesh, std::size_t t, Eigen::Matrix3d &stiff,
                      Eigen::Matrix3d &mass) {
    const auto &tri = mesh.triangles[t];
    Eigen::Matrix<double, 3, 2> x;
    for (int k = 0; k < 3; ++k) x.row(k) = mesh.nodes.row(tri[k]);
    const double area = mesh.triangle_area(t);
    // gradients of barycentric coordinates
    Eigen::Matrix<double, 3, 2> g;
    g << x(1, 1) - x(2, 1), x(2, 0) - x(1, 0), x(2, 1) - x(0, 1), x(0, 0) - x(2, 0),
        x(0, 1) - x(1, 1), x(1, 0) - x(0, 0);
    g /= 2.0 * area;
    stiff = area * g * g.transpose();
    mass << 2, 1, 1, 1, 2, 1, 1, 1, 2;
    mass *= area / 12.0;
}

std::pair<SparseMatrix, SparseMatrix> assemble_2d(const Mesh2D &mesh) {
    const auto idx = mesh.interior_index();
    const Index n = mesh.interior_count();
    std::vector<Triplet> ks, ms;
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        Eigen::Matrix3d ke, me;
        element_matrices(mesh, t, ke, me);
        const auto &tri = mesh.triangles[t];
        for (int a = 0; a < 3; ++a) {
            const int ia = idx[static_cast<std::size_t>(tri[a])];
            if (ia < 0) continue;
            for (int b = 0; b < 3; ++b) {
                const int ib = idx[static_cast<std::size_t>(tri[b])];
                if (ib < 0) continue;
                ks.emplace_back(ia, ib, ke(a, b));
                ms.emplace_back(ia, ib, me(a, b));
            }
        }
    }
    SparseMatrix k(n, n), m(n, n);
    k.setFromTriplets(ks.begin(), ks.end());
    m.setFromTriplets(ms.begin(), ms.end());
    return {k, m};
}

} // namespace

SparseMatrix stiffness_1d(const Grid1D &grid) {
    const double h = grid.h();
    return tridiagonal(grid.interior, 2.0 / h, -1.0 / h);
}

SparseMatrix mass_1d(const Grid1D &grid) {
    const double h = grid.h();
    return tridiagonal(grid.interior, 4.0 * h / 6.0, h / 6.0);
}

SparseMatrix stiffness_2d(const Mesh2D &mesh) { return assemble_2d(mesh).first; }

SparseMatrix mass_2d(const Mesh2D &mesh) { return assemble_2d(mesh).second; }

// ---------------------------------------------------------------------------

LinearModel::LinearModel(SparseMatrix system, SparseMatrix load, MatrixXd points)
    : system_(std::move(system)), load_(std::move(load)), points_(std::move(points)) {
    require(system_.rows() == system_.cols(), "LinearModel: system matrix must be square");
    require(load_.rows() == system_.rows(), "LinearModel: load operator row mismatch");
    require(points_.rows() == system_.rows(), "LinearModel: one point per state node");
    auto factor = std::make_shared<Eigen::SimplicialLDLT<SparseMatrix>>(system_);
    if (factor->info() != Eigen::Success || !(factor->vectorD().array() > 0.0).all()) {
        throw NumericalError("LinearModel: system matrix is not SPD");
    }
    factor_ = std::move(factor);
}

VectorXd LinearModel::residual(const VectorXd &u, const VectorXd &p) const {
    require(u.size() == param_dim() && p.size() == state_dim(), "residual: dimension mismatch");
    return system_ * p - load_ * u;
}

VectorXd LinearModel::solve(const VectorXd &u) const {
    require(u.size() == param_dim(), "solve: dimension mismatch");
    const VectorXd rhs = load_ * u;
    VectorXd p = factor_->solve(rhs);
    // one step of iterative refinement keeps the residual at round-off level
    p += factor_->solve(rhs - system_ * p);
    if (factor_->info() != Eigen::Success || !p.allFinite()) {
        throw NumericalError("LinearModel: solve failed");
    }
    return p;
}

MatrixXd LinearModel::solution_matrix() const {
    const MatrixXd b = MatrixXd(load_);
    return factor_->solve(b);
}

LinearModel reaction_diffusion_1d(const Grid1D &grid) {
    require(grid.interior >= 1, "reaction_diffusion_1d: need interior nodes");
    SparseMatrix mass = mass_1d(grid);
    SparseMatrix system = stiffness_1d(grid) + mass;
    return LinearModel(std::move(system), std::move(mass), grid.interior_points());
}

LinearModel poisson_2d(const Mesh2D &mesh) {
    auto [k, m] = assemble_2d(mesh);
    return LinearModel(std::move(k), std::move(m), mesh.interior_points());
}

// ---------------------------------------------------------------------------

NonlinearDiffusion1D::NonlinearDiffusion1D(Grid1D grid, double source)
    : grid_(grid), source_(source), points_(grid.interior_points()) {
    require(grid_.interior >= 1, "NonlinearDiffusion1D: need interior nodes");
}

VectorXd NonlinearDiffusion1D::coefficients(const VectorXd &u) const {
    const Index n = grid_.interior;
    require(u.size() == n, "NonlinearDiffusion1D: dimension mismatch");
    if (!u.allFinite() || u.cwiseAbs().maxCoeff() > 700.0) {
        throw NumericalError("NonlinearDiffusion1D: exp(u) overflows (|u| > 700 or non-finite)");
    }
    VectorXd a(n + 1);
    for (Index e = 0; e <= n; ++e) {
        const double left = u[std::max<Index>(e - 1, 0)];
        const double right = u[std::min<Index>(e, n - 1)];
        a[e] = std::exp(0.5 * (left + right));
    }
    return a;
}

VectorXd NonlinearDiffusion1D::residual(const VectorXd &u, const VectorXd &p) const {
    const Index n = grid_.interior;
    require(p.size() == n, "NonlinearDiffusion1D: dimension mismatch");
    const VectorXd a = coefficients(u);
    const double h = grid_.h();
    VectorXd r(n);
    for (Index i = 0; i < n; ++i) {
        const double left = i > 0 ? p[i - 1] : 0.0;
        const double right = i + 1 < n ? p[i + 1] : 0.0;
        r[i] = (a[i] * (p[i] - left) + a[i + 1] * (p[i] - right)) / h - source_ * h;
    }
    return r;
}

VectorXd NonlinearDiffusion1D::solve(const VectorXd &u) const {
    const Index n = grid_.interior;
    const VectorXd a = coefficients(u);
    const double h = grid_.h();
    // Thomas algorithm on the SPD tridiagonal system.
    VectorXd diag(n), off(n), rhs = VectorXd::Constant(n, source_ * h);
    for (Index i = 0; i < n; ++i) {
        diag[i] = (a[i] + a[i + 1]) / h;
        off[i] = -a[i + 1] / h; // couples i and i+1
    }
    for (Index i = 1; i < n; ++i) {
        const double w = off[i - 1] / diag[i - 1];
        diag[i] -= w * off[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    VectorXd p(n);
    p[n - 1] = rhs[n - 1] / diag[n - 1];
    for (Index i = n - 2; i >= 0; --i) p[i] = (rhs[i] - off[i] * p[i + 1]) / diag[i];
    if (!p.allFinite()) throw NumericalError("NonlinearDiffusion1D: solve failed");
    return p;
}

// ---------------------------------------------------------------------------

ObservationOperator ObservationOperator::on_grid(const Grid1D &grid, const MatrixXd &points) {
    require(points.cols() == 1, "ObservationOperator: 1D points expected");
    const Index n = grid.interior;
    const double h = grid.h();
    std::vector<Triplet> full, inner;
    for (Index r = 0; r < points.rows(); ++r) {
        const double x = points(r, 0);
        require(x >= 0.0 && x <= grid.length, "ObservationOperator: point outside domain");
        Index k = std::min<Index>(static_cast<Index>(std::floor(x / h)), n);
        double w = x / h - static_cast<double>(k); // weight of node k+1
        if (w < 0.0) w = 0.0;
        if (w > 1.0) w = 1.0;
        const std::pair<Index, double> parts[2] = {{k, 1.0 - w}, {k + 1, w}};
        for (const auto &[node, weight] : parts) {
            if (weight == 0.0) continue;
            full.emplace_back(r, node, weight);
            if (node >= 1 && node <= n) inner.emplace_back(r, node - 1, weight);
        }
    }
    ObservationOperator op;
    op.points_ = points;
    op.weights_.resize(points.rows(), n + 2);
    op.weights_.setFromTriplets(full.begin(), full.end());
    op.matrix_.resize(points.rows(), n);
    op.matrix_.setFromTriplets(inner.begin(), inner.end());
    return op;
}

ObservationOperator ObservationOperator::on_mesh(const Mesh2D &mesh, const MatrixXd &points) {
    require(points.cols() == 2, "ObservationOperator: 2D points expected");
    const auto idx = mesh.interior_index();
    std::vector<Triplet> full, inner;
    for (Index r = 0; r < points.rows(); ++r) {
        const Eigen::Vector2d q = points.row(r).transpose();
        bool found = false;
        for (std::size_t t = 0; t < mesh.triangles.size() && !found; ++t) {
            const auto &tri = mesh.triangles[t];
            const Eigen::Vector2d a = mesh.nodes.row(tri[0]).transpose();
            const Eigen::Vector2d b = mesh.nodes.row(tri[1]).transpose();
            const Eigen::Vector2d c = mesh.nodes.row(tri[2]).transpose();
            const double det = (b - a).x() * (c - a).y() - (c - a).x() * (b - a).y();
            const double l1 = ((b - q).x() * (c - q).y() - (c - q).x() * (b - q).y()) / det;
            const double l2 = ((c - q).x() * (a - q).y() - (a - q).x() * (c - q).y()) / det;
            const double l3 = 1.0 - l1 - l2;
            if (l1 < -1e-12 || l2 < -1e-12 || l3 < -1e-12) continue;
            found = true;
            const double l[3] = {std::max(l1, 0.0), std::max(l2, 0.0), std::max(l3, 0.0)};
            const double sum = l[0] + l[1] + l[2];
            for (int k = 0; k < 3; ++k) {
                const double w = l[k] / sum;
                if (w == 0.0) continue;
                full.emplace_back(r, tri[k], w);
                const int ii = idx[static_cast<std::size_t>(tri[k])];
                if (ii >= 0) inner.emplace_back(r, ii, w);
            }
        }
        require(found, "ObservationOperator: point outside mesh");
    }
    ObservationOperator op;
    op.points_ = points;
    op.weights_.resize(points.rows(), mesh.node_count());
    op.weights_.setFromTriplets(full.begin(), full.end());
    op.matrix_.resize(points.rows(), mesh.interior_count());
    op.matrix_.setFromTriplets(inner.begin(), inner.end());
    return op;
}

VectorXd ObservationOperator::apply(const VectorXd &p) const {
    require(p.size() == state_dim(), "observe: dimension mismatch");
    return matrix_ * p;
}

VectorXd observe(const ObservationOperator &obs, const VectorXd &p) { return obs.apply(p); }

MatrixXd equispaced_points_1d(const Grid1D &grid, int levels) {
    require(levels >= 1, "equispaced_points_1d: levels must be positive");
    const Index count = (Index{1} << levels) - 1;
    const double denom = static_cast<double>(Index{1} << (levels + 1));
    MatrixXd pts(count, 1);
    for (Index i = 0; i < count; ++i) pts(i, 0) = static_cast<double>(i + 1) / denom * grid.length;
    return pts;
}

SyntheticData synthesize_data(const ForwardModel &model, const ObservationOperator &obs,
                              const VectorXd &truth, const MatrixXd &noise_cov, Rng &rng) {
    require(noise_cov.rows() == obs.count() && noise_cov.cols() == obs.count(),
            "synthesize_data: noise covariance dimension mismatch");
    SyntheticData out;
    out.truth_state = model.solve(truth);
    out.noiseless = obs.apply(out.truth_state);
    out.data = out.noiseless;
    if (noise_cov.cwiseAbs().maxCoeff() > 0.0) {
        Eigen::LLT<MatrixXd> llt(noise_cov);
        if (llt.info() != Eigen::Success) throw NumericalError("synthesize_data: noise covariance not SPD");
        out.data += llt.matrixL() * rng.normal_vector(obs.count());
    }
    return out;
}

double l2_error_1d(const Grid1D &grid, const VectorXd &p, const std::function<double(double)> &exact) {
    const Index n = grid.interior;
    require(p.size() == n, "l2_error_1d: dimension mismatch");
    const double h = grid.h();
    double sum = 0.0;
    for (Index e = 0; e <= n; ++e) {
        const double pl = e > 0 ? p[e - 1] : 0.0;
        const double pr = e < n ? p[e] : 0.0;
        const double x0 = grid.node(e);
        for (int q = 0; q < 5; ++q) {
            const double s = 0.5 * (kGaussX[q] + 1.0);
            const double diff = exact(x0 + s * h) - ((1.0 - s) * pl + s * pr);
            sum += 0.5 * h * kGaussW[q] * diff * diff;
        }
    }
    return std::sqrt(sum);
}

double l2_error_2d(const Mesh2D &mesh, const VectorXd &p,
                   const std::function<double(double, double)> &exact) {
    require(p.size() == mesh.interior_count(), "l2_error_2d: dimension mismatch");
    const auto idx = mesh.interior_index();
    double sum = 0.0;
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto &tri = mesh.triangles[t];
        double val[3];
        for (int k = 0; k < 3; ++k) {
            const int ii = idx[static_cast<std::size_t>(tri[k])];
            val[k] = ii >= 0 ? p[ii] : 0.0;
        }
        const double area = mesh.triangle_area(t);
        for (const auto &q : kTriRule) {
            const double x = q.l1 * mesh.nodes(tri[0], 0) + q.l2 * mesh.nodes(tri[1], 0) +
                             q.l3 * mesh.nodes(tri[2], 0);
            const double y = q.l1 * mesh.nodes(tri[0], 1) + q.l2 * mesh.nodes(tri[1], 1) +
                             q.l3 * mesh.nodes(tri[2], 1);
            const double diff = exact(x, y) - (q.l1 * val[0] + q.l2 * val[1] + q.l3 * val[2]);
            sum += area * q.w * diff * diff;
        }
    }
    return std::sqrt(sum);
}

// ---------------------------------------------------------------------------

double sine_mode_1d(const Grid1D &grid, Index k, Index i) {
    constexpr double pi = 3.14159265358979323846;
    return std::sqrt(2.0 / grid.length) *
           std::sin(static_cast<double>(k) * pi * grid.node(i + 1) / grid.length);
}

GaussianPrior sine_prior_1d(const Grid1D &grid, double beta, double nu) {
    require(beta > 0.0 && nu > 0.0, "sine_prior_1d: beta and nu must be positive");
    constexpr double pi = 3.14159265358979323846;
    const Index n = grid.interior;
    const double h = grid.h();
    MatrixXd vecs(n, n);
    VectorXd vals(n);
    for (Index k = 1; k <= n; ++k) {
        for (Index i = 0; i < n; ++i) vecs(i, k - 1) = std::sqrt(h) * sine_mode_1d(grid, k, i);
        const double mu = std::pow(static_cast<double>(k) * pi / grid.length, 2.0);
        vals[k - 1] = beta * std::pow(mu, -nu) / h;
    }
    return GaussianPrior(VectorXd::Zero(n), std::move(vals), std::move(vecs));
}

GaussianPrior laplacian_prior_2d(const Mesh2D &mesh, double beta, double nu, double tau) {
    require(beta > 0.0 && nu > 0.0 && tau >= 0.0, "laplacian_prior_2d: invalid parameters");
    auto [k, m] = assemble_2d(mesh);
    const MatrixXd kd(k), md(m);
    Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> eig(kd, md);
    if (eig.info() != Eigen::Success) throw NumericalError("laplacian_prior_2d: eigensolver failed");
    const VectorXd lambda =
        (beta * (tau + eig.eigenvalues().array()).pow(-nu)).matrix();
    const MatrixXd &phi = eig.eigenvectors(); // phi^T M phi = I
    const MatrixXd cov = phi * lambda.asDiagonal() * phi.transpose();
    return GaussianPrior::from_covariance(VectorXd::Zero(mesh.interior_count()), cov);
}

} // namespace oseki::fem
