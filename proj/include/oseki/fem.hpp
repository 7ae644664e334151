#pragma once

#include <functional>
#include <memory>

#include <Eigen/Sparse>

#include "oseki/core.hpp"
#include "oseki/mesh.hpp"

namespace oseki::fem {

using SparseMatrix = Eigen::SparseMatrix<double>;

/**
 * Discretized forward model M(u, p) = 0 on interior nodal vectors.
 *
 * u (parameter) and p (state) both live on the interior nodes; the residual
 * has one row per interior test function. Implementations are immutable after
 * construction and safe to call from several threads.
 */
class ForwardModel {
public:
    virtual ~ForwardModel() = default;

    virtual Index param_dim() const = 0;
    virtual Index state_dim() const = 0;
    virtual Index residual_dim() const { return state_dim(); }
    /// Interior node coordinates (state_dim x spatial dim).
    virtual const MatrixXd &state_points() const = 0;

    virtual VectorXd residual(const VectorXd &u, const VectorXd &p) const = 0;
    /// Solution operator S(u).
    virtual VectorXd solve(const VectorXd &u) const = 0;

    virtual bool is_linear() const { return false; }
};

/**
 * Linear model M(u, p) = A p - B u with SPD A. Covers the 1D
 * reaction-diffusion problem (A = K + M) and the 2D Poisson problem (A = K),
 * both with consistent-mass load B = M.
 */
class LinearModel : public ForwardModel {
public:
    LinearModel(SparseMatrix system, SparseMatrix load, MatrixXd points);

    Index param_dim() const override { return load_.cols(); }
    Index state_dim() const override { return system_.rows(); }
    const MatrixXd &state_points() const override { return points_; }

    VectorXd residual(const VectorXd &u, const VectorXd &p) const override;
    VectorXd solve(const VectorXd &u) const override;
    bool is_linear() const override { return true; }

    const SparseMatrix &system() const { return system_; }
    const SparseMatrix &load() const { return load_; }
    /// Dense S = A^{-1} B.
    MatrixXd solution_matrix() const;

private:
    SparseMatrix system_;
    SparseMatrix load_;
    MatrixXd points_;
    std::shared_ptr<const Eigen::SimplicialLDLT<SparseMatrix>> factor_;
};

/// -p'' + p = u on (0, L), p = 0 at both ends.
LinearModel reaction_diffusion_1d(const Grid1D &grid);
/// -Laplace p = u on the mesh domain, p = 0 on boundary nodes.
LinearModel poisson_2d(const Mesh2D &mesh);

/**
 * -(exp(u) p')' = source on (0, L), p = 0 at both ends.
 *
 * The coefficient on each element is exp of the midpoint value of the
 * piecewise-linear interpolant of u; u is extended to the boundary nodes by
 * its neighbouring interior value.
 */
class NonlinearDiffusion1D : public ForwardModel {
public:
    explicit NonlinearDiffusion1D(Grid1D grid, double source = 10.0);

    Index param_dim() const override { return grid_.interior; }
    Index state_dim() const override { return grid_.interior; }
    const MatrixXd &state_points() const override { return points_; }

    VectorXd residual(const VectorXd &u, const VectorXd &p) const override;
    VectorXd solve(const VectorXd &u) const override;

    /// Element coefficients exp(u_mid), interior+1 entries.
    VectorXd coefficients(const VectorXd &u) const;

private:
    Grid1D grid_;
    double source_;
    MatrixXd points_;
};

/// Stiffness / mass on interior nodes of a 1D grid.
SparseMatrix stiffness_1d(const Grid1D &grid);
SparseMatrix mass_1d(const Grid1D &grid);
/// Stiffness / mass on interior nodes of a triangle mesh, interior ordering.
SparseMatrix stiffness_2d(const Mesh2D &mesh);
SparseMatrix mass_2d(const Mesh2D &mesh);

/**
 * Linear interpolation of nodal values at observation points.
 *
 * `weights()` acts on all nodes (boundary included) and has rows summing to 1;
 * `matrix()` is its restriction to interior nodes, valid because the state
 * vanishes on the boundary.
 */
class ObservationOperator {
public:
    static ObservationOperator on_grid(const Grid1D &grid, const MatrixXd &points);
    static ObservationOperator on_mesh(const Mesh2D &mesh, const MatrixXd &points);

    Index count() const { return matrix_.rows(); }
    Index state_dim() const { return matrix_.cols(); }
    const MatrixXd &points() const { return points_; }
    const SparseMatrix &weights() const { return weights_; }
    const SparseMatrix &matrix() const { return matrix_; }

    VectorXd apply(const VectorXd &p) const;

private:
    MatrixXd points_;
    SparseMatrix weights_;
    SparseMatrix matrix_;
};

VectorXd observe(const ObservationOperator &obs, const VectorXd &p);

/// Points x_i = i * L / 2^(levels+1), i = 1 .. 2^levels - 1 (n_y = 7 for levels = 3).
MatrixXd equispaced_points_1d(const Grid1D &grid, int levels);

struct SyntheticData {
    VectorXd truth_state; // S(u_true)
    VectorXd noiseless;   // O(S(u_true))
    VectorXd data;        // noiseless + eta
};

/// y = O(S(u_true)) + eta, eta ~ N(0, noise_cov). A zero covariance gives
/// noiseless data.
SyntheticData synthesize_data(const ForwardModel &model, const ObservationOperator &obs,
                              const VectorXd &truth, const MatrixXd &noise_cov, Rng &rng);

/// L2(0, L) error between the P1 interpolant of interior values and `exact`.
double l2_error_1d(const Grid1D &grid, const VectorXd &p,
                   const std::function<double(double)> &exact);
/// L2 error on a triangle mesh (boundary values taken as zero).
double l2_error_2d(const Mesh2D &mesh, const VectorXd &p,
                   const std::function<double(double, double)> &exact);

/**
 * Prior N(0, beta (-d^2/dx^2)^(-nu)) on the interior nodes of a 1D grid.
 *
 * Built from the L2-orthonormal Dirichlet eigenfunctions
 * phi_k(x) = sqrt(2/L) sin(k pi x / L) evaluated at the nodes, with exact
 * eigenvalues beta (k pi / L)^(-2 nu). The nodal covariance is
 * sum_k lambda_k phi_k phi_k^T; the nodal vectors sqrt(h) phi_k are
 * orthonormal, so the stored eigenvalues are lambda_k / h.
 */
GaussianPrior sine_prior_1d(const Grid1D &grid, double beta, double nu);

/// Nodal value of phi_k at interior node i (0-based).
double sine_mode_1d(const Grid1D &grid, Index k, Index i);

/**
 * Prior N(0, beta (tau I - Laplace)^(-nu)) on the interior nodes of a mesh,
 * from the generalized eigenproblem K phi = mu M phi with M-orthonormal phi.
 */
GaussianPrior laplacian_prior_2d(const Mesh2D &mesh, double beta, double nu, double tau);

} // namespace oseki::fem
