#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace oseki {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Thrown on inconsistent sizes, invalid arguments or invalid configuration.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown when a numerical procedure fails (non-finite values, failed
/// factorizations, step size underflow, ...).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid experiment configuration (unknown keys, bad values, unsupported
/// method/model combinations).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// File could not be opened, read or written.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void require(bool condition, const std::string &message);

/// Decimal text with 17 significant digits (exact round trip).
std::string format_number(double x);

/// Calls body(i) for i in [0, count) on up to `workers` threads. Each index is
/// handled by exactly one call; the first exception is rethrown after join.
void parallel_for(Index count, int workers, const std::function<void(Index)> &body);

/**
 * Seedable, splittable random source.
 *
 * Child streams are derived from the parent seed and a stream id through
 * SplitMix64, so `Rng(s).split(k)` is the same generator on every run
 * regardless of how much the parent has been used.
 */
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t seed() const { return seed_; }
    Rng split(std::uint64_t stream) const;

    double normal();
    double uniform(); // [0, 1)
    VectorXd normal_vector(Index n);

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

std::uint64_t splitmix64(std::uint64_t x);

/// SPD matrix A defining ||x||_A^2 = x^T A^{-1} x.
class WeightedMetric {
public:
    explicit WeightedMetric(MatrixXd a);

    Index dim() const { return a_.rows(); }
    const MatrixXd &matrix() const { return a_; }
    /// A^{-1} x through the Cholesky factor.
    VectorXd solve(const VectorXd &x) const;
    double norm_sq(const VectorXd &x) const;

private:
    MatrixXd a_;
    Eigen::LLT<MatrixXd> llt_;
};

double weighted_norm_sq(const VectorXd &x, const WeightedMetric &metric);

/**
 * Gaussian measure N(mean, C) with C given by its eigenpairs,
 * C = sum_k eigenvalues[k] * e_k e_k^T, eigenvectors stored column-wise and
 * sorted by nonincreasing eigenvalue.
 */
class GaussianPrior {
public:
    GaussianPrior(VectorXd mean, VectorXd eigenvalues, MatrixXd eigenvectors);

    /// Eigen-decomposes an SPD covariance matrix.
    static GaussianPrior from_covariance(VectorXd mean, const MatrixXd &covariance);

    /// Zero-covariance prior; sampling returns the mean. Test use only.
    static GaussianPrior degenerate(VectorXd mean);

    Index dim() const { return mean_.size(); }
    const VectorXd &mean() const { return mean_; }
    const VectorXd &eigenvalues() const { return eigenvalues_; }
    const MatrixXd &eigenvectors() const { return eigenvectors_; }

    MatrixXd covariance() const;
    VectorXd apply_covariance(const VectorXd &x) const;
    VectorXd apply_inverse(const VectorXd &x) const;
    /// x^T C^{-1} x.
    double norm_sq(const VectorXd &x) const;

    GaussianPrior with_mean(VectorXd mean) const;

private:
    VectorXd mean_;
    VectorXd eigenvalues_;
    MatrixXd eigenvectors_;
    bool degenerate_ = false;
};

std::vector<VectorXd> prior_sample(const GaussianPrior &prior, Index count, Rng &rng);

/// J particles of equal dimension, stored as the columns of a matrix.
class Ensemble {
public:
    explicit Ensemble(MatrixXd particles);
    static Ensemble from_vectors(const std::vector<VectorXd> &particles);

    Index size() const { return particles_.cols(); }
    Index dim() const { return particles_.rows(); }
    const MatrixXd &particles() const { return particles_; }
    MatrixXd &particles() { return particles_; }
    auto particle(Index j) const { return particles_.col(j); }

    VectorXd mean() const;
    /// Empirical covariance with 1/J normalization (the one the updates use).
    MatrixXd covariance() const;
    /// 1/(J-1) normalized covariance; diagnostic only.
    MatrixXd unbiased_covariance() const;
    double max_pairwise_distance() const;

private:
    MatrixXd particles_;
};

struct EmpiricalStats {
    VectorXd mean;       // v bar
    VectorXd image_mean; // G bar
    MatrixXd cross_cov;  // C^{v,y}, n_v x n_y
    MatrixXd image_cov;  // C^{y,y}, n_y x n_y
};

/// `images` holds G(v^(j)) column-wise.
EmpiricalStats empirical_stats(const Ensemble &ensemble, const MatrixXd &images);

/// Column j minus row mean; fixed summation order so results are reproducible.
MatrixXd centered(const MatrixXd &columns, const VectorXd &mean);
VectorXd column_mean(const MatrixXd &columns);

} // namespace oseki
