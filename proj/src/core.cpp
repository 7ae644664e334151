#include "oseki/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

namespace oseki {

void require(bool condition, const std::string &message) {
    if (!condition) throw InvalidArgument(message);
}

std::string format_number(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void parallel_for(Index count, int workers, const std::function<void(Index)> &body) {
    const Index threads = std::min<Index>(std::max(workers, 1), count);
    if (threads <= 1) {
        for (Index i = 0; i < count; ++i) body(i);
        return;
    }
    std::exception_ptr failure;
    std::mutex mutex;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (Index t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            // static interleaved partition: index i always runs on thread i % threads
            for (Index i = t; i < count; i += threads) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(mutex);
                    if (!failure) failure = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto &th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

Rng Rng::split(std::uint64_t stream) const {
    return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x632be59bd9b4e019ULL)));
}

double Rng::normal() { return normal_(engine_); }

double Rng::uniform() { return uniform_(engine_); }

VectorXd Rng::normal_vector(Index n) {
    VectorXd out(n);
    for (Index i = 0; i < n; ++i) out[i] = normal();
    return out;
}

// ---------------------------------------------------------------------------

WeightedMetric::WeightedMetric(MatrixXd a) : a_(std::move(a)) {
    require(a_.rows() == a_.cols(), "WeightedMetric: matrix must be square");
    for (Index i = 0; i < a_.rows(); ++i) {
        for (Index j = i + 1; j < a_.cols(); ++j) {
            const double scale = std::max(std::abs(a_(i, j)), std::abs(a_(j, i)));
            require(std::abs(a_(i, j) - a_(j, i)) <= 1e-12 * scale,
                    "WeightedMetric: matrix is not symmetric");
        }
    }
    llt_.compute(a_);
    if (llt_.info() != Eigen::Success) {
        throw NumericalError("WeightedMetric: matrix is not positive definite");
    }
    // LLT only looks at the lower triangle and accepts tiny negative pivots
    // as long as they are not exactly zero or NaN.
    const VectorXd diag = MatrixXd(llt_.matrixL()).diagonal();
    if (!(diag.array() > 0.0).all() || !diag.allFinite()) {
        throw NumericalError("WeightedMetric: matrix is not positive definite");
    }
}

VectorXd WeightedMetric::solve(const VectorXd &x) const {
    require(x.size() == dim(), "WeightedMetric: dimension mismatch");
    return llt_.solve(x);
}

double WeightedMetric::norm_sq(const VectorXd &x) const {
    require(x.size() == dim(), "WeightedMetric: dimension mismatch");
    // ||L^{-1} x||^2 = x^T A^{-1} x
    return llt_.matrixL().solve(x).squaredNorm();
}

double weighted_norm_sq(const VectorXd &x, const WeightedMetric &metric) {
    require(x.size() == metric.dim(), "weighted_norm_sq: dimension mismatch");
    return metric.norm_sq(x);
}

// ---------------------------------------------------------------------------

GaussianPrior::GaussianPrior(VectorXd mean, VectorXd eigenvalues, MatrixXd eigenvectors)
    : mean_(std::move(mean)), eigenvalues_(std::move(eigenvalues)),
      eigenvectors_(std::move(eigenvectors)) {
    const Index n = mean_.size();
    require(n > 0, "GaussianPrior: empty mean");
    require(eigenvalues_.size() == n && eigenvectors_.rows() == n && eigenvectors_.cols() == n,
            "GaussianPrior: eigenpairs must form a full n x n basis");
    require((eigenvalues_.array() > 0.0).all() && eigenvalues_.allFinite(),
            "GaussianPrior: eigenvalues must be positive");
    const double ortho = (eigenvectors_.transpose() * eigenvectors_ - MatrixXd::Identity(n, n))
                             .cwiseAbs()
                             .maxCoeff();
    require(ortho <= 1e-10, "GaussianPrior: eigenvectors are not orthonormal");

    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return eigenvalues_[a] > eigenvalues_[b]; });
    VectorXd vals(n);
    MatrixXd vecs(n, n);
    for (Index k = 0; k < n; ++k) {
        vals[k] = eigenvalues_[order[static_cast<std::size_t>(k)]];
        vecs.col(k) = eigenvectors_.col(order[static_cast<std::size_t>(k)]);
    }
    eigenvalues_ = std::move(vals);
    eigenvectors_ = std::move(vecs);
}

GaussianPrior GaussianPrior::from_covariance(VectorXd mean, const MatrixXd &covariance) {
    require(covariance.rows() == mean.size() && covariance.cols() == mean.size(),
            "GaussianPrior: covariance dimension mismatch");
    const MatrixXd sym = 0.5 * (covariance + covariance.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sym);
    if (eig.info() != Eigen::Success) throw NumericalError("GaussianPrior: eigensolver failed");
    return GaussianPrior(std::move(mean), eig.eigenvalues(), eig.eigenvectors());
}

GaussianPrior GaussianPrior::degenerate(VectorXd mean) {
    const Index n = mean.size();
    GaussianPrior prior(std::move(mean), VectorXd::Ones(n), MatrixXd::Identity(n, n));
    prior.eigenvalues_.setZero();
    prior.degenerate_ = true;
    return prior;
}

MatrixXd GaussianPrior::covariance() const {
    return eigenvectors_ * eigenvalues_.asDiagonal() * eigenvectors_.transpose();
}

VectorXd GaussianPrior::apply_covariance(const VectorXd &x) const {
    require(x.size() == dim(), "GaussianPrior: dimension mismatch");
    const VectorXd coeffs = eigenvectors_.transpose() * x;
    return eigenvectors_ * eigenvalues_.cwiseProduct(coeffs);
}

VectorXd GaussianPrior::apply_inverse(const VectorXd &x) const {
    require(x.size() == dim(), "GaussianPrior: dimension mismatch");
    if (degenerate_) throw NumericalError("GaussianPrior: degenerate covariance is not invertible");
    const VectorXd coeffs = eigenvectors_.transpose() * x;
    return eigenvectors_ * coeffs.cwiseQuotient(eigenvalues_);
}

double GaussianPrior::norm_sq(const VectorXd &x) const {
    require(x.size() == dim(), "GaussianPrior: dimension mismatch");
    if (degenerate_) throw NumericalError("GaussianPrior: degenerate covariance is not invertible");
    const VectorXd coeffs = eigenvectors_.transpose() * x;
    return (coeffs.array().square() / eigenvalues_.array()).sum();
}

GaussianPrior GaussianPrior::with_mean(VectorXd mean) const {
    require(mean.size() == dim(), "GaussianPrior: dimension mismatch");
    GaussianPrior out = *this;
    out.mean_ = std::move(mean);
    return out;
}

std::vector<VectorXd> prior_sample(const GaussianPrior &prior, Index count, Rng &rng) {
    require(count >= 1, "prior_sample: count must be positive");
    const VectorXd scales = prior.eigenvalues().cwiseSqrt();
    std::vector<VectorXd> samples;
    samples.reserve(static_cast<std::size_t>(count));
    for (Index s = 0; s < count; ++s) {
        const VectorXd xi = rng.normal_vector(prior.dim());
        samples.push_back(prior.mean() + prior.eigenvectors() * scales.cwiseProduct(xi));
    }
    return samples;
}

// ---------------------------------------------------------------------------

VectorXd column_mean(const MatrixXd &columns) {
    VectorXd sum = VectorXd::Zero(columns.rows());
    for (Index j = 0; j < columns.cols(); ++j) sum += columns.col(j);
    return sum / static_cast<double>(columns.cols());
}

MatrixXd centered(const MatrixXd &columns, const VectorXd &mean) {
    return columns.colwise() - mean;
}

Ensemble::Ensemble(MatrixXd particles) : particles_(std::move(particles)) {
    require(particles_.cols() >= 1 && particles_.rows() >= 1, "Ensemble: empty ensemble");
}

Ensemble Ensemble::from_vectors(const std::vector<VectorXd> &particles) {
    require(!particles.empty(), "Ensemble: empty ensemble");
    const Index n = particles.front().size();
    MatrixXd m(n, static_cast<Index>(particles.size()));
    for (std::size_t j = 0; j < particles.size(); ++j) {
        require(particles[j].size() == n, "Ensemble: particles must have identical dimension");
        m.col(static_cast<Index>(j)) = particles[j];
    }
    return Ensemble(std::move(m));
}

VectorXd Ensemble::mean() const { return column_mean(particles_); }

MatrixXd Ensemble::covariance() const {
    const MatrixXd dev = centered(particles_, mean());
    return dev * dev.transpose() / static_cast<double>(size());
}

MatrixXd Ensemble::unbiased_covariance() const {
    require(size() >= 2, "Ensemble: unbiased covariance needs J >= 2");
    const MatrixXd dev = centered(particles_, mean());
    return dev * dev.transpose() / static_cast<double>(size() - 1);
}

double Ensemble::max_pairwise_distance() const {
    double best = 0.0;
    for (Index i = 0; i < size(); ++i) {
        for (Index j = i + 1; j < size(); ++j) {
            best = std::max(best, (particles_.col(i) - particles_.col(j)).squaredNorm());
        }
    }
    return std::sqrt(best);
}

EmpiricalStats empirical_stats(const Ensemble &ensemble, const MatrixXd &images) {
    const Index J = ensemble.size();
    require(J >= 2, "empirical_stats: need at least two particles");
    require(images.cols() == J, "empirical_stats: one image per particle required");

    EmpiricalStats s;
    s.mean = ensemble.mean();
    s.image_mean = column_mean(images);
    const MatrixXd dv = centered(ensemble.particles(), s.mean);
    const MatrixXd dg = centered(images, s.image_mean);
    const double inv_j = 1.0 / static_cast<double>(J);
    s.cross_cov = inv_j * (dv * dg.transpose());
    s.image_cov = inv_j * (dg * dg.transpose());
    return s;
}

} // namespace oseki
