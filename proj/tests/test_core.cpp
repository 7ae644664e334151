#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oseki/core.hpp"
#include "oseki/fem.hpp"

using namespace oseki;

namespace {

MatrixXd random_orthogonal(Index n, Rng &rng) {
    MatrixXd a(n, n);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) a(i, j) = rng.normal();
    Eigen::HouseholderQR<MatrixXd> qr(a);
    return qr.householderQ() * MatrixXd::Identity(n, n);
}

MatrixXd random_spd(Index n, Rng &rng) {
    MatrixXd a(n, n);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) a(i, j) = rng.normal();
    return a * a.transpose() + static_cast<double>(n) * MatrixXd::Identity(n, n);
}

} // namespace

TEST_CASE("weighted_norm_sq examples") {
    const WeightedMetric four(MatrixXd::Constant(1, 1, 4.0));
    CHECK(weighted_norm_sq(VectorXd::Constant(1, 2.0), four) == doctest::Approx(1.0).epsilon(1e-15));

    Rng rng(1);
    const WeightedMetric any(random_spd(4, rng));
    CHECK(weighted_norm_sq(VectorXd::Zero(4), any) == 0.0);

    const WeightedMetric identity(MatrixXd::Identity(5, 5));
    const VectorXd x = rng.normal_vector(5);
    CHECK(weighted_norm_sq(x, identity) == doctest::Approx(x.squaredNorm()).epsilon(1e-14));
}

TEST_CASE("weighted_norm_sq errors") {
    const WeightedMetric identity(MatrixXd::Identity(3, 3));
    CHECK_THROWS_AS(weighted_norm_sq(VectorXd::Zero(2), identity), InvalidArgument);

    MatrixXd indefinite = MatrixXd::Identity(2, 2);
    indefinite(1, 1) = -1.0;
    CHECK_THROWS_AS(WeightedMetric{indefinite}, NumericalError);

    MatrixXd skew = MatrixXd::Identity(2, 2);
    skew(0, 1) = 0.5;
    CHECK_THROWS_AS(WeightedMetric{skew}, InvalidArgument);
}

TEST_CASE("weighted_norm_sq is invariant under orthogonal change of basis") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const Index n = 2 + trial % 6;
        const MatrixXd a = random_spd(n, rng);
        const MatrixXd q = random_orthogonal(n, rng);
        MatrixXd rotated = q * a * q.transpose();
        rotated = 0.5 * (rotated + rotated.transpose());
        const VectorXd x = rng.normal_vector(n);
        const double lhs = weighted_norm_sq(x, WeightedMetric(a));
        const double rhs = weighted_norm_sq(q * x, WeightedMetric(rotated));
        CHECK(std::abs(lhs - rhs) <= 1e-10 * std::abs(lhs));
    }
}

TEST_CASE("GaussianPrior validates its eigenbasis") {
    CHECK_THROWS_AS(GaussianPrior(VectorXd::Zero(2), VectorXd::Ones(2), MatrixXd::Ones(2, 2)),
                    InvalidArgument);
    VectorXd vals(2);
    vals << 1.0, -1.0;
    CHECK_THROWS_AS(GaussianPrior(VectorXd::Zero(2), vals, MatrixXd::Identity(2, 2)), InvalidArgument);

    VectorXd unsorted(3);
    unsorted << 1.0, 3.0, 2.0;
    const GaussianPrior prior(VectorXd::Zero(3), unsorted, MatrixXd::Identity(3, 3));
    CHECK(prior.eigenvalues()[0] == 3.0);
    CHECK(prior.eigenvalues()[2] == 1.0);
    CHECK(prior.eigenvectors()(1, 0) == 1.0);
}

TEST_CASE("prior_sample with zero covariance returns the mean") {
    VectorXd mean(3);
    mean << 1.0, -2.0, 0.5;
    const GaussianPrior prior = GaussianPrior::degenerate(mean);
    Rng rng(3);
    for (const auto &s : prior_sample(prior, 5, rng)) CHECK(s == mean);
}

TEST_CASE("prior_sample is reproducible for a fixed seed") {
    const fem::Grid1D grid{16};
    const GaussianPrior prior = fem::sine_prior_1d(grid, 5.0, 1.5);
    Rng a(42), b(42);
    const auto sa = prior_sample(prior, 10, a);
    const auto sb = prior_sample(prior, 10, b);
    for (std::size_t i = 0; i < sa.size(); ++i) CHECK(sa[i] == sb[i]);
    Rng c(43);
    CHECK(prior_sample(prior, 1, c)[0] != sa[0]);
}

TEST_CASE("sine prior mode variances match beta k^(-2 nu)") {
    // Monte-Carlo oracle: the coefficient of the L2 eigenfunction phi_k,
    // c_k = h * sum_i u_i phi_k(x_i), has variance beta k^(-3) on (0, pi).
    const fem::Grid1D grid{64};
    const GaussianPrior prior = fem::sine_prior_1d(grid, 5.0, 1.5);
    Rng rng(2021);
    constexpr Index samples = 100000;
    const auto draws = prior_sample(prior, samples, rng);
    for (Index k = 1; k <= 5; ++k) {
        VectorXd phi(grid.interior);
        for (Index i = 0; i < grid.interior; ++i) phi[i] = fem::sine_mode_1d(grid, k, i);
        double sum = 0.0, sum_sq = 0.0;
        for (const auto &u : draws) {
            const double c = grid.h() * phi.dot(u);
            sum += c;
            sum_sq += c * c;
        }
        const double mean = sum / samples;
        const double var = sum_sq / samples - mean * mean;
        const double expected = 5.0 * std::pow(static_cast<double>(k), -3.0);
        CHECK(std::abs(var - expected) <= 0.05 * expected);
    }
}

TEST_CASE("empirical covariance of prior samples converges at the statistical rate") {
    Rng rng(99);
    const MatrixXd cov = random_spd(5, rng) / 5.0;
    VectorXd mean(5);
    mean << 1, 2, 3, 4, 5;
    const GaussianPrior prior = GaussianPrior::from_covariance(mean, cov);
    CHECK((prior.covariance() - cov).norm() <= 1e-12 * cov.norm());

    constexpr Index samples = 100000;
    const auto draws = prior_sample(prior, samples, rng);
    MatrixXd emp = MatrixXd::Zero(5, 5);
    for (const auto &d : draws) emp += (d - mean) * (d - mean).transpose();
    emp /= static_cast<double>(samples);
    // E ||C_hat - C||_F^2 = (||C||_F^2 + tr(C)^2) / N for Gaussian samples.
    const double rate = std::sqrt((cov.squaredNorm() + cov.trace() * cov.trace()) / samples);
    CHECK((emp - cov).norm() <= 3.0 * rate);
}

TEST_CASE("GaussianPrior inverse and norm agree with the dense covariance") {
    Rng rng(5);
    const MatrixXd cov = random_spd(6, rng);
    const GaussianPrior prior = GaussianPrior::from_covariance(VectorXd::Zero(6), cov);
    const VectorXd x = rng.normal_vector(6);
    const VectorXd direct = cov.llt().solve(x);
    CHECK((prior.apply_inverse(x) - direct).norm() <= 1e-10 * direct.norm());
    CHECK(prior.norm_sq(x) == doctest::Approx(x.dot(direct)).epsilon(1e-10));
    CHECK((prior.apply_covariance(x) - cov * x).norm() <= 1e-10 * (cov * x).norm());
}

TEST_CASE("empirical_stats examples") {
    SUBCASE("identical particles have zero covariances") {
        const Ensemble ens(MatrixXd::Constant(3, 4, 2.5));
        MatrixXd images = MatrixXd::Constant(2, 4, -1.0);
        const auto s = empirical_stats(ens, images);
        CHECK(s.cross_cov.cwiseAbs().maxCoeff() == 0.0);
        CHECK(s.image_cov.cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("two scalar particles, 1/J normalization") {
        MatrixXd v(1, 2);
        v << 0.0, 2.0;
        const auto s = empirical_stats(Ensemble(v), v);
        CHECK(s.mean[0] == 1.0);
        CHECK(s.cross_cov(0, 0) == 1.0);
        CHECK(s.image_cov(0, 0) == 1.0);
        // the diagnostic covariance uses 1/(J-1)
        CHECK(Ensemble(v).unbiased_covariance()(0, 0) == 2.0);
    }
    SUBCASE("a single particle is rejected") {
        CHECK_THROWS_AS(empirical_stats(Ensemble(MatrixXd::Ones(2, 1)), MatrixXd::Ones(2, 1)),
                        InvalidArgument);
    }
}

TEST_CASE("empirical_stats properties on random ensembles") {
    Rng rng(11);
    for (int trial = 0; trial < 25; ++trial) {
        const Index n = 3 + trial % 4, m = 2 + trial % 5, J = 2 + trial % 7;
        MatrixXd v(n, J), g(m, J);
        for (Index j = 0; j < J; ++j) {
            v.col(j) = rng.normal_vector(n);
            g.col(j) = rng.normal_vector(m);
        }
        const auto s = empirical_stats(Ensemble(v), g);

        // C^{y,y} symmetric PSD with rank <= J-1
        CHECK((s.image_cov - s.image_cov.transpose()).cwiseAbs().maxCoeff() <= 1e-14);
        Eigen::SelfAdjointEigenSolver<MatrixXd> eig(s.image_cov);
        const double top = eig.eigenvalues().maxCoeff();
        CHECK(eig.eigenvalues().minCoeff() >= -1e-12 * std::max(top, 1.0));
        const Index rank = (eig.eigenvalues().array() > 1e-10 * std::max(top, 1.0)).count();
        CHECK(rank <= J - 1);

        // C^{y,v} is the transpose of C^{v,y}: both come from one product
        const MatrixXd dv = centered(v, s.mean), dg = centered(g, s.image_mean);
        const MatrixXd cyv = dg * dv.transpose() / static_cast<double>(J);
        CHECK((cyv - s.cross_cov.transpose()).cwiseAbs().maxCoeff() <= 1e-14);

        // invariance under particle permutation
        std::vector<Index> perm(static_cast<std::size_t>(J));
        std::iota(perm.begin(), perm.end(), Index{0});
        std::reverse(perm.begin(), perm.end());
        MatrixXd vp(n, J), gp(m, J);
        for (Index j = 0; j < J; ++j) {
            vp.col(j) = v.col(perm[static_cast<std::size_t>(j)]);
            gp.col(j) = g.col(perm[static_cast<std::size_t>(j)]);
        }
        const auto sp = empirical_stats(Ensemble(vp), gp);
        CHECK((sp.cross_cov - s.cross_cov).cwiseAbs().maxCoeff() <= 1e-13);
        CHECK((sp.image_cov - s.image_cov).cwiseAbs().maxCoeff() <= 1e-13);
        CHECK((sp.mean - s.mean).cwiseAbs().maxCoeff() <= 1e-14);
    }
}

TEST_CASE("Ensemble mean is the arithmetic average") {
    MatrixXd v(2, 3);
    v << 1, 2, 3, -3, 0, 6;
    const Ensemble ens(v);
    CHECK(ens.mean()[0] == 2.0);
    CHECK(ens.mean()[1] == 1.0);
    CHECK(ens.max_pairwise_distance() == doctest::Approx(std::sqrt(4.0 + 81.0)));
    CHECK_THROWS_AS(Ensemble::from_vectors({VectorXd::Zero(2), VectorXd::Zero(3)}), InvalidArgument);
}

TEST_CASE("Rng streams split deterministically") {
    const Rng root(123);
    Rng a = root.split(1), b = root.split(1), c = root.split(2);
    const double x = a.normal();
    CHECK(x == b.normal());
    CHECK(x != c.normal());
}
