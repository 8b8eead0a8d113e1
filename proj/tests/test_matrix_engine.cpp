#include <doctest.h>

#include <cmath>
#include <random>

#include "omega_map/matrix_engine.hpp"
#include "omega_map/model.hpp"
#include "omega_map/scale_classic.hpp"
#include "test_support.hpp"

using namespace omap;

TEST_CASE("scalar quadratic gives the stable root") {
    Matrix a2(1, 1), a1(1, 1), a0(1, 1);
    a2 << 0.5;
    a1 << 0.0;
    a0 << -0.5;
    Matrix lam = solve_quadratic_stable({a2, a1, a0});
    CHECK(lam(0, 0) == doctest::Approx(-1.0));
}

TEST_CASE("scalar solvents match the closed-form first-passage rates") {
    const double mu = 0.7, q = 0.3, sigma = 1.0;
    MapModel m = omap::testing::scalar_model(sigma, mu);
    LambdaPair p = lambda_pair(m, q);
    const double rho2 = std::sqrt(mu * mu + 2.0 * q) - mu;
    const double rho1 = std::sqrt(mu * mu + 2.0 * q) + mu;
    CHECK(p.lam_plus(0, 0) == doctest::Approx(-rho2).epsilon(1e-10));
    CHECK(p.lam_minus(0, 0) == doctest::Approx(-rho1).epsilon(1e-10));
}

TEST_CASE("figure-1 solvent matches the explicit zero-drift display") {
    // With zero drift the solvent squares to diag(2/sigma^2)(qI - Q); the
    // explicit 2x2 form is -(A + a1 a2 I)/(a1 + a2) for A that square.
    MapModel m = omap::testing::fig1_model();
    const double q = 0.05;
    LambdaPair p = lambda_pair(m, q);
    CHECK((p.lam_plus - p.lam_minus).norm() < 1e-9);

    Matrix a = Vector((2.0 / m.sigma2().array()).matrix()).asDiagonal() *
               (q * Matrix::Identity(2, 2) - m.q_gen);
    Eigen::EigenSolver<Matrix> es(a);
    double a1 = std::sqrt(es.eigenvalues().real().maxCoeff());
    double a2 = std::sqrt(es.eigenvalues().real().minCoeff());
    Matrix explicit_form = -(a + a1 * a2 * Matrix::Identity(2, 2)) / (a1 + a2);
    CHECK((p.lam_plus - explicit_form).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("quadratic solve residual bound holds on random problems") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> qs(0.01, 2.0);
    for (int trial = 0; trial < 1000; ++trial) {
        int n = 2 + static_cast<int>(rng() % 3ULL);
        MapModel m = omap::testing::random_model(rng, n);
        double q = qs(rng);
        Matrix a2 = (0.5 * m.sigma2()).asDiagonal();
        Matrix a0 = m.q_gen;
        a0.diagonal().array() -= q;
        for (double sign : {-1.0, 1.0}) {
            Matrix a1 = sign * Matrix(m.mu.asDiagonal());
            Matrix lam = solve_quadratic_stable({a2, a1, a0});
            double resid = (a2 * lam * lam + a1 * lam + a0).norm();
            CHECK(resid <= 1e-10 * (a0.norm() + 1.0));
            Eigen::EigenSolver<Matrix> es(lam);
            CHECK(es.eigenvalues().real().maxCoeff() < 1e-9);
        }
    }
}

TEST_CASE("eigenvalue splitting failure is reported") {
    // z^2 + 1 = 0 has both roots on the imaginary axis: no stable half.
    Matrix a2 = Matrix::Identity(1, 1);
    Matrix a1 = Matrix::Zero(1, 1);
    Matrix a0 = Matrix::Identity(1, 1);
    CHECK_THROWS_AS(solve_quadratic_stable({a2, a1, a0}), NumericalError);
}

TEST_CASE("sylvester basics") {
    Matrix a = 2.0 * Matrix::Identity(3, 3);
    Matrix b = Matrix::Identity(3, 3);
    Matrix c = Matrix::Identity(3, 3);
    CHECK((solve_sylvester(a, b, c) - Matrix::Identity(3, 3)).norm() < 1e-12);

    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    Matrix ra = Matrix::NullaryExpr(3, 3, [&]() { return g(rng); });
    ra += 5.0 * Matrix::Identity(3, 3);
    Matrix rb = Matrix::NullaryExpr(3, 3, [&]() { return g(rng); });
    rb -= 5.0 * Matrix::Identity(3, 3);
    CHECK(solve_sylvester(ra, rb, Matrix::Zero(3, 3)).norm() == 0.0);

    // perturbation stays proportional to the perturbation size
    Matrix c0 = Matrix::NullaryExpr(3, 3, [&]() { return g(rng); });
    Matrix x0 = solve_sylvester(ra, rb, c0);
    const double eps = 1e-7;
    Matrix x1 = solve_sylvester(ra, rb, c0 + eps * Matrix::Ones(3, 3));
    CHECK((x1 - x0).norm() < 1e3 * eps);

    CHECK_THROWS_AS(solve_sylvester(b, b, c), NumericalError);  // shared spectrum
}

TEST_CASE("expm basics and semigroup") {
    CHECK((expm(Matrix::Zero(3, 3)) - Matrix::Identity(3, 3)).norm() == 0.0);

    Matrix d = Matrix::Zero(2, 2);
    d(0, 0) = -1.0;
    d(1, 1) = -2.0;
    Matrix e = expm(d, 1.0);
    CHECK(e(0, 0) == doctest::Approx(std::exp(-1.0)));
    CHECK(e(1, 1) == doctest::Approx(std::exp(-2.0)));
    CHECK(e(0, 1) == 0.0);

    std::mt19937_64 rng(11);
    MapModel m = omap::testing::random_model(rng, 3);
    Matrix one = expm(m.q_gen, 0.7) * expm(m.q_gen, 1.6);
    Matrix two = expm(m.q_gen, 2.3);
    CHECK((one - two).norm() <= 1e-10 * two.norm());
}

TEST_CASE("expm of a generator converges to the stationary rows") {
    MapModel m = omap::testing::fig1_model();
    Vector pi = stationary_distribution(m);
    Matrix limit = expm(m.q_gen, 1e4);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) CHECK(limit(i, j) == doctest::Approx(pi(j)).epsilon(1e-8));
}
