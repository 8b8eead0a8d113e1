#include <doctest.h>

#include <cmath>
#include <random>

#include "omega_map/matrix_engine.hpp"
#include "omega_map/scale_classic.hpp"
#include "test_support.hpp"

using namespace omap;
using omap::testing::fig1_model;

TEST_CASE("scalar lambda pair, scale matrix and occupancy") {
    MapModel m = omap::testing::scalar_model(1.0, 0.0);
    LambdaPair p = lambda_pair(m, 0.5);
    CHECK(p.lam_plus(0, 0) == doctest::Approx(-1.0));
    CHECK(p.lam_minus(0, 0) == doctest::Approx(-1.0));
    CHECK(p.xi(0, 0) == doctest::Approx(1.0));

    CHECK(w_q(p, 0.0).norm() == 0.0);
    CHECK(w_q(p, -2.0).norm() == 0.0);
    CHECK(w_q(p, 1.0)(0, 0) == doctest::Approx(2.0 * std::sinh(1.0)));
    CHECK(w_q_prime(p, 1.0)(0, 0) == doctest::Approx(2.0 * std::cosh(1.0)));

    OccupancyTriple occ = occupancy(m, 0.5);
    CHECK(occ.l_mat(0, 0) == doctest::Approx(1.0));
    CHECK(occ.r_mat(0, 0) == doctest::Approx(-1.0));

    // N=1 with q>0 and Q=0: Z^(q)(x) = 1 + q int_0^x W
    LambdaPair p2 = lambda_pair(m, 0.5);
    double z = z_q(m, p2, 1.3)(0, 0);
    double iw = w_q_integral(p2, 1.3)(0, 0);
    CHECK(z == doctest::Approx(1.0 + 0.5 * iw));
}

TEST_CASE("q=0 with zero mean drift is rejected") {
    CHECK_THROWS_AS(lambda_pair(fig1_model(), 0.0), ConfigError);
}

TEST_CASE("lambda pair invariants on figure-1 and random models") {
    std::mt19937_64 rng(303);
    std::vector<std::pair<MapModel, double>> cases;
    cases.emplace_back(fig1_model(), 0.05);
    cases.emplace_back(omap::testing::fig3_model(), 0.25);
    for (int i = 0; i < 10; ++i)
        cases.emplace_back(omap::testing::random_model(rng, 2 + int(rng() % 2ULL)),
                           0.05 + 0.2 * i);

    for (const auto& [m, q] : cases) {
        const int n = m.n_states();
        LambdaPair p = lambda_pair(m, q);
        Matrix a2 = (0.5 * m.sigma2()).asDiagonal();
        Matrix a0 = m.q_gen;
        a0.diagonal().array() -= q;
        Matrix mu = m.mu.asDiagonal();
        CHECK((a2 * p.lam_plus * p.lam_plus - mu * p.lam_plus + a0).norm() < 1e-9);
        CHECK((a2 * p.lam_minus * p.lam_minus + mu * p.lam_minus + a0).norm() < 1e-9);
        // Xi^{-1} = -(1/2) diag(sigma^2) (L+ + L-)
        Matrix xi_inv = -0.5 * Matrix(m.sigma2().asDiagonal()) * (p.lam_plus + p.lam_minus);
        CHECK((p.xi * xi_inv - Matrix::Identity(n, n)).norm() < 1e-9);

        // relations between the solvents through C_q and D_q
        Matrix s = p.lam_plus + p.lam_minus;
        Matrix cq = s * p.lam_minus * s.inverse();
        Matrix dq = s * p.lam_plus * s.inverse();
        Matrix two_mu = Vector((2.0 * m.mu.array() / m.sigma2().array()).matrix()).asDiagonal();
        Matrix rhs = Matrix(Vector((2.0 / m.sigma2().array()).matrix()).asDiagonal()) *
                     (q * Matrix::Identity(n, n) - m.q_gen);
        CHECK((two_mu - (p.lam_plus - cq)).norm() < 1e-8);
        CHECK((cq * p.lam_plus - rhs).norm() < 1e-8);
        CHECK((two_mu - (dq - p.lam_minus)).norm() < 1e-8);
        CHECK((dq * p.lam_minus - rhs).norm() < 1e-8);
    }
}

TEST_CASE("zero drift forces equal solvents") {
    std::mt19937_64 rng(99);
    MapModel m = omap::testing::random_model(rng, 3, /*zero_drift=*/true);
    LambdaPair p = lambda_pair(m, 0.4);
    CHECK((p.lam_plus - p.lam_minus).norm() < 1e-9);
}

TEST_CASE("w_q_prime is the derivative of w_q") {
    MapModel m = omap::testing::fig3_model();
    LambdaPair p = lambda_pair(m, 0.2);
    const double h = 1e-5;
    for (double x : {0.3, 1.0, 2.7}) {
        Matrix fd = (w_q(p, x + h) - w_q(p, x - h)) / (2.0 * h);
        CHECK((fd - w_q_prime(p, x)).cwiseAbs().maxCoeff() < 1e-6);
    }
    // at zero: W'(0) = diag(2 / sigma^2)
    Matrix expect = Vector((2.0 / m.sigma2().array()).matrix()).asDiagonal();
    CHECK((w_q_prime(p, 0.0) - expect).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("z_q matches trapezoid quadrature of its definition") {
    MapModel m = fig1_model();
    const double q = 0.05, x = 2.0;
    LambdaPair p = lambda_pair(m, q);
    const double h = 1e-4;
    const int k = static_cast<int>(std::lround(x / h));
    Matrix acc = 0.5 * (w_q(p, 0.0) + w_q(p, x));
    for (int j = 1; j < k; ++j) acc += w_q(p, j * h);
    Matrix f0 = m.q_gen;
    f0.diagonal().array() -= q;
    Matrix z_quad = Matrix::Identity(2, 2) - (h * acc) * f0;
    CHECK((z_q(m, p, x) - z_quad).cwiseAbs().maxCoeff() < 1e-7);
    CHECK((z_q(m, p, 0.0) - Matrix::Identity(2, 2)).norm() == 0.0);
}

TEST_CASE("occupancy limit: e^{Lambda x} W(x) approaches Xi") {
    MapModel m = fig1_model();
    const double q = 0.05;
    LambdaPair p = lambda_pair(m, q);
    OccupancyTriple occ = occupancy(m, q);
    Matrix probe = expm(occ.lam_gen, 40.0) * w_q(p, 40.0);
    CHECK((probe - occ.l_mat).cwiseAbs().maxCoeff() < 1e-6);
    // R is similar to Lambda: same spectrum
    Eigen::EigenSolver<Matrix> e1(occ.lam_gen), e2(occ.r_mat);
    Vector s1 = e1.eigenvalues().real(), s2 = e2.eigenvalues().real();
    std::sort(s1.data(), s1.data() + s1.size());
    std::sort(s2.data(), s2.data() + s2.size());
    CHECK((s1 - s2).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("analytic zero-drift 2x2 closed form") {
    const double s1 = 1.0, s2 = 1.2, q11 = 0.05, q22 = 0.1, q = 0.05;
    CHECK(analytic_w2_zero_drift(s1, s2, q11, q22, q, 0.0).norm() < 1e-14);

    // roots satisfy det(F(a) - q I) = 0
    MapModel m = omap::testing::fig1_model();
    const double mq = s1 * s1 * (q22 + q) + s2 * s2 * (q11 + q);
    const double kq = (q11 + q22 + q) * q;
    const double disc = std::sqrt(mq * mq - 4.0 * s1 * s1 * s2 * s2 * kq);
    const double a1 = std::sqrt(mq + disc) / (s1 * s2);
    const double a2 = std::sqrt(mq - disc) / (s1 * s2);
    for (double a : {a1, a2}) {
        Matrix f = laplace_exponent(m, a);
        f.diagonal().array() -= q;
        CHECK(std::abs(f.determinant()) < 1e-12);
    }

    // identical states collapse to the scalar Brownian scale function
    const double sig = 0.9, rate = 0.3, qq = 0.2;
    Matrix w = analytic_w2_zero_drift(sig, sig, rate, rate, qq, 1.7);
    const double alpha = std::sqrt(2.0 * qq) / sig;
    const double scalar = 2.0 * std::sinh(alpha * 1.7) / (sig * sig * alpha);
    CHECK(w.row(0).sum() == doctest::Approx(scalar).epsilon(1e-9));
    CHECK(w.row(1).sum() == doctest::Approx(scalar).epsilon(1e-9));
}

TEST_CASE("closed form matches the eigen route on figure-1") {
    MapModel m = fig1_model();
    const double q = 0.05;
    LambdaPair p = lambda_pair(m, q);
    double worst = 0.0;
    for (int i = 0; i <= 100; ++i) {
        double x = 10.0 * i / 100.0;
        Matrix a = analytic_w2_zero_drift(1.0, 1.2, 0.05, 0.1, q, x);
        Matrix b = w_q(p, x);
        worst = std::max(worst, (a - b).cwiseAbs().maxCoeff());
    }
    CHECK(worst < 1e-8);
}

TEST_CASE("analytic derivative matches finite differences") {
    const double h = 1e-6;
    for (double x : {0.5, 2.0, 5.0}) {
        Matrix fd = (analytic_w2_zero_drift(1.0, 1.2, 0.05, 0.1, 0.05, x + h) -
                     analytic_w2_zero_drift(1.0, 1.2, 0.05, 0.1, 0.05, x - h)) /
                    (2.0 * h);
        Matrix an = analytic_w2_zero_drift_prime(1.0, 1.2, 0.05, 0.1, 0.05, x);
        CHECK((fd - an).cwiseAbs().maxCoeff() < 1e-5);
    }
}

TEST_CASE("constant-omega closed form reduces to the q case") {
    for (double x : {0.5, 1.5, 4.0}) {
        Matrix a = constant_omega_w2(1.0, 1.2, 0.05, 0.1, 0.05, 0.05, x);
        Matrix b = analytic_w2_zero_drift(1.0, 1.2, 0.05, 0.1, 0.05, x);
        CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
    }
    CHECK(constant_omega_w2(1.0, 1.2, 0.05, 0.1, 0.05, 0.25, 0.0).norm() < 1e-14);
}

TEST_CASE("two-sided ratio is a sub-stochastic multiplicative family") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 5; ++trial) {
        MapModel m = omap::testing::random_model(rng, 2);
        double q = 0.1 + 0.1 * trial;
        LambdaPair p = lambda_pair(m, q);
        double xs[3] = {0.4, 1.1, 2.2};
        Matrix wa = w_q(p, xs[1]);
        Matrix ratio_xa = w_q(p, xs[0]) * wa.inverse();
        for (int i = 0; i < 2; ++i) {
            double row = 0.0;
            for (int j = 0; j < 2; ++j) {
                CHECK(ratio_xa(i, j) >= -1e-10);
                CHECK(ratio_xa(i, j) <= 1.0 + 1e-10);
                row += ratio_xa(i, j);
            }
            CHECK(row <= 1.0 + 1e-9);
        }
        Matrix m_ab = wa * w_q(p, xs[2]).inverse();
        Matrix m_xb = w_q(p, xs[0]) * w_q(p, xs[2]).inverse();
        CHECK((ratio_xa * m_ab - m_xb).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("Laplace transform of the scale matrix inverts F - q") {
    MapModel m = fig1_model();
    const double q = 0.05, s = 3.0;
    LambdaPair p = lambda_pair(m, q);
    const double upper = 60.0 / s;
    const int k = 20000;
    const double h = upper / k;
    Matrix acc = 0.5 * (w_q(p, 0.0) + std::exp(-s * upper) * w_q(p, upper));
    for (int j = 1; j < k; ++j) {
        double x = j * h;
        acc += std::exp(-s * x) * w_q(p, x);
    }
    acc *= h;
    Matrix f = laplace_exponent(m, s);
    f.diagonal().array() -= q;
    CHECK((acc - f.inverse()).cwiseAbs().maxCoeff() < 1e-6);
}
