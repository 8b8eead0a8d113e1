#include "omega_map/matrix_engine.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <vector>

#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

namespace omap {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;

namespace {

double quad_residual(const QuadraticMatrixProblem& p, const MatrixXd& lam) {
    return (p.a2 * lam * lam + p.a1 * lam + p.a0).norm();
}

// One Newton step on R(L) = a2 L^2 + a1 L + a0: solve the linearized
// equation a2 D L + (a2 L + a1) D = -R for the correction D.
MatrixXd newton_step(const QuadraticMatrixProblem& p, const MatrixXd& lam) {
    const auto n = lam.rows();
    MatrixXd r = p.a2 * lam * lam + p.a1 * lam + p.a0;
    MatrixXd big = Eigen::kroneckerProduct(lam.transpose(), p.a2) +
                   Eigen::kroneckerProduct(MatrixXd::Identity(n, n), p.a2 * lam + p.a1);
    Eigen::VectorXd rhs = -Eigen::Map<Eigen::VectorXd>(r.data(), r.size());
    Eigen::PartialPivLU<MatrixXd> lu(big);
    Eigen::VectorXd d = lu.solve(rhs);
    return lam + Eigen::Map<MatrixXd>(d.data(), n, n);
}

}  // namespace

MatrixXd solve_quadratic_stable(const QuadraticMatrixProblem& p) {
    const auto n = p.a0.rows();
    if (p.a2.rows() != n || p.a1.rows() != n)
        throw ConfigError("quadratic matrix problem blocks must share the same size");

    Eigen::PartialPivLU<MatrixXd> a2lu(p.a2);
    MatrixXd c0 = -a2lu.solve(p.a0);
    MatrixXd c1 = -a2lu.solve(p.a1);

    MatrixXd companion = MatrixXd::Zero(2 * n, 2 * n);
    companion.topRightCorner(n, n).setIdentity();
    companion.bottomLeftCorner(n, n) = c0;
    companion.bottomRightCorner(n, n) = c1;

    Eigen::EigenSolver<MatrixXd> es(companion);
    if (es.info() != Eigen::Success)
        throw NumericalError("eigen decomposition of the companion matrix failed");
    VectorXcd evals = es.eigenvalues();
    MatrixXcd evecs = es.eigenvectors();

    std::vector<int> order(2 * n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (evals(a).real() != evals(b).real()) return evals(a).real() < evals(b).real();
        return evals(a).imag() < evals(b).imag();
    });

    // The stable half: N smallest real parts. A zero eigenvalue (q = 0 with
    // kappa != 0) lands on whichever side owns it, because the other 2N-1
    // roots split strictly.
    const double scale = 1.0 + evals.cwiseAbs().maxCoeff();
    const double tol = 1e-9 * scale;
    double re_in = evals(order[n - 1]).real();
    double re_out = evals(order[n]).real();
    if (re_in > tol || re_out < -tol)
        throw NumericalError("eigenvalue splitting failed: stable count != N");
    if (std::abs(re_in - re_out) < 1e-14 * scale &&
        std::abs(evals(order[n - 1]).imag() + evals(order[n]).imag()) < 1e-14 * scale &&
        std::abs(evals(order[n - 1]).imag()) > tol)
        throw NumericalError("eigenvalue splitting failed: conjugate pair straddles the cut");

    MatrixXcd y1(n, n), y2(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        y1.col(j) = evecs.col(order[j]).head(n);
        y2.col(j) = evecs.col(order[j]).tail(n);
    }

    Eigen::JacobiSVD<MatrixXcd> svd(y1);
    double cond = svd.singularValues()(0) / svd.singularValues()(n - 1);
    MatrixXcd lam_c = y1.transpose()
                          .fullPivLu()
                          .solve(y2.transpose())
                          .transpose();  // y2 * y1^{-1}
    MatrixXd lam = lam_c.real();

    // Newton refinement handles near-defective eigenbases that the plain
    // eigenvector route resolves poorly.
    const double bound = 1e-10 * (p.a0.norm() + 1.0);
    int iters = (cond > 1e8) ? 20 : 3;
    for (int it = 0; it < iters && quad_residual(p, lam) > 1e-2 * bound; ++it) {
        MatrixXd next = newton_step(p, lam);
        if (!next.allFinite() || quad_residual(p, next) >= quad_residual(p, lam)) break;
        lam = next;
    }

    if (quad_residual(p, lam) > bound)
        throw NumericalError("quadratic matrix solve residual above tolerance");
    return lam;
}

MatrixXd solve_sylvester(const MatrixXd& a, const MatrixXd& b, const MatrixXd& c) {
    const auto m = a.rows();
    const auto n = b.rows();
    if (c.rows() != m || c.cols() != n)
        throw ConfigError("sylvester right-hand side has inconsistent size");
    MatrixXd big = Eigen::kroneckerProduct(MatrixXd::Identity(n, n), a) -
                   Eigen::kroneckerProduct(b.transpose(), MatrixXd::Identity(m, m));
    Eigen::FullPivLU<MatrixXd> lu(big);
    if (!lu.isInvertible())
        throw NumericalError("sylvester system singular (A and B share an eigenvalue)");
    Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(c.data(), c.size());
    Eigen::VectorXd x = lu.solve(rhs);
    MatrixXd sol = Eigen::Map<MatrixXd>(x.data(), m, n);
    if ((a * sol - sol * b - c).norm() > 1e-10 * (c.norm() + 1.0))
        throw NumericalError("sylvester solve residual above tolerance");
    return sol;
}

MatrixXd expm(const MatrixXd& m, double t) {
    MatrixXd mt = m * t;
    if (!mt.allFinite()) throw NumericalError("expm argument has non-finite entries");
    MatrixXd e = mt.exp();
    if (!e.allFinite()) throw NumericalError("expm overflow");
    return e;
}

}  // namespace omap
