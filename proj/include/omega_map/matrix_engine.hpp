#pragma once

#include <Eigen/Dense>

#include "omega_map/errors.hpp"

namespace omap {

/// a2 L^2 + a1 L + a0 = 0, solved for the stable solvent L
/// (all eigenvalues of L in the closed left half-plane).
struct QuadraticMatrixProblem {
    Eigen::MatrixXd a2, a1, a0;
};

/// Companion linearization to a 2N eigenproblem; the N eigenpairs with the
/// most negative real parts form the solvent. A Newton polish on the
/// residual follows, and the result must satisfy
/// ||a2 L^2 + a1 L + a0||_F <= 1e-10 (||a0||_F + 1).
Eigen::MatrixXd solve_quadratic_stable(const QuadraticMatrixProblem& p);

/// A X - X B = C via the Kronecker linear system (sizes here are small).
Eigen::MatrixXd solve_sylvester(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                const Eigen::MatrixXd& c);

/// e^{M t} by scaling-and-squaring Pade.
Eigen::MatrixXd expm(const Eigen::MatrixXd& m, double t = 1.0);

}  // namespace omap
