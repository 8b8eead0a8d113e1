#pragma once

#include <Eigen/Dense>

#include "omega_map/model.hpp"

namespace omap {

/// The first-passage matrices of an MMBM killed at rate q: the stable
/// solvents Lambda_q^+ and Lambda_q^- of F(-/+ L) = q I, together with the
/// normalizer Xi_q, so that W^(q)(x) = (e^{-L+ x} - e^{L- x}) Xi_q.
struct LambdaPair {
    Matrix lam_plus;
    Matrix lam_minus;
    Matrix xi;
    double q = 0.0;
};

/// Occupation-at-zero triple: L^q = Xi_q, the upward ladder generator
/// Lambda^q = Lambda_q^+, and R^q = (L^q)^{-1} Lambda^q L^q.
struct OccupancyTriple {
    Matrix l_mat;
    Matrix lam_gen;
    Matrix r_mat;
};

/// The killed generator variant used by per-state constant killing:
/// replaces Q - q I with Q - diag(kill). lambda_pair(model, q) is the
/// scalar special case.
LambdaPair lambda_pair_killed(const MapModel& model, const Vector& kill);

LambdaPair lambda_pair(const MapModel& model, double q);

Matrix w_q(const LambdaPair& p, double x);
Matrix w_q_prime(const LambdaPair& p, double x);
/// Integral of W^(q) over [0, x], exact via matrix exponentials when the
/// solvents are invertible, composite Simpson otherwise.
Matrix w_q_integral(const LambdaPair& p, double x);
Matrix z_q(const MapModel& model, const LambdaPair& p, double x);

Matrix w_q(const MapModel& model, double q, double x);
Matrix w_q_prime(const MapModel& model, double q, double x);
Matrix z_q(const MapModel& model, double q, double x);

OccupancyTriple occupancy(const MapModel& model, double q);

/// Closed-form 2x2 scale matrix for zero drift, from inverting the Laplace
/// transform (F(s) - q I)^{-1} with the two positive roots alpha_1, alpha_2.
Matrix analytic_w2_zero_drift(double sigma1, double sigma2, double q11, double q22,
                              double q, double x);
Matrix analytic_w2_zero_drift_prime(double sigma1, double sigma2, double q11,
                                    double q22, double q, double x);

/// Same structure for per-state constant killing (omega1, omega2), the
/// inverse transform of (F(s) - diag(omega))^{-1}.
Matrix constant_omega_w2(double sigma1, double sigma2, double q11, double q22,
                         double omega1, double omega2, double x);

}  // namespace omap
