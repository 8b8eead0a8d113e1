#include "omega_map/scale_classic.hpp"

#include <cmath>

#include "omega_map/matrix_engine.hpp"

namespace omap {

namespace {

constexpr double kDriftTol = 1e-12;

Matrix half_sigma2_diag(const MapModel& m) {
    return (0.5 * m.sigma2()).asDiagonal();
}

bool safely_invertible(const Matrix& m) {
    Eigen::FullPivLU<Matrix> lu(m);
    if (!lu.isInvertible()) return false;
    // crude reciprocal-condition guard
    Eigen::JacobiSVD<Matrix> svd(m);
    const auto& s = svd.singularValues();
    return s(s.size() - 1) > 1e-13 * s(0);
}

}  // namespace

LambdaPair lambda_pair_killed(const MapModel& model, const Vector& kill) {
    const int n = model.n_states();
    Matrix a2 = half_sigma2_diag(model);
    Matrix mu_diag = model.mu.asDiagonal();
    Matrix a0 = model.q_gen;
    a0.diagonal() -= kill;

    LambdaPair out;
    out.q = kill.size() == n && (kill.array() == kill(0)).all() ? kill(0) : -1.0;
    out.lam_plus = solve_quadratic_stable({a2, -mu_diag, a0});
    out.lam_minus = solve_quadratic_stable({a2, mu_diag, a0});
    Matrix xi_inv = -half_sigma2_diag(model) * (out.lam_plus + out.lam_minus);
    if (!safely_invertible(xi_inv))
        throw NumericalError("Xi is numerically singular for this model");
    out.xi = xi_inv.inverse();
    return out;
}

LambdaPair lambda_pair(const MapModel& model, double q) {
    if (q < 0.0) throw ConfigError("killing rate q must be >= 0");
    if (q == 0.0 && std::abs(mean_drift(model)) < kDriftTol)
        throw ConfigError("q = 0 with zero asymptotic drift is excluded");
    return lambda_pair_killed(model, Vector::Constant(model.n_states(), q));
}

Matrix w_q(const LambdaPair& p, double x) {
    const auto n = p.xi.rows();
    if (x <= 0.0) return Matrix::Zero(n, n);
    return (expm(p.lam_plus, -x) - expm(p.lam_minus, x)) * p.xi;
}

Matrix w_q_prime(const LambdaPair& p, double x) {
    const auto n = p.xi.rows();
    if (x < 0.0) return Matrix::Zero(n, n);
    return (-p.lam_plus * expm(p.lam_plus, -x) - p.lam_minus * expm(p.lam_minus, x)) *
           p.xi;
}

Matrix w_q_integral(const LambdaPair& p, double x) {
    const auto n = p.xi.rows();
    if (x <= 0.0) return Matrix::Zero(n, n);
    if (safely_invertible(p.lam_plus) && safely_invertible(p.lam_minus)) {
        Matrix ip = p.lam_plus.fullPivLu().solve(Matrix::Identity(n, n) -
                                                 expm(p.lam_plus, -x));
        Matrix im = p.lam_minus.fullPivLu().solve(expm(p.lam_minus, x) -
                                                  Matrix::Identity(n, n));
        return (ip - im) * p.xi;
    }
    // Simpson fallback for the q = 0 boundary where a solvent is singular.
    const double target_h = 1e-4;
    int k = std::max(2, static_cast<int>(std::ceil(x / target_h)));
    if (k % 2 == 1) ++k;
    const double h = x / k;
    Matrix acc = w_q(p, 0.0) + w_q(p, x);
    for (int j = 1; j < k; ++j) acc += (j % 2 == 1 ? 4.0 : 2.0) * w_q(p, j * h);
    return acc * (h / 3.0);
}

Matrix z_q(const MapModel& model, const LambdaPair& p, double x) {
    const int n = model.n_states();
    if (x <= 0.0) return Matrix::Identity(n, n);
    Matrix f0 = model.q_gen;
    f0.diagonal().array() -= p.q;
    return Matrix::Identity(n, n) - w_q_integral(p, x) * f0;
}

Matrix w_q(const MapModel& model, double q, double x) {
    return w_q(lambda_pair(model, q), x);
}

Matrix w_q_prime(const MapModel& model, double q, double x) {
    return w_q_prime(lambda_pair(model, q), x);
}

Matrix z_q(const MapModel& model, double q, double x) {
    return z_q(model, lambda_pair(model, q), x);
}

OccupancyTriple occupancy(const MapModel& model, double q) {
    LambdaPair p = lambda_pair(model, q);
    OccupancyTriple t;
    t.l_mat = p.xi;
    t.lam_gen = p.lam_plus;
    t.r_mat = p.xi.fullPivLu().solve(p.lam_plus * p.xi);
    return t;
}

namespace {

struct TwoStateRoots {
    double a1, a2;
};

TwoStateRoots roots_from(double s1, double s2, double m, double k) {
    double disc = m * m - 4.0 * s1 * s1 * s2 * s2 * k;
    if (disc < 0.0) throw NumericalError("complex characteristic roots in 2x2 closed form");
    double sq = std::sqrt(disc);
    TwoStateRoots r;
    r.a1 = std::sqrt(m + sq) / (s1 * s2);
    r.a2 = std::sqrt(m - sq) / (s1 * s2);
    if (std::abs(r.a1 - r.a2) < 1e-12 * (r.a1 + r.a2))
        throw NumericalError("coincident characteristic roots in 2x2 closed form");
    return r;
}

Matrix two_state_combination(double s1, double s2, double q11, double q22, double k1,
                             double k2, double x, bool derivative) {
    TwoStateRoots r =
        roots_from(s1, s2, s1 * s1 * (q22 + k2) + s2 * s2 * (q11 + k1),
                   q11 * k2 + k1 * q22 + k1 * k2);
    auto block = [&](double a) {
        Matrix m(2, 2);
        m << 2.0 * (q22 + k2) - a * a * s2 * s2, 2.0 * q11, 2.0 * q22,
            2.0 * (q11 + k1) - a * a * s1 * s1;
        return m;
    };
    const double denom = (r.a1 * r.a1 - r.a2 * r.a2) * s1 * s1 * s2 * s2;
    double f2, f1;
    if (derivative) {
        f2 = (std::exp(r.a2 * x) + std::exp(-r.a2 * x)) / denom;
        f1 = (std::exp(r.a1 * x) + std::exp(-r.a1 * x)) / denom;
    } else {
        f2 = (std::exp(r.a2 * x) - std::exp(-r.a2 * x)) / (denom * r.a2);
        f1 = (std::exp(r.a1 * x) - std::exp(-r.a1 * x)) / (denom * r.a1);
    }
    return block(r.a2) * f2 - block(r.a1) * f1;
}

}  // namespace

Matrix analytic_w2_zero_drift(double s1, double s2, double q11, double q22, double q,
                              double x) {
    if (!(s1 > 0 && s2 > 0 && q11 > 0 && q22 > 0 && q > 0))
        throw ConfigError("analytic 2x2 scale matrix needs all parameters > 0");
    return two_state_combination(s1, s2, q11, q22, q, q, x, false);
}

Matrix analytic_w2_zero_drift_prime(double s1, double s2, double q11, double q22,
                                    double q, double x) {
    if (!(s1 > 0 && s2 > 0 && q11 > 0 && q22 > 0 && q > 0))
        throw ConfigError("analytic 2x2 scale matrix needs all parameters > 0");
    return two_state_combination(s1, s2, q11, q22, q, q, x, true);
}

Matrix constant_omega_w2(double s1, double s2, double q11, double q22, double omega1,
                         double omega2, double x) {
    if (!(s1 > 0 && s2 > 0 && q11 > 0 && q22 > 0))
        throw ConfigError("constant-omega 2x2 closed form needs positive model parameters");
    if (omega1 < 0 || omega2 < 0 || (omega1 == 0 && omega2 == 0))
        throw ConfigError("constant-omega closed form needs omega >= 0, not both zero");
    return two_state_combination(s1, s2, q11, q22, omega1, omega2, x, false);
}

}  // namespace omap
