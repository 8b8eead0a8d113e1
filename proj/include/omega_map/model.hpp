#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "omega_map/errors.hpp"

namespace omap {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Markov-modulated Brownian motion: an N-state irreducible background chain
/// with generator Q, and a Brownian component with per-state volatility
/// sigma_i > 0 and drift mu_i. Transition-epoch jumps are identically zero,
/// so the matrix Laplace exponent is F(a) = (1/2) diag(sigma^2) a^2 + diag(mu) a + Q.
struct MapModel {
    Matrix q_gen;   // N x N generator, zero row sums, nonnegative off-diagonal
    Vector sigma;   // per-state volatility, strictly positive
    Vector mu;      // per-state drift

    int n_states() const { return static_cast<int>(sigma.size()); }

    Vector sigma2() const { return sigma.array().square().matrix(); }

    /// Throws ConfigError listing every violated invariant.
    static MapModel validated(Matrix q_gen, Vector sigma, Vector mu);

    /// Collects invariant violations without throwing.
    static std::vector<std::string> check(const Matrix& q_gen, const Vector& sigma,
                                          const Vector& mu);
};

Matrix laplace_exponent(const MapModel& model, double alpha);

/// Stationary distribution pi of the background chain (pi Q = 0, pi 1 = 1).
Vector stationary_distribution(const MapModel& model);

/// Asymptotic drift kappa = pi mu.
double mean_drift(const MapModel& model);

/// Bounded nonnegative level- and state-dependent killing intensity
/// omega_i(x), in one of five parametric kinds. Instances are immutable.
class OmegaFn {
public:
    enum class Kind { Constant, PerState, Step, AffineBand, Tabulated };

    static OmegaFn constant(double beta);
    static OmegaFn per_state(Vector values);
    /// omega(x) = p_0 + sum_j (p_j - p_{j-1}) 1{x > x_j}, state-independent.
    static OmegaFn step(std::vector<double> levels, std::vector<double> values);
    /// omega(x) = (gamma0 + gamma1 (x + d)) 1{-d <= x <= 0}.
    static OmegaFn affine_band(double gamma0, double gamma1, double d);
    /// Piecewise-linear in x per state, clamped to the end values outside the grid.
    static OmegaFn tabulated(std::vector<double> x, std::vector<Vector> values);

    Kind kind() const { return kind_; }
    int n_states_hint() const;  // 0 when state-independent

    /// omega_i(x); state is zero-based.
    double eval(int state, double x) const;

    /// Like eval but returns the half-sum of one-sided limits at a jump point,
    /// which keeps trapezoid quadrature second order across discontinuities.
    double quadrature_value(int state, double x) const;

    /// Upper bound lambda = sup_{i,x} omega_i(x).
    double bound() const { return bound_; }
    /// Infimum over all states and levels.
    double lower_bound() const;

    bool is_zero() const { return bound_ == 0.0; }

    /// True when omega does not depend on the level x.
    bool is_constant_in_x() const;
    /// The per-state constant vector (valid when is_constant_in_x()).
    Vector constant_vector(int n_states) const;

    /// Smallest x_t such that omega is constant in x on (x_t, infinity).
    double tail_start() const;
    /// Per-state values on the constant tail.
    Vector tail_values(int n_states) const;

    /// The constant value on (-infinity, 0) if omega is level-independent
    /// there and state-independent; nullopt otherwise.
    std::optional<double> left_constant() const;

    /// Interior discontinuity locations (empty for continuous kinds).
    std::vector<double> jump_points() const;

    /// omega*(., z) = omega(., z + y): the shift used by the two-argument
    /// scale matrices.
    OmegaFn shifted(double y) const;

    const std::vector<std::string>& check(int n_states) const;

    // Accessors for serialization.
    double beta() const { return beta_; }
    const Vector& values() const { return values_; }
    const std::vector<double>& levels() const { return levels_; }
    const std::vector<double>& step_values() const { return step_values_; }
    double gamma0() const { return gamma0_; }
    double gamma1() const { return gamma1_; }
    double band_d() const { return band_d_; }
    const std::vector<double>& tab_x() const { return tab_x_; }
    const std::vector<Vector>& tab_values() const { return tab_values_; }
    double shift() const { return shift_; }

private:
    OmegaFn() = default;
    void finalize();  // computes bound_, validates nonnegativity

    Kind kind_ = Kind::Constant;
    double beta_ = 0.0;                   // Constant
    Vector values_;                       // PerState
    std::vector<double> levels_;          // Step
    std::vector<double> step_values_;     // Step, size levels+1
    double gamma0_ = 0, gamma1_ = 0, band_d_ = 0;  // AffineBand
    std::vector<double> tab_x_;           // Tabulated
    std::vector<Vector> tab_values_;      // Tabulated, one vector per x node
    double shift_ = 0.0;                  // evaluation offset: eval(x) = base(x + shift)
    double bound_ = 0.0;
    mutable std::vector<std::string> check_cache_;
};

}  // namespace omap
