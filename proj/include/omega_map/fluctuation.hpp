#pragma once

#include <optional>
#include <vector>

#include "omega_map/scale_omega.hpp"

namespace omap {

/// Two-sided exit matrices from the window (d, c) started at x:
/// up = A^(omega)_d(x,c), down = B^(omega)_d(x,c).
struct ExitResult {
    Matrix up;
    Matrix down;
    double x = 0, c = 0, d = 0;
};

struct FluctuationOptions {
    double h = 1e-3;
    std::vector<double> truncation_schedule{8.0, 16.0, 32.0, 64.0};
    double limit_tol = 1e-7;    // entrywise Cauchy criterion for the limits
    double cond_threshold = 1e12;
};

ExitResult two_sided_exit(const MapModel& model, const OmegaFn& om, double d, double x,
                          double c, const FluctuationOptions& opt = {});

/// E_x[e^{-int omega}, tau_c^+ < inf, J]; omega must equal beta left of 0.
Matrix one_sided_up(const MapModel& model, const OmegaFn& om, double beta, double x,
                    double c, const FluctuationOptions& opt = {});

/// E_x[e^{-int omega}, tau_0^- < inf, J] = Z(x) - W(x) C, with
/// C = lim_c W(c)^{-1} Z(c) through the truncation schedule.
Matrix one_sided_down(const MapModel& model, const OmegaFn& om, double x,
                      const FluctuationOptions& opt = {});

/// The limit constant C alone (exposed for the tests).
Matrix one_sided_down_constant(const MapModel& model, const OmegaFn& om,
                               const FluctuationOptions& opt = {});

enum class ResolventWindow { TwoBarrier, UpFromZero, DownFromC, FreeLine };

/// Density grid of U^(omega)(x, dy) over the window; y sampled on the
/// solver grid. Infinite endpoints go through the truncation schedule.
struct ResolventGrid {
    std::vector<double> y;
    std::vector<Matrix> density;
    ResolventWindow window = ResolventWindow::TwoBarrier;
};

ResolventGrid resolvent(const MapModel& model, const OmegaFn& om, ResolventWindow window,
                        double x, std::optional<double> d, std::optional<double> c,
                        const FluctuationOptions& opt = {});

/// Total omega-killed mass before leaving (d, c):
/// int U^(omega)(x, dy) omega(y) dy, a quadrature over the resolvent grid.
Matrix killing_probability(const MapModel& model, const OmegaFn& om, double d, double x,
                           double c, const FluctuationOptions& opt = {});

// --- internals shared with the tests ---

/// Closed-form continuation of W^(omega) and Z^(omega) past the level where
/// omega becomes constant: both satisfy a constant-coefficient matrix ODE
/// there, so the grids extend by matrix exponentials.
class TailContinuation {
public:
    TailContinuation(const OmegaScaleSet& set, int match_node);
    Matrix w_at(double x) const;
    Matrix z_at(double x) const;

    /// W(c)^{-1} Z(c) evaluated in the decaying-mode frame, so no entry
    /// overflows no matter how large c gets.
    Matrix ratio_zw_at(double c) const;
    /// The c -> infinity limit of the ratio: (growing W mode)^{-1} (growing Z mode).
    Matrix ratio_zw_limit() const;

    double x_t() const { return x_t_; }

private:
    double x_t_;
    Matrix lamp_, lamm_;
    Matrix aw_, bw_, az_, bz_, zp_;
};

}  // namespace omap
