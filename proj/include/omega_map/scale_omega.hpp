#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "omega_map/grid.hpp"
#include "omega_map/model.hpp"
#include "omega_map/scale_classic.hpp"

namespace omap {

/// Second-kind Volterra convolution problem on a uniform grid:
///   H(x) = h(x) + int_y^x K(x - z) diag(weight(z)) H(z) dz.
/// The kernel vanishes for negative arguments, so forward substitution in
/// the node index solves it directly.
struct VolterraProblem {
    MatrixGrid kernel;          // K(u) sampled at u = 0, h, 2h, ...
    MatrixGrid inhomogeneity;   // h(x) on [y, x_max], same step
    std::vector<Vector> weight; // diagonal weight per node
    double y = 0.0;
};

enum class VolterraMode { ForwardSubstitution, Picard };

MatrixGrid volterra_solve(const VolterraProblem& p,
                          VolterraMode mode = VolterraMode::ForwardSubstitution);

/// Sampled kernel bookkeeping behind an OmegaScaleSet: the shifted classic
/// scale matrix W^(delta) (and derivative) on the grid step, plus the node
/// weights omega + discount - delta. Consumers needing derivative rows or
/// tail continuations read it through the set.
struct ScaleKernel {
    MapModel model;
    OmegaFn om = OmegaFn::constant(0.0);
    double y = 0.0;
    double h = 0.0;
    int n_nodes = 0;  // nodes 0..n_nodes
    double discount = 0.0;
    double delta = 0.0;
    LambdaPair pair;                 // solvents at kill rate delta
    int n = 0;                       // state count
    std::vector<double> ker;         // W^(delta)(k h), flat n*n blocks
    std::vector<double> ker_prime;   // W^(delta)'(k h)
    std::vector<double> zker;        // Z^(delta)(k h)
    std::vector<Vector> weight;      // per-node diagonal weight
    bool ker0_zero = true;

    const double* kblock(int k) const { return ker.data() + static_cast<std::size_t>(k) * n * n; }
    const double* kpblock(int k) const { return ker_prime.data() + static_cast<std::size_t>(k) * n * n; }
    const double* zblock(int k) const { return zker.data() + static_cast<std::size_t>(k) * n * n; }
};

struct OmegaScaleSet {
    MatrixGrid w;
    MatrixGrid z;
    double y = 0.0;
    double delta = 0.0;  // kernel shift actually used
    double discount = 0.0;
    std::shared_ptr<const ScaleKernel> kernel;

    int index_of(double x) const { return w.nearest_index(x); }
};

/// Kernel shift selection when the caller does not pin one: the midrange of
/// omega plus the discount, bumped to 0.5 if that is zero while the model
/// has no asymptotic drift (the plain q = 0 kernel does not exist there).
double default_kernel_delta(const MapModel& model, const OmegaFn& om, double discount);

/// Solves (Woxy)/(Zoxy) for W^(omega+discount), Z^(omega+discount) on
/// [y, x_max] with step ~h (the step is snapped so x_max lands on a node).
OmegaScaleSet omega_scale_set(const MapModel& model, const OmegaFn& om, double y,
                              double x_max, double h, double discount = 0.0,
                              std::optional<double> kernel_delta = std::nullopt,
                              VolterraMode mode = VolterraMode::ForwardSubstitution);

/// Spot values of the two-argument scale matrices.
Matrix omega_w(const MapModel& model, const OmegaFn& om, double x, double y, double h,
               double discount = 0.0);
Matrix omega_z(const MapModel& model, const OmegaFn& om, double x, double y, double h,
               double discount = 0.0);

/// d/dx W^(omega+discount)(x, y) at every grid node, evaluated through the
/// kernel-derivative convolution rather than finite differences.
MatrixGrid omega_w_prime(const OmegaScaleSet& set);
Matrix omega_w_prime_at(const OmegaScaleSet& set, int node);
Matrix omega_z_prime_at(const OmegaScaleSet& set, int node);

/// W^(omega)(x_T, y) for fixed upper argument x_T = set node `top`,
/// swept over all lower arguments y on the same grid (the right-composed
/// form of the same Volterra series).
MatrixGrid omega_w_dual(const OmegaScaleSet& set, int top);

/// H^(omega) of the one-sided upward problem on [0, x_max]; requires
/// omega == beta on the negative half-line.
MatrixGrid omega_h(const MapModel& model, const OmegaFn& om, double beta, double x_max,
                   double h);

/// Substitutes a computed grid back into its defining equation with a
/// higher-order quadrature; the sup-norm defect measures solver error.
double volterra_residual(const OmegaScaleSet& set, bool z_part = false);

/// Step-omega recursion evaluated segment by segment with Simpson
/// quadrature; levels must (approximately) sit on the quadrature grid.
Matrix step_omega_w(const MapModel& model, const std::vector<double>& levels,
                    const std::vector<double>& values, double x, double y, double h);

/// n = 1 closed form for the step omega scale matrix.
Matrix closed_step_omega_w(const MapModel& model, double p0, double p1, double x1,
                           double x, double y);

/// The four Sylvester constants of the n = 1 closed form.
struct StepConstants {
    Matrix c, d, e, f;
};
StepConstants step_constants(const MapModel& model, double p0, double p1);

/// G(z) = W^(omega+delta)(z - d, -d) for the affine-band omega, integrated
/// as a matrix ODE system with classical RK4. Returns G on [0, z_max].
MatrixGrid omega_model_ode_g(const MapModel& model, double gamma0, double gamma1,
                             double d, double delta, double z_max, double h,
                             bool check_step = true);

}  // namespace omap
