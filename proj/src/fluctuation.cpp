#include "omega_map/fluctuation.hpp"

#include <cmath>
#include <sstream>

#include "omega_map/matrix_engine.hpp"

namespace omap {

namespace {

// x = a * b^{-1} through an LU solve of the transposed system.
Matrix right_divide(const Matrix& a, const Matrix& b) {
    return b.transpose().partialPivLu().solve(a.transpose()).transpose();
}

void guard_conditioning(const Matrix& m, double threshold, const char* what) {
    Eigen::JacobiSVD<Matrix> svd(m);
    const auto& s = svd.singularValues();
    if (!(s(s.size() - 1) > 0.0) || s(0) / s(s.size() - 1) > threshold) {
        std::ostringstream os;
        os << what << " is too ill-conditioned to invert";
        throw NumericalError(os.str());
    }
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace

TailContinuation::TailContinuation(const OmegaScaleSet& set, int match_node) {
    const auto& kc = *set.kernel;
    const int n = kc.n;
    x_t_ = set.y + match_node * kc.h;
    if (x_t_ < kc.om.tail_start() - 1e-12)
        throw NumericalError("tail continuation must match past the last omega feature");

    Vector kill = kc.om.tail_values(n);
    kill.array() += kc.discount;
    double kappa = mean_drift(kc.model);
    if (kill.maxCoeff() <= 0.0 && std::abs(kappa) < 1e-12)
        throw NumericalError(
            "tail continuation undefined: no killing on the tail and zero drift");

    LambdaPair tail_pair = lambda_pair_killed(kc.model, kill);
    lamp_ = tail_pair.lam_plus;
    lamm_ = tail_pair.lam_minus;

    // Both scale parts satisfy the homogeneous constant-coefficient ODE on
    // the tail (the Z-seeded inhomogeneity is annihilated by the generator
    // operator), so no particular term enters.
    zp_ = Matrix::Zero(n, n);

    Matrix v0w = set.w.at_index(match_node);
    Matrix v1w = omega_w_prime_at(set, match_node);
    Matrix v0z = set.z.at_index(match_node);
    Matrix v1z = omega_z_prime_at(set, match_node);

    Matrix s = lamp_ + lamm_;
    Eigen::PartialPivLU<Matrix> slu(s);
    aw_ = slu.solve(lamm_ * v0w - v1w);
    bw_ = v0w - aw_;
    az_ = slu.solve(lamm_ * (v0z - zp_) - v1z);
    bz_ = (v0z - zp_) - az_;
}

Matrix TailContinuation::w_at(double x) const {
    double u = x - x_t_;
    if (u < 0) throw NumericalError("tail continuation queried left of its start");
    return expm(lamp_, -u) * aw_ + expm(lamm_, u) * bw_;
}

Matrix TailContinuation::z_at(double x) const {
    double u = x - x_t_;
    if (u < 0) throw NumericalError("tail continuation queried left of its start");
    return expm(lamp_, -u) * az_ + expm(lamm_, u) * bz_ + zp_;
}

Matrix TailContinuation::ratio_zw_at(double c) const {
    double u = c - x_t_;
    if (u < 0) throw NumericalError("tail continuation queried left of its start");
    // W(c)^{-1} Z(c) = (Aw + E Bw)^{-1} (Az + E Bz) with E = e^{L+ u} e^{L- u};
    // both exponentials decay, so E vanishes as c grows.
    Matrix e = expm(lamp_, u) * expm(lamm_, u);
    return (aw_ + e * bw_).partialPivLu().solve(az_ + e * bz_);
}

Matrix TailContinuation::ratio_zw_limit() const {
    return aw_.partialPivLu().solve(az_);
}

ExitResult two_sided_exit(const MapModel& model, const OmegaFn& om, double d, double x,
                          double c, const FluctuationOptions& opt) {
    if (!(d <= x && x <= c && d < c))
        throw ConfigError("two-sided exit needs d <= x <= c with d < c");
    auto set = omega_scale_set(model, om, d, c, opt.h);
    const Matrix& wc = set.w.back();
    guard_conditioning(wc, opt.cond_threshold, "W^(omega)(c, d)");

    ExitResult out;
    out.x = x;
    out.c = c;
    out.d = d;
    out.up = right_divide(set.w.at(x), wc);
    out.down = set.z.at(x) - out.up * set.z.back();
    return out;
}

Matrix one_sided_up(const MapModel& model, const OmegaFn& om, double beta, double x,
                    double c, const FluctuationOptions& opt) {
    if (!(x <= c)) throw ConfigError("one-sided up needs x <= c");
    MatrixGrid hgrid = omega_h(model, om, beta, std::max(c, 1e-6), opt.h);
    Matrix hc = hgrid.back();
    guard_conditioning(hc, opt.cond_threshold, "H^(omega)(c)");
    Matrix hx;
    if (x >= 0.0) {
        hx = hgrid.at(x);
    } else {
        hx = expm(occupancy(model, beta).lam_gen, -x);
    }
    return right_divide(hx, hc);
}

namespace {

struct DownPieces {
    OmegaScaleSet set;
    TailContinuation tail;
    Matrix constant;
};

DownPieces one_sided_down_pieces(const MapModel& model, const OmegaFn& om, double x_need,
                                 const FluctuationOptions& opt) {
    if (om.is_zero())
        throw ConfigError("one-sided down requires a nonzero killing intensity");
    double tail_x = std::max(om.tail_start(), 0.0);
    double top = std::max({tail_x + 1.0, x_need + 1.0, 2.0});
    auto set = omega_scale_set(model, om, 0.0, top, opt.h);
    int match = set.index_of(std::min(tail_x + 0.5 * set.kernel->h, top));
    if (set.y + match * set.kernel->h < om.tail_start())
        match = std::min(match + 1, set.kernel->n_nodes);

    TailContinuation tail(set, match);

    Matrix prev;
    bool have_prev = false;
    Matrix cur;
    for (double c : opt.truncation_schedule) {
        if (c <= tail.x_t()) continue;
        cur = tail.ratio_zw_at(c);
        if (!cur.allFinite())
            throw NumericalError("one-sided down limit produced non-finite iterates");
        if (have_prev && max_abs_diff(cur, prev) < opt.limit_tol)
            return {std::move(set), std::move(tail), std::move(cur)};
        prev = cur;
        have_prev = true;
    }
    std::ostringstream os;
    os << "one-sided down limit did not settle within the truncation schedule; "
       << "last two iterates differ by " << max_abs_diff(cur, prev);
    throw NumericalError(os.str());
}

}  // namespace

Matrix one_sided_down_constant(const MapModel& model, const OmegaFn& om,
                               const FluctuationOptions& opt) {
    return one_sided_down_pieces(model, om, 0.0, opt).constant;
}

Matrix one_sided_down(const MapModel& model, const OmegaFn& om, double x,
                      const FluctuationOptions& opt) {
    if (x < 0.0) throw ConfigError("one-sided down needs x >= 0");
    auto pieces = one_sided_down_pieces(model, om, x, opt);
    return pieces.set.z.at(x) - pieces.set.w.at(x) * pieces.constant;
}

namespace {

// density over the node range [0 .. top] of the window [d, c]:
// rho(y_j) = A(x,c) W(c, y_j) - W(x, y_j).
std::vector<Matrix> window_density(const OmegaScaleSet& set, double x,
                                   const FluctuationOptions& opt) {
    const auto& kc = *set.kernel;
    const int top = kc.n_nodes;
    const int n = kc.n;
    int node_x = set.index_of(x);
    const Matrix& wc = set.w.back();
    guard_conditioning(wc, opt.cond_threshold, "W^(omega)(c, d)");
    Matrix a = right_divide(set.w.at(x), wc);

    MatrixGrid gc = omega_w_dual(set, top);
    MatrixGrid gx = omega_w_dual(set, node_x);

    std::vector<Matrix> rho(top + 1, Matrix::Zero(n, n));
    for (int j = 0; j <= top; ++j) {
        rho[j] = a * gc.values[j];
        if (j <= node_x) rho[j] -= gx.values[j];
    }
    return rho;
}

std::vector<double> node_positions(double y0, double h, int count) {
    std::vector<double> y(count);
    for (int i = 0; i < count; ++i) y[i] = y0 + i * h;
    return y;
}

// Growing-mode coefficients Aw(y_j) of c -> W^(omega)(c, y_j), for every
// grid node j up to the match level: the upper argument satisfies the
// constant-coefficient tail ODE past the last omega feature, and the mode
// split needs W(c, y) and its c-derivative at the match node only (three
// dual sweeps, central difference in the upper argument).
struct DualTailModes {
    LambdaPair tail_pair;
    double x_match = 0.0;    // frame level of the coefficients
    std::vector<Matrix> aw;  // per lower-argument node

    DualTailModes(const OmegaScaleSet& set, const MapModel& model, const OmegaFn& om) {
        const auto& kc = *set.kernel;
        const int n = kc.n;
        const int top = kc.n_nodes;
        if (top < 2) throw NumericalError("dual tail matching needs at least three nodes");
        const double h = kc.h;
        x_match = set.y + (top - 1) * h;
        if (x_match < om.tail_start() - 1e-12)
            throw NumericalError("dual tail matching must sit past the last omega feature");
        Vector kill = om.tail_values(n);
        kill.array() += kc.discount;
        tail_pair = lambda_pair_killed(model, kill);
        Matrix s = tail_pair.lam_plus + tail_pair.lam_minus;
        Eigen::PartialPivLU<Matrix> slu(s);

        MatrixGrid g_hi = omega_w_dual(set, top);
        MatrixGrid g_mid = omega_w_dual(set, top - 1);
        MatrixGrid g_lo = omega_w_dual(set, top - 2);
        aw.resize(top - 1);
        for (int j = 0; j <= top - 2; ++j) {
            Matrix v0 = g_mid.values[j];
            Matrix v1 = (g_hi.values[j] - g_lo.values[j]) / (2.0 * h);
            aw[j] = slu.solve(tail_pair.lam_minus * v0 - v1);
        }
    }

    // re-expresses a coefficient in the frame anchored at `level`
    Matrix to_frame(const Matrix& a, double level) const {
        return expm(tail_pair.lam_plus, -(level - x_match)) * a;
    }
};

}  // namespace

ResolventGrid resolvent(const MapModel& model, const OmegaFn& om, ResolventWindow window,
                        double x, std::optional<double> d, std::optional<double> c,
                        const FluctuationOptions& opt) {
    ResolventGrid out;
    out.window = window;
    const int n = model.n_states();

    switch (window) {
        case ResolventWindow::TwoBarrier: {
            if (!d || !c) throw ConfigError("two-barrier resolvent needs both d and c");
            if (!(*d <= x && x <= *c)) throw ConfigError("x must lie in [d, c]");
            auto set = omega_scale_set(model, om, *d, *c, opt.h);
            out.density = window_density(set, x, opt);
            out.y = node_positions(*d, set.kernel->h, set.kernel->n_nodes + 1);
            return out;
        }
        case ResolventWindow::UpFromZero: {
            if (x < 0.0) throw ConfigError("x must be >= 0 for the (0, inf) window");
            double y_extent = std::max(x + 4.0, 8.0);
            if (om.is_zero()) {
                // potential measure of the unkilled process: W(x)e^{R y} - W(x - y)
                OccupancyTriple occ = occupancy(model, 0.0);
                LambdaPair base = lambda_pair(model, 0.0);
                int count = static_cast<int>(std::lround(y_extent / opt.h)) + 1;
                out.y = node_positions(0.0, opt.h, count);
                out.density.reserve(count);
                Matrix wx = w_q(base, x);
                for (int j = 0; j < count; ++j) {
                    double yj = out.y[j];
                    out.density.push_back(wx * expm(occ.r_mat, yj) - w_q(base, x - yj));
                }
                return out;
            }
            // U(x, dy) = W(x) C(y) - W(x, y) with C(y) the growing-mode
            // ratio lim W(c)^{-1} W(c, y): exact in c, no truncation.
            double x_t = std::max({y_extent, om.tail_start(), x}) + 1.0;
            auto set = omega_scale_set(model, om, 0.0, x_t, opt.h);
            DualTailModes modes(set, model, om);
            Eigen::PartialPivLU<Matrix> aw0(modes.aw[0]);
            int node_x = set.index_of(x);
            MatrixGrid gx = omega_w_dual(set, node_x);
            Matrix wx = set.w.at(x);
            int keep = static_cast<int>(std::lround(y_extent / set.kernel->h)) + 1;
            out.density.reserve(keep);
            for (int j = 0; j < keep; ++j) {
                Matrix rho = wx * aw0.solve(modes.aw[j]);
                if (j <= node_x) rho -= gx.values[j];
                out.density.push_back(std::move(rho));
            }
            out.y = node_positions(0.0, set.kernel->h, keep);
            return out;
        }
        case ResolventWindow::DownFromC: {
            if (!c) throw ConfigError("(-inf, c) resolvent needs c");
            if (!(x <= *c)) throw ConfigError("x must be <= c");
            auto lc = om.left_constant();
            if (!lc)
                throw ConfigError(
                    "(-inf, c) resolvent requires omega constant on the negative half-line");
            double beta = *lc;
            Matrix m = one_sided_up(model, om, beta, x, *c, opt);

            // The lower truncation only bounds the emitted y range: W(c, y)
            // and W(x, y) never depend on anything below y.
            double y_floor = std::min(-opt.truncation_schedule.front(), x - 4.0);
            auto set = omega_scale_set(model, om, y_floor, *c, opt.h);
            int node_x = set.index_of(x);
            MatrixGrid gc = omega_w_dual(set, set.kernel->n_nodes);
            MatrixGrid gx = omega_w_dual(set, node_x);
            int count = set.kernel->n_nodes + 1;
            out.density.resize(count, Matrix::Zero(n, n));
            for (int j = 0; j < count; ++j) {
                out.density[j] = m * gc.values[j];
                if (j <= node_x) out.density[j] -= gx.values[j];
            }
            out.y = node_positions(y_floor, set.kernel->h, count);
            return out;
        }
        case ResolventWindow::FreeLine: {
            auto lc = om.left_constant();
            if (!lc)
                throw ConfigError(
                    "free-line resolvent requires omega constant on the negative half-line");
            if (om.is_zero())
                throw ConfigError("free-line resolvent needs a nonzero killing intensity");
            double beta = *lc;
            double y_floor = std::min(-4.0, x - 4.0);
            double y_ceil = std::max(4.0, x + 4.0);
            double x_t = std::max({y_ceil, om.tail_start(), x}) + 1.0;

            // H carries the same tail modes as W (its inhomogeneity solves
            // the homogeneous tail ODE), so lim H(c)^{-1} W(c, y) is the
            // ratio of the two growing-mode coefficients.
            MatrixGrid hgrid = omega_h(model, om, beta, x_t, opt.h);
            const double hh = hgrid.h;
            const int htop = hgrid.size() - 1;
            Matrix hx = (x >= 0.0) ? hgrid.at(x)
                                   : expm(occupancy(model, beta).lam_gen, -x);

            auto set = omega_scale_set(model, om, y_floor, x_t, opt.h);
            DualTailModes modes(set, model, om);
            Matrix s = modes.tail_pair.lam_plus + modes.tail_pair.lam_minus;
            Matrix v0h = hgrid.values[htop - 1];
            Matrix v1h = (hgrid.values[htop] - hgrid.values[htop - 2]) / (2.0 * hh);
            Matrix ah = s.partialPivLu().solve(modes.tail_pair.lam_minus * v0h - v1h);
            // both coefficient families rephased to the common level x_t
            ah = expm(modes.tail_pair.lam_plus, -(x_t - (htop - 1) * hh)) * ah;
            Eigen::PartialPivLU<Matrix> ah_lu(ah);

            int node_x = set.index_of(x);
            MatrixGrid gx = omega_w_dual(set, node_x);
            int first = set.index_of(y_floor);
            int last = set.index_of(y_ceil);
            int count = last - first + 1;
            out.density.resize(count, Matrix::Zero(n, n));
            for (int j = 0; j < count; ++j) {
                int idx = first + j;
                out.density[j] = hx * ah_lu.solve(modes.to_frame(modes.aw[idx], x_t));
                if (idx <= node_x) out.density[j] -= gx.values[idx];
            }
            out.y = node_positions(y_floor, set.kernel->h, count);
            return out;
        }
    }
    throw ConfigError("unknown resolvent window");
}

Matrix killing_probability(const MapModel& model, const OmegaFn& om, double d, double x,
                           double c, const FluctuationOptions& opt) {
    const int n = model.n_states();
    if (om.is_zero()) return Matrix::Zero(n, n);
    auto grid = resolvent(model, om, ResolventWindow::TwoBarrier, x, d, c, opt);
    const std::size_t count = grid.y.size();
    const double h = grid.y[1] - grid.y[0];
    Matrix kill = Matrix::Zero(n, n);
    for (std::size_t j = 0; j < count; ++j) {
        Vector w(n);
        for (int i = 0; i < n; ++i) w(i) = om.quadrature_value(i, grid.y[j]);
        double coef = (j == 0 || j + 1 == count) ? 0.5 : 1.0;
        kill += (coef * h) * (grid.density[j] * w.asDiagonal());
    }
    return kill;
}

}  // namespace omap
