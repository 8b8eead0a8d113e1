#include "omega_map/scale_omega.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "omega_map/matrix_engine.hpp"

namespace omap {

namespace {

// c += a * b on row-major n x n blocks. The Volterra sweeps spend nearly all
// their time here, so this stays on raw pointers.
inline void mat_acc(const double* a, const double* b, double* c, int n) {
    for (int i = 0; i < n; ++i) {
        const double* arow = a + i * n;
        double* crow = c + i * n;
        for (int k = 0; k < n; ++k) {
            const double aik = arow[k];
            const double* brow = b + k * n;
            for (int j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
}

inline void mat_acc_scaled(const double* a, const double* b, double s, double* c, int n) {
    for (int i = 0; i < n; ++i) {
        const double* arow = a + i * n;
        double* crow = c + i * n;
        for (int k = 0; k < n; ++k) {
            const double aik = s * arow[k];
            const double* brow = b + k * n;
            for (int j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
}

inline void copy_into(const Matrix& m, double* dst) {
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        dst, m.rows(), m.cols()) = m;
}

inline Matrix from_flat(const double* src, int n) {
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                          Eigen::RowMajor>>(src, n, n);
}

// diag(w) * H, into flat storage
inline void row_scale_into(const Vector& w, const double* h, double* dst, int n) {
    for (int i = 0; i < n; ++i) {
        const double wi = w(i);
        for (int j = 0; j < n; ++j) dst[i * n + j] = wi * h[i * n + j];
    }
}

// H * diag(w), into flat storage
inline void col_scale_into(const Vector& w, const double* h, double* dst, int n) {
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) dst[i * n + j] = h[i * n + j] * w(j);
}

struct FlatSeq {
    int n = 0;
    std::vector<double> data;
    FlatSeq() = default;
    FlatSeq(int count, int n_) : n(n_), data(static_cast<std::size_t>(count) * n_ * n_, 0.0) {}
    double* block(int k) { return data.data() + static_cast<std::size_t>(k) * n * n; }
    const double* block(int k) const {
        return data.data() + static_cast<std::size_t>(k) * n * n;
    }
};

// Forward substitution with trapezoid weights. inhom and out may alias
// conceptually but are separate buffers here.
void forward_sweep(int K, int n, double h, const double* ker, bool ker0_zero,
                   const std::vector<Vector>& weight, const double* inhom,
                   FlatSeq& out) {
    FlatSeq scaled(K + 1, n);  // diag(w_j) H_j
    const std::size_t b = static_cast<std::size_t>(n) * n;
    std::vector<double> s(b), rhs(b);

    std::memcpy(out.block(0), inhom, b * sizeof(double));
    row_scale_into(weight[0], out.block(0), scaled.block(0), n);

    Eigen::PartialPivLU<Matrix> local;
    for (int k = 1; k <= K; ++k) {
        std::fill(s.begin(), s.end(), 0.0);
        mat_acc_scaled(ker + k * b, scaled.block(0), 0.5, s.data(), n);
        for (int j = 1; j < k; ++j) mat_acc(ker + (k - j) * b, scaled.block(j), s.data(), n);
        for (std::size_t i = 0; i < b; ++i) rhs[i] = inhom[k * b + i] + h * s[i];
        if (ker0_zero) {
            std::memcpy(out.block(k), rhs.data(), b * sizeof(double));
        } else {
            Matrix m = Matrix::Identity(n, n) -
                       (0.5 * h) * from_flat(ker, n) * weight[k].asDiagonal().toDenseMatrix();
            Matrix hk = m.partialPivLu().solve(from_flat(rhs.data(), n));
            copy_into(hk, out.block(k));
        }
        row_scale_into(weight[k], out.block(k), scaled.block(k), n);
    }
}

// Backward sweep for the dual equation
//   G(y) = K(x_T - y) + int_y^{x_T} G(z) diag(w(z)) K(z - y) dz,
// marching the lower argument down from the fixed top node.
void dual_sweep(int T, int n, double h, const double* ker, bool ker0_zero,
                const std::vector<Vector>& weight, FlatSeq& out) {
    FlatSeq scaled(T + 1, n);  // G_m diag(w_m)
    const std::size_t b = static_cast<std::size_t>(n) * n;
    std::vector<double> s(b), rhs(b);

    std::memcpy(out.block(T), ker, b * sizeof(double));  // W(0)
    col_scale_into(weight[T], out.block(T), scaled.block(T), n);

    for (int j = T - 1; j >= 0; --j) {
        std::fill(s.begin(), s.end(), 0.0);
        mat_acc_scaled(scaled.block(T), ker + (T - j) * b, 0.5, s.data(), n);
        for (int m = j + 1; m < T; ++m) mat_acc(scaled.block(m), ker + (m - j) * b, s.data(), n);
        for (std::size_t i = 0; i < b; ++i) rhs[i] = ker[(T - j) * b + i] + h * s[i];
        if (ker0_zero) {
            std::memcpy(out.block(j), rhs.data(), b * sizeof(double));
        } else {
            Matrix m = Matrix::Identity(n, n) -
                       (0.5 * h) * weight[j].asDiagonal().toDenseMatrix() * from_flat(ker, n);
            Matrix gj = m.transpose().partialPivLu().solve(from_flat(rhs.data(), n).transpose()).transpose();
            copy_into(gj, out.block(j));
        }
        col_scale_into(weight[j], out.block(j), scaled.block(j), n);
    }
}

void picard_sweep(int K, int n, double h, const double* ker,
                  const std::vector<Vector>& weight, const double* inhom, FlatSeq& out) {
    const std::size_t b = static_cast<std::size_t>(n) * n;
    FlatSeq cur(K + 1, n), next(K + 1, n), scaled(K + 1, n);
    std::memcpy(cur.data.data(), inhom, cur.data.size() * sizeof(double));
    double scale = 1.0;
    for (double v : cur.data) scale = std::max(scale, std::abs(v));
    const int max_iter = 200;
    std::vector<double> s(b);
    for (int it = 0; it < max_iter; ++it) {
        for (int j = 0; j <= K; ++j) row_scale_into(weight[j], cur.block(j), scaled.block(j), n);
        for (int k = 0; k <= K; ++k) {
            std::fill(s.begin(), s.end(), 0.0);
            if (k > 0) {
                mat_acc_scaled(ker + k * b, scaled.block(0), 0.5, s.data(), n);
                for (int j = 1; j < k; ++j) mat_acc(ker + (k - j) * b, scaled.block(j), s.data(), n);
                mat_acc_scaled(ker, scaled.block(k), 0.5, s.data(), n);
            }
            for (std::size_t i = 0; i < b; ++i) next.block(k)[i] = inhom[k * b + i] + h * s[i];
        }
        double diff = 0.0;
        for (std::size_t i = 0; i < cur.data.size(); ++i) {
            diff = std::max(diff, std::abs(next.data[i] - cur.data[i]));
            scale = std::max(scale, std::abs(next.data[i]));
        }
        std::swap(cur.data, next.data);
        if (diff <= 1e-13 * scale) {
            out.data = cur.data;
            return;
        }
    }
    throw NumericalError("Picard iteration did not converge within 200 sweeps");
}

MatrixGrid to_grid(const FlatSeq& seq, double x0, double h, int count, int n) {
    MatrixGrid g;
    g.x0 = x0;
    g.h = h;
    g.values.reserve(count);
    for (int k = 0; k < count; ++k) g.values.push_back(from_flat(seq.block(k), n));
    return g;
}

// Simpson prefix integral over nodes 0..k of f_j (flat blocks), composite
// with a 3/8 tail when the interval count is odd.
void simpson_prefix(const FlatSeq& f, int k, double h, double* out, int n) {
    const std::size_t b = static_cast<std::size_t>(n) * n;
    std::fill(out, out + b, 0.0);
    auto add = [&](int j, double c) {
        const double* src = f.block(j);
        for (std::size_t i = 0; i < b; ++i) out[i] += c * src[i];
    };
    if (k <= 0) return;
    if (k == 1) {
        add(0, 0.5 * h);
        add(1, 0.5 * h);
        return;
    }
    int m = k;
    bool tail38 = (m % 2 == 1);
    int simpson_end = tail38 ? m - 3 : m;
    if (simpson_end >= 2) {
        add(0, h / 3.0);
        for (int j = 1; j < simpson_end; ++j) add(j, (j % 2 == 1 ? 4.0 : 2.0) * h / 3.0);
        add(simpson_end, h / 3.0);
    }
    if (tail38) {
        if (simpson_end < 0) throw NumericalError("simpson prefix needs k >= 1");
        add(m - 3, 3.0 * h / 8.0);
        add(m - 2, 9.0 * h / 8.0);
        add(m - 1, 9.0 * h / 8.0);
        add(m, 3.0 * h / 8.0);
    }
}

std::shared_ptr<ScaleKernel> build_kernel(const MapModel& model, const OmegaFn& om,
                                          double y, double x_max, double h,
                                          double discount, double delta) {
    auto kc = std::make_shared<ScaleKernel>();
    kc->model = model;
    kc->om = om;
    kc->y = y;
    kc->discount = discount;
    kc->delta = delta;
    kc->n = model.n_states();
    if (!(x_max > y)) throw ConfigError("grid upper end must exceed the origin y");
    if (!(h > 0)) throw ConfigError("grid step must be positive");
    int K = std::max(1, static_cast<int>(std::lround((x_max - y) / h)));
    kc->h = (x_max - y) / K;
    kc->n_nodes = K;

    kc->pair = (delta == 0.0) ? lambda_pair(model, 0.0)
                              : lambda_pair_killed(model, Vector::Constant(kc->n, delta));
    kc->pair.q = delta;

    const int n = kc->n;
    const std::size_t b = static_cast<std::size_t>(n) * n;
    kc->ker.resize((K + 1) * b);
    kc->ker_prime.resize((K + 1) * b);
    kc->zker.resize((K + 1) * b);

    const Matrix& lp = kc->pair.lam_plus;
    const Matrix& lm = kc->pair.lam_minus;
    const Matrix& xi = kc->pair.xi;
    Matrix ep_step = expm(lp, -kc->h);
    Matrix em_step = expm(lm, kc->h);
    Matrix ep = Matrix::Identity(n, n), em = Matrix::Identity(n, n);

    bool exact_integral = true;
    Eigen::FullPivLU<Matrix> lp_lu(lp), lm_lu(lm);
    if (!lp_lu.isInvertible() || !lm_lu.isInvertible()) exact_integral = false;

    Matrix q_shift = model.q_gen;
    q_shift.diagonal().array() -= delta;

    // fallback accumulator for the z samples when a solvent is singular
    Matrix iw_acc = Matrix::Zero(n, n);
    Matrix back_p, back_m;
    if (!exact_integral) {
        back_p = expm(lp, kc->h / 2.0);   // e^{-lp (k-1/2) h} = e^{-lp k h} back_p
        back_m = expm(lm, -kc->h / 2.0);
    }

    for (int k = 0; k <= K; ++k) {
        if (k > 0) {
            if (k % 1024 == 0) {  // cap drift of the running products
                ep = expm(lp, -k * kc->h);
                em = expm(lm, k * kc->h);
            } else {
                ep = ep * ep_step;
                em = em * em_step;
            }
        }
        Matrix w = (ep - em) * xi;
        Matrix wp = (-lp * ep - lm * em) * xi;
        copy_into(w, kc->ker.data() + k * b);
        copy_into(wp, kc->ker_prime.data() + k * b);

        Matrix iw;
        if (exact_integral) {
            iw = (lp_lu.solve(Matrix::Identity(n, n) - ep) -
                  lm_lu.solve(em - Matrix::Identity(n, n))) *
                 xi;
        } else {
            if (k > 0) {  // per-interval Simpson with the midpoint sample
                Matrix wm = (ep * back_p - em * back_m) * xi;
                Matrix w_prev = from_flat(kc->ker.data() + (k - 1) * b, n);
                iw_acc += (kc->h / 6.0) * (w_prev + 4.0 * wm + w);
            }
            iw = iw_acc;
        }
        // Inhomogeneity of the second scale equation under the delta shift:
        // the classic Z^(delta) = I - int_0^x W^(delta) (F(0) - delta I).
        // Equivalently h + delta W^(delta) * h for h = Z^(0); the identity
        // inhomogeneity of the unshifted equation is the scalar special
        // case, where Z^(0) == 1. Monte Carlo arbitration of the two-sided
        // down matrix fixes this choice: only the Z-seeded solution splits
        // the terminal-state mass correctly (row sums agree either way).
        Matrix z = Matrix::Identity(n, n) - iw * q_shift;
        copy_into(z, kc->zker.data() + k * b);
    }

    double k0 = 0.0;
    for (std::size_t i = 0; i < b; ++i) k0 = std::max(k0, std::abs(kc->ker[i]));
    kc->ker0_zero = k0 < 1e-13;

    // Interior jump nodes take the half-sum of the one-sided limits (keeps
    // the trapezoid second order); the grid endpoints take the one-sided
    // limit pointing into the domain.
    kc->weight.resize(K + 1);
    const double eps = 1e-6 * kc->h;
    for (int k = 0; k <= K; ++k) {
        Vector wv(n);
        double xk = y + k * kc->h;
        for (int i = 0; i < n; ++i) {
            double w;
            if (k == 0)
                w = om.eval(i, xk + eps);
            else if (k == K)
                w = om.eval(i, xk - eps);
            else
                w = om.quadrature_value(i, xk);
            wv(i) = w + discount - delta;
        }
        kc->weight[k] = wv;
    }
    return kc;
}

}  // namespace

double default_kernel_delta(const MapModel& model, const OmegaFn& om, double discount) {
    double mid = 0.5 * (om.lower_bound() + om.bound());
    double dk = discount + mid;
    if (dk <= 0.0 && std::abs(mean_drift(model)) < 1e-9) dk = 0.5;
    return dk;
}

OmegaScaleSet omega_scale_set(const MapModel& model, const OmegaFn& om, double y,
                              double x_max, double h, double discount,
                              std::optional<double> kernel_delta, VolterraMode mode) {
    double delta = kernel_delta ? *kernel_delta
                                : default_kernel_delta(model, om, discount);
    auto kc = build_kernel(model, om, y, x_max, h, discount, delta);
    const int K = kc->n_nodes;
    const int n = kc->n;

    OmegaScaleSet set;
    set.y = y;
    set.delta = delta;
    set.discount = discount;
    set.kernel = kc;

    FlatSeq hw(K + 1, n), hz(K + 1, n);
    if (mode == VolterraMode::ForwardSubstitution) {
        forward_sweep(K, n, kc->h, kc->ker.data(), kc->ker0_zero, kc->weight,
                      kc->ker.data(), hw);
        forward_sweep(K, n, kc->h, kc->ker.data(), kc->ker0_zero, kc->weight,
                      kc->zker.data(), hz);
    } else {
        picard_sweep(K, n, kc->h, kc->ker.data(), kc->weight, kc->ker.data(), hw);
        picard_sweep(K, n, kc->h, kc->ker.data(), kc->weight, kc->zker.data(), hz);
    }
    set.w = to_grid(hw, y, kc->h, K + 1, n);
    set.z = to_grid(hz, y, kc->h, K + 1, n);
    return set;
}

Matrix omega_w(const MapModel& model, const OmegaFn& om, double x, double y, double h,
               double discount) {
    if (x <= y) return Matrix::Zero(model.n_states(), model.n_states());
    auto set = omega_scale_set(model, om, y, x, h, discount);
    return set.w.back();
}

Matrix omega_z(const MapModel& model, const OmegaFn& om, double x, double y, double h,
               double discount) {
    if (x <= y) return Matrix::Identity(model.n_states(), model.n_states());
    auto set = omega_scale_set(model, om, y, x, h, discount);
    return set.z.back();
}

namespace {

// d/dx of the delta-shifted equation at one node:
//   K'(x - y) + int K'(x - z) w(z) H(z) dz + K(0) w(x) H(x).
Matrix prime_at(const OmegaScaleSet& set, const MatrixGrid& part, int node,
                bool z_part) {
    const auto& kc = *set.kernel;
    const int n = kc.n;
    const std::size_t b = static_cast<std::size_t>(n) * n;
    if (node < 0 || node > kc.n_nodes) throw ConfigError("derivative node out of range");

    Matrix base;
    if (z_part) {
        // Z^(delta)'(v) = -W^(delta)(v) (F(0) - delta I)
        Matrix q_shift = kc.model.q_gen;
        q_shift.diagonal().array() -= kc.delta;
        base = -from_flat(kc.kblock(node), n) * q_shift;
    } else {
        base = from_flat(kc.kpblock(node), n);
    }

    // trapezoid over [y, x_node] of K'(x-z) w(z) H(z)
    std::vector<double> s(b, 0.0);
    std::vector<double> pj(b);
    if (node > 0) {
        for (int j = 0; j <= node; ++j) {
            Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                     Eigen::RowMajor>>
                pj_map(pj.data(), n, n);
            pj_map = kc.weight[j].asDiagonal() * part.values[j];
            double c = (j == 0 || j == node) ? 0.5 : 1.0;
            mat_acc_scaled(kc.kpblock(node - j), pj.data(), c, s.data(), n);
        }
    }
    Matrix integral = kc.h * from_flat(s.data(), n);
    Matrix tail = Matrix::Zero(n, n);
    if (!kc.ker0_zero) {
        tail = from_flat(kc.kblock(0), n) *
               (kc.weight[node].asDiagonal() * part.values[node]);
    }
    return base + integral + tail;
}

}  // namespace

Matrix omega_w_prime_at(const OmegaScaleSet& set, int node) {
    return prime_at(set, set.w, node, false);
}

Matrix omega_z_prime_at(const OmegaScaleSet& set, int node) {
    return prime_at(set, set.z, node, true);
}

MatrixGrid omega_w_prime(const OmegaScaleSet& set) {
    const auto& kc = *set.kernel;
    MatrixGrid g;
    g.x0 = set.y;
    g.h = kc.h;
    g.values.reserve(kc.n_nodes + 1);
    for (int k = 0; k <= kc.n_nodes; ++k) g.values.push_back(omega_w_prime_at(set, k));
    return g;
}

MatrixGrid omega_w_dual(const OmegaScaleSet& set, int top) {
    const auto& kc = *set.kernel;
    if (top < 0 || top > kc.n_nodes) throw ConfigError("dual sweep top node out of range");
    FlatSeq g(top + 1, kc.n);
    dual_sweep(top, kc.n, kc.h, kc.ker.data(), kc.ker0_zero, kc.weight, g);
    return to_grid(g, set.y, kc.h, top + 1, kc.n);
}

MatrixGrid omega_h(const MapModel& model, const OmegaFn& om, double beta, double x_max,
                   double h) {
    auto lc = om.left_constant();
    if (!lc || std::abs(*lc - beta) > 1e-12)
        throw ConfigError("one-sided H requires omega == beta on the negative half-line");
    OccupancyTriple occ = occupancy(model, beta);  // enforces beta > 0 or drift != 0

    auto kc = build_kernel(model, om, 0.0, x_max, h, 0.0, beta);
    const int K = kc->n_nodes;
    const int n = kc->n;

    // Inhomogeneity e^{-Lambda^beta x}: the deep-barrier limit of
    // W^(omega)(x, d) e^{-R^beta d} (L^beta)^{-1} turns the L e^{-R x} L^{-1}
    // factor into the upward ladder exponential.
    FlatSeq inhom(K + 1, n);
    Matrix step = expm(occ.lam_gen, -kc->h);
    Matrix cur = Matrix::Identity(n, n);
    for (int k = 0; k <= K; ++k) {
        if (k > 0)
            cur = (k % 1024 == 0) ? expm(occ.lam_gen, -k * kc->h) : (cur * step).eval();
        copy_into(cur, inhom.block(k));
    }
    FlatSeq out(K + 1, n);
    forward_sweep(K, n, kc->h, kc->ker.data(), kc->ker0_zero, kc->weight,
                  inhom.data.data(), out);
    return to_grid(out, 0.0, kc->h, K + 1, n);
}

MatrixGrid volterra_solve(const VolterraProblem& p, VolterraMode mode) {
    const int n = static_cast<int>(p.inhomogeneity.values.front().rows());
    const int K = p.inhomogeneity.size() - 1;
    if (p.kernel.size() < K + 1)
        throw ConfigError("kernel grid shorter than the inhomogeneity grid");
    if (static_cast<int>(p.weight.size()) < K + 1)
        throw ConfigError("weight list shorter than the inhomogeneity grid");
    if (std::abs(p.kernel.h - p.inhomogeneity.h) > 1e-12 * p.kernel.h)
        throw ConfigError("kernel and inhomogeneity grids must share the step");
    const double h = p.inhomogeneity.h;
    const std::size_t b = static_cast<std::size_t>(n) * n;

    FlatSeq ker(K + 1, n), inhom(K + 1, n), out(K + 1, n);
    for (int k = 0; k <= K; ++k) {
        copy_into(p.kernel.values[k], ker.block(k));
        copy_into(p.inhomogeneity.values[k], inhom.block(k));
    }
    double k0 = 0.0;
    for (std::size_t i = 0; i < b; ++i) k0 = std::max(k0, std::abs(ker.data[i]));
    bool ker0_zero = k0 < 1e-13;

    if (mode == VolterraMode::ForwardSubstitution)
        forward_sweep(K, n, h, ker.data.data(), ker0_zero, p.weight, inhom.data.data(), out);
    else
        picard_sweep(K, n, h, ker.data.data(), p.weight, inhom.data.data(), out);
    return to_grid(out, p.y, h, K + 1, n);
}

double volterra_residual(const OmegaScaleSet& set, bool z_part) {
    const auto& kc = *set.kernel;
    const int n = kc.n;
    const int K = kc.n_nodes;
    const std::size_t b = static_cast<std::size_t>(n) * n;
    const MatrixGrid& part = z_part ? set.z : set.w;

    double resid = 0.0;
    std::vector<double> integral(b);
    FlatSeq f(K + 1, n);
    for (int k = 1; k <= K; ++k) {
        // f_j = K(x_k - z_j) w_j H_j for j = 0..k
        for (int j = 0; j <= k; ++j) {
            Matrix pj = kc.weight[j].asDiagonal() * part.values[j];
            Matrix fj = from_flat(kc.kblock(k - j), n) * pj;
            copy_into(fj, f.block(j));
        }
        simpson_prefix(f, k, kc.h, integral.data(), n);
        const double* base = z_part ? kc.zblock(k) : kc.kblock(k);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                double v = part.values[k](i, j) - base[i * n + j] -
                           integral[i * n + j];
                resid = std::max(resid, std::abs(v));
            }
    }
    return resid;
}

// ---------------------------------------------------------------------------
// Step omega

Matrix step_omega_w(const MapModel& model, const std::vector<double>& levels,
                    const std::vector<double>& values, double x, double y, double h) {
    if (!(x > y)) throw ConfigError("step omega recursion needs x > y");
    if (values.size() != levels.size() + 1)
        throw ConfigError("step omega needs one more value than levels");
    const int n = model.n_states();
    int K = std::max(1, static_cast<int>(std::lround((x - y) / h)));
    const double hh = (x - y) / K;
    const std::size_t b = static_cast<std::size_t>(n) * n;

    auto sample_kernel = [&](double p, FlatSeq& dst) {
        LambdaPair pr = lambda_pair_killed(model, Vector::Constant(n, p));
        Matrix ep_step = expm(pr.lam_plus, -hh), em_step = expm(pr.lam_minus, hh);
        Matrix ep = Matrix::Identity(n, n), em = Matrix::Identity(n, n);
        for (int k = 0; k <= K; ++k) {
            if (k > 0) {
                if (k % 1024 == 0) {
                    ep = expm(pr.lam_plus, -k * hh);
                    em = expm(pr.lam_minus, k * hh);
                } else {
                    ep = ep * ep_step;
                    em = em * em_step;
                }
            }
            copy_into((ep - em) * pr.xi, dst.block(k));
        }
    };

    FlatSeq g_prev(K + 1, n);
    sample_kernel(values[0], g_prev);  // W^(p0)(z - y) on the grid

    FlatSeq ker(K + 1, n), f(K + 1, n), g_next(K + 1, n);
    std::vector<double> integral(b);
    for (std::size_t seg = 0; seg < levels.size(); ++seg) {
        double xl = levels[seg];
        if (xl >= x) break;
        int idx = xl <= y ? 0 : static_cast<int>(std::lround((xl - y) / hh));
        if (std::abs(y + idx * hh - xl) > 1e-6 && xl > y)
            throw ConfigError("step omega level does not sit on the quadrature grid");
        double dp = values[seg + 1] - values[seg];
        sample_kernel(values[seg + 1], ker);
        g_next.data = g_prev.data;
        for (int j = idx + 1; j <= K; ++j) {
            for (int m = idx; m <= j; ++m) {
                double* fb = f.block(m - idx);
                std::fill(fb, fb + b, 0.0);
                mat_acc(ker.block(j - m), g_prev.block(m), fb, n);
            }
            simpson_prefix(f, j - idx, hh, integral.data(), n);
            double* dst = g_next.block(j);
            for (std::size_t i = 0; i < b; ++i) dst[i] = g_prev.block(j)[i] + dp * integral[i];
        }
        std::swap(g_prev.data, g_next.data);
    }
    return from_flat(g_prev.block(K), n);
}

StepConstants step_constants(const MapModel& model, double p0, double p1) {
    if (p0 == p1) throw ConfigError("step constants need p0 != p1");
    const int n = model.n_states();
    LambdaPair a = lambda_pair_killed(model, Vector::Constant(n, p0));
    LambdaPair c = lambda_pair_killed(model, Vector::Constant(n, p1));
    Matrix s = c.lam_plus + c.lam_minus;
    Eigen::PartialPivLU<Matrix> slu(s);
    const double inv_dp = 1.0 / (p1 - p0);

    StepConstants out;
    out.c = -slu.solve(a.lam_plus + c.lam_minus) * inv_dp;
    out.d = slu.solve(a.lam_minus - c.lam_minus) * inv_dp;
    out.e = -slu.solve(a.lam_plus - c.lam_plus) * inv_dp;
    out.f = slu.solve(a.lam_minus + c.lam_plus) * inv_dp;

    const double tol = 1e-8 * (c.xi.norm() + 1.0);
    if ((c.lam_plus * out.c - out.c * a.lam_plus - c.xi).norm() > tol ||
        (c.lam_plus * out.d + out.d * a.lam_minus - c.xi).norm() > tol ||
        (c.lam_minus * out.e + out.e * a.lam_plus + c.xi).norm() > tol ||
        (c.lam_minus * out.f - out.f * a.lam_minus + c.xi).norm() > tol)
        throw NumericalError("step constants fail their Sylvester identities");
    return out;
}

Matrix closed_step_omega_w(const MapModel& model, double p0, double p1, double x1,
                           double x, double y) {
    if (p0 == p1) throw ConfigError("closed step form needs p0 != p1");
    if (!(x > y)) throw ConfigError("closed step form needs x > y");
    const int n = model.n_states();
    LambdaPair a = lambda_pair_killed(model, Vector::Constant(n, p0));
    if (x <= x1) return w_q(a, x - y);
    LambdaPair c = lambda_pair_killed(model, Vector::Constant(n, p1));
    Matrix s = c.lam_plus + c.lam_minus;
    Eigen::PartialPivLU<Matrix> slu(s);
    Matrix bracket = expm(c.lam_plus, -(x - x1)) * slu.solve(c.lam_minus) +
                     expm(c.lam_minus, x - x1) * slu.solve(c.lam_plus);
    Matrix half_sigma2 = (0.5 * model.sigma2()).asDiagonal();
    // The last term carries a plus: expanding the recursion through the four
    // Sylvester constants and using (p1-p0)(E-C) = (p1-p0)(F-D) = I leaves
    // + W^(p1) diag(sigma^2/2) W^(p0)', which brute-force quadrature of the
    // defining integral confirms.
    return bracket * w_q(a, x1 - y) +
           w_q(c, x - x1) * half_sigma2 * w_q_prime(a, x1 - y);
}

// ---------------------------------------------------------------------------
// Omega model ODE route

namespace {

struct OdeState {
    Matrix g, gp;
};

}  // namespace

MatrixGrid omega_model_ode_g(const MapModel& model, double gamma0, double gamma1,
                             double d, double delta, double z_max, double h,
                             bool check_step) {
    if (!(h > 0) || !(z_max > 0)) throw ConfigError("omega model ODE needs h, z_max > 0");
    const int n = model.n_states();
    Vector inv_half_sigma2 = (2.0 / model.sigma2().array()).matrix();
    Vector drift_coeff = (2.0 * model.mu.array() / model.sigma2().array()).matrix();

    auto band = [&](double z) {
        return (z >= 0.0 && z <= d) ? gamma0 + gamma1 * z : 0.0;
    };
    auto deriv = [&](double z, const OdeState& s, OdeState& out) {
        out.g = s.gp;
        double w = band(z) + delta;
        Matrix rhs = w * s.g - model.q_gen * s.g;
        out.gp = inv_half_sigma2.asDiagonal() * rhs - drift_coeff.asDiagonal() * s.gp;
    };
    auto rk4_run = [&](double step, int count, MatrixGrid* grid) {
        OdeState s{Matrix::Zero(n, n), Matrix(inv_half_sigma2.asDiagonal())};
        if (grid) grid->values.push_back(s.g);
        OdeState k1, k2, k3, k4, tmp;
        for (int i = 0; i < count; ++i) {
            double z = i * step;
            deriv(z, s, k1);
            tmp.g = s.g + 0.5 * step * k1.g;
            tmp.gp = s.gp + 0.5 * step * k1.gp;
            deriv(z + 0.5 * step, tmp, k2);
            tmp.g = s.g + 0.5 * step * k2.g;
            tmp.gp = s.gp + 0.5 * step * k2.gp;
            deriv(z + 0.5 * step, tmp, k3);
            tmp.g = s.g + step * k3.g;
            tmp.gp = s.gp + step * k3.gp;
            deriv(z + step, tmp, k4);
            s.g += (step / 6.0) * (k1.g + 2.0 * k2.g + 2.0 * k3.g + k4.g);
            s.gp += (step / 6.0) * (k1.gp + 2.0 * k2.gp + 2.0 * k3.gp + k4.gp);
            if (grid) grid->values.push_back(s.g);
        }
        return s.g;
    };

    int K = std::max(1, static_cast<int>(std::lround(z_max / h)));
    const double hh = z_max / K;
    MatrixGrid grid;
    grid.x0 = 0.0;
    grid.h = hh;
    grid.values.reserve(K + 1);
    Matrix end = rk4_run(hh, K, &grid);

    if (check_step) {
        Matrix end_half = rk4_run(hh / 2.0, 2 * K, nullptr);
        double err = (end - end_half).cwiseAbs().maxCoeff();
        double scale = 1.0 + end_half.cwiseAbs().maxCoeff();
        if (err > 1e-6 * scale)
            throw NumericalError("omega model ODE step too large for the requested accuracy");
    }
    return grid;
}

}  // namespace omap
