#include "omega_map/dividends.hpp"

#include <algorithm>
#include <cmath>

#include "omega_map/matrix_engine.hpp"

namespace omap {

namespace {

Matrix right_divide(const Matrix& a, const Matrix& b) {
    return b.transpose().partialPivLu().solve(a.transpose()).transpose();
}

Matrix value_from_set(const OmegaScaleSet& set, double x, double c) {
    int node_c = set.index_of(c);
    Matrix wp_c = omega_w_prime_at(set, node_c);
    Eigen::FullPivLU<Matrix> lu(wp_c);
    if (!lu.isInvertible())
        throw NumericalError("derivative scale matrix at the barrier is singular");
    if (x <= c) return right_divide(set.w.at(x), wp_c);
    const auto n = wp_c.rows();
    Matrix lump = (x - c) * Matrix::Identity(n, n);
    return lump + right_divide(set.w.at(c), wp_c);
}

}  // namespace

Matrix dividend_value(const DividendQuery& q) {
    if (!(q.barrier_c > 0.0)) throw ConfigError("dividend barrier c must be > 0");
    if (!(q.floor_d >= 0.0)) throw ConfigError("ruin floor d must be >= 0");
    if (!(q.discount > 0.0)) throw ConfigError("discount delta must be > 0");
    if (!(q.start_x > -q.floor_d))
        throw ConfigError("start level must lie above the ruin floor -d");
    auto set = omega_scale_set(q.model, q.omega, -q.floor_d, q.barrier_c, q.h,
                               q.discount);
    return value_from_set(set, q.start_x, q.barrier_c);
}

BarrierSweep barrier_sweep(const MapModel& model, const OmegaFn& om, double floor_d,
                           double discount, double x, const std::vector<double>& c_grid,
                           double h) {
    if (c_grid.empty()) throw ConfigError("barrier sweep needs a nonempty c grid");
    for (std::size_t i = 0; i < c_grid.size(); ++i) {
        if (!(c_grid[i] > 0.0)) throw ConfigError("barrier sweep levels must be > 0");
        if (i > 0 && !(c_grid[i] > c_grid[i - 1]))
            throw ConfigError("barrier sweep levels must be ascending");
    }
    double c_max = c_grid.back();
    auto set = omega_scale_set(model, om, -floor_d, c_max, h, discount);

    BarrierSweep sweep;
    sweep.rows.reserve(c_grid.size());
    for (double c : c_grid) {
        BarrierSweepRow row;
        row.c = c;
        row.value = value_from_set(set, x, c);
        row.row_sums = row.value.rowwise().sum();
        sweep.rows.push_back(std::move(row));
    }
    const int n = model.n_states();
    sweep.argmax_per_state.assign(n, 0);
    for (int i = 0; i < n; ++i) {
        double best = sweep.rows[0].row_sums(i);
        for (std::size_t r = 1; r < sweep.rows.size(); ++r) {
            if (sweep.rows[r].row_sums(i) > best) {
                best = sweep.rows[r].row_sums(i);
                sweep.argmax_per_state[i] = static_cast<int>(r);
            }
        }
    }
    return sweep;
}

}  // namespace omap
