#pragma once

#include <vector>

#include "omega_map/scale_omega.hpp"

namespace omap {

/// Barrier-strategy dividend valuation under omega ruin: reflect at c, pay
/// the overflow, discount at delta, stop at the omega ruin time with floor -d.
struct DividendQuery {
    MapModel model;
    OmegaFn omega;
    double barrier_c = 1.0;   // > 0
    double floor_d = 0.0;     // >= 0, ruin floor at -d
    double discount = 0.0;    // > 0
    double start_x = 0.0;     // > -d
    double h = 1e-3;
};

/// v_c(x): W^(delta+omega)(x,-d) W^(delta+omega)'(c,-d)^{-1} up to the
/// barrier; past it a lump (x - c) lands on the diagonal.
Matrix dividend_value(const DividendQuery& q);

struct BarrierSweepRow {
    double c = 0.0;
    Matrix value;
    Vector row_sums;
};

struct BarrierSweep {
    std::vector<BarrierSweepRow> rows;
    std::vector<int> argmax_per_state;  // index into rows maximizing each row sum
};

BarrierSweep barrier_sweep(const MapModel& model, const OmegaFn& om, double floor_d,
                           double discount, double x, const std::vector<double>& c_grid,
                           double h = 1e-3);

}  // namespace omap
