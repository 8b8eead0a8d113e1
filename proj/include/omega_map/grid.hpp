#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "omega_map/errors.hpp"

namespace omap {

/// A matrix-valued function sampled on a uniform 1-D grid:
/// values[k] ~ M(x0 + k h). The in-between query interpolates linearly.
struct MatrixGrid {
    double x0 = 0.0;
    double h = 0.0;
    std::vector<Eigen::MatrixXd> values;

    int size() const { return static_cast<int>(values.size()); }
    double x_at(int k) const { return x0 + k * h; }
    double x_max() const { return x0 + (size() - 1) * h; }

    int nearest_index(double x) const {
        int k = static_cast<int>(std::lround((x - x0) / h));
        if (k < 0) k = 0;
        if (k >= size()) k = size() - 1;
        return k;
    }

    const Eigen::MatrixXd& at_index(int k) const { return values.at(k); }
    const Eigen::MatrixXd& back() const { return values.back(); }

    Eigen::MatrixXd at(double x) const {
        if (values.empty()) throw NumericalError("empty matrix grid");
        double s = (x - x0) / h;
        if (s <= 0.0) return values.front();
        int k = static_cast<int>(std::floor(s));
        if (k >= size() - 1) return values.back();
        double w = s - k;
        if (w < 1e-12) return values[k];
        return (1.0 - w) * values[k] + w * values[k + 1];
    }
};

}  // namespace omap
