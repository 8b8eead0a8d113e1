#pragma once

#include <random>

#include "omega_map/model.hpp"

namespace omap::testing {

// Figure parameter sets used throughout the suites.
inline MapModel fig1_model() {
    Matrix q(2, 2);
    q << -0.05, 0.05, 0.1, -0.1;
    Vector sigma(2), mu(2);
    sigma << 1.0, 1.2;
    mu << 0.0, 0.0;
    return MapModel::validated(q, sigma, mu);
}

inline MapModel fig3_model() {
    Matrix q(2, 2);
    q << -0.1, 0.1, 0.3, -0.3;
    Vector sigma(2), mu(2);
    sigma << 0.7, 0.85;
    mu << 0.1, -0.1;
    return MapModel::validated(q, sigma, mu);
}

inline MapModel band_model() {
    Matrix q(2, 2);
    q << -0.4, 0.4, 0.2, -0.2;
    Vector sigma(2), mu(2);
    sigma << 1.2, 2.0;
    mu << 1.75, 1.25;
    return MapModel::validated(q, sigma, mu);
}

inline MapModel scalar_model(double sigma, double mu) {
    Matrix q = Matrix::Zero(1, 1);
    Vector s(1), m(1);
    s << sigma;
    m << mu;
    return MapModel::validated(q, s, m);
}

inline MapModel random_model(std::mt19937_64& rng, int n, bool zero_drift = false) {
    std::uniform_real_distribution<double> unit(0.1, 1.0);
    Matrix q = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        double row = 0.0;
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            q(i, j) = 0.5 * unit(rng);
            row += q(i, j);
        }
        q(i, i) = -row;
    }
    Vector sigma(n), mu(n);
    for (int i = 0; i < n; ++i) {
        sigma(i) = 0.5 + unit(rng);
        mu(i) = zero_drift ? 0.0 : -0.5 + unit(rng);
    }
    return MapModel::validated(q, sigma, mu);
}

}  // namespace omap::testing
