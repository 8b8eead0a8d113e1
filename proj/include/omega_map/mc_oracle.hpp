#pragma once

#include <cstdint>
#include <vector>

#include "omega_map/model.hpp"

namespace omap {

struct PathConfig {
    double dt = 1e-3;
    double t_max = 200.0;          // censoring horizon
    long n_paths = 100000;
    std::uint64_t seed = 20250809;
    bool bridge_correction = true;
    int n_threads = 0;             // 0: hardware concurrency, capped by OMEGA_MAP_THREADS
};

struct McEstimate {
    Matrix mean;
    Matrix std_err;
    long n_paths = 0;
    long n_censored = 0;
};

struct ExitEstimates {
    McEstimate up;
    McEstimate down;
};

/// Exit simulation from the window (d, c) started at (x0, j0): kill events
/// are drawn by comparing the running integral of omega against an
/// independent unit exponential; estimates are indicator means per terminal
/// state with binomial standard errors. Fills row j0 of the matrices.
ExitEstimates simulate_exit(const MapModel& model, const OmegaFn& om, double d,
                            double x0, double c, int j0, const PathConfig& cfg);

/// Runs simulate_exit for every start state (n_paths each).
ExitEstimates simulate_exit_matrix(const MapModel& model, const OmegaFn& om, double d,
                                   double x0, double c, const PathConfig& cfg);

struct DividendSim {
    Vector by_terminal;     // discounted dividends split by the ruin state
    Vector by_terminal_se;
    double total_mean = 0;  // includes value accrued on censored paths
    double total_se = 0;
    long n_paths = 0;
    long n_censored = 0;
};

/// Barrier strategy at c with omega ruin at floor -d, discounting at
/// `discount`. Reflection uses sampled Brownian-bridge maxima when the
/// bridge correction is on, plain end-of-step clipping otherwise.
DividendSim simulate_dividends(const MapModel& model, const OmegaFn& om, double floor_d,
                               double x0, double c, int j0, double discount,
                               const PathConfig& cfg);

struct ResolventSim {
    std::vector<double> y_centers;
    Matrix density;      // n_bins x N
    Matrix density_se;   // +inf on bins no path visited
    long n_paths = 0;
    long n_censored = 0;
};

/// Occupation-time estimator of the killed resolvent density on (d, c):
/// every step deposits e^{-int omega} dt into the bin of the current level.
ResolventSim simulate_resolvent(const MapModel& model, const OmegaFn& om, double d,
                                double x0, double c, int j0, int n_bins,
                                const PathConfig& cfg);

}  // namespace omap
