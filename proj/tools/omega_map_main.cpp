// omega-map: scale matrices, exit identities, resolvents and barrier dividend
// values for Markov-modulated Brownian motion with level- and state-dependent
// killing, plus the Monte Carlo cross-check engine.

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "omega_map/config_io.hpp"
#include "omega_map/csv_io.hpp"
#include "omega_map/dividends.hpp"
#include "omega_map/fluctuation.hpp"
#include "omega_map/matrix_engine.hpp"
#include "omega_map/mc_oracle.hpp"
#include "omega_map/model.hpp"
#include "omega_map/scale_classic.hpp"
#include "omega_map/scale_omega.hpp"

namespace {

using json = nlohmann::json;
using namespace omap;

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

json vector_to_json(const Vector& v) {
    json row = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) row.push_back(v(i));
    return row;
}

void deliver(const std::string& payload, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << payload;
        if (!payload.empty() && payload.back() != '\n') std::cout << "\n";
    } else {
        write_file_atomic(out_path, payload);
    }
}

std::string grid_csv(const MatrixGrid& grid) {
    std::ostringstream os;
    emit_matrix_grid(grid, os);
    return os.str();
}

struct CommonArgs {
    std::string config_path;
    std::string out_path;
    std::string grid_override;
};

GridSpec effective_grid(const Config& cfg, const std::string& override_str) {
    if (override_str.empty()) return cfg.grid;
    GridSpec g;
    if (std::sscanf(override_str.c_str(), "%lf:%lf:%lf", &g.x_min, &g.x_max, &g.h) != 3)
        throw ConfigError("--grid expects min:max:h");
    if (!(g.h > 0) || !(g.x_max > g.x_min)) throw ConfigError("--grid bounds are invalid");
    return g;
}

struct VerifyRow {
    std::string name;
    bool pass;
    std::string detail;
};

int run_verify(const Config& cfg) {
    std::vector<VerifyRow> rows;
    auto check = [&](const std::string& name, auto&& fn) {
        try {
            auto [ok, detail] = fn();
            rows.push_back({name, ok, detail});
        } catch (const std::exception& e) {
            rows.push_back({name, false, e.what()});
        }
    };
    const MapModel& model = cfg.model;
    const OmegaFn& om = cfg.omega;
    const int n = model.n_states();

    check("generator_rows", [&]() {
        double worst = (laplace_exponent(model, 0.0) * Vector::Ones(n)).cwiseAbs().maxCoeff();
        std::ostringstream os;
        os << "max |F(0) 1| = " << worst;
        return std::pair{worst < 1e-12, os.str()};
    });
    check("solvent_residuals", [&]() {
        double worst = 0.0;
        for (double q : {0.05, 0.5}) {
            LambdaPair p = lambda_pair(model, q);
            Matrix a2 = (0.5 * model.sigma2()).asDiagonal();
            Matrix a0 = model.q_gen;
            a0.diagonal().array() -= q;
            Matrix mu = model.mu.asDiagonal();
            worst = std::max(worst,
                             (a2 * p.lam_plus * p.lam_plus - mu * p.lam_plus + a0).norm());
            worst = std::max(worst,
                             (a2 * p.lam_minus * p.lam_minus + mu * p.lam_minus + a0).norm());
            Matrix xi_id = p.xi.inverse() + 0.5 * Matrix((model.sigma2()).asDiagonal()) *
                                                (p.lam_plus + p.lam_minus);
            worst = std::max(worst, xi_id.norm());
        }
        std::ostringstream os;
        os << "max residual = " << worst;
        return std::pair{worst < 1e-8, os.str()};
    });
    check("solvent_relations", [&]() {
        double worst = 0.0;
        for (double q : {0.05, 0.5}) {
            LambdaPair p = lambda_pair(model, q);
            Matrix s = p.lam_plus + p.lam_minus;
            Matrix cq = s * p.lam_minus * s.inverse();
            Matrix dq = s * p.lam_plus * s.inverse();
            Vector two_mu = (2.0 * model.mu.array() / model.sigma2().array()).matrix();
            Matrix rhs = Matrix(Vector((2.0 / model.sigma2().array()).matrix()).asDiagonal()) *
                         (q * Matrix::Identity(n, n) - model.q_gen);
            worst = std::max(worst,
                             (Matrix(two_mu.asDiagonal()) - (p.lam_plus - cq)).norm());
            worst = std::max(worst, (cq * p.lam_plus - rhs).norm());
            worst = std::max(worst,
                             (Matrix(two_mu.asDiagonal()) - (dq - p.lam_minus)).norm());
            worst = std::max(worst, (dq * p.lam_minus - rhs).norm());
        }
        std::ostringstream os;
        os << "max deviation = " << worst;
        return std::pair{worst < 1e-8, os.str()};
    });
    check("omega_bounds", [&]() {
        std::uint64_t state = cfg.seed.value_or(12345);
        auto next = [&]() {
            state = state * 6364136223846793005ULL + 1442695040888963407ULL;
            return (state >> 11) * 0x1.0p-53;
        };
        double lo = 0.0, hi = 0.0;
        for (int i = 0; i < 10000; ++i) {
            int s = static_cast<int>(next() * n);
            double x = -20.0 + 40.0 * next();
            double w = om.eval(std::min(s, n - 1), x);
            lo = std::min(lo, w);
            hi = std::max(hi, w);
        }
        std::ostringstream os;
        os << "range [" << lo << ", " << hi << "], bound " << om.bound();
        return std::pair{lo >= 0.0 && hi <= om.bound() + 1e-12, os.str()};
    });
    check("volterra_residual_order", [&]() {
        double y0 = std::min(cfg.grid.x_min, 0.0);
        double top = y0 + std::min(2.0, cfg.grid.x_max - y0);
        double h = 2e-3;
        auto coarse = omega_scale_set(model, om, y0, top, h);
        auto fine = omega_scale_set(model, om, y0, top, h / 2.0);
        double rc = volterra_residual(coarse);
        double rf = volterra_residual(fine);
        double sup = 0.0;
        for (const auto& m : coarse.w.values) sup = std::max(sup, m.cwiseAbs().maxCoeff());
        std::ostringstream os;
        os << "residual " << rc << " -> " << rf << " (ratio " << rc / std::max(rf, 1e-300)
           << ")";
        bool ok = rc <= 5.0 * h * h * (1.0 + sup) && rc / std::max(rf, 1e-300) >= 3.5;
        return std::pair{ok, os.str()};
    });
    check("delta_shift_invariance", [&]() {
        double y0 = std::min(cfg.grid.x_min, 0.0);
        double top = y0 + std::min(2.0, cfg.grid.x_max - y0);
        auto a = omega_scale_set(model, om, y0, top, 5e-4, 0.0, 0.1);
        auto b = omega_scale_set(model, om, y0, top, 5e-4, 0.0, 1.0);
        double diff = 0.0;
        for (int k = 0; k < a.w.size(); ++k)
            diff = std::max(diff, (a.w.values[k] - b.w.values[k]).cwiseAbs().maxCoeff());
        std::ostringstream os;
        os << "max grid difference = " << diff;
        return std::pair{diff < 1e-6, os.str()};
    });
    if (om.bound() > 0.0) {
        check("conservation", [&]() {
            double d = 0.0;
            if (om.kind() == OmegaFn::Kind::AffineBand) d = -om.band_d();
            double c = std::min(4.0, cfg.grid.x_max);
            double x = 0.5 * (d + c);
            FluctuationOptions opt;
            opt.h = 1e-3;
            auto exit = two_sided_exit(model, om, d, x, c, opt);
            Matrix kill = killing_probability(model, om, d, x, c, opt);
            Vector total = exit.up.rowwise().sum() + exit.down.rowwise().sum() +
                           kill.rowwise().sum();
            double worst = (total.array() - 1.0).abs().maxCoeff();
            std::ostringstream os;
            os << "max |A1 + B1 + kill - 1| = " << worst;
            return std::pair{worst < 1e-3, os.str()};
        });
    }

    bool all = true;
    for (const auto& r : rows) {
        std::printf("%-28s %s  %s\n", r.name.c_str(), r.pass ? "PASS" : "FAIL",
                    r.detail.c_str());
        all = all && r.pass;
    }
    return all ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "omega-map: scale matrices, exit identities, resolvents and dividend values\n"
        "for Markov-modulated Brownian motion with state- and level-dependent killing"};
    app.require_subcommand(1);

    CommonArgs common;
    double q = 0.05, delta = 0.0, x = 0.0, c = 1.0, d = 0.0, y = 0.0, dt = 1e-3;
    long paths = 100000;
    std::uint64_t seed = 0;
    bool no_bridge = false;
    int j0 = 0, bins = 50;
    std::string what = "w", window = "dc", op = "exit", c_grid_str;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "configuration JSON path")
            ->required();
        sub->add_option("--out", common.out_path, "output path (stdout when omitted)");
        sub->add_option("--grid", common.grid_override, "override grid as min:max:h");
    };

    auto* sc = app.add_subcommand("scale", "classic q-scale matrix grids");
    add_common(sc);
    sc->add_option("--q", q, "killing rate");
    sc->add_option("--what", what, "w | wprime | z");

    auto* os_cmd = app.add_subcommand("omega-scale", "omega scale matrix grids");
    add_common(os_cmd);
    os_cmd->add_option("--y", y, "left endpoint of the scale matrix");
    os_cmd->add_option("--delta", delta, "extra constant discount added to omega");
    os_cmd->add_option("--what", what, "w | wprime | z");

    auto* ex = app.add_subcommand("exit", "two-sided exit matrices");
    add_common(ex);
    ex->add_option("--d", d, "lower barrier");
    ex->add_option("--x", x, "start level")->required();
    ex->add_option("--c", c, "upper barrier")->required();

    auto* res = app.add_subcommand("resolvent", "killed resolvent density");
    add_common(res);
    res->add_option("--window", window, "dc | 0inf | minfc | line");
    res->add_option("--x", x, "start level")->required();
    res->add_option("--d", d, "lower barrier (dc window)");
    res->add_option("--c", c, "upper barrier (dc, minfc windows)");

    auto* dv = app.add_subcommand("dividends", "barrier dividend value matrices");
    add_common(dv);
    dv->add_option("--d", d, "ruin floor depth (floor at -d)");
    dv->add_option("--delta", delta, "discount force")->required();
    dv->add_option("--c", c, "dividend barrier");
    dv->add_option("--x", x, "start level")->required();
    dv->add_option("--c-grid", c_grid_str, "sweep barriers min:max:step instead of --c");

    auto* omod = app.add_subcommand("omega-model", "affine-band omega model ODE grid");
    add_common(omod);
    omod->add_option("--delta", delta, "discount force")->required();

    auto* sim = app.add_subcommand("simulate", "Monte Carlo estimates");
    add_common(sim);
    sim->add_option("--op", op, "exit | dividends | resolvent");
    sim->add_option("--d", d, "lower barrier / floor depth");
    sim->add_option("--x", x, "start level")->required();
    sim->add_option("--c", c, "upper barrier");
    sim->add_option("--delta", delta, "discount force (dividends)");
    sim->add_option("--paths", paths, "path count");
    sim->add_option("--seed", seed, "RNG seed (config seed when omitted)");
    sim->add_option("--dt", dt, "time step");
    sim->add_option("--j0", j0, "start state (0-based)");
    sim->add_option("--bins", bins, "bins (resolvent)");
    sim->add_flag("--no-bridge", no_bridge, "disable the Brownian-bridge correction");

    auto* ver = app.add_subcommand("verify", "run the invariant suite for a config");
    add_common(ver);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        json err{{"error", "usage"}, {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return 1;
    }

    try {
        Config cfg = load_config_file(common.config_path);
        GridSpec grid = effective_grid(cfg, common.grid_override);
        const MapModel& model = cfg.model;

        if (sc->parsed()) {
            LambdaPair pair = lambda_pair(model, q);
            MatrixGrid g;
            g.x0 = std::max(0.0, grid.x_min);
            g.h = grid.h;
            int count = static_cast<int>(std::lround((grid.x_max - g.x0) / g.h)) + 1;
            for (int k = 0; k < count; ++k) {
                double xk = g.x0 + k * g.h;
                if (what == "wprime")
                    g.values.push_back(w_q_prime(pair, xk));
                else if (what == "z")
                    g.values.push_back(z_q(model, pair, xk));
                else
                    g.values.push_back(w_q(pair, xk));
            }
            deliver(grid_csv(g), common.out_path);
        } else if (os_cmd->parsed()) {
            if (!os_cmd->count("--y")) y = grid.x_min;
            auto set = omega_scale_set(model, cfg.omega, y, grid.x_max, grid.h, delta);
            if (what == "wprime")
                deliver(grid_csv(omega_w_prime(set)), common.out_path);
            else if (what == "z")
                deliver(grid_csv(set.z), common.out_path);
            else
                deliver(grid_csv(set.w), common.out_path);
        } else if (ex->parsed()) {
            FluctuationOptions opt;
            opt.h = grid.h;
            ExitResult r = two_sided_exit(model, cfg.omega, d, x, c, opt);
            json out{{"up", matrix_to_json(r.up)},
                     {"down", matrix_to_json(r.down)},
                     {"up_row_sums", vector_to_json(r.up.rowwise().sum())},
                     {"down_row_sums", vector_to_json(r.down.rowwise().sum())}};
            deliver(out.dump(2), common.out_path);
        } else if (res->parsed()) {
            FluctuationOptions opt;
            opt.h = grid.h;
            ResolventWindow w = ResolventWindow::TwoBarrier;
            std::optional<double> dd, cc;
            if (window == "dc") {
                dd = d;
                cc = c;
            } else if (window == "0inf") {
                w = ResolventWindow::UpFromZero;
            } else if (window == "minfc") {
                w = ResolventWindow::DownFromC;
                cc = c;
            } else if (window == "line") {
                w = ResolventWindow::FreeLine;
            } else {
                throw ConfigError("unknown resolvent window: " + window);
            }
            ResolventGrid rg = resolvent(model, cfg.omega, w, x, dd, cc, opt);
            MatrixGrid g;
            g.x0 = rg.y.front();
            g.h = rg.y.size() > 1 ? rg.y[1] - rg.y[0] : 1.0;
            g.values = rg.density;
            deliver(grid_csv(g), common.out_path);
        } else if (dv->parsed()) {
            if (!c_grid_str.empty()) {
                double c0, c1, step;
                if (std::sscanf(c_grid_str.c_str(), "%lf:%lf:%lf", &c0, &c1, &step) != 3 ||
                    !(step > 0))
                    throw ConfigError("--c-grid expects min:max:step");
                std::vector<double> cs;
                for (double cv = c0; cv <= c1 + 1e-12; cv += step) cs.push_back(cv);
                BarrierSweep sweep =
                    barrier_sweep(model, cfg.omega, d, delta, x, cs, grid.h);
                std::ostringstream osn;
                osn << "c";
                for (int i = 0; i < model.n_states(); ++i) osn << ",value_sum_" << (i + 1);
                osn << "\n";
                char buf[64];
                for (const auto& row : sweep.rows) {
                    std::snprintf(buf, sizeof(buf), "%.17g", row.c);
                    osn << buf;
                    for (Eigen::Index i = 0; i < row.row_sums.size(); ++i) {
                        std::snprintf(buf, sizeof(buf), "%.17g", row.row_sums(i));
                        osn << "," << buf;
                    }
                    osn << "\n";
                }
                deliver(osn.str(), common.out_path);
                json arg = json::array();
                for (int i = 0; i < model.n_states(); ++i)
                    arg.push_back(sweep.rows[sweep.argmax_per_state[i]].c);
                std::cerr << json{{"argmax_c_per_state", arg}}.dump() << "\n";
            } else {
                DividendQuery qy{model, cfg.omega, c, d, delta, x, grid.h};
                Matrix v = dividend_value(qy);
                json out{{"value", matrix_to_json(v)},
                         {"row_sums", vector_to_json(v.rowwise().sum())}};
                deliver(out.dump(2), common.out_path);
            }
        } else if (omod->parsed()) {
            if (cfg.omega.kind() != OmegaFn::Kind::AffineBand)
                throw ConfigError("omega-model requires an affine_band omega");
            double band = cfg.omega.band_d();
            double z_max = grid.x_max + band;
            MatrixGrid g = omega_model_ode_g(model, cfg.omega.gamma0(), cfg.omega.gamma1(),
                                             band, delta, z_max, grid.h);
            deliver(grid_csv(g), common.out_path);
        } else if (sim->parsed()) {
            PathConfig pc;
            pc.dt = dt;
            pc.n_paths = paths;
            pc.bridge_correction = !no_bridge;
            pc.seed = sim->count("--seed") ? seed : cfg.seed.value_or(20250809);
            json out;
            if (op == "exit") {
                ExitEstimates e = simulate_exit(model, cfg.omega, d, x, c, j0, pc);
                out = {{"up_mean", matrix_to_json(e.up.mean)},
                       {"up_se", matrix_to_json(e.up.std_err)},
                       {"down_mean", matrix_to_json(e.down.mean)},
                       {"down_se", matrix_to_json(e.down.std_err)},
                       {"n_paths", e.up.n_paths},
                       {"n_censored", e.up.n_censored}};
            } else if (op == "dividends") {
                if (!(delta > 0)) throw ConfigError("simulate dividends needs --delta > 0");
                DividendSim ds = simulate_dividends(model, cfg.omega, d, x, c, j0, delta, pc);
                out = {{"by_terminal", vector_to_json(ds.by_terminal)},
                       {"by_terminal_se", vector_to_json(ds.by_terminal_se)},
                       {"total_mean", ds.total_mean},
                       {"total_se", ds.total_se},
                       {"n_paths", ds.n_paths},
                       {"n_censored", ds.n_censored}};
            } else if (op == "resolvent") {
                ResolventSim rs = simulate_resolvent(model, cfg.omega, d, x, c, j0, bins, pc);
                out = {{"y_centers", rs.y_centers},
                       {"density", matrix_to_json(rs.density)},
                       {"density_se", matrix_to_json(rs.density_se)},
                       {"n_paths", rs.n_paths},
                       {"n_censored", rs.n_censored}};
            } else {
                throw ConfigError("unknown simulate op: " + op);
            }
            deliver(out.dump(2), common.out_path);
        } else if (ver->parsed()) {
            return run_verify(cfg);
        }
        return 0;
    } catch (const ConfigError& e) {
        json err{{"error", std::string(e.what()).rfind("config_not_found", 0) == 0
                               ? "config_not_found"
                               : "invalid_config"},
                 {"violations", e.violations()}};
        std::cerr << err.dump() << "\n";
        return 1;
    } catch (const NumericalError& e) {
        json err{{"error", "numerical"}, {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return 2;
    } catch (const std::exception& e) {
        json err{{"error", "internal"}, {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return 2;
    }
}
