#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "omega_map/dividends.hpp"
#include "omega_map/fluctuation.hpp"
#include "omega_map/mc_oracle.hpp"
#include "omega_map/model.hpp"
#include "omega_map/scale_classic.hpp"
#include "omega_map/scale_omega.hpp"

namespace py = pybind11;
using namespace omap;

namespace {

py::tuple grid_to_tuple(const MatrixGrid& g) {
    py::list xs, values;
    for (int k = 0; k < g.size(); ++k) {
        xs.append(g.x_at(k));
        values.append(g.values[k]);
    }
    return py::make_tuple(xs, values);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Scale matrices, omega-killed exit identities, resolvents and barrier "
              "dividend values for Markov-modulated Brownian motion";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_RuntimeError);

    py::class_<MapModel>(m, "MapModel")
        .def(py::init([](const Matrix& q, const Vector& sigma, const Vector& mu) {
                 return MapModel::validated(q, sigma, mu);
             }),
             py::arg("Q"), py::arg("sigma"), py::arg("mu"))
        .def_property_readonly("n_states", &MapModel::n_states)
        .def_readonly("Q", &MapModel::q_gen)
        .def_readonly("sigma", &MapModel::sigma)
        .def_readonly("mu", &MapModel::mu);

    py::class_<OmegaFn>(m, "OmegaFn")
        .def_static("constant", &OmegaFn::constant, py::arg("beta"))
        .def_static("per_state", &OmegaFn::per_state, py::arg("values"))
        .def_static("step", &OmegaFn::step, py::arg("levels"), py::arg("values"))
        .def_static("affine_band", &OmegaFn::affine_band, py::arg("gamma0"),
                    py::arg("gamma1"), py::arg("d"))
        .def_static("tabulated", &OmegaFn::tabulated, py::arg("x"), py::arg("values"))
        .def("__call__", &OmegaFn::eval, py::arg("state"), py::arg("x"))
        .def("shifted", &OmegaFn::shifted, py::arg("y"))
        .def_property_readonly("bound", &OmegaFn::bound);

    m.def("laplace_exponent", &laplace_exponent, py::arg("model"), py::arg("alpha"));
    m.def("stationary_distribution", &stationary_distribution, py::arg("model"));
    m.def("mean_drift", &mean_drift, py::arg("model"));

    py::class_<LambdaPair>(m, "LambdaPair")
        .def_readonly("lam_plus", &LambdaPair::lam_plus)
        .def_readonly("lam_minus", &LambdaPair::lam_minus)
        .def_readonly("xi", &LambdaPair::xi)
        .def_readonly("q", &LambdaPair::q);
    m.def("lambda_pair", &lambda_pair, py::arg("model"), py::arg("q"));

    m.def("w_q", py::overload_cast<const MapModel&, double, double>(&w_q),
          py::arg("model"), py::arg("q"), py::arg("x"));
    m.def("w_q_prime", py::overload_cast<const MapModel&, double, double>(&w_q_prime),
          py::arg("model"), py::arg("q"), py::arg("x"));
    m.def("z_q", py::overload_cast<const MapModel&, double, double>(&z_q),
          py::arg("model"), py::arg("q"), py::arg("x"));
    m.def("analytic_w2_zero_drift", &analytic_w2_zero_drift, py::arg("sigma1"),
          py::arg("sigma2"), py::arg("q11"), py::arg("q22"), py::arg("q"), py::arg("x"));
    m.def("constant_omega_w2", &constant_omega_w2, py::arg("sigma1"), py::arg("sigma2"),
          py::arg("q11"), py::arg("q22"), py::arg("omega1"), py::arg("omega2"),
          py::arg("x"));

    m.def("omega_w", &omega_w, py::arg("model"), py::arg("omega"), py::arg("x"),
          py::arg("y") = 0.0, py::arg("h") = 1e-3, py::arg("discount") = 0.0);
    m.def("omega_z", &omega_z, py::arg("model"), py::arg("omega"), py::arg("x"),
          py::arg("y") = 0.0, py::arg("h") = 1e-3, py::arg("discount") = 0.0);
    m.def(
        "omega_w_grid",
        [](const MapModel& model, const OmegaFn& om, double y, double x_max, double h,
           double discount) {
            auto set = omega_scale_set(model, om, y, x_max, h, discount);
            return py::make_tuple(grid_to_tuple(set.w), grid_to_tuple(set.z));
        },
        py::arg("model"), py::arg("omega"), py::arg("y"), py::arg("x_max"),
        py::arg("h") = 1e-3, py::arg("discount") = 0.0);
    m.def("step_omega_w", &step_omega_w, py::arg("model"), py::arg("levels"),
          py::arg("values"), py::arg("x"), py::arg("y") = 0.0, py::arg("h") = 1e-3);
    m.def("closed_step_omega_w", &closed_step_omega_w, py::arg("model"), py::arg("p0"),
          py::arg("p1"), py::arg("x1"), py::arg("x"), py::arg("y") = 0.0);
    m.def(
        "omega_model_ode_g",
        [](const MapModel& model, double g0, double g1, double d, double delta,
           double z_max, double h) {
            return grid_to_tuple(omega_model_ode_g(model, g0, g1, d, delta, z_max, h));
        },
        py::arg("model"), py::arg("gamma0"), py::arg("gamma1"), py::arg("d"),
        py::arg("delta"), py::arg("z_max"), py::arg("h") = 1e-3);

    m.def(
        "two_sided_exit",
        [](const MapModel& model, const OmegaFn& om, double d, double x, double c,
           double h) {
            FluctuationOptions opt;
            opt.h = h;
            ExitResult r = two_sided_exit(model, om, d, x, c, opt);
            return py::make_tuple(r.up, r.down);
        },
        py::arg("model"), py::arg("omega"), py::arg("d"), py::arg("x"), py::arg("c"),
        py::arg("h") = 1e-3);
    m.def(
        "one_sided_up",
        [](const MapModel& model, const OmegaFn& om, double beta, double x, double c,
           double h) {
            FluctuationOptions opt;
            opt.h = h;
            return one_sided_up(model, om, beta, x, c, opt);
        },
        py::arg("model"), py::arg("omega"), py::arg("beta"), py::arg("x"), py::arg("c"),
        py::arg("h") = 1e-3);
    m.def(
        "one_sided_down",
        [](const MapModel& model, const OmegaFn& om, double x, double h) {
            FluctuationOptions opt;
            opt.h = h;
            return one_sided_down(model, om, x, opt);
        },
        py::arg("model"), py::arg("omega"), py::arg("x"), py::arg("h") = 1e-3);
    m.def(
        "killing_probability",
        [](const MapModel& model, const OmegaFn& om, double d, double x, double c,
           double h) {
            FluctuationOptions opt;
            opt.h = h;
            return killing_probability(model, om, d, x, c, opt);
        },
        py::arg("model"), py::arg("omega"), py::arg("d"), py::arg("x"), py::arg("c"),
        py::arg("h") = 1e-3);

    m.def(
        "dividend_value",
        [](const MapModel& model, const OmegaFn& om, double c, double d, double delta,
           double x, double h) {
            return dividend_value(DividendQuery{model, om, c, d, delta, x, h});
        },
        py::arg("model"), py::arg("omega"), py::arg("c"), py::arg("d"), py::arg("delta"),
        py::arg("x"), py::arg("h") = 1e-3);

    py::class_<PathConfig>(m, "PathConfig")
        .def(py::init<>())
        .def_readwrite("dt", &PathConfig::dt)
        .def_readwrite("t_max", &PathConfig::t_max)
        .def_readwrite("n_paths", &PathConfig::n_paths)
        .def_readwrite("seed", &PathConfig::seed)
        .def_readwrite("bridge_correction", &PathConfig::bridge_correction)
        .def_readwrite("n_threads", &PathConfig::n_threads);

    m.def(
        "simulate_exit",
        [](const MapModel& model, const OmegaFn& om, double d, double x0, double c,
           int j0, const PathConfig& cfg) {
            ExitEstimates e = simulate_exit(model, om, d, x0, c, j0, cfg);
            py::dict out;
            out["up_mean"] = e.up.mean;
            out["up_se"] = e.up.std_err;
            out["down_mean"] = e.down.mean;
            out["down_se"] = e.down.std_err;
            out["n_paths"] = e.up.n_paths;
            out["n_censored"] = e.up.n_censored;
            return out;
        },
        py::arg("model"), py::arg("omega"), py::arg("d"), py::arg("x0"), py::arg("c"),
        py::arg("j0"), py::arg("config"));
    m.def(
        "simulate_dividends",
        [](const MapModel& model, const OmegaFn& om, double floor_d, double x0, double c,
           int j0, double discount, const PathConfig& cfg) {
            DividendSim s = simulate_dividends(model, om, floor_d, x0, c, j0, discount, cfg);
            py::dict out;
            out["by_terminal"] = s.by_terminal;
            out["by_terminal_se"] = s.by_terminal_se;
            out["total_mean"] = s.total_mean;
            out["total_se"] = s.total_se;
            out["n_paths"] = s.n_paths;
            out["n_censored"] = s.n_censored;
            return out;
        },
        py::arg("model"), py::arg("omega"), py::arg("d"), py::arg("x0"), py::arg("c"),
        py::arg("j0"), py::arg("discount"), py::arg("config"));
}
