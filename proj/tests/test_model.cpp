#include <doctest.h>

#include <random>

#include "omega_map/config_io.hpp"
#include "omega_map/model.hpp"
#include "test_support.hpp"

using namespace omap;
using omap::testing::fig1_model;

TEST_CASE("laplace exponent at zero is the generator") {
    MapModel m = fig1_model();
    CHECK((laplace_exponent(m, 0.0) - m.q_gen).norm() == doctest::Approx(0.0));
    // non-defective: F(0) 1 = 0
    CHECK((laplace_exponent(m, 0.0) * Vector::Ones(2)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("laplace exponent scalar and two-state values") {
    MapModel s = omap::testing::scalar_model(1.0, 0.0);
    CHECK(laplace_exponent(s, 2.0)(0, 0) == doctest::Approx(2.0));

    MapModel m = fig1_model();
    Matrix f = laplace_exponent(m, 1.0);
    CHECK(f(0, 0) == doctest::Approx(0.45));
    CHECK(f(0, 1) == doctest::Approx(0.05));
    CHECK(f(1, 0) == doctest::Approx(0.1));
    CHECK(f(1, 1) == doctest::Approx(0.62));
}

TEST_CASE("stationary distribution and mean drift") {
    MapModel m = omap::testing::fig3_model();
    Vector pi = stationary_distribution(m);
    CHECK((pi.transpose() * m.q_gen).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(pi.sum() == doctest::Approx(1.0));
    CHECK(pi(0) == doctest::Approx(0.75));
    CHECK(mean_drift(m) == doctest::Approx(0.75 * 0.1 - 0.25 * 0.1));
}

TEST_CASE("model invariant violations are all reported") {
    Matrix q(2, 2);
    q << -0.05, 0.06, 0.1, -0.1;  // row 0 sums to 0.01
    Vector sigma(2), mu(2);
    sigma << 1.0, -1.0;  // bad sigma[1]
    mu << 0.0, 0.0;
    auto bad = MapModel::check(q, sigma, mu);
    REQUIRE(bad.size() >= 2);
    bool row_named = false, sigma_named = false;
    for (const auto& v : bad) {
        if (v.find("row 0") != std::string::npos) row_named = true;
        if (v.find("sigma[1]") != std::string::npos) sigma_named = true;
    }
    CHECK(row_named);
    CHECK(sigma_named);
    CHECK_THROWS_AS(MapModel::validated(q, sigma, mu), ConfigError);
}

TEST_CASE("reducible generator rejected") {
    Matrix q = Matrix::Zero(2, 2);  // no communication
    Vector sigma = Vector::Ones(2), mu = Vector::Zero(2);
    auto bad = MapModel::check(q, sigma, mu);
    bool found = false;
    for (const auto& v : bad)
        if (v.find("irreducible") != std::string::npos) found = true;
    CHECK(found);
}

TEST_CASE("omega kinds evaluate per the definitions") {
    OmegaFn c = OmegaFn::constant(0.3);
    CHECK(c.eval(0, -7.0) == 0.3);
    CHECK(c.eval(0, 12.0) == 0.3);

    OmegaFn band = OmegaFn::affine_band(0.5, -0.1, 5.0);
    CHECK(band.eval(0, -5.0) == doctest::Approx(0.5));
    CHECK(band.eval(0, 1.0) == 0.0);
    CHECK(band.eval(0, -6.0) == 0.0);
    CHECK(band.eval(0, -2.5) == doctest::Approx(0.5 - 0.1 * 2.5));

    OmegaFn st = OmegaFn::step({4.0}, {0.25, 0.03});
    CHECK(st.eval(0, 3.0) == doctest::Approx(0.25));
    CHECK(st.eval(0, 5.0) == doctest::Approx(0.03));
    CHECK(st.eval(1, 4.0) == doctest::Approx(0.25));  // right-open jump
    CHECK(st.quadrature_value(0, 4.0) == doctest::Approx(0.5 * (0.25 + 0.03)));

    OmegaFn tab = OmegaFn::tabulated({0.0, 1.0}, {Vector::Constant(2, 0.2),
                                                  Vector::Constant(2, 0.4)});
    CHECK(tab.eval(0, 0.5) == doctest::Approx(0.3));
    CHECK(tab.eval(1, -3.0) == doctest::Approx(0.2));  // clamped
    CHECK(tab.eval(0, 9.0) == doctest::Approx(0.4));
}

TEST_CASE("omega is nonnegative and bounded at random probes") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> xs(-30.0, 30.0);
    std::vector<OmegaFn> fns{OmegaFn::constant(0.3),
                             OmegaFn::per_state((Vector(2) << 0.05, 0.25).finished()),
                             OmegaFn::step({1.0, 4.0}, {0.25, 0.1, 0.03}),
                             OmegaFn::affine_band(0.5, -0.1, 5.0)};
    for (const auto& f : fns) {
        for (int i = 0; i < 10000; ++i) {
            double w = f.eval(i % 2, xs(rng));
            CHECK(w >= 0.0);
            CHECK(w <= f.bound() + 1e-12);
        }
    }
}

TEST_CASE("negative omega rejected") {
    CHECK_THROWS_AS(OmegaFn::step({1.0}, {0.25, -0.1}), ConfigError);
    CHECK_THROWS_AS(OmegaFn::affine_band(0.5, -0.2, 5.0), ConfigError);
}

TEST_CASE("omega shift moves the level argument") {
    OmegaFn st = OmegaFn::step({4.0}, {0.25, 0.03});
    OmegaFn sh = st.shifted(4.0);  // omega*(z) = omega(z + 4)
    CHECK(sh.eval(0, -0.5) == doctest::Approx(0.25));
    CHECK(sh.eval(0, 0.5) == doctest::Approx(0.03));
    CHECK(sh.tail_start() == doctest::Approx(0.0));
}

TEST_CASE("config loads the figure-1 document") {
    Config cfg = load_config_file(std::string(OMEGA_MAP_CONFIG_DIR) + "/fig1.json");
    CHECK(cfg.model.n_states() == 2);
    CHECK(cfg.model.q_gen(0, 1) == doctest::Approx(0.05));
    CHECK(cfg.model.sigma(1) == doctest::Approx(1.2));
    // omitted omega defaults to no killing
    CHECK(cfg.omega.kind() == OmegaFn::Kind::Constant);
    CHECK(cfg.omega.bound() == 0.0);
}

TEST_CASE("config with a bad generator row names the row") {
    std::string text = R"({
      "Q": [[-0.05, 0.06], [0.1, -0.1]],
      "sigma": [1.0, 1.2], "mu": [0.0, 0.0]})";
    try {
        load_config(text);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        bool named = false;
        for (const auto& v : e.violations())
            if (v.find("row 0") != std::string::npos) named = true;
        CHECK(named);
    }
}

TEST_CASE("load after serialize is the identity") {
    Config cfg = load_config_file(std::string(OMEGA_MAP_CONFIG_DIR) + "/fig3.json");
    Config back = load_config(serialize_config(cfg));
    CHECK((back.model.q_gen - cfg.model.q_gen).norm() == 0.0);
    CHECK((back.model.sigma - cfg.model.sigma).norm() == 0.0);
    CHECK((back.model.mu - cfg.model.mu).norm() == 0.0);
    CHECK(back.omega.kind() == cfg.omega.kind());
    CHECK(back.omega.levels() == cfg.omega.levels());
    CHECK(back.omega.step_values() == cfg.omega.step_values());
    CHECK(back.grid.x_max == cfg.grid.x_max);
    CHECK(back.seed == cfg.seed);
}
