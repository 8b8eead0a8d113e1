#include <doctest.h>

#include <cmath>
#include <random>

#include "omega_map/fluctuation.hpp"
#include "omega_map/matrix_engine.hpp"
#include "omega_map/scale_classic.hpp"
#include "test_support.hpp"

using namespace omap;
using omap::testing::band_model;
using omap::testing::fig1_model;
using omap::testing::fig3_model;

namespace {

OmegaFn fig2_omega() { return OmegaFn::per_state((Vector(2) << 0.05, 0.25).finished()); }

}  // namespace

TEST_CASE("two-sided exit at the barriers") {
    MapModel m = fig3_model();
    OmegaFn om = OmegaFn::constant(0.1);
    FluctuationOptions opt;
    opt.h = 1e-3;
    ExitResult at_top = two_sided_exit(m, om, 0.0, 2.0, 2.0, opt);
    CHECK((at_top.up - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(at_top.down.cwiseAbs().maxCoeff() < 1e-9);

    ExitResult at_bottom = two_sided_exit(m, om, 0.0, 0.0, 2.0, opt);
    CHECK(at_bottom.up.cwiseAbs().maxCoeff() < 1e-12);
    CHECK((at_bottom.down - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("driftless scalar Brownian motion exits symmetrically") {
    MapModel m = omap::testing::scalar_model(1.0, 0.0);
    OmegaFn zero = OmegaFn::constant(0.0);
    FluctuationOptions opt;
    opt.h = 1e-3;
    ExitResult r = two_sided_exit(m, zero, 0.0, 0.5, 1.0, opt);
    CHECK(r.up(0, 0) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(r.down(0, 0) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("exit matrices are sub-stochastic and monotone in the upper barrier") {
    MapModel m = fig1_model();
    OmegaFn om = fig2_omega();
    FluctuationOptions opt;
    opt.h = 1e-3;
    Vector prev_up_rows;
    Matrix prev_down;
    for (double c : {2.0, 3.0, 4.0}) {
        ExitResult r = two_sided_exit(m, om, 0.0, 1.0, c, opt);
        for (int i = 0; i < 2; ++i) {
            double row = 0.0;
            for (int j = 0; j < 2; ++j) {
                CHECK(r.up(i, j) >= -1e-9);
                CHECK(r.up(i, j) <= 1.0 + 1e-9);
                CHECK(r.down(i, j) >= -1e-9);
                CHECK(r.down(i, j) <= 1.0 + 1e-9);
                row += r.up(i, j) + r.down(i, j);
            }
            CHECK(row <= 1.0 + 1e-6);
        }
        // raising c removes up-exit mass but can reshuffle terminal states,
        // so monotonicity is a row-sum statement; the down matrix grows
        // pathwise and is monotone entry by entry.
        Vector up_rows = r.up.rowwise().sum();
        if (prev_up_rows.size() > 0) {
            CHECK(((prev_up_rows - up_rows).array() >= -1e-9).all());
            CHECK(((r.down - prev_down).array() >= -1e-9).all());
        }
        prev_up_rows = up_rows;
        prev_down = r.down;
    }
}

TEST_CASE("strong Markov multiplicativity of the upward exit matrices") {
    std::mt19937_64 rng(17);
    FluctuationOptions opt;
    opt.h = 2.5e-4;
    std::uniform_real_distribution<double> us(0.0, 1.0);
    for (int trial = 0; trial < 5; ++trial) {
        MapModel m = omap::testing::random_model(rng, 2);
        OmegaFn om = OmegaFn::per_state((Vector(2) << 0.1 + 0.2 * us(rng),
                                         0.05 + 0.3 * us(rng))
                                            .finished());
        double x = 0.3 + 0.5 * us(rng);
        double y = x + 0.2 + 0.4 * us(rng);
        double z = y + 0.2 + 0.4 * us(rng);
        Matrix a_xy = two_sided_exit(m, om, 0.0, x, y, opt).up;
        Matrix a_yz = two_sided_exit(m, om, 0.0, y, z, opt).up;
        Matrix a_xz = two_sided_exit(m, om, 0.0, x, z, opt).up;
        CHECK((a_xy * a_yz - a_xz).cwiseAbs().maxCoeff() < 1e-7);
    }
}

TEST_CASE("one-sided up: scalar closed form and the barrier identity") {
    MapModel m = omap::testing::scalar_model(1.0, 0.0);
    const double beta = 0.18;
    OmegaFn om = OmegaFn::constant(beta);
    FluctuationOptions opt;
    opt.h = 1e-3;
    Matrix p = one_sided_up(m, om, beta, 0.5, 2.0, opt);
    CHECK(p(0, 0) == doctest::Approx(std::exp(-std::sqrt(2.0 * beta) * 1.5)).epsilon(1e-8));

    Matrix at_c = one_sided_up(m, om, beta, 2.0, 2.0, opt);
    CHECK(at_c(0, 0) == doctest::Approx(1.0));

    MapModel m2 = fig3_model();
    OmegaFn om2 = OmegaFn::step({0.5}, {0.2, 0.05});
    Matrix id = one_sided_up(m2, om2, 0.2, 1.5, 1.5, opt);
    CHECK((id - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("one-sided up rejects omega that varies on the negative half-line") {
    MapModel m = fig3_model();
    OmegaFn bad = OmegaFn::step({-1.0}, {0.3, 0.1});
    FluctuationOptions opt;
    CHECK_THROWS_AS(one_sided_up(m, bad, 0.3, 0.5, 1.0, opt), ConfigError);
}

TEST_CASE("one-sided down: identity at zero and the scalar ruin transform") {
    FluctuationOptions opt;
    opt.h = 1e-3;
    MapModel m = omap::testing::scalar_model(1.0, 0.0);
    const double q = 0.32;
    OmegaFn om = OmegaFn::constant(q);
    Matrix at0 = one_sided_down(m, om, 0.0, opt);
    CHECK(at0(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
    for (double x : {0.5, 1.0, 2.0}) {
        Matrix b = one_sided_down(m, om, x, opt);
        CHECK(b(0, 0) == doctest::Approx(std::exp(-std::sqrt(2.0 * q) * x)).epsilon(1e-6));
    }
    OmegaFn zero = OmegaFn::constant(0.0);
    CHECK_THROWS_AS(one_sided_down(m, zero, 1.0, opt), ConfigError);
}

TEST_CASE("one-sided down limit constant matches a direct deep-grid solve") {
    MapModel m = fig1_model();
    OmegaFn om = fig2_omega();
    FluctuationOptions opt;
    opt.h = 1e-3;

    // the mode-frame ratio at a finite c agrees with a direct grid solve there
    auto set12 = omega_scale_set(m, om, 0.0, 12.0, 1e-3);
    Matrix direct12 = set12.w.back().partialPivLu().solve(set12.z.back());
    auto set_short = omega_scale_set(m, om, 0.0, 2.0, 1e-3);
    TailContinuation tail(set_short, set_short.index_of(1.0));
    CHECK((tail.ratio_zw_at(12.0) - direct12).cwiseAbs().maxCoeff() < 1e-6);

    // and the limit constant is the converged value of that ratio
    Matrix c_tail = one_sided_down_constant(m, om, opt);
    CHECK((c_tail - tail.ratio_zw_limit()).cwiseAbs().maxCoeff() < 1e-7);
    auto set26 = omega_scale_set(m, om, 0.0, 26.0, 2e-3);
    Matrix direct26 = set26.w.back().partialPivLu().solve(set26.z.back());
    CHECK((c_tail - direct26).cwiseAbs().maxCoeff() < 5e-5);
}

TEST_CASE("two-sided down decomposes through the one-sided limit") {
    // B(x, c) = B(x) - A(x, c) B(c)
    MapModel m = fig1_model();
    OmegaFn om = fig2_omega();
    FluctuationOptions opt;
    opt.h = 1e-3;
    const double x = 1.0, c = 3.0;
    ExitResult r = two_sided_exit(m, om, 0.0, x, c, opt);
    Matrix bx = one_sided_down(m, om, x, opt);
    Matrix bc = one_sided_down(m, om, c, opt);
    CHECK((r.down - (bx - r.up * bc)).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("two-barrier resolvent density vanishes at both ends and stays positive") {
    MapModel m = fig1_model();
    OmegaFn om = fig2_omega();
    FluctuationOptions opt;
    opt.h = 1e-3;
    ResolventGrid rg = resolvent(m, om, ResolventWindow::TwoBarrier, 2.0, 0.0, 4.0, opt);
    CHECK(rg.density.front().cwiseAbs().maxCoeff() < 1e-8);
    CHECK(rg.density.back().cwiseAbs().maxCoeff() < 1e-8);
    double min_entry = 0.0, jump = 0.0;
    for (std::size_t j = 0; j < rg.density.size(); ++j) {
        min_entry = std::min(min_entry, rg.density[j].minCoeff());
        if (j > 0)
            jump = std::max(jump,
                            (rg.density[j] - rg.density[j - 1]).cwiseAbs().maxCoeff());
    }
    CHECK(min_entry >= -1e-8);
    CHECK(jump < 0.05);  // continuous in y at the grid scale
}

TEST_CASE("free potential measure: omega zero on the upward half-line") {
    MapModel m = fig3_model();  // kappa > 0
    OmegaFn zero = OmegaFn::constant(0.0);
    FluctuationOptions opt;
    opt.h = 1e-3;
    const double x = 1.0;
    ResolventGrid rg = resolvent(m, zero, ResolventWindow::UpFromZero, x, std::nullopt,
                                 std::nullopt, opt);
    OccupancyTriple occ = occupancy(m, 0.0);
    LambdaPair base = lambda_pair(m, 0.0);
    Matrix wx = w_q(base, x);
    for (std::size_t j = 0; j < rg.y.size(); j += 500) {
        Matrix ref = wx * expm(occ.r_mat, rg.y[j]) - w_q(base, x - rg.y[j]);
        CHECK((rg.density[j] - ref).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("killed (0,inf) resolvent matches the two-barrier window at modest c") {
    MapModel m = fig3_model();
    OmegaFn om = OmegaFn::step({0.5}, {0.3, 0.1});
    FluctuationOptions opt;
    opt.h = 2e-3;
    const double x = 1.0;
    ResolventGrid up = resolvent(m, om, ResolventWindow::UpFromZero, x, std::nullopt,
                                 std::nullopt, opt);
    // the finite window approximates (0, inf) up to exponentially small
    // truncation near its top
    ResolventGrid dc = resolvent(m, om, ResolventWindow::TwoBarrier, x, 0.0, 20.0, opt);
    double worst = 0.0;
    for (std::size_t j = 0; j < up.y.size() && up.y[j] <= 4.0; ++j)
        worst = std::max(worst, (up.density[j] - dc.density[j]).cwiseAbs().maxCoeff());
    CHECK(worst < 2e-4);
}

TEST_CASE("lower-window and free-line resolvents stay consistent near x") {
    MapModel m = fig3_model();
    const double beta = 0.25;
    OmegaFn om = OmegaFn::step({0.5}, {beta, 0.1});
    FluctuationOptions opt;
    opt.h = 2e-3;
    const double x = 1.0;
    ResolventGrid lofree = resolvent(m, om, ResolventWindow::FreeLine, x, std::nullopt,
                                     std::nullopt, opt);
    // a wide two-barrier window reproduces the free-line density in the bulk
    ResolventGrid dc = resolvent(m, om, ResolventWindow::TwoBarrier, x, -8.0, 20.0, opt);
    double worst = 0.0;
    for (std::size_t j = 0; j < lofree.y.size(); ++j) {
        double y = lofree.y[j];
        if (y < -2.0 || y > 4.0) continue;
        std::size_t k = static_cast<std::size_t>(std::lround((y + 8.0) / dc.y[1] - 0.0));
        k = static_cast<std::size_t>(std::lround((y - dc.y[0]) / (dc.y[1] - dc.y[0])));
        worst = std::max(worst, (lofree.density[j] - dc.density[k]).cwiseAbs().maxCoeff());
    }
    CHECK(worst < 5e-3);

    ResolventGrid below = resolvent(m, om, ResolventWindow::DownFromC, x, std::nullopt,
                                    6.0, opt);
    // (-inf, c): the density vanishes at the absorbing barrier c
    CHECK(below.density.back().cwiseAbs().maxCoeff() < 1e-8);
    double min_entry = 0.0;
    for (const auto& rho : below.density) min_entry = std::min(min_entry, rho.minCoeff());
    CHECK(min_entry >= -1e-8);
}

TEST_CASE("killing probability closes the probability balance") {
    MapModel m = fig1_model();
    OmegaFn om = fig2_omega();
    FluctuationOptions opt;
    opt.h = 1e-3;
    const double d = 0.0, x = 2.0, c = 4.0;
    ExitResult r = two_sided_exit(m, om, d, x, c, opt);
    Matrix kill = killing_probability(m, om, d, x, c, opt);
    Vector total =
        r.up.rowwise().sum() + r.down.rowwise().sum() + kill.rowwise().sum();
    CHECK((total.array() - 1.0).abs().maxCoeff() < 1e-3);

    OmegaFn zero = OmegaFn::constant(0.0);
    CHECK(killing_probability(m, zero, d, x, c, opt).norm() == 0.0);
}

TEST_CASE("constant killing probability equals the classic complement") {
    MapModel m = fig3_model();
    const double q = 0.2;
    OmegaFn om = OmegaFn::constant(q);
    FluctuationOptions opt;
    opt.h = 1e-3;
    const double d = 0.0, x = 1.0, c = 2.0;
    ExitResult r = two_sided_exit(m, om, d, x, c, opt);
    Matrix kill = killing_probability(m, om, d, x, c, opt);
    Vector lhs = kill.rowwise().sum();
    Vector rhs = Vector::Ones(2) - r.up.rowwise().sum() - r.down.rowwise().sum();
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("tail continuation reproduces grid values past the omega support") {
    MapModel m = fig3_model();
    OmegaFn om = OmegaFn::step({1.0}, {0.25, 0.05});
    auto set = omega_scale_set(m, om, 0.0, 6.0, 1e-3);
    int match = set.index_of(1.5);
    TailContinuation tail(set, match);
    for (double x : {2.0, 4.0, 6.0}) {
        Matrix wg = set.w.at(x);
        Matrix zg = set.z.at(x);
        double scale = 1.0 + wg.cwiseAbs().maxCoeff();
        CHECK((tail.w_at(x) - wg).cwiseAbs().maxCoeff() / scale < 1e-6);
        CHECK((tail.z_at(x) - zg).cwiseAbs().maxCoeff() / scale < 1e-6);
    }
}
