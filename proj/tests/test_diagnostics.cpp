#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <boltzns/diagnostics.hpp>

#include <cmath>
#include <random>
#include <sstream>

using namespace boltzns;

TEST_CASE("velocity derivative: exact on cubics, 4th order on Gaussians") {
    auto g = build_velocity_grid<double>(2, 4.0, 12);
    for (int ax = 0; ax < 2; ++ax) {
        Mat<double> f(g.size(), 1), want(g.size(), 1);
        for (long i = 0; i < g.size(); ++i) {
            double v = g.nodes(i, ax);
            f(i, 0) = v * v * v - 2 * v;
            want(i, 0) = 3 * v * v - 2;
        }
        Mat<double> got = velocity_derivative(f, ax, g);
        CHECK((got - want).cwiseAbs().maxCoeff() < 1e-10);
    }

    auto err = [](int n) {
        auto gg = build_velocity_grid<double>(1, 6.0, n);
        Mat<double> f(gg.size(), 1), want(gg.size(), 1);
        for (long i = 0; i < gg.size(); ++i) {
            double v = gg.nodes(i, 0);
            f(i, 0) = std::exp(-v * v / 2);
            want(i, 0) = -v * std::exp(-v * v / 2);
        }
        return (velocity_derivative(f, 0, gg) - want).cwiseAbs().maxCoeff();
    };
    double e1 = err(24), e2 = err(48);
    CHECK(e1 / e2 > 10.0);  // 4th order gives ~16
}

TEST_CASE("velocity derivative input validation") {
    auto g = build_velocity_grid<double>(2, 4.0, 12);
    Mat<double> f = Mat<double>::Zero(g.size(), 1);
    CHECK_THROWS(velocity_derivative(f, 2, g));
    auto tiny = build_velocity_grid<double>(1, 4.0, 4);
    CHECK_THROWS(velocity_derivative(Mat<double>::Zero(4, 1).eval(), 0, tiny));
}

TEST_CASE("theta weight has unit variance against mu") {
    auto g = build_velocity_grid<double>(2, 8.0, 32);
    Vec<double> mu = global_maxwellian(g);
    Vec<double> w = (g.speed_sq.array() - 2.0).matrix() / std::sqrt(4.0);
    CHECK(g.integrate(w.cwiseProduct(w).cwiseProduct(mu)) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(std::abs(g.integrate(w.cwiseProduct(mu))) < 1e-8);
}

TEST_CASE("hydro moments recover manufactured fields") {
    auto xg = build_spatial_grid<double>(2, 8);
    auto vg = build_velocity_grid<double>(2, 8.0, 32);
    const double eps = 0.5;
    Vec<double> mu = global_maxwellian(vg);
    Vec<double> wtheta = (vg.speed_sq.array() - 2.0).matrix() / std::sqrt(4.0);

    // F = mu + eps mu (rho0 + u.v + th0 wtheta), modulated in x
    Mat<double> F(vg.size(), xg.size());
    for (long j = 0; j < xg.size(); ++j) {
        double mod = 1.0 + 0.5 * std::sin(xg.node(j)[0]);
        for (long i = 0; i < vg.size(); ++i) {
            double lin = 0.3 + 0.2 * vg.nodes(i, 0) - 0.1 * vg.nodes(i, 1) + 0.15 * wtheta[i];
            F(i, j) = mu[i] * (1.0 + eps * mod * lin);
        }
    }
    auto m = hydro_moments_full(F, eps, xg, vg);
    for (long j = 0; j < xg.size(); ++j) {
        double mod = 1.0 + 0.5 * std::sin(xg.node(j)[0]);
        CHECK(m.rho[j] == doctest::Approx(0.3 * mod).epsilon(1e-5));
        CHECK(m.u(j, 0) == doctest::Approx(0.2 * mod).epsilon(1e-5));
        CHECK(m.u(j, 1) == doctest::Approx(-0.1 * mod).epsilon(1e-5));
        CHECK(m.theta[j] == doctest::Approx(0.15 * mod).epsilon(1e-5));
    }
}

TEST_CASE("perturbation moments agree with full-distribution moments") {
    auto xg = build_spatial_grid<double>(2, 4);
    auto vg = build_velocity_grid<double>(2, 6.0, 16);
    ReferenceParams<double> p;
    p.eps = 0.5;
    p.a = 8;
    p.A = 2;
    const double t = 0.3;
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Mat<double> f(vg.size(), xg.size());
    for (long j = 0; j < xg.size(); ++j)
        for (long i = 0; i < vg.size(); ++i) f(i, j) = u(rng) * std::exp(-vg.speed_sq[i] / 4);

    Vec<double> sM = sqrt_reference_maxwellian(t, p, vg);
    Mat<double> F = (f.array().colwise() * sM.array()).matrix() * p.eps;
    F.colwise() += reference_maxwellian(t, p, vg);

    auto mf = hydro_moments_full(F, p.eps, xg, vg);
    auto mp = hydro_moments_perturbation(f, t, p, xg, vg);
    CHECK((mf.rho - mp.rho).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((mf.u - mp.u).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((mf.theta - mp.theta).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("moment residuals vanish on a law-satisfying trajectory") {
    const double dt = 0.01, eps = 0.5;
    std::vector<GlobalMoments<double>> series;
    std::vector<ForceCoupling<double>> coupling;
    GlobalMoments<double> g;
    g.mass = 1.0;
    g.momentum = Vec<double>::Zero(2);
    g.energy = 2.0;
    for (int k = 0; k <= 50; ++k) {
        ForceCoupling<double> c;
        double t = k * dt;
        c.I1 = Vec<double>(2);
        c.I1 << std::sin(t), 0.5 * std::cos(t);
        c.I2 = 0.2 * std::sin(2 * t);
        coupling.push_back(c);
        series.push_back(g);
        if (k < 50) {
            ForceCoupling<double> cn;
            double tn = (k + 1) * dt;
            cn.I1 = Vec<double>(2);
            cn.I1 << std::sin(tn), 0.5 * std::cos(tn);
            cn.I2 = 0.2 * std::sin(2 * tn);
            g.momentum += dt * eps * (c.I1 + cn.I1) / 2;
            g.energy += dt * 2 * eps * (c.I2 + cn.I2) / 2;
        }
    }
    auto r = moment_residuals(series, coupling, dt, eps);
    CHECK(r.mass_drift < 1e-15);
    CHECK(r.momentum_residual < 1e-12);
    CHECK(r.energy_residual < 1e-12);

    // a broken trajectory is detected
    series.back().mass += 1e-3;
    series.back().momentum[0] += 1e-3;
    auto rb = moment_residuals(series, coupling, dt, eps);
    CHECK(rb.mass_drift > 5e-4);
    CHECK(rb.momentum_residual > 1e-3);
}

TEST_CASE("scaled Sobolev norm against analytic derivatives") {
    auto xg = build_spatial_grid<double>(2, 8);
    auto vg = build_velocity_grid<double>(2, 6.0, 40);
    auto dx = spatial_derivative_matrices(xg);
    const double eps = 0.5;

    // f = sin(x1) g(v), g = exp(-|v|^2/2): all derivatives analytic
    Mat<double> f(vg.size(), xg.size());
    for (long j = 0; j < xg.size(); ++j)
        for (long i = 0; i < vg.size(); ++i)
            f(i, j) = std::sin(xg.node(j)[0]) * std::exp(-vg.speed_sq[i] / 2);

    auto term = [&](auto&& field) {
        Mat<double> F(vg.size(), xg.size());
        for (long j = 0; j < xg.size(); ++j)
            for (long i = 0; i < vg.size(); ++i) F(i, j) = field(xg.node(j), i);
        return l2_sq_xv(F, xg, vg);
    };
    auto G = [&](long i) { return std::exp(-vg.speed_sq[i] / 2); };
    double e2 = eps * eps;
    double want0 = term([&](const Vec<double>& x, long i) { return std::sin(x[0]) * G(i); });
    double want1 =
        want0 + term([&](const Vec<double>& x, long i) { return std::cos(x[0]) * G(i); }) +
        e2 * term([&](const Vec<double>& x, long i) { return -vg.nodes(i, 0) * std::sin(x[0]) * G(i); }) +
        e2 * term([&](const Vec<double>& x, long i) { return -vg.nodes(i, 1) * std::sin(x[0]) * G(i); });

    CHECK(sobolev_eps_norm_sq(f, eps, 0, xg, vg, dx) == doctest::Approx(want0).epsilon(1e-12));
    CHECK(sobolev_eps_norm_sq(f, eps, 1, xg, vg, dx) == doctest::Approx(want1).epsilon(1e-3));

    // order 2 adds nonnegative terms; eps = 0 strips velocity contributions
    double h2 = sobolev_eps_norm_sq(f, eps, 2, xg, vg, dx);
    CHECK(h2 >= sobolev_eps_norm_sq(f, eps, 1, xg, vg, dx));
    double h1_nov = sobolev_eps_norm_sq(f, 0.0, 1, xg, vg, dx);
    CHECK(h1_nov == doctest::Approx(want0 + term([&](const Vec<double>& x, long i) {
                                        return std::cos(x[0]) * G(i);
                                    })).epsilon(1e-12));
    CHECK_THROWS(sobolev_eps_norm_sq(f, eps, 3, xg, vg, dx));
}

TEST_CASE("twisted functional: validation and norm equivalence") {
    auto xg = build_spatial_grid<double>(2, 8);
    auto vg = build_velocity_grid<double>(2, 6.0, 16);
    auto dx = spatial_derivative_matrices(xg);
    const double eps = 0.5;

    TwistedParams<double> bad1;
    bad1.r = 3.0;  // r^2 > p q
    CHECK_THROWS(bad1.validate());
    TwistedParams<double> bad2;
    bad2.q = 5.0;  // q > p
    CHECK_THROWS(bad2.validate());

    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    TwistedParams<double> tp;
    for (int trial = 0; trial < 5; ++trial) {
        Mat<double> f(vg.size(), xg.size());
        for (long j = 0; j < xg.size(); ++j)
            for (long i = 0; i < vg.size(); ++i)
                f(i, j) = u(rng) * std::exp(-vg.speed_sq[i] / 4);
        double tw1 = twisted_functional(f, eps, 1, tp, xg, vg, dx);
        double h1 = sobolev_eps_norm_sq(f, eps, 1, xg, vg, dx);
        // p=4, q=1, r=1: each cross term is dominated, giving explicit constants
        CHECK(tw1 >= 0.45 * h1);
        CHECK(tw1 <= 4.6 * h1);
        double tw2 = twisted_functional(f, eps, 2, tp, xg, vg, dx);
        double h2 = sobolev_eps_norm_sq(f, eps, 2, xg, vg, dx);
        CHECK(tw2 >= tw1);
        CHECK(tw2 <= 5.0 * h2);
    }
}

TEST_CASE("poincare check on fluid fields") {
    auto xg = build_spatial_grid<double>(2, 8);
    auto vg = build_velocity_grid<double>(2, 6.0, 16);
    auto dx = spatial_derivative_matrices(xg);
    // grid-orthonormal kernel-like basis: normalized {sqrt(mu), v1 sqrt(mu)}
    Vec<double> smu = global_maxwellian(vg).cwiseSqrt();
    Mat<double> basis(vg.size(), 2);
    basis.col(0) = smu / std::sqrt(smu.squaredNorm() * vg.cell());
    Vec<double> b1 = vg.nodes.col(0).cwiseProduct(smu);
    b1 -= (basis.col(0).dot(b1) * vg.cell()) * basis.col(0);
    basis.col(1) = b1 / std::sqrt(b1.squaredNorm() * vg.cell());

    // single-mode fluid field: ||pi f|| = ||grad pi f|| for mode k = 1
    Mat<double> f(vg.size(), xg.size());
    for (long j = 0; j < xg.size(); ++j)
        for (long i = 0; i < vg.size(); ++i) f(i, j) = std::sin(xg.node(j)[0]) * basis(i, 0);
    auto c = poincare_fluid_check(f, basis, xg, vg, dx);
    CHECK(c.moments < 1e-20);
    CHECK(c.ratio == doctest::Approx(1.0).epsilon(1e-10));

    // constant-in-x field: controlled by the global moment term only
    Mat<double> fc = basis.col(0).replicate(1, xg.size());
    auto cc = poincare_fluid_check(fc, basis, xg, vg, dx);
    CHECK(cc.gradient < 1e-18);
    CHECK(cc.moments > 0);
    CHECK(cc.ratio <= 1.0 + 1e-12);

    // random mixtures stay below the torus Poincare constant 1
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        Mat<double> fr = Mat<double>::Zero(vg.size(), xg.size());
        for (int kx = 0; kx <= 2; ++kx)
            for (int comp = 0; comp < 2; ++comp) {
                double a = u(rng), b = u(rng);
                for (long j = 0; j < xg.size(); ++j) {
                    auto x = xg.node(j);
                    double mode = kx == 0 ? a : a * std::cos(kx * x[0]) + b * std::sin(kx * x[1]);
                    for (long i = 0; i < vg.size(); ++i) fr(i, j) += mode * basis(i, comp);
                }
            }
        auto cr = poincare_fluid_check(fr, basis, xg, vg, dx);
        CHECK(cr.ratio <= 1.0 + 1e-10);
    }
}

TEST_CASE("decay fit recovers algebraic decay past the transient") {
    Vec<double> t = Vec<double>::LinSpaced(60, 0.0, 5.0);
    Vec<double> v(60);
    for (int k = 0; k < 60; ++k) {
        double ramp = std::min(1.0, t[k] / 0.5);  // build-up then decay
        v[k] = ramp * 3.0 * std::pow(1.0 + t[k], -1.7);
    }
    auto fit = fit_decay(t, v);
    REQUIRE(fit.valid);
    CHECK(fit.exponent == doctest::Approx(-1.7).epsilon(1e-6));
    CHECK(fit.r_squared > 0.999);
    CHECK(fit.start > 0);

    // growing series: fit has no decay window
    Vec<double> vg2 = Vec<double>::LinSpaced(60, 1.0, 2.0);
    auto fg = fit_decay(t, vg2);
    CHECK(!fg.valid);

    Vec<double> t2(2), v2(2);
    t2 << 0, 1;
    v2 << 1, 2;
    CHECK(!fit_decay(t2, v2).valid);
}

TEST_CASE("norm csv output is deterministic") {
    std::vector<NormReport<double>> rows(3);
    for (int k = 0; k < 3; ++k) {
        rows[k].time = 0.1 * k;
        rows[k].l2 = 1.0 / (1 + k);
        rows[k].mass = 1.0 + 1e-16 * k;
    }
    write_norm_csv("/tmp/norms_a.csv", rows);
    write_norm_csv("/tmp/norms_b.csv", rows);
    std::ifstream a("/tmp/norms_a.csv"), b("/tmp/norms_b.csv");
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    CHECK(sa.str() == sb.str());
    CHECK(sa.str().substr(0, 4) == "time");
    CHECK(sa.str().find("nan") == std::string::npos);
}
