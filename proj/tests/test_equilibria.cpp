#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <boltzns/equilibria.hpp>

#include <cmath>
#include <numbers>
#include <random>

using namespace boltzns;
constexpr double pi = std::numbers::pi;

static VelocityGrid<double> vg2() { return build_velocity_grid<double>(2, 8.0, 48); }

TEST_CASE("global maxwellian value and moments") {
    auto g = vg2();
    auto mu = global_maxwellian(g);
    // value at the node closest to v = 0 (midpoint grid has no exact origin)
    long i0 = 0;
    g.speed_sq.minCoeff(&i0);
    CHECK(mu[i0] == doctest::Approx(std::exp(-g.speed_sq[i0] / 2) / (2 * pi)).epsilon(1e-14));
    CHECK(g.integrate(mu) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(g.integrate((mu.array() * g.speed_sq.array()).matrix()) ==
          doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("reference maxwellian reduces to mu as eps -> 0") {
    auto g = vg2();
    ReferenceParams<double> p;
    p.a = 8;
    p.A = 2;
    p.eps = 1e-12;
    auto M = reference_maxwellian(0.7, p, g);
    CHECK((M - global_maxwellian(g)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("reference maxwellian mass matches closed form") {
    auto g = vg2();
    ReferenceParams<double> p;
    p.eps = 0.5;
    p.e_exp = 0.5;
    p.a = 3.0;
    p.A = 1.5;
    for (double t : {0.0, 0.4, 1.0}) {
        double want = std::exp(-p.B(t)) * std::pow(p.h(t), -g.dim / 2.0);
        CHECK(g.integrate(reference_maxwellian(t, p, g)) == doctest::Approx(want).epsilon(1e-8));
    }
    // drift of the mass over [0, t] is O(eps^{1+e}), with an explicit constant
    double c = p.A + p.a * g.dim / 2.0;  // |d/dt log-mass| <= eps^{1+e} c
    double drift = std::abs(g.integrate(reference_maxwellian(0.0, p, g)) -
                            g.integrate(reference_maxwellian(1.0, p, g)));
    CHECK(drift <= std::pow(p.eps, 1 + p.e_exp) * c);
}

TEST_CASE("monotone relaxation of M toward mu") {
    auto g = build_velocity_grid<double>(2, 8.0, 16);
    ReferenceParams<double> p;
    p.a = 4;
    p.A = 1;
    p.eps = 0.5;
    auto mu = global_maxwellian(g);
    Vec<double> prev = (reference_maxwellian(0.0, p, g) - mu).cwiseAbs();
    for (double t : {0.5, 1.0, 2.0}) {
        Vec<double> cur = (reference_maxwellian(t, p, g) - mu).cwiseAbs();
        CHECK((cur - prev).maxCoeff() < 1e-15);
        prev = cur;
    }
}

TEST_CASE("select_constants closed form and monotonicity") {
    auto [a, A] = select_constants<double>(1e-12, 0.0, 1.0);
    CHECK(a == doctest::Approx(8.0));
    CHECK(A == doctest::Approx(2.0));
    auto [a1, A1] = select_constants<double>(1.0, 0.5, 1.0);
    auto [a2, A2] = select_constants<double>(1.0, 1.0, 1.0);
    CHECK(a2 >= a1);
    CHECK(A2 >= A1);
    CHECK_THROWS(select_constants<double>(-1.0, 0.0, 1.0));
}

TEST_CASE("positivity bound for every catalog force") {
    auto xg = build_spatial_grid<double>(2, 8);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> ut(0.0, 1.0), ux(0.0, 2 * pi), uv(-8.0, 8.0);
    for (const char* name : {"zero", "steady-shear", "rotating", "decaying"}) {
        double C_E = 0.7, T0 = 1.0, Lambda = 1.0;
        auto F = builtin_forces<double>(name, 2, C_E);
        ReferenceParams<double> p;
        p.T0 = T0;
        std::tie(p.a, p.A) = select_constants(T0, C_E, Lambda);
        for (double eps : {1.0, 0.5, 0.25}) {
            p.eps = eps;
            for (int k = 0; k < 500; ++k) {
                double t = ut(rng) * T0;
                Vec<double> x(2), v(2);
                x << ux(rng), ux(rng);
                v << uv(rng), uv(rng);
                double val = perturbative_force(t, x, v, p, F);
                double ee = std::pow(eps, p.e_exp);
                double bound = ee * Lambda * (1 + v.squaredNorm()) -
                               (eps < 1 ? 1.0 / (4 * ee) : 0.0);
                CHECK(val >= bound - 1e-12);
            }
        }
    }
}

TEST_CASE("perturbative force special cases") {
    auto F0 = builtin_forces<double>("zero", 2, 1.0);
    ReferenceParams<double> p;  // a = A = 0
    Vec<double> x(2), v(2);
    x << 1.0, 2.0;
    v << 0.3, -1.1;
    CHECK(perturbative_force(0.3, x, v, p, F0) == 0.0);

    // a = A = 0 with a force: exactly -(1/2) E.v up to the h(t) width factor,
    // which is 1 when a = 0
    auto F = builtin_forces<double>("steady-shear", 2, 1.3);
    double val = perturbative_force(0.2, x, v, p, F);
    double edotv = 1.3 * std::sin(x[1]) * v[0];
    CHECK(val == doctest::Approx(-0.5 * edotv).epsilon(1e-14));
}

TEST_CASE("perturbative force dual implementation") {
    // independently coded expression, written from the definition
    auto other = [](double t, double eps, double e, double a, double A, double vsq,
                    double edotv) {
        double first = std::pow(eps, e) * (A + 0.5 * a * vsq) * std::pow(1.0 + t, -2.0);
        double width = 1.0 + std::pow(eps, 1.0 + e) * a / (1.0 + t);
        return 0.5 * first - 0.5 * width * edotv;
    };
    ReferenceParams<double> p;
    p.eps = 0.5;
    p.e_exp = 0.5;
    p.a = 8;
    p.A = 2;
    // sampled point with E.v = 1
    CHECK(perturbative_force_scalar(0.0, p, 1.7, 1.0) ==
          doctest::Approx(other(0.0, 0.5, 0.5, 8, 2, 1.7, 1.0)).epsilon(1e-15));
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int k = 0; k < 200; ++k) {
        double t = std::abs(u(rng)), vsq = u(rng) * u(rng), ev = u(rng);
        CHECK(perturbative_force_scalar(t, p, vsq, ev) ==
              doctest::Approx(other(t, 0.5, 0.5, 8, 2, vsq, ev)).epsilon(1e-14));
    }
}

TEST_CASE("tabulated multiplier agrees with pointwise evaluation") {
    auto xg = build_spatial_grid<double>(2, 4);
    auto vgr = build_velocity_grid<double>(2, 4.0, 6);
    auto F = builtin_forces<double>("rotating", 2, 0.8);
    ReferenceParams<double> p;
    p.a = 3;
    p.A = 1;
    double t = 0.45;
    Mat<double> tab = perturbative_force_field(t, p, F.sample(t, xg), vgr);
    for (long j = 0; j < xg.size(); ++j)
        for (long i = 0; i < vgr.size(); ++i) {
            Vec<double> v = vgr.nodes.row(i).transpose();
            CHECK(tab(i, j) ==
                  doctest::Approx(perturbative_force(t, xg.node(j), v, p, F)).epsilon(1e-13));
        }
}

TEST_CASE("force catalog norms") {
    auto xg = build_spatial_grid<double>(2, 32);
    auto Fz = builtin_forces<double>("zero", 2, 5.0);
    CHECK(Fz.sample(0.0, xg).cwiseAbs().maxCoeff() == 0.0);

    auto Fs = builtin_forces<double>("steady-shear", 2, 1.0);
    CHECK(Fs.sample(1.0, xg).cwiseAbs().maxCoeff() == doctest::Approx(1.0).epsilon(1e-12));

    auto Fd = builtin_forces<double>("decaying", 2, 1.0, 2.0);
    for (double t : {0.0, 1.0, 3.0})
        CHECK(Fd.sample(t, xg).cwiseAbs().maxCoeff() ==
              doctest::Approx(1.0 / ((1 + t) * (1 + t))).epsilon(1e-12));

    CHECK_THROWS(builtin_forces<double>("vortex", 2, 1.0));
}

TEST_CASE("mean-zero reduction") {
    auto xg = build_spatial_grid<double>(2, 8);
    Vec<double> ts = Vec<double>::LinSpaced(11, 0.0, 1.0);

    // already mean-zero force: returned unchanged, w = 0
    auto Fs = builtin_forces<double>("steady-shear", 2, 1.0);
    auto [R0, w0] = mean_zero_reduction(Fs, xg, ts);
    CHECK(w0.cwiseAbs().maxCoeff() < 1e-12);

    // constant force c: E' = 0 and w_t = c t
    ForceField<double> Fc;
    Fc.C_E = 1.0;
    Fc.eval = [](double, const Vec<double>&) {
        Vec<double> e(2);
        e << 0.25, -0.5;
        return e;
    };
    auto [R, w] = mean_zero_reduction(Fc, xg, ts);
    Vec<double> x(2);
    x << 0.3, 0.4;
    CHECK(R.eval(0.5, x).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(w(10, 0) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(w(10, 1) == doctest::Approx(-0.5).epsilon(1e-12));

    // spatial mean of the reduced field vanishes at sampled times
    auto Fr = builtin_forces<double>("rotating", 2, 1.0);
    auto [Rr, wr] = mean_zero_reduction(Fr, xg, ts);
    for (double t : {0.0, 0.31, 0.9}) {
        Mat<double> s = Rr.sample(t, xg);
        CHECK(s.colwise().mean().cwiseAbs().maxCoeff() < 1e-12);
    }
}
