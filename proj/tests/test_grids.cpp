#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <boltzns/grids.hpp>

#include <cmath>
#include <numbers>
#include <random>

using namespace boltzns;
constexpr double pi = std::numbers::pi;

TEST_CASE("spatial grid nodes and wavenumbers") {
    auto g = build_spatial_grid<double>(1, 4);
    CHECK(g.size() == 4);
    CHECK(g.node1d(0) == doctest::Approx(0.0));
    CHECK(g.node1d(1) == doctest::Approx(pi / 2));
    CHECK(g.node1d(2) == doctest::Approx(pi));
    CHECK(g.node1d(3) == doctest::Approx(3 * pi / 2));

    auto g2 = build_spatial_grid<double>(2, 16);
    CHECK(g2.size() == 256);
    int kmin = 100, kmax = -100;
    for (int j = 0; j < 16; ++j) {
        kmin = std::min(kmin, g2.wavenumber(j));
        kmax = std::max(kmax, g2.wavenumber(j));
    }
    CHECK(kmin == -7);
    CHECK(kmax == 8);
}

TEST_CASE("spatial grid rejects bad sizes") {
    CHECK_THROWS(build_spatial_grid<double>(1, 5));
    CHECK_THROWS(build_spatial_grid<double>(1, 2));
    CHECK_THROWS(build_spatial_grid<double>(3, 8));
}

TEST_CASE("spectral derivative of sin is cos") {
    auto g = build_spatial_grid<double>(1, 32);
    Vec<double> f(g.size());
    for (long i = 0; i < g.size(); ++i) f[i] = std::sin(g.node1d(int(i)));
    Vec<double> df = g.derivative(f, 0);
    for (long i = 0; i < g.size(); ++i)
        CHECK(df[i] == doctest::Approx(std::cos(g.node1d(int(i)))).epsilon(1e-10));
}

TEST_CASE("spectral derivative exact for resolved modes, zero on constants") {
    auto g = build_spatial_grid<double>(2, 16);
    Vec<double> c = Vec<double>::Constant(g.size(), 3.7);
    CHECK(g.derivative(c, 0).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(g.derivative(c, 1).cwiseAbs().maxCoeff() < 1e-12);
    for (int k = 1; k <= g.n / 2 - 1; k += 3) {
        Vec<double> f(g.size()), want(g.size());
        for (long i = 0; i < g.size(); ++i) {
            auto m = g.unflatten(i);
            f[i] = std::sin(k * g.node1d(m[1]));
            want[i] = k * std::cos(k * g.node1d(m[1]));
        }
        CHECK((g.derivative(f, 1) - want).cwiseAbs().maxCoeff() < 1e-9 * k);
    }
}

TEST_CASE("derivative matrix matches the transform-based derivative") {
    auto g = build_spatial_grid<double>(2, 8);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Vec<double> f(g.size());
    for (long i = 0; i < g.size(); ++i) f[i] = u(rng);
    for (int ax = 0; ax < 2; ++ax) {
        Mat<double> D = g.derivative_matrix(ax);
        CHECK((D * f - g.derivative(f, ax)).cwiseAbs().maxCoeff() < 1e-11);
    }
}

TEST_CASE("full-grid DFT inverts") {
    auto g = build_spatial_grid<double>(2, 8);
    auto D = g.dft_full();
    auto Di = g.idft_full();
    CMat<double> I = Di * D;
    CHECK((I - CMat<double>::Identity(g.size(), g.size())).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("velocity grid basics") {
    auto g = build_velocity_grid<double>(1, 1.0, 2);
    CHECK(g.node1d(0) == doctest::Approx(-0.5));
    CHECK(g.node1d(1) == doctest::Approx(0.5));
    CHECK(g.cell() == doctest::Approx(1.0));
    CHECK_THROWS(build_velocity_grid<double>(1, -1.0, 8));
    CHECK_THROWS(build_velocity_grid<double>(2, 8.0, 7));
}

TEST_CASE("velocity grid weight sum and symmetry") {
    auto g = build_velocity_grid<double>(2, 8.0, 12);
    CHECK(g.size() * g.cell() == doctest::Approx(std::pow(16.0, 2)).epsilon(1e-14));
    // node set is its own negation: -node(i) is a node for every i
    for (long i = 0; i < g.size(); ++i) {
        auto m = g.unflatten(i);
        std::array<int, 3> neg{0, 0, 0};
        for (int k = 0; k < g.dim; ++k) neg[k] = g.n - 1 - m[k];
        CHECK((g.nodes.row(g.flatten(neg)) + g.nodes.row(i)).norm() < 1e-12);
    }
}

TEST_CASE("gaussian quadrature on velocity grid") {
    auto g = build_velocity_grid<double>(1, 8.0, 64);
    Vec<double> mu(g.size()), v2mu(g.size());
    for (long i = 0; i < g.size(); ++i) {
        double v = g.nodes(i, 0);
        mu[i] = std::exp(-v * v / 2) / std::sqrt(2 * pi);
        v2mu[i] = v * v * mu[i];
    }
    CHECK(g.integrate(mu) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(g.integrate(v2mu) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("odd integrand quadrature vanishes exactly") {
    auto g = build_velocity_grid<double>(2, 6.0, 10);
    Vec<double> f(g.size());
    for (long i = 0; i < g.size(); ++i) {
        double vx = g.nodes(i, 0), vy = g.nodes(i, 1);
        f[i] = vx * std::exp(-(vx * vx + vy * vy) / 2) + vx * vy;
    }
    CHECK(std::abs(g.integrate(f)) < 1e-13);
}

TEST_CASE("midpoint rule is order 2 (Richardson)") {
    auto err = [](int n) {
        auto g = build_velocity_grid<double>(1, 4.0, n);
        Vec<double> f(g.size());
        for (long i = 0; i < g.size(); ++i) f[i] = std::cos(g.nodes(i, 0));
        return std::abs(g.integrate(f) - 2 * std::sin(4.0));
    };
    double e1 = err(16), e2 = err(32);
    CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("circle quadrature") {
    auto q = build_sphere_quadrature<double>(2, 4);
    CHECK(q.count() == 4);
    CHECK(q.directions(0, 0) == doctest::Approx(1.0));
    CHECK(q.directions(1, 1) == doctest::Approx(1.0));
    CHECK(q.weights.sum() == doctest::Approx(2 * pi).epsilon(1e-12));
    for (long j = 0; j < q.count(); ++j) CHECK(q.weights[j] == doctest::Approx(pi / 2));

    auto q16 = build_sphere_quadrature<double>(2, 16);
    double second = 0;
    for (long j = 0; j < q16.count(); ++j)
        second += q16.weights[j] * q16.directions(j, 0) * q16.directions(j, 0);
    CHECK(second == doctest::Approx(pi).epsilon(1e-10));
}

TEST_CASE("sphere quadrature in 3d") {
    auto q = build_sphere_quadrature<double>(3, 64);
    CHECK(q.weights.sum() == doctest::Approx(4 * pi).epsilon(1e-10));
    CHECK(q.weights.minCoeff() > 0);
    // unit directions and symmetric first moment
    Eigen::Vector3d m1 = Eigen::Vector3d::Zero();
    for (long j = 0; j < q.count(); ++j) {
        CHECK(q.directions.row(j).norm() == doctest::Approx(1.0).epsilon(1e-12));
        m1 += q.weights[j] * q.directions.row(j).transpose();
    }
    CHECK(m1.norm() < 1e-10);
    // antipode table is exact
    for (long j = 0; j < q.count(); ++j) {
        REQUIRE(q.antipode[j] >= 0);
        CHECK((q.directions.row(q.antipode[j]) + q.directions.row(j)).norm() < 1e-12);
        CHECK(q.weights[q.antipode[j]] == doctest::Approx(q.weights[j]));
    }
}

TEST_CASE("circle antipode table") {
    auto q = build_sphere_quadrature<double>(2, 8);
    for (long j = 0; j < q.count(); ++j)
        CHECK((q.directions.row(q.antipode[j]) + q.directions.row(j)).norm() < 1e-12);
}
