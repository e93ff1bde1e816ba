#pragma once

// Discretizations shared by every other module: the periodic spatial grid on
// [0, 2pi)^d with spectral differentiation, the truncated uniform velocity box
// with midpoint quadrature, and quadrature rules on the unit sphere.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace boltzns {

template <class S> using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <class S> using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S> using CVec = Eigen::Matrix<std::complex<S>, Eigen::Dynamic, 1>;
template <class S> using CMat = Eigen::Matrix<std::complex<S>, Eigen::Dynamic, Eigen::Dynamic>;

// ---------------------------------------------------------------------------
// Spatial torus grid, period 2*pi per axis.

template <class S>
struct SpatialGrid {
    int dim = 1;        // 1 or 2
    int n = 4;          // points per axis
    S dx = 0;           // 2*pi/n

    long size() const { return dim == 1 ? n : long(n) * n; }

    // Axis coordinate of 1-d index i.
    S node1d(int i) const { return S(i) * dx; }

    std::array<int, 2> unflatten(long idx) const {
        if (dim == 1) return {int(idx), 0};
        return {int(idx % n), int(idx / n)};
    }
    long flatten(int i0, int i1) const { return dim == 1 ? i0 : i0 + long(n) * i1; }

    // Coordinates of a flat node index.
    Eigen::Matrix<S, Eigen::Dynamic, 1> node(long idx) const {
        auto m = unflatten(idx);
        Eigen::Matrix<S, Eigen::Dynamic, 1> x(dim);
        x[0] = node1d(m[0]);
        if (dim == 2) x[1] = node1d(m[1]);
        return x;
    }

    // Signed integer wavenumber for 1-d DFT bin j, in {-n/2+1, ..., n/2}.
    int wavenumber(int j) const { return j <= n / 2 ? j : j - n; }

    // Quadrature weight per node (uniform; total measure (2*pi)^dim).
    S cell() const { return std::pow(dx, S(dim)); }

    // Dense 1-d DFT matrices (forward: hat_k = sum_j exp(-i k x_j) f_j / n).
    CMat<S> dft1() const {
        CMat<S> D(n, n);
        const S w = S(2) * std::numbers::pi_v<S> / S(n);
        for (int k = 0; k < n; ++k)
            for (int j = 0; j < n; ++j)
                D(k, j) = std::exp(std::complex<S>(0, -w * S(k) * S(j))) / S(n);
        return D;
    }
    CMat<S> idft1() const {
        CMat<S> D(n, n);
        const S w = S(2) * std::numbers::pi_v<S> / S(n);
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k)
                D(j, k) = std::exp(std::complex<S>(0, w * S(k) * S(j)));
        return D;
    }

    // Full-grid forward/backward DFT matrices (size() x size()); convenient for
    // applying exact phase-shift advection to many fields at once.
    CMat<S> dft_full() const {
        CMat<S> D1 = dft1();
        if (dim == 1) return D1;
        CMat<S> D(size(), size());
        for (long r = 0; r < size(); ++r) {
            auto [k0, k1] = unflatten(r);
            for (long c = 0; c < size(); ++c) {
                auto [j0, j1] = unflatten(c);
                D(r, c) = D1(k0, j0) * D1(k1, j1);
            }
        }
        return D;
    }
    CMat<S> idft_full() const {
        CMat<S> D1 = idft1();
        if (dim == 1) return D1;
        CMat<S> D(size(), size());
        for (long r = 0; r < size(); ++r) {
            auto [j0, j1] = unflatten(r);
            for (long c = 0; c < size(); ++c) {
                auto [k0, k1] = unflatten(c);
                D(r, c) = D1(j0, k0) * D1(j1, k1);
            }
        }
        return D;
    }

    // Dense real matrix of the spectral derivative along `axis` acting on flat
    // fields; lets solver-layout fields (x along columns) differentiate by one
    // GEMM with the transpose.
    Mat<S> derivative_matrix(int axis) const {
        CMat<S> D = dft_full(), Di = idft_full();
        for (long r = 0; r < size(); ++r) {
            auto m = unflatten(r);
            int k = wavenumber(m[axis]);
            if (2 * k == n) k = 0;  // unmatched Nyquist mode of d/dx
            D.row(r) *= std::complex<S>(0, S(k));
        }
        return (Di * D).real();
    }

    // Spectral derivative of a real scalar field (flat, size()) along `axis`.
    Vec<S> derivative(const Vec<S>& f, int axis) const {
        CVec<S> fh = f.template cast<std::complex<S>>();
        CMat<S> D = dft1(), Di = idft1();
        auto scale = [&](CVec<S>& g, int ax) {
            for (long idx = 0; idx < size(); ++idx) {
                auto m = unflatten(idx);
                int k = wavenumber(m[ax]);
                if (2 * k == n) k = 0;  // drop the unmatched Nyquist mode of d/dx
                g[idx] *= std::complex<S>(0, S(k));
            }
        };
        // Transform along each axis, multiply by i*k on `axis`, transform back.
        if (dim == 1) {
            CVec<S> g = D * fh;
            scale(g, 0);
            return (Di * g).real();
        }
        Eigen::Map<CMat<S>> F(fh.data(), n, n);
        CMat<S> G = D * F * D.transpose();
        CVec<S> gflat = Eigen::Map<CVec<S>>(G.data(), size());
        scale(gflat, axis);
        Eigen::Map<CMat<S>> Gm(gflat.data(), n, n);
        CMat<S> R = Di * Gm * Di.transpose();
        Vec<S> out(size());
        for (long i = 0; i < size(); ++i) out[i] = Eigen::Map<CVec<S>>(R.data(), size())[i].real();
        return out;
    }
};

template <class S>
SpatialGrid<S> build_spatial_grid(int dim, int n) {
    if (dim < 1 || dim > 2) throw std::invalid_argument("spatial grid: dim must be 1 or 2");
    if (n < 4 || n % 2 != 0) throw std::invalid_argument("spatial grid: n must be even and >= 4");
    SpatialGrid<S> g;
    g.dim = dim;
    g.n = n;
    g.dx = S(2) * std::numbers::pi_v<S> / S(n);
    return g;
}

// ---------------------------------------------------------------------------
// Truncated velocity box [-R, R]^dim with midpoint-rule tensor quadrature.
// Nodes -R + (i + 1/2) dv are symmetric under v -> -v for every n.

template <class S>
struct VelocityGrid {
    int dim = 2;   // 1, 2 or 3
    S R = 8;       // truncation radius
    int n = 16;    // points per axis
    S dv = 1;      // 2R/n

    // Cached per-node data (filled by build_velocity_grid).
    Mat<S> nodes;     // size() x dim
    Vec<S> speed_sq;  // |v|^2 per node

    long size() const {
        long s = n;
        for (int k = 1; k < dim; ++k) s *= n;
        return s;
    }
    S node1d(int i) const { return -R + (S(i) + S(0.5)) * dv; }
    S cell() const { return std::pow(dv, S(dim)); }  // uniform quadrature weight

    std::array<int, 3> unflatten(long idx) const {
        std::array<int, 3> m{0, 0, 0};
        for (int k = 0; k < dim; ++k) {
            m[k] = int(idx % n);
            idx /= n;
        }
        return m;
    }
    long flatten(const std::array<int, 3>& m) const {
        long idx = 0;
        for (int k = dim - 1; k >= 0; --k) idx = idx * n + m[k];
        return idx;
    }
    bool in_range(const std::array<int, 3>& m) const {
        for (int k = 0; k < dim; ++k)
            if (m[k] < 0 || m[k] >= n) return false;
        return true;
    }

    // Midpoint quadrature of a nodal field.
    S integrate(const Vec<S>& f) const { return f.sum() * cell(); }
};

template <class S>
VelocityGrid<S> build_velocity_grid(int dim, S R, int n) {
    if (dim < 1 || dim > 3) throw std::invalid_argument("velocity grid: dim must be 1, 2 or 3");
    if (R <= S(0)) throw std::invalid_argument("velocity grid: R must be positive");
    if (n < 2 || n % 2 != 0) throw std::invalid_argument("velocity grid: n must be even and >= 2");
    VelocityGrid<S> g;
    g.dim = dim;
    g.R = R;
    g.n = n;
    g.dv = S(2) * R / S(n);
    g.nodes.resize(g.size(), dim);
    g.speed_sq.resize(g.size());
    for (long i = 0; i < g.size(); ++i) {
        auto m = g.unflatten(i);
        S s2 = 0;
        for (int k = 0; k < dim; ++k) {
            S c = g.node1d(m[k]);
            g.nodes(i, k) = c;
            s2 += c * c;
        }
        g.speed_sq[i] = s2;
    }
    return g;
}

// ---------------------------------------------------------------------------
// Quadrature on S^{d-1}. d=2: uniform angles. d=3: Gauss-Legendre in latitude
// times uniform longitude. Even counts give antipodally paired rules.

template <class S>
struct SphereQuadrature {
    int dim = 2;                  // ambient dimension (2 or 3)
    Mat<S> directions;            // count x dim unit vectors
    Vec<S> weights;               // sum = |S^{d-1}|
    std::vector<int> antipode;    // index of -sigma_j, or -1 when unpaired

    long count() const { return directions.rows(); }
};

// Gauss-Legendre nodes/weights on [-1, 1] by Newton iteration.
template <class S>
void gauss_legendre(int n, Vec<S>& x, Vec<S>& w) {
    x.resize(n);
    w.resize(n);
    for (int i = 0; i < n; ++i) {
        // Chebyshev-based initial guess for the i-th root.
        S t = std::cos(std::numbers::pi_v<S> * (S(i) + S(0.75)) / (S(n) + S(0.5)));
        for (int it = 0; it < 100; ++it) {
            S p0 = 1, p1 = 0;  // P_k(t), P_{k-1}(t)
            for (int k = 0; k < n; ++k) {
                S p2 = p1;
                p1 = p0;
                p0 = ((S(2 * k + 1)) * t * p1 - S(k) * p2) / S(k + 1);
            }
            S dp = S(n) * (t * p0 - p1) / (t * t - S(1));
            S dt = p0 / dp;
            t -= dt;
            if (std::abs(dt) < S(1e-15)) break;
        }
        S p0 = 1, p1 = 0;
        for (int k = 0; k < n; ++k) {
            S p2 = p1;
            p1 = p0;
            p0 = ((S(2 * k + 1)) * t * p1 - S(k) * p2) / S(k + 1);
        }
        S dp = S(n) * (t * p0 - p1) / (t * t - S(1));
        x[n - 1 - i] = t;
        w[n - 1 - i] = S(2) / ((S(1) - t * t) * dp * dp);
    }
    // Enforce the exact root/weight symmetry of the rule.
    for (int i = 0; i < n / 2; ++i) {
        S xm = (x[n - 1 - i] - x[i]) / S(2), wm = (w[i] + w[n - 1 - i]) / S(2);
        x[i] = -xm;
        x[n - 1 - i] = xm;
        w[i] = w[n - 1 - i] = wm;
    }
    if (n % 2 == 1) x[n / 2] = S(0);
}

template <class S>
SphereQuadrature<S> build_sphere_quadrature(int dim, int count) {
    if (dim < 2 || dim > 3) throw std::invalid_argument("sphere quadrature: dim must be 2 or 3");
    if (count < 4) throw std::invalid_argument("sphere quadrature: count must be >= 4");
    SphereQuadrature<S> q;
    q.dim = dim;
    if (dim == 2) {
        q.directions.resize(count, 2);
        q.weights = Vec<S>::Constant(count, S(2) * std::numbers::pi_v<S> / S(count));
        for (int j = 0; j < count; ++j) {
            S a = S(2) * std::numbers::pi_v<S> * S(j) / S(count);
            q.directions(j, 0) = std::cos(a);
            q.directions(j, 1) = std::sin(a);
        }
        q.antipode.assign(count, -1);
        if (count % 2 == 0)
            for (int j = 0; j < count; ++j) q.antipode[j] = (j + count / 2) % count;
    } else {
        // Product rule: n_lat Gauss-Legendre x n_lon uniform, n_lat*n_lon = count.
        int n_lat = std::max(2, int(std::round(std::sqrt(double(count) / 2.0))));
        int n_lon = std::max(4, count / n_lat);
        if (n_lon % 2 != 0) ++n_lon;
        Vec<S> ct, cw;
        gauss_legendre<S>(n_lat, ct, cw);
        long m = long(n_lat) * n_lon;
        q.directions.resize(m, 3);
        q.weights.resize(m);
        for (int a = 0; a < n_lat; ++a)
            for (int b = 0; b < n_lon; ++b) {
                long j = long(a) * n_lon + b;
                S st = std::sqrt(std::max(S(0), S(1) - ct[a] * ct[a]));
                S phi = S(2) * std::numbers::pi_v<S> * S(b) / S(n_lon);
                q.directions(j, 0) = st * std::cos(phi);
                q.directions(j, 1) = st * std::sin(phi);
                q.directions(j, 2) = ct[a];
                q.weights[j] = cw[a] * S(2) * std::numbers::pi_v<S> / S(n_lon);
            }
        // Antipode of (a, b) is (n_lat-1-a, b + n_lon/2): GL nodes are symmetric.
        q.antipode.assign(m, -1);
        for (int a = 0; a < n_lat; ++a)
            for (int b = 0; b < n_lon; ++b)
                q.antipode[long(a) * n_lon + b] =
                    int(long(n_lat - 1 - a) * n_lon + (b + n_lon / 2) % n_lon);
    }
    // Make paired directions exact negations (rounding in the trigonometric
    // evaluations would otherwise leave last-ulp asymmetries).
    for (long j = 0; j < q.count(); ++j) {
        int a = q.antipode[j];
        if (a > j) {
            q.directions.row(a) = -q.directions.row(j);
            q.weights[a] = q.weights[j];
        }
    }
    return q;
}

}  // namespace boltzns
