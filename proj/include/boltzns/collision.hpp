#pragma once

// The bilinear Boltzmann collision operator in symmetric form on the uniform
// velocity box, its linearization around a reference Maxwellian, the kernel
// projection, and dense matrix assembly with spectral-gap estimation.
//
// Discretization: for output node v and companion v* = v - o*dv (integer
// offset o != 0), the post-collision velocities are uniform translates
// v' = v - alpha*dv, v'* = v - beta*dv with alpha = (o - |o| sigma)/2 and
// beta = o - alpha, so each (o, sigma) contributes 2^d integer-shifted copies
// of the input fields with fixed multilinear interpolation weights. Cost is
// O(N_v^{2d} N_sigma) per evaluation. Off-grid values use Gaussian-weighted
// multilinear interpolation (interpolate f/W, multiply back by W evaluated at
// the target point): it reproduces Maxwellians of the weight's width exactly,
// so Q(M,M) vanishes to round-off, and the whole pipeline commutes with
// uniform grid scaling. The output is then projected onto exact discrete
// conservation of mass, momentum and energy; raw defects remain observable.

#include <boltzns/equilibria.hpp>
#include <boltzns/grids.hpp>

#include <string>
#include <vector>

namespace boltzns {

template <class S>
struct CollisionKernel {
    S gamma = 1;   // kinetic exponent in [0, 1]
    S C_phi = 1;   // kinetic factor
    S C_b = 1;     // bound on the angular function
    std::function<S(S)> b;  // angular function on [-1, 1]
    SphereQuadrature<S> sphere;

    void validate() const {
        if (gamma < S(0) || gamma > S(1)) throw std::invalid_argument("kernel.gamma must be in [0, 1]");
        if (!(C_phi > S(0))) throw std::invalid_argument("kernel.c_phi must be > 0");
        for (int k = 0; k <= 16; ++k) {
            S z = S(-1) + S(k) / S(8);
            if (std::abs(b(z)) > C_b + S(1e-12))
                throw std::invalid_argument("kernel.b exceeds its stated bound C_b");
        }
    }
};

// Angular function defaulting to the normalized cutoff 1/|S^{d-1}|.
template <class S>
CollisionKernel<S> make_kernel(S gamma, S C_phi, SphereQuadrature<S> sphere) {
    CollisionKernel<S> k;
    k.gamma = gamma;
    k.C_phi = C_phi;
    k.sphere = std::move(sphere);
    const S surface = k.sphere.dim == 2 ? S(2) * std::numbers::pi_v<S> : S(4) * std::numbers::pi_v<S>;
    const S b0 = S(1) / surface;
    k.b = [b0](S) { return b0; };
    k.C_b = b0;
    return k;
}

// Options shared by all Q-based evaluations.
template <class S>
struct QOptions {
    bool weighted = true;  // Gaussian-weighted interpolation (width below)
    S weight_width = 1;    // h in W(v) ~ exp(-h |v|^2 / 2)
    bool conserve = true;  // exact discrete conservation projection
};

// ---------------------------------------------------------------------------

template <class S>
std::pair<Vec<S>, Vec<S>> post_collision_velocities(const Vec<S>& v, const Vec<S>& vstar,
                                                    const Vec<S>& sigma) {
    Vec<S> mid = (v + vstar) / S(2);
    S half = (v - vstar).norm() / S(2);
    return {mid + half * sigma, mid - half * sigma};
}

namespace detail {

// out[i] += w * a[i - m] over the valid sub-box, vectorized over columns.
template <class S>
void add_shifted(Mat<S>& out, const Mat<S>& a, const std::array<int, 3>& m, S w,
                 const VelocityGrid<S>& grid) {
    const int n = grid.n, d = grid.dim;
    int lo[3] = {0, 0, 0}, hi[3] = {1, 1, 1};
    long flat = 0, stride = 1;
    for (int k = 0; k < d; ++k) {
        lo[k] = std::max(0, m[k]);
        hi[k] = n + std::min(0, m[k]);
        if (lo[k] >= hi[k]) return;
        flat += m[k] * stride;
        stride *= n;
    }
    const long len = hi[0] - lo[0], nx = out.cols();
    for (int i2 = lo[2]; i2 < hi[2]; ++i2)
        for (int i1 = lo[1]; i1 < hi[1]; ++i1) {
            long start = lo[0] + long(n) * (d >= 2 ? i1 : 0) + long(n) * n * (d >= 3 ? i2 : 0);
            out.block(start, 0, len, nx) += w * a.block(start - flat, 0, len, nx);
        }
}

// out[i] += w * a[i] restricted to rows whose companion i - o is in range:
// gain terms only exist when the companion node lies inside the box.
template <class S>
void add_masked(Mat<S>& out, const Mat<S>& a, const std::array<int, 3>& o, S w,
                const VelocityGrid<S>& grid) {
    const int n = grid.n, d = grid.dim;
    int lo[3] = {0, 0, 0}, hi[3] = {1, 1, 1};
    for (int k = 0; k < d; ++k) {
        lo[k] = std::max(0, o[k]);
        hi[k] = n + std::min(0, o[k]);
        if (lo[k] >= hi[k]) return;
    }
    const long len = hi[0] - lo[0], nx = out.cols();
    for (int i2 = lo[2]; i2 < hi[2]; ++i2)
        for (int i1 = lo[1]; i1 < hi[1]; ++i1) {
            long start = lo[0] + long(n) * (d >= 2 ? i1 : 0) + long(n) * n * (d >= 3 ? i2 : 0);
            out.block(start, 0, len, nx) += w * a.block(start, 0, len, nx);
        }
}

// Multilinear interpolation of a at index positions i - alpha (zero outside):
// 2^d shifted copies with tensor-product corner weights.
template <class S>
void interp_shift(Mat<S>& out, const Mat<S>& a, const S alpha[3], const VelocityGrid<S>& grid) {
    const int d = grid.dim;
    int base[3] = {0, 0, 0};
    S frac[3] = {0, 0, 0};
    for (int k = 0; k < d; ++k) {
        S fl = std::floor(alpha[k]);
        base[k] = int(fl);
        frac[k] = alpha[k] - fl;
    }
    out.setZero();
    for (int c = 0; c < (1 << d); ++c) {
        S w = 1;
        std::array<int, 3> m{0, 0, 0};
        for (int k = 0; k < d; ++k) {
            bool up = (c >> k) & 1;
            w *= up ? frac[k] : S(1) - frac[k];
            m[k] = base[k] + (up ? 1 : 0);
        }
        if (w != S(0)) add_shifted(out, a, m, w, grid);
    }
}

// W(v - alpha*dv) per node for the Gaussian weight of width h (amplitude 1;
// amplitudes cancel between the division and the multiplication).
template <class S>
Vec<S> weight_at_offset(const S alpha[3], S width, const VelocityGrid<S>& grid) {
    const int d = grid.dim, n = grid.n;
    Mat<S> ax(n, d);
    for (int k = 0; k < d; ++k)
        for (int i = 0; i < n; ++i) {
            S c = grid.node1d(i) - alpha[k] * grid.dv;
            ax(i, k) = std::exp(-width * c * c / S(2));
        }
    Vec<S> out(grid.size());
    for (long i = 0; i < grid.size(); ++i) {
        auto m = grid.unflatten(i);
        S w = ax(m[0], 0);
        for (int k = 1; k < d; ++k) w *= ax(m[k], k);
        out[i] = w;
    }
    return out;
}

// Antipodal pairing of the sphere rule: each entry is (j, j2) with j2 the
// antipode when available (then only j < j2 is listed and the gain uses
// b(z) + b(-z)), or (j, -1) when the rule has no antipodal structure.
template <class S>
std::vector<std::pair<int, int>> sigma_pairs(const SphereQuadrature<S>& sph) {
    bool paired = true;
    for (long j = 0; j < sph.count(); ++j) {
        int a = sph.antipode[j];
        if (a < 0 || sph.antipode[a] != j) paired = false;
    }
    std::vector<std::pair<int, int>> pairs;
    if (paired) {
        for (long j = 0; j < sph.count(); ++j)
            if (long(sph.antipode[j]) > j) pairs.push_back({int(j), sph.antipode[j]});
        if (long(pairs.size()) * 2 == sph.count()) return pairs;
        pairs.clear();
    }
    for (long j = 0; j < sph.count(); ++j) pairs.push_back({int(j), -1});
    return pairs;
}

// Shared iteration over nonzero integer offsets of the velocity box.
template <class S, class Body>
void for_each_offset(const VelocityGrid<S>& grid, Body&& body) {
    const int d = grid.dim, n = grid.n, omin = -(n - 1);
    std::array<int, 3> o{0, 0, 0};
    for (o[2] = d >= 3 ? omin : 0; o[2] <= (d >= 3 ? n - 1 : 0); ++o[2])
        for (o[1] = d >= 2 ? omin : 0; o[1] <= (d >= 2 ? n - 1 : 0); ++o[1])
            for (o[0] = omin; o[0] <= n - 1; ++o[0]) {
                if (o[0] == 0 && o[1] == 0 && o[2] == 0) continue;
                body(o);
            }
}

}  // namespace detail

// Exact discrete conservation: subtract from q its {1, v, |v|^2} moments along
// reference-weighted directions (a rank d+2 correction).
template <class S>
struct ConservationProjector {
    Mat<S> psi;   // n_v x (d+2) collision invariants
    Mat<S> dirs;  // n_v x (d+2) correction directions psi .* wref
    Eigen::PartialPivLU<Mat<S>> gram;
    S cell = 1;

    // Invariant quadratures of q: (d+2) x n_x.
    Mat<S> moments(const Mat<S>& q) const { return (psi.transpose() * q) * cell; }
    void apply(Mat<S>& q) const { q.noalias() -= dirs * gram.solve(moments(q)); }
};

template <class S>
ConservationProjector<S> make_conservation_projector(const VelocityGrid<S>& grid,
                                                     const Vec<S>& wref) {
    ConservationProjector<S> P;
    const int d = grid.dim;
    P.cell = grid.cell();
    P.psi.resize(grid.size(), d + 2);
    P.psi.col(0).setOnes();
    for (int k = 0; k < d; ++k) P.psi.col(1 + k) = grid.nodes.col(k);
    P.psi.col(d + 1) = grid.speed_sq;
    P.dirs = P.psi.array().colwise() * wref.array();
    Mat<S> G = (P.psi.transpose() * P.dirs) * P.cell;
    P.gram = Eigen::PartialPivLU<Mat<S>>(G);
    return P;
}

// Reference weight used both for interpolation and as conservation direction.
template <class S>
Vec<S> interpolation_weight(const VelocityGrid<S>& grid, const QOptions<S>& opt) {
    if (!opt.weighted) return Vec<S>::Ones(grid.size());
    return (-grid.speed_sq.array() * (opt.weight_width / S(2))).exp().matrix();
}

// ---------------------------------------------------------------------------
// Core evaluation on n_v x n_x fields (columns are spatial sites; n_x may be 1).

template <class S>
Mat<S> bilinear_Q_xv(const Mat<S>& g, const Mat<S>& h, const CollisionKernel<S>& kernel,
                     const VelocityGrid<S>& grid, const QOptions<S>& opt = {}) {
    if (g.rows() != grid.size() || h.rows() != grid.size() || g.cols() != h.cols())
        throw std::invalid_argument("bilinear_Q: field shapes do not match the grid");
    if (kernel.sphere.dim != grid.dim)
        throw std::invalid_argument("bilinear_Q: sphere and velocity grid dimensions differ");
    const int d = grid.dim;
    const long nx = g.cols();
    const auto& sph = kernel.sphere;
    const auto pairs = detail::sigma_pairs(sph);

    Mat<S> gw, hw;
    if (opt.weighted) {
        Vec<S> winv = (grid.speed_sq.array() * (opt.weight_width / S(2))).exp().matrix();
        gw = g.array().colwise() * winv.array();
        hw = h.array().colwise() * winv.array();
    }
    const Mat<S>& gi = opt.weighted ? gw : g;
    const Mat<S>& hi = opt.weighted ? hw : h;

    Mat<S> out = Mat<S>::Zero(grid.size(), nx);
    Mat<S> g_o(grid.size(), nx), h_o(grid.size(), nx), gain(grid.size(), nx);
    Mat<S> Ia(grid.size(), nx), Ib(grid.size(), nx), Ja(grid.size(), nx), Jb(grid.size(), nx);

    detail::for_each_offset(grid, [&](const std::array<int, 3>& o) {
        const S onorm = std::sqrt(S(o[0] * o[0] + o[1] * o[1] + o[2] * o[2]));
        S ohat[3] = {S(o[0]) / onorm, S(o[1]) / onorm, S(o[2]) / onorm};
        const S phi = kernel.C_phi * std::pow(onorm * grid.dv, kernel.gamma);
        const S base = S(0.5) * grid.cell() * phi;

        // Loss: sum_sigma w b(ohat.sigma) * [h g(.-o) + h(.-o) g].
        S bsum = 0;
        for (long j = 0; j < sph.count(); ++j) {
            S z = 0;
            for (int k = 0; k < d; ++k) z += ohat[k] * sph.directions(j, k);
            bsum += sph.weights[j] * kernel.b(std::clamp(z, S(-1), S(1)));
        }
        g_o.setZero();
        h_o.setZero();
        detail::add_shifted(g_o, g, o, S(1), grid);
        detail::add_shifted(h_o, h, o, S(1), grid);
        out.noalias() -= (base * bsum) * (h.cwiseProduct(g_o) + h_o.cwiseProduct(g));

        // Gain: antipodal pairs share alpha/beta up to swap, so one pass with
        // angular weight b(z) + b(-z) covers both.
        for (auto [j, j2] : pairs) {
            S z = 0;
            for (int k = 0; k < d; ++k) z += ohat[k] * sph.directions(j, k);
            z = std::clamp(z, S(-1), S(1));
            // The antipode -sigma swaps (alpha, beta) and leaves the gain
            // bracket invariant, so its contribution folds in exactly.
            const S wb = sph.weights[j] * kernel.b(z) +
                         (j2 >= 0 ? sph.weights[j2] * kernel.b(-z) : S(0));
            S alpha[3] = {0, 0, 0}, beta[3] = {0, 0, 0};
            for (int k = 0; k < d; ++k) {
                alpha[k] = (S(o[k]) - onorm * sph.directions(j, k)) / S(2);
                beta[k] = S(o[k]) - alpha[k];
            }
            detail::interp_shift(Ia, hi, alpha, grid);
            detail::interp_shift(Ja, gi, alpha, grid);
            detail::interp_shift(Ib, hi, beta, grid);
            detail::interp_shift(Jb, gi, beta, grid);
            if (opt.weighted) {
                // Attach each target-point weight to its own interpolant before
                // multiplying: the weighted interpolants are O(field), while
                // the raw ratios can overflow when squared at large widths.
                Vec<S> wa = detail::weight_at_offset(alpha, opt.weight_width, grid);
                Vec<S> wbv = detail::weight_at_offset(beta, opt.weight_width, grid);
                Ia.array().colwise() *= wa.array();
                Ja.array().colwise() *= wa.array();
                Ib.array().colwise() *= wbv.array();
                Jb.array().colwise() *= wbv.array();
            }
            gain.noalias() = Ia.cwiseProduct(Jb) + Ib.cwiseProduct(Ja);
            detail::add_masked(out, gain, o, base * wb, grid);
        }
    });

    if (opt.conserve) {
        auto P = make_conservation_projector(grid, interpolation_weight(grid, opt));
        P.apply(out);
    }
    return out;
}

// Velocity-only convenience wrapper.
template <class S>
Vec<S> bilinear_Q(const Vec<S>& g, const Vec<S>& h, const CollisionKernel<S>& kernel,
                  const VelocityGrid<S>& grid, const QOptions<S>& opt = {}) {
    Mat<S> G = g, H = h;
    return bilinear_Q_xv<S>(G, H, kernel, grid, opt).col(0);
}

// Raw (pre-projection) invariant defects of Q(g,h): the d+2 quadratures of
// {1, v, |v|^2} against the uncorrected output.
template <class S>
Vec<S> conservation_defects(const Vec<S>& g, const Vec<S>& h, const CollisionKernel<S>& kernel,
                            const VelocityGrid<S>& grid, QOptions<S> opt = {}) {
    opt.conserve = false;
    Vec<S> q = bilinear_Q(g, h, kernel, grid, opt);
    auto P = make_conservation_projector(grid, Vec<S>::Ones(grid.size()).eval());
    return P.moments(Mat<S>(q)).col(0);
}

// ---------------------------------------------------------------------------
// Collision frequency nu(v) = int int Phi(|v-v*|) b(cos th) M(v*) dsigma dv*.

template <class S>
Vec<S> collision_frequency(const Vec<S>& M, const CollisionKernel<S>& kernel,
                           const VelocityGrid<S>& grid) {
    const auto& sph = kernel.sphere;
    Vec<S> out = Vec<S>::Zero(grid.size());
    for (long i = 0; i < grid.size(); ++i) {
        S acc = 0;
        for (long s = 0; s < grid.size(); ++s) {
            if (s == i) continue;
            S dist2 = 0;
            S dirk[3] = {0, 0, 0};
            for (int k = 0; k < grid.dim; ++k) {
                S dk = grid.nodes(i, k) - grid.nodes(s, k);
                dirk[k] = dk;
                dist2 += dk * dk;
            }
            const S dist = std::sqrt(dist2);
            S bint = 0;
            for (long j = 0; j < sph.count(); ++j) {
                S z = 0;
                for (int k = 0; k < grid.dim; ++k) z += dirk[k] / dist * sph.directions(j, k);
                bint += sph.weights[j] * kernel.b(std::clamp(z, S(-1), S(1)));
            }
            acc += bint * kernel.C_phi * std::pow(dist, kernel.gamma) * M[s];
        }
        out[i] = acc * grid.cell();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Linear and bilinear perturbative operators around M(t).

template <class S>
QOptions<S> options_for_reference(S t, const ReferenceParams<S>& p) {
    QOptions<S> o;
    o.weight_width = p.h(t);
    return o;
}

// L[f] = (2/sqrt(M)) Q(M, sqrt(M) f), matrix-free.
template <class S>
Mat<S> linearized_L(const Mat<S>& f, S t, const ReferenceParams<S>& p,
                    const CollisionKernel<S>& kernel, const VelocityGrid<S>& grid) {
    Vec<S> M = reference_maxwellian(t, p, grid);
    Vec<S> sM = M.cwiseSqrt();
    Mat<S> Mx = M.replicate(1, f.cols());
    Mat<S> q = bilinear_Q_xv<S>(Mx, (f.array().colwise() * sM.array()).matrix(), kernel, grid,
                                options_for_reference(t, p));
    return (q.array().colwise() * (S(2) / sM.array())).matrix();
}

// Gamma[f,g] = (1/sqrt(M)) Q(sqrt(M) f, sqrt(M) g); symmetric in (f,g) because
// the symmetric form of Q is itself symmetric in its arguments.
template <class S>
Mat<S> bilinear_Gamma(const Mat<S>& f, const Mat<S>& g, S t, const ReferenceParams<S>& p,
                      const CollisionKernel<S>& kernel, const VelocityGrid<S>& grid) {
    Vec<S> sM = sqrt_reference_maxwellian(t, p, grid);
    Mat<S> q = bilinear_Q_xv<S>((f.array().colwise() * sM.array()).matrix(),
                                (g.array().colwise() * sM.array()).matrix(), kernel, grid,
                                options_for_reference(t, p));
    return (q.array().colwise() * sM.array().inverse()).matrix();
}

// ---------------------------------------------------------------------------
// Kernel of L: grid-orthonormalized {1, v, |v|^2} sqrt(M).

template <class S>
Mat<S> make_kernel_basis(const Vec<S>& sqrtM, const VelocityGrid<S>& grid) {
    const int d = grid.dim;
    Mat<S> raw(grid.size(), d + 2);
    raw.col(0) = sqrtM;
    for (int k = 0; k < d; ++k) raw.col(1 + k) = grid.nodes.col(k).cwiseProduct(sqrtM);
    raw.col(d + 1) = grid.speed_sq.cwiseProduct(sqrtM);
    // Gram-Schmidt under the grid inner product cell * sum (twice for stability).
    const S cell = grid.cell();
    for (int pass = 0; pass < 2; ++pass)
        for (int c = 0; c < d + 2; ++c) {
            for (int b = 0; b < c; ++b)
                raw.col(c) -= (raw.col(b).dot(raw.col(c)) * cell) * raw.col(b);
            S nrm = std::sqrt(raw.col(c).squaredNorm() * cell);
            if (!(nrm > S(0))) throw std::runtime_error("kernel basis degenerated (grid too small)");
            raw.col(c) /= nrm;
        }
    return raw;
}

// pi_L f and its orthogonal complement, columnwise over x.
template <class S>
std::pair<Mat<S>, Mat<S>> kernel_projection(const Mat<S>& f, const Mat<S>& basis,
                                            const VelocityGrid<S>& grid) {
    Mat<S> coef = (basis.transpose() * f) * grid.cell();
    Mat<S> fluid = basis * coef;
    return {fluid, (f - fluid).eval()};
}

// ---------------------------------------------------------------------------
// Dense assembly of L with exact conservation, symmetrization, exact kernel
// annihilation, and spectral analysis.

template <class S>
struct LinearizedOperator {
    Mat<S> L;             // final symmetric kernel-annihilating matrix
    Vec<S> nu;            // collision frequency field
    Mat<S> K;             // L + diag(nu)
    Mat<S> kernel_basis;  // n_v x (d+2), orthonormal under grid quadrature
    Vec<S> eigenvalues;   // ascending; empty if spectral analysis skipped
    S gap = 0;            // -(largest eigenvalue on the kernel complement)
    S radius = 0;         // max |eigenvalue|
    int kernel_count = 0;       // eigenvalues above -tolerance
    bool resolved = true;       // exactly d+2 near-zero, rest negative
    std::string diagnosis;      // empty when resolved
    S raw_asymmetry = 0;        // |A - A^T| / |A| before symmetrization
    S raw_kernel_residual = 0;  // |A basis| / (|A| |basis|) before projection
    Mat<S> raw_B;               // pre-symmetrization matrix (kept on request)

    Mat<S> apply(const Mat<S>& f) const { return L * f; }

    // Factorization of (I - tau L) for implicit stiff stages.
    Eigen::PartialPivLU<Mat<S>> lu;
    S lu_tau = 0;
    void factor_implicit(S tau) {
        lu = Eigen::PartialPivLU<Mat<S>>(Mat<S>::Identity(L.rows(), L.cols()) - tau * L);
        lu_tau = tau;
    }
};

template <class S>
LinearizedOperator<S> assemble_L_matrix(S t, const ReferenceParams<S>& p,
                                        const CollisionKernel<S>& kernel,
                                        const VelocityGrid<S>& grid, bool spectral = true,
                                        bool keep_raw = false) {
    const int d = grid.dim, n = grid.n;
    const long nv = grid.size();
    const auto& sph = kernel.sphere;
    const QOptions<S> opt = options_for_reference(t, p);
    const auto pairs = detail::sigma_pairs(sph);

    Vec<S> M = reference_maxwellian(t, p, grid);
    Vec<S> sM = M.cwiseSqrt();
    Vec<S> winv = (grid.speed_sq.array() * (opt.weight_width / S(2))).exp().matrix();
    Mat<S> Mmat = M, gwmat = M.cwiseProduct(winv);  // M/W is bounded: equal widths
    Mat<S> winvmat = winv;

    // Scatter the linear-in-h part of Q(M, h) into A: A(i, i - flat(m)) += coef[i],
    // restricted to rows whose companion i - o lies inside the box.
    Mat<S> A = Mat<S>::Zero(nv, nv);
    auto scatter = [&](const std::array<int, 3>& m, const std::array<int, 3>& o,
                       const Vec<S>& coef) {
        int lo[3] = {0, 0, 0}, hi[3] = {1, 1, 1};
        long flat = 0, stride = 1;
        for (int k = 0; k < d; ++k) {
            lo[k] = std::max({0, m[k], o[k]});
            hi[k] = n + std::min({0, m[k], o[k]});
            if (lo[k] >= hi[k]) return;
            flat += m[k] * stride;
            stride *= n;
        }
        for (int i2 = lo[2]; i2 < hi[2]; ++i2)
            for (int i1 = lo[1]; i1 < hi[1]; ++i1) {
                long row0 = lo[0] + long(n) * (d >= 2 ? i1 : 0) + long(n) * n * (d >= 3 ? i2 : 0);
                for (long i = row0; i < row0 + (hi[0] - lo[0]); ++i) A(i, i - flat) += coef[i];
            }
    };

    Mat<S> scratch(nv, 1);
    detail::for_each_offset(grid, [&](const std::array<int, 3>& o) {
        const S onorm = std::sqrt(S(o[0] * o[0] + o[1] * o[1] + o[2] * o[2]));
        S ohat[3] = {S(o[0]) / onorm, S(o[1]) / onorm, S(o[2]) / onorm};
        const S phi = kernel.C_phi * std::pow(onorm * grid.dv, kernel.gamma);
        const S base = S(0.5) * grid.cell() * phi;

        S bsum = 0;
        for (long j = 0; j < sph.count(); ++j) {
            S z = 0;
            for (int k = 0; k < d; ++k) z += ohat[k] * sph.directions(j, k);
            bsum += sph.weights[j] * kernel.b(std::clamp(z, S(-1), S(1)));
        }
        // Loss: h_i M(i-o) on the diagonal, h(i-o) M(i) on column i-o.
        scratch.setZero();
        detail::add_shifted(scratch, Mmat, o, S(1), grid);
        A.diagonal() -= (base * bsum) * scratch.col(0);
        scatter(o, o, Vec<S>(-(base * bsum) * M));

        for (auto [j, j2] : pairs) {
            S z = 0;
            for (int k = 0; k < d; ++k) z += ohat[k] * sph.directions(j, k);
            z = std::clamp(z, S(-1), S(1));
            const S wb = sph.weights[j] * kernel.b(z) +
                         (j2 >= 0 ? sph.weights[j2] * kernel.b(-z) : S(0));
            S alpha[3] = {0, 0, 0}, beta[3] = {0, 0, 0};
            for (int k = 0; k < d; ++k) {
                alpha[k] = (S(o[k]) - onorm * sph.directions(j, k)) / S(2);
                beta[k] = S(o[k]) - alpha[k];
            }
            // Weighted interpolants of M at alpha and beta shifts (O(M) sized).
            Vec<S> wa = detail::weight_at_offset(alpha, opt.weight_width, grid);
            Vec<S> wbv = detail::weight_at_offset(beta, opt.weight_width, grid);
            detail::interp_shift(scratch, gwmat, alpha, grid);
            Vec<S> Ga = wa.cwiseProduct(scratch.col(0));
            detail::interp_shift(scratch, gwmat, beta, grid);
            Vec<S> Gb = wbv.cwiseProduct(scratch.col(0));

            // h-stencils: Ha(i) pairs with Gb(i), Hb(i) with Ga(i). Each corner
            // column i - m carries the source factor 1/W(i - m); fold it in by
            // shifting winv, multiplying small factors first to avoid overflow.
            for (int which = 0; which < 2; ++which) {
                const S* off = which == 0 ? alpha : beta;
                const Vec<S>& wvec = which == 0 ? wa : wbv;
                const Vec<S>& gvec = which == 0 ? Gb : Ga;
                Vec<S> small = (base * wb) * wvec.cwiseProduct(gvec);
                int bidx[3] = {0, 0, 0};
                S frac[3] = {0, 0, 0};
                for (int k = 0; k < d; ++k) {
                    S fl = std::floor(off[k]);
                    bidx[k] = int(fl);
                    frac[k] = off[k] - fl;
                }
                for (int c = 0; c < (1 << d); ++c) {
                    S wcorner = 1;
                    std::array<int, 3> m{0, 0, 0};
                    for (int k = 0; k < d; ++k) {
                        bool up = (c >> k) & 1;
                        wcorner *= up ? frac[k] : S(1) - frac[k];
                        m[k] = bidx[k] + (up ? 1 : 0);
                    }
                    if (wcorner == S(0)) continue;
                    scratch.setZero();
                    detail::add_shifted(scratch, winvmat, m, S(1), grid);
                    scatter(m, o, Vec<S>(wcorner * small.cwiseProduct(scratch.col(0))));
                }
            }
        }
    });

    // Exact conservation as a left projection (matches bilinear_Q_xv).
    {
        auto P = make_conservation_projector(grid, interpolation_weight(grid, opt));
        Mat<S> mom = (P.psi.transpose() * A) * P.cell;  // (d+2) x nv
        A.noalias() -= P.dirs * P.gram.solve(mom);
    }

    LinearizedOperator<S> op;
    // Conjugate by sqrt(M): B = diag(2/sqrt(M)) A diag(sqrt(M)).
    Mat<S> B = (A.array().colwise() * (S(2) / sM.array())).matrix();
    for (long j = 0; j < nv; ++j) B.col(j) *= sM[j];
    const S bnorm = B.norm();
    if (keep_raw) op.raw_B = B;
    op.raw_asymmetry = bnorm > S(0) ? (B - B.transpose()).norm() / (S(2) * bnorm) : S(0);
    Mat<S> Bs = (B + B.transpose()) / S(2);

    op.kernel_basis = make_kernel_basis(sM, grid);
    op.raw_kernel_residual =
        bnorm > S(0) ? (Bs * op.kernel_basis).norm() / (bnorm * op.kernel_basis.norm()) : S(0);

    // L = P_perp Bs P_perp with P_perp = I - cell * Phi Phi^T.
    const S cell = grid.cell();
    Mat<S> BsPhi = Bs * op.kernel_basis;                          // nv x (d+2)
    Mat<S> core = (op.kernel_basis.transpose() * BsPhi) * cell;   // (d+2) x (d+2)
    op.L = Bs;
    op.L.noalias() -= cell * (BsPhi * op.kernel_basis.transpose());
    op.L.noalias() -= cell * (op.kernel_basis * BsPhi.transpose());
    op.L.noalias() += cell * (op.kernel_basis * (core * op.kernel_basis.transpose()));
    op.L = ((op.L + op.L.transpose()) / S(2)).eval();

    op.nu = collision_frequency(M, kernel, grid);
    op.K = op.L;
    op.K.diagonal() += op.nu;

    if (spectral) {
        Eigen::SelfAdjointEigenSolver<Mat<S>> es(op.L, Eigen::EigenvaluesOnly);
        op.eigenvalues = es.eigenvalues();
        op.radius = std::max(std::abs(op.eigenvalues[0]), std::abs(op.eigenvalues[nv - 1]));
        const S tol = S(1e-8) * op.radius;
        int count = 0;
        for (long i = 0; i < nv; ++i)
            if (op.eigenvalues[i] > -tol) ++count;
        op.kernel_count = count;
        if (count != d + 2) {
            op.resolved = false;
            op.diagnosis = "expected " + std::to_string(d + 2) + " near-zero eigenvalues, found " +
                           std::to_string(count) + " (operator under-resolved)";
        } else if (op.eigenvalues[nv - 1] > tol) {
            op.resolved = false;
            op.diagnosis = "positive eigenvalue " + std::to_string(double(op.eigenvalues[nv - 1]));
        }
        if (nv > count) op.gap = -op.eigenvalues[nv - count - 1];
    }
    return op;
}

}  // namespace boltzns
