#pragma once

// Global equilibrium, the time-dependent reference Maxwellian M(t,v), the
// external force catalog, the perturbative force multiplier, and the recipe
// selecting the Maxwellian fluctuation constants (a, A).

#include <boltzns/grids.hpp>

#include <functional>
#include <string>
#include <utility>

namespace boltzns {

// Parameters of the reference state. The Maxwellian is
//   M(t,v) = (2 pi)^{-d/2} exp(-B(t)) exp(-|v|^2 h(t) / 2),
// with amplitude exponent B(t) = eps^{1+e} A/(1+t) and width h(t) =
// 1 + eps^{1+e} a/(1+t); a = A = 0 recovers the global equilibrium.
template <class S>
struct ReferenceParams {
    S eps = S(0.5);     // Knudsen parameter, 0 < eps <= 1
    S e_exp = S(0.5);   // exponent 'e' in (0,1)
    S a = 0;            // quadratic fluctuation constant, >= 0
    S A = 0;            // scalar fluctuation constant, >= 0
    S Lambda = 1;       // positivity margin, > 0
    S T0 = 1;           // time horizon

    S B(S t) const { return std::pow(eps, S(1) + e_exp) * A / (S(1) + t); }
    S h(S t) const { return S(1) + std::pow(eps, S(1) + e_exp) * a / (S(1) + t); }

    void validate() const {
        if (!(eps > S(0) && eps <= S(1))) throw std::invalid_argument("reference.epsilon must be in (0, 1]");
        if (!(e_exp > S(0) && e_exp < S(1))) throw std::invalid_argument("reference.e must be in (0, 1)");
        if (a < S(0) || A < S(0)) throw std::invalid_argument("reference.a and reference.A must be >= 0");
        if (!(Lambda > S(0))) throw std::invalid_argument("reference.lambda must be > 0");
        if (!(T0 > S(0))) throw std::invalid_argument("reference.t_final must be > 0");
    }
};

template <class S>
Vec<S> global_maxwellian(const VelocityGrid<S>& grid) {
    const S norm = std::pow(S(2) * std::numbers::pi_v<S>, -S(grid.dim) / S(2));
    return (norm * (-grid.speed_sq.array() / S(2)).exp()).matrix();
}

template <class S>
Vec<S> reference_maxwellian(S t, const ReferenceParams<S>& p, const VelocityGrid<S>& grid) {
    const S norm = std::pow(S(2) * std::numbers::pi_v<S>, -S(grid.dim) / S(2)) * std::exp(-p.B(t));
    return (norm * (-grid.speed_sq.array() * (p.h(t) / S(2))).exp()).matrix();
}

template <class S>
Vec<S> sqrt_reference_maxwellian(S t, const ReferenceParams<S>& p, const VelocityGrid<S>& grid) {
    return reference_maxwellian(t, p, grid).cwiseSqrt();
}

// Choose (a, A) so the positivity bound on the perturbative force multiplier
// holds for all t in [0, T0], |E_t| <= C_E:
//   a/(8 (1+T0)^2) - C_E^2/4 >= Lambda   and   A/(2 (1+T0)^2) - a C_E^2 >= Lambda.
template <class S>
std::pair<S, S> select_constants(S T0, S C_E, S Lambda) {
    if (!(T0 > S(0)) || C_E < S(0) || !(Lambda > S(0)))
        throw std::invalid_argument("select_constants: need T0 > 0, C_E >= 0, Lambda > 0");
    const S s = (S(1) + T0) * (S(1) + T0);
    const S a = S(8) * s * (Lambda + C_E * C_E / S(4));
    const S A = S(2) * s * (Lambda + a * C_E * C_E);
    return {a, A};
}

// ---------------------------------------------------------------------------
// External force field E_t(x) on the torus with sup-norm bound C_E.

template <class S>
struct ForceField {
    std::string name = "zero";
    S C_E = 0;              // sup-norm bound
    bool mean_zero = true;  // spatial average vanishes for all t
    // Pointwise evaluation; x has the spatial dimension, result likewise.
    std::function<Vec<S>(S t, const Vec<S>& x)> eval;

    // Tabulate on a spatial grid: size() x dim matrix.
    Mat<S> sample(S t, const SpatialGrid<S>& grid) const {
        Mat<S> out(grid.size(), grid.dim);
        for (long i = 0; i < grid.size(); ++i) out.row(i) = eval(t, grid.node(i)).transpose();
        return out;
    }
};

// Named catalog. "zero"; "steady-shear" E = C_E (sin x2, 0) (d=1: C_E sin x);
// "rotating" E_t = C_E (sin(x2+t), cos(x1-t)); "decaying" steady-shear
// modulated by (1+t)^-alpha. All mean-zero by construction.
template <class S>
ForceField<S> builtin_forces(const std::string& name, int dim, S C_E, S alpha = S(2)) {
    ForceField<S> F;
    F.name = name;
    F.C_E = name == "zero" ? S(0) : C_E;
    if (name == "zero") {
        F.eval = [dim](S, const Vec<S>&) { return Vec<S>::Zero(dim).eval(); };
    } else if (name == "steady-shear") {
        F.eval = [dim, C_E](S, const Vec<S>& x) {
            Vec<S> e = Vec<S>::Zero(dim);
            e[0] = C_E * std::sin(dim == 1 ? x[0] : x[1]);
            return e;
        };
    } else if (name == "rotating") {
        if (dim != 2) throw std::invalid_argument("force.name: \"rotating\" needs d_x = 2");
        F.eval = [C_E](S t, const Vec<S>& x) {
            Vec<S> e(2);
            e[0] = C_E * std::sin(x[1] + t);
            e[1] = C_E * std::cos(x[0] - t);
            return e;
        };
    } else if (name == "decaying") {
        F.eval = [dim, C_E, alpha](S t, const Vec<S>& x) {
            Vec<S> e = Vec<S>::Zero(dim);
            e[0] = C_E * std::sin(dim == 1 ? x[0] : x[1]) / std::pow(S(1) + t, alpha);
            return e;
        };
    } else {
        throw std::invalid_argument("force.name: unknown catalog entry \"" + name + "\"");
    }
    return F;
}

// Split E into a mean-zero part and the velocity shift w_t = int_0^t mean(E_s) ds
// (trapezoid rule on t_samples). Returns the reduced field and w at each sample.
template <class S>
std::pair<ForceField<S>, Mat<S>> mean_zero_reduction(const ForceField<S>& E,
                                                     const SpatialGrid<S>& grid,
                                                     const Vec<S>& t_samples) {
    auto spatial_mean = [&grid, E](S t) {
        Vec<S> m = Vec<S>::Zero(grid.dim);
        for (long i = 0; i < grid.size(); ++i) m += E.eval(t, grid.node(i));
        return (m / S(grid.size())).eval();
    };
    Mat<S> w = Mat<S>::Zero(t_samples.size(), grid.dim);
    for (long k = 1; k < t_samples.size(); ++k) {
        S dt = t_samples[k] - t_samples[k - 1];
        w.row(k) = w.row(k - 1) +
                   (dt / S(2)) * (spatial_mean(t_samples[k - 1]) + spatial_mean(t_samples[k])).transpose();
    }
    ForceField<S> R = E;
    R.mean_zero = true;
    R.eval = [E, spatial_mean](S t, const Vec<S>& x) {
        return (E.eval(t, x) - spatial_mean(t)).eval();
    };
    return {R, w};
}

// ---------------------------------------------------------------------------
// Perturbative force multiplier
//   Script-E(t,x,v) = (1/2) [ eps^e (A + a |v|^2/2)/(1+t)^2
//                             - (1 + eps^{1+e} a/(1+t)) E_t(x).v ].

template <class S>
S perturbative_force_scalar(S t, const ReferenceParams<S>& p, S v_sq, S E_dot_v) {
    const S drift = std::pow(p.eps, p.e_exp) * (p.A + p.a * v_sq / S(2)) / ((S(1) + t) * (S(1) + t));
    return (drift - p.h(t) * E_dot_v) / S(2);
}

template <class S>
S perturbative_force(S t, const Vec<S>& x, const Vec<S>& v, const ReferenceParams<S>& p,
                     const ForceField<S>& E) {
    Vec<S> e = E.eval(t, x);
    S edotv = 0;
    for (long k = 0; k < std::min(e.size(), v.size()); ++k) edotv += e[k] * v[k];
    return perturbative_force_scalar(t, p, S(v.squaredNorm()), edotv);
}

// Tabulation over a full (v, x) product grid given the sampled force. The
// spatial and velocity dimensions may differ; E.v runs over the common axes.
// Layout matches the solver fields: n_v rows, n_x columns.
template <class S>
Mat<S> perturbative_force_field(S t, const ReferenceParams<S>& p, const Mat<S>& E_sampled,
                                const VelocityGrid<S>& vgrid) {
    const long nv = vgrid.size(), nx = E_sampled.rows();
    const int dc = std::min<int>(vgrid.dim, int(E_sampled.cols()));
    Mat<S> out(nv, nx);
    const S c1 = std::pow(p.eps, p.e_exp) / ((S(1) + t) * (S(1) + t));
    const S ht = p.h(t);
    for (long j = 0; j < nx; ++j)
        for (long i = 0; i < nv; ++i) {
            S edotv = 0;
            for (int k = 0; k < dc; ++k) edotv += E_sampled(j, k) * vgrid.nodes(i, k);
            out(i, j) = (c1 * (p.A + p.a * vgrid.speed_sq[i] / S(2)) - ht * edotv) / S(2);
        }
    return out;
}

}  // namespace boltzns
