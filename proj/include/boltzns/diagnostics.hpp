#pragma once

// Observables and verification functionals: hydrodynamic moments of the
// distribution, global conservation-law residuals, the scaled Sobolev norms
// with eps-weighted velocity derivatives, the twisted (hypocoercive) norm with
// mixed x-v cross terms, a fluid-part Poincare check, decay fitting, and the
// per-snapshot norm report.
//
// Field layout matches the solvers: n_v rows, n_x columns.

#include <boltzns/equilibria.hpp>
#include <boltzns/grids.hpp>

#include <fstream>
#include <iomanip>
#include <string>
#include <vector>

namespace boltzns {

// ---------------------------------------------------------------------------
// Quadrature shorthand: squared L^2(x,v) norm of a solver-layout field.

template <class S>
S l2_sq_xv(const Mat<S>& f, const SpatialGrid<S>& xg, const VelocityGrid<S>& vg) {
    return f.squaredNorm() * xg.cell() * vg.cell();
}

// ---------------------------------------------------------------------------
// Velocity derivative: 4th-order centered stencil along one axis with
// one-sided 4th-order closure at the box edges; rows vectorize over x.

template <class S>
Mat<S> velocity_derivative(const Mat<S>& F, int axis, const VelocityGrid<S>& g) {
    if (axis < 0 || axis >= g.dim) throw std::invalid_argument("velocity derivative: bad axis");
    if (g.n < 6) throw std::invalid_argument("velocity derivative: needs n >= 6 per axis");
    long stride = 1;
    for (int k = 0; k < axis; ++k) stride *= g.n;
    const S idv = S(1) / (S(12) * g.dv);
    Mat<S> out(F.rows(), F.cols());
    for (long i = 0; i < g.size(); ++i) {
        const int ia = g.unflatten(i)[axis];
        auto at = [&](int t) { return i + long(t - ia) * stride; };
        if (ia >= 2 && ia <= g.n - 3) {
            out.row(i) = idv * (-F.row(at(ia + 2)) + 8 * F.row(at(ia + 1)) -
                                8 * F.row(at(ia - 1)) + F.row(at(ia - 2)));
        } else if (ia == 0) {
            out.row(i) = idv * (-25 * F.row(at(0)) + 48 * F.row(at(1)) - 36 * F.row(at(2)) +
                                16 * F.row(at(3)) - 3 * F.row(at(4)));
        } else if (ia == 1) {
            out.row(i) = idv * (-3 * F.row(at(0)) - 10 * F.row(at(1)) + 18 * F.row(at(2)) -
                                6 * F.row(at(3)) + F.row(at(4)));
        } else if (ia == g.n - 2) {
            const int e = g.n - 1;
            out.row(i) = -idv * (-3 * F.row(at(e)) - 10 * F.row(at(e - 1)) +
                                 18 * F.row(at(e - 2)) - 6 * F.row(at(e - 3)) + F.row(at(e - 4)));
        } else {
            const int e = g.n - 1;
            out.row(i) = -idv * (-25 * F.row(at(e)) + 48 * F.row(at(e - 1)) -
                                 36 * F.row(at(e - 2)) + 16 * F.row(at(e - 3)) - 3 * F.row(at(e - 4)));
        }
    }
    return out;
}

// Spatial spectral derivative of a solver-layout field along a spatial axis.
template <class S>
Mat<S> spatial_derivative(const Mat<S>& F, const Mat<S>& deriv_matrix) {
    return F * deriv_matrix.transpose();
}

// ---------------------------------------------------------------------------
// Hydrodynamic moments of the scaled fluctuation (F - mu)/eps: density,
// bulk velocity, and the normalized temperature moment with weight
// (|v|^2 - d)/sqrt(2d) (unit-variance against mu).

template <class S>
struct HydroMoments {
    Vec<S> rho;    // n_x
    Mat<S> u;      // n_x x d_v
    Vec<S> theta;  // n_x
};

template <class S>
HydroMoments<S> hydro_moments_full(const Mat<S>& F, S eps, const SpatialGrid<S>& xg,
                                   const VelocityGrid<S>& vg) {
    const int d = vg.dim;
    Vec<S> mu = global_maxwellian(vg);
    Mat<S> diff = (F.colwise() - mu) / eps;
    HydroMoments<S> m;
    m.rho = (diff.transpose() * Vec<S>::Ones(vg.size())) * vg.cell();
    m.u = (diff.transpose() * vg.nodes) * vg.cell();
    Vec<S> wtheta = (vg.speed_sq.array() - S(d)).matrix() / std::sqrt(S(2 * d));
    m.theta = (diff.transpose() * wtheta) * vg.cell();
    (void)xg;
    return m;
}

// Same moments from the perturbation f, where F = M(t) + eps sqrt(M(t)) f.
template <class S>
HydroMoments<S> hydro_moments_perturbation(const Mat<S>& f, S t, const ReferenceParams<S>& p,
                                           const SpatialGrid<S>& xg, const VelocityGrid<S>& vg) {
    const int d = vg.dim;
    Vec<S> mu = global_maxwellian(vg);
    Vec<S> M = reference_maxwellian(t, p, vg);
    Vec<S> sM = M.cwiseSqrt();
    Vec<S> base = (M - mu) / p.eps;  // x-independent background fluctuation
    Mat<S> dist = (f.array().colwise() * sM.array()).matrix();
    HydroMoments<S> m;
    Vec<S> ones = Vec<S>::Ones(vg.size());
    Vec<S> wtheta = (vg.speed_sq.array() - S(d)).matrix() / std::sqrt(S(2 * d));
    m.rho = ((dist.transpose() * ones).array() + base.dot(ones)).matrix() * vg.cell();
    m.u = (dist.transpose() * vg.nodes) * vg.cell();
    m.u.rowwise() += (base.transpose() * vg.nodes) * vg.cell();
    m.theta = ((dist.transpose() * wtheta).array() + base.dot(wtheta)).matrix() * vg.cell();
    (void)xg;
    return m;
}

// ---------------------------------------------------------------------------
// Global conserved quantities of the full distribution and the residuals of
// their evolution laws: mass is constant; momentum changes by eps * <E F>;
// energy changes by 2 eps * <E.v F>.

template <class S>
struct GlobalMoments {
    S mass = 0;
    Vec<S> momentum;  // d_v
    S energy = 0;
};

template <class S>
GlobalMoments<S> compute_global_moments(const Mat<S>& F, const SpatialGrid<S>& xg,
                                        const VelocityGrid<S>& vg) {
    GlobalMoments<S> g;
    const S w = xg.cell() * vg.cell();
    g.mass = F.sum() * w;
    g.momentum = (vg.nodes.transpose() * F * Vec<S>::Ones(F.cols())) * w;
    g.energy = (vg.speed_sq.transpose() * F).sum() * w;
    return g;
}

// Force-coupling integrals: I1 = <E F> (vector), I2 = <E.v F> (scalar), with
// E sampled as n_x x d rows.
template <class S>
struct ForceCoupling {
    Vec<S> I1;
    S I2 = 0;
};

template <class S>
ForceCoupling<S> compute_force_coupling(const Mat<S>& F, const Mat<S>& E_sampled,
                                        const SpatialGrid<S>& xg, const VelocityGrid<S>& vg) {
    const S w = xg.cell() * vg.cell();
    const int dc = std::min<int>(vg.dim, int(E_sampled.cols()));
    ForceCoupling<S> c;
    Vec<S> colmass = (F.transpose() * Vec<S>::Ones(vg.size()));   // per x
    Mat<S> colmom = F.transpose() * vg.nodes;                     // n_x x d
    c.I1 = Vec<S>::Zero(E_sampled.cols());
    for (int k = 0; k < int(E_sampled.cols()); ++k)
        c.I1[k] = E_sampled.col(k).dot(colmass) * w;
    c.I2 = 0;
    for (int k = 0; k < dc; ++k) c.I2 += E_sampled.col(k).dot(colmom.col(k)) * w;
    return c;
}

template <class S>
struct MomentResiduals {
    S mass_drift = 0;         // max |mass(t) - mass(0)|
    S momentum_residual = 0;  // max |d/dt momentum - eps I1| (midpoint averaged)
    S energy_residual = 0;    // max |d/dt energy - 2 eps I2|
};

template <class S>
MomentResiduals<S> moment_residuals(const std::vector<GlobalMoments<S>>& series,
                                    const std::vector<ForceCoupling<S>>& coupling, S dt, S eps) {
    if (series.size() < 2 || coupling.size() != series.size())
        throw std::invalid_argument("moment residuals: need matching series of length >= 2");
    MomentResiduals<S> r;
    for (size_t k = 0; k < series.size(); ++k)
        r.mass_drift = std::max(r.mass_drift, std::abs(series[k].mass - series[0].mass));
    for (size_t k = 0; k + 1 < series.size(); ++k) {
        Vec<S> dmom = (series[k + 1].momentum - series[k].momentum) / dt;
        Vec<S> rhs = eps * (coupling[k].I1 + coupling[k + 1].I1) / S(2);
        r.momentum_residual = std::max(r.momentum_residual, (dmom - rhs).template lpNorm<Eigen::Infinity>());
        S den = (series[k + 1].energy - series[k].energy) / dt;
        S erhs = S(2) * eps * (coupling[k].I2 + coupling[k + 1].I2) / S(2);
        r.energy_residual = std::max(r.energy_residual, std::abs(den - erhs));
    }
    return r;
}

// ---------------------------------------------------------------------------
// Scaled Sobolev norm: sum over |l| + |j| <= s of ||d^j_l f||^2, with the
// factor eps^2 on every term having at least one velocity derivative.

template <class S>
S sobolev_eps_norm_sq(const Mat<S>& f, S eps, int s, const SpatialGrid<S>& xg,
                      const VelocityGrid<S>& vg,
                      const std::vector<Mat<S>>& dx_matrices) {
    if (s < 0 || s > 2) throw std::invalid_argument("sobolev norm: order s must be 0, 1 or 2");
    if (int(dx_matrices.size()) < (s > 0 ? xg.dim : 0))
        throw std::invalid_argument("sobolev norm: need one derivative matrix per spatial axis");
    S total = l2_sq_xv(f, xg, vg);
    if (s == 0) return total;

    const S e2 = eps * eps;
    std::vector<Mat<S>> fx(xg.dim), fv(vg.dim);
    for (int a = 0; a < xg.dim; ++a) {
        fx[a] = spatial_derivative(f, dx_matrices[a]);
        total += l2_sq_xv(fx[a], xg, vg);
    }
    for (int b = 0; b < vg.dim; ++b) {
        fv[b] = velocity_derivative(f, b, vg);
        total += e2 * l2_sq_xv(fv[b], xg, vg);
    }
    if (s == 1) return total;

    for (int a = 0; a < xg.dim; ++a)
        for (int a2 = a; a2 < xg.dim; ++a2)
            total += l2_sq_xv(Mat<S>(spatial_derivative(fx[a], dx_matrices[a2])), xg, vg);
    for (int a = 0; a < xg.dim; ++a)
        for (int b = 0; b < vg.dim; ++b)
            total += e2 * l2_sq_xv(Mat<S>(velocity_derivative(fx[a], b, vg)), xg, vg);
    for (int b = 0; b < vg.dim; ++b)
        for (int b2 = b; b2 < vg.dim; ++b2)
            total += e2 * l2_sq_xv(Mat<S>(velocity_derivative(fv[b], b2, vg)), xg, vg);
    return total;
}

template <class S>
S sobolev_eps_norm(const Mat<S>& f, S eps, int s, const SpatialGrid<S>& xg,
                   const VelocityGrid<S>& vg, const std::vector<Mat<S>>& dx_matrices) {
    return std::sqrt(sobolev_eps_norm_sq(f, eps, s, xg, vg, dx_matrices));
}

// Convenience: build the per-axis spatial derivative matrices once.
template <class S>
std::vector<Mat<S>> spatial_derivative_matrices(const SpatialGrid<S>& xg) {
    std::vector<Mat<S>> d(xg.dim);
    for (int a = 0; a < xg.dim; ++a) d[a] = xg.derivative_matrix(a);
    return d;
}

// ---------------------------------------------------------------------------
// Twisted (hypocoercive) functional: per paired axis i and spatial multi-index
// l of order s'-1,
//   Q_{l,i}(f) = p ||d^0_{l+e_i} f||^2 + q eps^2 ||d^{e_i}_l f||^2
//                + eps r <d^0_{l+e_i} f, d^{e_i}_l f>,
// assembled as ||f||^2 + Q_1 + eta * sum_{s'=2..s} F_{s'}. Positivity needs
// r^2 <= p q; the transport commutator argument further needs q <= p.

template <class S>
struct TwistedParams {
    S p = 4, q = 1, r = 1;
    S eta = S(0.1);

    void validate() const {
        if (!(p > S(0)) || !(q > S(0))) throw std::invalid_argument("twisted.p and twisted.q must be > 0");
        if (r * r > p * q) throw std::invalid_argument("twisted.r^2 must be <= twisted.p * twisted.q");
        if (q > p) throw std::invalid_argument("twisted.q must be <= twisted.p");
        if (!(eta > S(0))) throw std::invalid_argument("twisted.eta must be > 0");
    }
};

template <class S>
S twisted_functional(const Mat<S>& f, S eps, int s, const TwistedParams<S>& tp,
                     const SpatialGrid<S>& xg, const VelocityGrid<S>& vg,
                     const std::vector<Mat<S>>& dx_matrices) {
    tp.validate();
    if (s < 1 || s > 2) throw std::invalid_argument("twisted functional: order s must be 1 or 2");
    const int npair = std::min(xg.dim, vg.dim);
    const S e2 = eps * eps, w = xg.cell() * vg.cell();

    auto Q = [&](const Mat<S>& base, int i) {
        Mat<S> gx = spatial_derivative(base, dx_matrices[i]);
        Mat<S> gv = velocity_derivative(base, i, vg);
        return tp.p * gx.squaredNorm() * w + tp.q * e2 * gv.squaredNorm() * w +
               eps * tp.r * (gx.cwiseProduct(gv).sum() * w);
    };

    S total = l2_sq_xv(f, xg, vg);
    for (int i = 0; i < npair; ++i) total += Q(f, i);
    if (s == 2) {
        for (int a = 0; a < xg.dim; ++a) {
            Mat<S> fa = spatial_derivative(f, dx_matrices[a]);
            for (int i = 0; i < npair; ++i) total += tp.eta * Q(fa, i);
        }
    }
    return total;
}

// ---------------------------------------------------------------------------
// Fluid-part Poincare check: with pi f the projection onto the kernel basis,
//   ||pi f||^2 <= C ( ||grad_x pi f||^2 + |global moments of f|^2 ).
// Returns both sides so the caller can monitor the best constant.

template <class S>
struct PoincareCheck {
    S lhs = 0;       // ||pi f||^2
    S gradient = 0;  // sum_axes ||d_x pi f||^2
    S moments = 0;   // squared global kernel coefficients
    S ratio = 0;     // lhs / (gradient + moments)
};

template <class S>
PoincareCheck<S> poincare_fluid_check(const Mat<S>& f, const Mat<S>& kernel_basis,
                                      const SpatialGrid<S>& xg, const VelocityGrid<S>& vg,
                                      const std::vector<Mat<S>>& dx_matrices) {
    Mat<S> coef = (kernel_basis.transpose() * f) * vg.cell();  // (d+2) x n_x
    Mat<S> pif = kernel_basis * coef;
    PoincareCheck<S> c;
    c.lhs = l2_sq_xv(pif, xg, vg);
    for (int a = 0; a < xg.dim; ++a)
        c.gradient += l2_sq_xv(Mat<S>(spatial_derivative(pif, dx_matrices[a])), xg, vg);
    // global coefficients: x-average of each kernel coordinate
    Vec<S> global = coef.rowwise().sum() * xg.cell();
    c.moments = global.squaredNorm();
    const S den = c.gradient + c.moments;
    c.ratio = den > S(0) ? c.lhs / den : std::numeric_limits<S>::infinity();
    return c;
}

// ---------------------------------------------------------------------------
// Decay fitting: least squares of log(value) against log(1 + t), starting at
// the series maximum (ignoring the transient build-up).

template <class S>
struct DecayFit {
    S exponent = 0;   // slope in log(value) ~ intercept + exponent log(1+t)
    S intercept = 0;
    S r_squared = 0;
    long start = 0;   // fit window start (argmax of the series)
    bool valid = false;
};

template <class S>
DecayFit<S> fit_decay(const Vec<S>& times, const Vec<S>& values) {
    DecayFit<S> fit;
    if (times.size() != values.size() || times.size() < 3) return fit;
    long start = 0;
    values.maxCoeff(&start);
    std::vector<S> xs, ys;
    for (long k = start; k < times.size(); ++k) {
        if (values[k] > S(0)) {
            xs.push_back(std::log1p(times[k]));
            ys.push_back(std::log(values[k]));
        }
    }
    if (xs.size() < 3) return fit;
    const long m = long(xs.size());
    S mx = 0, my = 0;
    for (long k = 0; k < m; ++k) {
        mx += xs[k];
        my += ys[k];
    }
    mx /= S(m);
    my /= S(m);
    S sxx = 0, sxy = 0, syy = 0;
    for (long k = 0; k < m; ++k) {
        sxx += (xs[k] - mx) * (xs[k] - mx);
        sxy += (xs[k] - mx) * (ys[k] - my);
        syy += (ys[k] - my) * (ys[k] - my);
    }
    if (!(sxx > S(0))) return fit;
    fit.exponent = sxy / sxx;
    fit.intercept = my - fit.exponent * mx;
    fit.r_squared = syy > S(0) ? (sxy * sxy) / (sxx * syy) : S(1);
    fit.start = start;
    fit.valid = true;
    return fit;
}

// ---------------------------------------------------------------------------
// Per-snapshot norm report and deterministic CSV output.

template <class S>
struct NormReport {
    S time = 0;
    S l2 = 0;        // ||f||_{L^2(x,v)}
    S h1_eps = 0;    // scaled H^1 norm
    S h2_eps = 0;    // scaled H^2 norm
    S twisted = 0;   // twisted functional (order 2), squared root
    S fluid = 0;     // ||pi f||
    S kinetic = 0;   // ||f - pi f||
    S mass = 0;      // global mass of the full distribution
};

template <class S>
void write_norm_csv(const std::string& path, const std::vector<NormReport<S>>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open norm csv for writing: " + path);
    out << "time,l2,h1_eps,h2_eps,twisted,fluid,kinetic,mass\n";
    out << std::setprecision(17);
    for (const auto& r : rows)
        out << r.time << ',' << r.l2 << ',' << r.h1_eps << ',' << r.h2_eps << ',' << r.twisted
            << ',' << r.fluid << ',' << r.kinetic << ',' << r.mass << '\n';
}

}  // namespace boltzns
