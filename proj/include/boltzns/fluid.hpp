#pragma once

// Incompressible Navier-Stokes-Fourier solver on the torus (the hydrodynamic
// limit target system), plus the Chapman-Enskog transport coefficients
// extracted from the linearized collision operator:
//   d_t u - nu lap u + u.grad u + grad p = g_u,   div u = 0,
//   d_t theta - kappa lap theta + u.grad theta = 0,   rho = -theta.
// Pseudo-spectral in space with a 2/3 dealiasing mask; diffusion integrated
// exactly by factor, nonlinearity by Heun (RK2); Leray projection enforces
// incompressibility mode by mode.

#include <boltzns/collision.hpp>
#include <boltzns/grids.hpp>

#include <vector>

namespace boltzns {

// ---------------------------------------------------------------------------
// Transport coefficients: with A_ij = (v_i v_j - delta_ij |v|^2/d) sqrt(mu)
// and B_i = v_i (|v|^2 - (d+2))/2 sqrt(mu),
//   nu    = 1/((d-1)(d+2)) sum_ij <A_ij, (-L)^{-1} A_ij>,
//   kappa = 2/(d(d+2))     sum_i  <B_i,  (-L)^{-1} B_i>.
// The solve runs on the kernel complement by shifting -L with the kernel
// projector (SPD on the whole space; right-hand sides are kernel-orthogonal).

template <class S>
struct TransportCoefficients {
    S viscosity = 0;
    S conductivity = 0;
};

template <class S>
TransportCoefficients<S> transport_coefficients_matrix(const Mat<S>& L, const Mat<S>& kernel_basis,
                                                       const VelocityGrid<S>& g) {
    const int d = g.dim;
    const long nv = g.size();
    const S cell = g.cell();
    Vec<S> smu = global_maxwellian(g).cwiseSqrt();

    // -L + shift * Phi Phi^T cell, SPD; pick the shift at the scale of L.
    const S shift = std::max(S(1), L.cwiseAbs().maxCoeff());
    Mat<S> Ms = -L + shift * cell * (kernel_basis * kernel_basis.transpose());
    Eigen::LDLT<Mat<S>> ldlt(Ms);
    if (ldlt.info() != Eigen::Success)
        throw std::runtime_error("transport coefficients: operator shift is not SPD");

    auto project_perp = [&](Vec<S> w) {
        w -= kernel_basis * ((kernel_basis.transpose() * w) * cell);
        return w;
    };
    auto dirichlet = [&](const Vec<S>& rhs) {
        Vec<S> r = project_perp(rhs);
        Vec<S> x = ldlt.solve(r);
        return r.dot(x) * cell;
    };

    TransportCoefficients<S> tc;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            Vec<S> a(nv);
            for (long k = 0; k < nv; ++k) {
                S vij = g.nodes(k, i) * g.nodes(k, j);
                if (i == j) vij -= g.speed_sq[k] / S(d);
                a[k] = vij * smu[k];
            }
            tc.viscosity += dirichlet(a);
        }
    tc.viscosity /= S((d - 1) * (d + 2));
    for (int i = 0; i < d; ++i) {
        Vec<S> b(nv);
        for (long k = 0; k < nv; ++k)
            b[k] = g.nodes(k, i) * (g.speed_sq[k] - S(d + 2)) / S(2) * smu[k];
        tc.conductivity += dirichlet(b);
    }
    tc.conductivity *= S(2) / S(d * (d + 2));
    return tc;
}

template <class S>
TransportCoefficients<S> transport_coefficients(const LinearizedOperator<S>& op,
                                                const VelocityGrid<S>& g) {
    return transport_coefficients_matrix(op.L, op.kernel_basis, g);
}

// ---------------------------------------------------------------------------
// Fluid state and solver.

template <class S>
struct FluidState {
    S time = 0;
    CMat<S> u_hat;     // n_x x d spectral velocity
    CVec<S> theta_hat; // n_x spectral temperature
};

template <class S>
struct FluidParams {
    S viscosity = 1;
    S conductivity = 1;
    // Momentum forcing g_u(t) sampled on the grid (n_x x d); empty = none.
    std::function<Mat<S>(S)> forcing;

    void validate() const {
        if (!(viscosity > S(0))) throw std::invalid_argument("fluid.viscosity must be > 0");
        if (!(conductivity > S(0))) throw std::invalid_argument("fluid.conductivity must be > 0");
    }
};

template <class S>
struct FluidSolver {
    SpatialGrid<S> grid;
    FluidParams<S> par;
    CMat<S> fwd, bwd;   // full-grid DFT pair
    Mat<S> kvec;        // n_x x dim signed wavenumbers (Nyquist zeroed)
    Vec<S> k2;          // |k|^2 per mode
    Vec<S> dealias;     // 2/3-rule mask, {0,1}

    long nx() const { return grid.size(); }
    int dim() const { return grid.dim; }

    // Leray projection in place: u_hat -= k (k.u_hat)/|k|^2 per mode.
    void project(CMat<S>& u_hat) const {
        for (long m = 0; m < nx(); ++m) {
            if (k2[m] <= S(0)) continue;
            std::complex<S> dot(0, 0);
            for (int a = 0; a < dim(); ++a) dot += kvec(m, a) * u_hat(m, a);
            dot /= k2[m];
            for (int a = 0; a < dim(); ++a) u_hat(m, a) -= kvec(m, a) * dot;
        }
    }

    Mat<S> to_physical(const CMat<S>& hat) const { return (bwd * hat).real(); }
    CMat<S> to_spectral(const Mat<S>& phys) const {
        return fwd * phys.template cast<std::complex<S>>();
    }

    FluidState<S> make_state(const Mat<S>& u, const Vec<S>& theta, S time = 0) const {
        FluidState<S> st;
        st.time = time;
        st.u_hat = to_spectral(u);
        project(st.u_hat);
        st.theta_hat = fwd * theta.template cast<std::complex<S>>();
        return st;
    }

    S divergence_max(const FluidState<S>& st) const {
        CVec<S> div = CVec<S>::Zero(nx());
        for (long m = 0; m < nx(); ++m)
            for (int a = 0; a < dim(); ++a)
                div[m] += std::complex<S>(0, kvec(m, a)) * st.u_hat(m, a);
        return (bwd * div).real().cwiseAbs().maxCoeff();
    }

    // Nonlinear + forcing terms in spectral space, dealiased and projected.
    void rhs(S t, const CMat<S>& u_hat, const CVec<S>& th_hat, CMat<S>& nu_out,
             CVec<S>& nth_out) const {
        const int d = dim();
        Mat<S> u = to_physical(u_hat);
        Mat<S> adv_u = Mat<S>::Zero(nx(), d);
        Vec<S> adv_th = Vec<S>::Zero(nx());
        for (int a = 0; a < d; ++a) {
            CMat<S> dua(nx(), d);
            for (int b = 0; b < d; ++b)
                for (long m = 0; m < nx(); ++m)
                    dua(m, b) = std::complex<S>(0, kvec(m, a)) * u_hat(m, b);
            Mat<S> grad = (bwd * dua).real();  // d_a u_b for all b
            for (int b = 0; b < d; ++b) adv_u.col(b) += u.col(a).cwiseProduct(grad.col(b));
            CVec<S> dth(nx());
            for (long m = 0; m < nx(); ++m)
                dth[m] = std::complex<S>(0, kvec(m, a)) * th_hat[m];
            adv_th += u.col(a).cwiseProduct((bwd * dth).real());
        }
        Mat<S> force = par.forcing ? par.forcing(t) : Mat<S>::Zero(nx(), d).eval();
        nu_out = to_spectral(Mat<S>(force - adv_u));
        nth_out = fwd * (-adv_th).template cast<std::complex<S>>();
        for (long m = 0; m < nx(); ++m) {
            nu_out.row(m) *= dealias[m];
            nth_out[m] *= dealias[m];
        }
        project(nu_out);
    }

    // One Heun step with exact diffusion factors.
    void step(FluidState<S>& st, S dt) const {
        CMat<S> n1(nx(), dim()), n2(nx(), dim());
        CVec<S> m1(nx()), m2(nx());
        rhs(st.time, st.u_hat, st.theta_hat, n1, m1);

        Vec<S> eu = (-par.viscosity * dt * k2.array()).exp();
        Vec<S> et = (-par.conductivity * dt * k2.array()).exp();
        CMat<S> up(nx(), dim());
        CVec<S> tp(nx());
        for (long m = 0; m < nx(); ++m) {
            up.row(m) = eu[m] * (st.u_hat.row(m) + dt * n1.row(m));
            tp[m] = et[m] * (st.theta_hat[m] + dt * m1[m]);
        }
        rhs(st.time + dt, up, tp, n2, m2);
        for (long m = 0; m < nx(); ++m) {
            st.u_hat.row(m) = eu[m] * st.u_hat.row(m) +
                              (dt / S(2)) * (eu[m] * n1.row(m) + n2.row(m));
            st.theta_hat[m] =
                et[m] * st.theta_hat[m] + (dt / S(2)) * (et[m] * m1[m] + m2[m]);
        }
        st.time += dt;
    }

    // March to t_final, returning snapshots every `stride` steps (and final).
    std::vector<FluidState<S>> run(FluidState<S> st, S t_final, S dt, long stride = 1) const {
        if (!(dt > S(0))) throw std::invalid_argument("fluid run: dt must be > 0");
        std::vector<FluidState<S>> out;
        out.push_back(st);
        long k = 0;
        while (st.time < t_final - dt * S(0.5)) {
            S h = std::min(dt, t_final - st.time);
            step(st, h);
            if (++k % stride == 0 || st.time >= t_final - dt * S(0.5)) out.push_back(st);
            if (!st.u_hat.allFinite() || !st.theta_hat.allFinite())
                throw std::runtime_error("fluid run: solution lost finiteness (reduce dt)");
        }
        return out;
    }

    // Mean kinetic energy (1/2) int |u|^2 dx and theta L^2 norm.
    S kinetic_energy(const FluidState<S>& st) const {
        return to_physical(st.u_hat).squaredNorm() * grid.cell() / S(2);
    }
    S theta_norm(const FluidState<S>& st) const {
        return std::sqrt((bwd * st.theta_hat).real().squaredNorm() * grid.cell());
    }
};

template <class S>
FluidSolver<S> make_fluid_solver(const SpatialGrid<S>& grid, FluidParams<S> par) {
    par.validate();
    FluidSolver<S> s;
    s.grid = grid;
    s.par = std::move(par);
    s.fwd = grid.dft_full();
    s.bwd = grid.idft_full();
    s.kvec.resize(grid.size(), grid.dim);
    s.k2.resize(grid.size());
    s.dealias.resize(grid.size());
    const int cut = grid.n / 3;
    for (long m = 0; m < grid.size(); ++m) {
        auto mi = grid.unflatten(m);
        S sq = 0;
        bool keep = true;
        for (int a = 0; a < grid.dim; ++a) {
            int k = grid.wavenumber(mi[a]);
            if (2 * k == grid.n) k = 0;  // unmatched Nyquist mode
            s.kvec(m, a) = S(k);
            sq += S(k) * S(k);
            if (std::abs(k) > cut) keep = false;
        }
        s.k2[m] = sq;
        s.dealias[m] = keep ? S(1) : S(0);
    }
    return s;
}

// Classical initial data: the Taylor-Green vortex (divergence-free; an exact
// Navier-Stokes solution decaying like exp(-2 nu t) on the 2-pi torus).
template <class S>
Mat<S> taylor_green(const SpatialGrid<S>& grid, S amplitude = 1) {
    if (grid.dim != 2) throw std::invalid_argument("taylor-green needs a 2-d spatial grid");
    Mat<S> u(grid.size(), 2);
    for (long m = 0; m < grid.size(); ++m) {
        auto x = grid.node(m);
        u(m, 0) = amplitude * std::sin(x[0]) * std::cos(x[1]);
        u(m, 1) = -amplitude * std::cos(x[0]) * std::sin(x[1]);
    }
    return u;
}

}  // namespace boltzns
