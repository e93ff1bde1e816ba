#pragma once

// Time integration of the scaled Boltzmann equation with external force on the
// torus, in two representations:
//   * perturbation mode: evolve f where F = M(t) + eps sqrt(M) f, with the
//     six-term right-hand side
//       S1 = -(1/eps) v.grad_x f          (exact spectral advection)
//       S2 = -eps E.grad_v f              (finite-difference v-advection)
//       S3 = -eps Escr f                  (perturbative force damping)
//       S4 = (1/eps^2) L[f]               (linearized collision, implicit)
//       S5 = (1/eps) Gamma[f,f]           (bilinear collision remainder)
//       S6 = -2 Escr sqrt(M)              (fluid-mode source)
//   * full mode: evolve F directly under
//       d_t F = -(1/eps) v.grad_x F - eps E.grad_v F + (1/eps^2) Q(F,F).
// Stepping is Strang splitting: half-step exact transport, a full implicit
// midpoint step on the remaining terms (the stiff linearized collision solved
// by a cached LU factorization, the bilinear part iterated to tolerance),
// half-step transport again.

#include <boltzns/collision.hpp>
#include <boltzns/diagnostics.hpp>
#include <boltzns/equilibria.hpp>
#include <boltzns/fluid.hpp>
#include <boltzns/grids.hpp>

#include <complex>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace boltzns {

enum class KineticMode { perturbation, full };

template <class S>
struct KineticState {
    S time = 0;
    // n_v x n_x field: the perturbation f in perturbation mode, F itself in
    // full mode.
    Mat<S> f;
    KineticMode mode = KineticMode::perturbation;
};

template <class S>
struct KineticSettings {
    S dt = 0;                    // 0: pick automatically from grid and gap
    S t_final = 1;
    long snapshot_stride = 0;    // 0: keep only the final field
    S inner_tol = S(1e-10);      // bilinear fixed-point tolerance
    int inner_max_sweeps = 50;
    bool upwind_force = false;   // donor-cell upwind v-advection fluxes instead
                                 // of the centered second-order fluxes (default)
    bool disable_collision = false;  // transport/force-only stepping
    bool spectral_diagnosis = true;  // eigen-analysis on first assembly
    long n_reuse = 16;               // rebuild the time-dependent collision
                                     // matrix every n_reuse steps inside run()

    void validate() const {
        if (n_reuse < 1) throw std::invalid_argument("kinetic.n_reuse must be >= 1");
        if (!(t_final > S(0))) throw std::invalid_argument("kinetic.t_final must be > 0");
        if (dt < S(0)) throw std::invalid_argument("kinetic.dt must be >= 0");
        if (!(inner_tol > S(0))) throw std::invalid_argument("kinetic.inner_tol must be > 0");
        if (inner_max_sweeps < 1)
            throw std::invalid_argument("kinetic.inner_max_sweeps must be >= 1");
        if (snapshot_stride < 0)
            throw std::invalid_argument("kinetic.snapshot_stride must be >= 0");
    }
};

template <class S>
struct KineticFrame {
    S time = 0;
    GlobalMoments<S> global;    // of the reconstructed full distribution
    ForceCoupling<S> coupling;  // force integrals entering the moment laws
    NormReport<S> norms;        // of the perturbation field
    S min_F = 0;                // positivity monitor (not enforced)
};

template <class S>
struct KineticResult {
    std::vector<KineticFrame<S>> frames;  // one per step boundary
    std::vector<S> field_times;
    std::vector<Mat<S>> fields;           // snapshots every snapshot_stride steps
    KineticState<S> final_state;
    S dt = 0;
    long steps = 0;
    int max_inner_sweeps = 0;
    bool completed = false;
    std::string abort_reason;

    MomentResiduals<S> residuals() const {
        std::vector<GlobalMoments<S>> series;
        std::vector<ForceCoupling<S>> coup;
        for (const auto& fr : frames) {
            series.push_back(fr.global);
            coup.push_back(fr.coupling);
        }
        return moment_residuals(series, coup, dt, eps);
    }
    S eps = 1;  // recorded by the solver for residual evaluation
};

template <class S>
struct KineticSolver {
    SpatialGrid<S> xg;
    VelocityGrid<S> vg;
    ReferenceParams<S> ref;
    ForceField<S> force;
    CollisionKernel<S> kernel;
    KineticSettings<S> settings;

    // Spatial transforms and derivative matrices.
    CMat<S> fwdx, bwdx;
    Mat<S> kmat;  // n_x x dim signed wavenumbers (Nyquist zeroed)
    std::vector<Mat<S>> dxmats;

    // Velocity neighbor tables for the upwind option (-1: outside the box).
    std::vector<std::vector<long>> vminus, vplus;

    // Stiff operator cache (linearization around M(t), or mu in full mode).
    LinearizedOperator<S> op;
    S op_time = std::numeric_limits<S>::quiet_NaN();
    bool op_static = false;
    S op_window = 0;  // matrix-reuse horizon; 0 outside run()
    // Full-mode linear collision map 2 Q(mu, .)/eps^2 and its implicit factor.
    Mat<S> lambda_full;
    Eigen::PartialPivLU<Mat<S>> lu_full;
    S lu_full_tau = std::numeric_limits<S>::quiet_NaN();

    // Cached transport phases exp(-i (k.v) h / eps).
    CMat<S> phase;
    S phase_h = std::numeric_limits<S>::quiet_NaN();

    mutable int last_inner_sweeps = 0;

    long nx() const { return xg.size(); }
    long nv() const { return vg.size(); }

    // -- stiff operator management ------------------------------------------

    void ensure_operator(S t) {
        if (op_static && op.L.rows() == nv()) return;
        if (!std::isnan(op_time) && op_time == t) return;
        // Inside run(), reuse the matrix for up to n_reuse steps: M(t) moves
        // on the slow scale (1+t)^{-1} with amplitude eps^{1+e}.
        if (!std::isnan(op_time) && op.L.rows() == nv() && t > op_time &&
            t - op_time < op_window)
            return;
        const bool first = op.L.rows() != nv();
        op = assemble_L_matrix(t, ref, kernel, vg, first && settings.spectral_diagnosis,
                               /*keep_raw=*/false);
        op_time = t;
        if (ref.a == S(0) && ref.A == S(0)) op_static = true;
    }

    // Full-mode implicit map: Lambda = (2/eps^2) sqrt(mu) L sqrt(mu)^{-1},
    // the symmetrized collision linearization carried back to F-coordinates.
    // The similarity keeps the spectrum of L (nonpositive up to resolution),
    // which the raw one-sided quadrature matrix does not guarantee.
    void ensure_full_factor(S tau) {
        if (lambda_full.rows() != nv()) {
            ReferenceParams<S> pmu = ref;
            pmu.a = pmu.A = S(0);
            auto opmu = assemble_L_matrix(S(0), pmu, kernel, vg, false);
            Vec<S> smu = global_maxwellian(vg).cwiseSqrt();
            lambda_full = (S(2) / (ref.eps * ref.eps)) *
                          (smu.asDiagonal() * opmu.L * smu.cwiseInverse().asDiagonal());
        }
        if (std::isnan(lu_full_tau) || lu_full_tau != tau) {
            lu_full = Eigen::PartialPivLU<Mat<S>>(
                Mat<S>::Identity(nv(), nv()) - tau * lambda_full);
            lu_full_tau = tau;
        }
    }

    // -- transport ----------------------------------------------------------

    void ensure_phase(S h) {
        if (!std::isnan(phase_h) && phase_h == h) return;
        phase.resize(nv(), nx());
        const S scale = h / ref.eps;
        for (long m = 0; m < nx(); ++m)
            for (long i = 0; i < nv(); ++i) {
                S kv = 0;
                for (int a = 0; a < xg.dim; ++a) kv += kmat(m, a) * vg.nodes(i, a);
                phase(i, m) = std::exp(std::complex<S>(0, -kv * scale));
            }
        phase_h = h;
    }

    // Exact solution of d_t f + (1/eps) v.grad_x f = 0 over time h.
    void transport(Mat<S>& f, S h) {
        if (h == S(0)) return;
        ensure_phase(h);
        CMat<S> hat = f.template cast<std::complex<S>>() * fwdx.transpose();
        hat = hat.cwiseProduct(phase);
        f = (hat * bwdx.transpose()).real();
    }

    // -- velocity advection -------------------------------------------------

    // Conservative v-advection of the weighted variable: returns
    //   -(1/w) sum_a eps E_a(x) d_{v_a}(w g)
    // in flux form with ghost-zero boundary at |v| = R. In perturbation mode
    // w = sqrt(M), which bundles S2 with the E-part of S3 (their continuum sum
    // is exactly this weighted advection); in full mode w = 1. The flux form
    // telescopes, so each column's w-weighted mass changes only through the
    // boundary fluxes, which carry the Gaussian tails.
    Mat<S> force_advection(const Mat<S>& g, const Mat<S>& E, const Vec<S>& w) const {
        Mat<S> G = (g.array().colwise() * w.array()).matrix();
        Mat<S> acc = Mat<S>::Zero(nv(), nx());
        Mat<S> Gm(nv(), nx()), Gp(nv(), nx());
        for (int a = 0; a < vg.dim && a < int(E.cols()); ++a) {
            if (E.col(a).cwiseAbs().maxCoeff() == S(0)) continue;
            for (long i = 0; i < nv(); ++i) {
                if (vminus[a][i] >= 0)
                    Gm.row(i) = G.row(vminus[a][i]);
                else
                    Gm.row(i).setZero();
                if (vplus[a][i] >= 0)
                    Gp.row(i) = G.row(vplus[a][i]);
                else
                    Gp.row(i).setZero();
            }
            if (!settings.upwind_force) {
                // centered second-order fluxes (G_{i+1} + G_i)/2
                Mat<S> D = (Gp - Gm) / (S(2) * vg.dv);
                acc += (D.array().rowwise() * (ref.eps * E.col(a)).transpose().array()).matrix();
            } else {
                // donor-cell upwind fluxes
                for (long j = 0; j < nx(); ++j) {
                    const S c = ref.eps * E(j, a);
                    if (c == S(0)) continue;
                    if (c > S(0))
                        acc.col(j) += c * (G.col(j) - Gm.col(j)) / vg.dv;
                    else
                        acc.col(j) += c * (Gp.col(j) - G.col(j)) / vg.dv;
                }
            }
        }
        return -(acc.array().colwise() / w.array()).matrix();
    }

    // The x- and v-independent part of the perturbative force multiplier:
    // (eps^e / 2) (A + a |v|^2 / 2) / (1+t)^2 per velocity node. The E.v part
    // of S3 is folded into force_advection instead.
    Vec<S> force_multiplier_rest(S t) const {
        const S pref = std::pow(ref.eps, ref.e_exp) / (S(2) * (S(1) + t) * (S(1) + t));
        return pref * (ref.A + (ref.a / S(2)) * vg.speed_sq.array()).matrix();
    }

    // -- right-hand sides (direct evaluation, used by explicit references) ---

    Mat<S> rhs_perturbative(const KineticState<S>& st) {
        if (st.mode != KineticMode::perturbation)
            throw std::invalid_argument("rhs_perturbative needs perturbation mode");
        const S t = st.time;
        Mat<S> E = force.sample(t, xg);
        Mat<S> rhs = Mat<S>::Zero(nv(), nx());
        // S1: spectral x-advection.
        for (int a = 0; a < xg.dim; ++a) {
            Mat<S> dxa = spatial_derivative(st.f, dxmats[a]);
            rhs -= (dxa.array().colwise() * vg.nodes.col(a).array()).matrix() / ref.eps;
        }
        // S2 plus the E.v part of S3 (composite conservative form), then the
        // remaining S3 multiplier and the source S6.
        Vec<S> sM = reference_maxwellian(t, ref, vg).cwiseSqrt();
        rhs += force_advection(st.f, E, sM);
        rhs -= ref.eps * (st.f.array().colwise() * force_multiplier_rest(t).array()).matrix();
        Mat<S> escr = perturbative_force_field(t, ref, E, vg);
        rhs -= S(2) * (escr.array().colwise() * sM.array()).matrix();
        if (!settings.disable_collision) {
            // S4 and S5.
            ensure_operator(t);
            rhs.noalias() += (op.L * st.f) / (ref.eps * ref.eps);
            rhs += bilinear_Gamma(st.f, st.f, t, ref, kernel, vg) / ref.eps;
        }
        return rhs;
    }

    Mat<S> rhs_full(const KineticState<S>& st) {
        if (st.mode != KineticMode::full)
            throw std::invalid_argument("rhs_full needs full mode");
        const S t = st.time;
        Mat<S> E = force.sample(t, xg);
        Mat<S> rhs = Mat<S>::Zero(nv(), nx());
        for (int a = 0; a < xg.dim; ++a) {
            Mat<S> dxa = spatial_derivative(st.f, dxmats[a]);
            rhs -= (dxa.array().colwise() * vg.nodes.col(a).array()).matrix() / ref.eps;
        }
        rhs += force_advection(st.f, E, Vec<S>::Ones(nv()));
        if (!settings.disable_collision) {
            ReferenceParams<S> pmu = ref;
            pmu.a = pmu.A = S(0);
            rhs += bilinear_Q_xv(st.f, st.f, kernel, vg, options_for_reference(S(0), pmu)) /
                   (ref.eps * ref.eps);
        }
        return rhs;
    }

    // -- representation maps ------------------------------------------------

    Mat<S> reconstruct_full(const Mat<S>& f, S t) const {
        Vec<S> M = reference_maxwellian(t, ref, vg);
        Vec<S> sM = M.cwiseSqrt();
        Mat<S> F = ref.eps * (f.array().colwise() * sM.array()).matrix();
        F.colwise() += M;
        return F;
    }
    Mat<S> perturbation_from_full(const Mat<S>& F, S t) const {
        Vec<S> M = reference_maxwellian(t, ref, vg);
        Vec<S> sM = M.cwiseSqrt();
        Mat<S> f = F;
        f.colwise() -= M;
        return (f.array().colwise() / sM.array()).matrix() / ref.eps;
    }

    // -- stiff stage --------------------------------------------------------

    // Implicit midpoint over [t0, t0+dt] on everything except the spatial
    // transport: the linearized collision operator is solved exactly via LU,
    // the bilinear term and the mild force terms are iterated to tolerance.
    void stiff_stage_perturbation(Mat<S>& f, S t0, S dt) {
        const S tmid = t0 + dt / S(2);
        const S eps = ref.eps;
        Mat<S> E = force.sample(tmid, xg);
        Mat<S> escr = perturbative_force_field(tmid, ref, E, vg);
        Vec<S> sM = reference_maxwellian(tmid, ref, vg).cwiseSqrt();
        Vec<S> erest = force_multiplier_rest(tmid);
        Mat<S> source = S(-2) * (escr.array().colwise() * sM.array()).matrix();

        const bool collide = !settings.disable_collision;
        Mat<S> base = f;
        if (collide) {
            ensure_operator(tmid);
            const S tau = dt / (S(2) * eps * eps);
            if (op.lu_tau != tau || op.lu.rows() != nv()) op.factor_implicit(tau);
            base.noalias() += tau * (op.L * f);
        }

        Mat<S> cur = f;  // iterate for f(t0 + dt)
        int sweep = 0;
        for (; sweep < settings.inner_max_sweeps; ++sweep) {
            Mat<S> mid = (f + cur) / S(2);
            Mat<S> nlin = force_advection(mid, E, sM);
            nlin -= eps * (mid.array().colwise() * erest.array()).matrix();
            nlin += source;
            if (collide) nlin += bilinear_Gamma(mid, mid, tmid, ref, kernel, vg) / eps;
            Mat<S> next = base + dt * nlin;
            if (collide) next = op.lu.solve(next);
            const S change = (next - cur).norm();
            const S scale = next.norm() + S(1e-30);
            cur = std::move(next);
            if (change <= settings.inner_tol * scale) break;
        }
        last_inner_sweeps = std::max(last_inner_sweeps, sweep + 1);
        if (sweep == settings.inner_max_sweeps)
            throw std::runtime_error(
                "kinetic step: bilinear inner iteration failed to converge in " +
                std::to_string(settings.inner_max_sweeps) + " sweeps (reduce dt)");
        f = std::move(cur);
    }

    void stiff_stage_full(Mat<S>& F, S t0, S dt) {
        const S tmid = t0 + dt / S(2);
        const S eps = ref.eps;
        Mat<S> E = force.sample(tmid, xg);
        const bool collide = !settings.disable_collision;
        ReferenceParams<S> pmu = ref;
        pmu.a = pmu.A = S(0);
        const auto opt = options_for_reference(S(0), pmu);

        Mat<S> base = F;
        if (collide) {
            ensure_full_factor(dt / S(2));
            base.noalias() += (dt / S(2)) * (lambda_full * F);
        }
        Mat<S> cur = F;
        int sweep = 0;
        for (; sweep < settings.inner_max_sweeps; ++sweep) {
            Mat<S> mid = (F + cur) / S(2);
            Mat<S> nlin = force_advection(mid, E, Vec<S>::Ones(nv()));
            if (collide) {
                nlin += bilinear_Q_xv(mid, mid, kernel, vg, opt) / (eps * eps);
                nlin.noalias() -= lambda_full * mid;
            }
            Mat<S> next = base + dt * nlin;
            if (collide) next = lu_full.solve(next);
            const S change = (next - cur).norm();
            const S scale = next.norm() + S(1e-30);
            cur = std::move(next);
            if (change <= settings.inner_tol * scale) break;
        }
        last_inner_sweeps = std::max(last_inner_sweeps, sweep + 1);
        if (sweep == settings.inner_max_sweeps)
            throw std::runtime_error(
                "kinetic step: bilinear inner iteration failed to converge in " +
                std::to_string(settings.inner_max_sweeps) + " sweeps (reduce dt)");
        F = std::move(cur);
    }

    // -- stepping -----------------------------------------------------------

    void step(KineticState<S>& st, S dt) {
        if (!(dt > S(0))) throw std::invalid_argument("kinetic step: dt must be > 0");
        transport(st.f, dt / S(2));
        if (st.mode == KineticMode::perturbation)
            stiff_stage_perturbation(st.f, st.time, dt);
        else
            stiff_stage_full(st.f, st.time, dt);
        transport(st.f, dt / S(2));
        st.time += dt;
    }

    // Default step size: transport-splitting bound against the stiffness scale
    // estimated from the spectral gap.
    S default_dt() {
        ensure_operator(S(0));
        const S lam = std::max(op.gap, S(1e-3));
        const S dt_transport = S(0.5) * ref.eps * xg.dx / vg.R;
        const S dt_stiff = S(0.1) * ref.eps * ref.eps / lam;
        return std::min(dt_transport, dt_stiff);
    }

    // -- diagnostics --------------------------------------------------------

    KineticFrame<S> diagnose(const KineticState<S>& st) {
        KineticFrame<S> fr;
        fr.time = st.time;
        Mat<S> F = st.mode == KineticMode::perturbation ? reconstruct_full(st.f, st.time)
                                                        : st.f;
        Mat<S> f = st.mode == KineticMode::perturbation ? st.f
                                                        : perturbation_from_full(st.f, st.time);
        fr.global = compute_global_moments(F, xg, vg);
        fr.coupling = compute_force_coupling(F, force.sample(st.time, xg), xg, vg);
        fr.min_F = F.minCoeff();

        NormReport<S>& nr = fr.norms;
        nr.time = st.time;
        nr.l2 = std::sqrt(l2_sq_xv(f, xg, vg));
        nr.h1_eps = sobolev_eps_norm(f, ref.eps, 1, xg, vg, dxmats);
        nr.h2_eps = sobolev_eps_norm(f, ref.eps, 2, xg, vg, dxmats);
        TwistedParams<S> tw;
        nr.twisted = std::sqrt(twisted_functional(f, ref.eps, 2, tw, xg, vg, dxmats));
        Mat<S> basis =
            make_kernel_basis(reference_maxwellian(st.time, ref, vg).cwiseSqrt().eval(), vg);
        auto split = kernel_projection(f, basis, vg);
        nr.fluid = std::sqrt(l2_sq_xv(split.first, xg, vg));
        nr.kinetic = std::sqrt(l2_sq_xv(split.second, xg, vg));
        nr.mass = fr.global.mass;
        return fr;
    }

    // -- trajectory ---------------------------------------------------------

    KineticResult<S> run(KineticState<S> st) {
        settings.validate();
        KineticResult<S> out;
        out.eps = ref.eps;
        const S dt = settings.dt > S(0) ? settings.dt : default_dt();
        const long steps = std::max<long>(1, long(std::ceil(settings.t_final / dt - S(1e-9))));
        out.dt = settings.t_final / S(steps);
        op_window = settings.n_reuse > 1 ? S(settings.n_reuse) * out.dt : S(0);
        struct WindowGuard {
            S* w;
            ~WindowGuard() { *w = S(0); }
        } guard{&op_window};

        out.frames.push_back(diagnose(st));
        if (settings.snapshot_stride > 0) {
            out.field_times.push_back(st.time);
            out.fields.push_back(st.f);
        }
        for (long k = 0; k < steps; ++k) {
            try {
                step(st, out.dt);
            } catch (const std::runtime_error& e) {
                out.abort_reason = e.what();
                return out;
            }
            if (!st.f.allFinite()) {
                out.abort_reason = "kinetic run: solution lost finiteness at t = " +
                                   std::to_string(st.time);
                return out;
            }
            out.frames.push_back(diagnose(st));
            if (settings.snapshot_stride > 0 &&
                ((k + 1) % settings.snapshot_stride == 0 || k + 1 == steps)) {
                out.field_times.push_back(st.time);
                out.fields.push_back(st.f);
            }
            out.steps = k + 1;
        }
        out.final_state = std::move(st);
        out.max_inner_sweeps = last_inner_sweeps;
        out.completed = true;
        return out;
    }
};

template <class S>
KineticSolver<S> make_kinetic_solver(const SpatialGrid<S>& xg, const VelocityGrid<S>& vg,
                                     const ReferenceParams<S>& ref, const ForceField<S>& force,
                                     const CollisionKernel<S>& kernel,
                                     KineticSettings<S> settings = {}) {
    ref.validate();
    kernel.validate();
    settings.validate();
    if (xg.dim > vg.dim)
        throw std::invalid_argument("kinetic solver: spatial dim cannot exceed velocity dim");
    KineticSolver<S> s;
    s.xg = xg;
    s.vg = vg;
    s.ref = ref;
    s.force = force;
    s.kernel = kernel;
    s.settings = std::move(settings);
    s.fwdx = xg.dft_full();
    s.bwdx = xg.idft_full();
    s.kmat.resize(xg.size(), xg.dim);
    for (long m = 0; m < xg.size(); ++m) {
        auto mi = xg.unflatten(m);
        for (int a = 0; a < xg.dim; ++a) {
            int k = xg.wavenumber(mi[a]);
            if (2 * k == xg.n) k = 0;  // unmatched Nyquist mode
            s.kmat(m, a) = S(k);
        }
    }
    s.dxmats = spatial_derivative_matrices(xg);
    s.vminus.assign(vg.dim, std::vector<long>(vg.size(), -1));
    s.vplus.assign(vg.dim, std::vector<long>(vg.size(), -1));
    for (long i = 0; i < vg.size(); ++i) {
        auto m = vg.unflatten(i);
        for (int a = 0; a < vg.dim; ++a) {
            auto mm = m, mp = m;
            mm[a] -= 1;
            mp[a] += 1;
            if (vg.in_range(mm)) s.vminus[a][i] = vg.flatten(mm);
            if (vg.in_range(mp)) s.vplus[a][i] = vg.flatten(mp);
        }
    }
    return s;
}

// ---------------------------------------------------------------------------
// Initial-data catalog.

// Infinitesimal-Maxwellian perturbation [rho + u.v + theta (|v|^2 - d)/2] sqrt(mu).
template <class S>
Mat<S> infinitesimal_maxwellian(const Vec<S>& rho, const Mat<S>& u, const Vec<S>& theta,
                                const SpatialGrid<S>& xg, const VelocityGrid<S>& vg) {
    if (rho.size() != xg.size() || theta.size() != xg.size() || u.rows() != xg.size())
        throw std::invalid_argument("infinitesimal maxwellian: field sizes must match the grid");
    const int d = vg.dim;
    Vec<S> smu = global_maxwellian(vg).cwiseSqrt();
    Mat<S> f(vg.size(), xg.size());
    for (long j = 0; j < xg.size(); ++j) {
        for (long i = 0; i < vg.size(); ++i) {
            S uv = 0;
            for (int a = 0; a < int(u.cols()) && a < d; ++a) uv += u(j, a) * vg.nodes(i, a);
            f(i, j) = (rho[j] + uv + theta[j] * (vg.speed_sq[i] - S(d)) / S(2)) * smu[i];
        }
    }
    return f;
}

// Well-prepared family: divergence-free Taylor-Green velocity, zero-mean
// temperature profile, and rho = -theta (the Boussinesq-compatible choice).
template <class S>
Mat<S> well_prepared_taylor_green(const SpatialGrid<S>& xg, const VelocityGrid<S>& vg,
                                  S amp_u, S amp_theta) {
    Mat<S> u = taylor_green(xg, amp_u);
    Vec<S> theta(xg.size());
    for (long j = 0; j < xg.size(); ++j) {
        auto x = xg.node(j);
        theta[j] = amp_theta * std::cos(x[0]) * std::cos(x[1]);
    }
    Vec<S> rho = -theta;
    return infinitesimal_maxwellian(rho, u, theta, xg, vg);
}

// Global-equilibrium initialization: convert F = mu + eps sqrt(mu) f_mu into
// the reference-Maxwellian perturbation at time t, returning the converted
// field and the L^2_v norm of the additive background discrepancy
// (mu - M)/(eps sqrt(M)).
template <class S>
std::pair<Mat<S>, S> perturbation_from_global(const Mat<S>& f_mu, S t,
                                              const ReferenceParams<S>& p,
                                              const VelocityGrid<S>& vg) {
    Vec<S> mu = global_maxwellian(vg);
    Vec<S> M = reference_maxwellian(t, p, vg);
    Vec<S> sM = M.cwiseSqrt();
    Vec<S> ratio = (mu.cwiseQuotient(M)).cwiseSqrt();
    Vec<S> shift = (mu - M).cwiseQuotient(sM) / p.eps;
    Mat<S> f = (f_mu.array().colwise() * ratio.array()).matrix();
    f.colwise() += shift;
    return {std::move(f), std::sqrt(shift.squaredNorm() * vg.cell())};
}

}  // namespace boltzns
