#pragma once

// Experiment orchestration: plain-text run configuration, single kinetic and
// fluid runs with on-disk artifacts, the epsilon-sweep comparing kinetic
// moments against the incompressible Navier-Stokes-Fourier reference, the
// operator check suite, and report/plot-data emission.
//
// Everything here is concrete double precision: this layer is I/O plumbing
// around the templated numerical core.

#include <boltzns/kinetic.hpp>

#include <json.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace boltzns::harness {

// ---------------------------------------------------------------------------
// Run configuration, parsed from an INI-style file:
//   [section]
//   key = value            # comment
// Error messages name the offending "section.key".

struct RunConfig {
    // [grids]
    int d_x = 2, n_x = 8;
    int d_v = 2, n_v = 16;
    double r_v = 8.0;
    int n_sigma = 8;

    // [kernel]
    double gamma = 1.0;
    double c_phi = 1.0;

    // [reference]  epsilon is required; a list means an epsilon-sweep.
    std::vector<double> epsilon;
    double e_exp = 0.5;
    double lambda = 1.0;
    double t_final = 1.0;
    std::string constants = "auto";  // "auto": select_constants; "zero": a = A = 0
    double a = 0.0, A = 0.0;         // used when constants = "manual"

    // [force]
    std::string force_name = "zero";  // catalog entry, or "file"
    double c_e = 0.3;
    double alpha = 2.0;       // decay exponent for the "decaying" catalog entry
    std::string force_file;   // tabulated force (CSV) when force_name = "file"

    // [initial]
    std::string initial = "equilibrium";  // "equilibrium", "taylor-green", "file"
    double amp_u = 0.05, amp_theta = 0.03;
    std::string initial_file;  // snapshot container when initial = "file"
    // "reference": data is the perturbation around M(t); "global": data is the
    // perturbation around the global equilibrium, mapped into the reference
    // frame at load time (the mapping discrepancy is reported).
    std::string initial_frame = "reference";

    // [integrator]
    double dt = 0.0;       // 0: automatic
    long n_out = 8;        // snapshot cadence in steps
    long n_reuse = 16;     // collision-matrix reuse cadence
    double inner_tol = 1e-10;
    bool upwind = false;

    // [diagnostics]
    int s = 2;
    double p = 4.0, q = 1.0, r = 1.0, eta = 0.1;

    // [output]
    std::string directory = "out";

    void validate() const;                    // throws std::invalid_argument
    ReferenceParams<double> reference(double eps) const;  // resolved (a, A)
};

RunConfig load_config(const std::string& path);
void save_config(const RunConfig& cfg, const std::string& path);
bool operator==(const RunConfig& x, const RunConfig& y);

// ---------------------------------------------------------------------------
// Snapshot container: self-describing binary field dump.
//
// Byte layout (little-endian, fixed offsets):
//   0   8   magic "BLTZSNP1"
//   8   4   int32   mode: 0 kinetic perturbation, 1 kinetic full, 2 fluid
//   12  4   int32   d_x
//   16  4   int32   n_x (points per spatial axis)
//   20  4   int32   d_v (0 for fluid snapshots)
//   24  4   int32   n_v (points per velocity axis; 0 for fluid)
//   28  8   float64 r_v (velocity box half-width; 0 for fluid)
//   36  8   float64 time
//   44  8   float64 eps
//   52  8   int64   rows
//   60  8   int64   cols
//   68  -   float64 payload, row-major rows x cols
// Kinetic payload: n_v^d_v x n_x^d_x field. Fluid payload: n_x^d_x x (d_x + 2)
// columns [u_0 .. u_{d-1}, theta, rho].

struct SnapshotHeader {
    int mode = 0;
    int d_x = 0, n_x = 0, d_v = 0, n_v = 0;
    double r_v = 0, time = 0, eps = 0;
};

void write_snapshot(const std::string& path, const SnapshotHeader& h, const Mat<double>& field);
Mat<double> read_snapshot(const std::string& path, SnapshotHeader& h);

// ---------------------------------------------------------------------------
// Single runs. Both write into cfg.directory:
//   config.ini    echo of the configuration
//   norms.csv     per-step norm report (kinetic only)
//   moments.csv   per-step hydrodynamic moment norms (shared column prefix)
//   snap_NNNN.bin field snapshots every n_out steps
//   summary.json  run metadata and outcome
// Return value: 0 on success, 2 when the integration aborted.

int run_kinetic(const RunConfig& cfg);
int run_fluid(const RunConfig& cfg);

// ---------------------------------------------------------------------------
// Epsilon-sweep: one fluid reference, one kinetic run per epsilon (strictly
// decreasing list), L^2-in-(t,x) errors of the moment triple against the
// fluid limit, Boussinesq and incompressibility residuals, empirical orders.

struct SweepRow {
    double eps = 0;
    double err_rho = 0, err_u = 0, err_theta = 0;
    double boussinesq = 0;      // ||rho_eps + theta_eps sqrt(2/d)||_{L^2(t,x)}
    double incompressibility = 0;  // ||div u_eps||_{L^2(t,x)}
    double order_u = 0, order_theta = 0;  // vs the previous row; 0 on first
    double initial_discrepancy = 0;       // global-frame mapping residual
    bool ok = false;
    std::string note;  // abort reason when !ok
};

struct ConvergenceTable {
    std::vector<SweepRow> rows;
    double fluid_viscosity = 0, fluid_conductivity = 0;
};

ConvergenceTable eps_sweep(const RunConfig& cfg);
void write_sweep_csv(const std::string& path, const ConvergenceTable& table);

// ---------------------------------------------------------------------------
// Operator checks: kernel dimension, self-adjointness, spectral gap, collision
// invariants, collision-frequency growth fit, equilibrium defect, and the
// reference-vs-global scaling relation. Every entry carries pass/value/bound.

nlohmann::json check_operators(const RunConfig& cfg);

// ---------------------------------------------------------------------------
// Plot emission: every *.csv in run_dir becomes a gnuplot-ready *.dat
// (space-separated columns, '#'-prefixed header). Returns the file count.

int export_plots(const std::string& run_dir);

}  // namespace boltzns::harness
