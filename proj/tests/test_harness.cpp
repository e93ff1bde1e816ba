#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <boltzns/harness.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace boltzns;
using namespace boltzns::harness;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("boltzns_test_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str(const std::string& leaf = "") const {
        return leaf.empty() ? path.string() : (path / leaf).string();
    }
};

RunConfig tiny_config(const std::string& dir) {
    RunConfig cfg;
    cfg.n_x = 4;
    cfg.n_v = 8;
    cfg.r_v = 4.0;
    cfg.n_sigma = 4;
    cfg.epsilon = {0.5};
    cfg.t_final = 0.05;
    cfg.dt = 0.0125;
    cfg.n_out = 2;
    cfg.constants = "zero";
    cfg.initial = "taylor-green";
    cfg.directory = dir;
    return cfg;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(bool(in));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& body) {
    std::ofstream out(path);
    out << body;
}

}  // namespace

// [TRIVIAL] Saving a configuration and loading it back reproduces every field.
TEST_CASE("config round-trip") {
    TempDir td("config_rt");
    RunConfig cfg = tiny_config(td.str("out"));
    cfg.epsilon = {0.5, 0.25, 0.125};
    cfg.force_name = "steady-shear";
    cfg.c_e = 0.17;
    cfg.constants = "manual";
    cfg.a = 0.3;
    cfg.A = 1.2;
    cfg.initial_frame = "global";
    cfg.upwind = true;
    cfg.n_reuse = 5;
    cfg.eta = 0.07;
    save_config(cfg, td.str("cfg.ini"));
    RunConfig back = load_config(td.str("cfg.ini"));
    CHECK(back == cfg);
}

// [TRIVIAL] Validation errors name the offending section.key.
TEST_CASE("config error messages") {
    TempDir td("config_err");

    write_file(td.str("missing.ini"), "[grids]\nn_x = 4\n");
    try {
        load_config(td.str("missing.ini"));
        FAIL("expected an exception");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("reference.epsilon") != std::string::npos);
    }

    write_file(td.str("unknown.ini"), "[reference]\nepsilon = 0.5\nbogus_key = 1\n");
    try {
        load_config(td.str("unknown.ini"));
        FAIL("expected an exception");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("bogus_key") != std::string::npos);
    }

    write_file(td.str("increasing.ini"), "[reference]\nepsilon = 0.25, 0.5\n");
    CHECK_THROWS_AS(load_config(td.str("increasing.ini")), std::invalid_argument);

    // Lists accept both comma and whitespace separators.
    write_file(td.str("commas.ini"), "[reference]\nepsilon = 0.5,0.25, 0.125\n");
    RunConfig commas = load_config(td.str("commas.ini"));
    CHECK(commas.epsilon == std::vector<double>{0.5, 0.25, 0.125});
}

// [TRIVIAL] Snapshot container round-trip preserves header and payload.
TEST_CASE("snapshot round-trip") {
    TempDir td("snap_rt");
    Mat<double> field(6, 4);
    for (long i = 0; i < 6; ++i)
        for (long j = 0; j < 4; ++j) field(i, j) = std::sin(1.0 + i) * std::cos(2.0 + j);
    SnapshotHeader h{0, 2, 2, 2, 0, 4.5, 0.75, 0.25};
    write_snapshot(td.str("s.bin"), h, field);
    SnapshotHeader g;
    Mat<double> back = read_snapshot(td.str("s.bin"), g);
    CHECK(back.rows() == field.rows());
    CHECK((back - field).cwiseAbs().maxCoeff() == 0.0);
    CHECK(g.mode == h.mode);
    CHECK(g.d_x == h.d_x);
    CHECK(g.r_v == h.r_v);
    CHECK(g.time == h.time);
    CHECK(g.eps == h.eps);

    write_file(td.str("junk.bin"), "this is not a snapshot container at all");
    SnapshotHeader dummy;
    CHECK_THROWS(read_snapshot(td.str("junk.bin"), dummy));
}

// [DERIVED] A small kinetic run writes every artifact and is bit-for-bit
// deterministic across repeated runs.
TEST_CASE("kinetic run artifacts and determinism") {
    TempDir td("run_det");
    RunConfig cfg = tiny_config(td.str("run_a"));
    CHECK(run_kinetic(cfg) == 0);
    for (const char* leaf :
         {"config.ini", "norms.csv", "conserved.csv", "moments.csv", "summary.json",
          "snap_0000.bin"})
        CHECK_MESSAGE(fs::exists(fs::path(cfg.directory) / leaf), leaf);

    RunConfig cfg2 = cfg;
    cfg2.directory = td.str("run_b");
    CHECK(run_kinetic(cfg2) == 0);
    for (const char* leaf : {"norms.csv", "moments.csv", "snap_0000.bin", "snap_0002.bin"})
        CHECK_MESSAGE(slurp(td.str("run_a/") + leaf) == slurp(td.str("run_b/") + leaf), leaf);

    // Loading the echoed config reproduces the original.
    CHECK(load_config(td.str("run_a/config.ini")) == cfg);
}

// [TRIVIAL] CSV headers are pinned column orders.
TEST_CASE("csv headers") {
    TempDir td("csv_hdr");
    RunConfig cfg = tiny_config(td.str("run"));
    REQUIRE(run_kinetic(cfg) == 0);
    auto first_line = [](const std::string& body) { return body.substr(0, body.find('\n')); };
    CHECK(first_line(slurp(td.str("run/moments.csv"))) ==
          "time,rho_l2,u_l2,theta_l2,divu_l2,boussinesq_l2");
    CHECK(first_line(slurp(td.str("run/norms.csv"))) ==
          "time,l2,h1_eps,h2_eps,twisted,fluid,kinetic,mass");

    ConvergenceTable t;
    t.rows.push_back(SweepRow{});
    write_sweep_csv(td.str("sweep.csv"), t);
    CHECK(first_line(slurp(td.str("sweep.csv"))) ==
          "eps,err_rho,err_u,err_theta,boussinesq,incompressibility,"
          "order_u,order_theta,initial_discrepancy,status");
}

// [DERIVED] The fluid runner writes matching artifacts and its snapshots decay
// (viscous Taylor-Green with no forcing loses kinetic energy).
TEST_CASE("fluid run artifacts") {
    TempDir td("fluid_run");
    RunConfig cfg = tiny_config(td.str("run"));
    cfg.n_x = 8;
    cfg.t_final = 0.2;
    cfg.dt = 0.01;
    CHECK(run_fluid(cfg) == 0);
    SnapshotHeader h0, h1;
    Mat<double> p0 = read_snapshot(td.str("run/snap_0000.bin"), h0);
    std::string last;
    for (const auto& e : fs::directory_iterator(td.str("run")))
        if (e.path().filename().string().rfind("snap_", 0) == 0)
            last = std::max(last, e.path().string());
    Mat<double> p1 = read_snapshot(last, h1);
    CHECK(h0.mode == 2);
    CHECK(p0.cols() == cfg.d_x + 2);
    CHECK(p1.leftCols(2).squaredNorm() < p0.leftCols(2).squaredNorm());
    // Boussinesq closure in the payload: rho column is -theta.
    CHECK((p1.col(2) + p1.col(3)).cwiseAbs().maxCoeff() == 0.0);
}

// [DERIVED] With no force and equilibrium data, every sweep error is at the
// roundoff floor for each epsilon.
TEST_CASE("zero-data sweep is exact") {
    TempDir td("sweep_zero");
    RunConfig cfg = tiny_config(td.str("run"));
    cfg.initial = "equilibrium";
    cfg.epsilon = {0.5, 0.25};
    cfg.t_final = 0.04;
    cfg.dt = 0.01;
    cfg.n_out = 2;
    ConvergenceTable t = eps_sweep(cfg);
    REQUIRE(t.rows.size() == 2);
    for (const auto& r : t.rows) {
        CHECK(r.ok);
        CHECK(r.err_u < 1e-12);
        CHECK(r.err_theta < 1e-12);
        CHECK(r.boussinesq < 1e-12);
        CHECK(r.incompressibility < 1e-12);
    }
    CHECK(t.fluid_viscosity > 0);
    CHECK(t.fluid_conductivity > 0);
    CHECK(fs::exists(td.str("run/sweep.csv")));
}

// [DERIVED] Operator checks pass at a modest resolution and the kernel
// dimension check fails when the velocity grid cannot resolve the
// conserved-moment space.
TEST_CASE("operator check suite") {
    RunConfig cfg;
    cfg.n_x = 4;
    cfg.n_v = 16;
    cfg.r_v = 6.0;
    cfg.n_sigma = 8;
    cfg.epsilon = {0.5};
    auto j = check_operators(cfg);
    for (const auto& c : j["checks"]) {
        const std::string label =
            c["name"].get<std::string>() + ": " + std::to_string(c["value"].get<double>());
        CHECK_MESSAGE(c["pass"].get<bool>(), label);
    }
    CHECK(j["pass"].get<bool>());
    CHECK(j["kernel_count"].get<int>() == 4);
    CHECK(j["eigenvalues"].size() == 16 * 16);

    RunConfig coarse = cfg;
    coarse.n_v = 6;
    auto jc = check_operators(coarse);
    bool kernel_ok = true;
    for (const auto& c : jc["checks"])
        if (c["name"] == "kernel_dimension") kernel_ok = c["pass"].get<bool>();
    CHECK_FALSE(kernel_ok);
    CHECK_FALSE(jc["pass"].get<bool>());
}

// [DERIVED] Maxwell-molecule collision frequency is constant in velocity.
TEST_CASE("gamma zero gives constant collision frequency") {
    RunConfig cfg;
    cfg.n_x = 4;
    cfg.n_v = 12;
    cfg.r_v = 5.0;
    cfg.n_sigma = 8;
    cfg.gamma = 0.0;
    cfg.epsilon = {0.5};
    auto j = check_operators(cfg);
    for (const auto& c : j["checks"])
        if (c["name"] == "nu_profile") {
            CHECK(c["pass"].get<bool>());
            // constant up to the excluded self-interaction node
            CHECK(c["value"].get<double>() < c["bound"].get<double>());
        }
}

// [TRIVIAL] Plot export converts every CSV to a gnuplot-ready .dat file.
TEST_CASE("export plots") {
    TempDir td("plots");
    write_file(td.str("a.csv"), "time,l2\n0,1.5\n0.1,1.25\n");
    CHECK(export_plots(td.str()) == 1);
    CHECK(slurp(td.str("a.dat")) == "# time l2\n0 1.5\n0.1 1.25\n");
    CHECK_THROWS_AS(export_plots(td.str("nonexistent")), std::invalid_argument);
}

// [DERIVED] A tabulated force file that samples a catalog force (constant in
// time) produces a run identical to the catalog force itself.
TEST_CASE("force file loader") {
    TempDir td("force_file");
    auto xg = build_spatial_grid<double>(2, 4);
    auto shear = builtin_forces<double>("steady-shear", 2, 0.2);
    std::ostringstream body;
    body.precision(17);
    for (double t : {0.0, 1.0}) {
        Mat<double> E = shear.sample(t, xg);
        // row: t, then per-node per-axis values (node-major, axis-minor)
        body << t;
        for (long m = 0; m < xg.size(); ++m)
            for (int a = 0; a < 2; ++a) body << ',' << E(m, a);
        body << '\n';
    }
    write_file(td.str("force.csv"), body.str());

    RunConfig cat = tiny_config(td.str("run_catalog"));
    cat.force_name = "steady-shear";
    cat.c_e = 0.2;
    REQUIRE(run_kinetic(cat) == 0);

    RunConfig tab = tiny_config(td.str("run_file"));
    tab.force_name = "file";
    tab.force_file = td.str("force.csv");
    REQUIRE(run_kinetic(tab) == 0);

    CHECK(slurp(td.str("run_catalog/norms.csv")) == slurp(td.str("run_file/norms.csv")));
    CHECK(slurp(td.str("run_catalog/conserved.csv")) == slurp(td.str("run_file/conserved.csv")));
}
