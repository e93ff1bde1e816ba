// Plain-text configuration: INI-style parser, schema validation with key-path
// error messages, canonical serialization (load(save(cfg)) == cfg).

#include <boltzns/harness.hpp>

#include <fstream>
#include <map>
#include <sstream>

namespace boltzns::harness {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

// Raw "section.key" -> value map with consumption tracking.
struct KeyMap {
    std::map<std::string, std::string> values;
    std::map<std::string, bool> used;

    std::optional<std::string> take(const std::string& key) {
        auto it = values.find(key);
        if (it == values.end()) return std::nullopt;
        used[key] = true;
        return it->second;
    }
    void check_all_used() const {
        for (const auto& [k, v] : values)
            if (!used.count(k)) throw std::invalid_argument("unknown config key: " + k);
    }
};

KeyMap parse_ini(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file: " + path);
    KeyMap m;
    std::string line, section;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto cut = line.find_first_of("#;");
        if (cut != std::string::npos) line = line.substr(0, cut);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                            ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                            ": empty section name");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                        ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key.empty())
            throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": empty key");
        if (section.empty())
            throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                        ": key outside any [section]");
        const std::string full = section + "." + key;
        if (!m.values.emplace(full, val).second)
            throw std::invalid_argument("duplicate config key: " + full);
    }
    return m;
}

double to_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (...) {
        throw std::invalid_argument(key + ": expected a number, got \"" + v + "\"");
    }
}

long to_long(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        long x = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (...) {
        throw std::invalid_argument(key + ": expected an integer, got \"" + v + "\"");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::invalid_argument(key + ": expected true/false, got \"" + v + "\"");
}

std::vector<double> to_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    std::string spaced = v;
    for (char& c : spaced)
        if (c == ',') c = ' ';
    std::istringstream ss(spaced);
    std::string tok;
    while (ss >> tok) out.push_back(to_double(key, tok));
    if (out.empty()) throw std::invalid_argument(key + ": expected at least one number");
    return out;
}

}  // namespace

void RunConfig::validate() const {
    auto need = [](bool ok, const std::string& msg) {
        if (!ok) throw std::invalid_argument(msg);
    };
    need(d_x >= 1 && d_x <= 3, "grids.d_x must be 1, 2 or 3");
    need(d_v >= d_x && d_v <= 3, "grids.d_v must be in [d_x, 3]");
    need(n_x >= 2, "grids.n_x must be >= 2");
    need(n_v >= 6, "grids.n_v must be >= 6");
    need(r_v > 0, "grids.r_v must be > 0");
    need(n_sigma >= 2, "grids.n_sigma must be >= 2");
    need(gamma >= 0 && gamma <= 1, "kernel.gamma must be in [0, 1]");
    need(c_phi > 0, "kernel.c_phi must be > 0");
    need(!epsilon.empty(), "missing required key reference.epsilon");
    for (double e : epsilon)
        need(e > 0 && e <= 1, "reference.epsilon entries must be in (0, 1]");
    for (size_t k = 1; k < epsilon.size(); ++k)
        need(epsilon[k] < epsilon[k - 1], "reference.epsilon must be strictly decreasing");
    need(e_exp > 0 && e_exp < 1, "reference.e must be in (0, 1)");
    need(lambda > 0, "reference.lambda must be > 0");
    need(t_final > 0, "reference.t_final must be > 0");
    need(constants == "auto" || constants == "zero" || constants == "manual",
         "reference.constants must be auto, zero or manual");
    if (constants == "manual") need(a >= 0 && A >= 0, "reference.a and reference.A must be >= 0");
    need(force_name == "zero" || force_name == "steady-shear" || force_name == "rotating" ||
             force_name == "decaying" || force_name == "file",
         "force.name: unknown catalog entry \"" + force_name + "\"");
    need(c_e >= 0, "force.c_e must be >= 0");
    if (force_name == "file") need(!force_file.empty(), "force.file is required for force.name = file");
    need(initial == "equilibrium" || initial == "taylor-green" || initial == "file",
         "initial.data must be equilibrium, taylor-green or file");
    if (initial == "file") need(!initial_file.empty(), "initial.file is required for initial.data = file");
    need(initial_frame == "reference" || initial_frame == "global",
         "initial.frame must be reference or global");
    need(dt >= 0, "integrator.dt must be >= 0");
    need(n_out >= 1, "integrator.n_out must be >= 1");
    need(n_reuse >= 1, "integrator.n_reuse must be >= 1");
    need(inner_tol > 0, "integrator.inner_tol must be > 0");
    need(s >= 0 && s <= 2, "diagnostics.s must be 0, 1 or 2");
    need(p > 0 && q > 0, "diagnostics.p and diagnostics.q must be > 0");
    need(r * r <= p * q, "diagnostics.r^2 must be <= diagnostics.p * diagnostics.q");
    need(q <= p, "diagnostics.q must be <= diagnostics.p");
    need(eta > 0, "diagnostics.eta must be > 0");
    need(!directory.empty(), "output.directory must not be empty");
}

ReferenceParams<double> RunConfig::reference(double eps) const {
    ReferenceParams<double> ref;
    ref.eps = eps;
    ref.e_exp = e_exp;
    ref.Lambda = lambda;
    ref.T0 = t_final;
    if (constants == "auto") {
        auto [ca, cA] = select_constants(t_final, force_name == "zero" ? 0.0 : c_e, lambda);
        ref.a = ca;
        ref.A = cA;
    } else if (constants == "manual") {
        ref.a = a;
        ref.A = A;
    }  // "zero": keep a = A = 0
    return ref;
}

RunConfig load_config(const std::string& path) {
    KeyMap m = parse_ini(path);
    RunConfig c;
    auto dbl = [&](const std::string& k, double& out) {
        if (auto v = m.take(k)) out = to_double(k, *v);
    };
    auto num = [&](const std::string& k, long& out) {
        if (auto v = m.take(k)) out = to_long(k, *v);
    };
    auto inum = [&](const std::string& k, int& out) {
        if (auto v = m.take(k)) out = int(to_long(k, *v));
    };
    auto str = [&](const std::string& k, std::string& out) {
        if (auto v = m.take(k)) out = *v;
    };
    auto flag = [&](const std::string& k, bool& out) {
        if (auto v = m.take(k)) out = to_bool(k, *v);
    };

    inum("grids.d_x", c.d_x);
    inum("grids.n_x", c.n_x);
    inum("grids.d_v", c.d_v);
    inum("grids.n_v", c.n_v);
    dbl("grids.r_v", c.r_v);
    inum("grids.n_sigma", c.n_sigma);
    dbl("kernel.gamma", c.gamma);
    dbl("kernel.c_phi", c.c_phi);
    if (auto v = m.take("reference.epsilon")) c.epsilon = to_list("reference.epsilon", *v);
    dbl("reference.e", c.e_exp);
    dbl("reference.lambda", c.lambda);
    dbl("reference.t_final", c.t_final);
    str("reference.constants", c.constants);
    dbl("reference.a", c.a);
    dbl("reference.A", c.A);
    str("force.name", c.force_name);
    dbl("force.c_e", c.c_e);
    dbl("force.alpha", c.alpha);
    str("force.file", c.force_file);
    str("initial.data", c.initial);
    dbl("initial.amp_u", c.amp_u);
    dbl("initial.amp_theta", c.amp_theta);
    str("initial.file", c.initial_file);
    str("initial.frame", c.initial_frame);
    dbl("integrator.dt", c.dt);
    num("integrator.n_out", c.n_out);
    num("integrator.n_reuse", c.n_reuse);
    dbl("integrator.inner_tol", c.inner_tol);
    flag("integrator.upwind", c.upwind);
    inum("diagnostics.s", c.s);
    dbl("diagnostics.p", c.p);
    dbl("diagnostics.q", c.q);
    dbl("diagnostics.r", c.r);
    dbl("diagnostics.eta", c.eta);
    str("output.directory", c.directory);

    m.check_all_used();
    c.validate();
    return c;
}

void save_config(const RunConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write config file: " + path);
    out.precision(17);
    out << "[grids]\n"
        << "d_x = " << cfg.d_x << "\nn_x = " << cfg.n_x << "\nd_v = " << cfg.d_v
        << "\nn_v = " << cfg.n_v << "\nr_v = " << cfg.r_v << "\nn_sigma = " << cfg.n_sigma
        << "\n\n[kernel]\ngamma = " << cfg.gamma << "\nc_phi = " << cfg.c_phi
        << "\n\n[reference]\nepsilon =";
    for (double e : cfg.epsilon) out << ' ' << e;
    out << "\ne = " << cfg.e_exp << "\nlambda = " << cfg.lambda
        << "\nt_final = " << cfg.t_final << "\nconstants = " << cfg.constants
        << "\na = " << cfg.a << "\nA = " << cfg.A << "\n\n[force]\nname = " << cfg.force_name
        << "\nc_e = " << cfg.c_e << "\nalpha = " << cfg.alpha;
    if (!cfg.force_file.empty()) out << "\nfile = " << cfg.force_file;
    out << "\n\n[initial]\ndata = " << cfg.initial << "\namp_u = " << cfg.amp_u
        << "\namp_theta = " << cfg.amp_theta;
    if (!cfg.initial_file.empty()) out << "\nfile = " << cfg.initial_file;
    out << "\nframe = " << cfg.initial_frame << "\n\n[integrator]\ndt = " << cfg.dt
        << "\nn_out = " << cfg.n_out << "\nn_reuse = " << cfg.n_reuse
        << "\ninner_tol = " << cfg.inner_tol << "\nupwind = " << (cfg.upwind ? "true" : "false")
        << "\n\n[diagnostics]\ns = " << cfg.s << "\np = " << cfg.p << "\nq = " << cfg.q
        << "\nr = " << cfg.r << "\neta = " << cfg.eta
        << "\n\n[output]\ndirectory = " << cfg.directory << "\n";
    if (!out) throw std::runtime_error("failed while writing config file: " + path);
}

bool operator==(const RunConfig& x, const RunConfig& y) {
    return x.d_x == y.d_x && x.n_x == y.n_x && x.d_v == y.d_v && x.n_v == y.n_v &&
           x.r_v == y.r_v && x.n_sigma == y.n_sigma && x.gamma == y.gamma &&
           x.c_phi == y.c_phi && x.epsilon == y.epsilon && x.e_exp == y.e_exp &&
           x.lambda == y.lambda && x.t_final == y.t_final && x.constants == y.constants &&
           x.a == y.a && x.A == y.A && x.force_name == y.force_name && x.c_e == y.c_e &&
           x.alpha == y.alpha && x.force_file == y.force_file && x.initial == y.initial &&
           x.amp_u == y.amp_u && x.amp_theta == y.amp_theta &&
           x.initial_file == y.initial_file && x.initial_frame == y.initial_frame &&
           x.dt == y.dt && x.n_out == y.n_out && x.n_reuse == y.n_reuse &&
           x.inner_tol == y.inner_tol && x.upwind == y.upwind && x.s == y.s && x.p == y.p &&
           x.q == y.q && x.r == y.r && x.eta == y.eta && x.directory == y.directory;
}

}  // namespace boltzns::harness
