// On-disk artifacts: the binary snapshot container, CSV tables, and the
// gnuplot-ready plot-data emission. All writers go through a temporary file
// and rename on success so interrupted runs leave no partial artifacts.

#include <boltzns/harness.hpp>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace boltzns::harness {

namespace {

constexpr char kMagic[8] = {'B', 'L', 'T', 'Z', 'S', 'N', 'P', '1'};

void commit(const std::filesystem::path& tmp, const std::filesystem::path& final_path) {
    std::error_code ec;
    std::filesystem::rename(tmp, final_path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw std::runtime_error("cannot move " + tmp.string() + " to " + final_path.string());
    }
}

template <class T>
void put(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& in, const std::string& path) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("truncated snapshot file: " + path);
    return v;
}

}  // namespace

void write_snapshot(const std::string& path, const SnapshotHeader& h, const Mat<double>& field) {
    const std::filesystem::path tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open snapshot for writing: " + path);
        out.write(kMagic, sizeof(kMagic));
        put(out, std::int32_t(h.mode));
        put(out, std::int32_t(h.d_x));
        put(out, std::int32_t(h.n_x));
        put(out, std::int32_t(h.d_v));
        put(out, std::int32_t(h.n_v));
        put(out, h.r_v);
        put(out, h.time);
        put(out, h.eps);
        put(out, std::int64_t(field.rows()));
        put(out, std::int64_t(field.cols()));
        for (long i = 0; i < field.rows(); ++i)
            for (long j = 0; j < field.cols(); ++j) put(out, field(i, j));
        if (!out) {
            std::filesystem::remove(tmp);
            throw std::runtime_error("failed while writing snapshot: " + path);
        }
    }
    commit(tmp, path);
}

Mat<double> read_snapshot(const std::string& path, SnapshotHeader& h) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open snapshot: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("not a snapshot container: " + path);
    h.mode = get<std::int32_t>(in, path);
    h.d_x = get<std::int32_t>(in, path);
    h.n_x = get<std::int32_t>(in, path);
    h.d_v = get<std::int32_t>(in, path);
    h.n_v = get<std::int32_t>(in, path);
    h.r_v = get<double>(in, path);
    h.time = get<double>(in, path);
    h.eps = get<double>(in, path);
    const auto rows = get<std::int64_t>(in, path);
    const auto cols = get<std::int64_t>(in, path);
    if (rows <= 0 || cols <= 0 || rows * cols > (std::int64_t(1) << 32))
        throw std::runtime_error("implausible snapshot shape in " + path);
    Mat<double> field(rows, cols);
    for (long i = 0; i < rows; ++i)
        for (long j = 0; j < cols; ++j) field(i, j) = get<double>(in, path);
    return field;
}

void write_sweep_csv(const std::string& path, const ConvergenceTable& table) {
    const std::filesystem::path tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot open sweep csv for writing: " + path);
        out.precision(17);
        out << "eps,err_rho,err_u,err_theta,boussinesq,incompressibility,"
               "order_u,order_theta,initial_discrepancy,status\n";
        for (const auto& r : table.rows)
            out << r.eps << ',' << r.err_rho << ',' << r.err_u << ',' << r.err_theta << ','
                << r.boussinesq << ',' << r.incompressibility << ',' << r.order_u << ','
                << r.order_theta << ',' << r.initial_discrepancy << ','
                << (r.ok ? "ok" : "failed") << '\n';
        if (!out) {
            std::filesystem::remove(tmp);
            throw std::runtime_error("failed while writing sweep csv: " + path);
        }
    }
    commit(tmp, path);
}

int export_plots(const std::string& run_dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(run_dir))
        throw std::invalid_argument("not a run directory: " + run_dir);
    int count = 0;
    std::vector<fs::path> csvs;
    for (const auto& entry : fs::directory_iterator(run_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".csv")
            csvs.push_back(entry.path());
    std::sort(csvs.begin(), csvs.end());
    for (const auto& csv : csvs) {
        std::ifstream in(csv);
        if (!in) throw std::runtime_error("cannot read " + csv.string());
        fs::path dat = csv;
        dat.replace_extension(".dat");
        const fs::path tmp = dat.string() + ".tmp";
        {
            std::ofstream out(tmp);
            std::string line;
            bool first = true;
            while (std::getline(in, line)) {
                for (char& ch : line)
                    if (ch == ',') ch = ' ';
                out << (first ? "# " : "") << line << '\n';
                first = false;
            }
            if (!out) {
                fs::remove(tmp);
                throw std::runtime_error("failed while writing " + dat.string());
            }
        }
        commit(tmp, dat);
        ++count;
    }
    if (count == 0) throw std::invalid_argument("no CSV tables found in " + run_dir);
    return count;
}

}  // namespace boltzns::harness
