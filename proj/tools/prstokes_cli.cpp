// Command-line driver: convergence studies, N-function inequality
// certification, inf-sup diagnostics, and mesh dumps.
//
// Exit codes: 0 success, 2 solver failure, 3 configuration error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "prstokes/prstokes.hpp"
#include "prstokes/report_json.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitSolver = 2;
constexpr int kExitConfig = 3;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Parses a key=value config file ('#' comments, blank lines allowed) and
/// rejects unknown keys.
std::map<std::string, std::string> parse_kv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto strip = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos) return std::string();
            const auto e = s.find_last_not_of(" \t\r");
            return s.substr(b, e - b + 1);
        };
        if (strip(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
        const std::string key = strip(line.substr(0, eq));
        const std::string val = strip(line.substr(eq + 1));
        if (key.empty() || val.empty())
            throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key or value");
        if (kv.count(key))
            throw ConfigError(path + ":" + std::to_string(lineno) + ": duplicate key " + key);
        kv[key] = val;
    }
    return kv;
}

double to_double(const std::map<std::string, std::string>& kv, const std::string& key,
                 double fallback) {
    const auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        std::size_t pos = 0;
        const double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': not a number: " + it->second);
    }
}

long to_long(const std::map<std::string, std::string>& kv, const std::string& key,
             long fallback) {
    const auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        std::size_t pos = 0;
        const long v = std::stol(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': not an integer: " + it->second);
    }
}

prstokes::ExperimentConfig build_config(const std::map<std::string, std::string>& kv) {
    static const std::set<std::string> known = {
        "method",        "r",         "epsilon",         "testcase",
        "max_level",     "tol_nonlinear", "tol_linear",  "quad_degree",
        "grading_levels", "out_dir",  "seed"};
    for (const auto& [key, val] : kv)
        if (!known.count(key)) throw ConfigError("unknown config key: " + key);

    prstokes::ExperimentConfig cfg;
    const long method = to_long(kv, "method", 1);
    if (method < 1 || method > 3) throw ConfigError("method must be 1, 2, or 3");
    cfg.method = static_cast<prstokes::MethodId>(method);
    cfg.r = to_double(kv, "r", 2.0);
    if (!(cfg.r > 1.0)) throw ConfigError("r must be > 1");
    cfg.model_epsilon = to_double(kv, "epsilon", 0.0);
    if (cfg.model_epsilon < 0.0) throw ConfigError("epsilon must be >= 0");
    const long tcase = to_long(kv, "testcase", 1);
    if (tcase != 1 && tcase != 2) throw ConfigError("testcase must be 1 or 2");
    cfg.testcase = static_cast<prstokes::TestCaseId>(tcase);
    const long level = to_long(kv, "max_level", 4);
    if (level < 0 || level > 12) throw ConfigError("max_level must be in [0, 12]");
    cfg.max_level = static_cast<int>(level);
    cfg.solver.tol_nonlinear = to_double(kv, "tol_nonlinear", cfg.solver.tol_nonlinear);
    if (!(cfg.solver.tol_nonlinear > 0.0)) throw ConfigError("tol_nonlinear must be > 0");
    cfg.solver.tol_linear = to_double(kv, "tol_linear", cfg.solver.tol_linear);
    if (!(cfg.solver.tol_linear > 0.0)) throw ConfigError("tol_linear must be > 0");
    const long deg = to_long(kv, "quad_degree", cfg.quad.rhs_degree);
    if (deg < 1 || deg > 10) throw ConfigError("quad_degree must be in [1, 10]");
    cfg.quad.rhs_degree = static_cast<int>(deg);
    const long grading = to_long(kv, "grading_levels", cfg.quad.grading_levels);
    if (grading < 0 || grading > 60) throw ConfigError("grading_levels must be in [0, 60]");
    cfg.quad.grading_levels = static_cast<int>(grading);
    if (const auto it = kv.find("out_dir"); it != kv.end()) cfg.out_dir = it->second;
    const long seed = to_long(kv, "seed", 1);
    if (seed < 0) throw ConfigError("seed must be >= 0");
    cfg.seed = static_cast<unsigned>(seed);
    return cfg;
}

int cmd_run(const std::string& config_path) {
    prstokes::ExperimentConfig cfg;
    try {
        cfg = build_config(parse_kv_file(config_path));
        std::filesystem::create_directories(cfg.out_dir);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
    try {
        const prstokes::EocTable table = prstokes::run_convergence(cfg);
        prstokes::emit_reports(table, cfg.out_dir);
        std::cout << prstokes::table_to_csv(table);
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return kExitSolver;
    }
}

int cmd_certify(double r, double epsilon, long n, unsigned long seed, double delta) {
    try {
        const prstokes::NFunctionRE nf(r, epsilon);
        const auto reports = prstokes::certify_inequalities(nf, delta, n, seed);
        std::cout << "family,r,epsilon,delta,n,min_ratio,max_ratio\n";
        std::cout.precision(17);
        for (const auto& rep : reports)
            std::cout << rep.family << "," << rep.r << "," << rep.epsilon << "," << rep.delta
                      << "," << rep.sample_count << "," << rep.min_ratio << "," << rep.max_ratio
                      << "\n";
        return kExitOk;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << "\n";
        return kExitSolver;
    }
}

int cmd_infsup(int level) {
    try {
        const prstokes::Mesh mesh = prstokes::square_mesh(0.0, 1.0, level);
        std::cout.precision(17);
        std::cout << prstokes::discrete_infsup_r2(mesh) << "\n";
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << "\n";
        return kExitSolver;
    }
}

int cmd_mesh_dump(int level) {
    try {
        const prstokes::Mesh mesh = prstokes::square_mesh(0.0, 1.0, level);
        mesh.dump(std::cout);
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << "\n";
        return kExitSolver;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Pressure-robust nonconforming discretizations of nonlinear Stokes systems"};
    app.require_subcommand(1);

    std::string config_path;
    auto* run = app.add_subcommand("run", "Run a convergence study from a config file");
    run->add_option("--config", config_path, "key=value config file")->required();

    double cr = 2.0, cepsilon = 0.0, cdelta = 0.5;
    long cn = 100000;
    unsigned long cseed = 1;
    auto* certify = app.add_subcommand("certify", "Sample the N-function inequality toolkit");
    certify->add_option("--r", cr, "exponent r > 1")->required();
    certify->add_option("--epsilon", cepsilon, "regularization epsilon >= 0")->required();
    certify->add_option("--n", cn, "sample count")->required();
    certify->add_option("--seed", cseed, "RNG seed")->required();
    certify->add_option("--delta", cdelta, "Young inequality parameter in (0,1]");

    int infsup_level = 0;
    auto* infsup = app.add_subcommand("infsup", "Discrete inf-sup constant (r = 2 diagnostic)");
    infsup->add_option("--level", infsup_level, "refinement level")->required();

    int dump_level = 0;
    auto* dump = app.add_subcommand("mesh-dump", "Print the refined mesh");
    dump->add_option("--level", dump_level, "refinement level")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    if (run->parsed()) return cmd_run(config_path);
    if (certify->parsed()) return cmd_certify(cr, cepsilon, cn, cseed, cdelta);
    if (infsup->parsed()) {
        if (infsup_level < 0 || infsup_level > 4) {
            std::cerr << "config error: infsup level must be in [0, 4]\n";
            return kExitConfig;
        }
        return cmd_infsup(infsup_level);
    }
    if (dump->parsed()) {
        if (dump_level < 0 || dump_level > 12) {
            std::cerr << "config error: mesh-dump level must be in [0, 12]\n";
            return kExitConfig;
        }
        return cmd_mesh_dump(dump_level);
    }
    return kExitConfig;
}
