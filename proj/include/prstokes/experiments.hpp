#pragma once

#include <chrono>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "prstokes/errors.hpp"
#include "prstokes/solver.hpp"

namespace prstokes {

enum class TestCaseId { PowerFunctions = 1, JumpingPressure = 2 };

/// Manufactured solutions on a square: rotational power-law velocity
/// u = |x|^alpha (x2, -x1) (exactly divergence-free), with either a power-law
/// pressure (case 1) or a piecewise-constant pressure jumping across a
/// vertical line (case 2). The exact Jacobian is closed-form.
struct TestCase {
    TestCaseId id;
    double lo = 0.0, hi = 1.0; // domain (lo,hi)^2
    double alpha = 0.0, gamma = 0.0, eta = 0.0;
    ManufacturedSolution ms;
};

namespace detail {

inline Vec2 power_velocity(double alpha, const Vec2& x) {
    const double r = x.norm();
    if (r == 0.0) return {};
    const double s = std::pow(r, alpha);
    return {s * x.y, -s * x.x};
}

inline Mat2 power_velocity_jacobian(double alpha, const Vec2& x) {
    const double r = x.norm();
    if (r == 0.0) return Mat2::zero();
    const double ra = std::pow(r, alpha);
    const double c = alpha * std::pow(r, alpha - 2.0);
    return {c * x.x * x.y, c * x.y * x.y + ra, // du1/dx1, du1/dx2
            -c * x.x * x.x - ra, -c * x.x * x.y};
}

/// Mean of |x|^gamma over (-1,1)^2 by graded quadrature on a coarse mesh.
inline double power_pressure_mean(double gamma) {
    const Mesh mesh = square_mesh(-1.0, 1.0, 1);
    double s = 0.0;
    for (int k = 0; k < mesh.num_elements(); ++k) {
        const ElementQuadrature eq = graded_rule(mesh.vertex(k, 0), mesh.vertex(k, 1),
                                                 mesh.vertex(k, 2), Vec2{0.0, 0.0}, 10, 40);
        for (std::size_t q = 0; q < eq.points.size(); ++q)
            s += eq.weights[q] * std::pow(eq.points[q].norm(), gamma);
    }
    return s / 4.0;
}

} // namespace detail

inline TestCase make_testcase(TestCaseId id, double r) {
    TestCase tc;
    tc.id = id;
    if (id == TestCaseId::PowerFunctions) {
        tc.lo = -1.0;
        tc.hi = 1.0;
        tc.alpha = 0.01;
        tc.gamma = 2.0 / r - 1.0 + 0.01;
        tc.eta = (r < 2.0) ? 0.01 : 1.0;
        const double alpha = tc.alpha, gamma = tc.gamma, eta = tc.eta;
        const double mean = detail::power_pressure_mean(gamma);
        tc.ms.u = [alpha](const Vec2& x) { return detail::power_velocity(alpha, x); };
        tc.ms.grad_u = [alpha](const Vec2& x) { return detail::power_velocity_jacobian(alpha, x); };
        // gauge: compare against the zero-mean representative
        tc.ms.p = [eta, gamma, mean](const Vec2& x) {
            return eta * (std::pow(x.norm(), gamma) - mean);
        };
        tc.ms.has_singularity = true;
        tc.ms.singular_point = {0.0, 0.0};
    } else {
        tc.lo = 0.0;
        tc.hi = 1.0;
        tc.alpha = 0.5;
        const double alpha = tc.alpha;
        tc.ms.u = [alpha](const Vec2& x) { return detail::power_velocity(alpha, x); };
        tc.ms.grad_u = [alpha](const Vec2& x) { return detail::power_velocity_jacobian(alpha, x); };
        tc.ms.p = [](const Vec2& x) { return x.x < 2.0 / 3.0 ? -1.5 : 3.0; };
        tc.ms.has_singularity = true;
        tc.ms.singular_point = {0.0, 0.0};
        tc.ms.p_has_jump = true;
        tc.ms.jump_point = {2.0 / 3.0, 0.0};
        tc.ms.jump_normal = {1.0, 0.0};
    }
    return tc;
}

struct ExperimentConfig {
    MethodId method = MethodId::GradSmoothed;
    double r = 2.0;
    double model_epsilon = 0.0;
    TestCaseId testcase = TestCaseId::PowerFunctions;
    int max_level = 4;
    SolverConfig solver;
    QuadConfig quad;
    std::string out_dir = ".";
    unsigned seed = 1;
};

struct LevelRecord {
    int level = 0;
    ErrorBundle errors;
    double eoc_broken = std::numeric_limits<double>::quiet_NaN();
    double eoc_smoothed = std::numeric_limits<double>::quiet_NaN();
    double eoc_p = std::numeric_limits<double>::quiet_NaN();
    int outer_iterations = 0;
    int inner_iterations_total = 0;
    double wall_time = 0.0;
    std::vector<OuterLogEntry> solver_log;
};

struct EocTable {
    ExperimentConfig config;
    std::vector<LevelRecord> rows;
};

/// Levels 0..max_level on the criss-cross square family; each level applies
/// two bisection sweeps (h halves). Solver failures abort the sweep but the
/// completed rows remain in the table (and are rethrown by the CLI).
inline EocTable run_convergence(const ExperimentConfig& cfg) {
    EocTable table;
    table.config = cfg;
    const TestCase tc = make_testcase(cfg.testcase, cfg.r);
    const NFunctionRE nf(cfg.r, cfg.model_epsilon);
    const bool symgrad = method_uses_symgrad(cfg.method);
    SolverConfig solver = cfg.solver;

    for (int level = 0; level <= cfg.max_level; ++level) {
        const auto t0 = std::chrono::steady_clock::now();
        const Mesh mesh = square_mesh(tc.lo, tc.hi, level);
        const Smoother e0 = build_smoother(mesh, true);
        const Smoother ef = build_smoother(mesh, false);

        DiscreteProblem pb;
        pb.method = cfg.method;
        pb.mesh = &mesh;
        pb.nf = &nf;
        pb.ms = &tc.ms;
        pb.zero_trace = &e0;
        pb.full_trace = &ef;
        pb.quad = cfg.quad;

        const KacanovResult kr = relaxed_kacanov(pb, solver);
        // the converged relaxation interval transfers well across mesh levels;
        // starting the next level there skips most of the widening cascade
        if (!kr.log.empty()) {
            solver.eps_minus = kr.log.back().eps_minus;
            solver.eps_plus = kr.log.back().eps_plus;
        }
        CRFunction u(mesh);
        u.dofs = kr.u;
        P0Function p(mesh);
        p.vals = kr.p;

        LevelRecord rec;
        rec.level = level;
        rec.errors.dofs = 2 * mesh.num_faces();
        rec.errors.h_max = mesh.h_max();
        rec.errors.err_F_broken = f_distance_error_broken(nf, tc.ms, u, symgrad, cfg.quad);
        rec.errors.err_F_smoothed =
            f_distance_error_smoothed(nf, tc.ms, apply_smoother(ef, u), symgrad, cfg.quad);
        rec.errors.err_p = pressure_error(cfg.r / (cfg.r - 1.0), tc.ms, p, cfg.quad);
        rec.errors.jump_J = jump_functional(nf, u);
        rec.outer_iterations = static_cast<int>(kr.log.size());
        rec.inner_iterations_total = kr.total_inner;
        rec.solver_log = kr.log;
        if (!table.rows.empty()) {
            const ErrorBundle& prev = table.rows.back().errors;
            rec.eoc_broken = eoc(prev.err_F_broken, rec.errors.err_F_broken);
            rec.eoc_smoothed = eoc(prev.err_F_smoothed, rec.errors.err_F_smoothed);
            rec.eoc_p = eoc(prev.err_p, rec.errors.err_p);
        }
        rec.wall_time =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        table.rows.push_back(rec);
    }
    return table;
}

namespace detail {

inline std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

} // namespace detail

inline std::string table_to_csv(const EocTable& table) {
    std::ostringstream os;
    os << "level,dofs,h_max,err_F_broken,eoc_broken,err_F_smoothed,eoc_smoothed,"
          "err_p,eoc_p,outer_iters,inner_iters_total,wall_time\n";
    for (const auto& r : table.rows) {
        os << r.level << "," << r.errors.dofs << "," << detail::fmt(r.errors.h_max) << ","
           << detail::fmt(r.errors.err_F_broken) << ","
           << (std::isnan(r.eoc_broken) ? "" : detail::fmt(r.eoc_broken)) << ","
           << detail::fmt(r.errors.err_F_smoothed) << ","
           << (std::isnan(r.eoc_smoothed) ? "" : detail::fmt(r.eoc_smoothed)) << ","
           << detail::fmt(r.errors.err_p) << ","
           << (std::isnan(r.eoc_p) ? "" : detail::fmt(r.eoc_p)) << "," << r.outer_iterations
           << "," << r.inner_iterations_total << "," << detail::fmt(r.wall_time) << "\n";
    }
    return os.str();
}

inline void emit_csv(const EocTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << table_to_csv(table);
}

} // namespace prstokes
