#pragma once

#include <fstream>

#include <json.hpp>

#include "prstokes/experiments.hpp"

namespace prstokes {

inline nlohmann::json table_to_json(const EocTable& table) {
    nlohmann::json j;
    const ExperimentConfig& c = table.config;
    j["config"] = {{"method", static_cast<int>(c.method)},
                   {"r", c.r},
                   {"epsilon", c.model_epsilon},
                   {"testcase", static_cast<int>(c.testcase)},
                   {"max_level", c.max_level},
                   {"tol_nonlinear", c.solver.tol_nonlinear},
                   {"tol_linear", c.solver.tol_linear},
                   {"max_outer", c.solver.max_outer},
                   {"max_inner", c.solver.max_inner},
                   {"theta", c.solver.theta},
                   {"widen_factor", c.solver.widen_factor},
                   {"eps_minus", c.solver.eps_minus},
                   {"eps_plus", c.solver.eps_plus},
                   {"gap_tol_factor", c.solver.gap_tol_factor},
                   {"use_direct", c.solver.use_direct},
                   {"start_from_zero", c.solver.start_from_zero},
                   {"assembly_degree", c.quad.assembly_degree},
                   {"rhs_degree", c.quad.rhs_degree},
                   {"grading_levels", c.quad.grading_levels},
                   {"out_dir", c.out_dir},
                   {"seed", c.seed}};
    j["rows"] = nlohmann::json::array();
    for (const auto& r : table.rows) {
        nlohmann::json row = {{"level", r.level},
                              {"dofs", r.errors.dofs},
                              {"h_max", r.errors.h_max},
                              {"err_F_broken", r.errors.err_F_broken},
                              {"err_F_smoothed", r.errors.err_F_smoothed},
                              {"err_p", r.errors.err_p},
                              {"jump_J", r.errors.jump_J},
                              {"outer_iters", r.outer_iterations},
                              {"inner_iters_total", r.inner_iterations_total},
                              {"wall_time", r.wall_time}};
        if (!std::isnan(r.eoc_broken)) {
            row["eoc_broken"] = r.eoc_broken;
            row["eoc_smoothed"] = r.eoc_smoothed;
            row["eoc_p"] = r.eoc_p;
        }
        nlohmann::json log = nlohmann::json::array();
        for (const auto& e : r.solver_log)
            log.push_back({{"iter", e.iter},
                           {"eps_minus", e.eps_minus},
                           {"eps_plus", e.eps_plus},
                           {"energy", e.energy},
                           {"increment", e.increment},
                           {"gap", e.gap},
                           {"step", e.step},
                           {"inner_iterations", e.inner_iterations}});
        row["solver_log"] = log;
        j["rows"].push_back(row);
    }
    return j;
}

inline void emit_reports(const EocTable& table, const std::string& dir) {
    emit_csv(table, dir + "/results.csv");
    std::ofstream out(dir + "/results.json");
    if (!out) throw std::runtime_error("cannot open " + dir + "/results.json");
    out << table_to_json(table).dump(2) << "\n";
}

} // namespace prstokes
