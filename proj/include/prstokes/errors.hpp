#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "prstokes/assembly.hpp"
#include "prstokes/smoother.hpp"

namespace prstokes {

struct ErrorBundle {
    double err_F_broken = 0.0;   // ||F(Du) - F(D_h u_h)||_2
    double err_F_smoothed = 0.0; // ||F(Du) - F(D E u_h)||_2
    double err_p = 0.0;          // ||p - p_h||_{r'}
    double jump_J = 0.0;
    int dofs = 0;
    double h_max = 0.0;
};

/// Natural-distance error against the broken (element-constant) gradient.
inline double f_distance_error_broken(const NFunctionRE& nf, const ManufacturedSolution& ms,
                                      const CRFunction& u, bool symgrad, const QuadConfig& qc) {
    const Mesh& mesh = *u.mesh;
    double s = 0.0;
    for (int k = 0; k < mesh.num_elements(); ++k) {
        Mat2 gh = u.gradient(k);
        if (symgrad) gh = gh.sym();
        const Mat2 fh = F_of(nf, gh);
        detail::integrate_triangle(mesh.vertex(k, 0), mesh.vertex(k, 1), mesh.vertex(k, 2), ms,
                                   qc.rhs_degree, qc.grading_levels, [&](const Vec2& x, double w) {
                                       Mat2 g = ms.grad_u(x);
                                       if (symgrad) g = g.sym();
                                       const Mat2 d = F_of(nf, g) - fh;
                                       s += w * d.frobenius(d);
                                   });
    }
    return std::sqrt(s);
}

/// Natural-distance error against the gradient of the smoothed field
/// (piecewise P1 on the barycentric-split children).
inline double f_distance_error_smoothed(const NFunctionRE& nf, const ManufacturedSolution& ms,
                                        const SmoothedField& eu, bool symgrad,
                                        const QuadConfig& qc) {
    const Mesh& mesh = *eu.op->mesh;
    double s = 0.0;
    for (int k = 0; k < mesh.num_elements(); ++k) {
        const Vec2 z = mesh.centroid(k);
        for (int ci = 0; ci < 3; ++ci) {
            detail::integrate_triangle(
                mesh.vertex(k, (ci + 1) % 3), mesh.vertex(k, (ci + 2) % 3), z, ms, qc.rhs_degree,
                qc.grading_levels, [&](const Vec2& x, double w) {
                    Mat2 g = ms.grad_u(x);
                    Mat2 gh = eu.gradient(k, x);
                    if (symgrad) {
                        g = g.sym();
                        gh = gh.sym();
                    }
                    const Mat2 d = F_of(nf, g) - F_of(nf, gh);
                    s += w * d.frobenius(d);
                });
        }
    }
    return std::sqrt(s);
}

/// L^{r'} pressure error; elements cut by the declared jump line are split
/// exactly along it.
inline double pressure_error(double r_prime, const ManufacturedSolution& ms, const P0Function& p,
                             const QuadConfig& qc) {
    const Mesh& mesh = *p.mesh;
    double s = 0.0;
    for (int k = 0; k < mesh.num_elements(); ++k) {
        const double ph = p.vals[k];
        detail::integrate_triangle(mesh.vertex(k, 0), mesh.vertex(k, 1), mesh.vertex(k, 2), ms,
                                   qc.rhs_degree, qc.grading_levels, [&](const Vec2& x, double w) {
                                       s += w * std::pow(std::abs(ms.p(x) - ph), r_prime);
                                   });
    }
    return std::pow(s, 1.0 / r_prime);
}

/// Jump functional: sum over elements and their faces of
/// int_F h phi_{|D_h v|_K|}(|jump| / h), h the face length.
inline double jump_functional(const NFunctionRE& nf, const CRFunction& v) {
    const Mesh& mesh = *v.mesh;
    const QuadratureRule erule = edge_rule(8);
    double total = 0.0;
    for (int k = 0; k < mesh.num_elements(); ++k) {
        const double shift = v.gradient(k).sym().norm();
        for (int j = 0; j < 3; ++j) {
            const Face& f = mesh.faces[mesh.element_faces[k][j]];
            const Vec2 pa = mesh.vertices[f.a], pb = mesh.vertices[f.b];
            const double h = f.length;
            for (std::size_t q = 0; q < erule.size(); ++q) {
                const Vec2 x = pa + (pb - pa) * erule.points[q][1];
                const Vec2 jump = f.boundary ? v.value(f.elem[0], x)
                                             : v.value(f.elem[0], x) - v.value(f.elem[1], x);
                total += erule.weights[q] * h * h * shifted_value(nf, shift, jump.norm() / h);
            }
        }
    }
    return total;
}

/// Sum over elements of the squared L2(patch) distance of F(Du_ex) to its
/// patch mean (the constant infimizer); the benchmark for quasi-optimality.
inline double local_best_error_oracle(const NFunctionRE& nf, const ManufacturedSolution& ms,
                                      const Mesh& mesh, bool symgrad, const QuadConfig& qc) {
    const int n = mesh.num_elements();
    std::vector<Mat2> intF(n);
    std::vector<double> intF2(n, 0.0);
    for (int k = 0; k < n; ++k) {
        detail::integrate_triangle(mesh.vertex(k, 0), mesh.vertex(k, 1), mesh.vertex(k, 2), ms,
                                   qc.rhs_degree, qc.grading_levels, [&](const Vec2& x, double w) {
                                       Mat2 g = ms.grad_u(x);
                                       if (symgrad) g = g.sym();
                                       const Mat2 f = F_of(nf, g);
                                       intF[k] += w * f;
                                       intF2[k] += w * f.frobenius(f);
                                   });
    }
    const NeighborhoodStats nbh = neighborhoods(mesh);
    double total = 0.0;
    for (int k = 0; k < n; ++k) {
        Mat2 sumF;
        double sumF2 = 0.0, area = 0.0;
        for (int kk : nbh.patches[k].neighbors) {
            sumF += intF[kk];
            sumF2 += intF2[kk];
            area += mesh.area(kk);
        }
        const Mat2 mean = sumF * (1.0 / area);
        total += sumF2 - 2.0 * mean.frobenius(sumF) + area * mean.frobenius(mean);
    }
    return total;
}

/// Experimental order of convergence between consecutive levels (h halves).
inline double eoc(double e_prev, double e_curr) {
    if (!(e_prev > 0.0) || !(e_curr > 0.0))
        throw std::invalid_argument("eoc: errors must be positive");
    return std::log2(e_prev / e_curr);
}

/// Discrete inf-sup constant of the CR/P0 pair in the r=2 (Hilbert) norms:
/// smallest nonzero generalized singular value of the constraint against the
/// broken H1 velocity norm and the L2 pressure norm, on the zero-mean
/// complement. Dense; refuses large meshes.
inline double discrete_infsup_r2(const Mesh& mesh) {
    if (mesh.num_elements() > 2048)
        throw std::runtime_error("discrete_infsup_r2: mesh too large for the dense diagnostic");
    const std::vector<double> ones(mesh.num_elements(), 1.0);
    const Eigen::SparseMatrix<double> A_full = assemble_stiffness_broken(mesh, ones);
    const Eigen::SparseMatrix<double> B_full = assemble_constraint(mesh);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(2 * mesh.num_faces());
    const ReducedSaddle sys = apply_dirichlet(mesh, A_full, B_full, zero, zero);

    const Eigen::MatrixXd A = Eigen::MatrixXd(sys.A);
    const Eigen::MatrixXd B = Eigen::MatrixXd(sys.B);
    const Eigen::MatrixXd S = B * A.ldlt().solve(B.transpose());
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(mesh.num_elements(), mesh.num_elements());
    for (int k = 0; k < mesh.num_elements(); ++k) M(k, k) = mesh.area(k);

    const Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(S, M);
    const Eigen::VectorXd ev = es.eigenvalues();
    // the constant pressure contributes one (numerically) zero eigenvalue
    for (int i = 0; i < ev.size(); ++i)
        if (ev[i] > 1e-10) return std::sqrt(ev[i]);
    throw std::runtime_error("discrete_infsup_r2: no positive eigenvalue found");
}

} // namespace prstokes
