#pragma once

#include <functional>
#include <ostream>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "prstokes/nfunction.hpp"
#include "prstokes/smoother.hpp"
#include "prstokes/spaces.hpp"

namespace prstokes {

/// Discretizations:
///   1 GradSmoothed:    A(grad_h u):grad_h v, load tested with smoothed fields
///   2 SymGradSmoothed: A(D E u):D E v, fully smoothed symmetric-gradient form
///   3 GradPlain:       A(grad_h u):grad_h v, load tested with broken fields
enum class MethodId { GradSmoothed = 1, SymGradSmoothed = 2, GradPlain = 3 };

inline bool method_uses_symgrad(MethodId m) { return m == MethodId::SymGradSmoothed; }
inline bool method_uses_smoothed_load(MethodId m) { return m != MethodId::GradPlain; }

struct QuadConfig {
    int assembly_degree = 6; // weighted stiffness on split children
    int rhs_degree = 8;      // load and error functionals
    int grading_levels = 12; // dyadic grading toward declared singular points
};

/// Manufactured solution: exact velocity gradient in closed form, pressure
/// possibly with a straight jump line, optional point singularity.
struct ManufacturedSolution {
    std::function<Vec2(const Vec2&)> u;
    std::function<Mat2(const Vec2&)> grad_u; // (grad u)_{cj} = d u_c / d x_j
    std::function<double(const Vec2&)> p;
    bool has_singularity = false;
    Vec2 singular_point{1e300, 1e300};
    bool p_has_jump = false;
    Vec2 jump_point, jump_normal;
};

namespace detail {

/// Quadrature pieces of a triangle: optional exact split along the pressure
/// jump line followed by grading toward the singular point.
template <class Fn>
void integrate_triangle(const Vec2& a, const Vec2& b, const Vec2& c,
                        const ManufacturedSolution& ms, int degree, int grading, Fn&& accumulate) {
    std::vector<std::array<Vec2, 3>> pieces{{a, b, c}};
    if (ms.p_has_jump) pieces = split_triangle_by_line(a, b, c, ms.jump_point, ms.jump_normal);
    for (const auto& t : pieces) {
        const ElementQuadrature eq =
            ms.has_singularity
                ? graded_rule(t[0], t[1], t[2], ms.singular_point, degree, grading)
                : element_quadrature(t[0], t[1], t[2], triangle_rule(degree));
        for (std::size_t q = 0; q < eq.points.size(); ++q)
            accumulate(eq.points[q], eq.weights[q]);
    }
}

/// Quadrature over the segment [a,b]: exact split at the pressure jump line
/// and dyadic grading toward an endpoint coinciding with the singular point.
/// Weights carry the segment length.
template <class Fn>
void integrate_face(const Vec2& a, const Vec2& b, const ManufacturedSolution& ms, int degree,
                    int grading, Fn&& accumulate) {
    const QuadratureRule rule = edge_rule(degree);
    Vec2 p = a, q = b;
    const double len = (b - a).norm();
    bool graded = false;
    if (ms.has_singularity) {
        if ((b - ms.singular_point).norm() <= 1e-12 * len) std::swap(p, q);
        graded = (p - ms.singular_point).norm() <= 1e-12 * len;
    }
    std::vector<double> cuts{0.0, 1.0};
    if (ms.p_has_jump) {
        const double sa = (p - ms.jump_point).dot(ms.jump_normal);
        const double sb = (q - ms.jump_point).dot(ms.jump_normal);
        if (sa * sb < 0.0) cuts.insert(cuts.begin() + 1, sa / (sa - sb));
    }
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double lo0 = cuts[i], hi0 = cuts[i + 1];
        const int levels = (graded && i == 0) ? grading : 0;
        double hi = hi0;
        for (int j = 0; j <= levels; ++j) {
            const double lo = (j == levels) ? lo0 : lo0 + 0.5 * (hi - lo0);
            for (std::size_t iq = 0; iq < rule.size(); ++iq) {
                const double t = lo + (hi - lo) * rule.points[iq][1];
                accumulate(p + (q - p) * t, len * (hi - lo) * rule.weights[iq]);
            }
            hi = lo;
        }
    }
}

} // namespace detail

/// B[K, dof] = int_K q_K div_h v (q_K the element indicator); exact.
inline Eigen::SparseMatrix<double> assemble_constraint(const Mesh& mesh) {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(6 * static_cast<std::size_t>(mesh.num_elements()));
    for (int k = 0; k < mesh.num_elements(); ++k) {
        const auto g = cr_basis_gradients(mesh, k);
        const double ak = mesh.area(k);
        for (int j = 0; j < 3; ++j) {
            const int f = mesh.element_faces[k][j];
            trip.emplace_back(k, cr_dof(f, 0), ak * g[j].x);
            trip.emplace_back(k, cr_dof(f, 1), ak * g[j].y);
        }
    }
    Eigen::SparseMatrix<double> B(mesh.num_elements(), 2 * mesh.num_faces());
    B.setFromTriplets(trip.begin(), trip.end());
    B.makeCompressed();
    return B;
}

/// Methods 1/3: A[u,v] = sum_K a_K int_K grad_h u : grad_h v (exact; broken
/// gradients are element constants). Componentwise block structure.
inline Eigen::SparseMatrix<double> assemble_stiffness_broken(const Mesh& mesh,
                                                             const std::vector<double>& a_elem) {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(18 * static_cast<std::size_t>(mesh.num_elements()));
    for (int k = 0; k < mesh.num_elements(); ++k) {
        const auto g = cr_basis_gradients(mesh, k);
        const double w = a_elem[k] * mesh.area(k);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                const double v = w * g[i].dot(g[j]);
                for (int c = 0; c < 2; ++c)
                    trip.emplace_back(cr_dof(mesh.element_faces[k][i], c),
                                      cr_dof(mesh.element_faces[k][j], c), v);
            }
    }
    Eigen::SparseMatrix<double> A(2 * mesh.num_faces(), 2 * mesh.num_faces());
    A.setFromTriplets(trip.begin(), trip.end());
    A.makeCompressed();
    return A;
}

/// Method 2: A = S^T G S with G[i,j] = int a(x) D N_i : D N_j over the
/// smoothed composite basis, quadrature per barycentric-split child.
inline Eigen::SparseMatrix<double>
assemble_stiffness_smoothed(const Smoother& op, const std::function<double(int, const Vec2&)>& a,
                            int degree) {
    const Mesh& mesh = *op.mesh;
    const QuadratureRule rule = triangle_rule(degree);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(400 * static_cast<std::size_t>(mesh.num_elements()));
    for (int k = 0; k < mesh.num_elements(); ++k) {
        const auto dofs = smoothed_local_dofs(op, k);
        Eigen::Matrix<double, 20, 20> local = Eigen::Matrix<double, 20, 20>::Zero();
        const Vec2 z = mesh.centroid(k);
        for (int ci = 0; ci < 3; ++ci) {
            const Vec2 pa = mesh.vertex(k, (ci + 1) % 3);
            const Vec2 pb = mesh.vertex(k, (ci + 2) % 3);
            const ElementQuadrature eq = element_quadrature(pa, pb, z, rule);
            for (std::size_t q = 0; q < eq.points.size(); ++q) {
                const auto sh = smoothed_scalar_shapes(mesh, k, eq.points[q]);
                const double w = eq.weights[q] * a(k, eq.points[q]);
                // D of (N_s e_c): sym part of e_c (x) grad N_s
                Mat2 D[20];
                for (int s = 0; s < 10; ++s)
                    for (int c = 0; c < 2; ++c) {
                        Mat2 m;
                        m(c, 0) = sh.grad[s].x;
                        m(c, 1) = sh.grad[s].y;
                        D[2 * s + c] = m.sym();
                    }
                for (int i = 0; i < 20; ++i)
                    for (int j = 0; j <= i; ++j) local(i, j) += w * D[i].frobenius(D[j]);
            }
        }
        for (int i = 0; i < 20; ++i)
            for (int j = 0; j < 20; ++j) {
                const double v = (j <= i) ? local(i, j) : local(j, i);
                if (v != 0.0) trip.emplace_back(dofs[i], dofs[j], v);
            }
    }
    Eigen::SparseMatrix<double> G(op.num_smoothed_dofs(), op.num_smoothed_dofs());
    G.setFromTriplets(trip.begin(), trip.end());
    return Eigen::SparseMatrix<double>(op.S.transpose() * G * op.S);
}

/// Load functional. Methods 1-2 test with conforming zero-trace fields
/// w_i = E_0 phi_i, so the weak form F_i = sum_K int_K [A(Du_ex):Dw_i -
/// p_ex div w_i] represents the force exactly. Method 3 tests with the
/// discontinuous phi_i themselves; there the force acts in its strong form,
/// realized without differentiating the data via elementwise integration by
/// parts: F_i = sum_K { int_K sigma : grad w_i - oint_{dK} (sigma n_K) . w_i }
/// with the stress sigma = A(grad u_ex) - p_ex I. The boundary terms do not
/// cancel across interior faces (w_i jumps), and the identity absorbs the
/// line contribution of a pressure jump crossing element interiors.
inline Eigen::VectorXd assemble_rhs(MethodId method, const Mesh& mesh, const NFunctionRE& nf,
                                    const ManufacturedSolution& ms, const Smoother* zero_trace_op,
                                    const QuadConfig& qc) {
    const bool symgrad = method_uses_symgrad(method);
    if (method_uses_smoothed_load(method)) {
        const Smoother& op = *zero_trace_op;
        Eigen::VectorXd ell = Eigen::VectorXd::Zero(op.num_smoothed_dofs());
        for (int k = 0; k < mesh.num_elements(); ++k) {
            const auto dofs = smoothed_local_dofs(op, k);
            const Vec2 z = mesh.centroid(k);
            for (int ci = 0; ci < 3; ++ci) {
                const Vec2 pa = mesh.vertex(k, (ci + 1) % 3);
                const Vec2 pb = mesh.vertex(k, (ci + 2) % 3);
                detail::integrate_triangle(
                    pa, pb, z, ms, qc.rhs_degree, qc.grading_levels,
                    [&](const Vec2& x, double w) {
                        Mat2 G = ms.grad_u(x);
                        if (symgrad) G = G.sym();
                        const Mat2 A = A_of(nf, G);
                        const double p = ms.p(x);
                        const auto sh = smoothed_scalar_shapes(mesh, k, x);
                        for (int s = 0; s < 10; ++s)
                            for (int c = 0; c < 2; ++c) {
                                // A : sym(e_c (x) grad N) = row c of A . grad N
                                const double av =
                                    A(c, 0) * sh.grad[s].x + A(c, 1) * sh.grad[s].y;
                                const double dv = (c == 0) ? sh.grad[s].x : sh.grad[s].y;
                                ell[dofs[2 * s + c]] += w * (av - p * dv);
                            }
                    });
            }
        }
        return op.S.transpose() * ell;
    }
    // broken test functions
    Eigen::VectorXd F = Eigen::VectorXd::Zero(2 * mesh.num_faces());
    for (int k = 0; k < mesh.num_elements(); ++k) {
        const auto g = cr_basis_gradients(mesh, k);
        detail::integrate_triangle(mesh.vertex(k, 0), mesh.vertex(k, 1), mesh.vertex(k, 2), ms,
                                   qc.rhs_degree, qc.grading_levels, [&](const Vec2& x, double w) {
                                       Mat2 G = ms.grad_u(x);
                                       if (symgrad) G = G.sym();
                                       const Mat2 A = A_of(nf, G);
                                       const double p = ms.p(x);
                                       for (int j = 0; j < 3; ++j)
                                           for (int c = 0; c < 2; ++c) {
                                               const double av = A(c, 0) * g[j].x + A(c, 1) * g[j].y;
                                               const double dv = (c == 0) ? g[j].x : g[j].y;
                                               F[cr_dof(mesh.element_faces[k][j], c)] +=
                                                   w * (av - p * dv);
                                           }
                                   });
        for (int a = 0; a < 3; ++a) {
            const int fi = mesh.element_faces[k][a];
            const Face& f = mesh.faces[fi];
            const Vec2 pa = mesh.vertices[f.a], pb = mesh.vertices[f.b];
            const Vec2 n = f.normal * ((f.elem[0] == k) ? 1.0 : -1.0);
            detail::integrate_face(
                pa, pb, ms, qc.rhs_degree, qc.grading_levels, [&](const Vec2& x, double w) {
                    Mat2 G = ms.grad_u(x);
                    if (symgrad) G = G.sym();
                    const Mat2 A = A_of(nf, G);
                    const double p = ms.p(x);
                    const Vec2 tr{A(0, 0) * n.x + A(0, 1) * n.y - p * n.x,
                                  A(1, 0) * n.x + A(1, 1) * n.y - p * n.y};
                    const auto lam = mesh.barycentric(k, x);
                    for (int j = 0; j < 3; ++j) {
                        const double phi = 1.0 - 2.0 * lam[j];
                        F[cr_dof(mesh.element_faces[k][j], 0)] -= w * tr.x * phi;
                        F[cr_dof(mesh.element_faces[k][j], 1)] -= w * tr.y * phi;
                    }
                });
        }
    }
    return F;
}

/// Action of the nonlinear operator on the test functions: Methods 1/3 exact
/// (element-constant integrand), Method 2 by quadrature with the full-trace
/// smoother on both sides.
inline Eigen::VectorXd nonlinear_operator(MethodId method, const Mesh& mesh, const NFunctionRE& nf,
                                          const CRFunction& u, const Smoother* full_op,
                                          int degree) {
    if (method != MethodId::SymGradSmoothed) {
        Eigen::VectorXd r = Eigen::VectorXd::Zero(2 * mesh.num_faces());
        for (int k = 0; k < mesh.num_elements(); ++k) {
            const auto g = cr_basis_gradients(mesh, k);
            const Mat2 A = A_of(nf, u.gradient(k));
            const double ak = mesh.area(k);
            for (int j = 0; j < 3; ++j)
                for (int c = 0; c < 2; ++c)
                    r[cr_dof(mesh.element_faces[k][j], c)] +=
                        ak * (A(c, 0) * g[j].x + A(c, 1) * g[j].y);
        }
        return r;
    }
    const Smoother& op = *full_op;
    const SmoothedField eu = apply_smoother(op, u);
    const QuadratureRule rule = triangle_rule(degree);
    Eigen::VectorXd ell = Eigen::VectorXd::Zero(op.num_smoothed_dofs());
    for (int k = 0; k < mesh.num_elements(); ++k) {
        const auto dofs = smoothed_local_dofs(op, k);
        const Vec2 z = mesh.centroid(k);
        for (int ci = 0; ci < 3; ++ci) {
            const Vec2 pa = mesh.vertex(k, (ci + 1) % 3);
            const Vec2 pb = mesh.vertex(k, (ci + 2) % 3);
            const ElementQuadrature eq = element_quadrature(pa, pb, z, rule);
            for (std::size_t q = 0; q < eq.points.size(); ++q) {
                const Mat2 A = A_of(nf, eu.gradient(k, eq.points[q]).sym());
                const auto sh = smoothed_scalar_shapes(mesh, k, eq.points[q]);
                for (int s = 0; s < 10; ++s)
                    for (int c = 0; c < 2; ++c)
                        ell[dofs[2 * s + c]] += eq.weights[q] * (A(c, 0) * sh.grad[s].x +
                                                                 A(c, 1) * sh.grad[s].y);
            }
        }
    }
    return op.S.transpose() * ell;
}

/// Saddle system on the interior (non-boundary) velocity dofs after
/// symmetric elimination of Dirichlet dofs:
///   [A  B^T] [u]   [f]
///   [B  0  ] [q] = [g],   q = -p (pressure sign flip for symmetry).
struct ReducedSaddle {
    Eigen::SparseMatrix<double> A; // n_int x n_int
    Eigen::SparseMatrix<double> B; // n_elem x n_int (positive divergence)
    Eigen::VectorXd f;
    Eigen::VectorXd g;
    std::vector<int> interior;      // reduced index -> full vector dof
    std::vector<int> full2reduced;  // full vector dof -> reduced index or -1
    Eigen::VectorXd u_boundary;     // full-size, boundary dofs set, zero elsewhere

    Eigen::VectorXd expand(const Eigen::VectorXd& u_red) const {
        Eigen::VectorXd u = u_boundary;
        for (std::size_t i = 0; i < interior.size(); ++i) u[interior[i]] += u_red[i];
        return u;
    }
};

/// Face means of the boundary data (the natural CR trace interpolation).
template <class F>
Eigen::VectorXd dirichlet_face_means(const Mesh& mesh, F&& g_data, const Vec2& singular_point,
                                     int degree = 8, int grading_levels = 12) {
    Eigen::VectorXd u = Eigen::VectorXd::Zero(2 * mesh.num_faces());
    for (int f = 0; f < mesh.num_faces(); ++f) {
        if (!mesh.faces[f].boundary) continue;
        const Vec2 a = mesh.vertices[mesh.faces[f].a];
        const Vec2 b = mesh.vertices[mesh.faces[f].b];
        u[cr_dof(f, 0)] = detail::edge_mean([&](const Vec2& x) { return g_data(x).x; }, a, b,
                                            degree, singular_point, grading_levels);
        u[cr_dof(f, 1)] = detail::edge_mean([&](const Vec2& x) { return g_data(x).y; }, a, b,
                                            degree, singular_point, grading_levels);
    }
    return u;
}

inline ReducedSaddle apply_dirichlet(const Mesh& mesh, const Eigen::SparseMatrix<double>& A_full,
                                     const Eigen::SparseMatrix<double>& B_full,
                                     const Eigen::VectorXd& f_full,
                                     const Eigen::VectorXd& u_boundary) {
    ReducedSaddle sys;
    sys.u_boundary = u_boundary;
    sys.full2reduced.assign(2 * mesh.num_faces(), -1);
    for (int f = 0; f < mesh.num_faces(); ++f) {
        if (mesh.faces[f].boundary) continue;
        for (int c = 0; c < 2; ++c) {
            sys.full2reduced[cr_dof(f, c)] = static_cast<int>(sys.interior.size());
            sys.interior.push_back(cr_dof(f, c));
        }
    }
    const int n = static_cast<int>(sys.interior.size());

    const Eigen::VectorXd lift_A = A_full * u_boundary;
    sys.f.resize(n);
    for (int i = 0; i < n; ++i) sys.f[i] = f_full[sys.interior[i]] - lift_A[sys.interior[i]];
    sys.g = -(B_full * u_boundary);

    std::vector<Eigen::Triplet<double>> ta, tb;
    for (int col = 0; col < A_full.outerSize(); ++col) {
        const int jc = sys.full2reduced[col];
        if (jc < 0) continue;
        for (Eigen::SparseMatrix<double>::InnerIterator it(A_full, col); it; ++it) {
            const int ir = sys.full2reduced[static_cast<int>(it.row())];
            if (ir >= 0) ta.emplace_back(ir, jc, it.value());
        }
    }
    for (int col = 0; col < B_full.outerSize(); ++col) {
        const int jc = sys.full2reduced[col];
        if (jc < 0) continue;
        for (Eigen::SparseMatrix<double>::InnerIterator it(B_full, col); it; ++it)
            tb.emplace_back(static_cast<int>(it.row()), jc, it.value());
    }
    sys.A.resize(n, n);
    sys.A.setFromTriplets(ta.begin(), ta.end());
    sys.B.resize(B_full.rows(), n);
    sys.B.setFromTriplets(tb.begin(), tb.end());
    sys.A.makeCompressed();
    sys.B.makeCompressed();
    return sys;
}

/// Coordinate text export (row col value per line) for debugging.
inline void export_coordinate(const Eigen::SparseMatrix<double>& M, std::ostream& os) {
    for (int col = 0; col < M.outerSize(); ++col)
        for (Eigen::SparseMatrix<double>::InnerIterator it(M, col); it; ++it)
            os << it.row() << " " << it.col() << " " << it.value() << "\n";
}

} // namespace prstokes
