#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "prstokes/mesh.hpp"
#include "prstokes/quadrature.hpp"

namespace prstokes {

/// Crouzeix-Raviart velocity space: 2 dofs per face (face means of the two
/// components, dof = 2*face + comp). Scalar basis on an element, indexed by
/// the local face opposite vertex i: phi_i = 1 - 2*lambda_i.
/// P0 pressure space: 1 dof per element.

inline int cr_dof(int face, int comp) { return 2 * face + comp; }

/// Values of the three local CR basis functions at barycentric point l.
inline std::array<double, 3> cr_basis_values(const std::array<double, 3>& l) {
    return {1.0 - 2.0 * l[0], 1.0 - 2.0 * l[1], 1.0 - 2.0 * l[2]};
}

/// Constant gradients of the three local CR basis functions on element k.
inline std::array<Vec2, 3> cr_basis_gradients(const Mesh& mesh, int k) {
    const auto g = mesh.barycentric_gradients(k);
    return {g[0] * -2.0, g[1] * -2.0, g[2] * -2.0};
}

/// Piecewise-linear nonconforming vector field given by CR face-mean dofs.
struct CRFunction {
    const Mesh* mesh = nullptr;
    Eigen::VectorXd dofs; // size 2 * num_faces

    explicit CRFunction(const Mesh& m) : mesh(&m), dofs(Eigen::VectorXd::Zero(2 * m.num_faces())) {}

    Vec2 value(int k, const Vec2& p) const {
        const auto phi = cr_basis_values(mesh->barycentric(k, p));
        Vec2 v;
        for (int i = 0; i < 3; ++i) {
            const int f = mesh->element_faces[k][i];
            v.x += phi[i] * dofs[cr_dof(f, 0)];
            v.y += phi[i] * dofs[cr_dof(f, 1)];
        }
        return v;
    }

    /// (grad u)_{cj} = d u_c / d x_j, constant on element k.
    Mat2 gradient(int k) const {
        const auto g = cr_basis_gradients(*mesh, k);
        Mat2 G;
        for (int i = 0; i < 3; ++i) {
            const int f = mesh->element_faces[k][i];
            const double ux = dofs[cr_dof(f, 0)], uy = dofs[cr_dof(f, 1)];
            G(0, 0) += ux * g[i].x;
            G(0, 1) += ux * g[i].y;
            G(1, 0) += uy * g[i].x;
            G(1, 1) += uy * g[i].y;
        }
        return G;
    }

    double divergence(int k) const { return gradient(k).trace(); }

    /// Value at vertex i of element k (one-sided; the function may jump there).
    Vec2 vertex_value(int k, int i) const {
        Vec2 v;
        for (int j = 0; j < 3; ++j) {
            const int f = mesh->element_faces[k][j];
            const double s = (j == i) ? -1.0 : 1.0;
            v.x += s * dofs[cr_dof(f, 0)];
            v.y += s * dofs[cr_dof(f, 1)];
        }
        return v;
    }
};

/// Piecewise-constant pressure.
struct P0Function {
    const Mesh* mesh = nullptr;
    Eigen::VectorXd vals; // size num_elements

    explicit P0Function(const Mesh& m) : mesh(&m), vals(Eigen::VectorXd::Zero(m.num_elements())) {}

    double mean() const {
        double s = 0.0, a = 0.0;
        for (int k = 0; k < mesh->num_elements(); ++k) {
            const double ak = mesh->area(k);
            s += ak * vals[k];
            a += ak;
        }
        return s / a;
    }
    void project_zero_mean() { vals.array() -= mean(); }
};

namespace detail {

/// Mean of f over the segment [a,b]; composite rule graded (ratio 1/2) toward
/// an endpoint that coincides with `singular_point`.
template <class F>
double edge_mean(F&& f, const Vec2& a, const Vec2& b, int degree, const Vec2& singular_point,
                 int grading_levels) {
    const QuadratureRule rule = edge_rule(degree);
    const double len = (b - a).norm();
    const bool sing_a = (a - singular_point).norm() <= 1e-12 * len;
    const bool sing_b = (b - singular_point).norm() <= 1e-12 * len;
    Vec2 p = a, q = b;
    if (sing_b) std::swap(p, q); // singularity at p, parameter t = 0
    const int levels = (sing_a || sing_b) ? grading_levels : 0;

    // dyadic intervals [2^-(j+1), 2^-j], innermost piece closes down to 0
    double total = 0.0;
    double hi = 1.0;
    for (int j = 0; j <= levels; ++j) {
        const double lo = (j == levels) ? 0.0 : 0.5 * hi;
        for (std::size_t iq = 0; iq < rule.size(); ++iq) {
            const double t = lo + (hi - lo) * rule.points[iq][1];
            total += (hi - lo) * rule.weights[iq] * f(p + (q - p) * t);
        }
        hi = lo;
    }
    return total;
}

} // namespace detail

/// Face-mean interpolation into the CR space. Faces with an endpoint at
/// `singular_point` use a composite edge rule graded toward it.
template <class F>
CRFunction interpolate_cr(const Mesh& mesh, F&& f, const Vec2& singular_point = {1e300, 1e300},
                          int degree = 8, int grading_levels = 12) {
    CRFunction u(mesh);
    for (int fi = 0; fi < mesh.num_faces(); ++fi) {
        const Vec2 a = mesh.vertices[mesh.faces[fi].a];
        const Vec2 b = mesh.vertices[mesh.faces[fi].b];
        u.dofs[cr_dof(fi, 0)] = detail::edge_mean([&](const Vec2& x) { return f(x).x; }, a, b,
                                                  degree, singular_point, grading_levels);
        u.dofs[cr_dof(fi, 1)] = detail::edge_mean([&](const Vec2& x) { return f(x).y; }, a, b,
                                                  degree, singular_point, grading_levels);
    }
    return u;
}

/// Element means of a scalar function, graded toward `singular_point` and with
/// exact splitting along an optional jump line {x : n.(x - x0) = 0}.
template <class F>
P0Function project_p0(const Mesh& mesh, F&& f, const Vec2& singular_point = {1e300, 1e300},
                      int degree = 8, int grading_levels = 12, bool has_jump = false,
                      const Vec2& jump_point = {}, const Vec2& jump_normal = {}) {
    P0Function p(mesh);
    for (int k = 0; k < mesh.num_elements(); ++k) {
        const Vec2 a = mesh.vertex(k, 0), b = mesh.vertex(k, 1), c = mesh.vertex(k, 2);
        std::vector<std::array<Vec2, 3>> pieces{{a, b, c}};
        if (has_jump) pieces = split_triangle_by_line(a, b, c, jump_point, jump_normal);
        double s = 0.0;
        for (const auto& t : pieces) {
            const ElementQuadrature eq =
                graded_rule(t[0], t[1], t[2], singular_point, degree, grading_levels);
            for (std::size_t q = 0; q < eq.points.size(); ++q)
                s += eq.weights[q] * f(eq.points[q]);
        }
        p.vals[k] = s / mesh.area(k);
    }
    return p;
}

/// Integral of the jump of u over interior face fi (signed by the face normal
/// orientation: trace from elem[0] minus trace from elem[1]). Zero for a
/// CR function by construction; useful as a conformity check.
inline Vec2 face_jump_integral(const CRFunction& u, int fi) {
    const Mesh& mesh = *u.mesh;
    const Face& f = mesh.faces[fi];
    if (f.boundary) {
        const Vec2 mid = (mesh.vertices[f.a] + mesh.vertices[f.b]) * 0.5;
        return u.value(f.elem[0], mid) * f.length;
    }
    const Vec2 mid = (mesh.vertices[f.a] + mesh.vertices[f.b]) * 0.5;
    return (u.value(f.elem[0], mid) - u.value(f.elem[1], mid)) * f.length;
}

} // namespace prstokes
