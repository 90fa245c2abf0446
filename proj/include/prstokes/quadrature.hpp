#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "prstokes/geometry.hpp"

namespace prstokes {

/// Quadrature rule on the reference triangle {(0,0),(1,0),(0,1)} or the
/// reference edge [0,1]. Triangle points are stored in barycentric
/// coordinates; weights sum to the reference measure (1/2 resp. 1).
struct QuadratureRule {
    std::vector<std::array<double, 3>> points; // barycentric (edge rules: l1, l2, 0)
    std::vector<double> weights;
    int exactness_degree = 0;

    std::size_t size() const { return weights.size(); }
};

namespace detail {

/// Gauss-Legendre nodes/weights on [0,1] (Newton on the Legendre polynomial).
inline void gauss_legendre_01(int n, std::vector<double>& x, std::vector<double>& w) {
    x.assign(n, 0.0);
    w.assign(n, 0.0);
    for (int i = 0; i < n; ++i) {
        // initial guess on [-1,1]
        double t = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = t;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (t * p1 - p0) / (t * t - 1.0);
            const double dt = p1 / dp;
            t -= dt;
            if (std::abs(dt) < 1e-15) break;
        }
        x[i] = 0.5 * (t + 1.0);
        w[i] = 1.0 / ((1.0 - t * t) * dp * dp);
    }
}

inline double factorial(int n) {
    double f = 1.0;
    for (int k = 2; k <= n; ++k) f *= k;
    return f;
}

/// exact integral of x^a y^b over the reference triangle
inline double monomial_integral(int a, int b) {
    return factorial(a) * factorial(b) / factorial(a + b + 2);
}

inline void verify_triangle_exactness(const QuadratureRule& rule) {
    for (int a = 0; a + 0 <= rule.exactness_degree; ++a) {
        for (int b = 0; a + b <= rule.exactness_degree; ++b) {
            double s = 0.0;
            for (std::size_t q = 0; q < rule.size(); ++q) {
                const double x = rule.points[q][1];
                const double y = rule.points[q][2];
                s += rule.weights[q] * std::pow(x, a) * std::pow(y, b);
            }
            const double exact = monomial_integral(a, b);
            if (std::abs(s - exact) > 1e-13 * (1.0 + std::abs(exact)))
                throw std::logic_error("triangle rule failed monomial exactness check");
        }
    }
}

} // namespace detail

/// Positive-weight product-Gauss rule on the reference triangle (collapsed
/// square), exact for polynomials of total degree <= degree.
inline QuadratureRule triangle_rule(int degree) {
    if (degree < 1 || degree > 10) throw std::invalid_argument("triangle_rule: degree in [1,10]");
    const int nu = (degree + 3) / 2; // covers degree+1 incl. the Jacobian factor
    const int nv = (degree + 2) / 2;
    std::vector<double> xu, wu, xv, wv;
    detail::gauss_legendre_01(nu, xu, wu);
    detail::gauss_legendre_01(nv, xv, wv);

    QuadratureRule rule;
    rule.exactness_degree = degree;
    for (int i = 0; i < nu; ++i) {
        for (int j = 0; j < nv; ++j) {
            const double x = xu[i];
            const double y = xv[j] * (1.0 - xu[i]);
            rule.points.push_back({1.0 - x - y, x, y});
            rule.weights.push_back(wu[i] * wv[j] * (1.0 - xu[i]));
        }
    }
    detail::verify_triangle_exactness(rule);
    return rule;
}

/// Gauss-Legendre rule on the reference edge [0,1], exact to `degree`.
inline QuadratureRule edge_rule(int degree) {
    if (degree < 1 || degree > 21) throw std::invalid_argument("edge_rule: degree in [1,21]");
    const int n = (degree + 2) / 2;
    std::vector<double> x, w;
    detail::gauss_legendre_01(n, x, w);
    QuadratureRule rule;
    rule.exactness_degree = degree;
    for (int i = 0; i < n; ++i) {
        rule.points.push_back({1.0 - x[i], x[i], 0.0});
        rule.weights.push_back(w[i]);
    }
    return rule;
}

/// Quadrature on a physical element: points in physical coordinates, weights
/// summing to the element area.
struct ElementQuadrature {
    std::vector<Vec2> points;
    std::vector<double> weights;
};

namespace detail {

inline void append_mapped(const QuadratureRule& rule, const Vec2& a, const Vec2& b, const Vec2& c,
                          ElementQuadrature& out) {
    const double scale = 2.0 * std::abs(triangle_area(a, b, c));
    for (std::size_t q = 0; q < rule.size(); ++q) {
        const auto& l = rule.points[q];
        out.points.push_back(a * l[0] + b * l[1] + c * l[2]);
        out.weights.push_back(rule.weights[q] * scale);
    }
}

inline bool closure_contains(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& p,
                             double tol) {
    const double area = triangle_area(a, b, c);
    if (area == 0.0) return false;
    const double l1 = triangle_area(p, b, c) / area;
    const double l2 = triangle_area(a, p, c) / area;
    const double l3 = triangle_area(a, b, p) / area;
    return l1 >= -tol && l2 >= -tol && l3 >= -tol;
}

inline void add_graded(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& p,
                       const QuadratureRule& base, int levels, ElementQuadrature& out) {
    const double h = std::max({(a - b).norm(), (b - c).norm(), (c - a).norm()});
    if (levels <= 0 || h <= 0.0) {
        detail::append_mapped(base, a, b, c, out);
        return;
    }
    const double tol = 1e-12;
    const double near = 1e-12 * h;
    // bring the singular point to a vertex first
    if ((a - p).norm() > near && (b - p).norm() > near && (c - p).norm() > near) {
        const Vec2 verts[3] = {a, b, c};
        for (int i = 0; i < 3; ++i) {
            const Vec2& u = verts[i];
            const Vec2& v = verts[(i + 1) % 3];
            const Vec2& w = verts[(i + 2) % 3];
            if (std::abs(triangle_area(p, u, v)) > tol * h * h)
                add_graded(p, u, v, p, base, levels, out);
            (void)w;
        }
        return;
    }
    // rotate so the singular vertex comes first
    Vec2 v0 = a, v1 = b, v2 = c;
    if ((b - p).norm() <= near) {
        v0 = b; v1 = c; v2 = a;
    } else if ((c - p).norm() <= near) {
        v0 = c; v1 = a; v2 = b;
    }
    const Vec2 m1 = (v0 + v1) * 0.5;
    const Vec2 m2 = (v0 + v2) * 0.5;
    detail::append_mapped(base, m1, v1, v2, out);
    detail::append_mapped(base, m1, v2, m2, out);
    add_graded(v0, m1, m2, p, base, levels - 1, out);
}

} // namespace detail

/// Plain mapped rule on the physical triangle (a, b, c).
inline ElementQuadrature element_quadrature(const Vec2& a, const Vec2& b, const Vec2& c,
                                            const QuadratureRule& rule) {
    ElementQuadrature out;
    detail::append_mapped(rule, a, b, c, out);
    return out;
}

/// Splits triangle (a,b,c) along the line {x : n.(x - x0) = 0} and returns a
/// triangulation (fan) of each side; triangles whose relative area is below
/// 1e-14 are dropped. Exact for piecewise integrands with a straight interface.
inline std::vector<std::array<Vec2, 3>> split_triangle_by_line(const Vec2& a, const Vec2& b,
                                                               const Vec2& c, const Vec2& x0,
                                                               const Vec2& n) {
    const double area = std::abs(triangle_area(a, b, c));
    const Vec2 verts[3] = {a, b, c};
    double s[3];
    bool cut = false;
    for (int i = 0; i < 3; ++i) s[i] = n.dot(verts[i] - x0);
    for (int i = 0; i < 3; ++i)
        if (s[i] * s[(i + 1) % 3] < 0.0) cut = true;
    if (!cut) return {{a, b, c}};

    // Sutherland-Hodgman against each half-plane, then fan-triangulate
    std::vector<std::array<Vec2, 3>> out;
    for (int side = 0; side < 2; ++side) {
        const double sign = side == 0 ? 1.0 : -1.0;
        std::vector<Vec2> poly;
        for (int i = 0; i < 3; ++i) {
            const Vec2& p = verts[i];
            const Vec2& q = verts[(i + 1) % 3];
            const double sp = sign * s[i], sq = sign * s[(i + 1) % 3];
            if (sp >= 0.0) poly.push_back(p);
            if (sp * sq < 0.0) poly.push_back(p + (q - p) * (sp / (sp - sq)));
        }
        for (std::size_t i = 1; i + 1 < poly.size(); ++i) {
            const std::array<Vec2, 3> t{poly[0], poly[i], poly[i + 1]};
            if (std::abs(triangle_area(t[0], t[1], t[2])) > 1e-14 * area) out.push_back(t);
        }
    }
    return out;
}

/// Composite rule graded toward `singular_point` (ratio 1/2 per level) when the
/// element closure contains it; the plain base rule otherwise.
inline ElementQuadrature graded_rule(const Vec2& a, const Vec2& b, const Vec2& c,
                                     const Vec2& singular_point, int base_degree,
                                     int grading_levels) {
    if (grading_levels < 0) throw std::invalid_argument("graded_rule: grading_levels >= 0");
    const QuadratureRule base = triangle_rule(base_degree);
    const double h = std::max({(a - b).norm(), (b - c).norm(), (c - a).norm()});
    ElementQuadrature out;
    if (!detail::closure_contains(a, b, c, singular_point, 1e-12 * h)) {
        detail::append_mapped(base, a, b, c, out);
        return out;
    }
    detail::add_graded(a, b, c, singular_point, base, grading_levels, out);
    return out;
}

} // namespace prstokes
