#pragma once

#include <array>
#include <cmath>

namespace prstokes {

struct Vec2 {
    double x = 0.0, y = 0.0;

    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2& operator+=(const Vec2& o) { x += o.x; y += o.y; return *this; }
    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double norm() const { return std::hypot(x, y); }
};

inline Vec2 operator*(double s, const Vec2& v) { return v * s; }

/// 2x2 tensor with the Frobenius inner product.
struct Mat2 {
    // row-major: a(i,j) = m[2*i+j]
    std::array<double, 4> m{0.0, 0.0, 0.0, 0.0};

    Mat2() = default;
    Mat2(double a00, double a01, double a10, double a11) : m{a00, a01, a10, a11} {}

    double& operator()(int i, int j) { return m[2 * i + j]; }
    double operator()(int i, int j) const { return m[2 * i + j]; }

    Mat2 operator+(const Mat2& o) const {
        return {m[0] + o.m[0], m[1] + o.m[1], m[2] + o.m[2], m[3] + o.m[3]};
    }
    Mat2 operator-(const Mat2& o) const {
        return {m[0] - o.m[0], m[1] - o.m[1], m[2] - o.m[2], m[3] - o.m[3]};
    }
    Mat2 operator*(double s) const { return {m[0] * s, m[1] * s, m[2] * s, m[3] * s}; }
    Mat2& operator+=(const Mat2& o) {
        for (int i = 0; i < 4; ++i) m[i] += o.m[i];
        return *this;
    }

    double frobenius(const Mat2& o) const {
        return m[0] * o.m[0] + m[1] * o.m[1] + m[2] * o.m[2] + m[3] * o.m[3];
    }
    double norm() const { return std::sqrt(frobenius(*this)); }
    double trace() const { return m[0] + m[3]; }

    Mat2 sym() const {
        const double off = 0.5 * (m[1] + m[2]);
        return {m[0], off, off, m[3]};
    }

    static Mat2 zero() { return {}; }
    static Mat2 identity() { return {1.0, 0.0, 0.0, 1.0}; }
};

inline Mat2 operator*(double s, const Mat2& q) { return q * s; }

inline double triangle_area(const Vec2& a, const Vec2& b, const Vec2& c) {
    return 0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
}

} // namespace prstokes
