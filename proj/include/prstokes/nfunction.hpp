#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "prstokes/geometry.hpp"

namespace prstokes {

/// Scalar N-function with (r,epsilon)-structure: phi'(t) = (eps+t)^{r-2} t.
/// For epsilon = 0 this is the r-Laplacian nonlinearity phi(t) = t^r / r.
class NFunctionRE {
  public:
    NFunctionRE(double r, double epsilon) : r_(r), eps_(epsilon) {
        if (!(r > 1.0)) throw std::invalid_argument("NFunctionRE: r must be > 1");
        if (epsilon < 0.0) throw std::invalid_argument("NFunctionRE: epsilon must be >= 0");
    }

    double r() const { return r_; }
    double epsilon() const { return eps_; }

    // indices of uniform convexity
    double r_minus() const { return eps_ > 0.0 ? std::min(r_, 2.0) : r_; }
    double r_plus() const { return eps_ > 0.0 ? std::max(r_, 2.0) : r_; }

    double value(double t) const {
        if (t < 0.0) throw std::domain_error("phi: t < 0");
        if (t == 0.0) return 0.0;
        if (eps_ == 0.0) return std::pow(t, r_) / r_;
        if (t < 0.5 * eps_) {
            // the closed form below cancels catastrophically for t << eps;
            // binomial series of int (eps+u)^{r-2} u du instead
            double coef = std::pow(eps_, r_ - 2.0); // C(r-2, k) eps^{r-2-k}
            double tpow = t * t;                    // t^{k+2}
            double sum = 0.0;
            for (int k = 0; k < 200; ++k) {
                const double term = coef * tpow / (k + 2.0);
                sum += term;
                if (std::abs(term) <= 1e-17 * sum) break;
                coef *= (r_ - 2.0 - k) / (eps_ * (k + 1.0));
                tpow *= t;
            }
            return sum;
        }
        // integral of (eps+s)^{r-2} s = (eps+s)^{r-1} - eps (eps+s)^{r-2}
        const double et = eps_ + t;
        return (std::pow(et, r_) - std::pow(eps_, r_)) / r_ -
               eps_ * (std::pow(et, r_ - 1.0) - std::pow(eps_, r_ - 1.0)) / (r_ - 1.0);
    }

    double prime(double t) const {
        if (t < 0.0) throw std::domain_error("phi': t < 0");
        if (t == 0.0) return 0.0;
        return std::pow(eps_ + t, r_ - 2.0) * t;
    }

    /// phi''(t) = (eps+t)^{r-3} ((r-1) t + eps), t > 0.
    double second(double t) const {
        return std::pow(eps_ + t, r_ - 3.0) * ((r_ - 1.0) * t + eps_);
    }

    /// Inverse of phi' by monotone bracketing (closed form for eps = 0).
    double prime_inverse(double y) const {
        if (y <= 0.0) return 0.0;
        if (eps_ == 0.0) return std::pow(y, 1.0 / (r_ - 1.0));
        double lo = 0.0;
        double hi = std::pow(y, 1.0 / (r_ - 1.0)) + y + eps_;
        while (prime(hi) < y) hi *= 2.0;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (prime(mid) < y)
                lo = mid;
            else
                hi = mid;
            if (hi - lo <= 1e-15 * (1.0 + hi)) break;
        }
        // Newton polish
        double s = 0.5 * (lo + hi);
        for (int it = 0; it < 5; ++it) {
            const double d = second(s);
            if (!(d > 0.0)) break;
            const double step = (prime(s) - y) / d;
            const double sn = s - step;
            if (sn <= lo || sn >= hi) break;
            s = sn;
        }
        return s;
    }

  private:
    double r_;
    double eps_;
};

namespace detail {

// adaptive Simpson with relative tolerance
inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double fa, double fm, double fb, double whole, double tol,
                               int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol)
        return left + right + delta / 15.0;
    return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double rel_tol) {
    if (b <= a) return 0.0;
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    const double tol = rel_tol * std::max(std::abs(whole), 1e-300);
    return adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 48);
}

} // namespace detail

/// Conjugate phi*(t): closed form t^{r'}/r' for eps = 0, otherwise the exact
/// Legendre point formula phi*(t) = s t - phi(s) at s = (phi')^{-1}(t).
inline double phi_conjugate(const NFunctionRE& nf, double t) {
    if (t < 0.0) throw std::domain_error("phi*: t < 0");
    if (t == 0.0) return 0.0;
    if (nf.epsilon() == 0.0) {
        const double rp = nf.r() / (nf.r() - 1.0);
        return std::pow(t, rp) / rp;
    }
    const double s = nf.prime_inverse(t);
    return s * t - nf.value(s);
}

/// Generic shifted N-function psi_a built from value/derivative callables,
/// using psi_a'(t) = psi'(max{a,t}) / max{a,t} * t.
template <class Value, class Prime>
double shifted_value_of(const Value& psi, const Prime& psi_prime, double a, double t) {
    if (a < 0.0 || t < 0.0) throw std::domain_error("shifted: negative argument");
    if (a == 0.0) return psi(t);
    const double slope = psi_prime(a) / a;
    if (t <= a) return 0.5 * slope * t * t;
    return 0.5 * slope * a * a + psi(t) - psi(a);
}

template <class Prime>
double shifted_prime_of(const Prime& psi_prime, double a, double t) {
    if (a < 0.0 || t < 0.0) throw std::domain_error("shifted': negative argument");
    const double m = std::max(a, t);
    if (m == 0.0) return 0.0;
    return psi_prime(m) / m * t;
}

inline double shifted_value(const NFunctionRE& nf, double a, double t) {
    return shifted_value_of([&nf](double s) { return nf.value(s); },
                            [&nf](double s) { return nf.prime(s); }, a, t);
}

inline double shifted_prime(const NFunctionRE& nf, double a, double t) {
    return shifted_prime_of([&nf](double s) { return nf.prime(s); }, a, t);
}

/// Conjugate of the shifted function (phi_a)* via the Legendre point formula:
/// (phi_a)*(t) = s t - phi_a(s) where phi_a'(s) = t (piecewise monotone inverse).
inline double shifted_conjugate(const NFunctionRE& nf, double a, double t) {
    if (t <= 0.0) return 0.0;
    if (a == 0.0) {
        const double s = nf.prime_inverse(t);
        return s * t - nf.value(s);
    }
    const double slope = nf.prime(a) / a;
    double s;
    if (t <= nf.prime(a))
        s = t / slope;
    else
        s = nf.prime_inverse(t);
    return s * t - shifted_value(nf, a, s);
}

/// Conjugate shifted by phi'(a): (phi*)_{phi'(a)}(t). Built from the closed
/// Legendre form of phi* and its derivative (phi')^{-1}.
inline double conjugate_shifted(const NFunctionRE& nf, double a, double t) {
    const auto conj = [&nf](double s) {
        if (s <= 0.0) return 0.0;
        const double x = nf.prime_inverse(s);
        return x * s - nf.value(x);
    };
    const auto conj_prime = [&nf](double s) { return nf.prime_inverse(s); };
    return shifted_value_of(conj, conj_prime, nf.prime(a), t);
}

/// Residual of the identity (phi_a)* = (phi*)_{phi'(a)}.
inline double shifted_conjugate_identity_check(const NFunctionRE& nf, double a, double t) {
    const double lhs = shifted_conjugate(nf, a, t);
    const double rhs = conjugate_shifted(nf, a, t);
    return std::abs(lhs - rhs) / (1.0 + lhs);
}

/// A(Q) = phi'(|Q|) Q / |Q|, with A(0) = 0.
inline Mat2 A_of(const NFunctionRE& nf, const Mat2& q) {
    const double n = q.norm();
    if (n == 0.0) return Mat2::zero();
    return q * (nf.prime(n) / n);
}

/// The unique Q with A(Q) = P.
inline Mat2 A_inverse(const NFunctionRE& nf, const Mat2& p) {
    const double n = p.norm();
    if (n == 0.0) return Mat2::zero();
    const double s = nf.prime_inverse(n);
    return p * (s / n);
}

/// F(Q) = sqrt(phi'(|Q|) |Q|) Q / |Q| = (eps+|Q|)^{(r-2)/2} Q.
inline Mat2 F_of(const NFunctionRE& nf, const Mat2& q) {
    const double n = q.norm();
    if (n == 0.0) return Mat2::zero();
    return q * std::pow(nf.epsilon() + n, 0.5 * (nf.r() - 2.0));
}

/// |F(P) - F(Q)|^2, the density of the natural distance.
inline double natural_density(const NFunctionRE& nf, const Mat2& p, const Mat2& q) {
    const Mat2 d = F_of(nf, p) - F_of(nf, q);
    return d.frobenius(d);
}

/// Observed extreme LHS/RHS ratios over a sampled inequality family, with the
/// paper's constant replaced by 1 (the report is the empirical constant).
struct InequalityReport {
    std::string family;
    double r = 0.0;
    double epsilon = 0.0;
    double delta = 1.0;
    long sample_count = 0;
    double min_ratio = 0.0;
    double max_ratio = 0.0;
};

namespace detail {

struct RatioTracker {
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    long n = 0;
    void add(double num, double den) {
        if (!(den > 0.0) || !std::isfinite(num) || !std::isfinite(den)) return;
        const double ratio = num / den;
        if (!std::isfinite(ratio)) return;
        lo = std::min(lo, ratio);
        hi = std::max(hi, ratio);
        ++n;
    }
    InequalityReport report(const std::string& family, const NFunctionRE& nf, double delta) const {
        return {family, nf.r(), nf.epsilon(), delta, n, lo, hi};
    }
};

} // namespace detail

/// Samples the inequality toolkit (scaled Young, shift symmetry, prime shift
/// change, shift change, the four equivalences relating A and F) with
/// log-uniform magnitudes in [1e-4, 1e4]; deterministic under a fixed seed.
inline std::vector<InequalityReport> certify_inequalities(const NFunctionRE& nf, double delta,
                                                          long n, unsigned long seed) {
    if (n < 1) throw std::invalid_argument("certify: n must be >= 1");
    if (!(delta > 0.0 && delta <= 1.0)) throw std::invalid_argument("certify: delta in (0,1]");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> logmag(std::log(1e-4), std::log(1e4));
    std::normal_distribution<double> gauss(0.0, 1.0);

    const auto rand_mag = [&] { return std::exp(logmag(rng)); };
    const auto rand_mat = [&](double mag) {
        Mat2 q(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
        const double nn = q.norm();
        if (nn == 0.0) return Mat2::identity() * (mag / std::sqrt(2.0));
        return q * (mag / nn);
    };

    detail::RatioTracker young, shift_sym, prime_shift, shift_change;
    detail::RatioTracker zsh_dual, zsh_f, zsh_shift, zsh_prime;
    const double rp = nf.r_plus();

    for (long i = 0; i < n; ++i) {
        const double s = rand_mag();
        const double t = rand_mag();
        const Mat2 p = rand_mat(rand_mag());
        const Mat2 q = rand_mat(rand_mag());
        const double pn = p.norm(), qn = q.norm();
        const double dpq = (p - q).norm();

        // st <= delta^{1-r+} phi(s) + delta phi*(t)
        young.add(s * t, std::pow(delta, 1.0 - rp) * nf.value(s) + delta * phi_conjugate(nf, t));

        // phi_{|P|}(|P-Q|) vs phi_{|Q|}(|P-Q|)
        shift_sym.add(shifted_value(nf, pn, dpq), shifted_value(nf, qn, dpq));

        // |phi'_{|P|}(t) - phi'_{|Q|}(t)| <= phi'_{|Q|}(|P-Q|)
        prime_shift.add(std::abs(shifted_prime(nf, pn, t) - shifted_prime(nf, qn, t)),
                        shifted_prime(nf, qn, dpq));

        // phi_{|P|}(t) <= delta^{1-r+} phi_{|Q|}(t) + delta |F(P)-F(Q)|^2
        shift_change.add(shifted_value(nf, pn, t),
                         std::pow(delta, 1.0 - rp) * shifted_value(nf, qn, t) +
                             delta * natural_density(nf, p, q));

        // the four equivalences of the A/F lemma, all against |F(P)-F(Q)|^2
        const double fd = natural_density(nf, p, q);
        const Mat2 da = A_of(nf, p) - A_of(nf, q);
        zsh_dual.add(da.frobenius(p - q), fd);
        zsh_f.add(shifted_conjugate(nf, pn, da.norm()), fd);
        zsh_shift.add(shifted_value(nf, pn, dpq), fd);
        zsh_prime.add(da.norm(), shifted_prime(nf, pn, dpq));
    }

    return {young.report("deltaYoung", nf, delta),
            shift_sym.report("shift-symmetry", nf, delta),
            prime_shift.report("prime-shift-change", nf, delta),
            shift_change.report("shift-change", nf, delta),
            zsh_dual.report("zsh-monotone", nf, delta),
            zsh_f.report("zsh-conjugate", nf, delta),
            zsh_shift.report("zsh-shifted", nf, delta),
            zsh_prime.report("zsh-prime", nf, delta)};
}

} // namespace prstokes
