#pragma once

// Constant-drift reference solution u(v0) of the rectangular-domain problem:
//   du/dt = d2u/dx2 + v0 du/dx on (0,T) x (0,1),
//   u(t,0) = 1, u(t,1) = 0, u(0,x) = 0.
// Two representations stitched at t_cross: a spectral sine series (large t)
// and a reflection/image series in erfc terms (small t).

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace fpt {

inline constexpr double kPi = 3.14159265358979323846;

// erfc(x/(2 sqrt(t))): the half-line heat layer.
inline double u_heat_layer(double t, double x) {
    if (!(t > 0.0)) throw std::invalid_argument("u_heat_layer: t must be positive");
    return std::erfc(x / (2.0 * std::sqrt(t)));
}

namespace detail {

// exp(z^2) * erfc(z) for z >= 0, safe against overflow of exp(z^2).
inline double erfcx(double z) {
    if (z < 20.0) return std::exp(z * z) * std::erfc(z);
    // asymptotic expansion, relative error well below 1e-14 for z >= 20
    double iz2 = 1.0 / (2.0 * z * z);
    double s = 1.0 + iz2 * (-1.0 + iz2 * (3.0 - 15.0 * iz2));
    return s / (z * std::sqrt(kPi));
}

// exp(a) * erfc(z) with the exponents combined before exponentiation.
inline double scaled_erfc(double a, double z) {
    if (z > 0.0) return std::exp(a - z * z) * erfcx(z);
    return std::exp(a) * std::erfc(z);
}

}  // namespace detail

struct ConstDriftSolution {
    double v0 = 0.0;
    double T = 1.0;
    double spectral_tol = 1e-10;
    double t_cross = 0.1 / (kPi * kPi);
    int max_terms = 100000;

    double eval(double t, double x) const;
    double eval_dx(double t, double x) const;

    Eigen::MatrixXd eval_grid(const std::vector<double>& times, const std::vector<double>& xs) const {
        Eigen::MatrixXd m(static_cast<Eigen::Index>(times.size()), static_cast<Eigen::Index>(xs.size()));
        for (std::size_t i = 0; i < times.size(); ++i)
            for (std::size_t j = 0; j < xs.size(); ++j)
                m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = eval(times[i], xs[j]);
        return m;
    }

    double spectral(double t, double x) const;
    double image(double t, double x) const;
    double spectral_dx(double t, double x) const;
    double image_dx(double t, double x) const;
};

// steady state u_s(x) = (e^{-v0 x} - e^{-v0}) / (1 - e^{-v0}); the expm1
// ratio stays accurate down to tiny v0, only v0 = 0 needs the 1-x limit
inline double const_drift_steady(double v0, double x) {
    if (v0 == 0.0) return 1.0 - x;
    return std::expm1(v0 * (1.0 - x)) / std::expm1(v0);
}

inline double const_drift_steady_dx(double v0, double x) {
    if (v0 == 0.0) return -1.0;
    return -v0 * std::exp(v0 * (1.0 - x)) / std::expm1(v0);
}

inline double ConstDriftSolution::spectral(double t, double x) const {
    // u = u_s(x) + e^{-v0 x/2} sum_k c_k e^{-(k^2 pi^2 + v0^2/4) t} sin(k pi x),
    // c_k = -2 k pi / (v0^2/4 + k^2 pi^2)
    const double q = v0 * v0 / 4.0;
    const double pref = std::exp(-v0 * x / 2.0);
    const double amp = std::exp(std::abs(v0) / 2.0);  // bound on the prefactor over [0,1]
    double sum = 0.0;
    int k = 1;
    for (; k <= max_terms; ++k) {
        double lam = k * kPi * k * kPi + q;
        double ck = -2.0 * k * kPi / lam;
        sum += ck * std::exp(-lam * t) * std::sin(k * kPi * x);
        double next_bound = amp * 2.0 / ((k + 1) * kPi) * std::exp(-((k + 1.0) * (k + 1.0) * kPi * kPi + q) * t);
        if (next_bound < spectral_tol / 10.0) break;
    }
    if (k > max_terms) throw std::runtime_error("ConstDriftSolution: spectral series did not converge");
    return const_drift_steady(v0, x) + pref * sum;
}

inline double ConstDriftSolution::spectral_dx(double t, double x) const {
    const double q = v0 * v0 / 4.0;
    const double pref = std::exp(-v0 * x / 2.0);
    const double amp = std::exp(std::abs(v0) / 2.0) * (1.0 + std::abs(v0));
    double sum = 0.0;
    int k = 1;
    for (; k <= max_terms; ++k) {
        double lam = k * kPi * k * kPi + q;
        double ck = -2.0 * k * kPi / lam;
        double s = std::sin(k * kPi * x), c = std::cos(k * kPi * x);
        sum += ck * std::exp(-lam * t) * (-0.5 * v0 * s + k * kPi * c);
        double next_bound = amp * 2.0 * std::exp(-((k + 1.0) * (k + 1.0) * kPi * kPi + q) * t);
        if (next_bound < spectral_tol / 10.0) break;
    }
    if (k > max_terms) throw std::runtime_error("ConstDriftSolution: spectral series did not converge");
    return const_drift_steady_dx(v0, x) + pref * sum;
}

inline double ConstDriftSolution::image(double t, double x) const {
    // u(t,x) = sum_{n>=0} e^{v0 n} u1(t, x+2n) - e^{v0 (n+1-x)} u1(t, 2n+2-x),
    // u1(t,y) = (erfc((y+v0 t)/(2 sqrt t)) + e^{-v0 y} erfc((y-v0 t)/(2 sqrt t)))/2.
    if (x <= 0.0) return 1.0;
    if (x >= 1.0) return 0.0;
    const double rt = 2.0 * std::sqrt(t);
    double sum = 0.0;
    for (int n = 0;; ++n) {
        double ya = x + 2.0 * n, yc = 2.0 * n + 2.0 - x;
        double za = (ya + v0 * t) / rt, zb = (ya - v0 * t) / rt;
        double zc = (yc + v0 * t) / rt, zd = (yc - v0 * t) / rt;
        sum += 0.5 * detail::scaled_erfc(v0 * n, za);
        sum += 0.5 * detail::scaled_erfc(-v0 * (n + x), zb);
        sum -= 0.5 * detail::scaled_erfc(v0 * (n + 1.0 - x), zc);
        sum -= 0.5 * detail::scaled_erfc(-v0 * (n + 1.0), zd);
        double zmin = (2.0 * (n + 1.0) - 1.0 - std::abs(v0) * t) / rt;
        if (zmin > 8.0) break;
        if (n > max_terms) throw std::runtime_error("ConstDriftSolution: image series did not converge");
    }
    return sum;
}

inline double ConstDriftSolution::image_dx(double t, double x) const {
    // d/dx of each exp(A(x)) erfc(z(x)) term: A' e^A erfc(z) - (2/sqrt pi) e^{A - z^2} z'.
    if (x <= 0.0 || x >= 1.0) {
        // one-sided derivative by the spectral form to avoid the boundary branch; only
        // used away from t=0 in practice
        return spectral_dx(t, x);
    }
    const double rt = 2.0 * std::sqrt(t);
    const double zp = 1.0 / rt;  // |dz/dx|
    const double gauss = 2.0 / std::sqrt(kPi);
    double sum = 0.0;
    for (int n = 0;; ++n) {
        double ya = x + 2.0 * n, yc = 2.0 * n + 2.0 - x;
        double za = (ya + v0 * t) / rt, zb = (ya - v0 * t) / rt;
        double zc = (yc + v0 * t) / rt, zd = (yc - v0 * t) / rt;
        // term a: A = v0 n (A'=0), z' = +zp
        sum += 0.5 * (-gauss * std::exp(v0 * n - za * za) * zp);
        // term b: A = -v0 (n+x) (A' = -v0), z' = +zp
        sum += 0.5 * (-v0 * detail::scaled_erfc(-v0 * (n + x), zb) -
                      gauss * std::exp(-v0 * (n + x) - zb * zb) * zp);
        // term c (negative sign): A = v0 (n+1-x) (A' = -v0), z' = -zp
        sum -= 0.5 * (-v0 * detail::scaled_erfc(v0 * (n + 1.0 - x), zc) +
                      gauss * std::exp(v0 * (n + 1.0 - x) - zc * zc) * zp);
        // term d (negative sign): A = -v0 (n+1) (A'=0), z' = -zp
        sum -= 0.5 * (gauss * std::exp(-v0 * (n + 1.0) - zd * zd) * zp);
        double zmin = (2.0 * (n + 1.0) - 1.0 - std::abs(v0) * t) / rt;
        if (zmin > 8.0) break;
        if (n > max_terms) throw std::runtime_error("ConstDriftSolution: image series did not converge");
    }
    return sum;
}

inline double ConstDriftSolution::eval(double t, double x) const {
    if (t < 0.0) throw std::invalid_argument("ConstDriftSolution::eval: negative time");
    if (t == 0.0) return x == 0.0 ? 1.0 : 0.0;
    if (x <= 0.0) return 1.0;
    if (x >= 1.0) return 0.0;
    return t < t_cross ? image(t, x) : spectral(t, x);
}

inline double ConstDriftSolution::eval_dx(double t, double x) const {
    if (!(t > 0.0)) throw std::invalid_argument("ConstDriftSolution::eval_dx: t must be positive");
    return t < t_cross ? image_dx(t, x) : spectral_dx(t, x);
}

}  // namespace fpt
