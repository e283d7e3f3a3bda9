#pragma once

// Transforms of the moving-boundary first-passage problem onto the unit
// space-time square: original problem -> tilde problem on [0,Ttilde] ->
// time-changed problem on [0,T] x (0,1) -> unit-time problem on (0,1)^2.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace fpt {

using TimeStateField = std::function<double(double, double)>;
using Curve = std::function<double(double)>;

// How the SDE noise amplitude enters the rescaled equation. PaperCompat
// keeps the published substitution (drift carried over unchanged,
// Ttilde = sigma*tau/2); SdeConsistent makes the generator of
// dX = mu dt + sigma dW match the unit-diffusion form (drift 2*mu/sigma^2,
// Ttilde = sigma^2*tau/2). The two agree for sigma = 1 up to the drift
// factor 2.
enum class Convention { PaperCompat, SdeConsistent };

inline const char* to_string(Convention c) {
    return c == Convention::PaperCompat ? "paper-compat" : "sde-consistent";
}

// Structural descriptor of the boundary pair; analytic fast paths key off
// this, never off numerical pattern matching.
struct BoundaryShape {
    enum class Kind { General, Constant, CollapsingLinear };
    Kind kind = Kind::General;
    // CollapsingLinear: alpha(t) = beta0*t/(2*T0), beta(t) = beta0*(1 - t/(2*T0)).
    double beta0 = 0.0;
    double T0 = 0.0;
};

// Original model: dX = mu dt + sigma dW, absorbing boundaries alpha < beta,
// horizon tau. mu_x is the closed-form spatial derivative of mu, needed
// downstream for the weak forcing term.
struct FPProblem {
    TimeStateField mu;
    TimeStateField mu_x;
    Curve alpha, beta;
    Curve alpha_dot, beta_dot;
    double sigma = 1.0;
    double tau = 1.0;
    BoundaryShape shape;

    void validate() const {
        if (!(sigma > 0.0)) throw std::invalid_argument("FPProblem: sigma must be positive");
        if (!(tau > 0.0)) throw std::invalid_argument("FPProblem: tau must be positive");
        const int samples = 1000;
        for (int i = 0; i <= samples; ++i) {
            double t = tau * static_cast<double>(i) / samples;
            if (!(alpha(t) < beta(t)))
                throw std::invalid_argument("FPProblem: alpha >= beta at t=" + std::to_string(t));
        }
    }
};

// Time-reversed problem on the fixed horizon [0, Ttilde] with unit
// second-derivative coefficient. timescale maps tilde-time back to original
// time: original t = timescale * (Ttilde - ttilde).
struct TildeProblem {
    Curve a, b;
    Curve a_dot, b_dot;
    TimeStateField vtilde;
    TimeStateField vtilde_x;
    double Ttilde = 0.0;
    double timescale = 0.0;
    BoundaryShape shape;  // shape of the original boundaries
};

inline TildeProblem to_tilde(const FPProblem& p, Convention conv) {
    p.validate();
    const double s = p.sigma;
    const double c = conv == Convention::PaperCompat ? 2.0 / s : 2.0 / (s * s);
    const double drift_scale = conv == Convention::PaperCompat ? 1.0 : 2.0 / (s * s);
    TildeProblem tp;
    tp.Ttilde = p.tau / c;
    tp.timescale = c;
    const double Tt = tp.Ttilde;
    tp.a = [alpha = p.alpha, c, Tt](double tt) { return alpha(c * (Tt - tt)); };
    tp.b = [beta = p.beta, c, Tt](double tt) { return beta(c * (Tt - tt)); };
    tp.a_dot = [ad = p.alpha_dot, c, Tt](double tt) { return -c * ad(c * (Tt - tt)); };
    tp.b_dot = [bd = p.beta_dot, c, Tt](double tt) { return -c * bd(c * (Tt - tt)); };
    tp.vtilde = [mu = p.mu, c, Tt, drift_scale](double tt, double x) {
        return drift_scale * mu(c * (Tt - tt), x);
    };
    tp.vtilde_x = [mux = p.mu_x, c, Tt, drift_scale](double tt, double x) {
        return drift_scale * mux(c * (Tt - tt), x);
    };
    tp.shape = p.shape;
    const int samples = 1000;
    for (int i = 0; i <= samples; ++i) {
        double tt = tp.Ttilde * static_cast<double>(i) / samples;
        if (!(tp.a(tt) < tp.b(tt)))
            throw std::invalid_argument("to_tilde: boundaries cross on [0,Ttilde]");
    }
    return tp;
}

// theta solves theta'(t) = (b(theta) - a(theta))^2, theta(0) = 0, and T is
// the unique time with theta(T) = Ttilde. Three representations: affine
// (constant boundaries), the closed form for linear collapsing boundaries,
// and a monotone cubic Hermite spline over accepted integrator steps.
class TimeChange {
public:
    struct Affine {
        double c;
    };
    // theta(t) = Ttilde - (beta0 - g0/(1 - 2*k*g0*t))/(2*k) where
    // g(t) = b(theta)-a(theta) satisfies g' = 2*k*g^2, g(0) = g0.
    struct Rational {
        double k, g0, beta0, Ttilde;
    };
    struct Spline {
        std::vector<double> t, y, d;  // nodes, theta values, theta' values
    };

    double T = 0.0;
    double Ttilde = 0.0;

    static TimeChange affine(double c, double Ttilde) {
        TimeChange tc;
        tc.rep_ = Affine{c};
        tc.Ttilde = Ttilde;
        tc.T = Ttilde / c;
        return tc;
    }

    static TimeChange rational(double k, double g0, double beta0, double Ttilde) {
        TimeChange tc;
        tc.rep_ = Rational{k, g0, beta0, Ttilde};
        tc.Ttilde = Ttilde;
        tc.T = Ttilde / (beta0 * g0);
        return tc;
    }

    static TimeChange spline(Spline s, double Ttilde) {
        TimeChange tc;
        tc.T = s.t.back();
        tc.Ttilde = Ttilde;
        tc.rep_ = std::move(s);
        return tc;
    }

    double value(double t) const {
        if (const auto* a = std::get_if<Affine>(&rep_)) return a->c * t;
        if (const auto* r = std::get_if<Rational>(&rep_)) {
            double g = r->g0 / (1.0 - 2.0 * r->k * r->g0 * t);
            return r->Ttilde - (r->beta0 - g) / (2.0 * r->k);
        }
        return spline_eval(std::get<Spline>(rep_), t);
    }

    double deriv(double t) const {
        if (const auto* a = std::get_if<Affine>(&rep_)) return a->c;
        if (const auto* r = std::get_if<Rational>(&rep_)) {
            double g = r->g0 / (1.0 - 2.0 * r->k * r->g0 * t);
            return g * g;
        }
        return spline_eval_deriv(std::get<Spline>(rep_), t);
    }

    double inverse(double ttilde) const {
        if (ttilde < -1e-14 || ttilde > Ttilde * (1.0 + 1e-12))
            throw std::invalid_argument("TimeChange::inverse: argument outside [0,Ttilde]");
        if (const auto* a = std::get_if<Affine>(&rep_)) return ttilde / a->c;
        if (const auto* r = std::get_if<Rational>(&rep_)) {
            double g = r->beta0 - 2.0 * r->k * (r->Ttilde - ttilde);
            return (1.0 - r->g0 / g) / (2.0 * r->k * r->g0);
        }
        return spline_inverse(std::get<Spline>(rep_), ttilde);
    }

private:
    std::variant<Affine, Rational, Spline> rep_;

    static std::size_t locate(const std::vector<double>& t, double x) {
        auto it = std::upper_bound(t.begin(), t.end(), x);
        std::size_t i = static_cast<std::size_t>(it - t.begin());
        if (i == 0) return 0;
        if (i >= t.size()) return t.size() - 2;
        return i - 1;
    }

    static double spline_eval(const Spline& s, double x) {
        std::size_t i = locate(s.t, x);
        double h = s.t[i + 1] - s.t[i];
        double u = (x - s.t[i]) / h;
        double h00 = (1 + 2 * u) * (1 - u) * (1 - u), h10 = u * (1 - u) * (1 - u);
        double h01 = u * u * (3 - 2 * u), h11 = u * u * (u - 1);
        return h00 * s.y[i] + h * h10 * s.d[i] + h01 * s.y[i + 1] + h * h11 * s.d[i + 1];
    }

    static double spline_eval_deriv(const Spline& s, double x) {
        std::size_t i = locate(s.t, x);
        double h = s.t[i + 1] - s.t[i];
        double u = (x - s.t[i]) / h;
        double g00 = 6 * u * (u - 1) / h, g10 = (1 - u) * (1 - 3 * u);
        double g01 = -6 * u * (u - 1) / h, g11 = u * (3 * u - 2);
        return g00 * s.y[i] + g10 * s.d[i] + g01 * s.y[i + 1] + g11 * s.d[i + 1];
    }

    static double spline_inverse(const Spline& s, double ttilde) {
        // bracket by the monotone node values, then safeguarded Newton
        auto it = std::upper_bound(s.y.begin(), s.y.end(), ttilde);
        std::size_t i = static_cast<std::size_t>(it - s.y.begin());
        if (i == 0) return s.t.front();
        if (i >= s.y.size()) return s.t.back();
        --i;
        double lo = s.t[i], hi = s.t[i + 1];
        double x = lo + (hi - lo) * (ttilde - s.y[i]) / (s.y[i + 1] - s.y[i]);
        for (int iter = 0; iter < 100; ++iter) {
            double f = spline_eval(s, x) - ttilde;
            if (f > 0)
                hi = x;
            else
                lo = x;
            double df = spline_eval_deriv(s, x);
            double step = f / df;
            double xn = x - step;
            if (!(xn > lo && xn < hi)) xn = 0.5 * (lo + hi);
            if (std::abs(xn - x) <= 1e-15 * (1.0 + std::abs(x))) return xn;
            x = xn;
        }
        return x;
    }
};

struct TimeChangeOptions {
    double ode_tol = 1e-10;
    double max_span = 1e6;  // integration aborted past this time (nearly touching boundaries)
};

namespace detail {

// Dormand-Prince 5(4) on the scalar ODE theta' = (b(theta)-a(theta))^2 with
// event detection for theta = Ttilde. Step size additionally capped so that
// theta advances at most Ttilde/2000 per step, keeping the cubic Hermite
// dense output well below ode_tol.
inline TimeChange integrate_time_change(const TildeProblem& tp, const TimeChangeOptions& opt) {
    auto rhs = [&tp](double theta) {
        double w = tp.b(theta) - tp.a(theta);
        return w * w;
    };
    const double Tt = tp.Ttilde;
    TimeChange::Spline sp;
    double t = 0.0, y = 0.0, d = rhs(0.0);
    sp.t.push_back(t);
    sp.y.push_back(y);
    sp.d.push_back(d);
    double h = std::min(Tt / (2000.0 * d), 1e-4 / d);
    const double cap_dtheta = Tt / 2000.0;

    static const double A21 = 1.0 / 5;
    static const double A31 = 3.0 / 40, A32 = 9.0 / 40;
    static const double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9;
    static const double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561,
                        A54 = -212.0 / 729;
    static const double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247,
                        A64 = 49.0 / 176, A65 = -5103.0 / 18656;
    static const double B1 = 35.0 / 384, B3 = 500.0 / 1113, B4 = 125.0 / 192, B5 = -2187.0 / 6784,
                        B6 = 11.0 / 84;
    static const double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920,
                        E5 = -17253.0 / 339200, E6 = 22.0 / 525, E7 = -1.0 / 40;

    double k1 = d;
    while (y < Tt) {
        if (t > opt.max_span)
            throw std::runtime_error(
                "solve_time_change: theta did not reach Ttilde within max_span "
                "(nearly touching boundaries?)");
        h = std::min(h, cap_dtheta / std::max(k1, 1e-300));
        double k2 = rhs(y + h * A21 * k1);
        double k3 = rhs(y + h * (A31 * k1 + A32 * k2));
        double k4 = rhs(y + h * (A41 * k1 + A42 * k2 + A43 * k3));
        double k5 = rhs(y + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4));
        double k6 = rhs(y + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5));
        double ynew = y + h * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6);
        double k7 = rhs(ynew);
        double err = std::abs(h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7));
        double sc = opt.ode_tol * (1.0 + std::abs(ynew));
        if (err <= sc) {
            t += h;
            y = ynew;
            k1 = k7;
            sp.t.push_back(t);
            sp.y.push_back(y);
            sp.d.push_back(k7);
        }
        double fac = err > 0 ? 0.9 * std::pow(sc / err, 0.2) : 2.0;
        h *= std::clamp(fac, 0.2, 2.0);
    }

    // event: cut the last step at theta = Ttilde by Newton on the Hermite piece
    TimeChange provisional = TimeChange::spline(sp, Tt);
    double Tev = provisional.inverse(Tt);
    while (!sp.t.empty() && sp.t.back() >= Tev) {
        sp.t.pop_back();
        sp.y.pop_back();
        sp.d.pop_back();
    }
    sp.t.push_back(Tev);
    sp.y.push_back(Tt);
    sp.d.push_back(rhs(Tt));
    return TimeChange::spline(std::move(sp), Tt);
}

}  // namespace detail

inline TimeChange solve_time_change(const TildeProblem& tp, TimeChangeOptions opt = {}) {
    using Kind = BoundaryShape::Kind;
    switch (tp.shape.kind) {
        case Kind::Constant: {
            double w = tp.b(0.0) - tp.a(0.0);
            return TimeChange::affine(w * w, tp.Ttilde);
        }
        case Kind::CollapsingLinear: {
            double beta0 = tp.shape.beta0;
            double k = beta0 * tp.timescale / (2.0 * tp.shape.T0);
            double g0 = beta0 - 2.0 * k * tp.Ttilde;
            if (!(g0 > 0.0))
                throw std::invalid_argument(
                    "solve_time_change: collapsing boundaries meet before the horizon");
            return TimeChange::rational(k, g0, beta0, tp.Ttilde);
        }
        case Kind::General:
            return detail::integrate_time_change(tp, opt);
    }
    throw std::logic_error("unreachable");
}

// Rectangular-domain problem data. v lives on [0,T] x [0,1]; vhat is its
// unit-time pullback vhat(t,x) = v(t*T, x).
struct TransformedProblem {
    TimeStateField v, v_x;
    TimeStateField vhat, vhat_x;
    double T = 0.0;
    double v0 = 0.0;
};

inline TransformedProblem transform_drift(const TildeProblem& tp, const TimeChange& tc) {
    auto tcp = std::make_shared<TimeChange>(tc);
    TransformedProblem out;
    out.T = tc.T;
    out.v = [tp, tcp](double t, double x) {
        double th = tcp->value(t);
        double A = tp.a(th), B = tp.b(th);
        double xi = (1.0 - x) * A + x * B;
        double bterm = (1.0 - x) * tp.a_dot(th) + x * tp.b_dot(th);
        return (B - A) * (tp.vtilde(th, xi) + bterm);
    };
    out.v_x = [tp, tcp](double t, double x) {
        double th = tcp->value(t);
        double A = tp.a(th), B = tp.b(th);
        double w = B - A;
        double xi = (1.0 - x) * A + x * B;
        return w * (tp.vtilde_x(th, xi) * w + (tp.b_dot(th) - tp.a_dot(th)));
    };
    const double T = out.T;
    out.vhat = [v = out.v, T](double t, double x) { return v(t * T, x); };
    out.vhat_x = [vx = out.v_x, T](double t, double x) { return vx(t * T, x); };
    out.v0 = out.v(0.0, 0.0);
    return out;
}

// Inverse of (t,x) -> (theta(t), (1-x)a+x b): physical coordinates of a
// point in the moving tilde-domain.
inline std::pair<double, double> pullback_point(const TimeChange& tc, const TildeProblem& tp,
                                                double ttilde, double xtilde) {
    if (ttilde < 0.0 || ttilde > tp.Ttilde * (1.0 + 1e-12))
        throw std::invalid_argument("pullback_point: time outside [0,Ttilde]");
    double A = tp.a(ttilde), B = tp.b(ttilde);
    const double tol = 1e-12 * (1.0 + std::abs(B - A));
    if (xtilde < A - tol || xtilde > B + tol)
        throw std::invalid_argument("pullback_point: state outside the moving domain");
    return {tc.inverse(ttilde), (xtilde - A) / (B - A)};
}

}  // namespace fpt
