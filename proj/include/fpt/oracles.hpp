#pragma once

// Independent cross-checks for the minimal-residual solver: a Crank-Nicolson
// finite-difference solver on the rectangular domain and an Euler-Maruyama
// Monte Carlo estimator of the first-hitting probability on the original
// moving-boundary problem.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "fpt/fem.hpp"
#include "fpt/geometry.hpp"
#include "fpt/models.hpp"
#include "fpt/refsol.hpp"

namespace fpt {

struct CNConfig {
    int nx = 256;
    int nt = 256;

    void validate() const {
        if (nx < 4 || nt < 4) throw std::invalid_argument("CNConfig: nx, nt must be >= 4");
    }
};

struct CNResult {
    int nx = 0, nt = 0;
    Eigen::MatrixXd u;  // (nt+1) x (nx+1), row m = unit time m/nt

    double eval(double t, double x) const {
        t = std::clamp(t, 0.0, 1.0);
        x = std::clamp(x, 0.0, 1.0);
        int m = std::min(static_cast<int>(t * nt), nt - 1);
        int j = std::min(static_cast<int>(x * nx), nx - 1);
        double s = t * nt - m, y = x * nx - j;
        return (1 - s) * ((1 - y) * u(m, j) + y * u(m, j + 1)) +
               s * ((1 - y) * u(m + 1, j) + y * u(m + 1, j + 1));
    }
};

// Crank-Nicolson in unit time for du/dt = T (d2u/dx2 + vhat du/dx) + g with
// centered differences and a Thomas solve per step. The first step is split
// into two damped (implicit Euler) half steps so the incompatible corner
// data cannot excite the undamped high-frequency modes of the averaged
// scheme. homogeneous=false solves the full problem (boundary values 1 and
// 0, no forcing); homogeneous=true solves the residual problem (zero
// boundary values, forcing g).
inline CNResult cn_solve(const TimeStateField& vhat, double T, CNConfig cfg, bool homogeneous,
                         const TimeStateField& forcing = {}) {
    cfg.validate();
    if (homogeneous && !forcing)
        throw std::invalid_argument("cn_solve: homogeneous mode requires a forcing term");
    const int nx = cfg.nx, nt = cfg.nt;
    const double hx = 1.0 / nx, dt = 1.0 / nt;
    const double lbc = homogeneous ? 0.0 : 1.0;

    CNResult out;
    out.nx = nx;
    out.nt = nt;
    out.u.setZero(nt + 1, nx + 1);
    out.u(0, 0) = lbc;  // limit from t > 0 along the boundary

    const int dim = nx - 1;
    Eigen::VectorXd lower(dim), diag(dim), upper(dim), rhs(dim), un(dim);
    Eigen::VectorXd cp(dim), dp(dim);
    Eigen::VectorXd cur = Eigen::VectorXd::Zero(nx + 1);
    cur[0] = lbc;

    // one theta-weighted step of size h starting at time t0, in place
    auto step = [&](double t0, double h, double theta) {
        const double th = t0 + 0.5 * h;  // operator and forcing at the half step
        for (int j = 1; j < nx; ++j) {
            double v = vhat(th, j * hx);
            double diff = T / (hx * hx);
            double adv = T * v / (2.0 * hx);
            // L u = a u_{j-1} + b u_j + c u_{j+1}
            double a = diff - adv, b = -2.0 * diff, c = diff + adv;
            int i = j - 1;
            // (I - theta h L) u^+ = (I + (1-theta) h L) u + h g(th)
            lower[i] = -theta * h * a;
            diag[i] = 1.0 - theta * h * b;
            upper[i] = -theta * h * c;
            double um = cur[j - 1], uc = cur[j], up = cur[j + 1];
            rhs[i] = uc + (1.0 - theta) * h * (a * um + b * uc + c * up);
            if (forcing) rhs[i] += h * forcing(th, j * hx);
            // boundary contribution of the implicit part
            if (j == 1) rhs[i] += theta * h * a * lbc;
        }
        // Thomas algorithm
        double den = diag[0];
        if (den == 0.0) throw std::runtime_error("cn_solve: singular tridiagonal system");
        cp[0] = upper[0] / den;
        dp[0] = rhs[0] / den;
        for (int i = 1; i < dim; ++i) {
            den = diag[i] - lower[i] * cp[i - 1];
            if (den == 0.0) throw std::runtime_error("cn_solve: singular tridiagonal system");
            cp[i] = upper[i] / den;
            dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / den;
        }
        un[dim - 1] = dp[dim - 1];
        for (int i = dim - 2; i >= 0; --i) un[i] = dp[i] - cp[i] * un[i + 1];
        for (int j = 1; j < nx; ++j) cur[j] = un[j - 1];
    };

    for (int m = 0; m < nt; ++m) {
        if (m == 0) {
            step(0.0, 0.5 * dt, 1.0);
            step(0.5 * dt, 0.5 * dt, 1.0);
        } else {
            step(m * dt, dt, 0.5);
        }
        out.u.row(m + 1) = cur.transpose();
        out.u(m + 1, 0) = lbc;
        out.u(m + 1, nx) = 0.0;
    }
    return out;
}

// Pointwise forcing of the residual problem, matching the weak-form load:
// g(t,x) = T (vhat(t,x) - v0) d/dx u(v0)(t T, x).
inline TimeStateField residual_forcing(const ConstDriftSolution& ref, const TimeStateField& vhat,
                                       double v0, double T) {
    return [ref, vhat, v0, T](double t, double x) {
        return T * (vhat(t, x) - v0) * ref.eval_dx(t * T, x);
    };
}

struct MCConfig {
    long paths = 200000;
    double dt = 1e-4;
    std::uint64_t seed = 1;
    bool bridge_correction = true;
    int threads = 1;

    void validate() const {
        if (paths < 1) throw std::invalid_argument("MCConfig: paths must be >= 1");
        if (!(dt > 0.0)) throw std::invalid_argument("MCConfig: dt must be positive");
        if (threads < 1) throw std::invalid_argument("MCConfig: threads must be >= 1");
    }
};

struct MCResult {
    double p = 0.0;
    double se = 0.0;
    long hits = 0;
    long paths = 0;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Deterministic normal variates: mt19937_64 + Box-Muller, independent of
// library distribution internals.
class NormalSource {
public:
    explicit NormalSource(std::uint64_t seed) : rng_(seed) {}

    double operator()() {
        if (have_) {
            have_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_ = true;
        return r * std::cos(a);
    }

    double uniform() {
        return (rng_() >> 11) * 0x1.0p-53;  // [0,1) with 53 random bits
    }

private:
    std::mt19937_64 rng_;
    double spare_ = 0.0;
    bool have_ = false;
};

}  // namespace detail

// Euler-Maruyama estimate of P[lower-boundary hit before min(tau, upper hit)]
// for the original moving-boundary diffusion. Paths are simulated in fixed
// chunks of 1024 with chunk-derived seeds, so the estimate is bit-identical
// for any thread count.
inline MCResult mc_first_hit(const FPProblem& p, double y, MCConfig cfg) {
    cfg.validate();
    p.validate();
    if (!(y >= p.alpha(0.0) && y <= p.beta(0.0)))
        throw std::invalid_argument("mc_first_hit: start state outside the boundary interval");

    constexpr long kChunk = 1024;
    const long nchunks = (cfg.paths + kChunk - 1) / kChunk;
    const double sig = p.sigma, dt = cfg.dt, sdt = sig * std::sqrt(dt);
    const long nsteps = static_cast<long>(std::ceil(p.tau / dt));

    // Boundary values and step data are identical across paths; tabulating
    // them once removes two function calls from every time step.
    std::vector<double> grid_t(static_cast<std::size_t>(nsteps) + 1);
    std::vector<double> grid_a(static_cast<std::size_t>(nsteps) + 1);
    std::vector<double> grid_b(static_cast<std::size_t>(nsteps) + 1);
    std::vector<double> step_h(static_cast<std::size_t>(nsteps));
    std::vector<double> step_s(static_cast<std::size_t>(nsteps));  // sigma sqrt(h)
    for (long s = 0; s <= nsteps; ++s) {
        double t = std::min(static_cast<double>(s) * dt, p.tau);
        grid_t[static_cast<std::size_t>(s)] = t;
        grid_a[static_cast<std::size_t>(s)] = p.alpha(t);
        grid_b[static_cast<std::size_t>(s)] = p.beta(t);
    }
    for (long s = 0; s < nsteps; ++s) {
        double h = grid_t[static_cast<std::size_t>(s) + 1] - grid_t[static_cast<std::size_t>(s)];
        step_h[static_cast<std::size_t>(s)] = h;
        step_s[static_cast<std::size_t>(s)] = h == dt ? sdt : sig * std::sqrt(h);
    }
    // A bridge crossing probability exp(arg) below ~1e-16 cannot change the
    // hit flag, so the exponential (and the uniform draw) is skipped.
    constexpr double kNegligibleLogProb = -37.0;

    auto run_chunk = [&](long chunk) -> long {
        std::uint64_t state = cfg.seed + 0x632be59bd9b4e019ull * static_cast<std::uint64_t>(chunk);
        detail::NormalSource normal(detail::splitmix64(state));
        const long count = std::min(kChunk, cfg.paths - chunk * kChunk);
        long hits = 0;
        for (long path = 0; path < count; ++path) {
            double x = y;
            if (x <= grid_a[0]) {
                ++hits;
                continue;
            }
            if (x >= grid_b[0]) continue;
            bool absorbed_lower = false, done = false;
            for (long step = 0; step < nsteps && !done; ++step) {
                const std::size_t s = static_cast<std::size_t>(step);
                const double h = step_h[s];
                const double al = grid_a[s], be = grid_b[s];
                const double aln = grid_a[s + 1], ben = grid_b[s + 1];
                double xn = x + p.mu(grid_t[s], x) * h + step_s[s] * normal();
                if (xn <= aln) {
                    absorbed_lower = true;
                    done = true;
                } else if (xn >= ben) {
                    done = true;
                } else if (cfg.bridge_correction) {
                    // Brownian-bridge crossing probabilities between grid times
                    double argl = -2.0 * (x - al) * (xn - aln) / (sig * sig * h);
                    if (argl > kNegligibleLogProb && normal.uniform() < std::exp(argl)) {
                        absorbed_lower = true;
                        done = true;
                    } else {
                        double argu = -2.0 * (be - x) * (ben - xn) / (sig * sig * h);
                        if (argu > kNegligibleLogProb && normal.uniform() < std::exp(argu))
                            done = true;
                    }
                }
                x = xn;
            }
            if (absorbed_lower) ++hits;
        }
        return hits;
    };

    long hits = 0;
    if (cfg.threads <= 1) {
        for (long c = 0; c < nchunks; ++c) hits += run_chunk(c);
    } else {
        std::vector<long> partial(static_cast<std::size_t>(cfg.threads), 0);
        std::vector<std::thread> workers;
        for (int w = 0; w < cfg.threads; ++w)
            workers.emplace_back([&, w] {
                long acc = 0;
                for (long c = w; c < nchunks; c += cfg.threads) acc += run_chunk(c);
                partial[static_cast<std::size_t>(w)] = acc;
            });
        for (auto& th : workers) th.join();
        for (long acc : partial) hits += acc;
    }

    MCResult out;
    out.hits = hits;
    out.paths = cfg.paths;
    out.p = static_cast<double>(hits) / static_cast<double>(cfg.paths);
    out.se = std::sqrt(out.p * (1.0 - out.p) / static_cast<double>(cfg.paths));
    return out;
}

// Full pipeline: residual solve plus reference solution, evaluated at the
// transformed image of the requested start state at the final time.
inline double first_hitting_prob(const ModelFamily& m, const std::vector<double>& rho, double y,
                                 int n = 64, Convention conv = Convention::PaperCompat) {
    auto inst = instantiate(m, rho, conv);
    double a = inst.tilde.a(inst.tilde.Ttilde), b = inst.tilde.b(inst.tilde.Ttilde);
    if (!(y >= a && y <= b))
        throw std::invalid_argument("first_hitting_prob: start state outside the initial interval");
    double xstar = (y - a) / (b - a);
    CoeffGrid e = solve_transformed(inst.prob, inst.ref, Mesh(n));
    return e.eval(1.0, xstar) + inst.ref.eval(inst.prob.T, xstar);
}

}  // namespace fpt
