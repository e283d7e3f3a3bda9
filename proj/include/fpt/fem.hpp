#pragma once

// Space-time minimal residual discretization on the unit square. Trial space:
// continuous piecewise bilinears on a uniform n x n tensor mesh with the
// x-boundary columns removed. Test space: time-discontinuous piecewise
// linears tensorized with continuous piecewise linears in x. The discrete
// solution minimizes ||B w - f||_{Yh'}^2 + ||w(0,.)||_{L2}^2, solved through
// the Schur complement (B^T As^-1 B + C) w = B^T As^-1 f.

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "fpt/geometry.hpp"
#include "fpt/refsol.hpp"

namespace fpt {

struct Mesh {
    int n = 2;

    explicit Mesh(int n_) : n(n_) {
        if (n < 2) throw std::invalid_argument("Mesh: n must be >= 2");
    }
    double h() const { return 1.0 / n; }
    int dim_trial() const { return (n + 1) * (n - 1); }
    int dim_test() const { return 2 * n * (n - 1); }
    // it in [0,n], ix in [1,n-1]
    int trial_dof(int it, int ix) const { return it * (n - 1) + ix - 1; }
    // slab k in [0,n), local time node l in {0,1}, ix in [1,n-1]
    int test_dof(int k, int l, int ix) const { return (2 * k + l) * (n - 1) + ix - 1; }
};

namespace quad {

struct Rule {
    std::vector<double> pts, wts;  // on [0,1]
};

inline const Rule& gauss(int order) {
    static const Rule g3 = [] {
        Rule r;
        const double a = std::sqrt(3.0 / 5.0);
        for (double xi : {-a, 0.0, a}) r.pts.push_back(0.5 * (1.0 + xi));
        for (double w : {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0}) r.wts.push_back(0.5 * w);
        return r;
    }();
    static const Rule g6 = [] {
        Rule r;
        const double xs[] = {0.2386191860831969, 0.6612093864662645, 0.9324695142031521};
        const double ws[] = {0.4679139345726910, 0.3607615730481386, 0.1713244923791704};
        for (int i = 2; i >= 0; --i) r.pts.push_back(0.5 * (1.0 - xs[i]));
        for (int i = 0; i < 3; ++i) r.pts.push_back(0.5 * (1.0 + xs[i]));
        for (int i = 2; i >= 0; --i) r.wts.push_back(0.5 * ws[i]);
        for (int i = 0; i < 3; ++i) r.wts.push_back(0.5 * ws[i]);
        return r;
    }();
    if (order == 3) return g3;
    if (order == 6) return g6;
    throw std::invalid_argument("quad::gauss: only orders 3 and 6 are provided");
}

}  // namespace quad

struct SaddleSystem {
    Mesh mesh{2};
    double T = 1.0;
    double lambda = 0.0;
    double vmax = 0.0;  // max |vhat| seen at quadrature points
    Eigen::SparseMatrix<double> As;  // test x test, SPD
    Eigen::SparseMatrix<double> B;   // test x trial
    Eigen::SparseMatrix<double> C;   // trial x trial, initial-trace Gram
    Eigen::VectorXd f;               // test-space load
};

struct CoeffGrid {
    Mesh mesh{2};
    Eigen::VectorXd values;

    // bilinear evaluation; x-boundary columns are implicitly zero
    double eval(double t, double x) const {
        const int n = mesh.n;
        t = std::clamp(t, 0.0, 1.0);
        x = std::clamp(x, 0.0, 1.0);
        int k = std::min(static_cast<int>(t * n), n - 1);
        int j = std::min(static_cast<int>(x * n), n - 1);
        double s = t * n - k, y = x * n - j;
        auto nodal = [&](int it, int ix) -> double {
            if (ix <= 0 || ix >= n) return 0.0;
            return values[mesh.trial_dof(it, ix)];
        };
        return (1 - s) * ((1 - y) * nodal(k, j) + y * nodal(k, j + 1)) +
               s * ((1 - y) * nodal(k + 1, j) + y * nodal(k + 1, j + 1));
    }
};

// Coercivity shift policy: no shift while the sufficient condition holds
// with margin, otherwise lambda = T vmax^2/4 + 1.
inline double choose_lambda(double T, double vmax) {
    if (T * vmax / kPi < 0.9) return 0.0;
    return T * vmax * vmax / 4.0 + 1.0;
}

inline SaddleSystem assemble(const TimeStateField& vhat, double T, Mesh mesh, double lambda,
                             bool strict = false) {
    if (lambda < 0.0) throw std::invalid_argument("assemble: lambda must be >= 0");
    const int n = mesh.n;
    const double h = mesh.h();
    const auto& g = quad::gauss(3);
    const int nq = static_cast<int>(g.pts.size());

    SaddleSystem sys;
    sys.mesh = mesh;
    sys.T = T;
    sys.lambda = lambda;

    std::vector<Eigen::Triplet<double>> tA, tB, tC;
    tA.reserve(static_cast<std::size_t>(n) * n * 16);
    tB.reserve(static_cast<std::size_t>(n) * n * 16);

    double vmax = 0.0;
    for (int k = 0; k < n; ++k) {
        for (int j = 0; j < n; ++j) {
            double Bl[4][4] = {}, Al[4][4] = {};
            for (int qs = 0; qs < nq; ++qs) {
                for (int qy = 0; qy < nq; ++qy) {
                    double s = g.pts[qs], y = g.pts[qy];
                    double w = g.wts[qs] * g.wts[qy] * h * h;
                    double t = (k + s) * h, x = (j + y) * h;
                    double v = vhat(t, x);
                    vmax = std::max(vmax, std::abs(v));
                    // local index 2*a+b: a time node, b space node
                    double val[4], dt[4], dx[4];
                    for (int a = 0; a < 2; ++a)
                        for (int b = 0; b < 2; ++b) {
                            double S = a ? s : 1 - s, Y = b ? y : 1 - y;
                            double dS = a ? 1.0 : -1.0, dY = b ? 1.0 : -1.0;
                            val[2 * a + b] = S * Y;
                            dt[2 * a + b] = dS * Y / h;
                            dx[2 * a + b] = S * dY / h;
                        }
                    for (int i = 0; i < 4; ++i) {
                        for (int jj = 0; jj < 4; ++jj) {
                            Bl[i][jj] += w * (dt[jj] * val[i] + T * dx[jj] * dx[i] -
                                              T * v * dx[jj] * val[i] + lambda * val[jj] * val[i]);
                            Al[i][jj] +=
                                w * (T * dx[jj] * dx[i] -
                                     T * 0.5 * v * (dx[jj] * val[i] + val[jj] * dx[i]) +
                                     lambda * val[jj] * val[i]);
                        }
                    }
                }
            }
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b) {
                    int ix_i = j + b;
                    if (ix_i == 0 || ix_i == n) continue;
                    int ti = mesh.test_dof(k, a, ix_i);
                    for (int a2 = 0; a2 < 2; ++a2)
                        for (int b2 = 0; b2 < 2; ++b2) {
                            int ix_j = j + b2;
                            if (ix_j == 0 || ix_j == n) continue;
                            tA.emplace_back(ti, mesh.test_dof(k, a2, ix_j), Al[2 * a + b][2 * a2 + b2]);
                            tB.emplace_back(ti, mesh.trial_dof(k + a2, ix_j), Bl[2 * a + b][2 * a2 + b2]);
                        }
                }
        }
    }
    sys.vmax = vmax;
    if (strict && lambda == 0.0 && T * vmax / kPi >= 1.0)
        throw std::invalid_argument("assemble: coercivity condition violated with lambda=0");

    // initial trace Gram: 1D P1 mass matrix over the interior x nodes
    for (int ix = 1; ix < n; ++ix) {
        tC.emplace_back(mesh.trial_dof(0, ix), mesh.trial_dof(0, ix), 2.0 * h / 3.0);
        if (ix + 1 < n) {
            tC.emplace_back(mesh.trial_dof(0, ix), mesh.trial_dof(0, ix + 1), h / 6.0);
            tC.emplace_back(mesh.trial_dof(0, ix + 1), mesh.trial_dof(0, ix), h / 6.0);
        }
    }

    sys.As.resize(mesh.dim_test(), mesh.dim_test());
    sys.B.resize(mesh.dim_test(), mesh.dim_trial());
    sys.C.resize(mesh.dim_trial(), mesh.dim_trial());
    sys.As.setFromTriplets(tA.begin(), tA.end());
    sys.B.setFromTriplets(tB.begin(), tB.end());
    sys.C.setFromTriplets(tC.begin(), tC.end());
    sys.f = Eigen::VectorXd::Zero(mesh.dim_test());
    return sys;
}

// Generic load assembly for functionals z -> integral of c0 z + c1 dz/dx,
// with (c0, c1) supplied pointwise. The first time slab uses the 6-point
// tensor Gauss rule (steep layers of the reference solution near t=0).
inline Eigen::VectorXd assemble_load(
    const Mesh& mesh, const std::function<std::pair<double, double>(double, double)>& density) {
    const int n = mesh.n;
    const double h = mesh.h();
    Eigen::VectorXd f = Eigen::VectorXd::Zero(mesh.dim_test());
    for (int k = 0; k < n; ++k) {
        const auto& g = quad::gauss(k == 0 ? 6 : 3);
        const int nq = static_cast<int>(g.pts.size());
        for (int j = 0; j < n; ++j) {
            double fl[4] = {};
            for (int qs = 0; qs < nq; ++qs)
                for (int qy = 0; qy < nq; ++qy) {
                    double s = g.pts[qs], y = g.pts[qy];
                    double w = g.wts[qs] * g.wts[qy] * h * h;
                    auto [c0, c1] = density((k + s) * h, (j + y) * h);
                    for (int a = 0; a < 2; ++a)
                        for (int b = 0; b < 2; ++b) {
                            double S = a ? s : 1 - s, Y = b ? y : 1 - y;
                            double dY = b ? 1.0 : -1.0;
                            fl[2 * a + b] += w * (c0 * S * Y + c1 * S * dY / h);
                        }
                }
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b) {
                    int ix = j + b;
                    if (ix == 0 || ix == n) continue;
                    f[mesh.test_dof(k, a, ix)] += fl[2 * a + b];
                }
        }
    }
    return f;
}

// Forcing of the homogeneous problem in integration-by-parts form: only
// values of the constant-drift reference are needed, batched per time slab
// through eval_grid.
inline void assemble_rhs(SaddleSystem& sys, const ConstDriftSolution& ref,
                         const TimeStateField& vhat, const TimeStateField& vhat_x, double v0,
                         int quad_order = 3) {
    const Mesh& mesh = sys.mesh;
    const int n = mesh.n;
    const double h = mesh.h(), T = sys.T, lambda = sys.lambda;
    auto slab_order = [&](int k) { return k == 0 ? 6 : quad_order; };

    // cache reference-solution values on the tensor quadrature grid, slab by slab
    std::vector<Eigen::MatrixXd> uref(static_cast<std::size_t>(n));
    std::vector<double> xs3, xs6;
    for (int j = 0; j < n; ++j) {
        for (double p : quad::gauss(3).pts) xs3.push_back((j + p) * h);
        for (double p : quad::gauss(6).pts) xs6.push_back((j + p) * h);
    }
    for (int k = 0; k < n; ++k) {
        const auto& g = quad::gauss(slab_order(k));
        std::vector<double> times;
        for (double p : g.pts) times.push_back((k + p) * h * T);  // physical time
        uref[static_cast<std::size_t>(k)] = ref.eval_grid(times, slab_order(k) == 6 ? xs6 : xs3);
    }

    Eigen::VectorXd f = Eigen::VectorXd::Zero(mesh.dim_test());
    for (int k = 0; k < n; ++k) {
        const auto& g = quad::gauss(slab_order(k));
        const int nq = static_cast<int>(g.pts.size());
        for (int j = 0; j < n; ++j) {
            double fl[4] = {};
            for (int qs = 0; qs < nq; ++qs)
                for (int qy = 0; qy < nq; ++qy) {
                    double s = g.pts[qs], y = g.pts[qy];
                    double w = g.wts[qs] * g.wts[qy] * h * h;
                    double t = (k + s) * h, x = (j + y) * h;
                    double u = uref[static_cast<std::size_t>(k)](qs, j * nq + qy);
                    double shift = lambda > 0.0 ? std::exp(-lambda * t) : 1.0;
                    double c0 = -T * shift * u * vhat_x(t, x);
                    double c1 = -T * shift * u * (vhat(t, x) - v0);
                    for (int a = 0; a < 2; ++a)
                        for (int b = 0; b < 2; ++b) {
                            double S = a ? s : 1 - s, Y = b ? y : 1 - y;
                            double dY = b ? 1.0 : -1.0;
                            fl[2 * a + b] += w * (c0 * S * Y + c1 * S * dY / h);
                        }
                }
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b) {
                    int ix = j + b;
                    if (ix == 0 || ix == n) continue;
                    f[mesh.test_dof(k, a, ix)] += fl[2 * a + b];
                }
        }
    }
    sys.f = std::move(f);
}

enum class SolverMode { Auto, Dense, Cg };

namespace detail {

template <class Op>
Eigen::VectorXd conjugate_gradient(const Op& apply, const Eigen::VectorXd& rhs, double tol,
                                   int max_iters) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(rhs.size());
    double rhs_norm = rhs.norm();
    if (rhs_norm == 0.0) return x;
    Eigen::VectorXd r = rhs, p = r;
    double rr = r.squaredNorm();
    for (int it = 0; it < max_iters; ++it) {
        Eigen::VectorXd Ap = apply(p);
        double pAp = p.dot(Ap);
        if (!(pAp > 0.0))
            throw std::runtime_error("solve_mrm: Schur complement not positive definite");
        double alpha = rr / pAp;
        x += alpha * p;
        r -= alpha * Ap;
        double rr_new = r.squaredNorm();
        if (std::sqrt(rr_new) <= tol * rhs_norm) return x;
        p = r + (rr_new / rr) * p;
        rr = rr_new;
    }
    throw std::runtime_error("solve_mrm: conjugate gradient did not converge");
}

}  // namespace detail

inline CoeffGrid solve_mrm(const SaddleSystem& sys, SolverMode mode = SolverMode::Auto,
                           double cg_tol = 1e-11) {
    const Mesh& mesh = sys.mesh;
    Eigen::VectorXd w;
    const bool dense = mode == SolverMode::Dense || (mode == SolverMode::Auto && mesh.n <= 8);
    if (dense) {
        Eigen::MatrixXd Asd = Eigen::MatrixXd(sys.As);
        Eigen::LLT<Eigen::MatrixXd> llt(Asd);
        if (llt.info() != Eigen::Success)
            throw std::runtime_error("solve_mrm: As is not positive definite");
        Eigen::MatrixXd Bd = Eigen::MatrixXd(sys.B);
        Eigen::MatrixXd S = Bd.transpose() * llt.solve(Bd) + Eigen::MatrixXd(sys.C);
        Eigen::VectorXd rhs = Bd.transpose() * llt.solve(sys.f);
        w = Eigen::LDLT<Eigen::MatrixXd>(S).solve(rhs);
    } else {
        Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(sys.As);
        if (llt.info() != Eigen::Success)
            throw std::runtime_error("solve_mrm: As is not positive definite");
        Eigen::VectorXd rhs = sys.B.transpose() * llt.solve(sys.f);
        auto apply = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
            return sys.B.transpose() * llt.solve(sys.B * x) + sys.C * x;
        };
        w = detail::conjugate_gradient(apply, rhs, cg_tol, 50 * mesh.dim_trial() + 1000);
    }
    if (sys.lambda > 0.0) {
        const double h = mesh.h();
        for (int it = 0; it <= mesh.n; ++it) {
            double e = std::exp(sys.lambda * it * h);
            for (int ix = 1; ix < mesh.n; ++ix) w[mesh.trial_dof(it, ix)] *= e;
        }
    }
    return CoeffGrid{mesh, std::move(w)};
}

// Assembles and solves the residual problem for one transformed model.
//
// Shift selection: since integral of vhat dw/dx w dx equals -1/2 integral of
// d/dx vhat w^2 dx on the trial/test spaces, the symmetrized spatial form is
// positive definite as soon as lambda >= T sup(-d/dx vhat)/2 -- in particular
// no shift at all is needed for space-independent drifts, however large. The
// bound-only policy of choose_lambda can demand shifts so large that the
// e^{lambda t} unshift destroys all accuracy, so the derivative-aware value
// is used here, with one retry at the conservative shift if the
// factorization still fails.
inline CoeffGrid solve_transformed(const TransformedProblem& tp, const ConstDriftSolution& ref,
                                   Mesh mesh, SolverMode mode = SolverMode::Auto) {
    double vmax = 0.0, vx_min = 0.0;
    const int samples = 64;
    for (int i = 0; i <= samples; ++i)
        for (int j = 0; j <= samples; ++j) {
            double t = static_cast<double>(i) / samples, x = static_cast<double>(j) / samples;
            vmax = std::max(vmax, std::abs(tp.vhat(t, x)));
            vx_min = std::min(vx_min, tp.vhat_x(t, x));
        }
    double needed = 0.5 * tp.T * std::max(0.0, -vx_min);
    double lambda = needed > 0.0 ? needed + 0.5 : 0.0;
    auto sys = assemble(tp.vhat, tp.T, mesh, lambda);
    assemble_rhs(sys, ref, tp.vhat, tp.vhat_x, tp.v0);
    try {
        return solve_mrm(sys, mode);
    } catch (const std::runtime_error&) {
        sys = assemble(tp.vhat, tp.T, mesh, choose_lambda(tp.T, vmax) + needed);
        assemble_rhs(sys, ref, tp.vhat, tp.vhat_x, tp.v0);
        return solve_mrm(sys, mode);
    }
}

// Discrete equivalent of the X-hat norm: sqrt(w^T B^T A^-1 B w + w^T C w)
// with A the space-stiffness Gram on the test space and B assembled at
// lambda = 0.
class NormSystem {
public:
    NormSystem(const TimeStateField& vhat, double T, Mesh mesh)
        : mesh_(mesh), sys_(assemble(vhat, T, mesh, 0.0)) {
        const int n = mesh.n;
        const double h = mesh.h();
        std::vector<Eigen::Triplet<double>> tA;
        // time mass (per-slab local linears) tensor 1D stiffness, closed form
        const double m[2][2] = {{h / 3.0, h / 6.0}, {h / 6.0, h / 3.0}};
        for (int k = 0; k < n; ++k)
            for (int l = 0; l < 2; ++l)
                for (int l2 = 0; l2 < 2; ++l2)
                    for (int ix = 1; ix < n; ++ix) {
                        tA.emplace_back(mesh.test_dof(k, l, ix), mesh.test_dof(k, l2, ix),
                                        m[l][l2] * 2.0 / h);
                        if (ix + 1 < n) {
                            tA.emplace_back(mesh.test_dof(k, l, ix), mesh.test_dof(k, l2, ix + 1),
                                            m[l][l2] * (-1.0 / h));
                            tA.emplace_back(mesh.test_dof(k, l, ix + 1), mesh.test_dof(k, l2, ix),
                                            m[l][l2] * (-1.0 / h));
                        }
                    }
        A_.resize(mesh.dim_test(), mesh.dim_test());
        A_.setFromTriplets(tA.begin(), tA.end());
        factor_ = std::make_shared<Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>>(A_);
        if (factor_->info() != Eigen::Success)
            throw std::runtime_error("NormSystem: stiffness Gram factorization failed");
    }

    const Mesh& mesh() const { return mesh_; }
    const SaddleSystem& system() const { return sys_; }

    double norm(const Eigen::VectorXd& w) const {
        Eigen::VectorXd r = sys_.B * w;
        double val = r.dot(factor_->solve(r)) + w.dot(sys_.C * w);
        return std::sqrt(std::max(val, 0.0));
    }

private:
    Mesh mesh_;
    SaddleSystem sys_;
    Eigen::SparseMatrix<double> A_;
    std::shared_ptr<Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>> factor_;
};

inline double xnorm(const CoeffGrid& w, const NormSystem& ns) {
    if (w.mesh.n != ns.mesh().n)
        throw std::invalid_argument("xnorm: coefficient grid and norm system mesh mismatch");
    return ns.norm(w.values);
}

// Exact nodal embedding into a nested finer mesh.
inline CoeffGrid prolong(const CoeffGrid& w, Mesh fine) {
    if (fine.n % w.mesh.n != 0)
        throw std::invalid_argument("prolong: target mesh is not a refinement");
    CoeffGrid out{fine, Eigen::VectorXd::Zero(fine.dim_trial())};
    for (int it = 0; it <= fine.n; ++it)
        for (int ix = 1; ix < fine.n; ++ix)
            out.values[fine.trial_dof(it, ix)] =
                w.eval(static_cast<double>(it) / fine.n, static_cast<double>(ix) / fine.n);
    return out;
}

}  // namespace fpt
