#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "fpt/fem.hpp"

using namespace fpt;

namespace {

// Evaluate the test-space function with the given coefficients: slab-local
// linear in time, tent functions in x, zero on the x-boundary.
double test_eval(const Mesh& mesh, const Eigen::VectorXd& c, double t, double x) {
    const int n = mesh.n;
    int k = std::min(static_cast<int>(t * n), n - 1);
    int j = std::min(static_cast<int>(x * n), n - 1);
    double s = t * n - k, y = x * n - j;
    auto coef = [&](int l, int ix) -> double {
        if (ix <= 0 || ix >= n) return 0.0;
        return c[mesh.test_dof(k, l, ix)];
    };
    return (1 - s) * ((1 - y) * coef(0, j) + y * coef(0, j + 1)) +
           s * ((1 - y) * coef(1, j) + y * coef(1, j + 1));
}

double test_eval_dx(const Mesh& mesh, const Eigen::VectorXd& c, double t, double x) {
    const int n = mesh.n;
    int k = std::min(static_cast<int>(t * n), n - 1);
    int j = std::min(static_cast<int>(x * n), n - 1);
    double s = t * n - k;
    auto coef = [&](int l, int ix) -> double {
        if (ix <= 0 || ix >= n) return 0.0;
        return c[mesh.test_dof(k, l, ix)];
    };
    return n * ((1 - s) * (coef(0, j + 1) - coef(0, j)) + s * (coef(1, j + 1) - coef(1, j)));
}

// Composite Gauss-5 on [0,1]^2 with sub x sub panels per mesh cell: exact for
// the piecewise-smooth integrands used below far beyond the tested tolerances.
template <class F>
double integrate_cells(int n, int sub, F&& f) {
    static const double gp[5] = {-0.9061798459386640, -0.5384693101056831, 0.0,
                                 0.5384693101056831, 0.9061798459386640};
    static const double gw[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                                 0.4786286704993665, 0.2369268850561891};
    double total = 0.0;
    double hp = 1.0 / (n * sub);
    for (int pt = 0; pt < n * sub; ++pt)
        for (int px = 0; px < n * sub; ++px)
            for (int a = 0; a < 5; ++a)
                for (int b = 0; b < 5; ++b) {
                    double t = (pt + 0.5 + 0.5 * gp[a]) * hp;
                    double x = (px + 0.5 + 0.5 * gp[b]) * hp;
                    total += 0.25 * gw[a] * gw[b] * hp * hp * f(t, x);
                }
    return total;
}

Eigen::VectorXd interpolant(const Mesh& mesh, const std::function<double(double, double)>& g) {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(mesh.dim_trial());
    for (int it = 0; it <= mesh.n; ++it)
        for (int ix = 1; ix < mesh.n; ++ix)
            w[mesh.trial_dof(it, ix)] =
                g(static_cast<double>(it) / mesh.n, static_cast<double>(ix) / mesh.n);
    return w;
}

}  // namespace

TEST_CASE("mesh bookkeeping") {
    Mesh m(4);
    CHECK(m.h() == doctest::Approx(0.25));
    CHECK(m.dim_trial() == 15);
    CHECK(m.dim_test() == 24);
    CHECK(m.trial_dof(0, 1) == 0);
    CHECK(m.trial_dof(4, 3) == 14);
    CHECK(m.test_dof(0, 0, 1) == 0);
    CHECK(m.test_dof(3, 1, 3) == 23);
    CHECK_THROWS(Mesh(1));
}

TEST_CASE("initial-trace Gram matrix entries") {
    Mesh m(3);
    auto sys = assemble([](double, double) { return 0.0; }, 1.0, m, 0.0);
    Eigen::MatrixXd C = Eigen::MatrixXd(sys.C);
    CHECK(C(m.trial_dof(0, 1), m.trial_dof(0, 1)) == doctest::Approx(2.0 / 9.0).epsilon(1e-14));
    CHECK(C(m.trial_dof(0, 1), m.trial_dof(0, 2)) == doctest::Approx(1.0 / 18.0).epsilon(1e-14));
    // only the t=0 trace row block is populated
    for (int it = 1; it <= m.n; ++it)
        for (int ix = 1; ix < m.n; ++ix) CHECK(C(m.trial_dof(it, ix), m.trial_dof(it, ix)) == 0.0);
}

TEST_CASE("symmetrized form for zero drift is the weighted stiffness Gram") {
    Mesh m(4);
    const double T = 2.0;
    auto sys = assemble([](double, double) { return 0.0; }, T, m, 0.0);
    Eigen::MatrixXd As = Eigen::MatrixXd(sys.As);
    CHECK((As - As.transpose()).norm() == doctest::Approx(0.0));
    // same slab, same node: T * (time mass h/3) * (tent stiffness 2/h)
    CHECK(As(m.test_dof(1, 0, 2), m.test_dof(1, 0, 2)) ==
          doctest::Approx(T * 2.0 / 3.0).epsilon(1e-14));
    CHECK(As(m.test_dof(1, 0, 2), m.test_dof(1, 1, 2)) ==
          doctest::Approx(T * 1.0 / 3.0).epsilon(1e-14));
    CHECK(As(m.test_dof(1, 0, 2), m.test_dof(1, 0, 3)) ==
          doctest::Approx(-T * 1.0 / 3.0).epsilon(1e-14));
    // no coupling across slabs
    CHECK(As(m.test_dof(0, 1, 2), m.test_dof(1, 0, 2)) == 0.0);
}

TEST_CASE("drift enters the operator linearly") {
    Mesh m(3);
    auto v1 = [](double t, double x) { return 0.4 + t * x; };
    auto v2 = [](double t, double x) { return std::sin(3.0 * t) - 0.2 * x; };
    auto v12 = [&](double t, double x) { return v1(t, x) + v2(t, x); };
    const double T = 1.3, lam = 0.7;
    Eigen::MatrixXd B0 = Eigen::MatrixXd(assemble([](double, double) { return 0.0; }, T, m, lam).B);
    Eigen::MatrixXd B1 = Eigen::MatrixXd(assemble(v1, T, m, lam).B);
    Eigen::MatrixXd B2 = Eigen::MatrixXd(assemble(v2, T, m, lam).B);
    Eigen::MatrixXd B12 = Eigen::MatrixXd(assemble(v12, T, m, lam).B);
    CHECK((B12 + B0 - B1 - B2).norm() <= 1e-13 * B12.norm());
}

TEST_CASE("operator application matches a quadrature oracle") {
    // constant drift keeps every integrand piecewise polynomial, so both the
    // assembly and the oracle are exact and must agree to rounding
    Mesh m(4);
    const double T = 1.5, lam = 0.3, v = 0.7;
    auto sys = assemble([&](double, double) { return v; }, T, m, lam);
    Eigen::VectorXd w = interpolant(m, [](double t, double x) {
        return t * x * (1.0 - x) + 0.3 * std::sin(2.0 * x + t);
    });
    CoeffGrid wg{m, w};
    Eigen::VectorXd Bw = sys.B * w;

    auto w_dt = [&](double t, double x) {
        const int n = m.n;
        int k = std::min(static_cast<int>(t * n), n - 1);
        int j = std::min(static_cast<int>(x * n), n - 1);
        double y = x * n - j;
        auto nodal = [&](int it, int ix) -> double {
            if (ix <= 0 || ix >= n) return 0.0;
            return w[m.trial_dof(it, ix)];
        };
        return n * ((1 - y) * (nodal(k + 1, j) - nodal(k, j)) +
                    y * (nodal(k + 1, j + 1) - nodal(k, j + 1)));
    };
    auto w_dx = [&](double t, double x) {
        const int n = m.n;
        int k = std::min(static_cast<int>(t * n), n - 1);
        int j = std::min(static_cast<int>(x * n), n - 1);
        double s = t * n - k;
        auto nodal = [&](int it, int ix) -> double {
            if (ix <= 0 || ix >= n) return 0.0;
            return w[m.trial_dof(it, ix)];
        };
        return n * ((1 - s) * (nodal(k, j + 1) - nodal(k, j)) +
                    s * (nodal(k + 1, j + 1) - nodal(k + 1, j)));
    };

    for (int dof : {0, 3, 7, 11, m.dim_test() - 1}) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(m.dim_test());
        e[dof] = 1.0;
        double oracle = integrate_cells(m.n, 1, [&](double t, double x) {
            double z = test_eval(m, e, t, x), zx = test_eval_dx(m, e, t, x);
            return w_dt(t, x) * z + T * w_dx(t, x) * zx - T * v * w_dx(t, x) * z +
                   lam * wg.eval(t, x) * z;
        });
        CHECK(Bw[dof] == doctest::Approx(oracle).epsilon(1e-12));
    }
}

TEST_CASE("load assembly matches a fine quadrature oracle") {
    // polynomial densities of low degree: the built-in Gauss rules integrate
    // them exactly, so assembly and oracle must agree to rounding
    Mesh m(3);
    auto density = [](double t, double x) {
        return std::make_pair(t * x * (1.0 - x), x * x * (0.5 - t));
    };
    Eigen::VectorXd f = assemble_load(m, density);
    for (int dof = 0; dof < m.dim_test(); ++dof) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(m.dim_test());
        e[dof] = 1.0;
        double oracle = integrate_cells(m.n, 8, [&](double t, double x) {
            auto [c0, c1] = density(t, x);
            return c0 * test_eval(m, e, t, x) + c1 * test_eval_dx(m, e, t, x);
        });
        CHECK(f[dof] == doctest::Approx(oracle).epsilon(1e-12));
    }
}

TEST_CASE("forcing vanishes when the drift equals the reference drift") {
    Mesh m(4);
    const double v0 = 1.2, T = 0.8;
    auto sys = assemble([&](double, double) { return v0; }, T, m, 0.0);
    ConstDriftSolution ref{v0, T};
    assemble_rhs(sys, ref, [&](double, double) { return v0; }, [](double, double) { return 0.0; },
                 v0);
    CHECK(sys.f.norm() == 0.0);
}

TEST_CASE("forcing is stable under quadrature refinement") {
    Mesh m(32);
    const double T = 0.5, v0 = 1.0;
    auto vhat = [](double t, double x) { return 1.0 + 0.5 * x + 0.1 * t; };
    auto vhat_x = [](double, double) { return 0.5; };
    ConstDriftSolution ref{v0, T};
    auto sys3 = assemble(vhat, T, m, 0.0);
    auto sys6 = assemble(vhat, T, m, 0.0);
    assemble_rhs(sys3, ref, vhat, vhat_x, v0, 3);
    assemble_rhs(sys6, ref, vhat, vhat_x, v0, 6);
    // the remaining difference reflects the boundary layer of the reference
    // solution in the earliest slabs after the (always 6-point) first one
    CHECK((sys3.f - sys6.f).norm() <= 1e-5 * sys6.f.norm());
    CHECK(sys6.f.norm() > 0.0);
}

TEST_CASE("zero forcing yields the zero solution") {
    auto vhat = [](double t, double x) { return std::cos(t) + x; };
    for (int n : {4, 16}) {
        auto sys = assemble(vhat, 0.9, Mesh(n), 0.0);
        auto w = solve_mrm(sys);
        CHECK(w.values.norm() == 0.0);
    }
}

TEST_CASE("minimal residual recovers a representable solution exactly") {
    // the interpolant of t sin(pi x) vanishes at t=0, so forcing f = B w*
    // makes w* the unique zero-residual minimizer
    Mesh m(4);
    auto vhat = [](double t, double x) { return 0.3 + 0.2 * t * x; };
    auto sys = assemble(vhat, 1.0, m, 0.0);
    Eigen::VectorXd wstar =
        interpolant(m, [](double t, double x) { return t * std::sin(kPi * x); });
    sys.f = sys.B * wstar;
    auto w = solve_mrm(sys, SolverMode::Dense);
    CHECK((w.values - wstar).lpNorm<Eigen::Infinity>() <= 1e-10);
    auto wcg = solve_mrm(sys, SolverMode::Cg, 1e-13);
    CHECK((wcg.values - wstar).lpNorm<Eigen::Infinity>() <= 1e-9);
}

TEST_CASE("normal equations are satisfied to solver accuracy") {
    Mesh m(8);
    const double T = 0.7, v0 = 0.9;
    auto vhat = [](double t, double x) { return 0.9 + 0.3 * std::sin(t + x); };
    auto vhat_x = [](double t, double x) { return 0.3 * std::cos(t + x); };
    auto sys = assemble(vhat, T, m, 0.0);
    ConstDriftSolution ref{v0, T};
    assemble_rhs(sys, ref, vhat, vhat_x, v0);
    auto w = solve_mrm(sys, SolverMode::Dense);
    Eigen::MatrixXd As = Eigen::MatrixXd(sys.As);
    Eigen::LLT<Eigen::MatrixXd> llt(As);
    Eigen::VectorXd grad = sys.B.transpose() * llt.solve(sys.B * w.values - sys.f) +
                           sys.C * w.values;
    Eigen::VectorXd rhs = sys.B.transpose() * llt.solve(sys.f);
    CHECK(grad.norm() <= 1e-10 * rhs.norm());
}

TEST_CASE("coercivity shift policy") {
    CHECK(choose_lambda(1.0, 1.0) == 0.0);
    CHECK(choose_lambda(1.0, 4.0) == doctest::Approx(5.0));
    CHECK(choose_lambda(0.5, 8.0) == doctest::Approx(9.0));
    CHECK_THROWS(assemble([](double, double) { return 4.0; }, 1.0, Mesh(2), 0.0, true));
    CHECK_NOTHROW(assemble([](double, double) { return 4.0; }, 1.0, Mesh(2),
                           choose_lambda(1.0, 4.0), true));
}

TEST_CASE("shifted and unshifted solves agree within discretization error") {
    Mesh m(16);
    const double T = 1.0, v0 = 1.0;
    auto vhat = [](double, double x) { return 1.0 + 0.25 * x; };
    auto vhat_x = [](double, double) { return 0.25; };
    ConstDriftSolution ref{v0, T};
    CoeffGrid sol[2];
    int idx = 0;
    for (double lam : {0.0, 2.0}) {
        auto sys = assemble(vhat, T, m, lam);
        assemble_rhs(sys, ref, vhat, vhat_x, v0);
        sol[idx++] = solve_mrm(sys);
    }
    double scale = std::max(sol[0].values.lpNorm<Eigen::Infinity>(), 1e-12);
    CHECK((sol[0].values - sol[1].values).lpNorm<Eigen::Infinity>() <= 0.05 * scale);
}

TEST_CASE("discrete norm basics") {
    Mesh m(4);
    auto vhat = [](double t, double x) { return 0.5 + 0.1 * t - 0.2 * x; };
    NormSystem ns(vhat, 0.8, m);
    Eigen::VectorXd z = Eigen::VectorXd::Zero(m.dim_trial());
    CHECK(ns.norm(z) == 0.0);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    Eigen::VectorXd w(m.dim_trial());
    for (int i = 0; i < w.size(); ++i) w[i] = unif(rng);
    CHECK(ns.norm(2.5 * w) == doctest::Approx(2.5 * ns.norm(w)).epsilon(1e-13));
    CHECK(ns.norm(w) > 0.0);
    CHECK(xnorm(CoeffGrid{m, w}, ns) == doctest::Approx(ns.norm(w)).epsilon(1e-14));
    CHECK_THROWS(xnorm(CoeffGrid{Mesh(8), Eigen::VectorXd::Zero(Mesh(8).dim_trial())}, ns));
}

TEST_CASE("discrete norm matches a dense quadrature-assembled oracle") {
    Mesh m(4);
    const double T = 1.1;
    auto vhat = [](double t, double x) { return 0.4 * t + 0.3 * x; };
    NormSystem ns(vhat, T, m);
    const auto& sys = ns.system();

    // assemble the stiffness Gram on the test space by quadrature
    const int dim = m.dim_test();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(dim, dim);
    std::vector<Eigen::VectorXd> basis;
    for (int i = 0; i < dim; ++i) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(dim);
        e[i] = 1.0;
        basis.push_back(e);
    }
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j)
            A(i, j) = integrate_cells(m.n, 1, [&](double t, double x) {
                return test_eval_dx(m, basis[i], t, x) * test_eval_dx(m, basis[j], t, x);
            });

    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    Eigen::VectorXd w(m.dim_trial());
    for (int i = 0; i < w.size(); ++i) w[i] = unif(rng);
    Eigen::VectorXd r = sys.B * w;
    double oracle =
        std::sqrt(r.dot(Eigen::LLT<Eigen::MatrixXd>(A).solve(r)) + w.dot(sys.C * w));
    CHECK(ns.norm(w) == doctest::Approx(oracle).epsilon(1e-11));
}

TEST_CASE("trial functions are contained in the test space") {
    Mesh m(4);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    Eigen::VectorXd w(m.dim_trial());
    for (int i = 0; i < w.size(); ++i) w[i] = unif(rng);
    CoeffGrid wg{m, w};
    // sample the trial function at the slab-local time nodes
    Eigen::VectorXd c(m.dim_test());
    for (int k = 0; k < m.n; ++k)
        for (int l = 0; l < 2; ++l)
            for (int ix = 1; ix < m.n; ++ix)
                c[m.test_dof(k, l, ix)] = w[m.trial_dof(k + l, ix)];
    std::uniform_real_distribution<double> pos(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        double t = pos(rng), x = pos(rng);
        CHECK(test_eval(m, c, t, x) == doctest::Approx(wg.eval(t, x)).epsilon(1e-13));
    }
}

TEST_CASE("prolongation embeds exactly into a nested mesh") {
    Mesh coarse(4), fine(8);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    Eigen::VectorXd w(coarse.dim_trial());
    for (int i = 0; i < w.size(); ++i) w[i] = unif(rng);
    CoeffGrid wc{coarse, w};
    CoeffGrid wf = prolong(wc, fine);
    std::uniform_real_distribution<double> pos(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        double t = pos(rng), x = pos(rng);
        CHECK(wf.eval(t, x) == doctest::Approx(wc.eval(t, x)).epsilon(1e-14));
    }
    CHECK_THROWS(prolong(wc, Mesh(6)));
}
