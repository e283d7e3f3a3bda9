#pragma once

// The three benchmark model families: drift/boundary definitions, published
// parameter ranges, the affine map from the unit cube to physical parameters,
// and instantiation of the full rectangular-domain problem per cube point.

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "fpt/geometry.hpp"
#include "fpt/refsol.hpp"

namespace fpt {

struct ParameterBox {
    std::vector<std::string> names;
    std::vector<double> lo, hi;

    int dimension() const { return static_cast<int>(names.size()); }

    void validate() const {
        if (lo.size() != names.size() || hi.size() != names.size())
            throw std::invalid_argument("ParameterBox: inconsistent lengths");
        for (std::size_t i = 0; i < names.size(); ++i)
            if (!(lo[i] < hi[i]))
                throw std::invalid_argument("ParameterBox: lo must be < hi for " + names[i]);
    }
};

struct ModelFamily {
    enum class Kind { Hyperbolic, LinearDrift, Collapsing };

    Kind kind = Kind::Hyperbolic;
    ParameterBox box;
    double sigma = 1.0;
    double tau_fixed = 2.5;  // used by families without a tau axis

    static ModelFamily hyperbolic() {
        ModelFamily m;
        m.kind = Kind::Hyperbolic;
        m.box = {{"mu0", "mu1", "t0", "beta0", "tau"},
                 {-1.97, -2.31, 0.13, 1.38, 0.1},
                 {-1.64, -0.99, 0.40, 2.26, 2.5}};
        return m;
    }

    static ModelFamily linear_drift() {
        ModelFamily m;
        m.kind = Kind::LinearDrift;
        m.box = {{"mu0", "mu1", "beta0"}, {-2.0, -4.0, 0.5}, {2.0, 4.0, 2.0}};
        return m;
    }

    static ModelFamily collapsing() {
        ModelFamily m;
        m.kind = Kind::Collapsing;
        m.box = {{"mu0", "beta0", "T0", "tau"}, {-5.86, 0.56, 3.0, 0.1}, {0.0, 3.93, 20.0, 2.5}};
        return m;
    }

    static ModelFamily by_name(const std::string& name) {
        if (name == "hyperbolic") return hyperbolic();
        if (name == "linear_drift") return linear_drift();
        if (name == "collapsing") return collapsing();
        throw std::invalid_argument("ModelFamily: unknown family '" + name + "'");
    }

    const char* name() const {
        switch (kind) {
            case Kind::Hyperbolic: return "hyperbolic";
            case Kind::LinearDrift: return "linear_drift";
            case Kind::Collapsing: return "collapsing";
        }
        throw std::logic_error("unreachable");
    }

    std::map<std::string, double> physical_params(const std::vector<double>& rho) const {
        box.validate();
        if (static_cast<int>(rho.size()) != box.dimension())
            throw std::invalid_argument("physical_params: dimension mismatch");
        std::map<std::string, double> out;
        for (std::size_t i = 0; i < rho.size(); ++i) {
            if (!(rho[i] >= -1.0 && rho[i] <= 1.0))
                throw std::domain_error("physical_params: rho outside [-1,1]^N");
            out[box.names[i]] =
                0.5 * (box.lo[i] + box.hi[i]) + 0.5 * rho[i] * (box.hi[i] - box.lo[i]);
        }
        return out;
    }

    FPProblem problem(const std::map<std::string, double>& p) const {
        auto get = [&](const char* key) {
            auto it = p.find(key);
            if (it == p.end())
                throw std::invalid_argument(std::string("problem: missing parameter ") + key);
            return it->second;
        };
        FPProblem fp;
        fp.sigma = sigma;
        switch (kind) {
            case Kind::Hyperbolic: {
                double mu0 = get("mu0"), mu1 = get("mu1"), t0 = get("t0"), beta0 = get("beta0");
                fp.tau = get("tau");
                fp.mu = [mu0, mu1, t0](double t, double) { return mu0 + mu1 * t / (t + t0); };
                fp.mu_x = [](double, double) { return 0.0; };
                fp.alpha = [](double) { return 0.0; };
                fp.beta = [beta0](double) { return beta0; };
                fp.alpha_dot = [](double) { return 0.0; };
                fp.beta_dot = [](double) { return 0.0; };
                fp.shape.kind = BoundaryShape::Kind::Constant;
                break;
            }
            case Kind::LinearDrift: {
                double mu0 = get("mu0"), mu1 = get("mu1"), beta0 = get("beta0");
                fp.tau = tau_fixed;
                fp.mu = [mu0, mu1, beta0](double, double x) { return mu0 + mu1 * (beta0 - x); };
                fp.mu_x = [mu1](double, double) { return -mu1; };
                fp.alpha = [](double) { return 0.0; };
                fp.beta = [beta0](double) { return beta0; };
                fp.alpha_dot = [](double) { return 0.0; };
                fp.beta_dot = [](double) { return 0.0; };
                fp.shape.kind = BoundaryShape::Kind::Constant;
                break;
            }
            case Kind::Collapsing: {
                double mu0 = get("mu0"), beta0 = get("beta0"), T0 = get("T0");
                fp.tau = get("tau");
                fp.mu = [mu0](double, double) { return mu0; };
                fp.mu_x = [](double, double) { return 0.0; };
                fp.alpha = [beta0, T0](double t) { return beta0 * t / (2.0 * T0); };
                fp.beta = [beta0, T0](double t) { return beta0 * (1.0 - t / (2.0 * T0)); };
                fp.alpha_dot = [beta0, T0](double) { return beta0 / (2.0 * T0); };
                fp.beta_dot = [beta0, T0](double) { return -beta0 / (2.0 * T0); };
                fp.shape.kind = BoundaryShape::Kind::CollapsingLinear;
                fp.shape.beta0 = beta0;
                fp.shape.T0 = T0;
                break;
            }
        }
        return fp;
    }
};

// Everything downstream solvers need for one parameter point: the reversed
// problem (for pullbacks), its time change, the rectangular-domain drift
// data, and the matching constant-drift reference solution.
struct ModelInstance {
    TildeProblem tilde;
    TimeChange time_change;
    TransformedProblem prob;
    ConstDriftSolution ref;
    std::map<std::string, double> params;
};

inline ModelInstance instantiate(const ModelFamily& m, const std::vector<double>& rho,
                                 Convention conv = Convention::PaperCompat) {
    auto params = m.physical_params(rho);
    FPProblem fp = m.problem(params);
    TildeProblem tp = to_tilde(fp, conv);
    if (m.kind == ModelFamily::Kind::Collapsing &&
        !(tp.Ttilde < m.sigma * params.at("T0") / 2.0))
        throw std::invalid_argument("instantiate: collapsing boundaries meet before the horizon");
    TimeChange tc = solve_time_change(tp);
    TransformedProblem prob = transform_drift(tp, tc);
    ConstDriftSolution ref{prob.v0, prob.T};
    return ModelInstance{std::move(tp), std::move(tc), std::move(prob), std::move(ref),
                         std::move(params)};
}

}  // namespace fpt
