#pragma once

// Sparse-grid interpolation on [-1,1]^N built from nested Clenshaw-Curtis
// point sets through the combination technique. Payloads are arbitrary
// vector-space values (doubles, coefficient vectors, ...); the interpolant
// stores one payload per unique grid point and evaluates by tensorized
// barycentric Lagrange interpolation.

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

namespace fpt {

namespace cc {

// Number of points on level i >= 1: 1, 3, 5, 9, 17, ...
inline int num_points(int level) {
    if (level < 1) throw std::invalid_argument("cc::num_points: level must be >= 1");
    if (level == 1) return 1;
    return (1 << (level - 1)) + 1;
}

// Canonical key of the j-th point of a level: the reduced dyadic fraction
// (k, m) representing -cos(pi k / 2^m). Nested levels share keys exactly.
inline std::pair<int, int> key(int level, int j) {
    if (j < 0 || j >= num_points(level)) throw std::out_of_range("cc::key: bad point index");
    if (level == 1) return {1, 1};  // the single point 0 = -cos(pi/2)
    int k = j, m = level - 1;
    while (k > 0 && k % 2 == 0) {
        k /= 2;
        --m;
    }
    if (k == 0) return {0, 0};
    return {k, m};
}

inline double value(std::pair<int, int> key) {
    auto [k, m] = key;
    if (k == 0) return -1.0;
    if (m == 0) return 1.0;
    if (2 * k == (1 << m)) return 0.0;
    return -std::cos(M_PI * static_cast<double>(k) / static_cast<double>(1 << m));
}

inline std::vector<double> points(int level) {
    std::vector<double> xs(static_cast<std::size_t>(num_points(level)));
    for (int j = 0; j < num_points(level); ++j) xs[static_cast<std::size_t>(j)] = value(key(level, j));
    return xs;
}

// Barycentric weights of the Chebyshev extreme points: (-1)^j, halved at the
// two endpoints. A single point gets weight 1.
inline std::vector<double> bary_weights(int level) {
    const int m = num_points(level);
    std::vector<double> w(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) w[static_cast<std::size_t>(j)] = (j % 2 == 0) ? 1.0 : -1.0;
    if (m > 1) {
        w.front() *= 0.5;
        w.back() *= 0.5;
    }
    return w;
}

// Values of the m Lagrange basis polynomials at x.
inline std::vector<double> basis(int level, double x) {
    const auto xs = points(level);
    const auto w = bary_weights(level);
    const int m = static_cast<int>(xs.size());
    std::vector<double> L(static_cast<std::size_t>(m), 0.0);
    if (m == 1) {
        L[0] = 1.0;
        return L;
    }
    for (int j = 0; j < m; ++j)
        if (x == xs[static_cast<std::size_t>(j)]) {
            L[static_cast<std::size_t>(j)] = 1.0;
            return L;
        }
    double denom = 0.0;
    for (int j = 0; j < m; ++j) {
        L[static_cast<std::size_t>(j)] =
            w[static_cast<std::size_t>(j)] / (x - xs[static_cast<std::size_t>(j)]);
        denom += L[static_cast<std::size_t>(j)];
    }
    for (double& v : L) v /= denom;
    return L;
}

}  // namespace cc

namespace detail {

inline long binom(int n, int k) {
    if (k < 0 || k > n) return 0;
    long r = 1;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

// payload (de)serialization hooks
inline nlohmann::json payload_to_json(double v) { return v; }
inline nlohmann::json payload_to_json(const Eigen::VectorXd& v) {
    nlohmann::json a = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}
inline void payload_from_json(const nlohmann::json& j, double& v) { v = j.get<double>(); }
inline void payload_from_json(const nlohmann::json& j, Eigen::VectorXd& v) {
    v.resize(static_cast<Eigen::Index>(j.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = j[static_cast<std::size_t>(i)].get<double>();
}

}  // namespace detail

template <class Payload>
class SparseInterpolant {
public:
    struct Node {
        std::vector<std::pair<int, int>> key;  // per-dimension reduced dyadic fraction
        std::vector<double> x;
        Payload value;
    };

    SparseInterpolant() = default;

    // Builds the level-q interpolant in dimension N, calling f once per
    // unique grid point.
    template <class F>
    static SparseInterpolant build(int N, int q, F&& f) {
        SparseInterpolant s;
        s.init_structure(N, q);
        for (Node& node : s.nodes_) node.value = f(node.x);
        return s;
    }

    int dimension() const { return N_; }
    int level() const { return q_; }
    const std::vector<Node>& nodes() const { return nodes_; }

    Payload operator()(const std::vector<double>& rho) const {
        if (static_cast<int>(rho.size()) != N_)
            throw std::invalid_argument("SparseInterpolant: query dimension mismatch");
        for (double r : rho)
            if (!(r >= -1.0 && r <= 1.0))
                throw std::domain_error("SparseInterpolant: query outside [-1,1]^N");
        Payload acc = nodes_.front().value * 0.0;
        std::vector<std::vector<double>> L(static_cast<std::size_t>(N_));
        for (const Term& term : terms_) {
            for (int d = 0; d < N_; ++d)
                L[static_cast<std::size_t>(d)] =
                    cc::basis(term.levels[static_cast<std::size_t>(d)],
                              rho[static_cast<std::size_t>(d)]);
            std::vector<int> idx(static_cast<std::size_t>(N_), 0);
            for (std::size_t p = 0; p < term.node_ids.size(); ++p) {
                double weight = static_cast<double>(term.coeff);
                for (int d = 0; d < N_; ++d)
                    weight *= L[static_cast<std::size_t>(d)]
                               [static_cast<std::size_t>(idx[static_cast<std::size_t>(d)])];
                if (weight != 0.0) acc = acc + nodes_[term.node_ids[p]].value * weight;
                // odometer over the tensor grid, last dimension fastest
                for (int d = N_ - 1; d >= 0; --d) {
                    if (++idx[static_cast<std::size_t>(d)] <
                        cc::num_points(term.levels[static_cast<std::size_t>(d)]))
                        break;
                    idx[static_cast<std::size_t>(d)] = 0;
                }
            }
        }
        return acc;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["dimension"] = N_;
        j["level"] = q_;
        nlohmann::json nodes = nlohmann::json::array();
        for (const Node& node : nodes_) {
            nlohmann::json nj;
            nlohmann::json key = nlohmann::json::array();
            for (auto [k, m] : node.key) key.push_back({k, m});
            nj["key"] = std::move(key);
            nj["value"] = detail::payload_to_json(node.value);
            nodes.push_back(std::move(nj));
        }
        j["nodes"] = std::move(nodes);
        return j;
    }

    static SparseInterpolant from_json(const nlohmann::json& j) {
        SparseInterpolant s;
        s.init_structure(j.at("dimension").get<int>(), j.at("level").get<int>());
        const auto& nodes = j.at("nodes");
        if (nodes.size() != s.nodes_.size())
            throw std::invalid_argument("SparseInterpolant: node count mismatch");
        std::map<std::vector<std::pair<int, int>>, std::size_t> lookup;
        for (std::size_t i = 0; i < s.nodes_.size(); ++i) lookup[s.nodes_[i].key] = i;
        for (const auto& nj : nodes) {
            std::vector<std::pair<int, int>> key;
            for (const auto& kj : nj.at("key"))
                key.emplace_back(kj.at(0).get<int>(), kj.at(1).get<int>());
            auto it = lookup.find(key);
            if (it == lookup.end())
                throw std::invalid_argument("SparseInterpolant: unknown grid point in input");
            detail::payload_from_json(nj.at("value"), s.nodes_[it->second].value);
        }
        return s;
    }

private:
    struct Term {
        std::vector<int> levels;
        long coeff = 0;
        std::vector<std::size_t> node_ids;  // lexicographic over the tensor grid
    };

    void init_structure(int N, int q) {
        if (N < 1) throw std::invalid_argument("SparseInterpolant: dimension must be >= 1");
        if (q < N) throw std::invalid_argument("SparseInterpolant: level must be >= dimension");
        N_ = N;
        q_ = q;
        nodes_.clear();
        terms_.clear();
        std::map<std::vector<std::pair<int, int>>, std::size_t> lookup;
        std::vector<int> levels(static_cast<std::size_t>(N), 1);
        const int lo = std::max(N, q - N + 1);
        while (true) {
            int sum = 0;
            for (int l : levels) sum += l;
            if (sum >= lo && sum <= q) {
                Term term;
                term.levels = levels;
                term.coeff = ((q - sum) % 2 == 0 ? 1 : -1) * detail::binom(N - 1, q - sum);
                std::vector<int> idx(static_cast<std::size_t>(N), 0);
                std::size_t count = 1;
                for (int l : levels) count *= static_cast<std::size_t>(cc::num_points(l));
                for (std::size_t p = 0; p < count; ++p) {
                    std::vector<std::pair<int, int>> key(static_cast<std::size_t>(N));
                    for (int d = 0; d < N; ++d)
                        key[static_cast<std::size_t>(d)] =
                            cc::key(levels[static_cast<std::size_t>(d)],
                                    idx[static_cast<std::size_t>(d)]);
                    auto [it, inserted] = lookup.try_emplace(key, nodes_.size());
                    if (inserted) {
                        Node node;
                        node.key = key;
                        for (auto kk : key) node.x.push_back(cc::value(kk));
                        nodes_.push_back(std::move(node));
                    }
                    term.node_ids.push_back(it->second);
                    for (int d = N - 1; d >= 0; --d) {
                        if (++idx[static_cast<std::size_t>(d)] <
                            cc::num_points(levels[static_cast<std::size_t>(d)]))
                            break;
                        idx[static_cast<std::size_t>(d)] = 0;
                    }
                }
                terms_.push_back(std::move(term));
            }
            // next multi-index with entries in [1, q]
            int d = N - 1;
            for (; d >= 0; --d) {
                if (++levels[static_cast<std::size_t>(d)] <= q - (N - 1)) break;
                levels[static_cast<std::size_t>(d)] = 1;
            }
            if (d < 0) break;
        }
        if (nodes_.empty()) throw std::logic_error("SparseInterpolant: empty grid");
    }

    int N_ = 0, q_ = 0;
    std::vector<Node> nodes_;
    std::vector<Term> terms_;
};

}  // namespace fpt
