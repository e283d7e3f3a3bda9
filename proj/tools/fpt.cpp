// Command-line driver: convergence studies, sparse-grid interpolation
// sweeps, hitting-probability tables with Monte Carlo cross-checks, and
// static log-log plots. All outputs are deterministic for a fixed config
// and seed regardless of the worker count.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "fpt/fem.hpp"
#include "fpt/geometry.hpp"
#include "fpt/models.hpp"
#include "fpt/oracles.hpp"
#include "fpt/refsol.hpp"
#include "fpt/sparsegrid.hpp"

namespace fs = std::filesystem;
using namespace fpt;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct RunConfig {
    std::string model = "linear_drift";
    std::string convention = "sde-consistent";
    std::vector<double> h_list = {1.0 / 8, 1.0 / 16, 1.0 / 32};
    std::vector<int> q_list = {};      // default: N .. N+2, resolved per model
    std::string test_set = "five";     // five | four | center
    double ode_tol = 1e-10;
    double spectral_tol = 1e-10;
    double cg_tol = 1e-11;
    long mc_paths = 200000;
    double mc_dt = 1e-4;
    int cn_nx = 512;
    int cn_nt = 512;
    std::vector<double> y_list = {};   // absolute start states; empty = midpoint
    std::string out = "out";
    std::uint64_t seed = 1;
    int threads = 1;

    Convention conv() const {
        if (convention == "sde-consistent") return Convention::SdeConsistent;
        if (convention == "paper-compat") return Convention::PaperCompat;
        throw ConfigError("convention must be sde-consistent or paper-compat");
    }

    void validate() const {
        ModelFamily::by_name(model);  // throws on unknown family
        conv();
        if (h_list.empty()) throw ConfigError("h_list must not be empty");
        for (double h : h_list) {
            double k = -std::log2(h);
            if (!(h > 0.0 && h < 1.0) || std::abs(k - std::round(k)) > 1e-12)
                throw ConfigError("h_list entries must be powers of two below one");
        }
        if (test_set != "five" && test_set != "four" && test_set != "center")
            throw ConfigError("test_set must be five, four, or center");
        if (!(ode_tol > 0.0) || !(spectral_tol > 0.0) || !(cg_tol > 0.0))
            throw ConfigError("tolerances must be positive");
        if (mc_paths < 1) throw ConfigError("mc_paths must be >= 1");
        if (!(mc_dt > 0.0)) throw ConfigError("mc_dt must be positive");
        if (cn_nx < 4 || cn_nt < 4) throw ConfigError("cn_nx, cn_nt must be >= 4");
        if (threads < 1) throw ConfigError("threads must be >= 1");
    }
};

std::vector<double> parse_doubles(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::size_t used = 0;
        out.push_back(std::stod(item, &used));
        if (used != item.size()) throw ConfigError("malformed number '" + item + "'");
    }
    return out;
}

std::vector<int> parse_ints(const std::string& s) {
    std::vector<int> out;
    for (double v : parse_doubles(s)) {
        if (v != std::floor(v)) throw ConfigError("expected integer, got '" + fmt17(v) + "'");
        out.push_back(static_cast<int>(v));
    }
    return out;
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
        std::string key = trim(t.substr(0, eq)), val = trim(t.substr(eq + 1));
        if (key == "model") cfg.model = val;
        else if (key == "convention") cfg.convention = val;
        else if (key == "h_list") cfg.h_list = parse_doubles(val);
        else if (key == "q_list") cfg.q_list = parse_ints(val);
        else if (key == "test_set") cfg.test_set = val;
        else if (key == "ode_tol") cfg.ode_tol = std::stod(val);
        else if (key == "spectral_tol") cfg.spectral_tol = std::stod(val);
        else if (key == "cg_tol") cfg.cg_tol = std::stod(val);
        else if (key == "mc_paths") cfg.mc_paths = std::stol(val);
        else if (key == "mc_dt") cfg.mc_dt = std::stod(val);
        else if (key == "cn_nx") cfg.cn_nx = std::stoi(val);
        else if (key == "cn_nt") cfg.cn_nt = std::stoi(val);
        else if (key == "y_list") cfg.y_list = parse_doubles(val);
        else if (key == "out") cfg.out = val;
        else if (key == "seed") cfg.seed = std::stoull(val);
        else if (key == "threads") cfg.threads = std::stoi(val);
        else throw ConfigError(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
}

void echo_config(const RunConfig& cfg, const fs::path& dir) {
    std::ofstream out(dir / "config_resolved.ini");
    auto joind = [](const std::vector<double>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt17(v[i]);
        return s;
    };
    std::string qs;
    for (std::size_t i = 0; i < cfg.q_list.size(); ++i)
        qs += (i ? "," : "") + std::to_string(cfg.q_list[i]);
    out << "model = " << cfg.model << "\n"
        << "convention = " << cfg.convention << "\n"
        << "h_list = " << joind(cfg.h_list) << "\n"
        << "q_list = " << qs << "\n"
        << "test_set = " << cfg.test_set << "\n"
        << "ode_tol = " << fmt17(cfg.ode_tol) << "\n"
        << "spectral_tol = " << fmt17(cfg.spectral_tol) << "\n"
        << "cg_tol = " << fmt17(cfg.cg_tol) << "\n"
        << "mc_paths = " << cfg.mc_paths << "\n"
        << "mc_dt = " << fmt17(cfg.mc_dt) << "\n"
        << "cn_nx = " << cfg.cn_nx << "\n"
        << "cn_nt = " << cfg.cn_nt << "\n"
        << "y_list = " << joind(cfg.y_list) << "\n"
        << "out = " << cfg.out << "\n"
        << "seed = " << cfg.seed << "\n"
        << "threads = " << cfg.threads << "\n";
}

std::vector<std::vector<double>> test_set_points(const std::string& name, int N) {
    std::vector<double> vals;
    if (name == "five") vals = {-1.0, -0.5, 0.0, 0.5, 1.0};
    else if (name == "four") vals = {-1.0, -0.5, 0.5, 1.0};
    else vals = {0.0};
    std::vector<std::vector<double>> pts;
    std::vector<std::size_t> idx(static_cast<std::size_t>(N), 0);
    while (true) {
        std::vector<double> p;
        for (int d = 0; d < N; ++d) p.push_back(vals[idx[static_cast<std::size_t>(d)]]);
        pts.push_back(std::move(p));
        int d = N - 1;
        for (; d >= 0; --d) {
            if (++idx[static_cast<std::size_t>(d)] < vals.size()) break;
            idx[static_cast<std::size_t>(d)] = 0;
        }
        if (d < 0) break;
    }
    return pts;
}

std::string join_rho(const std::vector<double>& rho) {
    std::string s;
    for (std::size_t i = 0; i < rho.size(); ++i) s += (i ? ";" : "") + fmt17(rho[i]);
    return s;
}

// Runs f(0..count-1) on a pool; the first captured exception is rethrown
// after all workers drain.
template <class F>
void parallel_for(int count, int threads, F&& f) {
    if (threads <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i) f(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> workers;
    int nw = std::min(threads, count);
    for (int w = 0; w < nw; ++w)
        workers.emplace_back([&] {
            for (;;) {
                int i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    f(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    for (auto& w : workers) w.join();
    if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------- convergence

int cmd_convergence(const RunConfig& cfg) {
    auto family = ModelFamily::by_name(cfg.model);
    const auto conv = cfg.conv();
    auto rho_set = test_set_points(cfg.test_set, family.box.dimension());
    fs::create_directories(cfg.out);
    echo_config(cfg, cfg.out);

    struct Row {
        std::size_t rho_idx;
        double h;
        std::string err;  // formatted value or FAILED marker
        double err_val = 0.0;
        bool failed = false;
    };
    const int ntasks = static_cast<int>(rho_set.size() * cfg.h_list.size());
    std::vector<Row> rows(static_cast<std::size_t>(ntasks));
    std::atomic<bool> any_failed{false};

    parallel_for(ntasks, cfg.threads, [&](int task) {
        std::size_t ri = static_cast<std::size_t>(task) / cfg.h_list.size();
        std::size_t hi = static_cast<std::size_t>(task) % cfg.h_list.size();
        Row& row = rows[static_cast<std::size_t>(task)];
        row.rho_idx = ri;
        row.h = cfg.h_list[hi];
        try {
            auto inst = instantiate(family, rho_set[ri], conv);
            int n = static_cast<int>(std::lround(1.0 / row.h));
            CoeffGrid coarse = solve_transformed(inst.prob, inst.ref, Mesh(n));
            CoeffGrid fine = solve_transformed(inst.prob, inst.ref, Mesh(2 * n));
            NormSystem ns(inst.prob.vhat, inst.prob.T, Mesh(2 * n));
            Eigen::VectorXd diff = fine.values - prolong(coarse, Mesh(2 * n)).values;
            row.err_val = ns.norm(diff);
            row.err = fmt17(row.err_val);
        } catch (const std::exception&) {
            row.err = "FAILED";
            row.failed = true;
            any_failed = true;
        }
    });

    std::ofstream csv(fs::path(cfg.out) / "convergence.csv");
    csv << "model,rho,h,err_xnorm\n";
    for (const Row& row : rows)
        csv << cfg.model << "," << join_rho(rho_set[row.rho_idx]) << "," << fmt17(row.h) << ","
            << row.err << "\n";
    // per-h maximum over the test set
    for (double h : cfg.h_list) {
        double mx = 0.0;
        bool ok = true;
        for (const Row& row : rows)
            if (row.h == h) {
                if (row.failed) ok = false;
                mx = std::max(mx, row.err_val);
            }
        csv << cfg.model << ",max," << fmt17(h) << "," << (ok ? fmt17(mx) : "FAILED") << "\n";
    }
    csv.flush();
    return any_failed ? kExitNumerical : 0;
}

// ---------------------------------------------------------------- interpolate

int cmd_interpolate(const RunConfig& cfg) {
    auto family = ModelFamily::by_name(cfg.model);
    const auto conv = cfg.conv();
    const int N = family.box.dimension();
    std::vector<int> qs = cfg.q_list;
    if (qs.empty()) qs = {N, N + 1, N + 2};
    for (int q : qs)
        if (q < N) throw ConfigError("q_list entries must be >= model dimension");
    auto rho_set = test_set_points(cfg.test_set, N);
    fs::create_directories(cfg.out);
    echo_config(cfg, cfg.out);

    std::ofstream csv(fs::path(cfg.out) / "interpolate.csv");
    csv << "model,h,q,points,max_err\n";
    bool any_failed = false;

    for (double h : cfg.h_list) {
        const int n = static_cast<int>(std::lround(1.0 / h));
        for (int q : qs) {
            try {
                // grid structure first, payload solves in parallel
                auto probe =
                    SparseInterpolant<double>::build(N, q, [](const std::vector<double>&) {
                        return 0.0;
                    });
                const auto& nodes = probe.nodes();
                std::vector<Eigen::VectorXd> payloads(nodes.size());
                parallel_for(static_cast<int>(nodes.size()), cfg.threads, [&](int i) {
                    auto inst =
                        instantiate(family, nodes[static_cast<std::size_t>(i)].x, conv);
                    payloads[static_cast<std::size_t>(i)] =
                        solve_transformed(inst.prob, inst.ref, Mesh(n)).values;
                });
                std::size_t counter = 0;
                auto interp = SparseInterpolant<Eigen::VectorXd>::build(
                    N, q, [&](const std::vector<double>&) { return payloads[counter++]; });

                std::vector<double> errs(rho_set.size());
                parallel_for(static_cast<int>(rho_set.size()), cfg.threads, [&](int i) {
                    const auto& rho = rho_set[static_cast<std::size_t>(i)];
                    auto inst = instantiate(family, rho, conv);
                    Eigen::VectorXd exact =
                        solve_transformed(inst.prob, inst.ref, Mesh(n)).values;
                    NormSystem ns(inst.prob.vhat, inst.prob.T, Mesh(n));
                    errs[static_cast<std::size_t>(i)] = ns.norm(exact - interp(rho));
                });
                double mx = 0.0;
                for (double e : errs) mx = std::max(mx, e);
                csv << cfg.model << "," << fmt17(h) << "," << q << "," << nodes.size() << ","
                    << fmt17(mx) << "\n";

                std::ostringstream name;
                name << "interpolant_" << cfg.model << "_n" << n << "_q" << q << ".json";
                std::ofstream jf(fs::path(cfg.out) / name.str());
                jf << interp.to_json().dump() << "\n";
            } catch (const ConfigError&) {
                throw;
            } catch (const std::exception&) {
                csv << cfg.model << "," << fmt17(h) << "," << q << ",0,FAILED\n";
                any_failed = true;
            }
        }
    }
    csv.flush();
    return any_failed ? kExitNumerical : 0;
}

// ---------------------------------------------------------------- probability

int cmd_probability(const RunConfig& cfg) {
    auto family = ModelFamily::by_name(cfg.model);
    const auto conv = cfg.conv();
    const int N = family.box.dimension();
    auto rho_set = test_set_points(cfg.test_set, N);
    const int n = static_cast<int>(std::lround(1.0 / cfg.h_list.front()));
    fs::create_directories(cfg.out);
    echo_config(cfg, cfg.out);

    struct Task {
        std::size_t rho_idx;
        double y;
    };
    std::vector<Task> tasks;
    for (std::size_t ri = 0; ri < rho_set.size(); ++ri) {
        auto params = family.physical_params(rho_set[ri]);
        auto fp = family.problem(params);
        double a0 = fp.alpha(0.0), b0 = fp.beta(0.0);
        if (cfg.y_list.empty()) {
            tasks.push_back({ri, 0.5 * (a0 + b0)});
        } else {
            for (double y : cfg.y_list) {
                if (!(y >= a0 && y <= b0))
                    throw ConfigError("y=" + fmt17(y) + " outside the initial interval [" +
                                      fmt17(a0) + "," + fmt17(b0) + "]");
                tasks.push_back({ri, y});
            }
        }
    }

    struct Row {
        std::string text;
        bool failed = false;
    };
    std::vector<Row> rows(tasks.size());
    parallel_for(static_cast<int>(tasks.size()), cfg.threads, [&](int i) {
        const Task& task = tasks[static_cast<std::size_t>(i)];
        const auto& rho = rho_set[task.rho_idx];
        std::ostringstream line;
        line << cfg.model;
        for (double r : rho) line << "," << fmt17(r);
        line << "," << fmt17(task.y);
        try {
            double p_mrm = first_hitting_prob(family, rho, task.y, n, conv);
            auto params = family.physical_params(rho);
            auto fp = family.problem(params);
            if (conv == Convention::PaperCompat) {
                // the published substitution at sigma=1 describes the process
                // with half the nominal drift; simulate that same process
                auto mu = fp.mu;
                fp.mu = [mu](double t, double x) { return 0.5 * mu(t, x); };
                auto mux = fp.mu_x;
                fp.mu_x = [mux](double t, double x) { return 0.5 * mux(t, x); };
            }
            MCConfig mc;
            mc.paths = cfg.mc_paths;
            mc.dt = cfg.mc_dt;
            mc.seed = cfg.seed + 0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(i);
            mc.bridge_correction = true;
            auto r = mc_first_hit(fp, task.y, mc);
            line << "," << fmt17(p_mrm) << "," << fmt17(r.p) << "," << fmt17(r.se);
            rows[static_cast<std::size_t>(i)].text = line.str();
        } catch (const std::exception&) {
            line << ",FAILED,FAILED,FAILED";
            rows[static_cast<std::size_t>(i)].text = line.str();
            rows[static_cast<std::size_t>(i)].failed = true;
        }
    });

    std::ofstream csv(fs::path(cfg.out) / "probability.csv");
    csv << "model";
    for (int d = 1; d <= N; ++d) csv << ",rho" << d;
    csv << ",y,p_mrm,p_mc,mc_se\n";
    bool any_failed = false;
    for (const Row& row : rows) {
        csv << row.text << "\n";
        any_failed = any_failed || row.failed;
    }
    csv.flush();
    return any_failed ? kExitNumerical : 0;
}

// ----------------------------------------------------------------------- plot

struct Series {
    std::string label;
    std::vector<std::pair<double, double>> pts;  // (x, y), log-log positive
};

int cmd_plot(const std::string& csv_path, const std::string& out_dir) {
    std::ifstream in(csv_path);
    if (!in) throw ConfigError("cannot open CSV file: " + csv_path);
    std::string header;
    if (!std::getline(in, header)) throw ConfigError("empty CSV file");
    header = trim(header);

    std::vector<Series> series;
    std::string guide_note;
    bool guide_up;  // guide slope +1 (errors vs h) or -1 (errors vs points)
    if (header == "model,rho,h,err_xnorm") {
        guide_up = true;
        guide_note = "slope 1";
        Series s;
        s.label = "max over test set";
        std::map<double, double> best;  // h -> max err
        std::string line;
        bool saw_max = false;
        while (std::getline(in, line)) {
            line = trim(line);
            if (line.empty()) continue;
            std::stringstream ss(line);
            std::string model, rho, hs, err;
            if (!std::getline(ss, model, ',') || !std::getline(ss, rho, ',') ||
                !std::getline(ss, hs, ',') || !std::getline(ss, err, ','))
                throw ConfigError("malformed CSV row: " + line);
            if (err == "FAILED") continue;
            double h = std::stod(hs), e = std::stod(err);
            if (rho == "max") {
                best[h] = e;
                saw_max = true;
            } else if (!saw_max) {
                auto it = best.find(h);
                best[h] = it == best.end() ? e : std::max(it->second, e);
            }
        }
        for (auto [h, e] : best)
            if (e > 0.0) s.pts.emplace_back(h, e);
        series.push_back(std::move(s));
    } else if (header == "model,h,q,points,max_err") {
        guide_up = false;
        guide_note = "slope -1";
        std::map<std::string, Series> by_h;
        std::string line;
        while (std::getline(in, line)) {
            line = trim(line);
            if (line.empty()) continue;
            std::stringstream ss(line);
            std::string model, hs, qs, pts, err;
            if (!std::getline(ss, model, ',') || !std::getline(ss, hs, ',') ||
                !std::getline(ss, qs, ',') || !std::getline(ss, pts, ',') ||
                !std::getline(ss, err, ','))
                throw ConfigError("malformed CSV row: " + line);
            if (err == "FAILED") continue;
            double p = std::stod(pts), e = std::stod(err);
            if (e <= 0.0) continue;
            auto& s = by_h[hs];
            s.label = "h=" + hs;
            s.pts.emplace_back(p, e);
        }
        for (auto& [hs, s] : by_h) series.push_back(std::move(s));
    } else {
        throw ConfigError("unrecognized CSV header: " + header);
    }

    std::size_t total = 0;
    for (const auto& s : series) total += s.pts.size();
    if (total == 0) throw ConfigError("no plottable data rows in " + csv_path);

    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series)
        for (auto [x, y] : s.pts) {
            xmin = std::min(xmin, std::log10(x));
            xmax = std::max(xmax, std::log10(x));
            ymin = std::min(ymin, std::log10(y));
            ymax = std::max(ymax, std::log10(y));
        }
    // slope guide anchored at the first data point of the first series
    auto [gx0, gy0] = series.front().pts.front();
    std::vector<std::pair<double, double>> guide;
    for (auto [x, y] : series.front().pts) {
        double gy = guide_up ? gy0 * (x / gx0) : gy0 * (gx0 / x);
        guide.emplace_back(x, gy);
        ymin = std::min(ymin, std::log10(gy));
        ymax = std::max(ymax, std::log10(gy));
    }
    if (xmax - xmin < 1e-9) xmax = xmin + 1.0;
    if (ymax - ymin < 1e-9) ymax = ymin + 1.0;

    const double W = 640, H = 480, ml = 70, mr = 20, mt = 30, mb = 50;
    auto px = [&](double x) {
        return ml + (std::log10(x) - xmin) / (xmax - xmin) * (W - ml - mr);
    };
    auto py = [&](double y) {
        return H - mb - (std::log10(y) - ymin) / (ymax - ymin) * (H - mt - mb);
    };
    auto coord = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", v);
        return std::string(buf);
    };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

    fs::create_directories(out_dir);
    fs::path svg_path = fs::path(out_dir) / (fs::path(csv_path).stem().string() + ".svg");
    std::ofstream svg(svg_path);
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    svg << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    svg << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\""
        << H - mb << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb
        << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << W / 2 << "\" y=\"" << H - 12
        << "\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\">log10 "
        << (guide_up ? "h" : "points") << " in [" << fmt17(xmin) << ", " << fmt17(xmax)
        << "]</text>\n";
    svg << "<text x=\"16\" y=\"" << H / 2
        << "\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\" "
           "transform=\"rotate(-90 16 "
        << H / 2 << ")\">log10 error in [" << fmt17(ymin) << ", " << fmt17(ymax)
        << "]</text>\n";

    auto polyline = [&](const std::vector<std::pair<double, double>>& pts, const char* color,
                        bool dashed) {
        std::vector<std::pair<double, double>> sorted = pts;
        std::sort(sorted.begin(), sorted.end());
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\"";
        if (dashed) svg << " stroke-dasharray=\"6 4\"";
        svg << " points=\"";
        for (auto [x, y] : sorted) svg << coord(px(x)) << "," << coord(py(y)) << " ";
        svg << "\"/>\n";
        if (!dashed)
            for (auto [x, y] : sorted)
                svg << "<circle cx=\"" << coord(px(x)) << "\" cy=\"" << coord(py(y))
                    << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    };
    polyline(guide, "#999999", true);
    svg << "<text x=\"" << W - mr - 4 << "\" y=\"" << mt + 14
        << "\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"end\" fill=\"#999999\">"
        << guide_note << " guide</text>\n";
    int ci = 0;
    for (const auto& s : series) {
        const char* color = colors[ci % 5];
        polyline(s.pts, color, false);
        svg << "<text x=\"" << W - mr - 4 << "\" y=\"" << mt + 30 + 16 * ci
            << "\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"end\" fill=\""
            << color << "\">" << s.label << "</text>\n";
        ++ci;
    }
    svg << "</svg>\n";
    std::printf("wrote %s\n", svg_path.string().c_str());
    return 0;
}

// ------------------------------------------------------------------- selftest

int cmd_selftest() {
    int failures = 0;
    auto check = [&](const char* name, bool ok) {
        std::printf("%s %s\n", ok ? "PASS" : "FAIL", name);
        if (!ok) ++failures;
    };

    check("driftless steady state at x=0.5", const_drift_steady(0.0, 0.5) == 0.5);
    check("constant-drift steady state (ruin probability)",
          std::abs(const_drift_steady(2.0, 0.5) -
                   (std::exp(-1.0) - std::exp(-2.0)) / (1.0 - std::exp(-2.0))) < 1e-14);
    check("half-line heat layer value",
          std::abs(u_heat_layer(0.01, 0.1) - 0.4795001221869535) < 1e-12);

    {
        FPProblem p;
        p.mu = [](double, double) { return 0.0; };
        p.mu_x = [](double, double) { return 0.0; };
        p.alpha = [](double t) { return t / 6.0; };
        p.beta = [](double t) { return 1.0 - t / 6.0; };
        p.alpha_dot = [](double) { return 1.0 / 6.0; };
        p.beta_dot = [](double) { return -1.0 / 6.0; };
        p.sigma = 1.0;
        p.tau = 1.0;
        p.shape = {BoundaryShape::Kind::CollapsingLinear, 1.0, 3.0};
        auto tp = to_tilde(p, Convention::PaperCompat);
        auto tc = solve_time_change(tp);
        check("collapsing-boundary end time", std::abs(tc.T - 0.75) < 1e-12);
        check("time change hits the horizon", std::abs(tc.value(tc.T) - tp.Ttilde) < 1e-12);
    }
    {
        auto pts = cc::points(2);
        check("level-2 interpolation nodes",
              pts.size() == 3 && pts[0] == -1.0 && pts[1] == 0.0 && pts[2] == 1.0);
        auto s = SparseInterpolant<double>::build(
            2, 3, [](const std::vector<double>& x) { return x[0]; });
        check("sparse grid point count (N=2, q=3)", s.nodes().size() == 5);
        check("sparse grid reproduces a linear function",
              std::abs(s({0.3, -0.7}) - 0.3) < 1e-13);
    }
    {
        auto sys = assemble([](double, double) { return 0.5; }, 1.0, Mesh(8), 0.0);
        auto w = solve_mrm(sys);
        check("zero forcing gives the zero solution", w.values.norm() == 0.0);
    }
    {
        auto m = ModelFamily::linear_drift();
        double p = first_hitting_prob(m, {0.0, 0.0, -1.0 / 3.0}, 0.5, 32);
        check("symmetric driftless hitting probability", std::abs(p - 0.5) < 5e-3);
    }
    {
        FPProblem p;
        p.mu = [](double, double) { return 0.0; };
        p.mu_x = [](double, double) { return 0.0; };
        p.alpha = [](double) { return 0.0; };
        p.beta = [](double) { return 1.0; };
        p.alpha_dot = [](double) { return 0.0; };
        p.beta_dot = [](double) { return 0.0; };
        p.sigma = 1.0;
        p.tau = 20.0;
        p.shape.kind = BoundaryShape::Kind::Constant;
        MCConfig mc;
        mc.paths = 50000;
        mc.dt = 1e-3;
        mc.seed = 17;
        auto r = mc_first_hit(p, 0.5, mc);
        check("symmetric random walk splits evenly", std::abs(r.p - 0.5) <= 3.0 * r.se);
        auto r2 = mc_first_hit(p, 0.5, mc);
        check("Monte Carlo reproducibility", r.p == r2.p);
    }
    return failures == 0 ? 0 : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"First-hitting-time solver toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_override, csv_path;
    std::optional<std::uint64_t> seed_override;
    std::optional<int> threads_override;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "key=value config file");
        sub->add_option("--out", out_override, "output directory");
        sub->add_option("--threads", threads_override, "worker count");
        sub->add_option("--seed", seed_override, "base RNG seed");
    };

    auto* conv_cmd = app.add_subcommand("convergence", "mesh-refinement error study");
    add_common(conv_cmd);
    auto* interp_cmd = app.add_subcommand("interpolate", "sparse-grid interpolation study");
    add_common(interp_cmd);
    auto* prob_cmd = app.add_subcommand("probability", "hitting probabilities vs Monte Carlo");
    add_common(prob_cmd);
    auto* plot_cmd = app.add_subcommand("plot", "render a CSV produced by this tool as SVG");
    plot_cmd->add_option("--csv", csv_path, "input CSV path")->required();
    plot_cmd->add_option("--out", out_override, "output directory");
    auto* self_cmd = app.add_subcommand("selftest", "run quick built-in checks");
    (void)self_cmd;

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        RunConfig cfg;
        if (!config_path.empty()) apply_config_file(cfg, config_path);
        if (!out_override.empty()) cfg.out = out_override;
        if (seed_override) cfg.seed = *seed_override;
        if (threads_override) cfg.threads = *threads_override;
        cfg.validate();

        if (app.got_subcommand("convergence")) return cmd_convergence(cfg);
        if (app.got_subcommand("interpolate")) return cmd_interpolate(cfg);
        if (app.got_subcommand("probability")) return cmd_probability(cfg);
        if (app.got_subcommand("plot"))
            return cmd_plot(csv_path, out_override.empty() ? "." : out_override);
        if (app.got_subcommand("selftest")) return cmd_selftest();
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return kExitNumerical;
    }
    return 0;
}
