#pragma once

#include <sysid/algebra.hpp>
#include <sysid/io.hpp>
#include <sysid/lowerbound.hpp>
#include <sysid/markov.hpp>
#include <sysid/pipeline.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace sysid::cli {

using io::json;

struct SystemSpec {
    std::string family;  // empty: no ground truth
    Index n = 3, m = 2, p = 2;
    double spectral_radius_cap = 1.0;
    std::optional<std::uint64_t> seed;
    double dt = 0.1;
    double delta = 1e-3;
    double lambda = 1.0;
    std::optional<SystemMatrices> matrices;
    std::string file;
};

struct NoiseSpec {
    DistributionKind input = DistributionKind::gaussian;
    DistributionKind kind = DistributionKind::gaussian;
    double sigma_w = 1.0, sigma_z = 1.0, sigma_x0 = 0.0;
};

struct LowerboundSpec {
    std::vector<double> deltas{1e-2, 1e-3, 1e-4};
    std::vector<Index> horizons{10};
    double u_norm = 1.0;
    double lambda = 1.0;
    Index n = 3;
};

struct VarianceSpec {
    std::vector<Index> horizons{100, 1000, 10000};
    Index trials = 2000;
    Index stabilized_horizon = 100000;
};

struct ProbeSpec {
    std::vector<DistributionKind> kinds{std::begin(all_distribution_kinds), std::end(all_distribution_kinds)};
    Index samples = 100000;
    Index directions = 32;
    Index dim = 3;
    std::vector<double> betas{-1, -0.5, 0, 0.5, 1};
    std::vector<Index> power_horizons{10, 100, 1000};
    double kappa = 1e3;
};

struct ExperimentConfig {
    int schema = 1;
    Mode mode = Mode::practical;
    std::uint64_t seed = 1;
    SystemSpec system;
    NoiseSpec noise;
    bool noise_given = false;
    Index horizon = 20000;
    StabilizerSettings stabilizer;
    std::optional<SystemBounds> bounds;
    std::optional<Index> order;
    bool write_hidden = false;
    std::string trajectory;
    std::string output = "out";
    LowerboundSpec lowerbound;
    VarianceSpec variance_demo;
    ProbeSpec probe;
    std::filesystem::path base_dir;  // directory of the config file
};

namespace detail {

inline Index line_of_offset(const std::string& text, std::size_t offset) {
    Index line = 1;
    for (std::size_t i = 0; i < offset && i < text.size(); ++i)
        if (text[i] == '\n') ++line;
    return line;
}

/// Resolves a key path to the line of its first textual occurrence, searching
/// each component after the previous one.
class Locator {
public:
    Locator(const std::string& text, std::string source) : text_(text), source_(std::move(source)) {}

    std::string where(const std::vector<std::string>& path) const {
        std::size_t pos = 0;
        bool found = !path.empty();
        for (const auto& key : path) {
            const auto at = text_.find("\"" + key + "\"", pos);
            if (at == std::string::npos) {
                found = false;
                break;
            }
            pos = at;
        }
        return source_ + (found ? ":" + std::to_string(line_of_offset(text_, pos)) : std::string()) + ": ";
    }

    [[noreturn]] void fail(const std::vector<std::string>& path, const std::string& msg) const {
        std::string dotted;
        for (const auto& k : path) dotted += (dotted.empty() ? "" : ".") + k;
        throw ConfigError(where(path) + (dotted.empty() ? "" : dotted + ": ") + msg);
    }

private:
    const std::string& text_;
    std::string source_;
};

class Section {
public:
    Section(const json& j, std::vector<std::string> path, const Locator& loc) : j_(j), path_(std::move(path)), loc_(loc) {
        if (!j_.is_object()) loc_.fail(path_, "expected an object");
    }

    void allow(std::initializer_list<const char*> keys) const {
        std::set<std::string> ok(keys.begin(), keys.end());
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!ok.count(it.key())) loc_.fail(sub(it.key()), "unknown key");
    }

    bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }
    const json& at(const std::string& key) const { return j_.at(key); }
    std::vector<std::string> sub(const std::string& key) const {
        auto p = path_;
        p.push_back(key);
        return p;
    }
    Section child(const std::string& key) const { return Section(j_.at(key), sub(key), loc_); }

    template <class T>
    void get(const std::string& key, T& out) const {
        if (!has(key)) return;
        const json& v = j_.at(key);
        try {
            if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) throw std::runtime_error("expected a boolean");
                out = v.get<bool>();
            } else if constexpr (std::is_integral_v<T>) {
                if (!v.is_number_integer()) throw std::runtime_error("expected an integer");
                if constexpr (std::is_unsigned_v<T>) {
                    if (v.is_number_unsigned() || v.get<long long>() >= 0) out = v.get<T>();
                    else throw std::runtime_error("expected a non-negative integer");
                } else {
                    out = v.get<T>();
                }
            } else if constexpr (std::is_floating_point_v<T>) {
                if (!v.is_number()) throw std::runtime_error("expected a number");
                out = v.get<T>();
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string()) throw std::runtime_error("expected a string");
                out = v.get<std::string>();
            } else {
                out = v.get<T>();
            }
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            loc_.fail(sub(key), e.what());
        }
    }

    template <class T>
    void get(const std::string& key, std::optional<T>& out) const {
        if (!has(key)) return;
        T v{};
        get(key, v);
        out = v;
    }

    [[noreturn]] void fail(const std::string& key, const std::string& msg) const { loc_.fail(sub(key), msg); }

private:
    const json& j_;
    std::vector<std::string> path_;
    const Locator& loc_;
};

inline DistributionKind kind_at(const Section& sec, const std::string& key, DistributionKind fallback) {
    std::string name;
    sec.get(key, name);
    if (name.empty()) return fallback;
    try {
        return distribution_kind_from_string(name);
    } catch (const Error& e) {
        sec.fail(key, e.what());
    }
}

}  // namespace detail

/// Parses and validates a schema-1 config. Errors carry `<source>:<line>:`.
inline ExperimentConfig parse_config(const std::string& text, const std::string& source = "config") {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(source + ":" + std::to_string(detail::line_of_offset(text, e.byte > 0 ? e.byte - 1 : 0)) +
                          ": invalid JSON: " + e.what());
    }
    detail::Locator loc(text, source);
    detail::Section top(root, {}, loc);
    top.allow({"schema", "mode", "seed", "system", "noise", "horizon", "stabilizer", "order", "write_hidden",
               "trajectory", "output", "lowerbound", "variance_demo", "probe", "description"});
    ExperimentConfig cfg;
    if (!top.has("schema")) loc.fail({}, "missing required key 'schema'");
    top.get("schema", cfg.schema);
    if (cfg.schema != 1) top.fail("schema", "unsupported schema version " + std::to_string(cfg.schema));
    if (top.has("mode")) {
        std::string m;
        top.get("mode", m);
        try {
            cfg.mode = mode_from_string(m);
        } catch (const Error& e) {
            top.fail("mode", e.what());
        }
    }
    top.get("seed", cfg.seed);
    top.get("horizon", cfg.horizon);
    if (cfg.horizon < 1) top.fail("horizon", "must be >= 1");
    top.get("order", cfg.order);
    if (cfg.order && *cfg.order < 1) top.fail("order", "must be >= 1");
    top.get("write_hidden", cfg.write_hidden);
    top.get("trajectory", cfg.trajectory);
    top.get("output", cfg.output);

    if (top.has("system")) {
        auto sec = top.child("system");
        sec.allow({"family", "n", "m", "p", "spectral_radius_cap", "seed", "dt", "delta", "lambda", "A", "B", "C", "D",
                   "file"});
        auto& s = cfg.system;
        sec.get("family", s.family);
        sec.get("n", s.n);
        sec.get("m", s.m);
        sec.get("p", s.p);
        sec.get("spectral_radius_cap", s.spectral_radius_cap);
        sec.get("seed", s.seed);
        sec.get("dt", s.dt);
        sec.get("delta", s.delta);
        sec.get("lambda", s.lambda);
        sec.get("file", s.file);
        if (sec.has("A")) {
            if (!s.family.empty() && s.family != "explicit") sec.fail("A", "explicit matrices conflict with 'family'");
            try {
                json j;
                for (const char* k : {"A", "B", "C", "D"}) {
                    if (!sec.has(k)) sec.fail(k, "missing (explicit systems need A, B, C, D)");
                    j[k] = sec.at(k);
                }
                s.matrices = io::system_from_json(j);
            } catch (const ConfigError&) {
                throw;
            } catch (const Error& e) {
                sec.fail("A", e.what());
            }
            s.family = "explicit";
        } else if (!s.file.empty()) {
            s.family = "file";
        }
        static const std::set<std::string> families{"random-stable", "jordan-integrator", "appendix-scalar",
                                                    "unobservable", "explicit", "file"};
        if (!families.count(s.family))
            sec.fail("family", "unknown family '" + s.family +
                                   "' (random-stable, jordan-integrator, appendix-scalar, unobservable)");
        if (s.n < 1 || s.m < 1 || s.p < 1) sec.fail("n", "dimensions must be positive");
        if (!(s.spectral_radius_cap > 0 && s.spectral_radius_cap <= 1))
            sec.fail("spectral_radius_cap", "must lie in (0, 1]");
        if (s.family == "unobservable" && (s.n < 3 || !(s.delta >= 0 && s.delta < 0.1)))
            sec.fail("delta", "unobservable family needs n >= 3 and 0 <= delta < 0.1");
    }

    if (top.has("noise")) {
        cfg.noise_given = true;
        auto sec = top.child("noise");
        sec.allow({"input", "kind", "sigma_w", "sigma_z", "sigma_x0"});
        cfg.noise.input = detail::kind_at(sec, "input", cfg.noise.input);
        cfg.noise.kind = detail::kind_at(sec, "kind", cfg.noise.kind);
        sec.get("sigma_w", cfg.noise.sigma_w);
        sec.get("sigma_z", cfg.noise.sigma_z);
        sec.get("sigma_x0", cfg.noise.sigma_x0);
        if (cfg.noise.sigma_w < 0 || cfg.noise.sigma_z < 0 || cfg.noise.sigma_x0 < 0)
            sec.fail("sigma_w", "noise scales must be non-negative");
    } else if (cfg.system.family == "appendix-scalar") {
        cfg.noise.sigma_w = 10.0;
    }

    if (top.has("stabilizer")) {
        auto sec = top.child("stabilizer");
        sec.allow({"s", "k", "eps", "P0", "P1", "L", "num_checkpoints", "c0", "tol", "max_iters", "minimize_margin",
                   "bounds"});
        auto& st = cfg.stabilizer;
        sec.get("s", st.s);
        sec.get("k", st.k);
        sec.get("eps", st.eps);
        sec.get("P0", st.P0);
        sec.get("P1", st.P1);
        sec.get("L", st.L);
        sec.get("num_checkpoints", st.num_checkpoints);
        sec.get("c0", st.c0);
        sec.get("tol", st.tol);
        sec.get("max_iters", st.max_iters);
        sec.get("minimize_margin", st.minimize_margin);
        if (st.s < 1) sec.fail("s", "must be >= 1");
        if (st.k < 0) sec.fail("k", "must be >= 0");
        if (!(st.eps > 0 && st.eps < 1)) sec.fail("eps", "must lie in (0, 1)");
        if (st.P0 < 0 || st.P1 < 0 || st.L < 0) sec.fail("P0", "P0, P1, L must be positive when given");
        if (st.num_checkpoints < 0) sec.fail("num_checkpoints", "must be >= 0");
        if (st.max_iters < 0) sec.fail("max_iters", "must be >= 0");
        if (sec.has("bounds")) {
            auto b = sec.child("bounds");
            b.allow({"norm_A", "norm_B", "norm_C", "norm_D", "kappa", "K", "sigma_w", "sigma_z", "n", "m", "p"});
            SystemBounds sb;
            b.get("norm_A", sb.norm_A);
            b.get("norm_B", sb.norm_B);
            b.get("norm_C", sb.norm_C);
            b.get("norm_D", sb.norm_D);
            b.get("kappa", sb.kappa);
            b.get("K", sb.K);
            b.get("sigma_w", sb.sigma_w);
            b.get("sigma_z", sb.sigma_z);
            b.get("n", sb.n);
            b.get("m", sb.m);
            b.get("p", sb.p);
            if (!(sb.kappa >= 1)) b.fail("kappa", "must be >= 1");
            cfg.bounds = sb;
        }
    }

    if (top.has("lowerbound")) {
        auto sec = top.child("lowerbound");
        sec.allow({"deltas", "horizons", "u_norm", "lambda", "n"});
        sec.get("deltas", cfg.lowerbound.deltas);
        sec.get("horizons", cfg.lowerbound.horizons);
        sec.get("u_norm", cfg.lowerbound.u_norm);
        sec.get("lambda", cfg.lowerbound.lambda);
        sec.get("n", cfg.lowerbound.n);
        for (double d : cfg.lowerbound.deltas)
            if (!(d >= 0 && d < 0.1)) sec.fail("deltas", "each delta must lie in [0, 0.1)");
        for (Index T : cfg.lowerbound.horizons)
            if (T < 0) sec.fail("horizons", "horizons must be >= 0");
        if (cfg.lowerbound.n < 3) sec.fail("n", "must be >= 3");
        if (!(std::abs(cfg.lowerbound.lambda) <= 1)) sec.fail("lambda", "must lie in [-1, 1]");
    }

    if (top.has("variance_demo")) {
        auto sec = top.child("variance_demo");
        sec.allow({"horizons", "trials", "stabilized_horizon"});
        sec.get("horizons", cfg.variance_demo.horizons);
        sec.get("trials", cfg.variance_demo.trials);
        sec.get("stabilized_horizon", cfg.variance_demo.stabilized_horizon);
        if (cfg.variance_demo.trials < 100) sec.fail("trials", "must be >= 100");
        for (Index T : cfg.variance_demo.horizons)
            if (T < 2) sec.fail("horizons", "horizons must be >= 2");
    }

    if (top.has("probe")) {
        auto sec = top.child("probe");
        sec.allow({"kinds", "samples", "directions", "dim", "betas", "power_horizons", "kappa"});
        if (sec.has("kinds")) {
            std::vector<std::string> names;
            sec.get("kinds", names);
            cfg.probe.kinds.clear();
            for (const auto& nm : names) {
                try {
                    cfg.probe.kinds.push_back(distribution_kind_from_string(nm));
                } catch (const Error& e) {
                    sec.fail("kinds", e.what());
                }
            }
        }
        sec.get("samples", cfg.probe.samples);
        sec.get("directions", cfg.probe.directions);
        sec.get("dim", cfg.probe.dim);
        sec.get("betas", cfg.probe.betas);
        sec.get("power_horizons", cfg.probe.power_horizons);
        sec.get("kappa", cfg.probe.kappa);
        if (cfg.probe.samples < 10000) sec.fail("samples", "must be >= 10000");
        if (cfg.probe.dim < 1) sec.fail("dim", "must be >= 1");
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    auto cfg = parse_config(io::read_file(path), path.string());
    cfg.base_dir = path.parent_path();
    return cfg;
}

inline std::filesystem::path resolve_path(const ExperimentConfig& cfg, const std::string& p) {
    std::filesystem::path path(p);
    if (path.is_relative() && !cfg.base_dir.empty()) return cfg.base_dir / path;
    return path;
}

inline std::uint64_t system_seed(const ExperimentConfig& cfg) {
    return cfg.system.seed ? *cfg.system.seed : derive_seed(cfg.seed, streams::system, 0);
}

inline bool has_system(const ExperimentConfig& cfg) { return !cfg.system.family.empty(); }

inline SystemMatrices make_system(const ExperimentConfig& cfg) {
    const auto& s = cfg.system;
    if (s.family == "random-stable") return random_stable_system(s.n, s.m, s.p, system_seed(cfg), s.spectral_radius_cap);
    if (s.family == "jordan-integrator") return jordan_integrator_system(s.dt);
    if (s.family == "appendix-scalar") return appendix_system();
    if (s.family == "unobservable") return build_unobservable(s.n, s.delta, s.lambda, system_seed(cfg)).sys;
    if (s.family == "explicit") return *s.matrices;
    if (s.family == "file") return io::system_from_json(json::parse(io::read_file(resolve_path(cfg, s.file))));
    throw ConfigError("config: no system given");
}

inline NoiseModel make_noise(const ExperimentConfig& cfg, const SystemMatrices& sys) {
    const auto& nz = cfg.noise;
    return {DistributionSpec::isotropic(nz.input, sys.p()), DistributionSpec::isotropic(nz.kind, sys.n(), nz.sigma_w),
            DistributionSpec::isotropic(nz.kind, sys.m(), nz.sigma_z),
            DistributionSpec::isotropic(DistributionKind::gaussian, sys.n(), nz.sigma_x0)};
}

inline json bounds_to_json(const SystemBounds& b) {
    return json{{"norm_A", b.norm_A}, {"norm_B", b.norm_B}, {"norm_C", b.norm_C}, {"norm_D", b.norm_D},
                {"kappa", b.kappa},   {"K", b.K},           {"sigma_w", b.sigma_w}, {"sigma_z", b.sigma_z},
                {"n", b.n},           {"m", b.m},           {"p", b.p}};
}

inline json constraints_to_json(const ConstraintConfig& c) {
    return json{{"s", c.s},   {"k", c.k},           {"P0", c.P0},
                {"P1", c.P1}, {"L", c.L},           {"L_full", c.L_full},
                {"num_checkpoints", c.num_checkpoints}, {"eps", c.eps}, {"mode", std::string(to_string(c.mode))}};
}

/// The resolved config, defaults filled in.
inline json config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["schema"] = cfg.schema;
    j["mode"] = std::string(to_string(cfg.mode));
    j["seed"] = cfg.seed;
    if (has_system(cfg)) {
        const auto& s = cfg.system;
        json sj{{"family", s.family}};
        if (s.family == "random-stable") {
            sj["n"] = s.n;
            sj["m"] = s.m;
            sj["p"] = s.p;
            sj["spectral_radius_cap"] = s.spectral_radius_cap;
            sj["seed"] = system_seed(cfg);
        } else if (s.family == "jordan-integrator") {
            sj["dt"] = s.dt;
        } else if (s.family == "unobservable") {
            sj["n"] = s.n;
            sj["delta"] = s.delta;
            sj["lambda"] = s.lambda;
            sj["seed"] = system_seed(cfg);
        } else if (s.family == "explicit") {
            sj = io::system_to_json(*s.matrices);
            sj["family"] = "explicit";
        } else if (s.family == "file") {
            sj["file"] = s.file;
        }
        j["system"] = sj;
    }
    j["noise"] = json{{"input", std::string(to_string(cfg.noise.input))},
                      {"kind", std::string(to_string(cfg.noise.kind))},
                      {"sigma_w", cfg.noise.sigma_w},
                      {"sigma_z", cfg.noise.sigma_z},
                      {"sigma_x0", cfg.noise.sigma_x0}};
    j["horizon"] = cfg.horizon;
    const auto& st = cfg.stabilizer;
    json sj{{"s", st.s},
            {"k", st.k},
            {"eps", st.eps},
            {"P0", st.P0},
            {"P1", st.P1},
            {"L", st.L},
            {"num_checkpoints", st.num_checkpoints},
            {"c0", st.c0},
            {"tol", st.tol},
            {"max_iters", st.max_iters},
            {"minimize_margin", st.minimize_margin}};
    if (cfg.bounds) sj["bounds"] = bounds_to_json(*cfg.bounds);
    j["stabilizer"] = sj;
    if (cfg.order) j["order"] = *cfg.order;
    j["write_hidden"] = cfg.write_hidden;
    if (!cfg.trajectory.empty()) j["trajectory"] = cfg.trajectory;
    j["output"] = cfg.output;
    j["lowerbound"] = json{{"deltas", cfg.lowerbound.deltas},
                           {"horizons", cfg.lowerbound.horizons},
                           {"u_norm", cfg.lowerbound.u_norm},
                           {"lambda", cfg.lowerbound.lambda},
                           {"n", cfg.lowerbound.n}};
    j["variance_demo"] = json{{"horizons", cfg.variance_demo.horizons},
                              {"trials", cfg.variance_demo.trials},
                              {"stabilized_horizon", cfg.variance_demo.stabilized_horizon}};
    json kinds = json::array();
    for (auto k : cfg.probe.kinds) kinds.push_back(std::string(to_string(k)));
    j["probe"] = json{{"kinds", kinds},
                      {"samples", cfg.probe.samples},
                      {"directions", cfg.probe.directions},
                      {"dim", cfg.probe.dim},
                      {"betas", cfg.probe.betas},
                      {"power_horizons", cfg.probe.power_horizons},
                      {"kappa", cfg.probe.kappa}};
    return j;
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

/// Output files are staged in memory and written only after every step succeeded.
class OutputSet {
public:
    explicit OutputSet(std::filesystem::path dir) : dir_(std::move(dir)) {}
    void add(const std::string& name, std::string content) { files_.emplace_back(name, std::move(content)); }
    void commit() const {
        std::filesystem::create_directories(dir_);
        for (const auto& [name, content] : files_) io::write_file(dir_ / name, content);
    }
    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
    std::vector<std::pair<std::string, std::string>> files_;
};

inline int cmd_simulate(const ExperimentConfig& cfg, std::ostream& out) {
    if (!has_system(cfg)) throw ConfigError("simulate: config has no 'system'");
    const auto sys = make_system(cfg);
    const auto tr = simulate(sys, make_noise(cfg, sys), cfg.horizon, cfg.seed);
    OutputSet files(cfg.output);
    files.add("trajectory.csv", io::trajectory_csv(tr));
    if (cfg.write_hidden) files.add("trajectory.hidden.csv", io::hidden_csv(tr));
    files.add("system.json", dump(io::system_to_json(sys)));
    files.commit();
    out << "simulate: T=" << tr.T << " n=" << sys.n() << " m=" << sys.m() << " p=" << sys.p()
        << " max|y|=" << io::format_number(tr.y.cwiseAbs().maxCoeff())
        << " rho(A)=" << io::format_number(spectral_radius(sys.A)) << " -> " << files.dir().string() << "\n";
    return 0;
}

inline json per_lag_errors(const std::vector<Matrix>& truth, const MarkovEstimate& est) {
    json arr = json::array();
    for (Index j = 0; j <= est.k && j < static_cast<Index>(truth.size()); ++j)
        arr.push_back((truth[static_cast<std::size_t>(j)] - est.blocks[static_cast<std::size_t>(j)]).norm());
    return arr;
}

inline int cmd_identify(const ExperimentConfig& cfg, const std::string& trajectory_override, std::ostream& out) {
    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    std::optional<SystemMatrices> truth;
    if (has_system(cfg)) truth = make_system(cfg);
    Trajectory tr;
    const std::string tpath = trajectory_override.empty() ? cfg.trajectory : trajectory_override;
    if (!tpath.empty()) {
        const auto path = trajectory_override.empty() ? resolve_path(cfg, tpath) : std::filesystem::path(tpath);
        tr = io::trajectory_from_csv(io::read_file(path), path.string());
    } else if (truth) {
        tr = simulate(*truth, make_noise(cfg, *truth), cfg.horizon, cfg.seed);
    } else {
        throw ConfigError("identify: need a trajectory (--trajectory or 'trajectory') or a system to simulate");
    }
    SystemBounds bounds;
    if (cfg.bounds) {
        bounds = *cfg.bounds;
    } else if (truth) {
        bounds = SystemBounds::from_system(*truth, make_noise(cfg, *truth), cfg.stabilizer.s);
    } else {
        throw ConfigError("identify: without a ground-truth system, 'stabilizer.bounds' is required");
    }
    if (truth && (truth->m() != tr.m() || truth->p() != tr.p()))
        throw DimensionError("identify: trajectory dimensions do not match the configured system");
    const Index order = cfg.order ? *cfg.order : (truth ? truth->n() : bounds.n);
    const auto res = identify(tr, bounds, cfg.stabilizer, cfg.mode, order);

    json report;
    report["command"] = "identify";
    report["mode"] = std::string(to_string(cfg.mode));
    report["seed"] = cfg.seed;
    report["trajectory_seed"] = tr.seed;
    report["horizon"] = tr.T;
    report["order"] = order;
    report["bounds"] = bounds_to_json(bounds);
    report["constraints"] = constraints_to_json(res.constraints);
    report["stabilizer"] = json{{"feasible", res.solution.feasible},
                                {"max_violation", res.solution.max_violation},
                                {"margin", res.solution.margin},
                                {"iterations", res.solution.iterations},
                                {"alpha_norms", [&] {
                                     json a = json::array();
                                     for (const auto& m : res.solution.coefficients.alpha) a.push_back(m.norm());
                                     return a;
                                 }()}};
    report["realization"] = json{{"degenerate", res.realization.degenerate},
                                 {"singular_values", std::vector<double>(res.realization.singular_values.data(),
                                                                         res.realization.singular_values.data() +
                                                                             res.realization.singular_values.size())}};
    if (truth) {
        const auto X = markov_parameters(*truth, res.estimate.k);
        const auto naive = naive_estimate(tr, res.estimate.k);
        report["markov_errors"] = per_lag_errors(X, res.estimate);
        report["naive_markov_errors"] = per_lag_errors(X, naive);
        report["max_markov_error"] = max_block_error(X, res.estimate);
        report["naive_max_markov_error"] = max_block_error(X, naive);
        if (truth->n() == order) {
            const auto ev = align_similarity(*truth, res.realization);
            report["markov_distance"] = ev.markov_error;
            report["alignment"] = json{{"residual_A", ev.residual_A},
                                       {"residual_B", ev.residual_B},
                                       {"residual_C", ev.residual_C},
                                       {"residual_D", ev.residual_D},
                                       {"parameter_gap", ev.parameter_gap()},
                                       {"transform", io::matrix_to_json(ev.transform)},
                                       {"transform_condition", ev.transform_condition},
                                       {"alignment_failed", ev.alignment_failed}};
        } else {
            report["markov_distance"] = markov_distance(*truth, res.realization.system(), 2 * cfg.stabilizer.s);
        }
    }
    report["timings"] = json{{"stabilize_s", res.seconds_stabilize},
                             {"estimate_s", res.seconds_estimate},
                             {"realize_s", res.seconds_realize},
                             {"total_s", std::chrono::duration<double>(clock::now() - start).count()}};
    report["config"] = config_to_json(cfg);

    json real = io::system_to_json(res.realization.system());
    real["s"] = res.realization.s;
    OutputSet files(cfg.output);
    files.add("realization.json", dump(real));
    files.add("markov.json", dump(io::markov_to_json(res.estimate)));
    files.add("report.json", dump(report));
    files.commit();
    out << "identify: T=" << tr.T << " k=" << res.constraints.k << " checkpoints=" << res.constraints.num_checkpoints
        << " max_violation=" << io::format_number(res.solution.max_violation);
    if (report.contains("markov_distance"))
        out << " markov_distance=" << io::format_number(report["markov_distance"].get<double>());
    if (report.contains("max_markov_error"))
        out << " max_markov_error=" << io::format_number(report["max_markov_error"].get<double>())
            << " naive=" << io::format_number(report["naive_max_markov_error"].get<double>());
    out << " -> " << files.dir().string() << "\n";
    return 0;
}

inline int cmd_lowerbound(const ExperimentConfig& cfg, std::ostream& out) {
    const auto& lb = cfg.lowerbound;
    std::ostringstream csv;
    io::CsvWriter w(csv);
    w.row({"delta", "T", "mult_factor", "paper_bound", "markov_distance", "parameter_gap"});
    json rows = json::array();
    const std::uint64_t seed = system_seed(cfg);
    for (double delta : lb.deltas) {
        for (Index T : lb.horizons) {
            const auto r = lowerbound_row(lb.n, delta, lb.lambda, T, lb.u_norm, seed);
            w.row({io::format_number(r.delta), std::to_string(r.T), io::format_number(r.mult_factor),
                   io::format_number(r.paper_bound), io::format_number(r.markov_distance),
                   io::format_number(r.parameter_gap)});
            rows.push_back(json{{"delta", r.delta},
                                {"T", r.T},
                                {"mult_factor", r.mult_factor},
                                {"tv_upper", r.tv_upper},
                                {"paper_bound", r.paper_bound},
                                {"within_bound", r.mult_factor <= r.paper_bound},
                                {"markov_distance", r.markov_distance},
                                {"parameter_gap", r.parameter_gap},
                                {"c", r.c}});
        }
    }
    OutputSet files(cfg.output);
    files.add("lowerbound.csv", csv.str());
    files.add("lowerbound.json", dump(json{{"command", "lowerbound"},
                                           {"system_seed", seed},
                                           {"rows", rows},
                                           {"config", config_to_json(cfg)}}));
    files.commit();
    out << "lowerbound: " << rows.size() << " rows -> " << files.dir().string() << "\n";
    return 0;
}

inline int cmd_variance_demo(const ExperimentConfig& cfg, std::ostream& out) {
    const auto& vd = cfg.variance_demo;
    std::ostringstream csv;
    io::CsvWriter w(csv);
    w.row({"kind", "T", "trials", "second_moment"});
    json rows = json::array();
    for (auto kind : {EstimatorKind::naive, EstimatorKind::stabilized}) {
        for (Index T : vd.horizons) {
            const auto rep = variance_blowup_experiment(T, vd.trials, derive_seed(cfg.seed, streams::trial, T), kind);
            w.row({std::string(to_string(kind)), std::to_string(T), std::to_string(rep.trials),
                   io::format_number(rep.second_moment)});
            rows.push_back(json{{"kind", std::string(to_string(kind))},
                                {"T", T},
                                {"trials", rep.trials},
                                {"second_moment", rep.second_moment},
                                {"standard_error", rep.standard_error}});
        }
    }
    // One long run through the full pipeline on the same system.
    const auto sys = appendix_system();
    const auto noise = appendix_noise();
    const auto tr = simulate(sys, noise, vd.stabilized_horizon, cfg.seed);
    StabilizerSettings st;
    st.s = 1;
    const auto res = identify(tr, SystemBounds::from_system(sys, noise, 1), st, Mode::practical, 1);
    const auto naive = naive_estimate(tr, res.estimate.k);
    const double stab_err = std::abs(res.estimate.blocks[1](0, 0) - 1.0);
    const double naive_err = std::abs(naive.blocks[1](0, 0) - 1.0);
    OutputSet files(cfg.output);
    files.add("variance.csv", csv.str());
    files.add("variance_summary.json",
              dump(json{{"command", "variance-demo"},
                        {"rows", rows},
                        {"long_run", json{{"T", vd.stabilized_horizon},
                                          {"stabilized_abs_error_X1", stab_err},
                                          {"naive_abs_error_X1", naive_err},
                                          {"alpha", res.solution.coefficients[1](0, 0)},
                                          {"k", res.constraints.k}}},
                        {"config", config_to_json(cfg)}}));
    files.commit();
    out << "variance-demo: " << rows.size() << " rows; T=" << vd.stabilized_horizon
        << " |X1_hat - 1| stabilized=" << io::format_number(stab_err) << " naive=" << io::format_number(naive_err)
        << " -> " << files.dir().string() << "\n";
    return 0;
}

inline int cmd_probe(const ExperimentConfig& cfg, std::ostream& out) {
    const auto& pr = cfg.probe;
    json dists = json::array();
    bool all_ok = true;
    for (std::size_t i = 0; i < pr.kinds.size(); ++i) {
        const auto kind = pr.kinds[i];
        const auto seed = derive_seed(cfg.seed, streams::sample, i);
        const double K_hat =
            hypercontractivity_probe(DistributionSpec::isotropic(kind, pr.dim), pr.directions, pr.samples, seed);
        const auto ac = anti_concentration_probe(DistributionSpec::isotropic(kind, 1), pr.betas, pr.samples,
                                                 derive_seed(seed, streams::sample, 1));
        const bool ok = ac.max_probability <= ac.bound;
        all_ok = all_ok && ok;
        dists.push_back(json{{"kind", std::string(to_string(kind))},
                             {"kurtosis", kurtosis(kind)},
                             {"K_declared", declared_K(kind)},
                             {"K_hat", K_hat},
                             {"betas", pr.betas},
                             {"probabilities", ac.probabilities},
                             {"max_probability", ac.max_probability},
                             {"bound", ac.bound},
                             {"within_bound", ok}});
    }
    json report{{"command", "probe"}, {"distributions", dists}};
    if (has_system(cfg)) {
        const auto sys = make_system(cfg);
        const auto rep = condition_report(sys, cfg.stabilizer.s, pr.kappa);
        report["condition"] = json{{"s", cfg.stabilizer.s},
                                   {"kappa", pr.kappa},
                                   {"sigma_max_O2s", rep.sigma_max_O2s},
                                   {"sigma_min_Os", rep.sigma_min_Os},
                                   {"sigma_max_Q2s", rep.sigma_max_Q2s},
                                   {"sigma_min_Qs", rep.sigma_min_Qs},
                                   {"kappa_obs", rep.kappa_obs},
                                   {"kappa_ctrl", rep.kappa_ctrl},
                                   {"spectral_radius", rep.spectral_radius},
                                   {"norm_B", rep.norm_B},
                                   {"norm_C", rep.norm_C},
                                   {"well_behaved", rep.well_behaved}};
        json pn = json::array();
        if (rep.spectral_radius <= 1.0 + spectral_tolerance) {
            for (Index L : pr.power_horizons) {
                const auto r = power_norm_check(sys.A, L);
                pn.push_back(json{{"L", L}, {"log_actual", r.log_actual}, {"log_bound", r.log_bound},
                                  {"holds", r.holds()}});
            }
        }
        report["power_norm"] = pn;
    }
    report["config"] = config_to_json(cfg);
    OutputSet files(cfg.output);
    files.add("probe.json", dump(report));
    files.commit();
    out << "probe: " << dists.size() << " distributions, anti-concentration "
        << (all_ok ? "within" : "OUTSIDE") << " bound -> " << files.dir().string() << "\n";
    return 0;
}

}  // namespace sysid::cli
