#pragma once

// Experiment configuration: a line-oriented `key = value` format with units
// in the key names. Parsing validates every model invariant; serialization
// produces a canonical text that reparses to an equal Experiment.

#include "fblab/model.hpp"

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fblab {

enum class Task { Curve, Uncertainty, Wegner, Ids, Gap, MsaParams, InitialScale, Greens, Localize, DynMoment };

inline const std::vector<std::pair<Task, std::string>>& task_names() {
    static const std::vector<std::pair<Task, std::string>> names = {
        {Task::Curve, "curve"},        {Task::Uncertainty, "uncertainty"}, {Task::Wegner, "wegner"},
        {Task::Ids, "ids"},            {Task::Gap, "gap"},                 {Task::MsaParams, "msa-params"},
        {Task::InitialScale, "initial-scale"}, {Task::Greens, "greens"},   {Task::Localize, "localize"},
        {Task::DynMoment, "dynmoment"}};
    return names;
}

inline std::string task_name(Task t) {
    for (const auto& [k, v] : task_names())
        if (k == t) return v;
    return "?";
}

inline Task parse_task(const std::string& s) {
    for (const auto& [k, v] : task_names())
        if (v == s) return k;
    throw ConfigError("unknown task '" + s + "'");
}

/// Operator analysed by the single-operator tasks (greens, localize).
enum class OperatorKind { Free, Full, Sample };

struct EnergyWindow {
    double lo = 0.0;
    double hi = 0.0;
    friend bool operator==(const EnergyWindow&, const EnergyWindow&) = default;
};

struct TaskParams {
    std::vector<EnergyWindow> windows;  // relative to E0 = inf spec H0 on the configured box
    std::size_t t_points = 32;
    std::optional<double> t_max;
    std::vector<int> L_list;
    std::vector<double> eps_list;
    double window_offset = 0.0;
    double delta = 0.0;
    std::size_t n_samples = 0;
    std::vector<double> energies;
    double m = 1.0;
    std::string msa_m = "1", msa_alpha = "5", msa_xi = "1", msa_kappa = "1/20";
    std::string source = "center";
    OperatorKind op = OperatorKind::Sample;
    double p_mom = 1.0;
    double K_radius = 1.0;

    friend bool operator==(const TaskParams&, const TaskParams&) = default;
};

struct Experiment {
    ModelConfig model;
    Task task = Task::Curve;
    TaskParams params;
    std::optional<std::uint64_t> master_seed;
    std::string background_file;  // as written in the config; resolved against base_dir
    std::string law_file;
    std::filesystem::path base_dir;

    friend bool operator==(const Experiment& a, const Experiment& b) {
        return a.model == b.model && a.task == b.task && a.params == b.params && a.master_seed == b.master_seed &&
               a.background_file == b.background_file && a.law_file == b.law_file;
    }
};

// ---------------------------------------------------------------------------
// Number formatting

/// Shortest decimal that round-trips to the same double.
inline std::string format_double(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) {
        cur = trim(cur);
        if (!cur.empty()) out.push_back(cur);
    }
    return out;
}

inline std::vector<std::string> words(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string w;
    while (in >> w) out.push_back(w);
    return out;
}

inline double parse_double(const std::string& key, const std::string& s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v))
        throw ConfigError("key '" + key + "': not a finite number: '" + s + "'");
    return v;
}

inline long long parse_int(const std::string& key, const std::string& s) {
    long long v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ConfigError("key '" + key + "': not an integer: '" + s + "'");
    return v;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& s) {
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ConfigError("key '" + key + "': not an unsigned 64-bit integer: '" + s + "'");
    return v;
}

inline std::vector<double> parse_double_list(const std::string& key, const std::string& s) {
    std::vector<double> out;
    for (const auto& item : split(s, ',')) out.push_back(parse_double(key, item));
    return out;
}

/// "a:b:n" is n evenly spaced points from a to b; otherwise a comma list.
inline std::vector<double> parse_grid(const std::string& key, const std::string& s) {
    if (s.find(':') != std::string::npos && s.find(',') == std::string::npos) {
        const auto parts = split(s, ':');
        if (parts.size() != 3) throw ConfigError("key '" + key + "': grid must be start:stop:count");
        const double a = parse_double(key, parts[0]), b = parse_double(key, parts[1]);
        const auto n = parse_int(key, parts[2]);
        if (n < 2) throw ConfigError("key '" + key + "': grid needs at least 2 points");
        std::vector<double> out(static_cast<std::size_t>(n));
        for (long long i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
        out.back() = b;
        return out;
    }
    return parse_double_list(key, s);
}

inline std::vector<double> read_numbers_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read table file '" + path.string() + "'");
    std::vector<double> out;
    std::string tok;
    while (in >> tok) {
        if (tok[0] == '#') {
            std::getline(in, tok);
            continue;
        }
        out.push_back(parse_double(path.string(), tok));
    }
    return out;
}

template <typename T>
std::string join(const std::vector<T>& xs, const std::string& sep, auto fmt) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? sep : "") + fmt(xs[i]);
    return s;
}

}  // namespace detail

inline const std::vector<std::string>& known_config_keys() {
    static const std::vector<std::string> keys = {
        "task", "seed", "d", "L_sites", "h", "background", "impurities", "impurity_seed", "c_U", "C_U",
        "r_U_sites", "R_U_sites", "profile_shape", "eta_max", "law", "n_samples", "windows_rel_E0", "t_points",
        "t_max", "L_list_sites", "eps_list", "window_offset", "delta", "energies", "m", "msa_m", "alpha", "xi",
        "kappa_msa", "source", "operator", "p_mom", "K_radius_sites"};
    return keys;
}

/// Parses and validates an experiment. `base_dir` resolves table files.
inline Experiment parse_config(const std::string& text, const std::filesystem::path& base_dir = ".") {
    std::map<std::string, std::string> kv;
    {
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        const auto& known = known_config_keys();
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            line = detail::trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
            const auto key = detail::trim(line.substr(0, eq));
            const auto value = detail::trim(line.substr(eq + 1));
            if (std::find(known.begin(), known.end(), key) == known.end())
                throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
            if (kv.count(key)) throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
            if (value.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty value for '" + key + "'");
            kv[key] = value;
        }
    }
    auto get = [&](const std::string& k) -> std::optional<std::string> {
        const auto it = kv.find(k);
        if (it == kv.end()) return std::nullopt;
        return it->second;
    };
    auto require = [&](const std::string& k) -> std::string {
        auto v = get(k);
        if (!v) throw ConfigError("missing required key '" + k + "'");
        return *v;
    };

    Experiment e;
    e.base_dir = base_dir;
    ModelConfig& m = e.model;
    if (auto v = get("task")) e.task = parse_task(*v);
    if (auto v = get("seed")) e.master_seed = detail::parse_u64("seed", *v);

    m.dim = static_cast<int>(detail::parse_int("d", require("d")));
    m.box_side = static_cast<int>(detail::parse_int("L_sites", require("L_sites")));
    if (auto v = get("h")) m.spacing = detail::parse_double("h", *v);
    m.eta_max = detail::parse_double("eta_max", require("eta_max"));

    if (auto v = get("background")) {
        const auto w = detail::words(*v);
        if (w.size() == 2 && w[0] == "constant") {
            m.background.constant = detail::parse_double("background", w[1]);
        } else if (w.size() == 2 && w[0] == "table") {
            e.background_file = w[1];
            m.background.table_path = w[1];
            m.background.table = detail::read_numbers_file(base_dir / w[1]);
        } else {
            throw ConfigError("key 'background': expected 'constant <value>' or 'table <file>'");
        }
    }

    {
        const auto w = detail::words(require("impurities"));
        if (w.size() == 2 && w[0] == "sublattice") {
            m.geometry = ImpurityGeometry::sublattice(static_cast<int>(detail::parse_int("impurities", w[1])));
        } else if (w.size() == 3 && w[0] == "jitter") {
            m.geometry = ImpurityGeometry::jittered(static_cast<int>(detail::parse_int("impurities", w[1])),
                                                    static_cast<int>(detail::parse_int("impurities", w[2])));
        } else {
            throw ConfigError("key 'impurities': expected 'sublattice <period>' or 'jitter <period> <jitter>'");
        }
        if (auto s = get("impurity_seed")) m.geometry.seed = detail::parse_u64("impurity_seed", *s);
    }

    m.profile.c_U = detail::parse_double("c_U", require("c_U"));
    m.profile.C_U = detail::parse_double("C_U", require("C_U"));
    m.profile.r_U = detail::parse_double("r_U_sites", require("r_U_sites"));
    m.profile.R_U = detail::parse_double("R_U_sites", require("R_U_sites"));
    if (auto v = get("profile_shape")) {
        if (*v == "plateau")
            m.profile.shape = ProfileShape::Plateau;
        else if (*v == "tent")
            m.profile.shape = ProfileShape::Tent;
        else
            throw ConfigError("key 'profile_shape': expected plateau or tent");
    }

    {
        const auto w = detail::words(require("law"));
        const std::string kind = w.empty() ? "" : w[0];
        auto arg = [&](const std::string& what) {
            if (w.size() != 2) throw ConfigError("key 'law': '" + kind + "' needs " + what);
            return detail::parse_double("law", w[1]);
        };
        if (kind == "uniform" && w.size() == 1)
            m.law = CouplingDistribution::uniform(m.eta_max);
        else if (kind == "pointmass")
            m.law = CouplingDistribution::point_mass(arg("a location"), m.eta_max);
        else if (kind == "bernoulli")
            m.law = CouplingDistribution::bernoulli(arg("the mass at 0"), m.eta_max);
        else if (kind == "loghoelder")
            m.law = CouplingDistribution::log_hoelder(arg("an exponent"), m.eta_max);
        else if (kind == "table" && w.size() == 2) {
            e.law_file = w[1];
            m.law = CouplingDistribution::tabulated(detail::read_numbers_file(base_dir / w[1]), m.eta_max);
        } else
            throw ConfigError("key 'law': expected uniform | pointmass <v> | bernoulli <p0> | loghoelder <alpha> | "
                              "table <file>");
    }
    m.validate();

    TaskParams& p = e.params;
    if (auto v = get("n_samples")) {
        const auto n = detail::parse_int("n_samples", *v);
        if (n < 0) throw ConfigError("key 'n_samples' must be >= 0");
        p.n_samples = static_cast<std::size_t>(n);
    }
    if (auto v = get("windows_rel_E0")) {
        for (const auto& item : detail::split(*v, ',')) {
            const auto ab = detail::split(item, ':');
            if (ab.size() != 2) throw ConfigError("key 'windows_rel_E0': windows are written lo:hi");
            EnergyWindow w{detail::parse_double("windows_rel_E0", ab[0]), detail::parse_double("windows_rel_E0", ab[1])};
            if (!(w.lo <= w.hi)) throw ConfigError("key 'windows_rel_E0': window needs lo <= hi");
            p.windows.push_back(w);
        }
    }
    if (auto v = get("t_points")) {
        const auto n = detail::parse_int("t_points", *v);
        if (n < 1) throw ConfigError("key 't_points' must be >= 1");
        p.t_points = static_cast<std::size_t>(n);
    }
    if (auto v = get("t_max")) {
        p.t_max = detail::parse_double("t_max", *v);
        if (!(*p.t_max > 0)) throw ConfigError("key 't_max' must be > 0");
    }
    if (auto v = get("L_list_sites")) {
        for (const auto& item : detail::split(*v, ',')) {
            const auto L = detail::parse_int("L_list_sites", item);
            if (L < 2 || L % 2) throw ConfigError("key 'L_list_sites': sides must be even and >= 2");
            if (L < 2.0 * m.profile.R_U) throw ConfigError("key 'L_list_sites': side below 2*R_U");
            p.L_list.push_back(static_cast<int>(L));
        }
        if (m.background.table && std::any_of(p.L_list.begin(), p.L_list.end(), [&](int L) { return L != m.box_side; }))
            throw ConfigError("key 'L_list_sites': a tabulated background fixes the box side");
    }
    if (auto v = get("eps_list")) {
        p.eps_list = detail::parse_double_list("eps_list", *v);
        for (double x : p.eps_list)
            if (!(x > 0)) throw ConfigError("key 'eps_list': epsilons must be > 0");
    }
    if (auto v = get("window_offset")) p.window_offset = detail::parse_double("window_offset", *v);
    if (auto v = get("delta")) {
        p.delta = detail::parse_double("delta", *v);
        if (p.delta < 0) throw ConfigError("key 'delta' must be >= 0");
    }
    if (auto v = get("energies")) p.energies = detail::parse_grid("energies", *v);
    if (auto v = get("m")) p.m = detail::parse_double("m", *v);
    if (auto v = get("msa_m")) p.msa_m = *v;
    if (auto v = get("alpha")) p.msa_alpha = *v;
    if (auto v = get("xi")) p.msa_xi = *v;
    if (auto v = get("kappa_msa")) p.msa_kappa = *v;
    if (auto v = get("source")) {
        if (*v != "center") detail::parse_int("source", *v);
        p.source = *v;
    }
    if (auto v = get("operator")) {
        if (*v == "free")
            p.op = OperatorKind::Free;
        else if (*v == "full")
            p.op = OperatorKind::Full;
        else if (*v == "sample")
            p.op = OperatorKind::Sample;
        else
            throw ConfigError("key 'operator': expected free, full or sample");
    }
    if (auto v = get("p_mom")) {
        p.p_mom = detail::parse_double("p_mom", *v);
        if (p.p_mom < 0) throw ConfigError("key 'p_mom' must be >= 0");
    }
    if (auto v = get("K_radius_sites")) {
        p.K_radius = detail::parse_double("K_radius_sites", *v);
        if (!(p.K_radius > 0)) throw ConfigError("key 'K_radius_sites' must be > 0");
    }
    return e;
}

/// Task-specific completeness; called before dispatch.
inline void validate_task(const Experiment& e) {
    const auto& p = e.params;
    auto need_samples = [&] {
        if (p.n_samples == 0) throw ConfigError("task '" + task_name(e.task) + "' needs n_samples > 0");
        if (!e.master_seed) throw ConfigError("task '" + task_name(e.task) + "' needs an explicit master seed");
    };
    switch (e.task) {
        case Task::Curve: break;
        case Task::Uncertainty:
            if (p.windows.empty()) throw ConfigError("task 'uncertainty' needs windows_rel_E0");
            break;
        case Task::Wegner:
            need_samples();
            if (p.eps_list.empty()) throw ConfigError("task 'wegner' needs eps_list");
            break;
        case Task::Ids:
            need_samples();
            if (p.energies.empty()) throw ConfigError("task 'ids' needs energies");
            break;
        case Task::Gap: break;
        case Task::MsaParams: break;
        case Task::InitialScale:
            need_samples();
            if (p.L_list.empty()) throw ConfigError("task 'initial-scale' needs L_list_sites");
            break;
        case Task::Greens:
            if (p.energies.empty()) throw ConfigError("task 'greens' needs energies");
            if (p.op == OperatorKind::Sample && !e.master_seed)
                throw ConfigError("task 'greens' on a sampled operator needs an explicit master seed");
            break;
        case Task::Localize:
            if (p.windows.empty()) throw ConfigError("task 'localize' needs windows_rel_E0");
            if (p.op == OperatorKind::Sample && !e.master_seed)
                throw ConfigError("task 'localize' on a sampled operator needs an explicit master seed");
            break;
        case Task::DynMoment:
            need_samples();
            if (p.windows.empty()) throw ConfigError("task 'dynmoment' needs windows_rel_E0");
            break;
    }
}

/// Canonical text form; parse_config(serialize(e)) == e.
inline std::string serialize(const Experiment& e) {
    const auto& m = e.model;
    const auto& p = e.params;
    std::ostringstream o;
    auto fd = [](double x) { return format_double(x); };
    o << "task = " << task_name(e.task) << "\n";
    if (e.master_seed) o << "seed = " << *e.master_seed << "\n";
    o << "d = " << m.dim << "\n";
    o << "L_sites = " << m.box_side << "\n";
    o << "h = " << fd(m.spacing) << "\n";
    if (m.background.table)
        o << "background = table " << e.background_file << "\n";
    else
        o << "background = constant " << fd(m.background.constant) << "\n";
    if (m.geometry.kind == ImpurityGeometry::Kind::Sublattice)
        o << "impurities = sublattice " << m.geometry.period << "\n";
    else
        o << "impurities = jitter " << m.geometry.period << " " << m.geometry.jitter << "\n";
    o << "impurity_seed = " << m.geometry.seed << "\n";
    o << "c_U = " << fd(m.profile.c_U) << "\n";
    o << "C_U = " << fd(m.profile.C_U) << "\n";
    o << "r_U_sites = " << fd(m.profile.r_U) << "\n";
    o << "R_U_sites = " << fd(m.profile.R_U) << "\n";
    o << "profile_shape = " << (m.profile.shape == ProfileShape::Plateau ? "plateau" : "tent") << "\n";
    o << "eta_max = " << fd(m.eta_max) << "\n";
    switch (m.law.kind) {
        case CouplingDistribution::Kind::PointMass: o << "law = pointmass " << fd(m.law.value) << "\n"; break;
        case CouplingDistribution::Kind::Uniform: o << "law = uniform\n"; break;
        case CouplingDistribution::Kind::Bernoulli: o << "law = bernoulli " << fd(m.law.p_zero) << "\n"; break;
        case CouplingDistribution::Kind::LogHoelder: o << "law = loghoelder " << fd(m.law.alpha) << "\n"; break;
        case CouplingDistribution::Kind::Tabulated: o << "law = table " << e.law_file << "\n"; break;
    }
    o << "n_samples = " << p.n_samples << "\n";
    if (!p.windows.empty())
        o << "windows_rel_E0 = "
          << detail::join(p.windows, ", ", [&](const EnergyWindow& w) { return fd(w.lo) + ":" + fd(w.hi); }) << "\n";
    o << "t_points = " << p.t_points << "\n";
    if (p.t_max) o << "t_max = " << fd(*p.t_max) << "\n";
    if (!p.L_list.empty())
        o << "L_list_sites = " << detail::join(p.L_list, ", ", [](int x) { return std::to_string(x); }) << "\n";
    if (!p.eps_list.empty()) o << "eps_list = " << detail::join(p.eps_list, ", ", fd) << "\n";
    o << "window_offset = " << fd(p.window_offset) << "\n";
    o << "delta = " << fd(p.delta) << "\n";
    if (!p.energies.empty()) o << "energies = " << detail::join(p.energies, ", ", fd) << "\n";
    o << "m = " << fd(p.m) << "\n";
    o << "msa_m = " << p.msa_m << "\n";
    o << "alpha = " << p.msa_alpha << "\n";
    o << "xi = " << p.msa_xi << "\n";
    o << "kappa_msa = " << p.msa_kappa << "\n";
    o << "source = " << p.source << "\n";
    o << "operator = " << (p.op == OperatorKind::Free ? "free" : p.op == OperatorKind::Full ? "full" : "sample") << "\n";
    o << "p_mom = " << fd(p.p_mom) << "\n";
    o << "K_radius_sites = " << fd(p.K_radius) << "\n";
    return o.str();
}

}  // namespace fblab
