#pragma once

// Random operator family: impurity geometry, single-site profiles,
// background potential, coupling laws and disorder sampling on a finite
// lattice box.

#include "fblab/lattice.hpp"
#include "fblab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace fblab {

// ---------------------------------------------------------------------------
// Impurity geometry

struct ImpurityGeometry {
    enum class Kind { Sublattice, Jittered };
    Kind kind = Kind::Sublattice;
    int period = 1;
    int jitter = 0;
    std::uint64_t seed = 0;  // jitter draws use this seed on the geometry stream

    static ImpurityGeometry sublattice(int period) { return {Kind::Sublattice, period, 0, 0}; }
    static ImpurityGeometry jittered(int period, int jitter, std::uint64_t seed = 0) {
        return {Kind::Jittered, period, jitter, seed};
    }

    /// Guaranteed lower bound on the l-infinity separation of distinct centers.
    int min_separation() const { return kind == Kind::Sublattice ? period : period - 2 * jitter; }

    void validate() const {
        if (period < 1) throw ConfigError("impurity period must be >= 1, got " + std::to_string(period));
        if (kind == Kind::Jittered) {
            if (jitter < 0) throw ConfigError("impurity jitter must be >= 0");
            if (period - 2 * jitter < 1)
                throw ConfigError("violates uniform discreteness of the impurity set: period - 2*jitter = " +
                                  std::to_string(period - 2 * jitter) + " < 1");
        }
    }

    friend bool operator==(const ImpurityGeometry&, const ImpurityGeometry&) = default;
};

struct ImpuritySet {
    std::vector<Site> centers;
    int min_separation = 1;  // r_I, in lattice units
    int dim = 1;

    std::size_t size() const { return centers.size(); }

    /// Smallest pairwise l-infinity distance by exhaustive scan (max int if < 2 centers).
    int scan_min_separation() const {
        int best = std::numeric_limits<int>::max();
        for (std::size_t a = 0; a < centers.size(); ++a)
            for (std::size_t b = a + 1; b < centers.size(); ++b)
                best = std::min(best, linf_distance(centers[a], centers[b], dim));
        return best;
    }
};

namespace detail {

inline void for_each_multi_index(int dim, const std::vector<int>& per_axis,
                                 const std::function<void(const std::array<int, 3>&)>& fn) {
    std::array<int, 3> k{0, 0, 0};
    const int count = static_cast<int>(per_axis.size());
    if (count == 0) return;
    for (;;) {
        std::array<int, 3> v{0, 0, 0};
        for (int i = 0; i < dim; ++i) v[i] = per_axis[k[i]];
        fn(v);
        int ax = dim - 1;
        while (ax >= 0 && ++k[ax] == count) k[ax--] = 0;
        if (ax < 0) return;
    }
}

}  // namespace detail

/// Centers of the impurity set inside `box`. Sublattice points are p*k; the
/// jittered variant starts from p*k + j and displaces each coordinate by an
/// integer in [-j, j], which keeps every center inside the box.
inline ImpuritySet build_impurity_set(const ImpurityGeometry& geometry, const Box& box) {
    geometry.validate();
    box.validate();
    ImpuritySet set;
    set.dim = box.dim;
    set.min_separation = geometry.min_separation();

    std::vector<int> base;
    if (geometry.kind == ImpurityGeometry::Kind::Sublattice) {
        for (int x = 0; x < box.side; x += geometry.period) base.push_back(x);
    } else {
        for (int x = geometry.jitter; x + geometry.jitter < box.side; x += geometry.period) base.push_back(x);
    }
    if (base.empty()) throw ConfigError("impurity geometry has no centers inside the box");

    const RngStream stream{geometry.seed, kGeometryStream};
    std::uint64_t counter = 0;
    detail::for_each_multi_index(box.dim, base, [&](const std::array<int, 3>& b) {
        Site c = b;
        if (geometry.kind == ImpurityGeometry::Kind::Jittered && geometry.jitter > 0) {
            for (int i = 0; i < box.dim; ++i)
                c[i] += stream.uniform_int(counter * 3 + static_cast<std::uint64_t>(i), -geometry.jitter,
                                           geometry.jitter);
        }
        ++counter;
        set.centers.push_back(c);
    });
    return set;
}

// ---------------------------------------------------------------------------
// Single-site profile

enum class ProfileShape { Plateau, Tent };

struct ProfileParams {
    double c_U = 1.0;
    double C_U = 1.0;
    double r_U = 1.0;
    double R_U = 1.0;
    ProfileShape shape = ProfileShape::Plateau;

    void validate() const {
        if (!(c_U > 0)) throw ConfigError("single-site lower bound c_U must be > 0");
        if (!(c_U <= C_U)) throw ConfigError("violates the single-site bound c_U <= C_U (c_U = " + std::to_string(c_U) +
                                            ", C_U = " + std::to_string(C_U) + ")");
        if (!(r_U > 0)) throw ConfigError("single-site inner radius r_U must be > 0");
        if (!(r_U <= R_U)) throw ConfigError("violates the single-site bound r_U <= R_U");
    }

    friend bool operator==(const ProfileParams&, const ProfileParams&) = default;
};

/// U(x) on lattice offsets with ||x||_inf < R_U. Plateau: C_U on the inner
/// box Λ_{r_U}, c_U on the shell. Tent: decreases linearly from C_U at the
/// center to c_U at the inner radius, then to zero at the outer radius.
struct SingleSiteProfile {
    struct Entry {
        Site offset;
        double value;
    };
    std::vector<Entry> entries;
    double inner_radius = 1.0;
    double outer_radius = 1.0;
    int dim = 1;

    double at(const Site& offset) const {
        for (const auto& e : entries)
            if (e.offset == offset) return e.value;
        return 0.0;
    }
};

inline SingleSiteProfile make_profile(const ProfileParams& p, int dim) {
    p.validate();
    SingleSiteProfile prof;
    prof.inner_radius = p.r_U;
    prof.outer_radius = p.R_U;
    prof.dim = dim;
    const int reach = static_cast<int>(std::ceil(p.R_U)) - 1;
    std::vector<int> axis;
    for (int x = -reach; x <= reach; ++x) axis.push_back(x);
    detail::for_each_multi_index(dim, axis, [&](const std::array<int, 3>& off) {
        const double r = linf_distance(off, Site{0, 0, 0}, dim);
        if (!(r < p.R_U)) return;
        double u = 0.0;
        if (p.shape == ProfileShape::Plateau) {
            u = r < p.r_U ? p.C_U : p.c_U;
        } else if (r < p.r_U) {
            u = p.c_U + (p.C_U - p.c_U) * (1.0 - r / p.r_U);
        } else {
            u = p.c_U * (p.R_U - r) / (p.R_U - p.r_U);
        }
        prof.entries.push_back({off, u});
    });
    return prof;
}

// ---------------------------------------------------------------------------
// Coupling laws

/// Law of a single coupling, supported in [0, eta_max]. Couplings of
/// distinct centers are independent.
struct CouplingDistribution {
    enum class Kind { PointMass, Uniform, Bernoulli, LogHoelder, Tabulated };
    Kind kind = Kind::Uniform;
    double eta_max = 1.0;
    double value = 0.0;   // PointMass location
    double p_zero = 0.5;  // Bernoulli mass at 0 (rest at eta_max)
    double alpha = 1.0;   // LogHoelder exponent
    std::vector<double> bin_weights;  // Tabulated: normalized masses of equal bins on [0, eta_max]

    static CouplingDistribution point_mass(double v, double eta_max) {
        CouplingDistribution d;
        d.kind = Kind::PointMass;
        d.value = v;
        d.eta_max = eta_max;
        return d;
    }
    static CouplingDistribution uniform(double eta_max) {
        CouplingDistribution d;
        d.kind = Kind::Uniform;
        d.eta_max = eta_max;
        return d;
    }
    static CouplingDistribution bernoulli(double p_zero, double eta_max) {
        CouplingDistribution d;
        d.kind = Kind::Bernoulli;
        d.p_zero = p_zero;
        d.eta_max = eta_max;
        return d;
    }
    static CouplingDistribution log_hoelder(double alpha, double eta_max) {
        CouplingDistribution d;
        d.kind = Kind::LogHoelder;
        d.alpha = alpha;
        d.eta_max = eta_max;
        return d;
    }
    static CouplingDistribution tabulated(std::vector<double> density, double eta_max) {
        CouplingDistribution d;
        d.kind = Kind::Tabulated;
        d.eta_max = eta_max;
        const double total = std::accumulate(density.begin(), density.end(), 0.0);
        if (!(total > 0)) throw ConfigError("tabulated density must have positive total mass");
        for (auto& w : density) w /= total;
        d.bin_weights = std::move(density);
        return d;
    }

    // LogHoelder construction: CDF (-ln x)^-alpha up to x1 = e^-(alpha+1),
    // where its density stops decreasing, then continued along the tangent.
    double lh_x1() const { return std::exp(-(alpha + 1.0)); }
    double lh_F1() const { return std::pow(alpha + 1.0, -alpha); }
    double lh_f1() const { return alpha * std::pow(alpha + 1.0, -alpha - 1.0) / lh_x1(); }
    double lh_support_end() const { return lh_x1() + (1.0 - lh_F1()) / lh_f1(); }

    /// Right end of the support.
    double support_end() const {
        switch (kind) {
            case Kind::PointMass: return value;
            case Kind::Uniform: return eta_max;
            case Kind::Bernoulli: return p_zero >= 1.0 ? 0.0 : eta_max;
            case Kind::LogHoelder: return lh_support_end();
            case Kind::Tabulated: return eta_max;
        }
        return eta_max;
    }

    void validate() const {
        if (!(eta_max > 0) || !std::isfinite(eta_max)) throw ConfigError("eta_max must be a positive finite number");
        switch (kind) {
            case Kind::PointMass:
                if (!(value >= 0 && value <= eta_max))
                    throw ConfigError("point-mass coupling must lie in [0, eta_max]");
                break;
            case Kind::Uniform: break;
            case Kind::Bernoulli:
                if (!(p_zero >= 0 && p_zero <= 1)) throw ConfigError("Bernoulli mass at 0 must lie in [0, 1]");
                break;
            case Kind::LogHoelder:
                if (!(alpha > 0)) throw ConfigError("log-Hoelder exponent alpha must be > 0");
                if (lh_support_end() > eta_max)
                    throw ConfigError("log-Hoelder law with alpha = " + std::to_string(alpha) +
                                      " needs support up to " + std::to_string(lh_support_end()) +
                                      " > eta_max = " + std::to_string(eta_max));
                break;
            case Kind::Tabulated:
                if (bin_weights.empty()) throw ConfigError("tabulated density is empty");
                for (double w : bin_weights)
                    if (!(w >= 0) || !std::isfinite(w)) throw ConfigError("tabulated density must be nonnegative");
                break;
        }
    }

    double cdf(double x) const {
        if (x < 0) return 0.0;
        switch (kind) {
            case Kind::PointMass: return x >= value ? 1.0 : 0.0;
            case Kind::Uniform: return std::min(1.0, x / eta_max);
            case Kind::Bernoulli: return x >= eta_max ? 1.0 : p_zero;
            case Kind::LogHoelder: {
                if (x <= 0) return 0.0;
                if (x <= lh_x1()) return std::pow(-std::log(x), -alpha);
                return std::min(1.0, lh_F1() + lh_f1() * (x - lh_x1()));
            }
            case Kind::Tabulated: {
                const double width = eta_max / static_cast<double>(bin_weights.size());
                double acc = 0.0;
                for (std::size_t b = 0; b < bin_weights.size(); ++b) {
                    const double left = width * static_cast<double>(b);
                    if (x >= left + width) {
                        acc += bin_weights[b];
                    } else {
                        acc += bin_weights[b] * (x - left) / width;
                        break;
                    }
                }
                return std::min(1.0, acc);
            }
        }
        return 0.0;
    }

    /// Inverse CDF; u in [0, 1).
    double quantile(double u) const {
        switch (kind) {
            case Kind::PointMass: return value;
            case Kind::Uniform: return u * eta_max;
            case Kind::Bernoulli: return u < p_zero ? 0.0 : eta_max;
            case Kind::LogHoelder: {
                if (u <= 0) return 0.0;
                if (u <= lh_F1()) return std::exp(-std::pow(u, -1.0 / alpha));
                return std::min(lh_support_end(), lh_x1() + (u - lh_F1()) / lh_f1());
            }
            case Kind::Tabulated: {
                const double width = eta_max / static_cast<double>(bin_weights.size());
                double acc = 0.0;
                for (std::size_t b = 0; b < bin_weights.size(); ++b) {
                    if (bin_weights[b] > 0 && u < acc + bin_weights[b])
                        return width * (static_cast<double>(b) + (u - acc) / bin_weights[b]);
                    acc += bin_weights[b];
                }
                return eta_max;
            }
        }
        return 0.0;
    }

    /// Largest mass of a closed interval of length eps. Exact for every
    /// variant: the LogHoelder CDF is concave (window anchored at 0) and the
    /// tabulated CDF is piecewise linear (sup attained with an endpoint on a
    /// bin boundary).
    double modulus(double eps) const {
        if (!(eps > 0)) throw ConfigError("modulus of continuity needs eps > 0");
        switch (kind) {
            case Kind::PointMass: return 1.0;
            case Kind::Uniform: return std::min(1.0, eps / eta_max);
            case Kind::Bernoulli:
                if (eps >= eta_max || p_zero <= 0.0 || p_zero >= 1.0) return 1.0;
                return std::max(p_zero, 1.0 - p_zero);
            case Kind::LogHoelder: return cdf(eps);
            case Kind::Tabulated: {
                const std::size_t nb = bin_weights.size();
                const double width = eta_max / static_cast<double>(nb);
                double best = 0.0;
                for (std::size_t b = 0; b <= nb; ++b) {
                    const double edge = width * static_cast<double>(b);
                    best = std::max(best, cdf(edge + eps) - cdf(edge));
                    best = std::max(best, cdf(edge) - cdf(edge - eps));
                }
                return std::min(1.0, best);
            }
        }
        return 1.0;
    }

    double tabulated_bin_width() const {
        return kind == Kind::Tabulated ? eta_max / static_cast<double>(bin_weights.size()) : 0.0;
    }

    friend bool operator==(const CouplingDistribution&, const CouplingDistribution&) = default;
};

/// Couplings for one disorder realization, aligned with ImpuritySet::centers.
struct DisorderSample {
    std::vector<double> couplings;
    RngStream seed_tag;
};

/// Coupling of center i in sample k depends only on (seed, k, i).
inline DisorderSample sample_disorder(const CouplingDistribution& law, const ImpuritySet& set,
                                      const RngStream& stream) {
    DisorderSample s;
    s.seed_tag = stream;
    s.couplings.resize(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) s.couplings[i] = law.quantile(stream.uniform(i));
    return s;
}

/// V(x) = sum_i c_i U(x - center_i), truncated to the box.
inline GridFunction assemble_random_potential(std::span<const double> couplings, const SingleSiteProfile& profile,
                                              const ImpuritySet& set, const Box& box) {
    if (couplings.size() != set.size())
        throw ConfigError("disorder sample has " + std::to_string(couplings.size()) + " couplings for " +
                          std::to_string(set.size()) + " centers");
    GridFunction v(box);
    for (std::size_t i = 0; i < set.size(); ++i) {
        const double w = couplings[i];
        if (w == 0.0) continue;
        for (const auto& e : profile.entries) {
            Site x{0, 0, 0};
            for (int a = 0; a < box.dim; ++a) x[a] = set.centers[i][a] + e.offset[a];
            if (box.contains(x)) v[box.index(x)] += w * e.value;
        }
    }
    return v;
}

inline GridFunction assemble_random_potential(const DisorderSample& sample, const SingleSiteProfile& profile,
                                              const ImpuritySet& set, const Box& box) {
    return assemble_random_potential(std::span<const double>(sample.couplings), profile, set, box);
}

/// W_Λ = (sum_i U_i) restricted to the box; the full-coupling operator is
/// H_0 + eta_max * W_Λ.
inline GridFunction full_coupling_potential(const SingleSiteProfile& profile, const ImpuritySet& set,
                                            const Box& box) {
    const std::vector<double> ones(set.size(), 1.0);
    return assemble_random_potential(std::span<const double>(ones), profile, set, box);
}

// ---------------------------------------------------------------------------
// Model configuration

struct BackgroundSpec {
    double constant = 0.0;
    std::optional<std::vector<double>> table;  // per-site values, lexicographic order
    std::string table_path;                    // provenance only

    friend bool operator==(const BackgroundSpec& a, const BackgroundSpec& b) {
        return a.constant == b.constant && a.table == b.table && a.table_path == b.table_path;
    }
};

struct ModelConfig {
    int dim = 1;
    int box_side = 32;
    double spacing = 1.0;
    BackgroundSpec background;
    ImpurityGeometry geometry;
    ProfileParams profile;
    double eta_max = 1.0;
    CouplingDistribution law = CouplingDistribution::uniform(1.0);

    Box box() const { return Box{dim, box_side, spacing}; }
    Box box(int side) const { return Box{dim, side, spacing}; }

    void validate() const {
        box().validate();
        if (box_side % 2 != 0) throw ConfigError("box side L must be an even positive integer");
        profile.validate();
        geometry.validate();
        if (!(eta_max > 0) || !std::isfinite(eta_max)) throw ConfigError("eta_max must be > 0");
        if (box_side < 2.0 * profile.R_U) throw ConfigError("box side must be at least 2*R_U");
        if (law.eta_max != eta_max) throw ConfigError("coupling law eta_max differs from model eta_max");
        law.validate();
        if (!std::isfinite(background.constant)) throw ConfigError("background potential must be finite");
        if (background.table) {
            if (background.table->size() != box().volume())
                throw ConfigError("background table has " + std::to_string(background.table->size()) +
                                  " values, box has " + std::to_string(box().volume()) + " sites");
            for (double v : *background.table)
                if (!std::isfinite(v)) throw ConfigError("background potential must be finite");
        }
    }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline GridFunction background_potential(const ModelConfig& cfg, const Box& box) {
    if (cfg.background.table) {
        if (box.side != cfg.box_side)
            throw ConfigError("tabulated background is only defined on the configured box side " +
                              std::to_string(cfg.box_side));
        return GridFunction(box, *cfg.background.table);
    }
    return GridFunction(box, cfg.background.constant);
}

/// All deterministic ingredients of the model on one box.
struct FiniteVolumeModel {
    Box box;
    ImpuritySet impurities;
    SingleSiteProfile profile;
    GridFunction background;
    GridFunction full_coupling;  // W_Λ
    CouplingDistribution law;
    double eta_max = 1.0;

    GridFunction potential(const DisorderSample& s) const {
        return background + assemble_random_potential(s, profile, impurities, box);
    }
};

inline FiniteVolumeModel instantiate(const ModelConfig& cfg, int side) {
    cfg.validate();
    FiniteVolumeModel m;
    m.box = cfg.box(side);
    m.box.validate();
    m.impurities = build_impurity_set(cfg.geometry, m.box);
    m.profile = make_profile(cfg.profile, cfg.dim);
    m.background = background_potential(cfg, m.box);
    m.full_coupling = full_coupling_potential(m.profile, m.impurities, m.box);
    m.law = cfg.law;
    m.eta_max = cfg.eta_max;
    return m;
}

inline FiniteVolumeModel instantiate(const ModelConfig& cfg) { return instantiate(cfg, cfg.box_side); }

}  // namespace fblab
