#pragma once

// Monte Carlo side of the Wegner estimate: spectral-hit probabilities,
// expected projector traces, scaling scans against |Λ| s(eps), and the
// finite-volume integrated density of states with its continuity check.

#include "fblab/fluctuation.hpp"
#include "fblab/parallel.hpp"
#include "fblab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace fblab {

// ---------------------------------------------------------------------------
// Modulus of continuity

struct ModulusValue {
    double value = 0.0;
    bool closed_form = true;
    double resolution = 0.0;  // bin width of a tabulated density, 0 otherwise
    double discretization_bias = 0.0;
};

/// s(eps) = sup_E P{coupling in [E, E + eps]}.
inline ModulusValue modulus_of_continuity(const CouplingDistribution& law, double eps) {
    ModulusValue m;
    m.value = law.modulus(eps);
    if (law.kind == CouplingDistribution::Kind::Tabulated) {
        m.closed_form = false;
        m.resolution = law.tabulated_bin_width();
        // Piecewise-linear CDF: the breakpoint scan is exact for the histogram.
        m.discretization_bias = 0.0;
    }
    return m;
}

// ---------------------------------------------------------------------------
// Ensemble sampling

/// Per-sample eigenvalues not exceeding `hi` (plus tolerance).
inline std::vector<std::vector<double>> sample_low_spectra(const FiniteVolumeModel& model, double hi,
                                                           std::size_t n, std::uint64_t seed,
                                                           const RunOptions& run = {}) {
    std::vector<std::vector<double>> out(n);
    parallel_for(n, run.workers, [&](std::size_t k) {
        try {
            const auto op = sample_operator(model, seed, k);
            SpectralWindow w{-std::numeric_limits<double>::infinity(), hi, 0.0};
            out[k] = eigenvalues_in_window(op, w, run.solver);
        } catch (const ComputeError& e) {
            throw ComputeError("sample " + std::to_string(k) + ": " + e.what());
        }
    });
    return out;
}

struct WindowStatistics {
    SpectralWindow window;
    std::size_t n_samples = 0;
    std::size_t hits = 0;
    std::vector<double> traces;  // per sample
    std::size_t ambiguous = 0;   // eigenvalues within tau of an endpoint, over all samples
    EnsembleEstimate probability;
    EnsembleEstimate trace;
};

inline WindowStatistics window_statistics(const std::vector<std::vector<double>>& spectra,
                                          const SpectralWindow& w, std::uint64_t seed) {
    WindowStatistics s;
    s.window = w;
    s.n_samples = spectra.size();
    if (s.n_samples == 0) throw ConfigError("ensemble needs at least one sample");
    s.traces.reserve(spectra.size());
    for (const auto& sp : spectra) {
        const auto c = count_in_window(sp, w);
        s.traces.push_back(static_cast<double>(c.count));
        s.ambiguous += c.ambiguous;
        if (c.count > 0) ++s.hits;
    }
    s.probability = {"spectral_hit_probability", s.n_samples,
                     static_cast<double>(s.hits) / static_cast<double>(s.n_samples),
                     clopper_pearson(s.hits, s.n_samples), seed};
    const auto m = mean_with_ci(s.traces);
    s.trace = {"expected_trace", s.n_samples, m.mean, m.ci, seed};
    return s;
}

struct WindowEstimate {
    WindowStatistics stats;
    GapReport gap;
    std::vector<std::string> warnings;
};

/// P{spec(H_Λ(ω)) ∩ I ≠ ∅} and E{tr P_I(H_Λ(ω))} from one common sample set.
inline WindowEstimate estimate_window(const ModelConfig& cfg, double lo, double hi, double delta, std::size_t n,
                                      std::uint64_t seed, const RunOptions& run = {}) {
    if (n == 0) throw ConfigError("ensemble needs at least one sample");
    const auto model = instantiate(cfg);
    WindowEstimate e;
    e.gap = fluctuation_boundary_gap(free_operator(model), model.full_coupling, model.eta_max, run.solver);
    const SpectralWindow w{lo, hi, ensemble_window_tolerance(model)};
    w.validate();
    e.warnings = window_placement_warnings(w, e.gap, delta);
    const auto spectra = sample_low_spectra(model, w.hi + w.tau, n, seed, run);
    e.stats = window_statistics(spectra, w, seed);
    return e;
}

inline EnsembleEstimate estimate_spectral_hit_probability(const ModelConfig& cfg, double lo, double hi,
                                                          std::size_t n, std::uint64_t seed,
                                                          const RunOptions& run = {}) {
    return estimate_window(cfg, lo, hi, 0.0, n, seed, run).stats.probability;
}

inline EnsembleEstimate estimate_expected_trace(const ModelConfig& cfg, double lo, double hi, std::size_t n,
                                                std::uint64_t seed, const RunOptions& run = {}) {
    return estimate_window(cfg, lo, hi, 0.0, n, seed, run).stats.trace;
}

// ---------------------------------------------------------------------------
// Wegner scaling scan

struct WegnerRow {
    int side = 0;
    std::size_t volume = 0;
    double eps = 0.0;
    double s_eps = 0.0;
    double E_lo = 0.0;
    double E_hi = 0.0;
    double p_hat = 0.0;
    Interval p_ci;
    double trace_hat = 0.0;
    double trace_half_width = 0.0;
    double ratio = 0.0;  // trace_hat / (volume * s_eps)
    Interval ratio_ci;
    bool scaling_flag = false;
};

struct WegnerReport {
    std::vector<WegnerRow> rows;
    std::vector<GapReport> gaps;  // one per side
    double fitted_C_W = 0.0;
    std::vector<std::string> warnings;
    std::size_t n_samples = 0;
    std::uint64_t seed = 0;

    bool flagged() const {
        return std::any_of(rows.begin(), rows.end(), [](const WegnerRow& r) { return r.scaling_flag; });
    }
};

struct WegnerScanParams {
    std::vector<int> sides;
    std::vector<double> epsilons;
    double window_offset = 0.0;  // windows are [E0 + offset, E0 + offset + eps]
    double delta = 0.0;          // declared margin below E_F
    std::size_t n_samples = 0;
    std::uint64_t seed = 0;
};

/// Estimates on the full (side x eps) grid. Every eps shares the sample set
/// of its side. C_W is fitted as the largest ratio; a row is flagged when its
/// lower ratio bound exceeds twice the C_W fitted from earlier rows.
inline WegnerReport wegner_scan(const ModelConfig& cfg, const WegnerScanParams& p, const RunOptions& run = {}) {
    if (p.n_samples == 0) throw ConfigError("wegner scan needs n_samples > 0");
    if (p.sides.empty() || p.epsilons.empty()) throw ConfigError("wegner scan needs sizes and epsilons");
    WegnerReport rep;
    rep.n_samples = p.n_samples;
    rep.seed = p.seed;
    double running = 0.0;
    for (int side : p.sides) {
        const auto model = instantiate(cfg, side);
        const auto h0 = free_operator(model);
        const auto gap = fluctuation_boundary_gap(h0, model.full_coupling, model.eta_max, run.solver);
        rep.gaps.push_back(gap);
        const double tau = ensemble_window_tolerance(model);
        const double scale = h0.spectral_scale();
        double top = -std::numeric_limits<double>::infinity();
        for (double eps : p.epsilons) {
            if (!(eps > 0)) throw ConfigError("epsilon must be positive");
            if (eps < kWindowRelTol * scale)
                throw ConfigError("epsilon " + std::to_string(eps) + " is below the eigensolver resolution");
            top = std::max(top, gap.E0 + p.window_offset + eps);
        }
        const auto spectra = sample_low_spectra(model, top + tau, p.n_samples, p.seed, run);
        for (double eps : p.epsilons) {
            const SpectralWindow w{gap.E0 + p.window_offset, gap.E0 + p.window_offset + eps, tau};
            for (const auto& msg : window_placement_warnings(w, gap, p.delta))
                rep.warnings.push_back("L=" + std::to_string(side) + " eps=" + std::to_string(eps) + ": " + msg);
            const auto st = window_statistics(spectra, w, p.seed);
            WegnerRow r;
            r.side = side;
            r.volume = model.box.volume();
            r.eps = eps;
            r.s_eps = modulus_of_continuity(cfg.law, eps).value;
            r.E_lo = w.lo;
            r.E_hi = w.hi;
            r.p_hat = st.probability.value;
            r.p_ci = st.probability.ci;
            r.trace_hat = st.trace.value;
            r.trace_half_width = 0.5 * (st.trace.ci.hi - st.trace.ci.lo);
            const double denom = static_cast<double>(r.volume) * r.s_eps;
            if (denom > 0) {
                r.ratio = r.trace_hat / denom;
                r.ratio_ci = {std::max(0.0, st.trace.ci.lo) / denom, st.trace.ci.hi / denom};
            }
            if (!rep.rows.empty() && r.ratio_ci.lo > 2.0 * running) r.scaling_flag = true;
            running = std::max(running, r.ratio);
            rep.rows.push_back(r);
        }
    }
    rep.fitted_C_W = running;
    return rep;
}

// ---------------------------------------------------------------------------
// Integrated density of states

struct IDSCurve {
    std::vector<double> energies;
    std::vector<double> N_hat;      // states per site
    std::vector<double> N_half_width;
    int side = 0;
    std::size_t volume = 0;
    std::size_t n_samples = 0;
    std::uint64_t seed = 0;
    std::vector<std::vector<int>> counts;  // counts[k][j]: eigenvalues <= E_j in sample k
};

/// N(E) = E{#eigenvalues <= E} / |Λ| on a sorted grid, from one common
/// sample set so the estimate is nondecreasing by construction.
inline IDSCurve estimate_ids(const ModelConfig& cfg, std::span<const double> energies, std::size_t n,
                             std::uint64_t seed, const RunOptions& run = {}) {
    if (n == 0) throw ConfigError("IDS estimate needs at least one sample");
    if (energies.empty()) throw ConfigError("IDS estimate needs an energy grid");
    for (std::size_t i = 1; i < energies.size(); ++i)
        if (!(energies[i] > energies[i - 1])) throw ConfigError("IDS energy grid must be strictly increasing");
    const auto model = instantiate(cfg);
    const auto spectra = sample_low_spectra(model, energies.back(), n, seed, run);
    IDSCurve c;
    c.energies.assign(energies.begin(), energies.end());
    c.side = model.box.side;
    c.volume = model.box.volume();
    c.n_samples = n;
    c.seed = seed;
    c.counts.assign(n, std::vector<int>(energies.size(), 0));
    for (std::size_t k = 0; k < n; ++k) {
        const auto& sp = spectra[k];
        for (std::size_t j = 0; j < energies.size(); ++j)
            c.counts[k][j] = static_cast<int>(std::upper_bound(sp.begin(), sp.end(), energies[j]) - sp.begin());
    }
    const double vol = static_cast<double>(c.volume);
    std::vector<double> col(n);
    for (std::size_t j = 0; j < energies.size(); ++j) {
        for (std::size_t k = 0; k < n; ++k) col[k] = c.counts[k][j] / vol;
        const auto m = mean_with_ci(col);
        c.N_hat.push_back(m.mean);
        c.N_half_width.push_back(m.half_width);
    }
    return c;
}

struct IDSModulusRow {
    double E = 0.0;
    double eps = 0.0;
    double s_eps = 0.0;
    double dN = 0.0;
    Interval dN_ci;
    double ratio = 0.0;
    Interval ratio_ci;
};

struct IDSModulusReport {
    std::vector<IDSModulusRow> rows;
    std::vector<std::pair<double, double>> c_W;  // (E, sup over eps of the ratio)
    std::vector<std::string> notices;
    bool unbounded_flag = false;
};

/// Ratios (N(E + eps) - N(E)) / s(eps) for grid energies in [lo, hi) whose
/// shift E + eps is also a grid point. An energy is flagged when the lower
/// ratio bound at the smallest eps exceeds twice the ratio at the largest.
inline IDSModulusReport ids_modulus_check(const IDSCurve& curve, const CouplingDistribution& law,
                                          std::span<const double> eps_list, double lo, double hi) {
    IDSModulusReport rep;
    const double vol = static_cast<double>(curve.volume);
    auto find = [&](double e) -> std::ptrdiff_t {
        for (std::size_t j = 0; j < curve.energies.size(); ++j)
            if (std::abs(curve.energies[j] - e) <= 1e-9 * (1.0 + std::abs(e))) return static_cast<std::ptrdiff_t>(j);
        return -1;
    };
    std::vector<double> diff(curve.n_samples);
    for (std::size_t j = 0; j < curve.energies.size(); ++j) {
        const double E = curve.energies[j];
        if (E < lo || E >= hi) continue;
        double sup = 0.0;
        bool any = false;
        const IDSModulusRow* smallest = nullptr;
        const IDSModulusRow* largest = nullptr;
        const std::size_t first = rep.rows.size();
        for (double eps : eps_list) {
            const double s = modulus_of_continuity(law, eps).value;
            if (s <= 0) {
                rep.notices.push_back("s(eps) = 0 for eps = " + std::to_string(eps) + ", row skipped");
                continue;
            }
            const auto jj = find(E + eps);
            if (jj < 0) continue;
            for (std::size_t k = 0; k < curve.n_samples; ++k)
                diff[k] = (curve.counts[k][static_cast<std::size_t>(jj)] - curve.counts[k][j]) / vol;
            const auto m = mean_with_ci(diff);
            IDSModulusRow r{E, eps, s, m.mean, m.ci, m.mean / s, {std::max(0.0, m.ci.lo) / s, m.ci.hi / s}};
            rep.rows.push_back(r);
            sup = std::max(sup, r.ratio);
            any = true;
        }
        for (std::size_t i = first; i < rep.rows.size(); ++i) {
            if (!smallest || rep.rows[i].eps < smallest->eps) smallest = &rep.rows[i];
            if (!largest || rep.rows[i].eps > largest->eps) largest = &rep.rows[i];
        }
        if (smallest && largest && smallest != largest && smallest->ratio_ci.lo > 2.0 * largest->ratio)
            rep.unbounded_flag = true;
        if (any) rep.c_W.emplace_back(E, sup);
    }
    return rep;
}

}  // namespace fblab
