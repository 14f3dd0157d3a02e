#pragma once

// Finite-volume instances of the random family: sampled operators, the free
// and fully coupled operators, and the weak-fluctuation-boundary gap.

#include "fblab/model.hpp"
#include "fblab/spectral.hpp"

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

namespace fblab {

struct RunOptions {
    unsigned workers = 1;
    SolverOptions solver;
};

/// H_Λ(ω) for sample k of the ensemble with the given master seed.
inline LatticeOperator sample_operator(const FiniteVolumeModel& model, std::uint64_t seed, std::uint64_t k) {
    const auto s = sample_disorder(model.law, model.impurities, RngStream{seed, k});
    return assemble_hamiltonian(model.box, model.potential(s));
}

inline LatticeOperator free_operator(const FiniteVolumeModel& model) {
    return assemble_hamiltonian(model.box, model.background);
}

inline LatticeOperator full_coupling_operator(const FiniteVolumeModel& model) {
    return add_potential(free_operator(model), model.full_coupling, model.eta_max);
}

/// Membership tolerance for windows over the ensemble: 1e-9 times a bound on
/// the spectral diameter shared by every sample.
inline double ensemble_window_tolerance(const FiniteVolumeModel& model) {
    const auto lo = free_operator(model).gershgorin().lo;
    const auto hi = full_coupling_operator(model).gershgorin().hi;
    return kWindowRelTol * std::max(1.0, hi - lo);
}

struct GapReport {
    int side = 0;
    double E0 = 0.0;  // inf spec H0^Λ
    double EF = 0.0;  // inf spec (H0^Λ + eta_max W_Λ)
    double gap() const { return EF - E0; }
    bool weak_fluctuation_boundary() const { return gap() > 0; }
};

/// E_F - E_0 from the free and fully coupled operators on one box.
inline GapReport fluctuation_boundary_gap(const LatticeOperator& h0, const GridFunction& w, double eta_max,
                                          const SolverOptions& opts = {}) {
    if (!(eta_max >= 0)) throw ConfigError("eta_max must be >= 0");
    validate_perturbation(w);
    GapReport g;
    g.side = h0.box.side;
    g.E0 = ground_state_energy(h0, opts);
    g.EF = eta_max == 0.0 ? g.E0 : ground_state_energy(add_potential(h0, w, eta_max), opts);
    return g;
}

inline GapReport fluctuation_boundary_gap(const ModelConfig& cfg, int side, const SolverOptions& opts = {}) {
    const auto m = instantiate(cfg, side);
    return fluctuation_boundary_gap(free_operator(m), m.full_coupling, m.eta_max, opts);
}

/// Warnings for windows not contained in [E0, E_F - delta].
inline std::vector<std::string> window_placement_warnings(const SpectralWindow& w, const GapReport& g,
                                                          double delta) {
    std::vector<std::string> out;
    if (w.lo < g.E0) out.push_back("window starts below E0");
    if (w.hi > g.EF - delta) out.push_back("window reaches above E_F - delta");
    return out;
}

}  // namespace fblab
