#pragma once

// Task dispatch: runs a validated Experiment and packs the result into a
// ReportEnvelope. Output never depends on the worker count.

#include "fblab/config.hpp"
#include "fblab/msa.hpp"
#include "fblab/report.hpp"
#include "fblab/uncertainty.hpp"
#include "fblab/wegner.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace fblab {

namespace detail {

inline Cell I(std::size_t v) { return static_cast<std::int64_t>(v); }
inline Cell I(int v) { return static_cast<std::int64_t>(v); }
inline Cell D(double v) { return v; }
inline Cell S(std::string v) { return v; }

inline std::vector<int> sides_or_default(const Experiment& e) {
    return e.params.L_list.empty() ? std::vector<int>{e.model.box_side} : e.params.L_list;
}

inline LatticeOperator chosen_operator(const Experiment& e, const FiniteVolumeModel& model) {
    switch (e.params.op) {
        case OperatorKind::Free: return free_operator(model);
        case OperatorKind::Full: return full_coupling_operator(model);
        case OperatorKind::Sample: break;
    }
    return sample_operator(model, *e.master_seed, 0);
}

inline std::vector<double> curve_grid(const Experiment& e) {
    return default_t_grid(e.params.t_max.value_or(e.model.eta_max), e.params.t_points);
}

inline void run_curve(const Experiment& e, const RunOptions& run, ReportEnvelope& r) {
    const auto model = instantiate(e.model);
    const auto h0 = free_operator(model);
    const auto grid = curve_grid(e);
    const auto curve = ground_state_energy_curve(h0, model.full_coupling, grid, run.solver);
    Table t{"curve", {"t", "lambda"}, {}};
    t.add({D(0.0), D(curve.lambda0)});
    for (std::size_t i = 0; i < grid.size(); ++i) t.add({D(curve.t_grid[i]), D(curve.lambda[i])});
    r.tables.push_back(std::move(t));
    const auto v = curve_violations(curve, model.full_coupling.max(), 1e-9 * h0.spectral_scale());
    r.summary["lambda0"] = curve.lambda0;
    r.summary["shape_violations"] = v;
    if (!v.empty()) throw ComputeError("ground-state curve violates monotonicity or concavity: " + v.front());
}

inline void run_uncertainty(const Experiment& e, const RunOptions& run, ReportEnvelope& r) {
    const auto model = instantiate(e.model);
    const auto h0 = free_operator(model);
    const auto curve = ground_state_energy_curve(h0, model.full_coupling, curve_grid(e), run.solver);
    const auto gap = fluctuation_boundary_gap(h0, model.full_coupling, model.eta_max, run.solver);
    Table t{"uncertainty", {"I_lo", "I_hi", "kappa_bound", "t_star", "kappa_direct", "rank", "vacuous_flag"}, {}};
    std::size_t inconsistent = 0;
    for (const auto& rel : e.params.windows) {
        const auto w = make_window(gap.E0 + rel.lo, gap.E0 + rel.hi, h0);
        const auto c = certify_uncertainty(h0, model.full_coupling, curve, w, run.solver);
        if (!c.consistent()) ++inconsistent;
        t.add({D(w.lo), D(w.hi), D(c.bound.kappa), D(c.bound.t_star),
               c.vacuous() ? S("") : D(c.direct.value), I(c.direct.rank), I(c.vacuous() ? 1 : 0)});
    }
    r.tables.push_back(std::move(t));
    r.summary["E0"] = gap.E0;
    r.summary["EF"] = gap.EF;
    if (e.params.delta > 0 && gap.gap() > e.params.delta)
        r.summary["kappa_full_coupling"] = kappa_full_coupling(e.params.delta, model.eta_max);
    r.summary["inconsistent_windows"] = inconsistent;
    if (inconsistent) throw ComputeError(std::to_string(inconsistent) + " window(s) with kappa_direct below the bound");
}

inline void run_wegner(const Experiment& e, const RunOptions& run, ReportEnvelope& r) {
    WegnerScanParams p;
    p.sides = sides_or_default(e);
    p.epsilons = e.params.eps_list;
    p.window_offset = e.params.window_offset;
    p.delta = e.params.delta;
    p.n_samples = e.params.n_samples;
    p.seed = *e.master_seed;
    const auto rep = wegner_scan(e.model, p, run);
    Table t{"wegner",
            {"L", "volume", "eps", "s_eps", "E_lo", "E_hi", "p_hat", "p_lo", "p_hi", "trace_hat", "trace_ci", "ratio"},
            {}};
    for (const auto& row : rep.rows)
        t.add({I(row.side), I(row.volume), D(row.eps), D(row.s_eps), D(row.E_lo), D(row.E_hi),
               D(row.p_hat), D(row.p_ci.lo), D(row.p_ci.hi), D(row.trace_hat), D(row.trace_half_width),
               D(row.ratio)});
    r.tables.push_back(std::move(t));
    Table g{"wegner_gaps", {"L", "E0", "EF", "gap"}, {}};
    for (const auto& gp : rep.gaps) g.add({I(gp.side), D(gp.E0), D(gp.EF), D(gp.gap())});
    r.tables.push_back(std::move(g));
    r.summary["fitted_C_W"] = rep.fitted_C_W;
    r.summary["scaling_flag"] = rep.flagged();
    r.warnings.insert(r.warnings.end(), rep.warnings.begin(), rep.warnings.end());
    if (rep.flagged()) r.status = RunStatus::StatisticalFlag;
}

inline void run_ids(const Experiment& e, const RunOptions& run, ReportEnvelope& r) {
    const auto c = estimate_ids(e.model, e.params.energies, e.params.n_samples, *e.master_seed, run);
    Table t{"ids", {"E", "N_hat", "N_ci", "L", "n_samples"}, {}};
    for (std::size_t j = 0; j < c.energies.size(); ++j)
        t.add({D(c.energies[j]), D(c.N_hat[j]), D(c.N_half_width[j]), I(c.side), I(c.n_samples)});
    r.tables.push_back(std::move(t));
    if (e.params.eps_list.empty()) return;
    const auto gap = fluctuation_boundary_gap(e.model, e.model.box_side, run.solver);
    const auto rep = ids_modulus_check(c, e.model.law, e.params.eps_list, gap.E0, gap.EF - e.params.delta);
    Table m{"ids_modulus", {"E", "eps", "s_eps", "dN", "dN_lo", "dN_hi", "ratio", "ratio_lo", "ratio_hi"}, {}};
    for (const auto& row : rep.rows)
        m.add({D(row.E), D(row.eps), D(row.s_eps), D(row.dN), D(row.dN_ci.lo), D(row.dN_ci.hi), D(row.ratio),
               D(row.ratio_ci.lo), D(row.ratio_ci.hi)});
    r.tables.push_back(std::move(m));
    r.summary["E0"] = gap.E0;
    r.summary["EF"] = gap.EF;
    r.summary["unbounded_flag"] = rep.unbounded_flag;
    r.warnings.insert(r.warnings.end(), rep.notices.begin(), rep.notices.end());
    if (rep.unbounded_flag) r.status = RunStatus::StatisticalFlag;
}

inline void run_gap(const Experiment& e, const RunOptions& run, ReportEnvelope& r) {
    Table t{"gap", {"L", "E0", "EF", "gap", "weak_fluctuation_boundary"}, {}};
    for (int side : sides_or_default(e)) {
        const auto g = fluctuation_boundary_gap(e.model, side, run.solver);
        t.add({I(side), D(g.E0), D(g.EF), D(g.gap()), I(g.weak_fluctuation_boundary() ? 1 : 0)});
    }
    r.tables.push_back(std::move(t));
}

inline void run_msa_params(const Experiment& e, ReportEnvelope& r) {
    const auto p = msa_parameters(e.model.dim, parse_rational(e.params.msa_m), parse_rational(e.params.msa_alpha),
                                  parse_rational(e.params.msa_xi), parse_rational(e.params.msa_kappa));
    Table t{"msa_params", {"quantity", "exact", "value"}, {}};
    auto add = [&](const char* name, const Rational& q) { t.add({S(name), S(to_string(q)), D(to_double(q))}); };
    add("beta", p.beta);
    add("theta", p.theta);
    add("q", p.q);
    add("p_dyn_bound", p.p_dyn_bound);
    add("alpha_threshold", p.alpha_threshold);
    add("theta_alpha", p.theta_alpha());
    r.tables.push_back(std::move(t));
    Table c{"msa_constraints", {"constraint", "satisfied", "detail"}, {}};
    for (const auto& k : p.ledger) c.add({S(k.name), I(k.satisfied ? 1 : 0), S(k.detail)});
    r.tables.push_back(std::move(c));
}

inline void run_initial_scale(const Experiment& e, const RunOptions& run, ReportEnvelope& r) {
    const auto rep = initial_scale_probability(e.model, e.params.L_list, e.params.m, e.params.n_samples,
                                               *e.master_seed, run);
    Table t{"initial_scale", {"L", "E0", "E_hi", "hits", "n_samples", "p_hat", "p_lo", "p_hi"}, {}};
    for (const auto& row : rep.rows)
        t.add({I(row.side), D(row.E0), D(row.window_hi), I(row.hits), I(row.n_samples), D(row.p_hat),
               D(row.p_ci.lo), D(row.p_ci.hi)});
    r.tables.push_back(std::move(t));
    r.summary["fitted_cells"] = rep.fitted_cells;
    r.summary["xi"] = rep.xi ? nlohmann::json(*rep.xi) : nlohmann::json(nullptr);
    r.summary["xi_stderr"] = rep.xi_stderr;
    r.summary["xi_ci"] = rep.xi ? nlohmann::json::array({rep.xi_ci.lo, rep.xi_ci.hi}) : nlohmann::json(nullptr);
    r.summary["L_star"] = rep.L_star ? nlohmann::json(*rep.L_star) : nlohmann::json(nullptr);
    if (!rep.xi) r.warnings.push_back("fewer than two sides with hits; no exponent fitted");
}

inline void run_greens(const Experiment& e, const RunOptions& run, ReportEnvelope& r) {
    const auto model = instantiate(e.model);
    const auto op = chosen_operator(e, model);
    std::size_t source = center_site(model.box);
    if (e.params.source != "center") {
        const auto s = std::stoll(e.params.source);
        if (s < 0 || static_cast<std::size_t>(s) >= model.box.volume())
            throw ConfigError("source index outside the box");
        source = static_cast<std::size_t>(s);
    }
    Table t{"greens",
            {"E", "source", "dist_to_spec", "decay_rate", "intercept", "r2", "r_min", "r_max", "support_size",
             "degenerate", "ct_reference"},
            {}};
    for (double E : e.params.energies) {
        const auto g = greens_decay(op, E, source, run.solver);
        t.add({D(E), I(g.source), D(g.distance_to_spectrum), D(g.fit.slope), D(g.fit.intercept), D(g.fit.r2),
               D(g.fit.r_min), D(g.fit.r_max), I(g.fit.support_size), I(g.fit.degenerate ? 1 : 0),
               D(g.ct_reference)});
    }
    r.tables.push_back(std::move(t));
}

inline void run_localize(const Experiment& e, const RunOptions& run, ReportEnvelope& r) {
    const auto model = instantiate(e.model);
    const double E0 = ground_state_energy(free_operator(model), run.solver);
    const auto& rel = e.params.windows.front();
    const SpectralWindow w{E0 + rel.lo, E0 + rel.hi, ensemble_window_tolerance(model)};
    w.validate();
    const std::size_t count = e.params.op == OperatorKind::Sample ? std::max<std::size_t>(1, e.params.n_samples) : 1;
    std::vector<std::vector<EigenDecay>> per(count);
    parallel_for(count, run.workers, [&](std::size_t k) {
        const auto op = e.params.op == OperatorKind::Sample ? sample_operator(model, *e.master_seed, k)
                                                           : chosen_operator(e, model);
        per[k] = eigenfunction_decay(op, w, run.solver);
    });
    Table t{"localize", {"sample", "eigenvalue", "center", "decay_rate", "r2", "support_size", "degenerate"}, {}};
    std::size_t total = 0, decaying = 0;
    for (std::size_t k = 0; k < count; ++k)
        for (const auto& d : per[k]) {
            ++total;
            if (!d.fit.degenerate && d.fit.slope > 0.1) ++decaying;
            t.add({I(k), D(d.eigenvalue), I(d.center), D(d.fit.slope), D(d.fit.r2), I(d.fit.support_size),
                   I(d.fit.degenerate ? 1 : 0)});
        }
    r.tables.push_back(std::move(t));
    r.summary["E0"] = E0;
    r.summary["eigenfunctions"] = total;
    r.summary["fraction_decay_rate_above_0.1"] = total ? static_cast<double>(decaying) / static_cast<double>(total) : 0.0;
}

inline void run_dynmoment(const Experiment& e, const RunOptions& run, ReportEnvelope& r) {
    Table t{"dynmoment", {"L", "p_mom", "K_radius", "n_samples", "mean", "ci_lo", "ci_hi"}, {}};
    for (int side : sides_or_default(e)) {
        ModelConfig cfg = e.model;
        cfg.box_side = side;
        DynamicalMomentParams p;
        p.window_lo = e.params.windows.front().lo;
        p.window_hi = e.params.windows.front().hi;
        p.p_mom = e.params.p_mom;
        p.K_radius = e.params.K_radius;
        p.n_samples = e.params.n_samples;
        p.seed = *e.master_seed;
        const auto res = dynamical_moment(cfg, p, run);
        t.add({I(side), D(p.p_mom), D(p.K_radius), I(p.n_samples), D(res.estimate.value), D(res.estimate.ci.lo),
               D(res.estimate.ci.hi)});
    }
    r.tables.push_back(std::move(t));
}

}  // namespace detail

/// Runs one task. Throws ConfigError for invalid input and ComputeError for
/// numerical failure; statistical flags are reported through `status`.
inline ReportEnvelope run_experiment(const Experiment& e, const RunOptions& run = {}) {
    validate_task(e);
    ReportEnvelope r;
    r.task = task_name(e.task);
    r.config = serialize(e);
    r.provenance.seed = e.master_seed;
    r.provenance.n_samples = e.params.n_samples;
    r.provenance.solver_rel_tol = run.solver.rel_tol;
    r.provenance.dense_crossover = run.solver.dense_crossover;
    r.provenance.window_rel_tol = kWindowRelTol;
    switch (e.task) {
        case Task::Curve: detail::run_curve(e, run, r); break;
        case Task::Uncertainty: detail::run_uncertainty(e, run, r); break;
        case Task::Wegner: detail::run_wegner(e, run, r); break;
        case Task::Ids: detail::run_ids(e, run, r); break;
        case Task::Gap: detail::run_gap(e, run, r); break;
        case Task::MsaParams: detail::run_msa_params(e, r); break;
        case Task::InitialScale: detail::run_initial_scale(e, run, r); break;
        case Task::Greens: detail::run_greens(e, run, r); break;
        case Task::Localize: detail::run_localize(e, run, r); break;
        case Task::DynMoment: detail::run_dynmoment(e, run, r); break;
    }
    return r;
}

/// Process exit status for the command-line tool.
enum ExitCode : int { kExitSuccess = 0, kExitConfig = 2, kExitCompute = 3, kExitStatistical = 4 };

inline int exit_code(const ReportEnvelope& r) {
    return r.status == RunStatus::StatisticalFlag ? kExitStatistical : kExitSuccess;
}

}  // namespace fblab
