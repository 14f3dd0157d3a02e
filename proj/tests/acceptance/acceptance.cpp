// Acceptance harness: one PASS/FAIL line per criterion, exit 1 if any fails.

#include "fblab/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>

using namespace fblab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

ModelConfig model(int dim, int side, int period, double radius, CouplingDistribution law) {
    ModelConfig c;
    c.dim = dim;
    c.box_side = side;
    c.geometry = ImpurityGeometry::sublattice(period);
    c.profile = {1.0, 1.0, radius, radius, ProfileShape::Plateau};
    c.eta_max = law.eta_max;
    c.law = law;
    c.validate();
    return c;
}

struct Instance {
    LatticeOperator h0;
    GridFunction w;
};

// d in {1,2}, n <= 256, sparse nonnegative background and perturbation
Instance random_instance(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int dim = 1 + static_cast<int>(rng() % 2);
    const int side = dim == 1 ? 8 + static_cast<int>(rng() % 249) : 3 + static_cast<int>(rng() % 14);
    const Box b{dim, side, 1.0};
    GridFunction v(b), w(b);
    const double pv = 0.05 + 0.3 * u(rng), pw = 0.05 + 0.5 * u(rng);
    for (auto& x : v.values) x = u(rng) < pv ? 3.0 * u(rng) : 0.0;
    for (auto& x : w.values) x = u(rng) < pw ? u(rng) : 0.0;
    if (w.max() == 0.0) w[rng() % w.size()] = 1.0;
    return {assemble_hamiltonian(b, v), w};
}

// Criteria 1 and 3 share their instances.
struct UncertaintySweep {
    std::size_t instances = 0, mobility_checked = 0, mobility_failed = 0, failed = 0;
    double worst_gap = std::numeric_limits<double>::infinity();
    double worst_margin = std::numeric_limits<double>::infinity();
};

const UncertaintySweep& uncertainty_sweep() {
    static const UncertaintySweep sweep = [] {
        UncertaintySweep s;
        std::mt19937_64 rng(20240611);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        while (s.instances < 240) {
            const auto inst = random_instance(rng);
            const auto curve = ground_state_energy_curve(inst.h0, inst.w, default_t_grid(4.0, 24));
            const double rise = curve.lambda.back() - curve.lambda0;
            if (!(rise > 1e-6)) continue;
            // every other window starts below lambda(0); the rest start exactly at it
            const bool at_ground = s.instances % 2 == 0;
            const double lo = at_ground ? curve.lambda0 : curve.lambda0 - u(rng);
            const auto win = make_window(lo, curve.lambda0 + (0.02 + 0.9 * u(rng)) * rise, inst.h0);
            const auto cert = certify_uncertainty(inst.h0, inst.w, curve, win);
            if (!cert.bound.certified()) continue;
            ++s.instances;
            if (!cert.direct.vacuous) {
                const double gap = cert.direct.value - cert.bound.kappa;
                s.worst_gap = std::min(s.worst_gap, gap);
                if (gap < -1e-8) ++s.failed;
            }
            if (at_ground) {
                const double tol = 1e-12 * inst.h0.spectral_scale();
                const auto m = mobility_check(inst.h0, inst.w, win, curve, tol);
                ++s.mobility_checked;
                if (!m.applicable || !m.all_positive) ++s.mobility_failed;
                if (m.applicable) s.worst_margin = std::min(s.worst_margin, m.min_margin);
            }
        }
        return s;
    }();
    return sweep;
}

Outcome criterion1() {
    const auto& s = uncertainty_sweep();
    return {s.instances >= 200 && s.failed == 0,
            fmt("%zu instances, min(kappa_direct - kappa_bound) = %.3e, violations = %zu", s.instances, s.worst_gap,
                s.failed)};
}

Outcome criterion2() {
    std::mt19937_64 rng(515);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::size_t configs = 0, failed = 0;
    double worst = std::numeric_limits<double>::infinity();
    while (configs < 50) {
        const int dim = 1 + static_cast<int>(rng() % 2);
        const int side = dim == 1 ? 16 + 2 * static_cast<int>(rng() % 60) : 6 + 2 * static_cast<int>(rng() % 5);
        const int period = 1 + static_cast<int>(rng() % 4);
        ModelConfig cfg = model(dim, side, period, 1.0, CouplingDistribution::uniform(0.5 + 4.0 * u(rng)));
        cfg.profile = {0.3 + 0.7 * u(rng), 1.0, 1.0, 1.0 + static_cast<double>(rng() % 3), ProfileShape::Plateau};
        if (rng() % 2) cfg.profile.shape = ProfileShape::Tent;
        if (2.0 * cfg.profile.R_U > side) continue;
        const auto m = instantiate(cfg);
        const auto h0 = free_operator(m);
        const auto gap = fluctuation_boundary_gap(h0, m.full_coupling, m.eta_max);
        if (!(gap.gap() > 1e-6)) continue;
        const double delta = (0.05 + 0.9 * u(rng)) * gap.gap();
        const auto c = compressed_min_eigenvalue(h0, m.full_coupling, make_window(gap.E0, gap.EF - delta, h0));
        ++configs;
        if (c.vacuous) continue;
        const double margin = c.value - kappa_full_coupling(delta, m.eta_max);
        worst = std::min(worst, margin);
        if (margin < -1e-8) ++failed;
    }
    return {failed == 0, fmt("%zu configs, min(direct - delta/eta_max) = %.3e, violations = %zu", configs, worst,
                             failed)};
}

Outcome criterion3() {
    const auto& s = uncertainty_sweep();
    return {s.mobility_checked > 0 && s.mobility_failed == 0,
            fmt("%zu instances with min I = lambda(0), min margin = %.3e, failures = %zu", s.mobility_checked,
                s.worst_margin, s.mobility_failed)};
}

Outcome criterion4() {
    const auto cfg = model(1, 128, 1, 1.0, CouplingDistribution::uniform(1.0));
    WegnerScanParams p;
    p.sides = {32, 64, 128};
    p.epsilons = {1e-1, 1e-2, 1e-3};
    p.window_offset = 0.3;
    p.delta = 0.1;
    p.n_samples = 2000;
    p.seed = 4;
    RunOptions run;
    run.workers = 4;
    const auto rep = wegner_scan(cfg, p, run);
    bool ok = true;
    std::string detail;
    for (double eps : p.epsilons) {
        double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
        double ci_lo_max = 0.0, ci_hi_min = std::numeric_limits<double>::infinity();
        for (const auto& r : rep.rows) {
            if (r.eps != eps) continue;
            if (!std::isfinite(r.ratio) || !(r.ratio > 0)) ok = false;
            lo = std::min(lo, r.ratio);
            hi = std::max(hi, r.ratio);
            ci_lo_max = std::max(ci_lo_max, r.ratio_ci.lo);
            ci_hi_min = std::min(ci_hi_min, r.ratio_ci.hi);
        }
        // the point spread must be <= 4 and the CIs must not force a spread above 4
        const double spread = hi / lo, forced = ci_lo_max / ci_hi_min;
        if (!(spread <= 4.0) || !(forced <= 4.0)) ok = false;
        detail += fmt("eps=%g: ratios [%.3f, %.3f] spread %.2f (CI-forced %.2f); ", eps, lo, hi, spread, forced);
    }
    return {ok, detail + fmt("C_W = %.3f", rep.fitted_C_W)};
}

Outcome criterion5() {
    auto cfg = model(1, 256, 1, 1.0, CouplingDistribution::point_mass(0.0, 1.0));
    const std::vector<double> E{2.0};
    const auto ids = estimate_ids(cfg, E, 1, 5);
    const double exact = std::acos(1.0 - 2.0 / 2.0) / std::numbers::pi;
    return {std::abs(ids.N_hat[0] - exact) <= 0.02, fmt("N(2.0) = %.6f, closed form %.6f", ids.N_hat[0], exact)};
}

Outcome criterion6() {
    const Box b{1, 256, 1.0};
    const auto op = assemble_hamiltonian(b, GridFunction(b));
    const auto g = greens_decay(op, -1.0, center_site(b));
    const double exact = -std::log((3.0 - std::sqrt(5.0)) / 2.0);
    return {std::abs(g.fit.slope - exact) <= 0.02 && !g.fit.degenerate,
            fmt("slope %.6f, transfer-matrix rate %.6f, r2 %.8f", g.fit.slope, exact, g.fit.r2)};
}

Outcome criterion7() {
    const auto p = msa_parameters(1, Rational(1), Rational(5), Rational(1), Rational(1, 20));
    const bool exact = p.beta == Rational(1, 2) && p.theta == Rational(1, 5) && p.q == Rational(6, 5) &&
                       p.p_dyn_bound == Rational(1, 5);
    bool rejected = false;
    try {
        msa_parameters(1, Rational(1), Rational(4), Rational(1), Rational(1, 20));
    } catch (const ConfigError&) {
        rejected = true;
    }
    return {exact && rejected, fmt("beta=%s theta=%s q=%s p_dyn<=%s, alpha=4 rejected: %s", to_string(p.beta).c_str(),
                                   to_string(p.theta).c_str(), to_string(p.q).c_str(),
                                   to_string(p.p_dyn_bound).c_str(), rejected ? "yes" : "no")};
}

Outcome criterion8() {
    const auto cfg = model(1, 128, 1, 1.0, CouplingDistribution::uniform(5.0));
    const auto m = instantiate(cfg);
    const auto h0 = free_operator(m);
    const double e0 = ground_state_energy(h0);
    const double tau = ensemble_window_tolerance(m);
    const SpectralWindow win{e0, e0 + 0.5, tau};
    // about one sample in a hundred reaches the window at this disorder strength
    const std::size_t n = 4000;
    std::vector<std::vector<EigenDecay>> per_sample(n);
    parallel_for(n, 4, [&](std::size_t k) { per_sample[k] = eigenfunction_decay(sample_operator(m, 8, k), win); });
    std::size_t total = 0, decaying = 0;
    for (const auto& states : per_sample)
        for (const auto& e : states) {
            ++total;
            decaying += !e.fit.degenerate && e.fit.slope > 0.1;
        }
    double worst_free = 0.0;
    const auto free_states = eigenfunction_decay(h0, win);
    for (const auto& e : free_states) worst_free = std::max(worst_free, std::abs(e.fit.slope));
    const double frac = total ? static_cast<double>(decaying) / static_cast<double>(total) : 0.0;
    return {total >= 20 && frac >= 0.9 && !free_states.empty() && worst_free < 0.05,
            fmt("disordered, %zu samples: %zu/%zu eigenvectors with slope > 0.1 (%.1f%%); free: max |slope| %.4f over %zu states",
                n, decaying, total, 100.0 * frac, worst_free, free_states.size())};
}

Outcome criterion9() {
    const auto params = msa_parameters(1, Rational(1), Rational(5), Rational(1), Rational(1, 20));
    bool ok = true;
    std::string detail;
    // both ends of the multiscale window I_L = [E0, E0 + L^-m / 2]; eta_max = 0.5 gives nonzero hit rates
    for (double eta : {0.5, 4.0}) {
        const auto cfg = model(1, 32, 1, 1.0, CouplingDistribution::uniform(eta));
        for (int side : {16, 32}) {
            const auto window = params.energy_window(side, ground_state_energy(free_operator(instantiate(cfg, side))));
            for (double E : {window.lo, window.hi}) {
                const std::vector<int> sides{side};
                const auto r = wegner_at_scale(cfg, E, sides, params, 2000, 9).front();
                ok = ok && r.measurable && r.p_ci.lo <= r.chain_bound;
                detail += fmt("eta=%g L=%d E=%.4f r=%.4f p_hat=%.4f [%.4f, %.4f] s(2r)=%.4f; ", eta, r.side, E,
                              r.radius, r.p_hat, r.p_ci.lo, r.p_ci.hi, r.chain_bound);
            }
        }
    }
    return {ok, detail};
}

std::string read_all(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

Outcome criterion10() {
    const std::string base =
        "d = 1\nL_sites = 32\nimpurities = sublattice 1\nc_U = 1\nC_U = 1\nr_U_sites = 1\nR_U_sites = 1\n"
        "eta_max = 2\nlaw = uniform\nseed = 31\n";
    const std::vector<std::string> tasks{
        "task = curve\nt_points = 6\n",
        "task = uncertainty\nwindows_rel_E0 = 0:0.1, 0:1\n",
        "task = wegner\nn_samples = 200\neps_list = 0.1, 0.01\nwindow_offset = 0.2\nL_list_sites = 16, 32\n",
        "task = ids\nn_samples = 100\nenergies = 0:2:9\neps_list = 0.1\n",
        "task = gap\nL_list_sites = 8, 16, 32\n",
        "task = msa-params\n",
        "task = initial-scale\nn_samples = 100\nL_list_sites = 8, 16\n",
        "task = greens\nenergies = -1, -0.2\n",
        "task = localize\nwindows_rel_E0 = 0:0.8\nn_samples = 3\n",
        "task = dynmoment\nwindows_rel_E0 = 0:0.8\nn_samples = 20\nK_radius_sites = 3\n",
    };
    const auto root = fs::temp_directory_path() / "fblab_acceptance";
    fs::remove_all(root);
    std::size_t files = 0, mismatches = 0;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const auto e = parse_config(base + tasks[i]);
        std::vector<std::vector<fs::path>> outs;
        for (unsigned workers : {1u, 1u, 4u}) {
            RunOptions run;
            run.workers = workers;
            const auto dir = root / std::to_string(i) / std::to_string(outs.size());
            fs::create_directories(dir);
            outs.push_back(emit(run_experiment(e, run), dir, OutputFormat::Both));
        }
        for (std::size_t f = 0; f < outs[0].size(); ++f) {
            ++files;
            const auto ref = read_all(outs[0][f]);
            mismatches += ref != read_all(outs[1][f]) || ref != read_all(outs[2][f]);
        }
    }

    std::mt19937_64 rng(1010);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    std::size_t solves = 0;
    for (int i = 0; i < 24; ++i) {
        const int dim = 1 + i % 3;
        const int side = dim == 1 ? 64 + static_cast<int>(rng() % 449) : dim == 2 ? 8 + static_cast<int>(rng() % 15)
                                                                            : 4 + static_cast<int>(rng() % 5);
        const Box b{dim, side, 1.0};
        GridFunction v(b);
        for (auto& x : v.values) x = u(rng) < 0.3 ? 4.0 * u(rng) : 0.0;
        const auto op = assemble_hamiltonian(b, v);
        SolverOptions lz, dn;
        lz.method = SolverMethod::Lanczos;
        dn.method = SolverMethod::Dense;
        const std::size_t k = std::min<std::size_t>(12, op.size());
        const auto a = lowest_eigenvalues(op, k, lz, false);
        const auto d = lowest_eigenvalues(op, k, dn, false);
        for (std::size_t j = 0; j < k; ++j)
            worst = std::max(worst, std::abs(a.values[j] - d.values[j]) / op.spectral_scale());
        ++solves;
    }
    return {mismatches == 0 && worst <= 1e-8,
            fmt("%zu emitted files identical across runs and workers {1,4} (mismatches %zu); %zu Lanczos solves, "
                "max |lanczos - dense| / scale = %.2e",
                files, mismatches, solves, worst)};
}

}  // namespace

int main() {
    const std::vector<std::function<Outcome()>> criteria{criterion1, criterion2, criterion3, criterion4, criterion5,
                                                         criterion6, criterion7, criterion8, criterion9, criterion10};
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i]();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("criterion %zu: %s  %s (%.1f s)\n", i + 1, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
        std::fflush(stdout);
        failed += !o.pass;
    }
    return failed ? 1 : 0;
}
