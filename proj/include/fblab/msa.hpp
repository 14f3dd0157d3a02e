#pragma once

// Quantitative inputs to localization: the multiscale exponent bundle,
// initial-scale probabilities, Green's-function decay off the spectrum, the
// Wegner estimate at scale exp(-L^theta), and finite-volume localization
// diagnostics (eigenfunction decay, dynamical moments).

#include "fblab/fluctuation.hpp"
#include "fblab/parallel.hpp"
#include "fblab/stats.hpp"
#include "fblab/wegner.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseLU>
#include <boost/rational.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fblab {

using Rational = boost::rational<std::int64_t>;

inline double to_double(const Rational& r) {
    return static_cast<double>(r.numerator()) / static_cast<double>(r.denominator());
}

inline std::string to_string(const Rational& r) {
    if (r.denominator() == 1) return std::to_string(r.numerator());
    return std::to_string(r.numerator()) + "/" + std::to_string(r.denominator());
}

/// Exact parse of "3", "-1/20" or "0.05".
inline Rational parse_rational(const std::string& text) {
    const auto slash = text.find('/');
    auto parse_int = [&](const std::string& s) -> std::int64_t {
        std::size_t pos = 0;
        const auto v = std::stoll(s, &pos);
        if (pos != s.size()) throw ConfigError("not a rational number: '" + text + "'");
        return v;
    };
    try {
        if (slash != std::string::npos) {
            const auto den = parse_int(text.substr(slash + 1));
            if (den == 0) throw ConfigError("zero denominator in '" + text + "'");
            return Rational(parse_int(text.substr(0, slash)), den);
        }
        const auto dot = text.find('.');
        if (dot == std::string::npos) return Rational(parse_int(text));
        const std::string frac = text.substr(dot + 1);
        if (frac.empty() || frac.size() > 15 ||
            !std::all_of(frac.begin(), frac.end(), [](unsigned char c) { return std::isdigit(c); }))
            throw ConfigError("not a rational number: '" + text + "'");
        std::string whole = text.substr(0, dot);
        const bool neg = !whole.empty() && whole[0] == '-';
        if (whole.empty() || whole == "-" || whole == "+") whole += "0";
        std::int64_t den = 1;
        for (std::size_t i = 0; i < frac.size(); ++i) den *= 10;
        const std::int64_t w = parse_int(whole);
        const std::int64_t f = parse_int(frac);
        return Rational(w * den + (neg ? -f : f), den);
    } catch (const std::logic_error&) {
        throw ConfigError("not a rational number: '" + text + "'");
    }
}

// ---------------------------------------------------------------------------
// Exponent bundle

struct MSAConstraint {
    std::string name;
    bool satisfied = false;
    std::string detail;
};

/// Multiscale bookkeeping: beta = (2-m)/2, theta = (2-m)/4 - kappa,
/// q = d + kappa 4d/(2-m), gamma_l = l^(-m/2), I_l = [E0, E0 + l^(-m)/2],
/// and the dynamical exponent bound p <= min(kappa 4d/(2-m), xi).
struct MSAParameters {
    int d = 1;
    Rational m, xi, alpha, kappa;
    Rational beta, theta, q, p_dyn_bound;
    Rational alpha_threshold;  // 4d/(2-m)
    std::vector<MSAConstraint> ledger;

    double gamma(double length) const { return std::pow(length, -to_double(m) / 2.0); }
    Interval energy_window(double length, double E0) const {
        return {E0, E0 + 0.5 * std::pow(length, -to_double(m))};
    }
    /// theta * alpha: the exponent the displayed chain actually delivers.
    Rational theta_alpha() const { return theta * alpha; }
    bool valid() const {
        return std::all_of(ledger.begin(), ledger.end(), [](const MSAConstraint& c) { return c.satisfied; });
    }
};

/// Computes the bundle and its constraint ledger without rejecting anything.
inline MSAParameters msa_bundle(int d, const Rational& m, const Rational& alpha, const Rational& xi,
                                const Rational& kappa) {
    MSAParameters p;
    p.d = d;
    p.m = m;
    p.alpha = alpha;
    p.xi = xi;
    p.kappa = kappa;
    const Rational two(2), four(4), dd(d);
    const bool m_ok = m > 0 && m < two;
    p.ledger.push_back({"d >= 1", d >= 1, "d = " + std::to_string(d)});
    p.ledger.push_back({"m in (0,2)", m_ok, "m = " + to_string(m)});
    if (!m_ok) return p;
    p.beta = (two - m) / two;
    p.theta = (two - m) / four - kappa;
    p.alpha_threshold = four * dd / (two - m);
    p.q = dd + kappa * p.alpha_threshold;
    p.p_dyn_bound = std::min(kappa * p.alpha_threshold, xi);
    p.ledger.push_back({"kappa in (0,(2-m)/4)", kappa > 0 && kappa < (two - m) / four,
                        "kappa = " + to_string(kappa) + ", (2-m)/4 = " + to_string((two - m) / four)});
    p.ledger.push_back({"xi > 0", xi > 0, "xi = " + to_string(xi)});
    p.ledger.push_back({"alpha > 4d/(2-m)", alpha > p.alpha_threshold,
                        "alpha = " + to_string(alpha) + ", 4d/(2-m) = " + to_string(p.alpha_threshold)});
    p.ledger.push_back({"theta in (0,beta/2)", p.theta > 0 && p.theta < p.beta / two,
                        "theta = " + to_string(p.theta) + ", beta/2 = " + to_string(p.beta / two)});
    p.ledger.push_back({"q > d", p.q > dd, "q = " + to_string(p.q)});
    return p;
}

/// The validated bundle; every violated constraint is named in the error.
inline MSAParameters msa_parameters(int d, const Rational& m, const Rational& alpha, const Rational& xi,
                                    const Rational& kappa) {
    auto p = msa_bundle(d, m, alpha, xi, kappa);
    std::string failed;
    for (const auto& c : p.ledger)
        if (!c.satisfied) failed += (failed.empty() ? "" : "; ") + c.name + " violated (" + c.detail + ")";
    if (!failed.empty()) throw ConfigError("invalid multiscale parameters: " + failed);
    return p;
}

// ---------------------------------------------------------------------------
// Decay fits

inline constexpr double kMagnitudeFloor = 1e-14;

/// Least-squares fit of log|f| against distance. `slope` is the decay rate
/// (minus the regression coefficient), so decay is positive.
struct DecayFit {
    std::vector<std::pair<double, double>> samples;  // (distance, log magnitude) inside the fit window
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    double r_min = 0.0;
    double r_max = 0.0;
    std::size_t support_size = 0;  // sites with magnitude above the floor
    bool degenerate = false;       // fewer than two distinct distances to fit
};

/// Drops magnitudes below 1e-14, keeps the middle 80% of the remaining
/// distance range, and fits log|f| linearly.
inline DecayFit fit_decay(std::span<const double> distances, std::span<const double> magnitudes) {
    DecayFit f;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = 0; i < distances.size(); ++i) {
        if (!(magnitudes[i] >= kMagnitudeFloor)) continue;
        ++f.support_size;
        lo = std::min(lo, distances[i]);
        hi = std::max(hi, distances[i]);
    }
    if (f.support_size == 0) {
        f.degenerate = true;
        return f;
    }
    f.r_min = lo + 0.1 * (hi - lo);
    f.r_max = hi - 0.1 * (hi - lo);
    std::vector<double> x, y;
    for (std::size_t i = 0; i < distances.size(); ++i) {
        if (!(magnitudes[i] >= kMagnitudeFloor)) continue;
        if (distances[i] < f.r_min || distances[i] > f.r_max) continue;
        x.push_back(distances[i]);
        y.push_back(std::log(magnitudes[i]));
        f.samples.emplace_back(distances[i], y.back());
    }
    const bool spread = !x.empty() && *std::max_element(x.begin(), x.end()) > *std::min_element(x.begin(), x.end());
    if (!spread) {
        f.degenerate = true;
        return f;
    }
    const auto lf = least_squares(x, y);
    f.slope = -lf.slope;
    f.intercept = lf.intercept;
    f.r2 = lf.r2;
    return f;
}

struct GreensDecay {
    DecayFit fit;
    double energy = 0.0;
    std::size_t source = 0;
    double distance_to_spectrum = 0.0;
    double ct_reference = 0.0;  // sqrt(dist(E, spec)); shape of the Combes-Thomas rate
};

/// Distance from E to spec(op): dense spectrum when small, otherwise the
/// extremal eigenvalues (E must then lie outside [min, max]).
inline double distance_to_spectrum(const LatticeOperator& op, double E, const SolverOptions& opts = {}) {
    if (opts.use_dense(op.size())) {
        const auto vals = all_eigenvalues(op, opts);
        double d = std::numeric_limits<double>::infinity();
        for (double v : vals) d = std::min(d, std::abs(v - E));
        return d;
    }
    const double lo = ground_state_energy(op, opts);
    LatticeOperator neg = op;
    neg.matrix = -op.matrix;
    const double hi = -ground_state_energy(neg, opts);
    if (E < lo) return lo - E;
    if (E > hi) return E - hi;
    throw ConfigError("energy inside [min spec, max spec] of a large operator; spectral gap cannot be certified");
}

/// Solves (op - E) g = delta_source and fits the decay of |g| in l1 distance.
inline GreensDecay greens_decay(const LatticeOperator& op, double E, std::size_t source,
                                const SolverOptions& opts = {}) {
    if (source >= op.size()) throw ConfigError("Green's function source outside the box");
    GreensDecay g;
    g.energy = E;
    g.source = source;
    g.distance_to_spectrum = distance_to_spectrum(op, E, opts);
    if (g.distance_to_spectrum <= 10.0 * opts.rel_tol * op.spectral_scale())
        throw ConfigError("energy lies in the spectrum; resolvent undefined");
    g.ct_reference = std::sqrt(g.distance_to_spectrum);

    SparseMatrix shifted = op.matrix;
    for (Eigen::Index i = 0; i < shifted.rows(); ++i) shifted.coeffRef(i, i) -= E;
    Eigen::SparseLU<SparseMatrix> lu;
    lu.compute(shifted);
    if (lu.info() != Eigen::Success) throw ComputeError("sparse factorization of H - E failed");
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(op.size()));
    rhs(static_cast<Eigen::Index>(source)) = 1.0;
    const Eigen::VectorXd sol = lu.solve(rhs);
    if (lu.info() != Eigen::Success) throw ComputeError("sparse solve of H - E failed");

    const Site s = op.box.site(source);
    std::vector<double> r(op.size()), mag(op.size());
    for (std::size_t i = 0; i < op.size(); ++i) {
        r[i] = l1_distance(op.box.site(i), s, op.box.dim);
        mag[i] = std::abs(sol(static_cast<Eigen::Index>(i)));
    }
    g.fit = fit_decay(r, mag);
    return g;
}

inline std::size_t center_site(const Box& box) {
    Site c{0, 0, 0};
    for (int a = 0; a < box.dim; ++a) c[a] = box.side / 2;
    return box.index(c);
}

// ---------------------------------------------------------------------------
// Eigenfunction decay

struct EigenDecay {
    double eigenvalue = 0.0;
    std::size_t center = 0;  // argmax |psi|
    DecayFit fit;
};

/// Decay of every window eigenvector away from its localization center.
inline std::vector<EigenDecay> eigenfunction_decay(const LatticeOperator& op, const SpectralWindow& window,
                                                   const SolverOptions& opts = {}) {
    const auto ws = eigenpairs_in_window(op, window, opts);
    std::vector<EigenDecay> out;
    std::vector<double> r(op.size()), mag(op.size());
    for (std::size_t c = 0; c < ws.rank(); ++c) {
        const auto v = ws.pairs.vectors.col(static_cast<Eigen::Index>(c));
        EigenDecay e;
        e.eigenvalue = ws.pairs.values[c];
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        e.center = static_cast<std::size_t>(arg);
        const Site s = op.box.site(e.center);
        for (std::size_t i = 0; i < op.size(); ++i) {
            r[i] = l1_distance(op.box.site(i), s, op.box.dim);
            mag[i] = std::abs(v(static_cast<Eigen::Index>(i)));
        }
        e.fit = fit_decay(r, mag);
        out.push_back(std::move(e));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dynamical moment

/// || |X|^p P_window(op) chi_K ||, with |X| the l-infinity distance from the
/// box center and K the sites with |X| < radius. Computed in the window
/// eigenbasis B: the norm squared is the top eigenvalue of
/// G^(1/2) (B^T D_X^2p B) G^(1/2) with G = B^T chi_K B.
inline double moment_norm(const Eigen::MatrixXd& basis, const Box& box, double p_mom, double radius) {
    if (basis.cols() == 0) return 0.0;
    const auto n = static_cast<Eigen::Index>(box.volume());
    Eigen::VectorXd x2p(n), chi(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double r = linf_from_center(box, box.site(static_cast<std::size_t>(i)));
        x2p(i) = p_mom == 0.0 ? 1.0 : std::pow(r, 2.0 * p_mom);
        chi(i) = r < radius ? 1.0 : 0.0;
    }
    const Eigen::MatrixXd s = basis.transpose() * x2p.asDiagonal() * basis;
    const Eigen::MatrixXd g = basis.transpose() * chi.asDiagonal() * basis;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eg(g);
    const Eigen::VectorXd ev = eg.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Eigen::MatrixXd root = eg.eigenvectors() * ev.asDiagonal() * eg.eigenvectors().transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(root * s * root, Eigen::EigenvaluesOnly);
    return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

struct DynamicalMomentParams {
    double window_lo = 0.0;  // relative to E0 of the free operator
    double window_hi = 0.0;
    double p_mom = 0.0;
    double K_radius = 1.0;
    std::size_t n_samples = 0;
    std::uint64_t seed = 0;
};

struct DynamicalMomentResult {
    EnsembleEstimate estimate;
    std::vector<double> norms;  // per sample
    double E0 = 0.0;
};

inline DynamicalMomentResult dynamical_moment(const ModelConfig& cfg, const DynamicalMomentParams& p,
                                              const RunOptions& run = {}) {
    if (p.n_samples == 0) throw ConfigError("dynamical moment needs n_samples > 0");
    if (!(p.p_mom >= 0)) throw ConfigError("moment exponent must be >= 0");
    if (!(p.K_radius > 0)) throw ConfigError("K radius must be > 0");
    const auto model = instantiate(cfg);
    DynamicalMomentResult res;
    res.E0 = ground_state_energy(free_operator(model), run.solver);
    const double tau = ensemble_window_tolerance(model);
    const SpectralWindow w{res.E0 + p.window_lo, res.E0 + p.window_hi, tau};
    w.validate();
    res.norms.assign(p.n_samples, 0.0);
    parallel_for(p.n_samples, run.workers, [&](std::size_t k) {
        const auto op = sample_operator(model, p.seed, k);
        const auto ws = eigenpairs_in_window(op, w, run.solver);
        res.norms[k] = moment_norm(ws.pairs.vectors, model.box, p.p_mom, p.K_radius);
    });
    const auto m = mean_with_ci(res.norms);
    res.estimate = {"dynamical_moment", p.n_samples, m.mean, m.ci, p.seed};
    return res;
}

// ---------------------------------------------------------------------------
// Initial-scale estimate

struct InitialScaleRow {
    int side = 0;
    double E0 = 0.0;
    double window_hi = 0.0;  // E0 + L^-m
    std::size_t hits = 0;
    std::size_t n_samples = 0;
    double p_hat = 0.0;
    Interval p_ci;
};

struct InitialScaleReport {
    std::vector<InitialScaleRow> rows;
    std::optional<double> xi;  // fitted decay exponent of the hit probability
    double xi_stderr = 0.0;
    Interval xi_ci;
    std::size_t fitted_cells = 0;
    std::optional<int> L_star;  // smallest listed L from which p_hat <= L^-xi holds
};

/// P{spec(H_L) ∩ [E0, E0 + L^-m] ≠ ∅} per box side, with a weighted
/// least-squares fit of -ln P against ln L (cells with at least one hit;
/// weights from the delta-method variance (1-p)/(n p)).
inline InitialScaleReport initial_scale_probability(const ModelConfig& cfg, std::span<const int> sides, double m,
                                                    std::size_t n, std::uint64_t seed, const RunOptions& run = {}) {
    if (n == 0) throw ConfigError("initial-scale estimate needs n_samples > 0");
    if (!(m > 0 && m < 2)) throw ConfigError("m must lie in (0,2)");
    for (std::size_t i = 1; i < sides.size(); ++i)
        if (!(sides[i] > sides[i - 1])) throw ConfigError("L list must be increasing");
    InitialScaleReport rep;
    std::vector<double> x, y, w;
    for (int side : sides) {
        const auto model = instantiate(cfg, side);
        InitialScaleRow row;
        row.side = side;
        row.E0 = ground_state_energy(free_operator(model), run.solver);
        row.window_hi = row.E0 + std::pow(static_cast<double>(side), -m);
        const SpectralWindow win{row.E0, row.window_hi, ensemble_window_tolerance(model)};
        const auto spectra = sample_low_spectra(model, win.hi + win.tau, n, seed, run);
        const auto st = window_statistics(spectra, win, seed);
        row.hits = st.hits;
        row.n_samples = n;
        row.p_hat = st.probability.value;
        row.p_ci = st.probability.ci;
        rep.rows.push_back(row);
        if (row.hits > 0) {
            x.push_back(std::log(static_cast<double>(side)));
            y.push_back(-std::log(row.p_hat));
            const double var = row.hits == n ? 1.0 / (static_cast<double>(n) * static_cast<double>(n))
                                             : (1.0 - row.p_hat) / (static_cast<double>(n) * row.p_hat);
            w.push_back(1.0 / var);
        }
    }
    rep.fitted_cells = x.size();
    if (x.size() >= 2) {
        const auto f = least_squares(x, y, w);
        rep.xi = f.slope;
        rep.xi_stderr = f.slope_stderr;
        const double z = normal_quantile(0.5 + kConfidenceLevel / 2.0);
        rep.xi_ci = {f.slope - z * f.slope_stderr, f.slope + z * f.slope_stderr};
        for (std::size_t i = 0; i < rep.rows.size(); ++i) {
            bool holds = true;
            for (std::size_t j = i; j < rep.rows.size(); ++j)
                holds = holds && rep.rows[j].p_hat <= std::pow(static_cast<double>(rep.rows[j].side), -*rep.xi);
            if (holds) {
                rep.L_star = rep.rows[i].side;
                break;
            }
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Wegner estimate at scale exp(-L^theta)

struct ScaleWegnerRow {
    int side = 0;
    double radius = 0.0;  // exp(-L^theta)
    bool measurable = false;
    std::size_t hits = 0;
    std::size_t n_samples = 0;
    double p_hat = 0.0;
    Interval p_ci;
    double target = 0.0;        // L^-q
    double chain_bound = 0.0;   // s(2 exp(-L^theta)) of the actual law
    double log_bound = 0.0;     // (ln L^theta - ln 2)^-alpha = (-ln 2 + L^theta)^-alpha
};

/// P{dist(spec(H_L), E) <= exp(-L^theta)} per side. Cells whose radius is
/// below the eigensolver resolution are marked unmeasurable, never zero.
inline std::vector<ScaleWegnerRow> wegner_at_scale(const ModelConfig& cfg, double E, std::span<const int> sides,
                                                   const MSAParameters& params, std::size_t n, std::uint64_t seed,
                                                   const RunOptions& run = {}) {
    if (!params.valid()) throw ConfigError("wegner_at_scale needs a valid multiscale bundle");
    if (n == 0) throw ConfigError("wegner_at_scale needs n_samples > 0");
    const double theta = to_double(params.theta);
    const double q = to_double(params.q);
    const double alpha = to_double(params.alpha);
    std::vector<ScaleWegnerRow> rows;
    for (int side : sides) {
        const auto model = instantiate(cfg, side);
        ScaleWegnerRow row;
        row.side = side;
        row.n_samples = n;
        const double Lt = std::pow(static_cast<double>(side), theta);
        row.radius = std::exp(-Lt);
        row.target = std::pow(static_cast<double>(side), -q);
        row.chain_bound = cfg.law.modulus(2.0 * row.radius);
        row.log_bound = std::pow(Lt - std::log(2.0), -alpha);
        const double resolution = 10.0 * run.solver.rel_tol * full_coupling_operator(model).spectral_scale();
        row.measurable = row.radius > resolution;
        if (row.measurable) {
            const SpectralWindow win{E - row.radius, E + row.radius, 0.0};
            const auto spectra = sample_low_spectra(model, win.hi, n, seed, run);
            const auto st = window_statistics(spectra, win, seed);
            row.hits = st.hits;
            row.p_hat = st.probability.value;
            row.p_ci = st.probability.ci;
        }
        rows.push_back(row);
    }
    return rows;
}

}  // namespace fblab
