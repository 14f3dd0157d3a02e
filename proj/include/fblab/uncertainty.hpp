#pragma once

// Projector inequality P_I W P_I >= kappa P_I: the lower bound on kappa
// obtained from the ground-state curve, the sharp constant obtained by
// compressing W onto ran P_I, the full-coupling constant, and the converse
// mobility check lambda(t) > lambda(0).

#include "fblab/spectral.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fblab {

struct KappaBound {
    double kappa = -std::numeric_limits<double>::infinity();
    double t_star = 0.0;
    bool certified() const { return kappa > 0; }
};

/// max over the grid of (lambda(t) - I.hi) / t. On a finite grid this is a
/// lower bound for the supremum over all t > 0, so a positive value is still
/// a valid constant in the projector inequality.
inline KappaBound kappa_lower_bound(const GroundStateCurve& curve, const SpectralWindow& window) {
    if (!std::isfinite(window.hi)) throw ConfigError("kappa bound needs a finite window top");
    if (curve.t_grid.size() != curve.lambda.size()) throw ConfigError("malformed ground-state curve");
    KappaBound b;
    for (std::size_t i = 0; i < curve.t_grid.size(); ++i) {
        const double k = (curve.lambda[i] - window.hi) / curve.t_grid[i];
        if (k > b.kappa) {
            b.kappa = k;
            b.t_star = curve.t_grid[i];
        }
    }
    return b;
}

struct CompressedMinimum {
    bool vacuous = true;  // ran P_I = {0}; the inequality holds trivially
    double value = 0.0;
    std::size_t rank = 0;
    std::size_t ambiguous = 0;
};

/// Smallest eigenvalue of B^T diag(w) B for an orthonormal basis B of a subspace.
inline double compressed_minimum(const Eigen::MatrixXd& basis, const GridFunction& w) {
    const Eigen::Map<const Eigen::VectorXd> wv(w.values.data(), static_cast<Eigen::Index>(w.size()));
    const Eigen::MatrixXd m = basis.transpose() * wv.asDiagonal() * basis;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
}

/// The sharp constant in P_I W P_I >= kappa P_I for this instance.
/// Endpoint-ambiguous eigenvalues are kept in ran P_I.
inline CompressedMinimum compressed_min_eigenvalue(const LatticeOperator& h0, const GridFunction& w,
                                                   const SpectralWindow& window, const SolverOptions& opts = {}) {
    validate_perturbation(w);
    const auto ws = eigenpairs_in_window(h0, window, opts);
    CompressedMinimum c;
    c.rank = ws.rank();
    c.ambiguous = ws.ambiguous;
    if (c.rank == 0) return c;
    c.vacuous = false;
    c.value = compressed_minimum(ws.pairs.vectors, w);
    return c;
}

/// kappa = delta / eta_max for windows [E0, E_F - delta].
inline double kappa_full_coupling(double delta, double eta_max) {
    if (!(delta > 0)) throw ConfigError("full-coupling constant needs delta > 0");
    if (!(eta_max > 0)) throw ConfigError("full-coupling constant needs eta_max > 0");
    return delta / eta_max;
}

struct UncertaintyCertificate {
    SpectralWindow window;
    KappaBound bound;
    CompressedMinimum direct;

    bool vacuous() const { return direct.vacuous; }
    /// kappa_direct >= kappa_bound - slack whenever the bound is positive.
    bool consistent(double slack = 1e-8) const {
        return !bound.certified() || direct.vacuous || direct.value >= bound.kappa - slack;
    }
};

inline UncertaintyCertificate certify_uncertainty(const LatticeOperator& h0, const GridFunction& w,
                                                  const GroundStateCurve& curve, const SpectralWindow& window,
                                                  const SolverOptions& opts = {}) {
    UncertaintyCertificate cert;
    cert.window = window;
    cert.bound = kappa_lower_bound(curve, window);
    cert.direct = compressed_min_eigenvalue(h0, w, window, opts);
    return cert;
}

struct MobilityReport {
    bool applicable = false;
    std::string reason;  // why the hypotheses fail, when inapplicable
    double kappa = 0.0;  // verified projector constant
    std::vector<double> margins;  // lambda(t) - lambda(0) per grid point
    double min_margin = 0.0;
    double min_margin_over_t = 0.0;  // smallest margin / t; compare with kappa
    bool all_positive = false;
};

/// Converse check: if the window starts at lambda(0), has positive length and
/// the projector inequality holds with some kappa > 0, then lambda(t) >
/// lambda(0) for every grid t. `threshold` is the positivity tolerance.
inline MobilityReport mobility_check(const LatticeOperator& h0, const GridFunction& w, const SpectralWindow& window,
                                     const GroundStateCurve& curve, double threshold,
                                     const SolverOptions& opts = {}) {
    MobilityReport r;
    const double solver_tol = std::max(window.tau, 1e-9 * h0.spectral_scale());
    if (std::abs(window.lo - curve.lambda0) > solver_tol) {
        r.reason = "window does not start at the ground-state energy";
        return r;
    }
    if (!(window.hi > window.lo)) {
        r.reason = "window has zero length";
        return r;
    }
    const auto c = compressed_min_eigenvalue(h0, w, window, opts);
    if (c.vacuous || !(c.value > threshold)) {
        r.reason = "projector inequality not verified with a positive constant";
        return r;
    }
    r.applicable = true;
    r.kappa = c.value;
    r.min_margin = std::numeric_limits<double>::infinity();
    r.min_margin_over_t = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < curve.t_grid.size(); ++i) {
        const double m = curve.lambda[i] - curve.lambda0;
        r.margins.push_back(m);
        r.min_margin = std::min(r.min_margin, m);
        r.min_margin_over_t = std::min(r.min_margin_over_t, m / curve.t_grid[i]);
    }
    r.all_positive = r.min_margin > threshold;
    return r;
}

inline MobilityReport mobility_check(const LatticeOperator& h0, const GridFunction& w, const SpectralWindow& window,
                                     std::span<const double> t_grid, double threshold,
                                     const SolverOptions& opts = {}) {
    const auto curve = ground_state_energy_curve(h0, w, t_grid, opts);
    return mobility_check(h0, w, window, curve, threshold, opts);
}

}  // namespace fblab
