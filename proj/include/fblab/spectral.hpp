#pragma once

// Finite-volume Dirichlet operators and their spectral data: eigenvalues,
// spectral-window eigenbases, projector traces and the ground-state curve
// t -> inf spec(H0 + t W).

#include "fblab/lattice.hpp"
#include "fblab/rng.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace fblab {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor>;

/// Symmetric nearest-neighbour operator -Δ_h + V on a box with Dirichlet
/// boundary: diagonal 2d/h² + V(x), off-diagonal -1/h² inside the box.
struct LatticeOperator {
    Box box;
    GridFunction potential;
    SparseMatrix matrix;

    std::size_t size() const { return static_cast<std::size_t>(matrix.rows()); }

    double hopping() const { return 1.0 / (box.spacing * box.spacing); }
    double kinetic_diagonal() const { return 2.0 * box.dim * hopping(); }

    Eigen::MatrixXd dense() const { return Eigen::MatrixXd(matrix); }

    /// Gershgorin enclosure of the spectrum.
    Interval gershgorin() const {
        Interval g{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
        std::vector<double> off(size(), 0.0), diag(size(), 0.0);
        for (int k = 0; k < matrix.outerSize(); ++k)
            for (SparseMatrix::InnerIterator it(matrix, k); it; ++it) {
                if (it.row() == it.col())
                    diag[it.row()] = it.value();
                else
                    off[it.row()] += std::abs(it.value());
            }
        for (std::size_t i = 0; i < size(); ++i) {
            g.lo = std::min(g.lo, diag[i] - off[i]);
            g.hi = std::max(g.hi, diag[i] + off[i]);
        }
        return g;
    }

    double spectral_scale() const {
        const auto g = gershgorin();
        return std::max({1.0, std::abs(g.lo), std::abs(g.hi)});
    }
};

/// The potential must be defined on exactly the sites of `box`.
inline LatticeOperator assemble_hamiltonian(const Box& box, const GridFunction& potential) {
    box.validate();
    if (!(potential.box == box) || potential.size() != box.volume())
        throw ConfigError("potential extent does not match the box");
    LatticeOperator op;
    op.box = box;
    op.potential = potential;
    const auto n = static_cast<Eigen::Index>(box.volume());
    const double t = op.hopping();
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(n) * (1 + 2 * box.dim));
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        if (!std::isfinite(potential[idx])) throw ConfigError("potential must be finite");
        trips.emplace_back(i, i, op.kinetic_diagonal() + potential[idx]);
        const Site x = box.site(idx);
        for (int a = 0; a < box.dim; ++a) {
            for (int dir : {-1, 1}) {
                Site y = x;
                y[a] += dir;
                if (box.contains(y)) trips.emplace_back(i, static_cast<Eigen::Index>(box.index(y)), -t);
            }
        }
    }
    op.matrix.resize(n, n);
    op.matrix.setFromTriplets(trips.begin(), trips.end());
    op.matrix.makeCompressed();
    return op;
}

/// Same kinetic part, potential replaced by potential + t * w.
inline LatticeOperator add_potential(const LatticeOperator& op, const GridFunction& w, double t) {
    if (w.size() != op.size()) throw ConfigError("perturbation extent does not match the operator");
    LatticeOperator out = op;
    for (std::size_t i = 0; i < w.size(); ++i) {
        out.potential[i] += t * w[i];
        out.matrix.coeffRef(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) += t * w[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Eigensolvers

enum class SolverMethod { Auto, Dense, Lanczos };

struct SolverOptions {
    SolverMethod method = SolverMethod::Auto;
    std::size_t dense_crossover = 512;  // Auto uses the dense path for n <= crossover
    double rel_tol = 1e-10;             // residual tolerance relative to spectral scale
    int max_restarts = 200;
    std::uint64_t seed = 0x1a2b3c4dULL;  // Lanczos start vectors

    bool use_dense(std::size_t n) const {
        return method == SolverMethod::Dense || (method == SolverMethod::Auto && n <= dense_crossover);
    }
};

struct EigenSolution {
    std::vector<double> values;  // ascending
    Eigen::MatrixXd vectors;     // n x k, empty when not requested
    std::vector<double> residuals;

    std::size_t count() const { return values.size(); }
    bool has_vectors() const { return vectors.cols() > 0 || values.empty(); }
    double max_residual() const {
        double r = 0.0;
        for (double x : residuals) r = std::max(r, x);
        return r;
    }
};

class EigensolverError : public ComputeError {
public:
    EigensolverError(const std::string& what, double best_residual)
        : ComputeError(what + " (best residual " + std::to_string(best_residual) + ")"),
          best_residual_(best_residual) {}
    double best_residual() const { return best_residual_; }

private:
    double best_residual_;
};

namespace detail {

inline std::vector<double> residual_norms(const SparseMatrix& a, const std::vector<double>& vals,
                                          const Eigen::MatrixXd& vecs) {
    std::vector<double> r(vals.size());
    for (std::size_t i = 0; i < vals.size(); ++i) {
        const auto c = static_cast<Eigen::Index>(i);
        r[i] = (a * vecs.col(c) - vals[i] * vecs.col(c)).norm();
    }
    return r;
}

inline bool is_tridiagonal_chain(const LatticeOperator& op) { return op.box.dim == 1; }

/// Full dense diagonalization; returns the lowest k pairs.
inline EigenSolution dense_lowest(const LatticeOperator& op, std::size_t k, bool with_vectors) {
    const auto n = static_cast<Eigen::Index>(op.size());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    const int opts = with_vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly;
    if (is_tridiagonal_chain(op)) {
        Eigen::VectorXd diag(n), sub(std::max<Eigen::Index>(n - 1, 0));
        for (Eigen::Index i = 0; i < n; ++i) diag(i) = op.matrix.coeff(i, i);
        for (Eigen::Index i = 0; i + 1 < n; ++i) sub(i) = op.matrix.coeff(i + 1, i);
        es.computeFromTridiagonal(diag, sub, opts);
    } else {
        es.compute(op.dense(), opts);
    }
    if (es.info() != Eigen::Success) throw EigensolverError("dense eigensolver failed", std::nan(""));
    EigenSolution sol;
    const auto kk = static_cast<Eigen::Index>(std::min<std::size_t>(k, op.size()));
    sol.values.assign(es.eigenvalues().data(), es.eigenvalues().data() + kk);
    if (with_vectors) {
        sol.vectors = es.eigenvectors().leftCols(kk);
        sol.residuals = residual_norms(op.matrix, sol.values, sol.vectors);
    }
    return sol;
}

inline Eigen::VectorXd start_vector(std::size_t n, std::uint64_t seed, std::uint64_t stream) {
    const RngStream rng{seed, stream};
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) v(static_cast<Eigen::Index>(i)) = rng.uniform(i) - 0.5;
    return v;
}

inline void orthogonalize(Eigen::VectorXd& v, const Eigen::MatrixXd& basis, Eigen::Index cols) {
    if (cols == 0) return;
    for (int pass = 0; pass < 2; ++pass) {
        const Eigen::VectorXd c = basis.leftCols(cols).transpose() * v;
        v -= basis.leftCols(cols) * c;
    }
}

struct LanczosRun {
    std::vector<double> ritz_values;
    Eigen::MatrixXd ritz_vectors;
    std::vector<double> residuals;
};

/// One Lanczos pass of `steps` iterations with full reorthogonalization,
/// restricted to the orthogonal complement of `locked`. Breakdown (an
/// invariant subspace) restarts from a fresh random vector, so the
/// tridiagonal matrix becomes block diagonal.
inline LanczosRun lanczos_pass(const SparseMatrix& a, const Eigen::MatrixXd& locked, Eigen::Index steps,
                               double scale, std::uint64_t seed, std::uint64_t& stream) {
    const Eigen::Index n = a.rows();
    const Eigen::Index nl = locked.cols();
    Eigen::MatrixXd q(n, steps);
    std::vector<double> alpha, beta;
    alpha.reserve(steps);
    beta.reserve(steps);

    auto fresh = [&](Eigen::Index filled) -> bool {
        for (int attempt = 0; attempt < 8; ++attempt) {
            Eigen::VectorXd v = start_vector(static_cast<std::size_t>(n), seed, stream++);
            orthogonalize(v, locked, nl);
            orthogonalize(v, q, filled);
            const double nv = v.norm();
            if (nv > 1e-8) {
                q.col(filled) = v / nv;
                return true;
            }
        }
        return false;
    };

    Eigen::Index m = 0;
    if (!fresh(0)) return {};
    for (Eigen::Index j = 0; j < steps; ++j) {
        Eigen::VectorXd w = a * q.col(j);
        const double aj = q.col(j).dot(w);
        alpha.push_back(aj);
        m = j + 1;
        w -= aj * q.col(j);
        if (j > 0) w -= beta.back() * q.col(j - 1);
        orthogonalize(w, q, j + 1);
        orthogonalize(w, locked, nl);
        if (j + 1 == steps) break;
        const double bj = w.norm();
        if (bj <= 1e-12 * scale) {
            beta.push_back(0.0);
            if (!fresh(j + 1)) break;
        } else {
            beta.push_back(bj);
            q.col(j + 1) = w / bj;
        }
    }

    Eigen::VectorXd diag(m), sub(std::max<Eigen::Index>(m - 1, 0));
    for (Eigen::Index i = 0; i < m; ++i) diag(i) = alpha[static_cast<std::size_t>(i)];
    for (Eigen::Index i = 0; i + 1 < m; ++i) sub(i) = beta[static_cast<std::size_t>(i)];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);

    LanczosRun run;
    run.ritz_values.assign(es.eigenvalues().data(), es.eigenvalues().data() + m);
    run.ritz_vectors = q.leftCols(m) * es.eigenvectors();
    // Re-normalize to absorb the tiny loss of orthonormality in q.
    for (Eigen::Index c = 0; c < m; ++c) run.ritz_vectors.col(c).normalize();
    return run;
}

}  // namespace detail

/// Lowest k eigenpairs via Lanczos with full reorthogonalization and
/// locking: converged Ritz pairs at the bottom are locked, later passes run
/// in the complement of the locked space so degenerate copies are found. A
/// final pass checks that nothing below the k-th locked value was missed.
inline EigenSolution lanczos_lowest(const LatticeOperator& op, std::size_t k, const SolverOptions& opts = {}) {
    const auto n = static_cast<Eigen::Index>(op.size());
    const double scale = op.spectral_scale();
    const double tol = opts.rel_tol * scale;
    Eigen::MatrixXd locked(n, 0);
    std::vector<double> vals;
    std::uint64_t stream = 0;
    Eigen::Index steps = std::min<Eigen::Index>(n, std::max<Eigen::Index>(2 * static_cast<Eigen::Index>(k) + 20, 40));
    double best = std::numeric_limits<double>::infinity();
    int restarts = 0;
    bool verified = false;

    auto lock = [&](const Eigen::VectorXd& v, double lambda) {
        locked.conservativeResize(n, locked.cols() + 1);
        locked.col(locked.cols() - 1) = v;
        vals.push_back(lambda);
    };

    while (!verified) {
        while (vals.size() < k) {
            if (++restarts > opts.max_restarts)
                throw EigensolverError("Lanczos iteration budget exhausted", best);
            const Eigen::Index avail = n - locked.cols();
            const Eigen::Index m = std::min(steps, avail);
            auto run = detail::lanczos_pass(op.matrix, locked, m, scale, opts.seed, stream);
            std::size_t newly = 0;
            for (std::size_t i = 0; i < run.ritz_values.size() && vals.size() < k; ++i) {
                const auto c = static_cast<Eigen::Index>(i);
                Eigen::VectorXd x = run.ritz_vectors.col(c);
                detail::orthogonalize(x, locked, locked.cols());
                x.normalize();
                const double theta = x.dot(op.matrix * x);
                const double r = (op.matrix * x - theta * x).norm();
                best = std::min(best, r);
                if (r > tol) break;
                lock(x, theta);
                ++newly;
            }
            if (newly == 0) {
                if (m == avail) throw EigensolverError("Lanczos failed to reach the residual tolerance", best);
                steps = std::min<Eigen::Index>(n, 2 * steps);
            }
        }
        // Verification: anything in the complement below the current k-th value?
        verified = true;
        if (locked.cols() < n) {
            const double kth = *std::max_element(vals.begin(), vals.end());
            const Eigen::Index m = std::min(steps, n - locked.cols());
            auto run = detail::lanczos_pass(op.matrix, locked, m, scale, opts.seed, stream);
            if (!run.ritz_values.empty() && run.ritz_values.front() < kth - tol) {
                Eigen::VectorXd x = run.ritz_vectors.col(0);
                const double theta = x.dot(op.matrix * x);
                const double r = (op.matrix * x - theta * x).norm();
                if (r <= tol && theta < kth - tol) {
                    // Drop the current largest and take the missed one.
                    const auto worst = static_cast<std::size_t>(
                        std::max_element(vals.begin(), vals.end()) - vals.begin());
                    vals.erase(vals.begin() + static_cast<std::ptrdiff_t>(worst));
                    Eigen::MatrixXd keep(n, locked.cols() - 1);
                    for (Eigen::Index c = 0, d = 0; c < locked.cols(); ++c)
                        if (static_cast<std::size_t>(c) != worst) keep.col(d++) = locked.col(c);
                    locked = keep;
                    lock(x, theta);
                    verified = false;
                } else if (r > tol) {
                    // Not yet converged; lengthen and redo the check.
                    steps = std::min<Eigen::Index>(n, 2 * steps);
                    verified = m >= n - locked.cols();
                    if (++restarts > opts.max_restarts)
                        throw EigensolverError("Lanczos verification did not converge", r);
                }
            }
        }
    }

    std::vector<std::size_t> order(vals.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    EigenSolution sol;
    sol.vectors.resize(n, static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < order.size(); ++i) {
        sol.values.push_back(vals[order[i]]);
        sol.vectors.col(static_cast<Eigen::Index>(i)) = locked.col(static_cast<Eigen::Index>(order[i]));
    }
    sol.residuals = detail::residual_norms(op.matrix, sol.values, sol.vectors);
    return sol;
}

/// The k smallest eigenvalues (and eigenvectors when requested).
inline EigenSolution lowest_eigenvalues(const LatticeOperator& op, std::size_t k, const SolverOptions& opts = {},
                                        bool with_vectors = true) {
    if (k < 1 || k > op.size())
        throw ConfigError("requested " + std::to_string(k) + " eigenvalues of an operator of size " +
                          std::to_string(op.size()));
    if (opts.use_dense(op.size())) return detail::dense_lowest(op, k, with_vectors);
    auto sol = lanczos_lowest(op, k, opts);
    if (!with_vectors) sol.vectors.resize(0, 0);
    return sol;
}

inline double ground_state_energy(const LatticeOperator& op, const SolverOptions& opts = {}) {
    return lowest_eigenvalues(op, 1, opts, false).values.front();
}

inline std::vector<double> all_eigenvalues(const LatticeOperator& op, const SolverOptions& opts = {}) {
    return lowest_eigenvalues(op, op.size(), opts, false).values;
}

// ---------------------------------------------------------------------------
// Spectral windows

/// Closed energy window [lo, hi]. Eigenvalues within `tau` of an endpoint
/// are counted as inside and flagged as ambiguous.
struct SpectralWindow {
    double lo = 0.0;
    double hi = 0.0;
    double tau = 0.0;

    void validate() const {
        if (!(lo <= hi)) throw ConfigError("spectral window needs lo <= hi");
        if (!(tau >= 0)) throw ConfigError("window tolerance must be >= 0");
    }
    bool contains(double e) const { return e >= lo - tau && e <= hi + tau; }
    bool ambiguous(double e) const { return std::abs(e - lo) <= tau || std::abs(e - hi) <= tau; }
};

inline constexpr double kWindowRelTol = 1e-9;

/// Window with the default membership tolerance 1e-9 * (spectral diameter of op).
inline SpectralWindow make_window(double lo, double hi, const LatticeOperator& op) {
    const auto g = op.gershgorin();
    SpectralWindow w{lo, hi, kWindowRelTol * std::max(1.0, g.hi - g.lo)};
    w.validate();
    return w;
}

struct WindowCount {
    std::size_t count = 0;
    std::size_t ambiguous = 0;
};

inline WindowCount count_in_window(std::span<const double> eigenvalues, const SpectralWindow& w) {
    WindowCount c;
    for (double e : eigenvalues)
        if (w.contains(e)) {
            ++c.count;
            if (w.ambiguous(e)) ++c.ambiguous;
        }
    return c;
}

struct WindowSolution {
    EigenSolution pairs;
    std::size_t ambiguous = 0;
    std::size_t rank() const { return pairs.count(); }
};

namespace detail {

/// Smallest eigen-solution whose top value exceeds `hi` (or the full spectrum).
inline EigenSolution lowest_covering(const LatticeOperator& op, double hi, const SolverOptions& opts,
                                     bool with_vectors) {
    const std::size_t n = op.size();
    if (opts.use_dense(n)) return dense_lowest(op, n, with_vectors);
    std::size_t k = std::min<std::size_t>(n, 16);
    for (;;) {
        auto sol = lowest_eigenvalues(op, k, opts, with_vectors);
        if (k == n || sol.values.back() > hi) return sol;
        k = std::min(n, 2 * k);
    }
}

}  // namespace detail

/// Orthonormal eigenbasis of ran P_I(op) for the closed window I.
inline WindowSolution eigenpairs_in_window(const LatticeOperator& op, const SpectralWindow& w,
                                           const SolverOptions& opts = {}) {
    w.validate();
    const auto all = detail::lowest_covering(op, w.hi + w.tau, opts, true);
    WindowSolution out;
    std::vector<Eigen::Index> cols;
    for (std::size_t i = 0; i < all.values.size(); ++i) {
        if (!w.contains(all.values[i])) continue;
        cols.push_back(static_cast<Eigen::Index>(i));
        out.pairs.values.push_back(all.values[i]);
        out.pairs.residuals.push_back(all.residuals[i]);
        if (w.ambiguous(all.values[i])) ++out.ambiguous;
    }
    out.pairs.vectors.resize(static_cast<Eigen::Index>(op.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c)
        out.pairs.vectors.col(static_cast<Eigen::Index>(c)) = all.vectors.col(cols[c]);
    return out;
}

/// Eigenvalues of op lying in the window (no vectors).
inline std::vector<double> eigenvalues_in_window(const LatticeOperator& op, const SpectralWindow& w,
                                                 const SolverOptions& opts = {}) {
    const auto all = detail::lowest_covering(op, w.hi + w.tau, opts, false);
    std::vector<double> out;
    for (double e : all.values)
        if (w.contains(e)) out.push_back(e);
    return out;
}

/// tr P_I(op): the number of eigenvalues in the window.
inline WindowCount trace_projector(const LatticeOperator& op, const SpectralWindow& w,
                                   const SolverOptions& opts = {}) {
    w.validate();
    const auto vals = eigenvalues_in_window(op, w, opts);
    return count_in_window(vals, w);
}

// ---------------------------------------------------------------------------
// Ground-state curve

struct GroundStateCurve {
    std::vector<double> t_grid;
    std::vector<double> lambda;
    double lambda0 = 0.0;
};

/// `count` logarithmically spaced couplings in [t_max/100, t_max]; the last
/// point is exactly t_max.
inline std::vector<double> default_t_grid(double t_max, std::size_t count = 32) {
    if (!(t_max > 0)) throw ConfigError("t grid needs a positive maximum");
    std::vector<double> t(count);
    const double lo = std::log(t_max / 100.0), hi = std::log(t_max);
    for (std::size_t i = 0; i < count; ++i)
        t[i] = count == 1 ? t_max : std::exp(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1));
    t.back() = t_max;
    return t;
}

inline void validate_perturbation(const GridFunction& w) {
    for (double x : w.values)
        if (!(x >= 0) || !std::isfinite(x)) throw ConfigError("perturbation W must be bounded and nonnegative");
}

/// lambda(t) = smallest eigenvalue of h0 + t diag(w) on each grid point.
inline GroundStateCurve ground_state_energy_curve(const LatticeOperator& h0, const GridFunction& w,
                                                  std::span<const double> t_grid, const SolverOptions& opts = {}) {
    validate_perturbation(w);
    for (std::size_t i = 0; i < t_grid.size(); ++i) {
        if (!(t_grid[i] > 0)) throw ConfigError("t grid must be positive");
        if (i > 0 && !(t_grid[i] > t_grid[i - 1])) throw ConfigError("t grid must be strictly increasing");
    }
    GroundStateCurve c;
    c.t_grid.assign(t_grid.begin(), t_grid.end());
    c.lambda0 = ground_state_energy(h0, opts);
    c.lambda.reserve(t_grid.size());
    for (double t : t_grid) c.lambda.push_back(ground_state_energy(add_potential(h0, w, t), opts));
    return c;
}

/// Violations of the curve invariants (monotone, concave, bounded by
/// lambda0 + t max W), each up to `tol`. Empty when the curve is sound.
inline std::vector<std::string> curve_violations(const GroundStateCurve& c, double max_w, double tol) {
    std::vector<std::string> v;
    std::vector<double> t{0.0}, l{c.lambda0};
    t.insert(t.end(), c.t_grid.begin(), c.t_grid.end());
    l.insert(l.end(), c.lambda.begin(), c.lambda.end());
    for (std::size_t i = 1; i < t.size(); ++i) {
        if (l[i] < l[i - 1] - tol) v.push_back("decrease at t=" + std::to_string(t[i]));
        if (l[i] > c.lambda0 + t[i] * max_w + tol) v.push_back("upper bound exceeded at t=" + std::to_string(t[i]));
    }
    for (std::size_t i = 1; i + 1 < t.size(); ++i) {
        const double s1 = (l[i] - l[i - 1]) / (t[i] - t[i - 1]);
        const double s2 = (l[i + 1] - l[i]) / (t[i + 1] - t[i]);
        if (s2 > s1 + tol / std::min(t[i] - t[i - 1], t[i + 1] - t[i]))
            v.push_back("concavity violated at t=" + std::to_string(t[i]));
    }
    return v;
}

}  // namespace fblab
