#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <vector>

namespace fblab {

/// Invalid input to an operation: bad configuration, violated precondition.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Numerical failure (eigensolver budget exhausted, singular solve, ...).
class ComputeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Site = std::array<int, 3>;

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    bool contains(double x) const { return lo <= x && x <= hi; }
    friend bool operator==(const Interval&, const Interval&) = default;
};

/// The finite box [0, side)^dim of lattice points. `spacing` is the lattice
/// constant h; it only enters the Laplacian stencil.
struct Box {
    int dim = 1;
    int side = 1;
    double spacing = 1.0;

    std::size_t volume() const {
        std::size_t n = 1;
        for (int i = 0; i < dim; ++i) n *= static_cast<std::size_t>(side);
        return n;
    }

    bool contains(const Site& x) const {
        for (int i = 0; i < dim; ++i)
            if (x[i] < 0 || x[i] >= side) return false;
        return true;
    }

    // Lexicographic, first coordinate slowest.
    std::size_t index(const Site& x) const {
        std::size_t idx = 0;
        for (int i = 0; i < dim; ++i) idx = idx * side + static_cast<std::size_t>(x[i]);
        return idx;
    }

    Site site(std::size_t idx) const {
        Site x{0, 0, 0};
        for (int i = dim - 1; i >= 0; --i) {
            x[i] = static_cast<int>(idx % side);
            idx /= side;
        }
        return x;
    }

    void validate() const {
        if (dim < 1 || dim > 3) throw ConfigError("box dimension must be 1, 2 or 3, got " + std::to_string(dim));
        if (side < 1) throw ConfigError("box side must be positive, got " + std::to_string(side));
        if (!(spacing > 0) || !std::isfinite(spacing)) throw ConfigError("lattice spacing must be positive");
    }

    friend bool operator==(const Box&, const Box&) = default;
};

/// l-infinity distance between two sites.
inline int linf_distance(const Site& a, const Site& b, int dim) {
    int r = 0;
    for (int i = 0; i < dim; ++i) r = std::max(r, std::abs(a[i] - b[i]));
    return r;
}

inline int l1_distance(const Site& a, const Site& b, int dim) {
    int r = 0;
    for (int i = 0; i < dim; ++i) r += std::abs(a[i] - b[i]);
    return r;
}

/// l-infinity distance of a site from the geometric center of the box
/// (a half-integer point when the side is even).
inline double linf_from_center(const Box& box, const Site& x) {
    const double c = 0.5 * (box.side - 1);
    double r = 0.0;
    for (int i = 0; i < box.dim; ++i) r = std::max(r, std::abs(x[i] - c));
    return r;
}

/// A real-valued function on the sites of a box.
struct GridFunction {
    Box box;
    std::vector<double> values;

    GridFunction() = default;
    explicit GridFunction(const Box& b, double fill = 0.0) : box(b), values(b.volume(), fill) {}
    GridFunction(const Box& b, std::vector<double> v) : box(b), values(std::move(v)) {
        if (values.size() != box.volume())
            throw ConfigError("grid function has " + std::to_string(values.size()) + " values for a box of " +
                              std::to_string(box.volume()) + " sites");
    }

    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }
    std::size_t size() const { return values.size(); }

    double min() const { return values.empty() ? 0.0 : *std::min_element(values.begin(), values.end()); }
    double max() const { return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end()); }

    GridFunction& operator+=(const GridFunction& o) {
        for (std::size_t i = 0; i < values.size(); ++i) values[i] += o.values[i];
        return *this;
    }

    GridFunction scaled(double s) const {
        GridFunction g = *this;
        for (auto& v : g.values) v *= s;
        return g;
    }
};

inline GridFunction operator+(GridFunction a, const GridFunction& b) { return a += b; }

}  // namespace fblab
